#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "vsrhe/frame.hpp"

namespace vsrhe {

inline constexpr int kLrPatch = 64;
inline constexpr int kHrPatch = 256;
inline constexpr int kPatchScale = 4;

/// Element of the symmetry group of the square: rotate `rotation` quarter
/// turns counter-clockwise, then mirror left-right if `hflip`, then top-bottom
/// if `vflip`.
struct Augmentation {
  int rotation = 0;
  bool hflip = false;
  bool vflip = false;

  friend bool operator==(const Augmentation&, const Augmentation&) = default;
};

// Equivalent form with vflip = false and rotation in [0, 4).
Augmentation canonical(const Augmentation& a);
// `second` applied after `first`, in canonical form.
Augmentation compose(const Augmentation& first, const Augmentation& second);
Augmentation inverse(const Augmentation& a);

// Applies `a` to a square C444 frame.
Frame transform_patch(const Frame& patch, const Augmentation& a);

struct PatchPair {
  Frame lr;  // 64x64 C444, chroma replicated from the 4:2:0 source
  Frame hr;  // 256x256 C444
  std::string source_id;
  std::size_t frame_index = 0;
  int lr_x = 0;  // crop origin in LR pixels; the HR origin is 4x this
  int lr_y = 0;
  int qp = 0;
  Augmentation augmentation;  // accumulated, canonical form

  friend bool operator==(const PatchPair&, const PatchPair&) = default;
};

/// Uniformly samples `count` (frame, origin) positions with Xoshiro256(seed)
/// and crops aligned LR/HR patches. With `random_augment` each pair also gets
/// a uniformly drawn group element.
std::vector<PatchPair> extract_patch_pairs(const VideoSequence& lr, const VideoSequence& hr, std::size_t count,
                                           std::uint64_t seed, int qp, const std::string& source_id = "",
                                           bool random_augment = false);

// Streaming form of extract_patch_pairs; pairs arrive in sampling order.
void extract_patch_pairs_to(const VideoSequence& lr, const VideoSequence& hr, std::size_t count, std::uint64_t seed,
                            int qp, const std::string& source_id, bool random_augment,
                            const std::function<void(PatchPair&&)>& sink);

// Transforms both members and records the composition in p.augmentation.
PatchPair augment(const PatchPair& p, int rotation, bool hflip, bool vflip);
PatchPair augment(const PatchPair& p, const Augmentation& a);

// 1e-4 halved at 50k, 100k, 200k and 300k iterations.
double lr_schedule(std::uint64_t iteration);

inline const std::vector<int> kDefaultQpList{17, 22, 27, 32, 34, 37};

/// Patch corpus: JSON-lines manifest plus a sidecar .pak holding the planes.
///
/// .pak layout: magic "VSRHEPK1", then one 208896-byte record per pair: LR
/// Y, Cb, Cr (64*64 bytes each) followed by HR Y, Cb, Cr (256*256 bytes
/// each), row-major. Manifest records address their record by byte offset.
struct Manifest {
  std::uint64_t seed = 0;
  std::uint64_t requested = 0;
  std::vector<int> qp_list;
  std::vector<PatchPair> pairs;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

inline constexpr std::size_t kPakRecordBytes =
    3 * static_cast<std::size_t>(kLrPatch) * kLrPatch + 3 * static_cast<std::size_t>(kHrPatch) * kHrPatch;

struct EncodedManifest {
  std::string jsonl;
  std::vector<std::uint8_t> pak;
};
EncodedManifest encode_manifest(const Manifest& m, const std::string& pak_name);
Manifest decode_manifest(const std::string& jsonl, std::span<const std::uint8_t> pak);

// The .pak sits next to the manifest with the same stem.
std::filesystem::path pak_path_for(const std::filesystem::path& manifest);
void write_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest read_manifest(const std::filesystem::path& path);

/// Streams pairs to temporary files; commit() checks the count and renames
/// both files into place. Destroying an uncommitted writer removes the
/// temporaries.
class ManifestWriter {
 public:
  ManifestWriter(const std::filesystem::path& path, std::uint64_t seed, std::uint64_t count,
                 const std::vector<int>& qp_list);
  ~ManifestWriter();
  ManifestWriter(const ManifestWriter&) = delete;
  ManifestWriter& operator=(const ManifestWriter&) = delete;

  void add(const PatchPair& p);
  void commit();

 private:
  struct Impl;
  Impl* impl_;
};

struct PrepareOptions {
  std::filesystem::path lr_dir;
  std::filesystem::path hr_dir;
  std::vector<int> qp_list = kDefaultQpList;
  std::uint64_t count = 100000;
  std::uint64_t seed = 0;
  bool augment = true;
  std::filesystem::path out;
};

struct PrepareSummary {
  std::size_t sources = 0;
  std::uint64_t pairs = 0;
};

/// Pairs every `<hr_dir>/<name>.y4m` with `<lr_dir>/<name>_qp<QP>.y4m` for each
/// listed QP and spreads `count` patches evenly over the pairs found.
PrepareSummary prepare_dataset(const PrepareOptions& opt);

}  // namespace vsrhe
