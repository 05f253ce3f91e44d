#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vsrhe/tensor.hpp"

namespace vsrhe {

enum class Subsampling { C420, C444 };

const char* subsampling_name(Subsampling s);

/// Planar 8-bit YCbCr picture. Cb/Cr are half size in both directions for
/// C420.
struct Frame {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  Subsampling subsampling = Subsampling::C420;
  std::array<std::vector<std::uint8_t>, 3> planes;

  Frame() = default;
  Frame(int w, int h, Subsampling s, std::uint8_t fill = 0);

  int plane_width(int plane) const;
  int plane_height(int plane) const;
  std::size_t plane_size(int plane) const {
    return static_cast<std::size_t>(plane_width(plane)) * static_cast<std::size_t>(plane_height(plane));
  }
  std::size_t byte_size() const { return plane_size(0) + plane_size(1) + plane_size(2); }

  std::uint8_t& sample(int plane, int x, int y) {
    return planes[plane][static_cast<std::size_t>(y) * plane_width(plane) + x];
  }
  std::uint8_t sample(int plane, int x, int y) const {
    return planes[plane][static_cast<std::size_t>(y) * plane_width(plane) + x];
  }

  // Throws if the geometry or plane lengths are inconsistent.
  void validate() const;

  friend bool operator==(const Frame&, const Frame&) = default;
};

struct Rational {
  std::int64_t num = 0;
  std::int64_t den = 1;
  friend bool operator==(const Rational&, const Rational&) = default;
};

struct VideoSequence {
  std::vector<Frame> frames;
  std::optional<Rational> frame_rate;
  // Container header tokens other than W/H/F, keyed by their tag letter, in
  // the order they appeared ("I" -> "p", "C" -> "420jpeg", "X" -> "...").
  std::vector<std::pair<std::string, std::string>> metadata;

  friend bool operator==(const VideoSequence&, const VideoSequence&) = default;
};

// Throws unless every frame shares the first frame's geometry.
void check_uniform_geometry(const VideoSequence& seq);

VideoSequence parse_y4m(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> write_y4m(const VideoSequence& seq);

VideoSequence read_raw_yuv(std::span<const std::uint8_t> bytes, int width, int height, Subsampling subsampling,
                           std::optional<std::size_t> frame_count = std::nullopt);
std::vector<std::uint8_t> write_raw_yuv(const VideoSequence& seq);

// Replicates each chroma sample over its co-sited 2x2 luma block.
Frame chroma_upsample_nn(const Frame& f);
// Mean of each 2x2 chroma block, rounded half away from zero.
Frame chroma_downsample_mean(const Frame& f);

// Code value / 255 per plane; each tensor is [plane_height, plane_width].
std::array<Tensor, 3> to_normalized(const Frame& f);
// Clamp to [0,1], scale by 255, round half away from zero.
Frame from_normalized(const std::array<Tensor, 3>& planes, Subsampling subsampling);

// C444 frame <-> [3,H,W] normalized tensor.
Tensor frame_to_tensor(const Frame& f);
Frame tensor_to_frame(const Tensor& t);

std::uint8_t quantize_unit(float v);

// Extension-driven loading: ".y4m" is parsed as Y4M, anything else as raw
// planar YUV which needs explicit geometry.
struct RawGeometry {
  int width = 0;
  int height = 0;
  Subsampling subsampling = Subsampling::C420;
};
VideoSequence load_video(const std::filesystem::path& path, std::optional<RawGeometry> raw = std::nullopt);
void save_video(const std::filesystem::path& path, const VideoSequence& seq);
bool is_y4m_path(const std::filesystem::path& path);

}  // namespace vsrhe
