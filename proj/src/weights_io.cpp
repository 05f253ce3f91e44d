// Weight file layout (all integers little-endian):
//
//   0   char[8]  magic "VSRHEW01"
//   8   u32      header length L
//   12  L bytes  header record:
//                  u32 in_channels, out_channels, channel_dim, blocks, heads,
//                      input_size, scale
//                  f64 mlp_ratio
//                  u32 window count, then u32 per window size
//                  u32 note length, note bytes (UTF-8)
//                  u32 tensor count, then per tensor:
//                    u16 name length, name bytes, u8 dtype (0 = f32),
//                    u8 rank, u32 dims[rank], u64 payload offset
//   12+L 64 bytes checksum field: u32 CRC-32 of bytes [0, 12+L), zero padded
//   76+L payload: f32 tensors back to back in directory order
#include <bit>
#include <cmath>
#include <cstring>
#include <zlib.h>

#include "vsrhe/error.hpp"
#include "vsrhe/network.hpp"

namespace vsrhe {
namespace {

constexpr char kMagic[8] = {'V', 'S', 'R', 'H', 'E', 'W', '0', '1'};
constexpr std::size_t kChecksumField = 64;
constexpr std::uint8_t kDtypeF32 = 0;

constexpr const char* kNote =
    "hierarchical windowed-attention SR network: pre-norm window MHSA with per-head relative position "
    "bias + GELU MLP per layer, per-layer window sizes, no shifted windows, 3x3 fusion conv and residual "
    "per block, long residual over the body, conv + pixel-shuffle x2 tail stages";

class Writer {
 public:
  void u8(std::uint8_t v) { buf.push_back(v); }
  void u16(std::uint16_t v) {
    for (int i = 0; i < 2; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void bytes(std::string_view s) { buf.insert(buf.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> buf;
};

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::size_t pos, std::size_t end) : bytes_(bytes), pos_(pos), end_(end) {}
  std::uint64_t uint(int width) {
    need(static_cast<std::size_t>(width));
    std::uint64_t v = 0;
    for (int i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += static_cast<std::size_t>(width);
    return v;
  }
  std::uint32_t u32() { return static_cast<std::uint32_t>(uint(4)); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (end_ - pos_ < n) throw Error("weight file: header is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_, end_;
};

struct ParsedHeader {
  NetworkConfig config;
  std::string note;
  std::vector<TensorDirectoryEntry> directory;
  std::size_t payload_start = 0;
};

ParsedHeader parse_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw Error("weight file: truncated (" + std::to_string(bytes.size()) + " bytes)");
  if (std::memcmp(bytes.data(), kMagic, 6) != 0) throw Error("weight file: bad magic, not a VSRHEW file");
  if (std::memcmp(bytes.data() + 6, kMagic + 6, 2) != 0)
    throw Error("weight file: unsupported version '" + std::string(reinterpret_cast<const char*>(bytes.data()) + 6, 2) +
                "' (expected 01)");
  const std::uint64_t header_len = Reader(bytes, 8, 12).u32();
  if (bytes.size() < 12 + header_len + kChecksumField) throw Error("weight file: truncated header");
  const std::size_t header_end = 12 + static_cast<std::size_t>(header_len);
  const auto stored_crc = static_cast<std::uint32_t>(Reader(bytes, header_end, header_end + 4).u32());
  const auto crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(header_end)));
  if (crc != stored_crc) throw Error("weight file: header checksum mismatch");

  ParsedHeader h;
  Reader r(bytes, 12, header_end);
  NetworkConfig& cfg = h.config;
  cfg.in_channels = r.u32();
  cfg.out_channels = r.u32();
  cfg.channel_dim = r.u32();
  cfg.blocks = r.u32();
  cfg.heads = r.u32();
  cfg.input_size = r.u32();
  cfg.scale = r.u32();
  cfg.mlp_ratio = std::bit_cast<double>(r.uint(8));
  const std::uint32_t n_windows = r.u32();
  if (n_windows > 1024) throw Error("weight file: implausible window count");
  cfg.window_sizes.resize(n_windows);
  for (auto& w : cfg.window_sizes) w = r.u32();
  h.note = r.str(r.u32());
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    TensorDirectoryEntry e;
    e.name = r.str(static_cast<std::size_t>(r.uint(2)));
    const auto dtype = static_cast<std::uint8_t>(r.uint(1));
    if (dtype != kDtypeF32) throw Error("weight file: tensor '" + e.name + "' has unsupported dtype");
    const auto rank = static_cast<std::uint8_t>(r.uint(1));
    for (int d = 0; d < rank; ++d) e.shape.push_back(r.u32());
    e.offset = r.uint(8);
    h.directory.push_back(std::move(e));
  }
  if (r.pos() != header_end) throw Error("weight file: header length does not match its contents");
  cfg.validate();
  h.payload_start = header_end + kChecksumField;
  return h;
}

}  // namespace

std::vector<std::uint8_t> save_weights(const NetworkWeights& w, const NetworkConfig& cfg) {
  validate_weights(w, cfg);
  const auto specs = parameter_specs(cfg);
  Writer header;
  header.bytes(std::string_view(kMagic, 8));
  header.u32(0);  // patched below
  for (std::size_t v : {cfg.in_channels, cfg.out_channels, cfg.channel_dim, cfg.blocks, cfg.heads, cfg.input_size,
                        cfg.scale})
    header.u32(static_cast<std::uint32_t>(v));
  header.f64(cfg.mlp_ratio);
  header.u32(static_cast<std::uint32_t>(cfg.window_sizes.size()));
  for (auto ws : cfg.window_sizes) header.u32(static_cast<std::uint32_t>(ws));
  const std::string_view note(kNote);
  header.u32(static_cast<std::uint32_t>(note.size()));
  header.bytes(note);
  header.u32(static_cast<std::uint32_t>(specs.size()));
  std::uint64_t offset = 0;
  for (const auto& spec : specs) {
    header.u16(static_cast<std::uint16_t>(spec.name.size()));
    header.bytes(spec.name);
    header.u8(kDtypeF32);
    header.u8(static_cast<std::uint8_t>(spec.shape.size()));
    for (auto d : spec.shape) header.u32(static_cast<std::uint32_t>(d));
    header.u64(offset);
    offset += shape_volume(spec.shape) * sizeof(float);
  }
  std::vector<std::uint8_t>& out = header.buf;
  const auto header_len = static_cast<std::uint32_t>(out.size() - 12);
  for (int i = 0; i < 4; ++i) out[8 + i] = static_cast<std::uint8_t>(header_len >> (8 * i));
  const auto crc = static_cast<std::uint32_t>(crc32(0L, out.data(), static_cast<uInt>(out.size())));
  header.u32(crc);
  out.resize(out.size() + kChecksumField - 4, 0);
  out.reserve(out.size() + offset);
  for (const auto& spec : specs)
    for (float v : w.at(spec.name).values()) header.u32(std::bit_cast<std::uint32_t>(v));
  return out;
}

std::vector<TensorDirectoryEntry> read_tensor_directory(std::span<const std::uint8_t> bytes) {
  return parse_header(bytes).directory;
}

WeightFile read_weight_file(std::span<const std::uint8_t> bytes) {
  ParsedHeader h = parse_header(bytes);
  std::uint64_t expected_offset = 0;
  for (const auto& e : h.directory) {
    if (e.offset != expected_offset) throw Error("weight file: tensor '" + e.name + "' has a non-contiguous offset");
    expected_offset += shape_volume(e.shape) * sizeof(float);
  }
  const std::uint64_t available = bytes.size() - h.payload_start;
  if (available < expected_offset)
    throw Error("weight file: truncated payload (" + std::to_string(available) + " of " +
                std::to_string(expected_offset) + " bytes)");
  if (available > expected_offset) throw Error("weight file: trailing bytes after payload");

  WeightFile out;
  out.config = h.config;
  out.note = h.note;
  for (const auto& e : h.directory) {
    Tensor t(e.shape);
    const std::uint8_t* src = bytes.data() + h.payload_start + e.offset;
    for (std::size_t i = 0; i < t.size(); ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(src[4 * i + b]) << (8 * b);
      t[i] = std::bit_cast<float>(bits);
    }
    if (!out.weights.emplace(e.name, std::move(t)).second)
      throw Error("weight file: duplicate tensor '" + e.name + "'");
  }
  validate_weights(out.weights, out.config);
  return out;
}

NetworkWeights load_weights(std::span<const std::uint8_t> bytes, const NetworkConfig& cfg) {
  WeightFile file = read_weight_file(bytes);
  validate_weights(file.weights, cfg);
  return std::move(file.weights);
}

}  // namespace vsrhe
