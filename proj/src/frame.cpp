#include "vsrhe/frame.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>

#include "vsrhe/error.hpp"
#include "vsrhe/fileio.hpp"

namespace vsrhe {

const char* subsampling_name(Subsampling s) { return s == Subsampling::C420 ? "420" : "444"; }

Frame::Frame(int w, int h, Subsampling s, std::uint8_t fill) : width(w), height(h), subsampling(s) {
  if (w <= 0 || h <= 0) throw Error("frame dimensions must be positive, got " + std::to_string(w) + "x" + std::to_string(h));
  if (s == Subsampling::C420 && (w % 2 != 0 || h % 2 != 0))
    throw Error("4:2:0 frames need even dimensions, got " + std::to_string(w) + "x" + std::to_string(h));
  for (int p = 0; p < 3; ++p) planes[p].assign(plane_size(p), fill);
}

int Frame::plane_width(int plane) const {
  return (plane > 0 && subsampling == Subsampling::C420) ? width / 2 : width;
}

int Frame::plane_height(int plane) const {
  return (plane > 0 && subsampling == Subsampling::C420) ? height / 2 : height;
}

void Frame::validate() const {
  if (width <= 0 || height <= 0)
    throw Error("frame dimensions must be positive, got " + std::to_string(width) + "x" + std::to_string(height));
  if (bit_depth != 8) throw Error("only 8-bit frames are supported, got " + std::to_string(bit_depth) + "-bit");
  if (subsampling == Subsampling::C420 && (width % 2 != 0 || height % 2 != 0))
    throw Error("4:2:0 frames need even dimensions, got " + std::to_string(width) + "x" + std::to_string(height));
  for (int p = 0; p < 3; ++p)
    if (planes[p].size() != plane_size(p))
      throw Error("plane " + std::to_string(p) + " holds " + std::to_string(planes[p].size()) + " samples, expected " +
                  std::to_string(plane_size(p)));
}

void check_uniform_geometry(const VideoSequence& seq) {
  if (seq.frames.empty()) return;
  const Frame& first = seq.frames.front();
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    f.validate();
    if (f.width != first.width || f.height != first.height || f.subsampling != first.subsampling ||
        f.bit_depth != first.bit_depth)
      throw Error("frame " + std::to_string(i) + " geometry differs from frame 0");
  }
}

namespace {

constexpr std::string_view kY4mMagic = "YUV4MPEG2";
constexpr std::string_view kFrameMarker = "FRAME";

int parse_positive(std::string_view text, const char* what) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw Error(std::string("Y4M: malformed ") + what + " '" + std::string(text) + "'");
  if (v <= 0) throw Error(std::string("Y4M: ") + what + " must be positive, got " + std::string(text));
  return v;
}

std::optional<Subsampling> colorspace_from_tag(std::string_view tag) {
  if (tag == "420" || tag == "420jpeg" || tag == "420mpeg2" || tag == "420paldv") return Subsampling::C420;
  if (tag == "444") return Subsampling::C444;
  return std::nullopt;
}

void read_frame_payload(std::span<const std::uint8_t> bytes, std::size_t& pos, Frame& f, std::size_t index) {
  const std::size_t need = f.byte_size();
  if (bytes.size() - pos < need)
    throw Error("truncated payload in frame " + std::to_string(index) + ": need " + std::to_string(need) +
                " bytes, have " + std::to_string(bytes.size() - pos));
  for (int p = 0; p < 3; ++p) {
    std::memcpy(f.planes[p].data(), bytes.data() + pos, f.plane_size(p));
    pos += f.plane_size(p);
  }
}

void append_bytes(std::vector<std::uint8_t>& out, std::string_view s) { out.insert(out.end(), s.begin(), s.end()); }

}  // namespace

VideoSequence parse_y4m(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kY4mMagic.size() + 1 ||
      std::memcmp(bytes.data(), kY4mMagic.data(), kY4mMagic.size()) != 0 ||
      (bytes[kY4mMagic.size()] != ' ' && bytes[kY4mMagic.size()] != '\n'))
    throw Error("not Y4M: missing YUV4MPEG2 signature");
  const auto* begin = reinterpret_cast<const char*>(bytes.data());
  const auto* nl = static_cast<const char*>(std::memchr(begin, '\n', bytes.size()));
  if (!nl) throw Error("Y4M: header line is not terminated");
  std::string_view header(begin + kY4mMagic.size(), static_cast<std::size_t>(nl - begin) - kY4mMagic.size());

  VideoSequence seq;
  int width = 0, height = 0;
  Subsampling subsampling = Subsampling::C420;
  while (!header.empty()) {
    if (header.front() == ' ') {
      header.remove_prefix(1);
      continue;
    }
    const std::size_t end = std::min(header.find(' '), header.size());
    const std::string_view token = header.substr(0, end);
    header.remove_prefix(end);
    const char tag = token.front();
    const std::string_view value = token.substr(1);
    switch (tag) {
      case 'W':
        width = parse_positive(value, "width");
        break;
      case 'H':
        height = parse_positive(value, "height");
        break;
      case 'F': {
        const auto colon = value.find(':');
        if (colon == std::string_view::npos) throw Error("Y4M: malformed frame rate '" + std::string(value) + "'");
        seq.frame_rate = Rational{parse_positive(value.substr(0, colon), "frame rate numerator"),
                                  parse_positive(value.substr(colon + 1), "frame rate denominator")};
        break;
      }
      case 'C': {
        auto cs = colorspace_from_tag(value);
        if (!cs)
          throw Error("Y4M: unsupported colorspace 'C" + std::string(value) +
                      "' (only 8-bit 4:2:0 and 4:4:4 are accepted)");
        subsampling = *cs;
        seq.metadata.emplace_back("C", std::string(value));
        break;
      }
      default:
        seq.metadata.emplace_back(std::string(1, tag), std::string(value));
    }
  }
  if (width == 0 || height == 0) throw Error("Y4M: header lacks width or height");
  if (subsampling == Subsampling::C420 && (width % 2 != 0 || height % 2 != 0))
    throw Error("Y4M: geometry error, 4:2:0 requires even dimensions, got " + std::to_string(width) + "x" +
                std::to_string(height));

  std::size_t pos = static_cast<std::size_t>(nl - begin) + 1;
  while (pos < bytes.size()) {
    const std::size_t index = seq.frames.size();
    if (bytes.size() - pos < kFrameMarker.size() ||
        std::memcmp(bytes.data() + pos, kFrameMarker.data(), kFrameMarker.size()) != 0)
      throw Error("Y4M: expected FRAME marker at frame " + std::to_string(index));
    const auto* fnl = static_cast<const char*>(std::memchr(begin + pos, '\n', bytes.size() - pos));
    if (!fnl) throw Error("truncated payload in frame " + std::to_string(index) + ": unterminated FRAME line");
    pos = static_cast<std::size_t>(fnl - begin) + 1;
    Frame f(width, height, subsampling);
    read_frame_payload(bytes, pos, f, index);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

std::vector<std::uint8_t> write_y4m(const VideoSequence& seq) {
  check_uniform_geometry(seq);
  if (seq.frames.empty()) throw Error("cannot write a Y4M stream without frames (geometry unknown)");
  const Frame& first = seq.frames.front();
  std::string header(kY4mMagic);
  header += " W" + std::to_string(first.width) + " H" + std::to_string(first.height);
  if (seq.frame_rate) header += " F" + std::to_string(seq.frame_rate->num) + ":" + std::to_string(seq.frame_rate->den);
  auto find_tag = [&](const char* tag) -> const std::string* {
    for (const auto& [k, v] : seq.metadata)
      if (k == tag) return &v;
    return nullptr;
  };
  for (const char* tag : {"I", "A"})
    if (const auto* v = find_tag(tag)) header += std::string(" ") + tag + *v;
  const std::string* ctag = find_tag("C");
  if (ctag && colorspace_from_tag(*ctag) == first.subsampling)
    header += " C" + *ctag;
  else
    header += std::string(" C") + subsampling_name(first.subsampling);
  for (const auto& [k, v] : seq.metadata)
    if (k != "I" && k != "A" && k != "C") header += " " + k + v;
  header += "\n";

  std::vector<std::uint8_t> out;
  out.reserve(header.size() + seq.frames.size() * (first.byte_size() + 6));
  append_bytes(out, header);
  for (const Frame& f : seq.frames) {
    append_bytes(out, "FRAME\n");
    for (const auto& plane : f.planes) out.insert(out.end(), plane.begin(), plane.end());
  }
  return out;
}

VideoSequence read_raw_yuv(std::span<const std::uint8_t> bytes, int width, int height, Subsampling subsampling,
                           std::optional<std::size_t> frame_count) {
  const Frame proto(width, height, subsampling);
  const std::size_t frame_size = proto.byte_size();
  std::size_t count = 0;
  if (frame_count) {
    count = *frame_count;
    if (count * frame_size > bytes.size())
      throw Error("raw YUV holds " + std::to_string(bytes.size() / frame_size) + " frames, " +
                  std::to_string(count) + " requested");
  } else {
    if (bytes.size() % frame_size != 0)
      throw Error("raw YUV length " + std::to_string(bytes.size()) + " is not a multiple of the frame size " +
                  std::to_string(frame_size) + " (" + std::to_string(bytes.size() % frame_size) +
                  " remainder bytes)");
    count = bytes.size() / frame_size;
  }
  VideoSequence seq;
  seq.frames.reserve(count);
  std::size_t pos = 0;
  for (std::size_t i = 0; i < count; ++i) {
    Frame f = proto;
    read_frame_payload(bytes, pos, f, i);
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

std::vector<std::uint8_t> write_raw_yuv(const VideoSequence& seq) {
  check_uniform_geometry(seq);
  std::vector<std::uint8_t> out;
  for (const Frame& f : seq.frames)
    for (const auto& plane : f.planes) out.insert(out.end(), plane.begin(), plane.end());
  return out;
}

Frame chroma_upsample_nn(const Frame& f) {
  f.validate();
  if (f.subsampling != Subsampling::C420) throw Error("chroma_upsample_nn expects a 4:2:0 frame");
  Frame out(f.width, f.height, Subsampling::C444);
  out.planes[0] = f.planes[0];
  for (int p = 1; p < 3; ++p)
    for (int y = 0; y < f.height; ++y)
      for (int x = 0; x < f.width; ++x) out.sample(p, x, y) = f.sample(p, x / 2, y / 2);
  return out;
}

Frame chroma_downsample_mean(const Frame& f) {
  f.validate();
  if (f.subsampling != Subsampling::C444) throw Error("chroma_downsample_mean expects a 4:4:4 frame");
  if (f.width % 2 != 0 || f.height % 2 != 0)
    throw Error("chroma_downsample_mean needs even dimensions, got " + std::to_string(f.width) + "x" +
                std::to_string(f.height));
  Frame out(f.width, f.height, Subsampling::C420);
  out.planes[0] = f.planes[0];
  for (int p = 1; p < 3; ++p)
    for (int y = 0; y < f.height / 2; ++y)
      for (int x = 0; x < f.width / 2; ++x) {
        const int sum = f.sample(p, 2 * x, 2 * y) + f.sample(p, 2 * x + 1, 2 * y) + f.sample(p, 2 * x, 2 * y + 1) +
                        f.sample(p, 2 * x + 1, 2 * y + 1);
        // Non-negative sums: half away from zero is (sum + 2) / 4.
        out.sample(p, x, y) = static_cast<std::uint8_t>((sum + 2) / 4);
      }
  return out;
}

std::uint8_t quantize_unit(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::round(c * 255.0f));
}

std::array<Tensor, 3> to_normalized(const Frame& f) {
  f.validate();
  std::array<Tensor, 3> out;
  for (int p = 0; p < 3; ++p) {
    Tensor t({static_cast<std::size_t>(f.plane_height(p)), static_cast<std::size_t>(f.plane_width(p))});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(f.planes[p][i]) / 255.0f;
    out[p] = std::move(t);
  }
  return out;
}

Frame from_normalized(const std::array<Tensor, 3>& planes, Subsampling subsampling) {
  if (planes[0].rank() != 2) throw Error("from_normalized: planes must be rank-2 tensors");
  Frame f(static_cast<int>(planes[0].dim(1)), static_cast<int>(planes[0].dim(0)), subsampling);
  for (int p = 0; p < 3; ++p) {
    if (planes[p].rank() != 2 || static_cast<int>(planes[p].dim(1)) != f.plane_width(p) ||
        static_cast<int>(planes[p].dim(0)) != f.plane_height(p))
      throw Error("from_normalized: plane " + std::to_string(p) + " has shape " + shape_string(planes[p].shape()) +
                  ", expected [" + std::to_string(f.plane_height(p)) + "," + std::to_string(f.plane_width(p)) + "]");
    for (std::size_t i = 0; i < planes[p].size(); ++i) f.planes[p][i] = quantize_unit(planes[p][i]);
  }
  return f;
}

Tensor frame_to_tensor(const Frame& f) {
  f.validate();
  if (f.subsampling != Subsampling::C444) throw Error("frame_to_tensor expects a 4:4:4 frame");
  const std::size_t n = f.plane_size(0);
  Tensor t({3, static_cast<std::size_t>(f.height), static_cast<std::size_t>(f.width)});
  for (int p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < n; ++i) t[p * n + i] = static_cast<float>(f.planes[p][i]) / 255.0f;
  return t;
}

Frame tensor_to_frame(const Tensor& t) {
  if (t.rank() != 3 || t.dim(0) != 3) throw Error("tensor_to_frame expects a [3,H,W] tensor, got " + shape_string(t.shape()));
  Frame f(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(1)), Subsampling::C444);
  const std::size_t n = f.plane_size(0);
  for (int p = 0; p < 3; ++p)
    for (std::size_t i = 0; i < n; ++i) f.planes[p][i] = quantize_unit(t[p * n + i]);
  return f;
}

bool is_y4m_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return ext == ".y4m";
}

VideoSequence load_video(const std::filesystem::path& path, std::optional<RawGeometry> raw) {
  const auto bytes = read_file(path);
  if (is_y4m_path(path)) return parse_y4m(bytes);
  if (!raw) throw Error("'" + path.string() + "' is raw YUV; --width and --height are required");
  return read_raw_yuv(bytes, raw->width, raw->height, raw->subsampling);
}

void save_video(const std::filesystem::path& path, const VideoSequence& seq) {
  const auto bytes = is_y4m_path(path) ? write_y4m(seq) : write_raw_yuv(seq);
  write_file_atomic(path, bytes);
}

}  // namespace vsrhe
