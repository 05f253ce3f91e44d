#include "vsrhe/resample.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vsrhe/error.hpp"

namespace vsrhe {

void KernelSpec::validate() const {
  switch (family) {
    case KernelFamily::bicubic:
      if (!(parameter >= -1.0 && parameter < 0.0))
        throw Error("bicubic parameter a must lie in [-1, 0), got " + std::to_string(parameter));
      break;
    case KernelFamily::lanczos:
      if (parameter != 2.0 && parameter != 3.0 && parameter != 4.0)
        throw Error("Lanczos lobe count must be 2, 3 or 4, got " + std::to_string(parameter));
      break;
    case KernelFamily::nearest:
      break;
  }
}

double KernelSpec::radius() const {
  switch (family) {
    case KernelFamily::bicubic:
      return 2.0;
    case KernelFamily::lanczos:
      return parameter;
    case KernelFamily::nearest:
      return 0.5;
  }
  return 0.0;
}

namespace {

double sinc(double x) {
  if (x == 0.0) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

double KernelSpec::evaluate(double x) const {
  const double ax = std::abs(x);
  switch (family) {
    case KernelFamily::bicubic: {
      const double a = parameter;
      if (ax <= 1.0) return ((a + 2.0) * ax - (a + 3.0)) * ax * ax + 1.0;
      if (ax < 2.0) return ((a * ax - 5.0 * a) * ax + 8.0 * a) * ax - 4.0 * a;
      return 0.0;
    }
    case KernelFamily::lanczos:
      return ax < parameter ? sinc(x) * sinc(x / parameter) : 0.0;
    case KernelFamily::nearest:
      return ax < 0.5 ? 1.0 : 0.0;
  }
  return 0.0;
}

KernelSpec parse_kernel(const std::string& name) {
  if (name == "bicubic") return KernelSpec::bicubic();
  if (name == "lanczos") return KernelSpec::lanczos();
  if (name == "nearest") return KernelSpec::nearest();
  throw Error("unknown kernel '" + name + "' (expected bicubic, lanczos or nearest)");
}

std::vector<TapSet> compute_taps(int in_size, int out_size, const KernelSpec& kernel) {
  kernel.validate();
  if (in_size < 1 || out_size < 1)
    throw Error("resample: sizes must be positive, got " + std::to_string(in_size) + " -> " + std::to_string(out_size));
  const double scale = static_cast<double>(in_size) / out_size;
  std::vector<TapSet> taps(static_cast<std::size_t>(out_size));
  if (kernel.family == KernelFamily::nearest) {
    for (int i = 0; i < out_size; ++i) {
      const int src = std::min(static_cast<int>(std::floor((i + 0.5) * scale)), in_size - 1);
      taps[i].index = {src};
      taps[i].weight = {1.0f};
    }
    return taps;
  }
  const double stretch = std::max(scale, 1.0);
  const double support = kernel.radius() * stretch;
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale - 0.5;
    const int first = static_cast<int>(std::floor(center - support)) + 1;
    const int last = static_cast<int>(std::ceil(center + support)) - 1;
    std::vector<double> w;
    std::vector<int> idx;
    double sum = 0.0;
    for (int j = first; j <= last; ++j) {
      const double v = kernel.evaluate((j - center) / stretch);
      if (v == 0.0) continue;
      w.push_back(v);
      idx.push_back(std::clamp(j, 0, in_size - 1));
      sum += v;
    }
    TapSet& t = taps[i];
    if (w.empty() || sum == 0.0) {
      t.index = {std::clamp(static_cast<int>(std::lround(center)), 0, in_size - 1)};
      t.weight = {1.0f};
      continue;
    }
    t.index = std::move(idx);
    t.weight.resize(w.size());
    for (std::size_t k = 0; k < w.size(); ++k) t.weight[k] = static_cast<float>(w[k] / sum);
  }
  return taps;
}

PlaneF resample_plane(const PlaneF& plane, int out_w, int out_h, const KernelSpec& kernel) {
  if (out_w < 1 || out_h < 1)
    throw Error("resample: output size must be at least 1x1, got " + std::to_string(out_w) + "x" + std::to_string(out_h));
  if (plane.width < 1 || plane.height < 1 ||
      plane.data.size() != static_cast<std::size_t>(plane.width) * static_cast<std::size_t>(plane.height))
    throw Error("resample: input plane geometry is inconsistent");
  const auto htaps = compute_taps(plane.width, out_w, kernel);
  const auto vtaps = compute_taps(plane.height, out_h, kernel);

  std::vector<float> mid(static_cast<std::size_t>(plane.height) * out_w);
  for (int y = 0; y < plane.height; ++y) {
    const float* row = plane.data.data() + static_cast<std::size_t>(y) * plane.width;
    float* dst = mid.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) {
      const TapSet& t = htaps[x];
      float acc = 0.0f;
      for (std::size_t k = 0; k < t.index.size(); ++k) acc += t.weight[k] * row[t.index[k]];
      dst[x] = acc;
    }
  }
  PlaneF out{out_w, out_h, std::vector<float>(static_cast<std::size_t>(out_w) * out_h)};
  for (int y = 0; y < out_h; ++y) {
    const TapSet& t = vtaps[y];
    float* dst = out.data.data() + static_cast<std::size_t>(y) * out_w;
    for (int x = 0; x < out_w; ++x) {
      float acc = 0.0f;
      for (std::size_t k = 0; k < t.index.size(); ++k)
        acc += t.weight[k] * mid[static_cast<std::size_t>(t.index[k]) * out_w + x];
      dst[x] = acc;
    }
  }
  return out;
}

std::vector<std::uint8_t> resample_plane_u8(const std::vector<std::uint8_t>& plane, int width, int height, int out_w,
                                            int out_h, const KernelSpec& kernel) {
  PlaneF in{width, height, std::vector<float>(plane.begin(), plane.end())};
  const PlaneF out = resample_plane(in, out_w, out_h, kernel);
  std::vector<std::uint8_t> result(out.data.size());
  for (std::size_t i = 0; i < result.size(); ++i)
    result[i] = static_cast<std::uint8_t>(std::round(std::clamp(out.data[i], 0.0f, 255.0f)));
  return result;
}

Frame resize_frame(const Frame& f, int out_w, int out_h, const KernelSpec& kernel) {
  f.validate();
  Frame out(out_w, out_h, f.subsampling);
  for (int p = 0; p < 3; ++p)
    out.planes[p] = resample_plane_u8(f.planes[p], f.plane_width(p), f.plane_height(p), out.plane_width(p),
                                      out.plane_height(p), kernel);
  return out;
}

VideoSequence downscale_video(const VideoSequence& seq, int factor, const KernelSpec& kernel) {
  kernel.validate();
  if (factor < 1) throw Error("downscale factor must be positive");
  check_uniform_geometry(seq);
  VideoSequence out;
  out.frame_rate = seq.frame_rate;
  out.metadata = seq.metadata;
  if (seq.frames.empty()) return out;
  const Frame& first = seq.frames.front();
  if (first.width % factor != 0 || first.height % factor != 0)
    throw Error("frame size " + std::to_string(first.width) + "x" + std::to_string(first.height) +
                " is not divisible by " + std::to_string(factor));
  const int ow = first.width / factor, oh = first.height / factor;
  if (first.subsampling == Subsampling::C420 && (ow % 2 != 0 || oh % 2 != 0))
    throw Error("downscaled size " + std::to_string(ow) + "x" + std::to_string(oh) + " must be even for 4:2:0");
  out.frames.reserve(seq.frames.size());
  for (const Frame& f : seq.frames) out.frames.push_back(resize_frame(f, ow, oh, kernel));
  return out;
}

}  // namespace vsrhe
