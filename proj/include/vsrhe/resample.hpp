#pragma once

#include <cstdint>
#include <vector>

#include "vsrhe/frame.hpp"

namespace vsrhe {

enum class KernelFamily { bicubic, lanczos, nearest };

struct KernelSpec {
  KernelFamily family = KernelFamily::bicubic;
  // Bicubic: the Keys "a" parameter in [-1, 0). Lanczos: lobe count 2, 3 or 4.
  double parameter = -0.5;

  static KernelSpec bicubic(double a = -0.5) { return {KernelFamily::bicubic, a}; }
  static KernelSpec lanczos(int lobes = 3) { return {KernelFamily::lanczos, static_cast<double>(lobes)}; }
  static KernelSpec nearest() { return {KernelFamily::nearest, 0.0}; }

  void validate() const;
  double radius() const;
  double evaluate(double x) const;
};

KernelSpec parse_kernel(const std::string& name);

struct PlaneF {
  int width = 0;
  int height = 0;
  std::vector<float> data;
};

// One output position's taps: source indices (already clamped) and weights
// that sum to 1.
struct TapSet {
  std::vector<int> index;
  std::vector<float> weight;
};

/// Taps for mapping `in_size` samples onto `out_size`. Output sample i is
/// centred at source coordinate (i + 0.5) * in/out - 0.5; the kernel is
/// stretched by in/out when shrinking.
std::vector<TapSet> compute_taps(int in_size, int out_size, const KernelSpec& kernel);

// Horizontal pass then vertical pass, both in float.
PlaneF resample_plane(const PlaneF& plane, int out_w, int out_h, const KernelSpec& kernel);

std::vector<std::uint8_t> resample_plane_u8(const std::vector<std::uint8_t>& plane, int width, int height, int out_w,
                                            int out_h, const KernelSpec& kernel);

// Each plane resampled at its own resolution.
VideoSequence downscale_video(const VideoSequence& seq, int factor, const KernelSpec& kernel);
Frame resize_frame(const Frame& f, int out_w, int out_h, const KernelSpec& kernel);

}  // namespace vsrhe
