#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vsrhe/frame.hpp"

namespace vsrhe {

/// Gaussian-window SSIM constants. `dynamic_range` is 255 for 8-bit code
/// values and 1 for normalized tensors.
struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;

  static SsimParams code_values() { return {}; }
  static SsimParams normalized() {
    SsimParams p;
    p.dynamic_range = 1.0;
    return p;
  }
  void validate() const;
  // 1-D normalized Gaussian taps; the 2-D window is their outer product.
  std::vector<double> taps() const;
};

inline constexpr std::array<double, 5> kMsSsimWeights{0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// Row-major double-precision image.
struct ImageD {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  static ImageD from_plane(std::span<const std::uint8_t> plane, int width, int height);
  double at(int x, int y) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

// +infinity when the inputs are identical.
double psnr(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> dist, double peak = 255.0);
double psnr_y(const Frame& ref, const Frame& dist);

double ssim(const ImageD& ref, const ImageD& dist, const SsimParams& p = {});

/// Multi-scale SSIM with 2x2 mean pooling between scales:
/// mean(l)^w[M-1] * prod_j max(mean(cs_j), 0)^w[j].
double ms_ssim(const ImageD& ref, const ImageD& dist, const SsimParams& p = {},
               std::span<const double> scale_weights = kMsSsimWeights);

// Y-plane SSIM / MS-SSIM of two frames on code values.
double ssim_y(const Frame& ref, const Frame& dist);
double ms_ssim_y(const Frame& ref, const Frame& dist);

std::size_t ms_ssim_min_size(const SsimParams& p, std::size_t scales);

struct ValueAndGrad {
  double value = 0.0;
  std::vector<double> grad;  // d value / d dist, same layout as the image
};
ValueAndGrad ssim_with_grad(const ImageD& ref, const ImageD& dist, const SsimParams& p);
ValueAndGrad ms_ssim_with_grad(const ImageD& ref, const ImageD& dist, const SsimParams& p,
                               std::span<const double> scale_weights = kMsSsimWeights);

struct MetricSelection {
  bool psnr = true;
  bool ssim = true;
  bool ms_ssim = true;
};
MetricSelection parse_metric_list(const std::string& list);

struct FrameMetrics {
  std::size_t frame = 0;
  double psnr_y = 0.0;
  double ssim = 0.0;
  double ms_ssim = 0.0;
  std::optional<double> vmaf;
};

struct MetricReport {
  std::string sequence_id;
  std::string method;
  MetricSelection selection;
  bool has_vmaf = false;
  std::vector<FrameMetrics> frames;

  // Arithmetic means of the per-frame values.
  FrameMetrics mean() const;
};

MetricReport evaluate_sequences(const VideoSequence& ref, const VideoSequence& dist, const MetricSelection& sel,
                                const std::map<std::size_t, double>* vmaf = nullptr);

// `frame,vmaf` CSV produced by an external VMAF tool.
std::map<std::size_t, double> parse_vmaf_csv(const std::string& text);

// frame,psnr_y,ssim,msssim[,vmaf] with a trailing mean row; unselected
// metrics are omitted.
std::string report_to_csv(const MetricReport& report);

// Pipe table with the columns Method | Frame | PSNR-Y (dB) | SSIM | MS-SSIM |
// VMAF, one row per frame plus a mean row per report.
std::string reports_to_table(const std::vector<MetricReport>& reports);

std::string format_metric(double v);

}  // namespace vsrhe
