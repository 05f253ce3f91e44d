#pragma once

#include <cstddef>
#include <vector>

#include "vsrhe/metrics.hpp"
#include "vsrhe/tensor.hpp"

namespace vsrhe {

struct LossWeights {
  double w_l1 = 0.3;
  double w_ssim = 0.2;
  double w_l2 = 0.1;
  double w_msssim = 0.4;
  double w_gan = 0.05;

  void validate() const;
};

/// Per-term values of the perceptual loss. `ssim` and `ms_ssim` are the
/// channel-averaged similarity indices; the loss uses 1 - index.
struct LossBreakdown {
  double l1 = 0.0;
  double l2 = 0.0;
  double ssim = 0.0;
  double ms_ssim = 0.0;
  double total = 0.0;
};

/// w_l1*mean|d| + w_ssim*(1-SSIM) + w_l2*mean(d^2) + w_msssim*(1-MS-SSIM) with
/// d = pred - target over [3,H,W] normalized tensors. SSIM terms are averaged
/// over the three channels. H and W must be at least 176.
LossBreakdown perceptual_loss(const Tensor& pred, const Tensor& target, const LossWeights& w = {},
                              const SsimParams& p = SsimParams::normalized());

// d loss / d pred. The L1 subgradient at d = 0 is 0.
Tensor perceptual_loss_grad(const Tensor& pred, const Tensor& target, const LossWeights& w = {},
                            const SsimParams& p = SsimParams::normalized());

// Same computations on 64-bit [3,H,W] buffers, for gradient verification.
LossBreakdown perceptual_loss_f64(const std::vector<double>& pred, const std::vector<double>& target,
                                  std::size_t height, std::size_t width, const LossWeights& w = {},
                                  const SsimParams& p = SsimParams::normalized());
std::vector<double> perceptual_loss_grad_f64(const std::vector<double>& pred, const std::vector<double>& target,
                                             std::size_t height, std::size_t width, const LossWeights& w = {},
                                             const SsimParams& p = SsimParams::normalized());

// l_p + w_gan * l_gan. The adversarial term is supplied by the caller.
double total_loss(double l_p, double l_gan, const LossWeights& w = {});

}  // namespace vsrhe
