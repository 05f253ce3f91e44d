#include "vsrhe/loss.hpp"

#include <cmath>
#include <string>

#include "vsrhe/error.hpp"

namespace vsrhe {

void LossWeights::validate() const {
  for (double v : {w_l1, w_ssim, w_l2, w_msssim, w_gan})
    if (!(v >= 0.0) || !std::isfinite(v)) throw Error("loss weights must be finite and non-negative");
}

namespace {

void check_inputs(std::size_t pred_size, std::size_t target_size, std::size_t height, std::size_t width,
                  const SsimParams& p) {
  if (pred_size != target_size) throw Error("perceptual loss: prediction and target differ in size");
  if (pred_size != 3 * height * width)
    throw Error("perceptual loss: expected a [3," + std::to_string(height) + "," + std::to_string(width) + "] input");
  const std::size_t min = ms_ssim_min_size(p, kMsSsimWeights.size());
  if (height < min || width < min)
    throw Error("perceptual loss: input " + std::to_string(width) + "x" + std::to_string(height) +
                " is too small, minimum dimension is " + std::to_string(min));
}

void check_tensors(const Tensor& pred, const Tensor& target) {
  if (pred.rank() != 3 || pred.dim(0) != 3)
    throw Error("perceptual loss: expected [3,H,W], got " + shape_string(pred.shape()));
  if (pred.shape() != target.shape())
    throw Error("perceptual loss: shape mismatch " + shape_string(pred.shape()) + " vs " +
                shape_string(target.shape()));
}

ImageD channel(const std::vector<double>& v, std::size_t c, std::size_t h, std::size_t w) {
  const std::size_t n = h * w;
  return ImageD{static_cast<int>(w), static_cast<int>(h),
                std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(c * n),
                                    v.begin() + static_cast<std::ptrdiff_t>((c + 1) * n))};
}

std::vector<double> widen(const Tensor& t) { return std::vector<double>(t.values().begin(), t.values().end()); }

}  // namespace

LossBreakdown perceptual_loss_f64(const std::vector<double>& pred, const std::vector<double>& target,
                                  std::size_t height, std::size_t width, const LossWeights& w, const SsimParams& p) {
  w.validate();
  p.validate();
  check_inputs(pred.size(), target.size(), height, width, p);
  LossBreakdown b;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    b.l1 += std::abs(d);
    b.l2 += d * d;
  }
  b.l1 /= static_cast<double>(pred.size());
  b.l2 /= static_cast<double>(pred.size());
  for (std::size_t c = 0; c < 3; ++c) {
    const ImageD x = channel(pred, c, height, width), y = channel(target, c, height, width);
    b.ssim += ssim(y, x, p);
    b.ms_ssim += ms_ssim(y, x, p);
  }
  b.ssim /= 3.0;
  b.ms_ssim /= 3.0;
  b.total = w.w_l1 * b.l1 + w.w_ssim * (1.0 - b.ssim) + w.w_l2 * b.l2 + w.w_msssim * (1.0 - b.ms_ssim);
  return b;
}

std::vector<double> perceptual_loss_grad_f64(const std::vector<double>& pred, const std::vector<double>& target,
                                             std::size_t height, std::size_t width, const LossWeights& w,
                                             const SsimParams& p) {
  w.validate();
  p.validate();
  check_inputs(pred.size(), target.size(), height, width, p);
  const double inv_n = 1.0 / static_cast<double>(pred.size());
  std::vector<double> g(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    const double sign = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
    g[i] = w.w_l1 * sign * inv_n + w.w_l2 * 2.0 * d * inv_n;
  }
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < 3; ++c) {
    const ImageD x = channel(pred, c, height, width), y = channel(target, c, height, width);
    double* gc = g.data() + c * plane;
    if (w.w_ssim != 0.0) {
      const auto s = ssim_with_grad(y, x, p);
      for (std::size_t i = 0; i < plane; ++i) gc[i] -= w.w_ssim / 3.0 * s.grad[i];
    }
    if (w.w_msssim != 0.0) {
      const auto m = ms_ssim_with_grad(y, x, p);
      for (std::size_t i = 0; i < plane; ++i) gc[i] -= w.w_msssim / 3.0 * m.grad[i];
    }
  }
  return g;
}

LossBreakdown perceptual_loss(const Tensor& pred, const Tensor& target, const LossWeights& w, const SsimParams& p) {
  check_tensors(pred, target);
  return perceptual_loss_f64(widen(pred), widen(target), pred.dim(1), pred.dim(2), w, p);
}

Tensor perceptual_loss_grad(const Tensor& pred, const Tensor& target, const LossWeights& w, const SsimParams& p) {
  check_tensors(pred, target);
  const auto g = perceptual_loss_grad_f64(widen(pred), widen(target), pred.dim(1), pred.dim(2), w, p);
  Tensor out(pred.shape());
  for (std::size_t i = 0; i < g.size(); ++i) out[i] = static_cast<float>(g[i]);
  return out;
}

double total_loss(double l_p, double l_gan, const LossWeights& w) { return l_p + w.w_gan * l_gan; }

}  // namespace vsrhe
