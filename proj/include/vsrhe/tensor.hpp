#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace vsrhe {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

/// Dense row-major float32 array. The element count always equals the
/// product of the shape.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  // Rank-3 accessors, [C,H,W].
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data_[(c * shape_[1] + y) * shape_[2] + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  Tensor reshaped(Shape shape) const;

  // Value equality (+0 == -0, NaN != NaN).
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Same shape and same bit patterns.
bool bit_equal(const Tensor& a, const Tensor& b);

enum class PadMode { zero, reflect };

/// 2-D cross-correlation over [C_in,H,W] with kernel [C_out,C_in,kH,kW].
///
/// Every output element starts from its bias and accumulates input*weight
/// products in (c_in, kernel row, kernel column) order, so the result is
/// reproducible bit for bit. Reflect padding mirrors without repeating the
/// edge sample and requires padding < H and < W.
Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride = 1,
              std::size_t padding = 0, PadMode pad_mode = PadMode::zero);

/// Batched product of [...,M,K] and [...,K,N]; leading dims must match
/// exactly. Accumulates from zero in ascending K.
Tensor matmul(const Tensor& a, const Tensor& b);

/// y = x W^T + b over the last axis of x. weight is [out, in]. Accumulation
/// starts at the bias and proceeds in ascending input index.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

/// exp for float arguments by range reduction and a fixed polynomial. Same
/// result on every platform; relative error below 2e-7 on [-87, 88]; returns
/// 0 below -87.3.
float det_exp(float x);
// det_exp applied to each element; identical results, vectorizable.
void det_exp_inplace(float* values, std::size_t n);

Tensor softmax(const Tensor& t, int axis);

// Normalizes over the last axis. Statistics are reduced in 64-bit.
Tensor layer_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f);

// x * Phi(x) with Phi from erf.
Tensor gelu(const Tensor& t);
void gelu_inplace(Tensor& t);

Tensor pixel_shuffle(const Tensor& t, std::size_t r);
Tensor pixel_unshuffle(const Tensor& t, std::size_t r);

/// [C,H,W] -> [nW, w*w, C], windows in raster order, tokens in raster order
/// inside each window.
Tensor window_partition(const Tensor& t, std::size_t w);
Tensor window_merge(const Tensor& windows, std::size_t channels, std::size_t height, std::size_t width);

void add_inplace(Tensor& dst, const Tensor& src);

}  // namespace vsrhe
