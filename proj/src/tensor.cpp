#include "vsrhe/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <numeric>

#include "vsrhe/error.hpp"
#include "vsrhe/parallel.hpp"

namespace vsrhe {

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

std::size_t shape_volume(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, float fill) : shape_(std::move(shape)), data_(shape_volume(shape_), fill) {
  for (auto d : shape_)
    if (d == 0) throw Error("tensor shape " + shape_string(shape_) + " has a zero dimension");
}

Tensor::Tensor(Shape shape, std::vector<float> values) : shape_(std::move(shape)), data_(std::move(values)) {
  for (auto d : shape_)
    if (d == 0) throw Error("tensor shape " + shape_string(shape_) + " has a zero dimension");
  if (data_.size() != shape_volume(shape_))
    throw Error("tensor data length " + std::to_string(data_.size()) + " does not match shape " +
                shape_string(shape_));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size())
    throw Error("axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape_));
  return shape_[axis];
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_volume(shape) != data_.size())
    throw Error("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  return Tensor(std::move(shape), data_);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op, const char* what) {
  if (t.rank() != rank)
    throw Error(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got shape " +
                shape_string(t.shape()));
}

// Mirror index without repeating the edge sample; valid for any n >= 1.
std::size_t reflect_index(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < n ? i : period - i);
}

Tensor pad_input(const Tensor& in, std::size_t pad, PadMode mode) {
  const std::size_t c_n = in.dim(0), h = in.dim(1), w = in.dim(2);
  const std::size_t hp = h + 2 * pad, wp = w + 2 * pad;
  Tensor out({c_n, hp, wp}, 0.0f);
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < hp; ++y) {
      const auto sy = static_cast<std::ptrdiff_t>(y) - static_cast<std::ptrdiff_t>(pad);
      if (mode == PadMode::zero && (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h))) continue;
      const std::size_t ry = reflect_index(sy, static_cast<std::ptrdiff_t>(h));
      for (std::size_t x = 0; x < wp; ++x) {
        const auto sx = static_cast<std::ptrdiff_t>(x) - static_cast<std::ptrdiff_t>(pad);
        if (mode == PadMode::zero && (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w))) continue;
        out.at(c, y, x) = in.at(c, ry, reflect_index(sx, static_cast<std::ptrdiff_t>(w)));
      }
    }
  }
  return out;
}

constexpr std::size_t kConvChannelBlock = 4;

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, std::size_t stride,
              std::size_t padding, PadMode pad_mode) {
  require_rank(input, 3, "conv2d", "input");
  require_rank(kernel, 4, "conv2d", "kernel");
  require_rank(bias, 1, "conv2d", "bias");
  const std::size_t c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t c_out = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
  if (kernel.dim(1) != c_in)
    throw Error("conv2d: kernel input-channel dimension (" + std::to_string(kernel.dim(1)) +
                ") does not match input channels (" + std::to_string(c_in) + ")");
  if (bias.dim(0) != c_out)
    throw Error("conv2d: bias length (" + std::to_string(bias.dim(0)) + ") does not match output channels (" +
                std::to_string(c_out) + ")");
  if (kh % 2 == 0 || kw % 2 == 0)
    throw Error("conv2d: kernel height/width must be odd, got " + std::to_string(kh) + "x" + std::to_string(kw));
  if (stride == 0) throw Error("conv2d: stride must be positive");
  if (h + 2 * padding < kh)
    throw Error("conv2d: padded input height (" + std::to_string(h + 2 * padding) + ") smaller than kernel height (" +
                std::to_string(kh) + ")");
  if (w + 2 * padding < kw)
    throw Error("conv2d: padded input width (" + std::to_string(w + 2 * padding) + ") smaller than kernel width (" +
                std::to_string(kw) + ")");
  if (pad_mode == PadMode::reflect && padding > 0 && (padding >= h || padding >= w))
    throw Error("conv2d: reflect padding " + std::to_string(padding) + " requires height and width > padding");

  const Tensor padded_storage = padding > 0 ? pad_input(input, padding, pad_mode) : Tensor();
  const Tensor& src = padding > 0 ? padded_storage : input;
  const std::size_t hp = h + 2 * padding, wp = w + 2 * padding;
  const std::size_t ho = (hp - kh) / stride + 1, wo = (wp - kw) / stride + 1;

  Tensor out({c_out, ho, wo});
  const std::size_t blocks = (c_out + kConvChannelBlock - 1) / kConvChannelBlock;
  const float* k = kernel.data();
  const float* in = src.data();
  float* o = out.data();
  const std::size_t k_stride = c_in * kh * kw;

  parallel_for(blocks * ho, [&](std::size_t begin, std::size_t end) {
    for (std::size_t job = begin; job < end; ++job) {
      const std::size_t cb = job / ho, oy = job % ho;
      const std::size_t co0 = cb * kConvChannelBlock;
      const std::size_t n_co = std::min(kConvChannelBlock, c_out - co0);
      float* rows[kConvChannelBlock];
      for (std::size_t j = 0; j < n_co; ++j) {
        rows[j] = o + ((co0 + j) * ho + oy) * wo;
        std::fill(rows[j], rows[j] + wo, bias[co0 + j]);
      }
      for (std::size_t ci = 0; ci < c_in; ++ci) {
        for (std::size_t ky = 0; ky < kh; ++ky) {
          const float* in_row = in + (ci * hp + oy * stride + ky) * wp;
          for (std::size_t kx = 0; kx < kw; ++kx) {
            const std::size_t kidx = (ci * kh + ky) * kw + kx;
            if (n_co == kConvChannelBlock && stride == 1) {
              const float w0 = k[(co0 + 0) * k_stride + kidx];
              const float w1 = k[(co0 + 1) * k_stride + kidx];
              const float w2 = k[(co0 + 2) * k_stride + kidx];
              const float w3 = k[(co0 + 3) * k_stride + kidx];
              float* r0 = rows[0];
              float* r1 = rows[1];
              float* r2 = rows[2];
              float* r3 = rows[3];
              const float* src_row = in_row + kx;
              for (std::size_t ox = 0; ox < wo; ++ox) {
                const float v = src_row[ox];
                r0[ox] += w0 * v;
                r1[ox] += w1 * v;
                r2[ox] += w2 * v;
                r3[ox] += w3 * v;
              }
            } else {
              for (std::size_t j = 0; j < n_co; ++j) {
                const float wv = k[(co0 + j) * k_stride + kidx];
                float* r = rows[j];
                for (std::size_t ox = 0; ox < wo; ++ox) r[ox] += wv * in_row[ox * stride + kx];
              }
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || b.rank() < 2 || a.rank() != b.rank())
    throw Error("matmul: operands must have equal rank >= 2, got " + shape_string(a.shape()) + " and " +
                shape_string(b.shape()));
  const std::size_t r = a.rank();
  for (std::size_t i = 0; i + 2 < r; ++i)
    if (a.dim(i) != b.dim(i))
      throw Error("matmul: batch dimension " + std::to_string(i) + " differs (" + std::to_string(a.dim(i)) +
                  " vs " + std::to_string(b.dim(i)) + ")");
  const std::size_t m = a.dim(r - 2), kdim = a.dim(r - 1), n = b.dim(r - 1);
  if (b.dim(r - 2) != kdim)
    throw Error("matmul: inner dimensions differ (" + std::to_string(kdim) + " vs " + std::to_string(b.dim(r - 2)) +
                ")");
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  out_shape.push_back(n);
  Tensor out(out_shape, 0.0f);
  const std::size_t batch = a.size() / (m * kdim);
  const float* pa = a.data();
  const float* pb = b.data();
  float* po = out.data();
  parallel_for(batch * m, [&](std::size_t begin, std::size_t end) {
    for (std::size_t row = begin; row < end; ++row) {
      const std::size_t bi = row / m;
      const float* arow = pa + row * kdim;
      const float* bmat = pb + bi * kdim * n;
      float* orow = po + row * n;
      for (std::size_t kk = 0; kk < kdim; ++kk) {
        const float av = arow[kk];
        const float* brow = bmat + kk * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank(weight, 2, "linear", "weight");
  require_rank(bias, 1, "linear", "bias");
  if (x.rank() < 1) throw Error("linear: input must have rank >= 1");
  const std::size_t in_f = weight.dim(1), out_f = weight.dim(0);
  if (x.shape().back() != in_f)
    throw Error("linear: input feature dimension (" + std::to_string(x.shape().back()) +
                ") does not match weight input dimension (" + std::to_string(in_f) + ")");
  if (bias.dim(0) != out_f)
    throw Error("linear: bias length (" + std::to_string(bias.dim(0)) + ") does not match weight output dimension (" +
                std::to_string(out_f) + ")");
  std::vector<float> wt(in_f * out_f);
  for (std::size_t o = 0; o < out_f; ++o)
    for (std::size_t i = 0; i < in_f; ++i) wt[i * out_f + o] = weight[o * in_f + i];
  Shape out_shape = x.shape();
  out_shape.back() = out_f;
  Tensor out(out_shape);
  const std::size_t rows = x.size() / in_f;
  const float* px = x.data();
  float* po = out.data();
  parallel_for(
      rows,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t row = begin; row < end; ++row) {
          const float* xr = px + row * in_f;
          float* orow = po + row * out_f;
          std::copy(bias.data(), bias.data() + out_f, orow);
          for (std::size_t i = 0; i < in_f; ++i) {
            const float xv = xr[i];
            const float* wr = wt.data() + i * out_f;
            for (std::size_t j = 0; j < out_f; ++j) orow[j] += xv * wr[j];
          }
        }
      },
      16);
  return out;
}

namespace {

inline float det_exp_core(float x) {
  // Clamping both ends keeps the integer conversion below defined for every
  // input, including infinities and NaN; the final select restores them.
  const float xc = x < 88.0f ? (x > -88.0f ? x : -88.0f) : 88.0f;
  const float fn = (xc * 1.44269504088896341f + 12582912.0f) - 12582912.0f;
  float r = xc - fn * 0.693359375f;
  r = r - fn * -2.12194440e-4f;
  const float r2 = r * r;
  float p = 1.9875691500e-4f;
  p = p * r + 1.3981999507e-3f;
  p = p * r + 8.3334519073e-3f;
  p = p * r + 4.1665795894e-2f;
  p = p * r + 1.6666665459e-1f;
  p = p * r + 5.0000001201e-1f;
  const float y = p * r2 + r + 1.0f;
  const auto n = static_cast<std::int32_t>(fn);
  const float scale = std::bit_cast<float>(static_cast<std::uint32_t>(n + 127) << 23);
  return x < -87.3f ? 0.0f : (x == x ? y * scale : x);
}

}  // namespace

float det_exp(float x) { return det_exp_core(x); }

void det_exp_inplace(float* values, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) values[i] = det_exp_core(values[i]);
}

Tensor softmax(const Tensor& t, int axis) {
  const auto r = static_cast<int>(t.rank());
  if (axis < -r || axis >= r)
    throw Error("softmax: axis " + std::to_string(axis) + " invalid for shape " + shape_string(t.shape()));
  const auto ax = static_cast<std::size_t>(axis < 0 ? axis + r : axis);
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < ax; ++i) outer *= t.dim(i);
  for (std::size_t i = ax + 1; i < t.rank(); ++i) inner *= t.dim(i);
  const std::size_t len = t.dim(ax);
  Tensor out(t.shape());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t in = 0; in < inner; ++in) {
      const std::size_t base = o * len * inner + in;
      float mx = t[base];
      for (std::size_t i = 1; i < len; ++i) mx = std::max(mx, t[base + i * inner]);
      double sum = 0.0;
      for (std::size_t i = 0; i < len; ++i) {
        const float e = det_exp(t[base + i * inner] - mx);
        out[base + i * inner] = e;
        sum += e;
      }
      for (std::size_t i = 0; i < len; ++i)
        out[base + i * inner] = static_cast<float>(out[base + i * inner] / sum);
    }
  }
  return out;
}

Tensor layer_norm(const Tensor& t, const Tensor& gamma, const Tensor& beta, float eps) {
  if (t.rank() < 1) throw Error("layer_norm: input must have rank >= 1");
  const std::size_t c = t.shape().back();
  if (gamma.size() != c || beta.size() != c)
    throw Error("layer_norm: gamma/beta length must equal channel count " + std::to_string(c));
  if (!(eps > 0.0f)) throw Error("layer_norm: eps must be positive");
  Tensor out(t.shape());
  const std::size_t rows = t.size() / c;
  parallel_for(
      rows,
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t row = begin; row < end; ++row) {
          const float* x = t.data() + row * c;
          float* y = out.data() + row * c;
          double mean = 0.0;
          for (std::size_t i = 0; i < c; ++i) mean += x[i];
          mean /= static_cast<double>(c);
          double var = 0.0;
          for (std::size_t i = 0; i < c; ++i) {
            const double d = x[i] - mean;
            var += d * d;
          }
          var /= static_cast<double>(c);
          const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
          for (std::size_t i = 0; i < c; ++i)
            y[i] = static_cast<float>((x[i] - mean) * inv) * gamma[i] + beta[i];
        }
      },
      64);
  return out;
}

void gelu_inplace(Tensor& t) {
  parallel_for(
      t.size(),
      [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
          const double x = t[i];
          t[i] = static_cast<float>(0.5 * x * (1.0 + std::erf(x * 0.70710678118654752440)));
        }
      },
      4096);
}

Tensor gelu(const Tensor& t) {
  Tensor out = t;
  gelu_inplace(out);
  return out;
}

Tensor pixel_shuffle(const Tensor& t, std::size_t r) {
  require_rank(t, 3, "pixel_shuffle", "input");
  if (r == 0) throw Error("pixel_shuffle: factor must be positive");
  const std::size_t cin = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (cin % (r * r) != 0)
    throw Error("pixel_shuffle: channel count " + std::to_string(cin) + " not divisible by " + std::to_string(r * r));
  const std::size_t c = cin / (r * r);
  Tensor out({c, h * r, w * r});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) out.at(ch, y * r + i, x * r + j) = t.at(ch * r * r + i * r + j, y, x);
  return out;
}

Tensor pixel_unshuffle(const Tensor& t, std::size_t r) {
  require_rank(t, 3, "pixel_unshuffle", "input");
  if (r == 0) throw Error("pixel_unshuffle: factor must be positive");
  const std::size_t c = t.dim(0), h = t.dim(1), w = t.dim(2);
  if (h % r != 0 || w % r != 0)
    throw Error("pixel_unshuffle: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                " not divisible by " + std::to_string(r));
  Tensor out({c * r * r, h / r, w / r});
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < r; ++j)
        for (std::size_t y = 0; y < h / r; ++y)
          for (std::size_t x = 0; x < w / r; ++x) out.at(ch * r * r + i * r + j, y, x) = t.at(ch, y * r + i, x * r + j);
  return out;
}

Tensor window_partition(const Tensor& t, std::size_t w) {
  require_rank(t, 3, "window_partition", "input");
  if (w == 0) throw Error("window_partition: window size must be positive");
  const std::size_t c = t.dim(0), h = t.dim(1), wd = t.dim(2);
  if (h % w != 0)
    throw Error("window_partition: height " + std::to_string(h) + " not divisible by window " + std::to_string(w) +
                " (pad by " + std::to_string(w - h % w) + ")");
  if (wd % w != 0)
    throw Error("window_partition: width " + std::to_string(wd) + " not divisible by window " + std::to_string(w) +
                " (pad by " + std::to_string(w - wd % w) + ")");
  const std::size_t nwy = h / w, nwx = wd / w;
  Tensor out({nwy * nwx, w * w, c});
  float* po = out.data();
  for (std::size_t wy = 0; wy < nwy; ++wy)
    for (std::size_t wx = 0; wx < nwx; ++wx)
      for (std::size_t ty = 0; ty < w; ++ty)
        for (std::size_t tx = 0; tx < w; ++tx) {
          float* dst = po + (((wy * nwx + wx) * w + ty) * w + tx) * c;
          for (std::size_t ch = 0; ch < c; ++ch) dst[ch] = t.at(ch, wy * w + ty, wx * w + tx);
        }
  return out;
}

Tensor window_merge(const Tensor& windows, std::size_t channels, std::size_t height, std::size_t width) {
  require_rank(windows, 3, "window_merge", "windows");
  const std::size_t tokens = windows.dim(1);
  const auto w = static_cast<std::size_t>(std::llround(std::sqrt(static_cast<double>(tokens))));
  if (w * w != tokens) throw Error("window_merge: token count " + std::to_string(tokens) + " is not a square");
  if (windows.dim(2) != channels)
    throw Error("window_merge: channel dimension " + std::to_string(windows.dim(2)) + " does not match " +
                std::to_string(channels));
  if (height % w != 0 || width % w != 0)
    throw Error("window_merge: " + std::to_string(height) + "x" + std::to_string(width) +
                " not divisible by window " + std::to_string(w));
  const std::size_t nwy = height / w, nwx = width / w;
  if (windows.dim(0) != nwy * nwx)
    throw Error("window_merge: window count " + std::to_string(windows.dim(0)) + " does not match grid " +
                std::to_string(nwy) + "x" + std::to_string(nwx));
  Tensor out({channels, height, width});
  const float* pw = windows.data();
  for (std::size_t wy = 0; wy < nwy; ++wy)
    for (std::size_t wx = 0; wx < nwx; ++wx)
      for (std::size_t ty = 0; ty < w; ++ty)
        for (std::size_t tx = 0; tx < w; ++tx) {
          const float* src = pw + (((wy * nwx + wx) * w + ty) * w + tx) * channels;
          for (std::size_t ch = 0; ch < channels; ++ch) out.at(ch, wy * w + ty, wx * w + tx) = src[ch];
        }
  return out;
}

void add_inplace(Tensor& dst, const Tensor& src) {
  if (dst.shape() != src.shape())
    throw Error("add: shapes differ " + shape_string(dst.shape()) + " vs " + shape_string(src.shape()));
  float* d = dst.data();
  const float* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

}  // namespace vsrhe
