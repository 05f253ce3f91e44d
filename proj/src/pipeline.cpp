#include "vsrhe/pipeline.hpp"

#include <algorithm>
#include <string>

#include "vsrhe/error.hpp"

namespace vsrhe {
namespace {

std::vector<int> axis_origins(int length, int tile, int step) {
  std::vector<int> out{0};
  while (out.back() + tile < length) out.push_back(std::min(out.back() + step, length - tile));
  return out;
}

// Mirror index without repeating the edge sample; a single sample mirrors
// onto itself.
int reflect(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

}  // namespace

TilePlan plan_tiles(int width, int height, int tile, int overlap) {
  if (width < 1 || height < 1) throw Error("tile plan: frame must be at least 1x1");
  if (tile < 1) throw Error("tile plan: tile size must be positive");
  if (overlap < 0 || overlap >= tile)
    throw Error("tile plan: overlap " + std::to_string(overlap) + " must be in [0, " + std::to_string(tile) + ")");
  TilePlan p;
  p.width = width;
  p.height = height;
  p.tile = tile;
  p.overlap = overlap;
  p.pad_right = std::max(0, tile - width);
  p.pad_bottom = std::max(0, tile - height);
  p.xs = axis_origins(p.padded_width(), tile, tile - overlap);
  p.ys = axis_origins(p.padded_height(), tile, tile - overlap);
  return p;
}

std::vector<std::vector<double>> axis_blend_weights(const std::vector<int>& origins, int tile, int overlap, int scale) {
  const int span = tile * scale;
  const int ramp = overlap * scale;
  const std::size_t n = origins.size();
  std::vector<std::vector<double>> raw(n, std::vector<double>(static_cast<std::size_t>(span), 1.0));
  for (std::size_t i = 0; i < n; ++i) {
    for (int k = 0; k < std::min(ramp, span); ++k) {
      const double r = (k + 0.5) / ramp;
      if (i > 0) raw[i][k] *= r;
      if (i + 1 < n) raw[i][span - 1 - k] *= r;
    }
  }
  const int length = (origins.back() + tile) * scale;
  std::vector<double> sum(static_cast<std::size_t>(length), 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < span; ++k) sum[origins[i] * scale + k] += raw[i][k];
  for (std::size_t i = 0; i < n; ++i)
    for (int k = 0; k < span; ++k) raw[i][k] /= sum[origins[i] * scale + k];
  return raw;
}

NetworkModel::NetworkModel(NetworkConfig cfg, NetworkWeights weights)
    : cfg_(std::move(cfg)), weights_(std::move(weights)) {
  cfg_.validate();
  validate_weights(weights_, cfg_);
}

Tensor NetworkModel::forward(const Tensor& tile) const { return vsrhe::forward(tile, weights_, cfg_); }

Frame upscale_frame(const Frame& f, const SrModel& model, const TilePlan* plan, const TileProgress& progress) {
  f.validate();
  if (f.subsampling != Subsampling::C420) throw Error("upscale expects a 4:2:0 frame");
  const TilePlan own = plan ? TilePlan{} : plan_tiles(f.width, f.height, static_cast<int>(model.input_size()), 8);
  const TilePlan& tp = plan ? *plan : own;
  if (tp.width != f.width || tp.height != f.height)
    throw Error("tile plan is for " + std::to_string(tp.width) + "x" + std::to_string(tp.height) + ", frame is " +
                std::to_string(f.width) + "x" + std::to_string(f.height));
  if (!model.accepts_tile(static_cast<std::size_t>(tp.tile)))
    throw Error("model expects " + std::to_string(model.input_size()) + "x" + std::to_string(model.input_size()) +
                " tiles, plan uses " + std::to_string(tp.tile));
  const int s = static_cast<int>(model.scale());
  if (s < 2 || s % 2 != 0) throw Error("upscale needs an even scale factor, model has " + std::to_string(s));

  const Tensor src = frame_to_tensor(chroma_upsample_nn(f));
  const int w = f.width, h = f.height, t = tp.tile;
  const int ow = w * s, oh = h * s, ts = t * s;
  const auto bx = axis_blend_weights(tp.xs, t, tp.overlap, s);
  const auto by = axis_blend_weights(tp.ys, t, tp.overlap, s);

  std::vector<double> acc(static_cast<std::size_t>(3) * ow * oh, 0.0);
  const std::size_t total = tp.tile_count();
  std::size_t done = 0;
  Tensor crop({3, static_cast<std::size_t>(t), static_cast<std::size_t>(t)});
  for (std::size_t j = 0; j < tp.ys.size(); ++j) {
    for (std::size_t i = 0; i < tp.xs.size(); ++i) {
      const int x0 = tp.xs[i], y0 = tp.ys[j];
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < t; ++y)
          for (int x = 0; x < t; ++x) crop.at(c, y, x) = src.at(c, reflect(y0 + y, h), reflect(x0 + x, w));
      const Tensor out = model.forward(crop);
      if (out.shape() != Shape{3, static_cast<std::size_t>(ts), static_cast<std::size_t>(ts)})
        throw Error("model returned " + shape_string(out.shape()) + " for a " + std::to_string(t) + "x" +
                    std::to_string(t) + " tile");
      const int hx0 = x0 * s, hy0 = y0 * s;
      const int xe = std::min(ts, ow - hx0), ye = std::min(ts, oh - hy0);
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ye; ++y) {
          const double wy = by[j][y];
          double* row = acc.data() + (static_cast<std::size_t>(c) * oh + hy0 + y) * ow + hx0;
          for (int x = 0; x < xe; ++x) row[x] += wy * bx[i][x] * static_cast<double>(out.at(c, y, x));
        }
      ++done;
      if (progress) progress(done, total);
    }
  }

  // Chroma goes back to 4:2:0 by 2x2 means on unquantized values.
  std::array<Tensor, 3> planes;
  planes[0] = Tensor({static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (std::size_t k = 0; k < planes[0].size(); ++k) planes[0][k] = static_cast<float>(acc[k]);
  const int cw = ow / 2, ch = oh / 2;
  for (int c = 1; c < 3; ++c) {
    planes[c] = Tensor({static_cast<std::size_t>(ch), static_cast<std::size_t>(cw)});
    const double* p = acc.data() + static_cast<std::size_t>(c) * oh * ow;
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) {
        const std::size_t i0 = static_cast<std::size_t>(2 * y) * ow + 2 * x;
        const float a = static_cast<float>(p[i0]), b = static_cast<float>(p[i0 + 1]);
        const float d = static_cast<float>(p[i0 + ow]), e = static_cast<float>(p[i0 + ow + 1]);
        planes[c][static_cast<std::size_t>(y) * cw + x] = (a + b + d + e) * 0.25f;
      }
  }
  return from_normalized(planes, Subsampling::C420);
}

VideoSequence upscale_sequence(const VideoSequence& seq, const SrModel& model, int overlap,
                               const FrameProgress& progress) {
  check_uniform_geometry(seq);
  VideoSequence out;
  out.frame_rate = seq.frame_rate;
  out.metadata = seq.metadata;
  out.frames.reserve(seq.frames.size());
  for (std::size_t i = 0; i < seq.frames.size(); ++i) {
    const Frame& f = seq.frames[i];
    try {
      const TilePlan plan = plan_tiles(f.width, f.height, static_cast<int>(model.input_size()), overlap);
      TileProgress tick;
      if (progress) tick = [&](std::size_t done, std::size_t total) { progress(i, done, total); };
      out.frames.push_back(upscale_frame(f, model, &plan, tick));
    } catch (const std::exception& e) {
      throw Error("frame " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace vsrhe
