#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "vsrhe/frame.hpp"
#include "vsrhe/network.hpp"
#include "vsrhe/tensor.hpp"

namespace vsrhe {

/// Square tiles over an LR frame. Origins are in padded coordinates and
/// advance by tile - overlap; the last origin on each axis is pulled inward so
/// it ends on the frame edge. Axes shorter than one tile are reflect-padded on
/// the right/bottom instead.
struct TilePlan {
  int width = 0;
  int height = 0;
  int tile = 64;
  int overlap = 8;
  int pad_right = 0;
  int pad_bottom = 0;
  std::vector<int> xs;
  std::vector<int> ys;

  int padded_width() const { return width + pad_right; }
  int padded_height() const { return height + pad_bottom; }
  std::size_t tile_count() const { return xs.size() * ys.size(); }
};

TilePlan plan_tiles(int width, int height, int tile = 64, int overlap = 8);

/// Per-tile HR blend weights along one axis. weights[i][k] is the weight of
/// tile i at HR offset k inside that tile. Raw weights are linear ramps
/// (k + 0.5) / (scale * overlap) on edges shared with a neighbour, 1 elsewhere,
/// then divided by their sum over the tiles covering each position.
std::vector<std::vector<double>> axis_blend_weights(const std::vector<int>& origins, int tile, int overlap, int scale);

// Anything that maps a [3,t,t] tile to [3,t*scale,t*scale].
class SrModel {
 public:
  virtual ~SrModel() = default;
  virtual std::size_t input_size() const = 0;
  virtual std::size_t scale() const = 0;
  // Whether tiles of side `tile` are acceptable.
  virtual bool accepts_tile(std::size_t tile) const { return tile == input_size(); }
  virtual Tensor forward(const Tensor& tile) const = 0;
};

class NetworkModel : public SrModel {
 public:
  NetworkModel(NetworkConfig cfg, NetworkWeights weights);
  std::size_t input_size() const override { return cfg_.input_size; }
  std::size_t scale() const override { return cfg_.scale; }
  Tensor forward(const Tensor& tile) const override;
  const NetworkConfig& config() const { return cfg_; }

 private:
  NetworkConfig cfg_;
  NetworkWeights weights_;
};

using TileProgress = std::function<void(std::size_t done, std::size_t total)>;

/// C420 frame -> C420 frame at scale x the size: NN chroma upsampling, tiled
/// forward passes, weighted blending in double, 2x2 mean chroma pooling, one
/// final quantization. Uses plan_tiles(w, h, model.input_size(), 8) when no
/// plan is given.
Frame upscale_frame(const Frame& f, const SrModel& model, const TilePlan* plan = nullptr,
                    const TileProgress& progress = {});

using FrameProgress = std::function<void(std::size_t frame, std::size_t done, std::size_t total)>;

// Frame-by-frame upscale_frame; frame rate and container metadata carry over.
VideoSequence upscale_sequence(const VideoSequence& seq, const SrModel& model, int overlap = 8,
                               const FrameProgress& progress = {});

}  // namespace vsrhe
