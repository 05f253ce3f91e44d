#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vsrhe/frame.hpp"
#include "vsrhe/metrics.hpp"
#include "vsrhe/network.hpp"
#include "vsrhe/pipeline.hpp"
#include "vsrhe/rng.hpp"
#include "vsrhe/tensor.hpp"

namespace testutil {

using namespace vsrhe;

inline Frame random_frame(Xoshiro256& rng, int w, int h, Subsampling s) {
  Frame f(w, h, s);
  for (auto& plane : f.planes)
    for (auto& v : plane) v = static_cast<std::uint8_t>(rng.uniform_below(256));
  return f;
}

inline VideoSequence random_sequence(Xoshiro256& rng, int w, int h, std::size_t frames,
                                     Subsampling s = Subsampling::C420) {
  VideoSequence seq;
  seq.frame_rate = Rational{25, 1};
  for (std::size_t i = 0; i < frames; ++i) seq.frames.push_back(random_frame(rng, w, h, s));
  return seq;
}

inline Tensor random_tensor(Xoshiro256& rng, Shape shape, double sd = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal(0.0, sd));
  return t;
}

inline Tensor uniform_tensor(Xoshiro256& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform01());
  return t;
}

inline ImageD random_image(Xoshiro256& rng, int w, int h) {
  ImageD im{w, h, std::vector<double>(static_cast<std::size_t>(w) * h)};
  for (auto& v : im.data) v = static_cast<double>(rng.uniform_below(256));
  return im;
}

// Small network for end-to-end runs that must stay fast.
inline NetworkConfig small_config(std::size_t input = 64) {
  NetworkConfig c;
  c.channel_dim = 12;
  c.blocks = 1;
  c.window_sizes = {32, 8, 32};
  c.heads = 2;
  c.input_size = input;
  return c;
}

// init_random leaves the last conv at zero; give it values so outputs depend
// on everything upstream.
inline NetworkWeights live_weights(const NetworkConfig& cfg, std::uint64_t seed) {
  auto w = init_random(cfg, seed);
  Xoshiro256 rng(seed ^ 0x5eedULL);
  for (auto& v : w.at("tail.final.weight").values()) v = static_cast<float>(rng.normal(0.0, 0.05));
  for (auto& v : w.at("tail.final.bias").values()) v = 0.5f;
  return w;
}

// Nearest-neighbour replication by the scale factor; commutes with cropping.
class ReplicateStub : public SrModel {
 public:
  explicit ReplicateStub(std::size_t tile = 64, std::size_t scale = 4) : tile_(tile), scale_(scale) {}
  std::size_t input_size() const override { return tile_; }
  std::size_t scale() const override { return scale_; }
  bool accepts_tile(std::size_t) const override { return true; }
  Tensor forward(const Tensor& t) const override {
    Tensor out({3, t.dim(1) * scale_, t.dim(2) * scale_});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < out.dim(1); ++y)
        for (std::size_t x = 0; x < out.dim(2); ++x) out.at(c, y, x) = t.at(c, y / scale_, x / scale_);
    return out;
  }

 private:
  std::size_t tile_, scale_;
};

// Per-pixel affine map followed by replication.
class AffineStub : public ReplicateStub {
 public:
  using ReplicateStub::ReplicateStub;
  Tensor forward(const Tensor& t) const override {
    Tensor out = ReplicateStub::forward(t);
    for (auto& v : out.values()) v = 0.75f * v + 0.125f;
    return out;
  }
};

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("vsrhe_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace testutil
