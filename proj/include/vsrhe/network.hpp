#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vsrhe/tensor.hpp"

namespace vsrhe {

/// Hyperparameters of the hierarchical windowed-attention SR network.
///
/// One block applies a pre-norm transformer layer per entry of
/// `window_sizes` (attention restricted to non-overlapping windows of that
/// size), then a 3x3 fusion conv, then adds the block input back. The tail
/// upsamples with log2(scale) conv + pixel-shuffle(2) stages.
struct NetworkConfig {
  std::size_t in_channels = 3;
  std::size_t out_channels = 3;
  std::size_t channel_dim = 126;
  std::size_t blocks = 6;
  std::vector<std::size_t> window_sizes{64, 32, 8, 32, 64};
  std::size_t heads = 6;
  double mlp_ratio = 1.0;
  std::size_t input_size = 64;
  std::size_t scale = 4;

  std::size_t head_dim() const { return channel_dim / heads; }
  std::size_t mlp_hidden() const;
  std::size_t upsample_stages() const;
  std::size_t output_size() const { return input_size * scale; }

  // Throws on any invariant violation.
  void validate() const;

  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct TensorSpec {
  std::string name;
  Shape shape;
};

// Canonical parameter list for a config, in serialization order.
std::vector<TensorSpec> parameter_specs(const NetworkConfig& cfg);

using NetworkWeights = std::map<std::string, Tensor>;

// Throws naming the first missing, unexpected, mis-shaped or non-finite tensor.
void validate_weights(const NetworkWeights& w, const NetworkConfig& cfg);

/// Attention/MLP/conv weights and relative-position tables ~ N(0, 0.02) from
/// Xoshiro256 seeded with `seed`, drawn in canonical tensor order; biases and
/// the final conv are zero; layer-norm gamma 1, beta 0.
NetworkWeights init_random(const NetworkConfig& cfg, std::uint64_t seed);

NetworkWeights zero_weights(const NetworkConfig& cfg);

/// Read-only view of one transformer layer's parameters.
struct LayerWeights {
  const Tensor& norm1_gamma;
  const Tensor& norm1_beta;
  const Tensor& wq;
  const Tensor& bq;
  const Tensor& wk;
  const Tensor& bk;
  const Tensor& wv;
  const Tensor& bv;
  const Tensor& wo;
  const Tensor& bo;
  const Tensor& rel_bias;  // [heads, (2w-1)^2]
  const Tensor& norm2_gamma;
  const Tensor& norm2_beta;
  const Tensor& fc1_w;
  const Tensor& fc1_b;
  const Tensor& fc2_w;
  const Tensor& fc2_b;
};

std::string layer_prefix(std::size_t block, std::size_t layer);
LayerWeights layer_weights(const NetworkWeights& w, std::size_t block, std::size_t layer);

/// Multi-head scaled dot-product attention inside each window.
/// tokens: [nW, w*w, C] (already layer-normed). Returns the output
/// projection, same shape.
Tensor window_attention(const Tensor& tokens, const LayerWeights& lw, std::size_t heads, std::size_t window);

// x + attn(LN(x)), then + MLP(LN(.)). x is [C,H,W].
Tensor hiet_layer_forward(const Tensor& x, const LayerWeights& lw, std::size_t heads, std::size_t window);

// x + fuse_conv(layers(x)).
Tensor hiet_block_forward(const Tensor& x, const NetworkWeights& w, const NetworkConfig& cfg, std::size_t block);

// [3, s, s] -> [3, s*scale, s*scale] with s = cfg.input_size.
Tensor forward(const Tensor& input, const NetworkWeights& w, const NetworkConfig& cfg);

// Parameter and FLOP accounting (FLOPs = 2 x multiply-accumulates of
// convolutions and matrix products; norms, softmax, activations, bias and
// residual additions are not counted).
std::uint64_t count_params(const NetworkConfig& cfg);
std::uint64_t count_flops(const NetworkConfig& cfg);

inline constexpr double kReferenceParamsM = 5.43;
inline constexpr double kReferenceFlopsG = 455.16;

// Weight file I/O. See weights_io.cpp for the byte layout.
std::vector<std::uint8_t> save_weights(const NetworkWeights& w, const NetworkConfig& cfg);
struct WeightFile {
  NetworkConfig config;
  std::string note;
  NetworkWeights weights;
};
WeightFile read_weight_file(std::span<const std::uint8_t> bytes);
// As read_weight_file, then checks every tensor against `cfg`.
NetworkWeights load_weights(std::span<const std::uint8_t> bytes, const NetworkConfig& cfg);

struct TensorDirectoryEntry {
  std::string name;
  Shape shape;
  std::uint64_t offset = 0;
};
std::vector<TensorDirectoryEntry> read_tensor_directory(std::span<const std::uint8_t> bytes);

}  // namespace vsrhe
