#include "vsrhe/network.hpp"

namespace vsrhe {

std::uint64_t count_params(const NetworkConfig& cfg) {
  std::uint64_t total = 0;
  for (const auto& spec : parameter_specs(cfg)) total += shape_volume(spec.shape);
  return total;
}

std::uint64_t count_flops(const NetworkConfig& cfg) {
  cfg.validate();
  const std::uint64_t c = cfg.channel_dim, hid = cfg.mlp_hidden();
  const std::uint64_t s = cfg.input_size, tokens = s * s;
  auto conv3 = [](std::uint64_t pixels, std::uint64_t cin, std::uint64_t cout) { return 2 * pixels * cin * cout * 9; };

  std::uint64_t flops = conv3(tokens, cfg.in_channels, c);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (auto w : cfg.window_sizes) {
      const std::uint64_t area = static_cast<std::uint64_t>(w) * w;
      flops += 4 * (2 * tokens * c * c);  // q, k, v, output projections
      flops += 2 * (2 * tokens * area * c);  // QK^T and AV summed over windows and heads
      flops += 2 * tokens * c * hid + 2 * tokens * hid * c;
    }
    flops += conv3(tokens, c, c);
  }
  flops += conv3(tokens, c, c);
  std::uint64_t side = s;
  for (std::size_t st = 0; st < cfg.upsample_stages(); ++st) {
    flops += conv3(side * side, c, 4 * c);
    side *= 2;
  }
  flops += conv3(side * side, c, cfg.out_channels);
  return flops;
}

}  // namespace vsrhe
