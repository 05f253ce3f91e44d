#include "vsrhe/network.hpp"

#include <algorithm>
#include <cmath>

#include "vsrhe/error.hpp"
#include "vsrhe/parallel.hpp"
#include "simd.hpp"
#include "vsrhe/rng.hpp"

namespace vsrhe {

std::size_t NetworkConfig::mlp_hidden() const {
  return static_cast<std::size_t>(std::ceil(mlp_ratio * static_cast<double>(channel_dim) - 1e-9));
}

std::size_t NetworkConfig::upsample_stages() const {
  std::size_t stages = 0;
  for (std::size_t s = scale; s > 1; s >>= 1) ++stages;
  return stages;
}

void NetworkConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error("network config: " + msg); };
  if (in_channels == 0 || out_channels == 0) fail("channel counts must be positive");
  if (channel_dim == 0) fail("channel_dim must be positive");
  if (blocks == 0) fail("blocks must be positive");
  if (heads == 0 || channel_dim % heads != 0)
    fail("heads (" + std::to_string(heads) + ") must divide channel_dim (" + std::to_string(channel_dim) + ")");
  if (!(mlp_ratio > 0.0) || !std::isfinite(mlp_ratio)) fail("mlp_ratio must be positive");
  if (input_size == 0) fail("input_size must be positive");
  if (window_sizes.empty()) fail("window_sizes must not be empty");
  for (auto w : window_sizes)
    if (w == 0 || input_size % w != 0)
      fail("window size " + std::to_string(w) + " does not divide input_size " + std::to_string(input_size));
  if (scale < 2 || (scale & (scale - 1)) != 0) fail("scale must be a power of two >= 2, got " + std::to_string(scale));
}

std::string layer_prefix(std::size_t block, std::size_t layer) {
  return "blocks." + std::to_string(block) + ".layers." + std::to_string(layer) + ".";
}

std::vector<TensorSpec> parameter_specs(const NetworkConfig& cfg) {
  cfg.validate();
  const std::size_t c = cfg.channel_dim, hid = cfg.mlp_hidden();
  std::vector<TensorSpec> specs;
  auto conv = [&](const std::string& name, std::size_t out, std::size_t in) {
    specs.push_back({name + ".weight", {out, in, 3, 3}});
    specs.push_back({name + ".bias", {out}});
  };
  auto dense = [&](const std::string& name, std::size_t out, std::size_t in) {
    specs.push_back({name + ".weight", {out, in}});
    specs.push_back({name + ".bias", {out}});
  };
  conv("head", c, cfg.in_channels);
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (std::size_t l = 0; l < cfg.window_sizes.size(); ++l) {
      const std::string p = layer_prefix(b, l);
      const std::size_t span = 2 * cfg.window_sizes[l] - 1;
      specs.push_back({p + "norm1.gamma", {c}});
      specs.push_back({p + "norm1.beta", {c}});
      dense(p + "attn.wq", c, c);
      dense(p + "attn.wk", c, c);
      dense(p + "attn.wv", c, c);
      dense(p + "attn.wo", c, c);
      specs.push_back({p + "attn.rel_bias", {cfg.heads, span * span}});
      specs.push_back({p + "norm2.gamma", {c}});
      specs.push_back({p + "norm2.beta", {c}});
      dense(p + "mlp.fc1", hid, c);
      dense(p + "mlp.fc2", c, hid);
    }
    conv("blocks." + std::to_string(b) + ".fuse", c, c);
  }
  conv("body_end", c, c);
  for (std::size_t s = 0; s < cfg.upsample_stages(); ++s) conv("tail.up" + std::to_string(s), 4 * c, c);
  conv("tail.final", cfg.out_channels, c);
  return specs;
}

namespace {

void validate_weights_impl(const NetworkWeights& w, const NetworkConfig& cfg, bool check_finite) {
  const auto specs = parameter_specs(cfg);
  for (const auto& spec : specs) {
    auto it = w.find(spec.name);
    if (it == w.end()) throw Error("missing tensor '" + spec.name + "'");
    if (it->second.shape() != spec.shape)
      throw Error("shape conflict for tensor '" + spec.name + "': have " + shape_string(it->second.shape()) +
                  ", config expects " + shape_string(spec.shape));
    if (check_finite)
      for (float v : it->second.values())
        if (!std::isfinite(v)) throw Error("tensor '" + spec.name + "' contains non-finite values");
  }
  if (w.size() != specs.size()) {
    for (const auto& [name, t] : w) {
      bool known = std::any_of(specs.begin(), specs.end(), [&](const TensorSpec& s) { return s.name == name; });
      if (!known) throw Error("unknown tensor '" + name + "' for this config");
    }
  }
}

const Tensor& get(const NetworkWeights& w, const std::string& name) {
  auto it = w.find(name);
  if (it == w.end()) throw Error("missing tensor '" + name + "'");
  return it->second;
}

bool ends_with(const std::string& s, std::string_view suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

void validate_weights(const NetworkWeights& w, const NetworkConfig& cfg) { validate_weights_impl(w, cfg, true); }

NetworkWeights zero_weights(const NetworkConfig& cfg) {
  NetworkWeights w;
  for (auto& spec : parameter_specs(cfg)) w.emplace(spec.name, Tensor(spec.shape, 0.0f));
  return w;
}

NetworkWeights init_random(const NetworkConfig& cfg, std::uint64_t seed) {
  Xoshiro256 rng(seed);
  NetworkWeights w;
  for (auto& spec : parameter_specs(cfg)) {
    Tensor t(spec.shape, 0.0f);
    if (ends_with(spec.name, ".gamma")) {
      std::fill(t.values().begin(), t.values().end(), 1.0f);
    } else if (ends_with(spec.name, ".bias") || ends_with(spec.name, ".beta") || spec.name == "tail.final.weight") {
      // zeros
    } else {
      for (auto& v : t.values()) v = static_cast<float>(rng.normal(0.0, 0.02));
    }
    w.emplace(spec.name, std::move(t));
  }
  return w;
}

LayerWeights layer_weights(const NetworkWeights& w, std::size_t block, std::size_t layer) {
  const std::string p = layer_prefix(block, layer);
  return LayerWeights{get(w, p + "norm1.gamma"),   get(w, p + "norm1.beta"),     get(w, p + "attn.wq.weight"),
                      get(w, p + "attn.wq.bias"),  get(w, p + "attn.wk.weight"), get(w, p + "attn.wk.bias"),
                      get(w, p + "attn.wv.weight"), get(w, p + "attn.wv.bias"),  get(w, p + "attn.wo.weight"),
                      get(w, p + "attn.wo.bias"),  get(w, p + "attn.rel_bias"),  get(w, p + "norm2.gamma"),
                      get(w, p + "norm2.beta"),    get(w, p + "mlp.fc1.weight"), get(w, p + "mlp.fc1.bias"),
                      get(w, p + "mlp.fc2.weight"), get(w, p + "mlp.fc2.bias")};
}

Tensor window_attention(const Tensor& tokens, const LayerWeights& lw, std::size_t heads, std::size_t window) {
  if (tokens.rank() != 3) throw Error("window_attention: tokens must be [nW, N, C]");
  const std::size_t n_win = tokens.dim(0), n_tok = tokens.dim(1), c = tokens.dim(2);
  if (n_tok != window * window)
    throw Error("window_attention: token count " + std::to_string(n_tok) + " does not match window " +
                std::to_string(window));
  if (heads == 0 || c % heads != 0) throw Error("window_attention: heads must divide channel count");
  const std::size_t d = c / heads;
  const std::size_t span = 2 * window - 1;
  if (lw.rel_bias.shape() != Shape{heads, span * span})
    throw Error("window_attention: relative position table has shape " + shape_string(lw.rel_bias.shape()) +
                ", expected " + shape_string({heads, span * span}));

  const Tensor q = linear(tokens, lw.wq, lw.bq);
  const Tensor k = linear(tokens, lw.wk, lw.bk);
  const Tensor v = linear(tokens, lw.wv, lw.bv);
  const float scale = 1.0f / std::sqrt(static_cast<float>(d));

  // Per (window, head): scaled queries [N,d], keys transposed [d,N], values
  // [N,dp] with rows zero-padded to a whole number of vectors.
  using simd::f16v;
  constexpr std::size_t L = simd::kLanes;
  const std::size_t groups = n_win * heads;
  const std::size_t dp = (d + L - 1) / L * L;
  std::vector<float> qs(groups * n_tok * d), kt(groups * d * n_tok), vs(groups * n_tok * dp, 0.0f);
  for (std::size_t win = 0; win < n_win; ++win)
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t g = win * heads + h;
      for (std::size_t t = 0; t < n_tok; ++t) {
        const std::size_t src = (win * n_tok + t) * c + h * d;
        for (std::size_t e = 0; e < d; ++e) {
          qs[(g * n_tok + t) * d + e] = q[src + e] * scale;
          kt[(g * d + e) * n_tok + t] = k[src + e];
          vs[(g * n_tok + t) * dp + e] = v[src + e];
        }
      }
    }

  // Queries are handled kQ at a time so each key/value load feeds several
  // rows. Every score is accumulated over e in ascending order from zero and
  // every output over keys in ascending order, whatever the blocking.
  constexpr std::size_t kQ = 4;
  const std::size_t qblocks = (n_tok + kQ - 1) / kQ;
  const std::size_t vec_keys = n_tok / L * L;
  Tensor mixed({n_win, n_tok, c});
  const float* table = lw.rel_bias.data();
  parallel_for(
      groups * qblocks,
      [&](std::size_t begin, std::size_t end) {
        std::vector<float> scores(kQ * n_tok);
        std::vector<float> out(kQ * dp);
        for (std::size_t job = begin; job < end; ++job) {
          const std::size_t g = job / qblocks, i0 = job % qblocks * kQ;
          const std::size_t nq = std::min(kQ, n_tok - i0);
          const std::size_t win = g / heads, h = g % heads;
          const float* kg = kt.data() + g * d * n_tok;
          const float* qg = qs.data() + (g * n_tok + i0) * d;

          // Scores.
          std::size_t j = 0;
          if (nq == kQ) {
            for (; j < vec_keys; j += L) {
              f16v a0{}, a1{}, a2{}, a3{};
              for (std::size_t e = 0; e < d; ++e) {
                const f16v kv = simd::load(kg + e * n_tok + j);
                a0 += simd::splat(qg[e]) * kv;
                a1 += simd::splat(qg[d + e]) * kv;
                a2 += simd::splat(qg[2 * d + e]) * kv;
                a3 += simd::splat(qg[3 * d + e]) * kv;
              }
              simd::store(scores.data() + j, a0);
              simd::store(scores.data() + n_tok + j, a1);
              simd::store(scores.data() + 2 * n_tok + j, a2);
              simd::store(scores.data() + 3 * n_tok + j, a3);
            }
          }
          for (std::size_t qi = 0; qi < nq; ++qi)
            for (std::size_t jj = j; jj < n_tok; ++jj) {
              float acc = 0.0f;
              for (std::size_t e = 0; e < d; ++e) acc += qg[qi * d + e] * kg[e * n_tok + jj];
              scores[qi * n_tok + jj] = acc;
            }

          for (std::size_t qi = 0; qi < nq; ++qi) {
            float* srow0 = scores.data() + qi * n_tok;
            const std::size_t i = i0 + qi;
            const std::size_t iy = i / window, ix = i % window;
            const float* htable = table + h * span * span;
            for (std::size_t jy = 0; jy < window; ++jy) {
              const float* trow = htable + (iy + window - 1 - jy) * span + ix + window - 1;
              float* srow = srow0 + jy * window;
              for (std::size_t jx = 0; jx < window; ++jx) srow[jx] += *(trow - jx);
            }
            float mx = srow0[0];
            if (vec_keys > 0) {
              f16v m = simd::load(srow0);
              for (std::size_t jj = L; jj < vec_keys; jj += L) m = simd::vmax(m, simd::load(srow0 + jj));
              mx = simd::reduce_max(m);
            }
            for (std::size_t jj = vec_keys; jj < n_tok; ++jj) mx = std::max(mx, srow0[jj]);
            for (std::size_t jj = 0; jj < n_tok; ++jj) srow0[jj] -= mx;
            det_exp_inplace(srow0, n_tok);
          }

          // Weighted values, then normalization by the row sums.
          std::fill(out.begin(), out.end(), 0.0f);
          const float* vg = vs.data() + g * n_tok * dp;
          for (std::size_t dc = 0; dc < dp; dc += L) {
            if (nq == kQ) {
              f16v o0{}, o1{}, o2{}, o3{};
              const float *s0 = scores.data(), *s1 = s0 + n_tok, *s2 = s1 + n_tok, *s3 = s2 + n_tok;
              for (std::size_t jj = 0; jj < n_tok; ++jj) {
                const f16v vv = simd::load(vg + jj * dp + dc);
                o0 += simd::splat(s0[jj]) * vv;
                o1 += simd::splat(s1[jj]) * vv;
                o2 += simd::splat(s2[jj]) * vv;
                o3 += simd::splat(s3[jj]) * vv;
              }
              simd::store(out.data() + dc, o0);
              simd::store(out.data() + dp + dc, o1);
              simd::store(out.data() + 2 * dp + dc, o2);
              simd::store(out.data() + 3 * dp + dc, o3);
            } else {
              for (std::size_t qi = 0; qi < nq; ++qi) {
                f16v o{};
                for (std::size_t jj = 0; jj < n_tok; ++jj)
                  o += simd::splat(scores[qi * n_tok + jj]) * simd::load(vg + jj * dp + dc);
                simd::store(out.data() + qi * dp + dc, o);
              }
            }
          }
          for (std::size_t qi = 0; qi < nq; ++qi) {
            const float* srow = scores.data() + qi * n_tok;
            float sum;
            if (vec_keys > 0) {
              f16v sv = simd::load(srow);
              for (std::size_t jj = L; jj < vec_keys; jj += L) sv += simd::load(srow + jj);
              sum = simd::reduce_add(sv);
            } else {
              sum = 0.0f;
            }
            for (std::size_t jj = vec_keys; jj < n_tok; ++jj) sum += srow[jj];
            float* dst = mixed.data() + (win * n_tok + i0 + qi) * c + h * d;
            for (std::size_t e = 0; e < d; ++e) dst[e] = out[qi * dp + e] / sum;
          }
        }
      },
      4);
  return linear(mixed, lw.wo, lw.bo);
}

Tensor hiet_layer_forward(const Tensor& x, const LayerWeights& lw, std::size_t heads, std::size_t window) {
  if (x.rank() != 3) throw Error("hiet layer: input must be [C,H,W], got " + shape_string(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (window == 0 || h % window != 0 || w % window != 0)
    throw Error("hiet layer: window " + std::to_string(window) + " does not divide " + std::to_string(h) + "x" +
                std::to_string(w));
  Tensor t = window_partition(x, window);
  add_inplace(t, window_attention(layer_norm(t, lw.norm1_gamma, lw.norm1_beta), lw, heads, window));
  Tensor hidden = linear(layer_norm(t, lw.norm2_gamma, lw.norm2_beta), lw.fc1_w, lw.fc1_b);
  gelu_inplace(hidden);
  add_inplace(t, linear(hidden, lw.fc2_w, lw.fc2_b));
  return window_merge(t, c, h, w);
}

Tensor hiet_block_forward(const Tensor& x, const NetworkWeights& w, const NetworkConfig& cfg, std::size_t block) {
  Tensor y = x;
  for (std::size_t l = 0; l < cfg.window_sizes.size(); ++l)
    y = hiet_layer_forward(y, layer_weights(w, block, l), cfg.heads, cfg.window_sizes[l]);
  const std::string fuse = "blocks." + std::to_string(block) + ".fuse";
  Tensor out = conv2d(y, get(w, fuse + ".weight"), get(w, fuse + ".bias"), 1, 1);
  add_inplace(out, x);
  return out;
}

Tensor forward(const Tensor& input, const NetworkWeights& w, const NetworkConfig& cfg) {
  validate_weights_impl(w, cfg, false);
  const Shape expected{cfg.in_channels, cfg.input_size, cfg.input_size};
  if (input.shape() != expected)
    throw Error("network input has shape " + shape_string(input.shape()) + ", expected " + shape_string(expected));
  const Tensor head = conv2d(input, get(w, "head.weight"), get(w, "head.bias"), 1, 1);
  Tensor y = head;
  for (std::size_t b = 0; b < cfg.blocks; ++b) y = hiet_block_forward(y, w, cfg, b);
  Tensor body = conv2d(y, get(w, "body_end.weight"), get(w, "body_end.bias"), 1, 1);
  add_inplace(body, head);
  for (std::size_t s = 0; s < cfg.upsample_stages(); ++s) {
    const std::string p = "tail.up" + std::to_string(s);
    body = pixel_shuffle(conv2d(body, get(w, p + ".weight"), get(w, p + ".bias"), 1, 1), 2);
  }
  return conv2d(body, get(w, "tail.final.weight"), get(w, "tail.final.bias"), 1, 1);
}

}  // namespace vsrhe
