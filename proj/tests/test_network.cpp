#include <doctest.h>

#include <bit>
#include <boost/crc.hpp>
#include <cmath>
#include <cstring>

#include "helpers.hpp"
#include "vsrhe/error.hpp"
#include "vsrhe/parallel.hpp"

using namespace vsrhe;
using testutil::random_tensor;

namespace {

NetworkConfig degenerate_config() {
  NetworkConfig c;
  c.channel_dim = 1;
  c.blocks = 1;
  c.heads = 1;
  c.window_sizes = {2};
  c.input_size = 2;
  c.mlp_ratio = 1.0;
  c.scale = 4;
  return c;
}

NetworkWeights random_weights(const NetworkConfig& cfg, std::uint64_t seed, double sd) {
  Xoshiro256 rng(seed);
  NetworkWeights w;
  for (const auto& spec : parameter_specs(cfg)) w.emplace(spec.name, random_tensor(rng, spec.shape, sd));
  return w;
}

std::uint64_t fnv1a(const Tensor& t) {
  std::uint64_t h = 1469598103934665603ULL;
  for (float v : t.values()) {
    const auto bits = std::bit_cast<std::uint32_t>(v);
    for (int b = 0; b < 4; ++b) {
      h ^= (bits >> (8 * b)) & 0xffu;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

// Straightforward double-precision transformer layer on [C,H,W].
std::vector<double> layer_oracle(const Tensor& x, const LayerWeights& lw, std::size_t heads, std::size_t win) {
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2), d = c / heads, span = 2 * win - 1;
  const std::size_t hid = lw.fc1_w.dim(0), n = win * win;
  std::vector<double> out(x.size());
  auto ln = [&](const std::vector<double>& v, const Tensor& g, const Tensor& b) {
    double m = 0, var = 0;
    for (double a : v) m += a;
    m /= static_cast<double>(c);
    for (double a : v) var += (a - m) * (a - m);
    var /= static_cast<double>(c);
    std::vector<double> r(c);
    for (std::size_t i = 0; i < c; ++i) r[i] = (v[i] - m) / std::sqrt(var + 1e-5) * g[i] + b[i];
    return r;
  };
  auto dense = [](const std::vector<double>& v, const Tensor& W, const Tensor& b) {
    std::vector<double> r(W.dim(0));
    for (std::size_t o = 0; o < r.size(); ++o) {
      double acc = b[o];
      for (std::size_t i = 0; i < v.size(); ++i) acc += static_cast<double>(W[o * v.size() + i]) * v[i];
      r[o] = acc;
    }
    return r;
  };
  for (std::size_t wy = 0; wy < h / win; ++wy)
    for (std::size_t wx = 0; wx < w / win; ++wx) {
      std::vector<std::vector<double>> tok(n, std::vector<double>(c)), q(n), k(n), v(n);
      for (std::size_t t = 0; t < n; ++t) {
        for (std::size_t ch = 0; ch < c; ++ch) tok[t][ch] = x.at(ch, wy * win + t / win, wx * win + t % win);
        const auto z = ln(tok[t], lw.norm1_gamma, lw.norm1_beta);
        q[t] = dense(z, lw.wq, lw.bq);
        k[t] = dense(z, lw.wk, lw.bk);
        v[t] = dense(z, lw.wv, lw.bv);
      }
      for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> mixed(c, 0.0);
        for (std::size_t hd = 0; hd < heads; ++hd) {
          std::vector<double> s(n);
          double mx = -1e300;
          for (std::size_t j = 0; j < n; ++j) {
            double dot = 0;
            for (std::size_t e = 0; e < d; ++e) dot += q[i][hd * d + e] * k[j][hd * d + e];
            const std::size_t ry = i / win + win - 1 - j / win, rx = i % win + win - 1 - j % win;
            s[j] = dot / std::sqrt(static_cast<double>(d)) + lw.rel_bias[hd * span * span + ry * span + rx];
            mx = std::max(mx, s[j]);
          }
          double z = 0;
          for (auto& a : s) z += (a = std::exp(a - mx));
          for (std::size_t j = 0; j < n; ++j)
            for (std::size_t e = 0; e < d; ++e) mixed[hd * d + e] += s[j] / z * v[j][hd * d + e];
        }
        auto x1 = dense(mixed, lw.wo, lw.bo);
        for (std::size_t ch = 0; ch < c; ++ch) x1[ch] += tok[i][ch];
        auto hidden = dense(ln(x1, lw.norm2_gamma, lw.norm2_beta), lw.fc1_w, lw.fc1_b);
        REQUIRE(hidden.size() == hid);
        for (auto& a : hidden) a = 0.5 * a * (1.0 + std::erf(a / std::sqrt(2.0)));
        const auto y = dense(hidden, lw.fc2_w, lw.fc2_b);
        for (std::size_t ch = 0; ch < c; ++ch)
          out[(ch * h + wy * win + i / win) * w + wx * win + i % win] = x1[ch] + y[ch];
      }
    }
  return out;
}

std::vector<std::uint8_t> saved(const NetworkConfig& cfg, std::uint64_t seed) {
  return save_weights(init_random(cfg, seed), cfg);
}

void put_u32(std::vector<std::uint8_t>& b, std::size_t at, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b[at + i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint32_t get_u32(const std::vector<std::uint8_t>& b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

// Recompute the header CRC with an independent implementation.
void reseal(std::vector<std::uint8_t>& b) {
  const std::size_t end = 12 + get_u32(b, 8);
  boost::crc_32_type crc;
  crc.process_bytes(b.data(), end);
  put_u32(b, end, crc.checksum());
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("degenerate config parameter count matches hand enumeration") {
  const auto cfg = degenerate_config();
  // head conv 3->1: 27+1, layer: ln 2+2, q/k/v/o 4*(1+1), rel table 9,
  // fc1/fc2 2+2, fuse 10, body_end 10, two up stages 1->4: 36+4 each,
  // final 1->3: 27+3.
  CHECK(count_params(cfg) == 28 + 25 + 10 + 10 + 40 + 40 + 30);
  CHECK(count_params(cfg) == 183);
}

TEST_CASE("degenerate config FLOP count matches hand enumeration") {
  const auto cfg = degenerate_config();
  // 2x2 tokens: head 2*27*4, layer 4*(2*4) + 2*(2*4*4) + 2*4 + 2*4,
  // fuse and body_end 2*9*4 each, up0 2*9*4*4, up1 2*9*4*16, final 2*9*3*64.
  CHECK(count_flops(cfg) == 216 + 112 + 72 + 72 + 288 + 1152 + 3456);
}

TEST_CASE("default config complexity") {
  NetworkConfig cfg;
  CHECK(count_params(cfg) == 6502719);
  const double dev = (static_cast<double>(count_params(cfg)) / 1e6 - kReferenceParamsM) / kReferenceParamsM;
  CHECK(std::abs(dev) <= 0.25);
  CHECK(count_flops(cfg) > 0);
}

TEST_CASE("parameter count grows with blocks and channels") {
  NetworkConfig cfg = testutil::small_config();
  std::uint64_t prev = 0;
  for (std::size_t b = 1; b <= 4; ++b) {
    cfg.blocks = b;
    const auto p = count_params(cfg);
    CHECK(p > prev);
    prev = p;
  }
  cfg.blocks = 1;
  prev = 0;
  for (std::size_t c : {2, 4, 6, 12, 24}) {
    cfg.channel_dim = c;
    const auto p = count_params(cfg);
    CHECK(p > prev);
    prev = p;
  }
}

TEST_CASE("config validation") {
  NetworkConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = cfg;
  bad.heads = 5;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.window_sizes = {48};
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.scale = 3;
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = cfg;
  bad.window_sizes = {};
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("layer forward matches a double-precision oracle") {
  Xoshiro256 rng(11);
  struct Case {
    std::size_t c, heads, win, h, w;
  };
  for (Case cs : {Case{2, 1, 2, 2, 2}, Case{4, 2, 2, 4, 4}, Case{6, 3, 4, 8, 4}, Case{8, 2, 8, 8, 16}}) {
    NetworkConfig cfg;
    cfg.channel_dim = cs.c;
    cfg.heads = cs.heads;
    cfg.blocks = 1;
    cfg.window_sizes = {cs.win};
    cfg.input_size = std::max(cs.h, cs.w);
    const auto w = random_weights(cfg, 100 + cs.c, 0.5);
    const Tensor x = random_tensor(rng, {cs.c, cs.h, cs.w});
    const auto lw = layer_weights(w, 0, 0);
    const Tensor got = hiet_layer_forward(x, lw, cs.heads, cs.win);
    const auto want = layer_oracle(x, lw, cs.heads, cs.win);
    REQUIRE(got.shape() == x.shape());
    double worst = 0;
    for (std::size_t i = 0; i < want.size(); ++i)
      worst = std::max(worst, std::abs(got[i] - want[i]) / std::max(1.0, std::abs(want[i])));
    CAPTURE(cs.c);
    CHECK(worst < 1e-5);
  }
}

TEST_CASE("relative position bias shifts scores by key offset") {
  // With zero projections every key scores equally except through the table,
  // so the attention weights are softmax of the bias row and the output is
  // the bias-weighted mean of the value bias, i.e. the value bias itself.
  NetworkConfig cfg;
  cfg.channel_dim = 2;
  cfg.heads = 1;
  cfg.blocks = 1;
  cfg.window_sizes = {2};
  auto w = zero_weights(cfg);
  const std::string p = layer_prefix(0, 0);
  w.at(p + "attn.wv.bias")[0] = 3.0f;
  w.at(p + "attn.wv.bias")[1] = -1.0f;
  for (std::size_t i = 0; i < 2; ++i) w.at(p + "attn.wo.weight")[i * 2 + i] = 1.0f;
  Xoshiro256 rng(5);
  w.at(p + "attn.rel_bias") = random_tensor(rng, {1, 9}, 2.0);
  Tensor tokens = random_tensor(rng, {1, 4, 2});
  const Tensor out = window_attention(tokens, layer_weights(w, 0, 0), 1, 2);
  for (std::size_t t = 0; t < 4; ++t) {
    CHECK(out[t * 2] == doctest::Approx(3.0).epsilon(1e-6));
    CHECK(out[t * 2 + 1] == doctest::Approx(-1.0).epsilon(1e-6));
  }
}

TEST_CASE("zero weights make layers and blocks the identity") {
  const auto cfg = testutil::small_config(32);
  const auto w = zero_weights(cfg);
  Xoshiro256 rng(3);
  const Tensor x = random_tensor(rng, {cfg.channel_dim, 32, 32});
  for (std::size_t l = 0; l < cfg.window_sizes.size(); ++l)
    CHECK(bit_equal(hiet_layer_forward(x, layer_weights(w, 0, l), cfg.heads, cfg.window_sizes[l]), x));
  CHECK(bit_equal(hiet_block_forward(x, w, cfg, 0), x));
}

TEST_CASE("block is the layers followed by fusion conv plus the input") {
  const auto cfg = testutil::small_config(32);
  const auto w = random_weights(cfg, 21, 0.1);
  Xoshiro256 rng(4);
  const Tensor x = random_tensor(rng, {cfg.channel_dim, 32, 32});
  Tensor y = x;
  for (std::size_t l = 0; l < cfg.window_sizes.size(); ++l)
    y = hiet_layer_forward(y, layer_weights(w, 0, l), cfg.heads, cfg.window_sizes[l]);
  Tensor want = conv2d(y, w.at("blocks.0.fuse.weight"), w.at("blocks.0.fuse.bias"), 1, 1);
  add_inplace(want, x);
  CHECK(bit_equal(hiet_block_forward(x, w, cfg, 0), want));
}

TEST_CASE("layer rejects windows that do not divide the input") {
  const auto cfg = testutil::small_config(32);
  const auto w = zero_weights(cfg);
  Tensor x({cfg.channel_dim, 24, 24});
  CHECK_THROWS_AS(hiet_layer_forward(x, layer_weights(w, 0, 0), cfg.heads, 32), Error);
}

TEST_CASE("forward output shape and zero weights") {
  const auto cfg = testutil::small_config(64);
  Xoshiro256 rng(8);
  const Tensor x = testutil::uniform_tensor(rng, {3, 64, 64});
  const Tensor y = forward(x, zero_weights(cfg), cfg);
  CHECK(y.shape() == Shape{3, 256, 256});
  for (float v : y.values()) REQUIRE(v == 0.0f);
  CHECK_THROWS_AS(forward(Tensor({3, 32, 32}), zero_weights(cfg), cfg), Error);
  auto missing = zero_weights(cfg);
  missing.erase("body_end.bias");
  CHECK(error_of([&] { forward(x, missing, cfg); }).find("body_end.bias") != std::string::npos);
}

TEST_CASE("default config layers preserve shape") {
  NetworkConfig cfg;
  const auto w = init_random(cfg, 1);
  Xoshiro256 rng(2);
  const Tensor x = random_tensor(rng, {cfg.channel_dim, 64, 64});
  for (std::size_t l = 0; l < cfg.window_sizes.size(); ++l) {
    const Tensor y = hiet_layer_forward(x, layer_weights(w, 0, l), cfg.heads, cfg.window_sizes[l]);
    CHECK(y.shape() == x.shape());
  }
}

TEST_CASE("forward is bit-identical across thread counts and pinned") {
  const auto cfg = testutil::small_config(64);
  const auto w = testutil::live_weights(cfg, 7);
  Xoshiro256 rng(9);
  const Tensor x = testutil::uniform_tensor(rng, {3, 64, 64});
  const auto saved_threads = num_threads();
  set_num_threads(1);
  const Tensor a = forward(x, w, cfg);
  set_num_threads(4);
  const Tensor b = forward(x, w, cfg);
  set_num_threads(saved_threads);
  CHECK(bit_equal(a, b));
  // Golden value recorded from this build; any kernel reordering changes it.
  CHECK(fnv1a(a) == 13881386857412621630ULL);
  bool any_nonconstant = false;
  for (std::size_t i = 1; i < a.size(); ++i) any_nonconstant |= a[i] != a[0];
  CHECK(any_nonconstant);
}

TEST_CASE("init_random statistics and seeding") {
  NetworkConfig cfg = testutil::small_config();
  const auto a = init_random(cfg, 42), b = init_random(cfg, 42), c = init_random(cfg, 43);
  double sum = 0, sq = 0;
  std::size_t n = 0;
  bool differ = false;
  for (const auto& [name, t] : a) {
    CHECK(bit_equal(t, b.at(name)));
    if (!bit_equal(t, c.at(name))) differ = true;
    const bool random = name.find(".bias") == std::string::npos && name.find("norm") == std::string::npos &&
                        name != "tail.final.weight";
    if (name.ends_with(".gamma"))
      for (float v : t.values()) CHECK(v == 1.0f);
    if (!random) continue;
    for (float v : t.values()) {
      sum += v;
      sq += static_cast<double>(v) * v;
      ++n;
    }
  }
  CHECK(differ);
  const double mean = sum / static_cast<double>(n);
  const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
  CHECK(sd >= 0.018);
  CHECK(sd <= 0.022);
  CHECK(std::abs(mean) < 0.002);
  for (float v : a.at("tail.final.weight").values()) CHECK(v == 0.0f);
}

TEST_CASE("window order matters when tokens are permuted across windows") {
  // Moving a window's content elsewhere moves its output with it, but mixing
  // tokens between windows does not commute with the layer.
  NetworkConfig cfg;
  cfg.channel_dim = 4;
  cfg.heads = 2;
  cfg.blocks = 1;
  cfg.window_sizes = {2};
  auto w = random_weights(cfg, 31, 0.5);
  const auto lw = layer_weights(w, 0, 0);
  Xoshiro256 rng(12);
  const Tensor x = random_tensor(rng, {4, 4, 4});
  const Tensor y = hiet_layer_forward(x, lw, 2, 2);

  // Swap the top-left and bottom-right windows.
  auto swap_windows = [](const Tensor& t) {
    Tensor s = t;
    for (std::size_t c = 0; c < 4; ++c)
      for (std::size_t dy = 0; dy < 2; ++dy)
        for (std::size_t dx = 0; dx < 2; ++dx) std::swap(s.at(c, dy, dx), s.at(c, 2 + dy, 2 + dx));
    return s;
  };
  CHECK(bit_equal(hiet_layer_forward(swap_windows(x), lw, 2, 2), swap_windows(y)));

  // Shift by one pixel: windows now straddle different content.
  Tensor shifted = x;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t yy = 0; yy < 4; ++yy)
      for (std::size_t xx = 0; xx < 4; ++xx) shifted.at(c, yy, xx) = x.at(c, yy, (xx + 1) % 4);
  const Tensor ys = hiet_layer_forward(shifted, lw, 2, 2);
  double diff = 0;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t yy = 0; yy < 4; ++yy)
      for (std::size_t xx = 0; xx < 4; ++xx) diff += std::abs(ys.at(c, yy, xx) - y.at(c, yy, (xx + 1) % 4));
  CHECK(diff > 1e-3);
}

TEST_CASE("weight files round trip across random configs") {
  Xoshiro256 rng(2024);
  for (int trial = 0; trial < 100; ++trial) {
    NetworkConfig cfg;
    cfg.heads = 1 + rng.uniform_below(3);
    cfg.channel_dim = cfg.heads * (1 + rng.uniform_below(4));
    cfg.blocks = 1 + rng.uniform_below(2);
    cfg.input_size = 8;
    cfg.window_sizes.clear();
    const std::size_t layers = 1 + rng.uniform_below(3);
    for (std::size_t l = 0; l < layers; ++l) cfg.window_sizes.push_back(std::size_t{1} << rng.uniform_below(4));
    cfg.scale = std::size_t{1} << (1 + rng.uniform_below(2));
    cfg.mlp_ratio = 0.5 + 0.5 * static_cast<double>(rng.uniform_below(4));
    const auto w = random_weights(cfg, rng.next(), 1.0);
    const auto bytes = save_weights(w, cfg);
    const auto file = read_weight_file(bytes);
    CAPTURE(trial);
    REQUIRE(file.config == cfg);
    REQUIRE(file.weights.size() == w.size());
    for (const auto& [name, t] : w) REQUIRE(bit_equal(file.weights.at(name), t));
    CHECK(save_weights(file.weights, file.config) == bytes);
    CHECK(!file.note.empty());
  }
}

TEST_CASE("weight file directory is contiguous and in canonical order") {
  const auto cfg = degenerate_config();
  const auto bytes = saved(cfg, 1);
  const auto dir = read_tensor_directory(bytes);
  const auto specs = parameter_specs(cfg);
  REQUIRE(dir.size() == specs.size());
  std::uint64_t off = 0;
  for (std::size_t i = 0; i < dir.size(); ++i) {
    CHECK(dir[i].name == specs[i].name);
    CHECK(dir[i].shape == specs[i].shape);
    CHECK(dir[i].offset == off);
    off += shape_volume(dir[i].shape) * 4;
  }
  const std::size_t header_end = 12 + get_u32(bytes, 8);
  CHECK(bytes.size() == header_end + 64 + off);
  CHECK(std::memcmp(bytes.data(), "VSRHEW01", 8) == 0);
}

TEST_CASE("weight file errors") {
  const auto cfg = degenerate_config();
  const auto good = saved(cfg, 1);

  SUBCASE("truncated payload") {
    auto b = good;
    b.resize(b.size() - 4);
    CHECK(error_of([&] { read_weight_file(b); }).find("truncated") != std::string::npos);
  }
  SUBCASE("truncated header") {
    std::vector<std::uint8_t> b(good.begin(), good.begin() + 40);
    CHECK(error_of([&] { read_weight_file(b); }).find("truncated") != std::string::npos);
  }
  SUBCASE("bad magic") {
    auto b = good;
    b[0] = 'X';
    CHECK(error_of([&] { read_weight_file(b); }).find("magic") != std::string::npos);
  }
  SUBCASE("unsupported version") {
    auto b = good;
    b[7] = '2';
    CHECK(error_of([&] { read_weight_file(b); }).find("version") != std::string::npos);
  }
  SUBCASE("checksum mismatch") {
    auto b = good;
    b[14] ^= 1;
    CHECK(error_of([&] { read_weight_file(b); }).find("checksum") != std::string::npos);
  }
  SUBCASE("trailing bytes") {
    auto b = good;
    b.push_back(0);
    CHECK(error_of([&] { read_weight_file(b); }).find("trailing") != std::string::npos);
  }
  SUBCASE("config mismatch names the tensor") {
    auto other = cfg;
    other.channel_dim = 2;
    const auto msg = error_of([&] { load_weights(good, other); });
    CHECK(msg.find("head.weight") != std::string::npos);
  }
  SUBCASE("resealed header with a wrong shape is rejected") {
    // channel_dim is the third u32 of the header record.
    auto b = good;
    put_u32(b, 12 + 8, 2);
    reseal(b);
    CHECK_THROWS_AS(read_weight_file(b), Error);
  }
  SUBCASE("independent CRC agrees with the stored one") {
    auto b = good;
    reseal(b);
    CHECK(b == good);
  }
  SUBCASE("non-finite values are rejected") {
    auto w = init_random(cfg, 1);
    w.at("head.bias")[0] = std::nanf("");
    CHECK(error_of([&] { save_weights(w, cfg); }).find("head.bias") != std::string::npos);
  }
}
