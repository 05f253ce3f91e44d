#include "vsrhe/selftest.hpp"

#include <cmath>
#include <functional>
#include <sstream>

#include "vsrhe/dataprep.hpp"
#include "vsrhe/frame.hpp"
#include "vsrhe/gradcheck.hpp"
#include "vsrhe/loss.hpp"
#include "vsrhe/metrics.hpp"
#include "vsrhe/network.hpp"
#include "vsrhe/pipeline.hpp"
#include "vsrhe/resample.hpp"
#include "vsrhe/rng.hpp"

namespace vsrhe {
namespace {

struct Check {
  std::string name;
  std::function<std::string()> body;  // empty string means pass
};

Frame random_frame(Xoshiro256& rng, int w, int h, Subsampling s) {
  Frame f(w, h, s);
  for (auto& plane : f.planes)
    for (auto& v : plane) v = static_cast<std::uint8_t>(rng.uniform_below(256));
  return f;
}

Tensor random_tensor(Xoshiro256& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<float>(rng.normal(0.0, 1.0));
  return t;
}

std::string near(double got, double want, double tol) {
  if (std::abs(got - want) <= tol) return {};
  std::ostringstream s;
  s.precision(12);
  s << "got " << got << ", want " << want << " +- " << tol;
  return s.str();
}

NetworkConfig tiny_config() {
  NetworkConfig c;
  c.channel_dim = 8;
  c.blocks = 1;
  c.window_sizes = {4, 2};
  c.heads = 2;
  c.input_size = 8;
  return c;
}

class ReplicateModel : public SrModel {
 public:
  std::size_t input_size() const override { return 8; }
  std::size_t scale() const override { return 4; }
  bool accepts_tile(std::size_t) const override { return true; }
  Tensor forward(const Tensor& t) const override {
    Tensor out({3, t.dim(1) * 4, t.dim(2) * 4});
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t y = 0; y < out.dim(1); ++y)
        for (std::size_t x = 0; x < out.dim(2); ++x) out.at(c, y, x) = t.at(c, y / 4, x / 4);
    return out;
  }
};

std::vector<Check> checks() {
  return {
      {"conv2d matches direct summation",
       [] {
         Xoshiro256 rng(1);
         const Tensor x = random_tensor(rng, {2, 5, 6}), k = random_tensor(rng, {3, 2, 3, 3}),
                      b = random_tensor(rng, {3});
         const Tensor y = conv2d(x, k, b, 1, 1);
         for (std::size_t o = 0; o < 3; ++o)
           for (std::size_t i = 0; i < 5; ++i)
             for (std::size_t j = 0; j < 6; ++j) {
               double acc = b[o];
               for (std::size_t c = 0; c < 2; ++c)
                 for (int u = 0; u < 3; ++u)
                   for (int v = 0; v < 3; ++v) {
                     const int yy = static_cast<int>(i) + u - 1, xx = static_cast<int>(j) + v - 1;
                     if (yy < 0 || xx < 0 || yy >= 5 || xx >= 6) continue;
                     acc += static_cast<double>(x.at(c, yy, xx)) * k[((o * 2 + c) * 3 + u) * 3 + v];
                   }
               if (auto e = near(y.at(o, i, j), acc, 1e-5); !e.empty()) return e;
             }
         return std::string{};
       }},
      {"softmax rows sum to one",
       [] {
         Xoshiro256 rng(2);
         const Tensor s = softmax(random_tensor(rng, {4, 7}), 1);
         for (std::size_t r = 0; r < 4; ++r) {
           double sum = 0;
           for (std::size_t c = 0; c < 7; ++c) sum += s[r * 7 + c];
           if (auto e = near(sum, 1.0, 1e-6); !e.empty()) return e;
         }
         return std::string{};
       }},
      {"Y4M write/parse round trip",
       [] {
         Xoshiro256 rng(3);
         VideoSequence seq;
         seq.frame_rate = Rational{30000, 1001};
         for (int i = 0; i < 3; ++i) seq.frames.push_back(random_frame(rng, 10, 6, Subsampling::C420));
         return parse_y4m(write_y4m(seq)).frames == seq.frames ? std::string{} : "frames differ";
       }},
      {"chroma downsample after upsample is the identity",
       [] {
         Xoshiro256 rng(4);
         const Frame f = random_frame(rng, 12, 8, Subsampling::C420);
         return chroma_downsample_mean(chroma_upsample_nn(f)) == f ? std::string{} : "frame changed";
       }},
      {"weight file round trip",
       [] {
         const auto cfg = tiny_config();
         const auto w = init_random(cfg, 7);
         const auto back = load_weights(save_weights(w, cfg), cfg);
         for (const auto& [name, t] : w)
           if (!bit_equal(t, back.at(name))) return "tensor " + name + " changed";
         return std::string{};
       }},
      {"zero-weight block is the identity",
       [] {
         const auto cfg = tiny_config();
         Xoshiro256 rng(5);
         const Tensor x = random_tensor(rng, {cfg.channel_dim, 8, 8});
         return bit_equal(hiet_block_forward(x, zero_weights(cfg), cfg, 0), x) ? std::string{} : "block changed input";
       }},
      {"forward output shape",
       [] {
         const auto cfg = tiny_config();
         const Tensor y = forward(Tensor({3, 8, 8}, 0.5f), init_random(cfg, 1), cfg);
         return y.shape() == Shape{3, 32, 32} ? std::string{} : "got " + shape_string(y.shape());
       }},
      {"PSNR of constant 100 vs 110",
       [] {
         const std::vector<std::uint8_t> a(64, 100), b(64, 110);
         return near(psnr(a, b), 10.0 * std::log10(65025.0 / 100.0), 1e-9);
       }},
      {"SSIM of constant 100 vs 110",
       [] {
         const ImageD a{16, 16, std::vector<double>(256, 100.0)}, b{16, 16, std::vector<double>(256, 110.0)};
         return near(ssim(a, b), (2.0 * 100 * 110 + 6.5025) / (100.0 * 100 + 110.0 * 110 + 6.5025), 1e-12);
       }},
      {"perceptual loss vanishes at equality",
       [] {
         Xoshiro256 rng(6);
         Tensor t({3, 176, 176});
         for (auto& v : t.values()) v = static_cast<float>(rng.uniform01());
         return near(perceptual_loss(t, t).total, 0.0, 0.0);
       }},
      {"finite differences of a sum of squares",
       [] {
         const std::vector<std::size_t> idx{0, 1};
         const auto g = fd_gradient([](const std::vector<double>& x) { return x[0] * x[0] + x[1] * x[1]; }, {1.0, 2.0},
                                    1e-4, idx);
         if (auto e = near(g[0], 2.0, 1e-6); !e.empty()) return e;
         return near(g[1], 4.0, 1e-6);
       }},
      {"learning-rate schedule",
       [] {
         const std::pair<std::uint64_t, double> cases[] = {
             {0, 1e-4}, {50000, 5e-5}, {150000, 2.5e-5}, {250000, 1.25e-5}, {300000, 6.25e-6}};
         for (auto [it, lr] : cases)
           if (lr_schedule(it) != lr) return "iteration " + std::to_string(it);
         return std::string{};
       }},
      {"augmentation composed with its inverse is the identity",
       [] {
         Xoshiro256 rng(8);
         Frame f = random_frame(rng, 6, 6, Subsampling::C444);
         for (int k = 0; k < 4; ++k)
           for (int h = 0; h < 2; ++h)
             for (int v = 0; v < 2; ++v) {
               const Augmentation a{k, h == 1, v == 1};
               if (transform_patch(transform_patch(f, a), inverse(a)) != f) return "failed for k=" + std::to_string(k);
             }
         return std::string{};
       }},
      {"tiled replication equals untiled replication",
       [] {
         Xoshiro256 rng(9);
         const Frame f = random_frame(rng, 20, 14, Subsampling::C420);
         const ReplicateModel m;
         const TilePlan whole = plan_tiles(20, 14, 20, 0), tiled = plan_tiles(20, 14, 8, 2);
         return upscale_frame(f, m, &whole) == upscale_frame(f, m, &tiled) ? std::string{} : "outputs differ";
       }},
      {"resampling preserves constants",
       [] {
         PlaneF p{9, 7, std::vector<float>(63, 0.3f)};
         for (const auto& k : {KernelSpec::bicubic(), KernelSpec::lanczos()}) {
           const auto out = resample_plane(p, 31, 5, k);
           for (float v : out.data)
             if (auto e = near(v, 0.3, 1e-6); !e.empty()) return e;
         }
         return std::string{};
       }},
  };
}

}  // namespace

std::vector<SelftestResult> run_selftest() {
  std::vector<SelftestResult> out;
  for (const auto& c : checks()) {
    SelftestResult r{c.name, false, {}};
    try {
      r.detail = c.body();
      r.passed = r.detail.empty();
    } catch (const std::exception& e) {
      r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace vsrhe
