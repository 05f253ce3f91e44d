// Acceptance gate: one PASS/FAIL line per criterion, non-zero exit on any
// failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "helpers.hpp"
#include "oracles.hpp"
#include "vsrhe/cli.hpp"
#include "vsrhe/dataprep.hpp"
#include "vsrhe/fileio.hpp"
#include "vsrhe/gradcheck.hpp"
#include "vsrhe/loss.hpp"
#include "vsrhe/resample.hpp"

using namespace vsrhe;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      out.pass = false;
      if (!out.detail.empty()) out.detail += "; ";
      out.detail += what;
    }
  }
  void note(const std::string& s) { notes += (notes.empty() ? "" : "; ") + s; }
  Outcome out;
  std::string notes;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int run_cli_quiet(const std::vector<std::string>& args, std::string* out_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (code != 0) std::cerr << "  cli " << args.front() << " failed: " << err.str();
  return code;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) parts.push_back(item);
  return parts;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(' '), e = s.find_last_not_of(' ');
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

void write_weights(const std::filesystem::path& path, const NetworkConfig& cfg, std::uint64_t seed) {
  const auto bytes = save_weights(testutil::live_weights(cfg, seed), cfg);
  write_file_atomic(path, bytes);
}

// 1
void loss_fidelity(Checker& c) {
  const LossWeights w;
  c.expect(w.w_l1 == 0.3 && w.w_ssim == 0.2 && w.w_l2 == 0.1 && w.w_msssim == 0.4, "loss coefficients");
  c.expect(w.w_gan == 0.05, "adversarial coefficient");
  c.expect(total_loss(0.5, 1.0) == 0.5 + 0.05 * 1.0, "total_loss(0.5, 1)");
  Xoshiro256 rng(1);
  const Tensor t = testutil::uniform_tensor(rng, {3, 176, 176});
  const auto b = perceptual_loss(t, t);
  c.expect(b.total == 0.0, "loss at equality is " + fmt("%.3g", b.total));
  c.note("weights (0.3, 0.2, 0.1, 0.4), gan 0.05, L(a,a)=" + fmt("%g", b.total));
}

// 2
void gradient_check(Checker& c) {
  Xoshiro256 rng(2);
  const std::size_t h = 176, w = 176, n = 3 * h * w;
  std::vector<double> target(n), pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = 0.1 + 0.8 * rng.uniform01();
    // |delta| >= 0.01 keeps the L1 kink outside the +-h stencil.
    pred[i] = target[i] + (rng.uniform01() < 0.5 ? -1 : 1) * (0.01 + 0.09 * rng.uniform01());
  }
  const auto g = perceptual_loss_grad_f64(pred, target, h, w);
  const auto coords = sample_coordinates(n, 200, 3);
  const auto fd = fd_gradient([&](const std::vector<double>& x) { return perceptual_loss_f64(x, target, h, w).total; },
                              pred, 1e-3, coords);
  std::vector<double> an;
  for (auto i : coords) an.push_back(g[i]);
  const auto cmp = compare_gradients(an, fd);
  c.expect(cmp.max_rel_error < 1e-4, "max relative error " + fmt("%.3g", cmp.max_rel_error));
  c.note("200 coordinates, max rel err " + fmt("%.3g", cmp.max_rel_error));
}

// 3
void metric_oracles(Checker& c) {
  Xoshiro256 rng(3);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    Frame a = testutil::random_frame(rng, 256, 256, Subsampling::C420);
    // Smooth content plus distortion so every metric sits in a meaningful range.
    for (int y = 0; y < 256; ++y)
      for (int x = 0; x < 256; ++x)
        a.sample(0, x, y) = static_cast<std::uint8_t>(std::clamp(
            128 + 70 * std::sin(0.05 * x + t) * std::cos(0.04 * y) + rng.normal(0, 15), 0.0, 255.0));
    Frame b = a;
    for (auto& v : b.planes[0]) v = static_cast<std::uint8_t>(std::clamp(v + rng.normal(0, 6 + t), 0.0, 255.0));
    const auto ia = ImageD::from_plane(a.planes[0], 256, 256), ib = ImageD::from_plane(b.planes[0], 256, 256);
    worst = std::max(worst, std::abs(psnr_y(a, b) - oracle::psnr(a.planes[0], b.planes[0])));
    worst = std::max(worst, std::abs(ssim_y(a, b) - oracle::ssim(ia, ib)));
    worst = std::max(worst, std::abs(ms_ssim_y(a, b) - oracle::ms_ssim(ia, ib)));
  }
  c.expect(worst < 1e-6, "oracle deviation " + fmt("%.3g", worst));
  const ImageD k100{32, 32, std::vector<double>(32 * 32, 100.0)}, k110{32, 32, std::vector<double>(32 * 32, 110.0)};
  const double s = ssim(k100, k110);
  c.expect(std::abs(s - 0.99548) < 1e-5, "constant SSIM " + fmt("%.6f", s));
  c.note("20 pairs, worst |diff| " + fmt("%.3g", worst) + ", constant SSIM " + fmt("%.6f", s));
}

// 4
void shape_law(Checker& c) {
  const NetworkConfig cfg;
  const auto w = init_random(cfg, 4);
  Xoshiro256 rng(4);
  const Tensor x = testutil::uniform_tensor(rng, {3, 64, 64});
  const auto t0 = std::chrono::steady_clock::now();
  const Tensor y = forward(x, w, cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  c.expect(y.shape() == Shape{3, 256, 256}, "output shape " + shape_string(y.shape()));
  c.expect(secs < 30.0, "forward took " + fmt("%.1f s", secs));

  const auto zero = zero_weights(cfg);
  const Tensor h = testutil::random_tensor(rng, {cfg.channel_dim, 64, 64});
  bool identity = true;
  for (std::size_t b = 0; b < cfg.blocks; ++b) {
    for (std::size_t l = 0; l < cfg.window_sizes.size(); ++l)
      identity &= bit_equal(hiet_layer_forward(h, layer_weights(zero, b, l), cfg.heads, cfg.window_sizes[l]), h);
    identity &= bit_equal(hiet_block_forward(h, zero, cfg, b), h);
  }
  c.expect(identity, "zero-weight residual unit is not the identity");
  c.note("3x64x64 -> " + shape_string(y.shape()) + " in " + fmt("%.1f s", secs) + ", 36 residual units checked");
}

// 5
void determinism(Checker& c, const std::filesystem::path& dir) {
  Xoshiro256 rng(5);
  save_video(dir / "det_in.y4m", testutil::random_sequence(rng, 320, 180, 10));
  const auto cfg = testutil::small_config(64);
  write_weights(dir / "det_w.bin", cfg, 5);
  for (const char* threads : {"1", "8"})
    c.expect(run_cli_quiet({"--threads", threads, "upscale", "--quiet", "--in", (dir / "det_in.y4m").string(),
                            "--weights", (dir / "det_w.bin").string(), "--out",
                            (dir / (std::string("det_t") + threads + ".y4m")).string()}) == 0,
             std::string("upscale with ") + threads + " threads failed");
  if (!c.out.pass) return;
  const auto a = read_file(dir / "det_t1.y4m"), b = read_file(dir / "det_t8.y4m");
  c.expect(a == b, "outputs differ");
  c.note("10 frames 320x180, " + std::to_string(a.size()) + " bytes identical (C=12 B=1 network)");
}

// 6
void tiling(Checker& c) {
  Xoshiro256 rng(6);
  const Frame f = testutil::random_frame(rng, 320, 180, Subsampling::C420);
  const testutil::ReplicateStub stub;
  const auto whole = plan_tiles(320, 180, 320, 0);
  const Frame ref = upscale_frame(f, stub, &whole);
  for (int overlap : {0, 8}) {
    const auto plan = plan_tiles(320, 180, 64, overlap);
    c.expect(upscale_frame(f, stub, &plan) == ref, "overlap " + std::to_string(overlap) + " differs from untiled");
  }
  double worst = 0;
  const auto plan = plan_tiles(320, 180, 64, 8);
  const auto bx = axis_blend_weights(plan.xs, 64, 8, 4), by = axis_blend_weights(plan.ys, 64, 8, 4);
  std::vector<double> sum(1280 * 720, 0.0);
  for (std::size_t j = 0; j < plan.ys.size(); ++j)
    for (std::size_t i = 0; i < plan.xs.size(); ++i)
      for (int y = 0; y < 256; ++y)
        for (int x = 0; x < 256; ++x) sum[(plan.ys[j] * 4 + y) * 1280 + plan.xs[i] * 4 + x] += by[j][y] * bx[i][x];
  for (double s : sum) worst = std::max(worst, std::abs(s - 1.0));
  c.expect(worst < 1e-6, "blend sum deviation " + fmt("%.3g", worst));
  c.note("overlap 0/8 == untiled; max |sum w - 1| = " + fmt("%.3g", worst));
}

// 7
void geometry(Checker& c, const std::filesystem::path& dir) {
  const auto cfg = testutil::small_config(64);
  write_weights(dir / "geo_w.bin", cfg, 7);
  Xoshiro256 rng(7);
  for (auto [w, h, ow, oh] : {std::tuple{320, 180, 1280, 720}, std::tuple{480, 270, 1920, 1080}}) {
    const auto in = dir / ("geo_" + std::to_string(h) + ".y4m"), out = dir / ("geo_" + std::to_string(h) + "_sr.y4m");
    save_video(in, testutil::random_sequence(rng, w, h, 1));
    if (run_cli_quiet({"upscale", "--quiet", "--in", in.string(), "--weights", (dir / "geo_w.bin").string(), "--out",
                       out.string()}) != 0) {
      c.expect(false, "upscale failed for " + std::to_string(w) + "x" + std::to_string(h));
      continue;
    }
    const auto seq = load_video(out);
    c.expect(seq.frames.size() == 1 && seq.frames[0].width == ow && seq.frames[0].height == oh &&
                 seq.frames[0].subsampling == Subsampling::C420,
             "wrong output geometry for " + std::to_string(w) + "x" + std::to_string(h));
  }
  c.note("320x180 -> 1280x720, 480x270 -> 1920x1080 via upscale");
}

// 8
void schedule(Checker& c) {
  const std::pair<std::uint64_t, double> want[] = {
      {0, 1e-4}, {50000, 5e-5}, {150000, 2.5e-5}, {250000, 1.25e-5}, {300000, 6.25e-6}};
  for (auto [it, v] : want) c.expect(lr_schedule(it) == v, "iteration " + std::to_string(it));
  c.note("1e-4 / 5e-5 / 2.5e-5 / 1.25e-5 / 6.25e-6");
}

// 9
void round_trips(Checker& c) {
  Xoshiro256 rng(9);
  int y4m = 0, weights = 0, manifests = 0, chroma = 0;
  for (int t = 0; t < 100; ++t) {
    const int w = 2 * (1 + static_cast<int>(rng.uniform_below(20))), h = 2 * (1 + static_cast<int>(rng.uniform_below(20)));
    auto seq = testutil::random_sequence(rng, w, h, 1 + rng.uniform_below(3),
                                         rng.uniform_below(2) ? Subsampling::C420 : Subsampling::C444);
    seq.frame_rate = Rational{static_cast<std::int64_t>(1 + rng.uniform_below(60000)), 1001};
    if (rng.uniform_below(2)) seq.metadata = {{"I", "p"}, {"A", "1:1"}};
    if (seq.frames[0].subsampling == Subsampling::C420) seq.metadata.push_back({"C", "420jpeg"});
    else seq.metadata.push_back({"C", "444"});
    const auto bytes = write_y4m(seq);
    if (parse_y4m(bytes) == seq && write_y4m(parse_y4m(bytes)) == bytes) ++y4m;

    NetworkConfig cfg;
    cfg.heads = 1 + rng.uniform_below(2);
    cfg.channel_dim = cfg.heads * (1 + rng.uniform_below(3));
    cfg.blocks = 1 + rng.uniform_below(2);
    cfg.input_size = 8;
    cfg.window_sizes = {std::size_t{1} << rng.uniform_below(4), std::size_t{1} << rng.uniform_below(4)};
    cfg.scale = std::size_t{2} << rng.uniform_below(2);
    NetworkWeights wts;
    for (const auto& spec : parameter_specs(cfg)) wts.emplace(spec.name, testutil::random_tensor(rng, spec.shape));
    const auto loaded = load_weights(save_weights(wts, cfg), cfg);
    bool same = loaded.size() == wts.size();
    for (const auto& [name, tensor] : wts) same = same && bit_equal(loaded.at(name), tensor);
    if (same) ++weights;

    Manifest m;
    m.seed = rng.next();
    m.requested = rng.uniform_below(100);
    m.qp_list = {static_cast<int>(rng.uniform_below(52))};
    const auto lr = testutil::random_sequence(rng, 64 + 2 * static_cast<int>(rng.uniform_below(4)), 64, 1);
    const auto hr = testutil::random_sequence(rng, lr.frames[0].width * 4, 256, 1);
    if (rng.uniform_below(4) != 0)
      m.pairs = extract_patch_pairs(lr, hr, 1 + rng.uniform_below(2), rng.next(), m.qp_list[0], "s" + std::to_string(t),
                                    true);
    const auto enc = encode_manifest(m, "r.pak");
    if (decode_manifest(enc.jsonl, enc.pak) == m) ++manifests;

    const Frame f = testutil::random_frame(rng, w, h, Subsampling::C420);
    if (chroma_downsample_mean(chroma_upsample_nn(f)) == f) ++chroma;
  }
  c.expect(y4m == 100, "Y4M " + std::to_string(y4m) + "/100");
  c.expect(weights == 100, "weights " + std::to_string(weights) + "/100");
  c.expect(manifests == 100, "manifest " + std::to_string(manifests) + "/100");
  c.expect(chroma == 100, "chroma " + std::to_string(chroma) + "/100");
  c.note("Y4M, weights, manifest, chroma: 100/100 each");
}

// 10
void complexity(Checker& c) {
  NetworkConfig deg;
  deg.channel_dim = 1;
  deg.blocks = 1;
  deg.heads = 1;
  deg.window_sizes = {2};
  deg.input_size = 2;
  deg.mlp_ratio = 1.0;
  // head 28, layer 25, fuse 10, body_end 10, two up stages 40 each, final 30.
  c.expect(count_params(deg) == 183, "degenerate count " + std::to_string(count_params(deg)));
  const NetworkConfig cfg;
  const double params = static_cast<double>(count_params(cfg)), flops = static_cast<double>(count_flops(cfg));
  const double pdev = (params / 1e6 - kReferenceParamsM) / kReferenceParamsM;
  const double fdev = (flops / 1e9 - kReferenceFlopsG) / kReferenceFlopsG;
  c.expect(std::abs(pdev) <= 0.25, "parameter deviation " + fmt("%+.2f%%", 100 * pdev));
  c.note("degenerate 183; params " + fmt("%.0f", params) + " (" + fmt("%+.2f%%", 100 * pdev) + " vs 5.43M); FLOPs " +
         fmt("%.2fG", flops / 1e9) + " (" + fmt("%+.2f%%", 100 * fdev) + " vs 455.16G, reported only)");
}

// 11
void resampler(Checker& c) {
  Xoshiro256 rng(11);
  double worst_const = 0, worst_ramp = 0, worst_sum = 0;
  for (const auto& k : {KernelSpec::bicubic(), KernelSpec::lanczos(), KernelSpec::nearest()})
    for (int t = 0; t < 20; ++t) {
      const float v = static_cast<float>(rng.uniform01());
      const int w = 1 + static_cast<int>(rng.uniform_below(64)), h = 1 + static_cast<int>(rng.uniform_below(64));
      const int ow = 1 + static_cast<int>(rng.uniform_below(128)), oh = 1 + static_cast<int>(rng.uniform_below(128));
      const PlaneF p{w, h, std::vector<float>(static_cast<std::size_t>(w) * h, v)};
      for (float o : resample_plane(p, ow, oh, k).data) worst_const = std::max(worst_const, std::abs(double(o) - v));
      for (const auto& taps : {compute_taps(w, ow, k), compute_taps(h, oh, k)})
        for (const auto& tap : taps) {
          double s = 0;
          for (float x : tap.weight) s += x;
          worst_sum = std::max(worst_sum, std::abs(s - 1.0));
        }
    }
  for (int factor : {2, 3, 4}) {
    const int w = 32;
    PlaneF p{w, 1, {}};
    for (int x = 0; x < w; ++x) p.data.push_back(0.2f + 0.01f * static_cast<float>(x));
    const auto out = resample_plane(p, w * factor, 1, KernelSpec::bicubic(-0.5));
    for (int x = 0; x < w * factor; ++x) {
      const double src = (x + 0.5) / factor - 0.5;
      if (src < 2.0 || src > w - 3.0) continue;
      worst_ramp = std::max(worst_ramp, std::abs(out.data[x] - (0.2 + 0.01 * src)));
    }
  }
  c.expect(worst_const < 1e-6, "constant deviation " + fmt("%.3g", worst_const));
  c.expect(worst_ramp < 1e-6, "ramp deviation " + fmt("%.3g", worst_ramp));
  c.expect(worst_sum < 1e-6, "tap sum deviation " + fmt("%.3g", worst_sum));
  c.note("const " + fmt("%.2g", worst_const) + ", ramp " + fmt("%.2g", worst_ramp) + ", sum " +
         fmt("%.2g", worst_sum));
}

// 12
void bench_report(Checker& c, const std::filesystem::path& dir) {
  Xoshiro256 rng(12);
  save_video(dir / "bench_ref.y4m", testutil::random_sequence(rng, 256, 192, 3));
  NetworkConfig cfg = testutil::small_config(32);
  cfg.window_sizes = {16, 8};
  write_weights(dir / "bench_w.bin", cfg, 12);
  {
    std::ofstream v(dir / "bench_vmaf.csv");
    v << "frame,vmaf\n0,61.25\n1,62.5\n2,64\n";
  }
  std::string table;
  const int code = run_cli_quiet({"bench", "--quiet", "--ref", (dir / "bench_ref.y4m").string(), "--methods",
                                  "bicubic,lanczos,nearest,network", "--weights", (dir / "bench_w.bin").string(),
                                  "--vmaf-csv", "bicubic=" + (dir / "bench_vmaf.csv").string()},
                                 &table);
  c.expect(code == 0, "bench exited with " + std::to_string(code));
  if (code != 0) return;
  std::istringstream lines(table);
  std::string line;
  bool header = false;
  std::map<std::string, std::vector<std::vector<double>>> frames;
  std::map<std::string, std::vector<double>> means;
  std::map<std::string, std::vector<bool>> present;
  while (std::getline(lines, line)) {
    if (line == "| Method | Frame | PSNR-Y (dB) | SSIM | MS-SSIM | VMAF |") {
      header = true;
      continue;
    }
    if (line.rfind("| ", 0) != 0 || line.rfind("|---", 0) == 0) continue;
    auto cells = split(line.substr(1, line.size() - 2), '|');
    if (cells.size() != 6) continue;
    for (auto& s : cells) s = trim(s);
    std::vector<double> vals;
    std::vector<bool> has;
    for (int k = 2; k < 6; ++k) {
      has.push_back(cells[k] != "-");
      vals.push_back(cells[k] == "-" ? 0.0 : std::stod(cells[k]));
    }
    if (cells[1] == "mean") {
      means[cells[0]] = vals;
      present[cells[0]] = has;
    } else {
      frames[cells[0]].push_back(vals);
    }
  }
  c.expect(header, "missing column header");
  c.expect(means.size() == 4, std::to_string(means.size()) + " mean rows");
  double worst = 0;
  for (const auto& [method, rows] : frames) {
    c.expect(rows.size() == 3, method + " has " + std::to_string(rows.size()) + " frame rows");
    for (int k = 0; k < 4; ++k) {
      if (!present[method][k]) continue;
      double s = 0;
      for (const auto& r : rows) s += r[k];
      worst = std::max(worst, std::abs(s / static_cast<double>(rows.size()) - means[method][k]));
    }
  }
  c.expect(present["bicubic"][3] && !present["lanczos"][3], "VMAF column presence");
  c.expect(worst < 1e-9, "mean deviation " + fmt("%.3g", worst));
  c.note("4 methods x 3 frames, max |mean - recomputed| " + fmt("%.2g", worst));
}

}  // namespace

int main() {
  const auto dir = testutil::temp_dir("acceptance");
  struct Criterion {
    const char* name;
    double limit_s;
    std::function<void(Checker&)> fn;
  };
  const std::vector<Criterion> criteria{
      {"loss-formula fidelity", 1, loss_fidelity},
      {"gradient check", 60, gradient_check},
      {"metric oracles", 60, metric_oracles},
      {"architecture shape law", 60, shape_law},
      {"determinism", 600, [&](Checker& c) { determinism(c, dir); }},
      {"tiling transparency", 60, tiling},
      {"geometry contract", 600, [&](Checker& c) { geometry(c, dir); }},
      {"lr schedule", 1, schedule},
      {"round trips", 120, round_trips},
      {"complexity accounting", 1, complexity},
      {"resampler properties", 30, resampler},
      {"benchmark report shape", 60, [&](Checker& c) { bench_report(c, dir); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Checker c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    c.expect(secs < criteria[i].limit_s, "runtime " + fmt("%.1f s", secs) + " over " + fmt("%.0f s", criteria[i].limit_s));
    std::cout << "[" << (i + 1 < 10 ? " " : "") << i + 1 << "] " << (c.out.pass ? "PASS" : "FAIL") << "  "
              << criteria[i].name << " (" << fmt("%.2f s", secs) << ") " << (c.out.pass ? c.notes : c.out.detail)
              << std::endl;
    if (!c.out.pass) ++failures;
  }
  std::filesystem::remove_all(dir);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
