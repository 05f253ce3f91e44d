#include "vsrhe/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "vsrhe/error.hpp"
#include "vsrhe/parallel.hpp"

namespace vsrhe {

void SsimParams::validate() const {
  if (window < 1 || window % 2 == 0) throw Error("SSIM window size must be odd and positive");
  if (!(sigma > 0.0)) throw Error("SSIM sigma must be positive");
  if (!(k1 > 0.0) || !(k2 > 0.0)) throw Error("SSIM constants K1 and K2 must be positive");
  if (!(dynamic_range > 0.0)) throw Error("SSIM dynamic range must be positive");
}

std::vector<double> SsimParams::taps() const {
  validate();
  std::vector<double> g(static_cast<std::size_t>(window));
  const double c = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - c;
    g[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    sum += g[i];
  }
  for (auto& v : g) v /= sum;
  return g;
}

ImageD ImageD::from_plane(std::span<const std::uint8_t> plane, int width, int height) {
  if (plane.size() != static_cast<std::size_t>(width) * static_cast<std::size_t>(height))
    throw Error("plane size does not match " + std::to_string(width) + "x" + std::to_string(height));
  return ImageD{width, height, std::vector<double>(plane.begin(), plane.end())};
}

double psnr(std::span<const std::uint8_t> ref, std::span<const std::uint8_t> dist, double peak) {
  if (ref.size() != dist.size() || ref.empty())
    throw Error("PSNR: geometry mismatch (" + std::to_string(ref.size()) + " vs " + std::to_string(dist.size()) +
                " samples)");
  double sse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const double d = static_cast<double>(ref[i]) - static_cast<double>(dist[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(ref.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / mse);
}

namespace {

void check_geometry(const Frame& a, const Frame& b) {
  if (a.width != b.width || a.height != b.height)
    throw Error("geometry mismatch: " + std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                std::to_string(b.width) + "x" + std::to_string(b.height));
}

void check_pair(const ImageD& a, const ImageD& b, std::size_t min_size, const char* what) {
  if (a.width != b.width || a.height != b.height)
    throw Error(std::string(what) + ": geometry mismatch " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  if (static_cast<std::size_t>(std::min(a.width, a.height)) < min_size)
    throw Error(std::string(what) + ": input " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                " is too small, minimum dimension is " + std::to_string(min_size));
}

// Gaussian-weighted sums over every window position that fits entirely inside
// the image ("valid" positions).
std::vector<double> filter_valid(const std::vector<double>& img, int w, int h, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y) {
    const double* row = img.data() + static_cast<std::size_t>(y) * w;
    double* dst = tmp.data() + static_cast<std::size_t>(y) * ow;
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int k = 0; k < n; ++k) acc += g[k] * row[x + k];
      dst[x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    double* dst = out.data() + static_cast<std::size_t>(y) * ow;
    for (int k = 0; k < n; ++k) {
      const double* src = tmp.data() + static_cast<std::size_t>(y + k) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += g[k] * src[x];
    }
  }
  return out;
}

// Transpose of filter_valid: scatters a valid-position map back onto the
// full image grid.
std::vector<double> filter_valid_adjoint(const std::vector<double>& map, int w, int h, const std::vector<double>& g) {
  const int n = static_cast<int>(g.size());
  const int ow = w - n + 1, oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < oh; ++y) {
    const double* src = map.data() + static_cast<std::size_t>(y) * ow;
    for (int k = 0; k < n; ++k) {
      double* dst = tmp.data() + static_cast<std::size_t>(y + k) * ow;
      for (int x = 0; x < ow; ++x) dst[x] += g[k] * src[x];
    }
  }
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y) {
    const double* src = tmp.data() + static_cast<std::size_t>(y) * ow;
    double* dst = out.data() + static_cast<std::size_t>(y) * w;
    for (int x = 0; x < ow; ++x)
      for (int k = 0; k < n; ++k) dst[x + k] += g[k] * src[x];
  }
  return out;
}

std::vector<double> pool2(const std::vector<double>& img, int w, int h) {
  const int ow = w / 2, oh = h / 2;
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const std::size_t i0 = static_cast<std::size_t>(2 * y) * w + 2 * x;
      out[static_cast<std::size_t>(y) * ow + x] = (img[i0] + img[i0 + 1] + img[i0 + w] + img[i0 + w + 1]) * 0.25;
    }
  return out;
}

std::vector<double> pool2_adjoint(const std::vector<double>& grad, int w, int h) {
  const int ow = w / 2, oh = h / 2;
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double g = grad[static_cast<std::size_t>(y) * ow + x] * 0.25;
      const std::size_t i0 = static_cast<std::size_t>(2 * y) * w + 2 * x;
      out[i0] += g;
      out[i0 + 1] += g;
      out[i0 + w] += g;
      out[i0 + w + 1] += g;
    }
  return out;
}

enum GradRequest : unsigned { kGradNone = 0, kGradL = 1, kGradCs = 2, kGradS = 4 };

struct ScaleResult {
  double l = 0.0, cs = 0.0, s = 0.0;
  std::vector<double> grad_l, grad_cs, grad_s;
};

// Mean luminance (l), contrast-structure (cs) and SSIM (s = l*cs) maps at one
// scale, with optional gradients with respect to `dist`.
ScaleResult eval_scale(const std::vector<double>& ref, const std::vector<double>& dist, int w, int h,
                       const SsimParams& p, const std::vector<double>& g, unsigned want) {
  const std::size_t n = static_cast<std::size_t>(w) * h;
  std::vector<double> xx(n), yy(n), xy(n);
  for (std::size_t i = 0; i < n; ++i) {
    xx[i] = dist[i] * dist[i];
    yy[i] = ref[i] * ref[i];
    xy[i] = dist[i] * ref[i];
  }
  const auto mx = filter_valid(dist, w, h, g);
  const auto my = filter_valid(ref, w, h, g);
  const auto exx = filter_valid(xx, w, h, g);
  const auto eyy = filter_valid(yy, w, h, g);
  const auto exy = filter_valid(xy, w, h, g);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  const std::size_t positions = mx.size();

  ScaleResult r;
  std::vector<double> gm_l, gm_cs, gxx_cs, gxy_cs, gm_s, gxx_s, gxy_s;
  if (want & kGradL) gm_l.resize(positions);
  if (want & kGradCs) gm_cs.resize(positions), gxx_cs.resize(positions), gxy_cs.resize(positions);
  if (want & kGradS) gm_s.resize(positions), gxx_s.resize(positions), gxy_s.resize(positions);
  double sum_l = 0.0, sum_cs = 0.0, sum_s = 0.0;
  for (std::size_t i = 0; i < positions; ++i) {
    const double a1 = 2.0 * (mx[i] * my[i]) + c1;
    const double b1 = mx[i] * mx[i] + my[i] * my[i] + c1;
    const double vx = exx[i] - mx[i] * mx[i];
    const double vy = eyy[i] - my[i] * my[i];
    const double a2 = 2.0 * (exy[i] - mx[i] * my[i]) + c2;
    const double b2 = vx + vy + c2;
    const double l = a1 / b1;
    const double cs = a2 / b2;
    sum_l += l;
    sum_cs += cs;
    sum_s += l * cs;
    const double dl_dm = (2.0 * my[i] - 2.0 * mx[i] * l) / b1;
    const double dcs_dm = (-2.0 * my[i] + 2.0 * mx[i] * cs) / b2;
    const double dcs_dxx = -cs / b2;
    const double dcs_dxy = 2.0 / b2;
    if (want & kGradL) gm_l[i] = dl_dm;
    if (want & kGradCs) {
      gm_cs[i] = dcs_dm;
      gxx_cs[i] = dcs_dxx;
      gxy_cs[i] = dcs_dxy;
    }
    if (want & kGradS) {
      gm_s[i] = cs * dl_dm + l * dcs_dm;
      gxx_s[i] = l * dcs_dxx;
      gxy_s[i] = l * dcs_dxy;
    }
  }
  const double inv = 1.0 / static_cast<double>(positions);
  const auto count = static_cast<double>(positions);
  r.l = sum_l / count;
  r.cs = sum_cs / count;
  r.s = sum_s / count;

  auto assemble = [&](const std::vector<double>* gm, const std::vector<double>* gxx, const std::vector<double>* gxy) {
    std::vector<double> out = filter_valid_adjoint(*gm, w, h, g);
    if (gxx) {
      const auto axx = filter_valid_adjoint(*gxx, w, h, g);
      const auto axy = filter_valid_adjoint(*gxy, w, h, g);
      for (std::size_t i = 0; i < n; ++i) out[i] += 2.0 * dist[i] * axx[i] + ref[i] * axy[i];
    }
    for (auto& v : out) v *= inv;
    return out;
  };
  if (want & kGradL) r.grad_l = assemble(&gm_l, nullptr, nullptr);
  if (want & kGradCs) r.grad_cs = assemble(&gm_cs, &gxx_cs, &gxy_cs);
  if (want & kGradS) r.grad_s = assemble(&gm_s, &gxx_s, &gxy_s);
  return r;
}

ValueAndGrad ms_ssim_impl(const ImageD& ref, const ImageD& dist, const SsimParams& p,
                          std::span<const double> weights, bool want_grad) {
  if (weights.empty()) throw Error("MS-SSIM: at least one scale is required");
  check_pair(ref, dist, ms_ssim_min_size(p, weights.size()), "MS-SSIM");
  const auto g = p.taps();
  const std::size_t scales = weights.size();

  std::vector<std::vector<double>> refs{ref.data}, dists{dist.data};
  std::vector<int> ws{ref.width}, hs{ref.height};
  for (std::size_t j = 1; j < scales; ++j) {
    refs.push_back(pool2(refs.back(), ws.back(), hs.back()));
    dists.push_back(pool2(dists.back(), ws.back(), hs.back()));
    ws.push_back(ws.back() / 2);
    hs.push_back(hs.back() / 2);
  }
  std::vector<ScaleResult> res(scales);
  for (std::size_t j = 0; j < scales; ++j) {
    unsigned want = want_grad ? kGradCs : kGradNone;
    if (want_grad && j + 1 == scales) want |= kGradL;
    res[j] = eval_scale(refs[j], dists[j], ws[j], hs[j], p, g, want);
  }

  ValueAndGrad out;
  bool clamped = false;
  double value = std::pow(res.back().l, weights.back());
  for (std::size_t j = 0; j < scales; ++j) {
    if (res[j].cs <= 0.0) {
      clamped = true;
      break;
    }
    value *= std::pow(res[j].cs, weights[j]);
  }
  out.value = clamped ? 0.0 : value;
  if (!want_grad) return out;
  if (clamped) {
    out.grad.assign(dist.data.size(), 0.0);
    return out;
  }
  std::vector<double> acc;
  for (std::size_t jj = scales; jj-- > 0;) {
    std::vector<double> here(res[jj].grad_cs.size());
    const double kcs = value * weights[jj] / res[jj].cs;
    for (std::size_t i = 0; i < here.size(); ++i) here[i] = kcs * res[jj].grad_cs[i];
    if (jj + 1 == scales) {
      const double kl = value * weights[jj] / res[jj].l;
      for (std::size_t i = 0; i < here.size(); ++i) here[i] += kl * res[jj].grad_l[i];
    } else {
      const auto up = pool2_adjoint(acc, ws[jj], hs[jj]);
      for (std::size_t i = 0; i < here.size(); ++i) here[i] += up[i];
    }
    acc = std::move(here);
  }
  out.grad = std::move(acc);
  return out;
}

}  // namespace

std::size_t ms_ssim_min_size(const SsimParams& p, std::size_t scales) {
  return static_cast<std::size_t>(p.window) << (scales - 1);
}

double ssim(const ImageD& ref, const ImageD& dist, const SsimParams& p) {
  p.validate();
  check_pair(ref, dist, static_cast<std::size_t>(p.window), "SSIM");
  return eval_scale(ref.data, dist.data, ref.width, ref.height, p, p.taps(), kGradNone).s;
}

ValueAndGrad ssim_with_grad(const ImageD& ref, const ImageD& dist, const SsimParams& p) {
  p.validate();
  check_pair(ref, dist, static_cast<std::size_t>(p.window), "SSIM");
  auto r = eval_scale(ref.data, dist.data, ref.width, ref.height, p, p.taps(), kGradS);
  return {r.s, std::move(r.grad_s)};
}

double ms_ssim(const ImageD& ref, const ImageD& dist, const SsimParams& p, std::span<const double> scale_weights) {
  p.validate();
  return ms_ssim_impl(ref, dist, p, scale_weights, false).value;
}

ValueAndGrad ms_ssim_with_grad(const ImageD& ref, const ImageD& dist, const SsimParams& p,
                               std::span<const double> scale_weights) {
  p.validate();
  return ms_ssim_impl(ref, dist, p, scale_weights, true);
}

double psnr_y(const Frame& ref, const Frame& dist) {
  check_geometry(ref, dist);
  return psnr(ref.planes[0], dist.planes[0]);
}

double ssim_y(const Frame& ref, const Frame& dist) {
  check_geometry(ref, dist);
  return ssim(ImageD::from_plane(ref.planes[0], ref.width, ref.height),
              ImageD::from_plane(dist.planes[0], dist.width, dist.height));
}

double ms_ssim_y(const Frame& ref, const Frame& dist) {
  check_geometry(ref, dist);
  return ms_ssim(ImageD::from_plane(ref.planes[0], ref.width, ref.height),
                 ImageD::from_plane(dist.planes[0], dist.width, dist.height));
}

MetricSelection parse_metric_list(const std::string& list) {
  MetricSelection sel{false, false, false};
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item == "psnr" || item == "psnr_y" || item == "psnr-y")
      sel.psnr = true;
    else if (item == "ssim")
      sel.ssim = true;
    else if (item == "msssim" || item == "ms-ssim" || item == "ms_ssim")
      sel.ms_ssim = true;
    else
      throw Error("unknown metric '" + item + "' (expected psnr, ssim, msssim)");
  }
  if (!sel.psnr && !sel.ssim && !sel.ms_ssim) throw Error("no metrics selected");
  return sel;
}

FrameMetrics MetricReport::mean() const {
  FrameMetrics m;
  const auto n = static_cast<double>(frames.size());
  if (frames.empty()) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    m.psnr_y = m.ssim = m.ms_ssim = nan;
    return m;
  }
  double vmaf = 0.0;
  for (const auto& f : frames) {
    m.psnr_y += f.psnr_y;
    m.ssim += f.ssim;
    m.ms_ssim += f.ms_ssim;
    vmaf += f.vmaf.value_or(0.0);
  }
  m.psnr_y /= n;
  m.ssim /= n;
  m.ms_ssim /= n;
  if (has_vmaf) m.vmaf = vmaf / n;
  return m;
}

MetricReport evaluate_sequences(const VideoSequence& ref, const VideoSequence& dist, const MetricSelection& sel,
                                const std::map<std::size_t, double>* vmaf) {
  if (ref.frames.size() != dist.frames.size())
    throw Error("frame count mismatch: reference has " + std::to_string(ref.frames.size()) + ", distorted has " +
                std::to_string(dist.frames.size()));
  MetricReport report;
  report.selection = sel;
  report.frames.resize(ref.frames.size());
  std::vector<std::string> errors(ref.frames.size());
  parallel_for(ref.frames.size(), [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      FrameMetrics& m = report.frames[i];
      m.frame = i;
      try {
        if (sel.psnr) m.psnr_y = psnr_y(ref.frames[i], dist.frames[i]);
        if (sel.ssim) m.ssim = ssim_y(ref.frames[i], dist.frames[i]);
        if (sel.ms_ssim) m.ms_ssim = ms_ssim_y(ref.frames[i], dist.frames[i]);
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  });
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw Error("frame " + std::to_string(i) + ": " + errors[i]);
  if (vmaf) {
    report.has_vmaf = true;
    for (auto& m : report.frames) {
      auto it = vmaf->find(m.frame);
      if (it == vmaf->end()) throw Error("VMAF CSV has no entry for frame " + std::to_string(m.frame));
      m.vmaf = it->second;
    }
  }
  return report;
}

std::map<std::size_t, double> parse_vmaf_csv(const std::string& text) {
  std::map<std::size_t, double> out;
  std::stringstream ss(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(ss, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw Error("VMAF CSV line " + std::to_string(line_no) + ": expected 'frame,vmaf'");
    const std::string key = line.substr(0, comma), value = line.substr(comma + 1);
    if (line_no == 1 && key == "frame") continue;
    try {
      std::size_t used = 0;
      const unsigned long frame = std::stoul(key, &used);
      if (used != key.size()) throw std::invalid_argument(key);
      out[frame] = std::stod(value);
    } catch (const std::exception&) {
      throw Error("VMAF CSV line " + std::to_string(line_no) + ": cannot parse '" + line + "'");
    }
  }
  return out;
}

std::string format_metric(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10f", v);
  return buf;
}

std::string report_to_csv(const MetricReport& report) {
  const auto& sel = report.selection;
  std::string out = "frame";
  if (sel.psnr) out += ",psnr_y";
  if (sel.ssim) out += ",ssim";
  if (sel.ms_ssim) out += ",msssim";
  if (report.has_vmaf) out += ",vmaf";
  out += "\n";
  auto row = [&](const std::string& key, const FrameMetrics& m) {
    out += key;
    if (sel.psnr) out += "," + format_metric(m.psnr_y);
    if (sel.ssim) out += "," + format_metric(m.ssim);
    if (sel.ms_ssim) out += "," + format_metric(m.ms_ssim);
    if (report.has_vmaf) out += "," + format_metric(m.vmaf.value_or(std::numeric_limits<double>::quiet_NaN()));
    out += "\n";
  };
  for (const auto& f : report.frames) row(std::to_string(f.frame), f);
  row("mean", report.mean());
  return out;
}

std::string reports_to_table(const std::vector<MetricReport>& reports) {
  std::string out;
  if (!reports.empty() && !reports.front().sequence_id.empty())
    out += "# sequence: " + reports.front().sequence_id + "\n";
  out += "| Method | Frame | PSNR-Y (dB) | SSIM | MS-SSIM | VMAF |\n";
  out += "|---|---|---|---|---|---|\n";
  for (const auto& r : reports) {
    auto row = [&](const std::string& key, const FrameMetrics& m) {
      out += "| " + r.method + " | " + key + " | ";
      out += (r.selection.psnr ? format_metric(m.psnr_y) : "-") + " | ";
      out += (r.selection.ssim ? format_metric(m.ssim) : "-") + " | ";
      out += (r.selection.ms_ssim ? format_metric(m.ms_ssim) : "-") + " | ";
      out += (m.vmaf ? format_metric(*m.vmaf) : "-") + " |\n";
    };
    for (const auto& f : r.frames) row(std::to_string(f.frame), f);
    row("mean", r.mean());
  }
  return out;
}

}  // namespace vsrhe
