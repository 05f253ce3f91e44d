#include "vsrhe/cli.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "vsrhe/dataprep.hpp"
#include "vsrhe/error.hpp"
#include "vsrhe/fileio.hpp"
#include "vsrhe/frame.hpp"
#include "vsrhe/metrics.hpp"
#include "vsrhe/network.hpp"
#include "vsrhe/parallel.hpp"
#include "vsrhe/pipeline.hpp"
#include "vsrhe/resample.hpp"
#include "vsrhe/selftest.hpp"

namespace vsrhe {
namespace {

namespace fs = std::filesystem;

// Raised for inconsistent or impossible configurations, before any output is
// produced.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Geometry {
  int width = 0;
  int height = 0;
  std::string chroma = "420";
};

struct Options {
  std::size_t threads = 0;
  bool dump_config = false;
  bool quiet = false;

  std::string in, out, weights, ref, dist, lr, kernel = "bicubic", metrics = "psnr,ssim,msssim", vmaf_csv;
  std::string methods = "bicubic,network", downscale_kernel = "bicubic";
  std::string lr_dir, hr_dir, qp_list = "17,22,27,32,34,37";
  std::uint64_t count = 100000, seed = 0;
  bool no_augment = false;
  int overlap = 8, factor = 4;
  Geometry geom;
  std::string file;

  // init-weights
  std::size_t channels = 126, blocks = 6, heads = 6, input_size = 64, scale = 4;
  std::string windows = "64,32,8,32,64";
  double mlp_ratio = 1.0;
  bool zero = false;
};

void add_geometry(CLI::App* sub, Geometry& g) {
  sub->add_option("--width", g.width, "Luma width of headerless YUV input")->check(CLI::PositiveNumber);
  sub->add_option("--height", g.height, "Luma height of headerless YUV input")->check(CLI::PositiveNumber);
  sub->add_option("--chroma", g.chroma, "Chroma format of headerless YUV input")->check(CLI::IsMember({"420", "444"}));
}

std::optional<RawGeometry> raw_geometry(const Geometry& g, const std::string& path) {
  if (is_y4m_path(path)) return std::nullopt;
  if (g.width == 0 || g.height == 0)
    throw UsageError("'" + path + "' is headerless YUV: --width and --height are required");
  return RawGeometry{g.width, g.height, g.chroma == "444" ? Subsampling::C444 : Subsampling::C420};
}

void require_file(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_regular_file(path)) throw UsageError(std::string(flag) + ": file not found: " + path);
}

void require_dir(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  if (!fs::is_directory(path)) throw UsageError(std::string(flag) + ": directory not found: " + path);
}

void require_output(const std::string& path, const char* flag) {
  if (path.empty()) throw UsageError(std::string(flag) + " is required");
  const auto parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent))
    throw UsageError(std::string(flag) + ": output directory does not exist: " + parent.string());
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

template <class T>
std::vector<T> parse_list(const std::string& s, const char* what) {
  std::vector<T> out;
  for (const auto& item : split(s, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw UsageError(std::string(what) + ": '" + item + "' is not a non-negative integer");
    }
  }
  if (out.empty()) throw UsageError(std::string(what) + " is empty");
  return out;
}

KernelSpec kernel_or_usage(const std::string& name) {
  try {
    return parse_kernel(name);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

void write_text(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string join(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

NetworkModel load_model(const std::string& path) {
  auto file = read_weight_file(read_file(path));
  return NetworkModel(file.config, std::move(file.weights));
}

void check_overlap(int overlap, const SrModel& model) {
  if (overlap < 0 || static_cast<std::size_t>(overlap) >= model.input_size())
    throw UsageError("--overlap must be in [0, " + std::to_string(model.input_size()) + ")");
}

FrameProgress progress_sink(const Options& o, std::ostream& err) {
  if (o.quiet) return {};
  return [&err](std::size_t frame, std::size_t done, std::size_t total) {
    err << "frame=" << frame << " tiles=" << done << "/" << total << "\n";
  };
}

// ---------------------------------------------------------------------------

int cmd_upscale(const Options& o, std::ostream&, std::ostream& err) {
  require_file(o.in, "--in");
  require_file(o.weights, "--weights");
  require_output(o.out, "--out");
  const auto raw = raw_geometry(o.geom, o.in);
  const NetworkModel model = load_model(o.weights);
  check_overlap(o.overlap, model);
  const auto seq = load_video(o.in, raw);
  const auto up = upscale_sequence(seq, model, o.overlap, progress_sink(o, err));
  save_video(o.out, up);
  return kExitOk;
}

int cmd_downscale(const Options& o, std::ostream&, std::ostream&) {
  require_file(o.in, "--in");
  require_output(o.out, "--out");
  const auto kernel = kernel_or_usage(o.kernel);
  if (o.factor < 1) throw UsageError("--factor must be positive");
  const auto raw = raw_geometry(o.geom, o.in);
  save_video(o.out, downscale_video(load_video(o.in, raw), o.factor, kernel));
  return kExitOk;
}

std::map<std::size_t, double> load_vmaf(const std::string& path) {
  const auto bytes = read_file(path);
  return parse_vmaf_csv(std::string(bytes.begin(), bytes.end()));
}

int cmd_metrics(const Options& o, std::ostream& out, std::ostream&) {
  require_file(o.ref, "--ref");
  require_file(o.dist, "--dist");
  if (!o.vmaf_csv.empty()) require_file(o.vmaf_csv, "--vmaf-csv");
  if (!o.out.empty()) require_output(o.out, "--out");
  MetricSelection sel;
  try {
    sel = parse_metric_list(o.metrics);
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto raw_ref = raw_geometry(o.geom, o.ref);
  const auto raw_dist = raw_geometry(o.geom, o.dist);
  const auto ref = load_video(o.ref, raw_ref);
  const auto dist = load_video(o.dist, raw_dist);
  std::map<std::size_t, double> vmaf;
  if (!o.vmaf_csv.empty()) vmaf = load_vmaf(o.vmaf_csv);
  auto report = evaluate_sequences(ref, dist, sel, o.vmaf_csv.empty() ? nullptr : &vmaf);
  report.sequence_id = fs::path(o.ref).stem().string();
  report.method = fs::path(o.dist).stem().string();
  const auto csv = report_to_csv(report);
  if (o.out.empty())
    out << csv;
  else
    write_text(o.out, csv);
  return kExitOk;
}

int cmd_bench(const Options& o, std::ostream& out, std::ostream& err) {
  require_file(o.ref, "--ref");
  if (!o.lr.empty()) require_file(o.lr, "--lr");
  if (!o.out.empty()) require_output(o.out, "--out");
  const auto methods = split(o.methods, ',');
  if (methods.empty()) throw UsageError("--methods is empty");
  bool wants_network = false;
  for (const auto& m : methods) {
    if (m == "network")
      wants_network = true;
    else
      kernel_or_usage(m);
  }
  if (wants_network) require_file(o.weights, "--weights");
  if (o.factor < 1) throw UsageError("--factor must be positive");
  std::map<std::string, std::string> vmaf_paths;
  for (const auto& item : split(o.vmaf_csv, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw UsageError("--vmaf-csv expects METHOD=PATH entries, got '" + item + "'");
    const auto method = item.substr(0, eq), path = item.substr(eq + 1);
    if (std::find(methods.begin(), methods.end(), method) == methods.end())
      throw UsageError("--vmaf-csv names method '" + method + "' which is not in --methods");
    require_file(path, "--vmaf-csv");
    vmaf_paths[method] = path;
  }
  const auto down_kernel = kernel_or_usage(o.downscale_kernel);
  std::optional<NetworkModel> model;
  if (wants_network) {
    model.emplace(load_model(o.weights));
    check_overlap(o.overlap, *model);
    if (model->scale() != static_cast<std::size_t>(o.factor))
      throw UsageError("--factor " + std::to_string(o.factor) + " does not match the network scale " +
                       std::to_string(model->scale()));
  }

  const auto ref = load_video(o.ref, raw_geometry(o.geom, o.ref));
  if (ref.frames.empty()) throw Error("reference has no frames");
  const auto lr = o.lr.empty() ? downscale_video(ref, o.factor, down_kernel)
                               : load_video(o.lr, raw_geometry(o.geom, o.lr));
  std::vector<MetricReport> reports;
  for (const auto& m : methods) {
    VideoSequence sr;
    if (m == "network") {
      sr = upscale_sequence(lr, *model, o.overlap, progress_sink(o, err));
    } else {
      const auto k = parse_kernel(m);
      sr.frame_rate = lr.frame_rate;
      for (const auto& f : lr.frames) sr.frames.push_back(resize_frame(f, f.width * o.factor, f.height * o.factor, k));
    }
    std::map<std::size_t, double> vmaf;
    const auto it = vmaf_paths.find(m);
    if (it != vmaf_paths.end()) vmaf = load_vmaf(it->second);
    auto report = evaluate_sequences(ref, sr, MetricSelection{}, it != vmaf_paths.end() ? &vmaf : nullptr);
    report.sequence_id = fs::path(o.ref).stem().string();
    report.method = m;
    reports.push_back(std::move(report));
  }
  const auto table = reports_to_table(reports);
  if (o.out.empty())
    out << table;
  else
    write_text(o.out, table);
  return kExitOk;
}

int cmd_prepare(const Options& o, std::ostream& out, std::ostream&) {
  require_dir(o.lr_dir, "--lr-dir");
  require_dir(o.hr_dir, "--hr-dir");
  require_output(o.out, "--out");
  PrepareOptions p;
  p.lr_dir = o.lr_dir;
  p.hr_dir = o.hr_dir;
  p.qp_list = parse_list<int>(o.qp_list, "--qp-list");
  p.count = o.count;
  p.seed = o.seed;
  p.augment = !o.no_augment;
  p.out = o.out;
  const auto s = prepare_dataset(p);
  out << "sources=" << s.sources << " pairs=" << s.pairs << " manifest=" << o.out
      << " pak=" << pak_path_for(o.out).string() << "\n";
  return kExitOk;
}

int cmd_inspect(const Options& o, std::ostream& out, std::ostream&) {
  require_file(o.file, "weights file");
  const auto bytes = read_file(o.file);
  const auto wf = read_weight_file(bytes);
  const auto dir = read_tensor_directory(bytes);
  const auto& c = wf.config;
  out << "file: " << o.file << "\n";
  out << "note: " << wf.note << "\n";
  out << "config: in_channels=" << c.in_channels << " out_channels=" << c.out_channels
      << " channel_dim=" << c.channel_dim << " blocks=" << c.blocks << " windows=" << join(c.window_sizes)
      << " heads=" << c.heads << " mlp_ratio=" << c.mlp_ratio << " input_size=" << c.input_size
      << " scale=" << c.scale << "\n";
  out << "tensors: " << dir.size() << "\n";
  for (const auto& e : dir)
    out << "  " << e.name << " " << shape_string(e.shape) << " offset=" << e.offset << "\n";
  validate_weights(wf.weights, c);
  const auto params = static_cast<double>(count_params(c));
  const auto flops = static_cast<double>(count_flops(c));
  const double pdev = (params / 1e6 - kReferenceParamsM) / kReferenceParamsM * 100.0;
  const double fdev = (flops / 1e9 - kReferenceFlopsG) / kReferenceFlopsG * 100.0;
  out << "params: " << count_params(c) << " (" << fixed(params / 1e6, 4) << "M; reference: " << fixed(kReferenceParamsM, 2)
      << "M; deviation " << (pdev >= 0 ? "+" : "") << fixed(pdev, 2) << "%)\n";
  out << "flops: " << count_flops(c) << " per " << c.input_size << "x" << c.input_size << " input ("
      << fixed(flops / 1e9, 2) << "G; reference: " << fixed(kReferenceFlopsG, 2) << "G; deviation "
      << (fdev >= 0 ? "+" : "") << fixed(fdev, 2) << "%)\n";
  return kExitOk;
}

int cmd_selftest(const Options&, std::ostream& out, std::ostream&) {
  const auto results = run_selftest();
  std::size_t passed = 0;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name;
    if (!r.detail.empty()) out << ": " << r.detail;
    out << "\n";
    passed += r.passed ? 1 : 0;
  }
  out << "selftest: " << passed << "/" << results.size() << " passed\n";
  return passed == results.size() ? kExitOk : kExitProcessing;
}

int cmd_init_weights(const Options& o, std::ostream& out, std::ostream&) {
  require_output(o.out, "--out");
  NetworkConfig c;
  c.channel_dim = o.channels;
  c.blocks = o.blocks;
  c.window_sizes = parse_list<std::size_t>(o.windows, "--windows");
  c.heads = o.heads;
  c.mlp_ratio = o.mlp_ratio;
  c.input_size = o.input_size;
  c.scale = o.scale;
  try {
    c.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  const auto w = o.zero ? zero_weights(c) : init_random(c, o.seed);
  write_file_atomic(o.out, save_weights(w, c));
  out << "wrote " << o.out << " (" << count_params(c) << " parameters)\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------

nlohmann::json dump_options(const CLI::App& app, const CLI::App& sub) {
  nlohmann::json opts = nlohmann::json::object();
  auto add = [&](const CLI::Option* opt) {
    if (opt->get_name() == "--help" || opt->get_name() == "-h" || opt->get_name() == "--dump-config") return;
    const std::string key = opt->get_lnames().empty() ? opt->get_name() : opt->get_lnames().front();
    if (opt->get_expected_min() == 0) {
      opts[key] = opt->count() > 0;
      return;
    }
    std::string value;
    if (opt->count() > 0) {
      for (const auto& r : opt->results()) value += (value.empty() ? "" : ",") + r;
    } else {
      value = opt->get_default_str();
    }
    opts[key] = value;
  };
  for (const auto* opt : app.get_options()) add(opt);
  for (const auto* opt : sub.get_options()) add(opt);
  return {{"subcommand", sub.get_name()}, {"options", opts}};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"vsrhe: 4x super-resolution toolkit for decoded YCbCr video"};
  app.name("vsrhe");
  app.require_subcommand(1, 1);
  app.fallthrough();
  app.option_defaults()->always_capture_default();
  Options o;
  app.add_option("--threads", o.threads, "Worker threads; defaults to VSRHE_THREADS, else 1")
      ->envname("VSRHE_THREADS")
      ->check(CLI::Range(1, 4096));
  app.add_flag("--dump-config", o.dump_config, "Print the parsed configuration as JSON and exit without I/O");

  auto* up = app.add_subcommand("upscale", "Super-resolve a 4:2:0 sequence with the network");
  up->add_option("--in", o.in, "Input sequence (.y4m, or headerless YUV)")->required();
  up->add_option("--weights", o.weights, "Weight file")->required();
  up->add_option("--out", o.out, "Output sequence (.y4m, or headerless YUV)")->required();
  up->add_option("--overlap", o.overlap, "Tile overlap in input pixels");
  up->add_flag("--quiet", o.quiet, "Suppress frame=<i> tiles=<done>/<total> progress lines on stderr");
  add_geometry(up, o.geom);

  auto* down = app.add_subcommand("downscale", "Downscale a sequence by an integer factor");
  down->add_option("--in", o.in, "Input sequence")->required();
  down->add_option("--out", o.out, "Output sequence")->required();
  down->add_option("--factor", o.factor, "Integer downscale factor");
  down->add_option("--kernel", o.kernel, "bicubic, lanczos or nearest");
  add_geometry(down, o.geom);

  auto* met = app.add_subcommand("metrics", "Per-frame PSNR-Y / SSIM / MS-SSIM of two sequences as CSV");
  met->add_option("--ref", o.ref, "Reference sequence")->required();
  met->add_option("--dist", o.dist, "Distorted sequence")->required();
  met->add_option("--metrics", o.metrics, "Comma-separated subset of psnr,ssim,msssim");
  met->add_option("--vmaf-csv", o.vmaf_csv, "Externally computed frame,vmaf CSV to include");
  met->add_option("--out", o.out, "CSV output path; stdout when omitted");
  add_geometry(met, o.geom);

  auto* bench = app.add_subcommand("bench", "Compare upscaling methods against a high-resolution reference");
  bench->add_option("--ref", o.ref, "High-resolution reference sequence")->required();
  bench->add_option("--lr", o.lr, "Low-resolution input; derived from --ref with --downscale-kernel when omitted");
  bench->add_option("--methods", o.methods, "Comma-separated list of bicubic, lanczos, nearest, network");
  bench->add_option("--weights", o.weights, "Weight file, required for the network method");
  bench->add_option("--factor", o.factor, "Upscale factor");
  bench->add_option("--downscale-kernel", o.downscale_kernel, "Kernel used to derive the low-resolution input");
  bench->add_option("--overlap", o.overlap, "Tile overlap for the network method");
  bench->add_option("--vmaf-csv", o.vmaf_csv, "Comma-separated METHOD=PATH frame,vmaf CSVs");
  bench->add_option("--out", o.out, "Table output path; stdout when omitted");
  bench->add_flag("--quiet", o.quiet, "Suppress progress lines");
  add_geometry(bench, o.geom);

  auto* prep = app.add_subcommand("prepare-data", "Extract paired training patches into a manifest and .pak");
  prep->add_option("--lr-dir", o.lr_dir, "Directory of <name>_qp<QP>.y4m degraded sequences")->required();
  prep->add_option("--hr-dir", o.hr_dir, "Directory of <name>.y4m ground-truth sequences")->required();
  prep->add_option("--qp-list", o.qp_list, "Comma-separated QP labels to pair");
  prep->add_option("--count", o.count, "Total number of patch pairs");
  prep->add_option("--seed", o.seed, "Sampling seed");
  prep->add_flag("--no-augment", o.no_augment, "Disable random rotations and flips");
  prep->add_option("--out", o.out, "Manifest path (.jsonl); the .pak is written next to it")->required();

  auto* insp = app.add_subcommand("inspect-weights", "Print a weight file's config, tensors, params and FLOPs");
  insp->add_option("file", o.file, "Weight file")->required();

  auto* self = app.add_subcommand("selftest", "Run the embedded oracle and property checks");

  auto* init = app.add_subcommand("init-weights", "Write a randomly initialized (or all-zero) weight file");
  init->add_option("--out", o.out, "Output weight file")->required();
  init->add_option("--seed", o.seed, "Initialization seed");
  init->add_flag("--zero", o.zero, "Write all-zero weights");
  init->add_option("--channels", o.channels, "Feature channels");
  init->add_option("--blocks", o.blocks, "Number of blocks");
  init->add_option("--windows", o.windows, "Comma-separated window size per layer");
  init->add_option("--heads", o.heads, "Attention heads");
  init->add_option("--mlp-ratio", o.mlp_ratio, "MLP hidden width over channels");
  init->add_option("--input-size", o.input_size, "Tile side in input pixels");
  init->add_option("--scale", o.scale, "Upscale factor (power of two)");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (!app.get_subcommands().empty()) err << "see: vsrhe " << app.get_subcommands().front()->get_name() << " --help\n";
    return kExitUsage;
  }

  const CLI::App* sub = app.get_subcommands().front();
  if (o.dump_config) {
    out << dump_options(app, *sub).dump(2) << "\n";
    return kExitOk;
  }
  if (o.threads > 0) set_num_threads(o.threads);

  const std::string name = sub->get_name();
  try {
    if (sub == up) return cmd_upscale(o, out, err);
    if (sub == down) return cmd_downscale(o, out, err);
    if (sub == met) return cmd_metrics(o, out, err);
    if (sub == bench) return cmd_bench(o, out, err);
    if (sub == prep) return cmd_prepare(o, out, err);
    if (sub == insp) return cmd_inspect(o, out, err);
    if (sub == self) return cmd_selftest(o, out, err);
    if (sub == init) return cmd_init_weights(o, out, err);
  } catch (const UsageError& e) {
    err << "error: " << name << ": " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << name << ": " << e.what() << "\n";
    return kExitProcessing;
  }
  err << "error: unhandled subcommand " << name << "\n";
  return kExitUsage;
}

}  // namespace vsrhe
