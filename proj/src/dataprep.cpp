#include "vsrhe/dataprep.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "vsrhe/error.hpp"
#include "vsrhe/fileio.hpp"
#include "vsrhe/rng.hpp"

namespace vsrhe {

namespace {

int mod4(int k) { return ((k % 4) + 4) % 4; }

Frame rotate_ccw(const Frame& f) {
  const int n = f.width;
  Frame out(n, n, Subsampling::C444);
  for (int p = 0; p < 3; ++p)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) out.sample(p, x, y) = f.sample(p, n - 1 - y, x);
  return out;
}

Frame mirror(const Frame& f, bool horizontal) {
  const int n = f.width;
  Frame out(n, n, Subsampling::C444);
  for (int p = 0; p < 3; ++p)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x)
        out.sample(p, x, y) = horizontal ? f.sample(p, n - 1 - x, y) : f.sample(p, x, n - 1 - y);
  return out;
}

Frame crop444(const Frame& f, int x0, int y0, int size) {
  Frame out(size, size, Subsampling::C444);
  for (int p = 0; p < 3; ++p)
    for (int y = 0; y < size; ++y)
      std::copy_n(f.planes[p].begin() + static_cast<std::ptrdiff_t>(y0 + y) * f.width + x0, size,
                  out.planes[p].begin() + static_cast<std::ptrdiff_t>(y) * size);
  return out;
}

Frame to444(const Frame& f) { return f.subsampling == Subsampling::C444 ? f : chroma_upsample_nn(f); }

}  // namespace

Augmentation canonical(const Augmentation& a) {
  // A top-bottom mirror is a half turn followed by a left-right mirror.
  return {mod4(a.rotation + (a.vflip ? 2 : 0)), a.hflip != a.vflip, false};
}

Augmentation compose(const Augmentation& first, const Augmentation& second) {
  const Augmentation a = canonical(first), b = canonical(second);
  // Rotating after a mirror equals mirroring after the opposite rotation.
  if (!a.hflip) return {mod4(b.rotation + a.rotation), b.hflip, false};
  return {mod4(a.rotation - b.rotation), !b.hflip, false};
}

Augmentation inverse(const Augmentation& a) {
  const Augmentation c = canonical(a);
  if (c.hflip) return c;
  return {mod4(-c.rotation), false, false};
}

Frame transform_patch(const Frame& patch, const Augmentation& a) {
  patch.validate();
  if (patch.subsampling != Subsampling::C444 || patch.width != patch.height)
    throw Error("augmentation expects a square 4:4:4 patch");
  Frame out = patch;
  for (int k = 0; k < mod4(a.rotation); ++k) out = rotate_ccw(out);
  if (a.hflip) out = mirror(out, true);
  if (a.vflip) out = mirror(out, false);
  return out;
}

PatchPair augment(const PatchPair& p, const Augmentation& a) {
  PatchPair out = p;
  out.lr = transform_patch(p.lr, a);
  out.hr = transform_patch(p.hr, a);
  out.augmentation = compose(p.augmentation, a);
  return out;
}

PatchPair augment(const PatchPair& p, int rotation, bool hflip, bool vflip) {
  return augment(p, Augmentation{rotation, hflip, vflip});
}

void extract_patch_pairs_to(const VideoSequence& lr, const VideoSequence& hr, std::size_t count, std::uint64_t seed,
                            int qp, const std::string& source_id, bool random_augment,
                            const std::function<void(PatchPair&&)>& sink) {
  check_uniform_geometry(lr);
  check_uniform_geometry(hr);
  if (lr.frames.size() != hr.frames.size())
    throw Error("patch extraction: LR has " + std::to_string(lr.frames.size()) + " frames, HR has " +
                std::to_string(hr.frames.size()));
  if (count == 0) return;
  if (lr.frames.empty()) throw Error("patch extraction: sources have no frames");
  const int lw = lr.frames[0].width, lh = lr.frames[0].height;
  const int hw = hr.frames[0].width, hh = hr.frames[0].height;
  if (hw != kPatchScale * lw || hh != kPatchScale * lh)
    throw Error("patch extraction: HR " + std::to_string(hw) + "x" + std::to_string(hh) + " is not 4x LR " +
                std::to_string(lw) + "x" + std::to_string(lh));
  if (lw < kLrPatch || lh < kLrPatch)
    throw Error("patch extraction: LR frames " + std::to_string(lw) + "x" + std::to_string(lh) +
                " are smaller than a 64x64 crop");

  Xoshiro256 rng(seed);
  std::map<std::size_t, std::pair<Frame, Frame>> cache;
  for (std::size_t n = 0; n < count; ++n) {
    const auto fi = static_cast<std::size_t>(rng.uniform_below(lr.frames.size()));
    const int x = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(lw - kLrPatch + 1)));
    const int y = static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(lh - kLrPatch + 1)));
    auto it = cache.find(fi);
    if (it == cache.end()) {
      if (cache.size() > 8) cache.clear();
      it = cache.emplace(fi, std::make_pair(to444(lr.frames[fi]), to444(hr.frames[fi]))).first;
    }
    PatchPair p;
    p.lr = crop444(it->second.first, x, y, kLrPatch);
    p.hr = crop444(it->second.second, kPatchScale * x, kPatchScale * y, kHrPatch);
    p.source_id = source_id;
    p.frame_index = fi;
    p.lr_x = x;
    p.lr_y = y;
    p.qp = qp;
    if (random_augment) {
      const auto r = rng.uniform_below(8);
      p = augment(p, Augmentation{static_cast<int>(r & 3), (r & 4) != 0, false});
    }
    sink(std::move(p));
  }
}

std::vector<PatchPair> extract_patch_pairs(const VideoSequence& lr, const VideoSequence& hr, std::size_t count,
                                           std::uint64_t seed, int qp, const std::string& source_id,
                                           bool random_augment) {
  std::vector<PatchPair> out;
  out.reserve(count);
  extract_patch_pairs_to(lr, hr, count, seed, qp, source_id, random_augment,
                         [&](PatchPair&& p) { out.push_back(std::move(p)); });
  return out;
}

double lr_schedule(std::uint64_t iteration) {
  double lr = 1e-4;
  for (std::uint64_t milestone : {50000u, 100000u, 200000u, 300000u})
    if (iteration >= milestone) lr *= 0.5;
  return lr;
}

// ---------------------------------------------------------------------------
// Manifest encoding

namespace {

using nlohmann::json;

constexpr char kPakMagic[8] = {'V', 'S', 'R', 'H', 'E', 'P', 'K', '1'};

std::string header_line(std::uint64_t seed, std::uint64_t requested, std::uint64_t count,
                        const std::vector<int>& qp_list, const std::string& pak_name) {
  json h = {{"type", "header"},
            {"format", "vsrhe-patches"},
            {"version", 1},
            {"seed", seed},
            {"requested", requested},
            {"count", count},
            {"lr_size", kLrPatch},
            {"hr_size", kHrPatch},
            {"scale", kPatchScale},
            {"qp_list", qp_list},
            {"pak", pak_name},
            {"record_bytes", kPakRecordBytes}};
  return h.dump() + "\n";
}

std::string record_line(const PatchPair& p, std::uint64_t index, std::uint64_t offset) {
  json r = {{"type", "pair"},
            {"index", index},
            {"source", p.source_id},
            {"frame", p.frame_index},
            {"lr_x", p.lr_x},
            {"lr_y", p.lr_y},
            {"hr_x", kPatchScale * p.lr_x},
            {"hr_y", kPatchScale * p.lr_y},
            {"qp", p.qp},
            {"rotation", p.augmentation.rotation},
            {"hflip", p.augmentation.hflip},
            {"vflip", p.augmentation.vflip},
            {"offset", offset}};
  return r.dump() + "\n";
}

void check_patch(const Frame& f, int size, const char* what) {
  f.validate();
  if (f.width != size || f.height != size || f.subsampling != Subsampling::C444)
    throw Error(std::string(what) + " patch must be " + std::to_string(size) + "x" + std::to_string(size) + " 4:4:4");
}

void append_record(std::vector<std::uint8_t>& out, const PatchPair& p) {
  check_patch(p.lr, kLrPatch, "LR");
  check_patch(p.hr, kHrPatch, "HR");
  for (const Frame* f : {&p.lr, &p.hr})
    for (const auto& plane : f->planes) out.insert(out.end(), plane.begin(), plane.end());
}

struct ParsedHeader {
  std::uint64_t seed = 0, requested = 0, count = 0;
  std::vector<int> qp_list;
  std::string pak;
};

ParsedHeader parse_header(const json& h) {
  if (h.value("type", "") != "header") throw Error("manifest: first record is not a header");
  if (h.value("version", 0) != 1) throw Error("manifest: unsupported version");
  if (h.value("record_bytes", std::uint64_t{0}) != kPakRecordBytes)
    throw Error("manifest: unexpected pak record size");
  ParsedHeader out;
  out.seed = h.at("seed").get<std::uint64_t>();
  out.requested = h.at("requested").get<std::uint64_t>();
  out.count = h.at("count").get<std::uint64_t>();
  out.qp_list = h.at("qp_list").get<std::vector<int>>();
  out.pak = h.at("pak").get<std::string>();
  return out;
}

Manifest decode_with_header(const std::string& jsonl, std::span<const std::uint8_t> pak, ParsedHeader* header_out) {
  std::istringstream in(jsonl);
  std::string line;
  std::vector<json> records;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      records.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw Error("manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (records.empty()) throw Error("manifest: missing header record");
  ParsedHeader h;
  try {
    h = parse_header(records[0]);
  } catch (const json::exception& e) {
    throw Error(std::string("manifest header: ") + e.what());
  }
  if (header_out) *header_out = h;
  if (h.count != records.size() - 1)
    throw Error("manifest header declares " + std::to_string(h.count) + " records, found " +
                std::to_string(records.size() - 1));
  if (pak.size() < sizeof kPakMagic || !std::equal(kPakMagic, kPakMagic + 8, pak.begin()))
    throw Error("pak: bad magic");

  Manifest m;
  m.seed = h.seed;
  m.requested = h.requested;
  m.qp_list = h.qp_list;
  m.pairs.reserve(records.size() - 1);
  for (std::size_t i = 1; i < records.size(); ++i) {
    const json& r = records[i];
    PatchPair p;
    std::uint64_t offset = 0;
    try {
      if (r.value("type", "") != "pair") throw Error("not a pair record");
      p.source_id = r.at("source").get<std::string>();
      p.frame_index = r.at("frame").get<std::size_t>();
      p.lr_x = r.at("lr_x").get<int>();
      p.lr_y = r.at("lr_y").get<int>();
      p.qp = r.at("qp").get<int>();
      p.augmentation = {r.at("rotation").get<int>(), r.at("hflip").get<bool>(), r.at("vflip").get<bool>()};
      offset = r.at("offset").get<std::uint64_t>();
    } catch (const std::exception& e) {
      throw Error("manifest record " + std::to_string(i - 1) + ": " + e.what());
    }
    if (offset < sizeof kPakMagic || offset > pak.size() || pak.size() - offset < kPakRecordBytes)
      throw Error("manifest record " + std::to_string(i - 1) + " (source '" + p.source_id + "', frame " +
                  std::to_string(p.frame_index) + "): offset " + std::to_string(offset) +
                  " does not address a complete record in a pak of " + std::to_string(pak.size()) + " bytes");
    const std::uint8_t* src = pak.data() + offset;
    p.lr = Frame(kLrPatch, kLrPatch, Subsampling::C444);
    p.hr = Frame(kHrPatch, kHrPatch, Subsampling::C444);
    for (Frame* f : {&p.lr, &p.hr})
      for (auto& plane : f->planes) {
        std::copy_n(src, plane.size(), plane.begin());
        src += plane.size();
      }
    m.pairs.push_back(std::move(p));
  }
  return m;
}

}  // namespace

EncodedManifest encode_manifest(const Manifest& m, const std::string& pak_name) {
  EncodedManifest e;
  e.jsonl = header_line(m.seed, m.requested, m.pairs.size(), m.qp_list, pak_name);
  e.pak.assign(kPakMagic, kPakMagic + sizeof kPakMagic);
  e.pak.reserve(sizeof kPakMagic + m.pairs.size() * kPakRecordBytes);
  for (std::size_t i = 0; i < m.pairs.size(); ++i) {
    e.jsonl += record_line(m.pairs[i], i, e.pak.size());
    append_record(e.pak, m.pairs[i]);
  }
  return e;
}

Manifest decode_manifest(const std::string& jsonl, std::span<const std::uint8_t> pak) {
  return decode_with_header(jsonl, pak, nullptr);
}

std::filesystem::path pak_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  p.replace_extension(".pak");
  if (p == manifest) p += ".pak";
  return p;
}

struct ManifestWriter::Impl {
  std::filesystem::path path, pak_path, tmp_manifest, tmp_pak;
  std::ofstream manifest, pak;
  std::uint64_t expected = 0, written = 0, offset = 0;
  bool committed = false;
  std::vector<std::uint8_t> buf;
};

ManifestWriter::ManifestWriter(const std::filesystem::path& path, std::uint64_t seed, std::uint64_t count,
                               const std::vector<int>& qp_list)
    : impl_(new Impl) {
  impl_->path = path;
  impl_->pak_path = pak_path_for(path);
  impl_->tmp_manifest = path.string() + ".partial";
  impl_->tmp_pak = impl_->pak_path.string() + ".partial";
  impl_->expected = count;
  impl_->manifest.open(impl_->tmp_manifest, std::ios::binary | std::ios::trunc);
  impl_->pak.open(impl_->tmp_pak, std::ios::binary | std::ios::trunc);
  if (!impl_->manifest || !impl_->pak) {
    delete impl_;
    throw Error("cannot create manifest output next to " + path.string());
  }
  impl_->manifest << header_line(seed, count, count, qp_list, impl_->pak_path.filename().string());
  impl_->pak.write(kPakMagic, sizeof kPakMagic);
  impl_->offset = sizeof kPakMagic;
}

ManifestWriter::~ManifestWriter() {
  if (!impl_->committed) {
    impl_->manifest.close();
    impl_->pak.close();
    std::error_code ec;
    std::filesystem::remove(impl_->tmp_manifest, ec);
    std::filesystem::remove(impl_->tmp_pak, ec);
  }
  delete impl_;
}

void ManifestWriter::add(const PatchPair& p) {
  if (impl_->written == impl_->expected) throw Error("manifest: more pairs than declared");
  impl_->buf.clear();
  append_record(impl_->buf, p);
  impl_->manifest << record_line(p, impl_->written, impl_->offset);
  impl_->pak.write(reinterpret_cast<const char*>(impl_->buf.data()), static_cast<std::streamsize>(impl_->buf.size()));
  impl_->offset += impl_->buf.size();
  ++impl_->written;
}

void ManifestWriter::commit() {
  if (impl_->written != impl_->expected)
    throw Error("manifest: declared " + std::to_string(impl_->expected) + " pairs, wrote " +
                std::to_string(impl_->written));
  impl_->manifest.close();
  impl_->pak.close();
  if (!impl_->manifest || !impl_->pak) throw Error("manifest: write failed for " + impl_->path.string());
  std::filesystem::rename(impl_->tmp_pak, impl_->pak_path);
  std::filesystem::rename(impl_->tmp_manifest, impl_->path);
  impl_->committed = true;
}

void write_manifest(const Manifest& m, const std::filesystem::path& path) {
  const auto e = encode_manifest(m, pak_path_for(path).filename().string());
  // Header "requested" is part of the manifest value, so write the encoded
  // form directly rather than through ManifestWriter.
  write_file_atomic(pak_path_for(path), e.pak);
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(e.jsonl.data()), e.jsonl.size()));
}

Manifest read_manifest(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  std::istringstream in(text);
  std::string first;
  std::getline(in, first);
  std::string pak_name;
  try {
    pak_name = parse_header(json::parse(first)).pak;
  } catch (const json::exception& e) {
    throw Error("manifest " + path.string() + ": " + e.what());
  }
  if (std::filesystem::path(pak_name).has_parent_path()) throw Error("manifest: pak name must be a bare file name");
  const auto pak = read_file(path.parent_path() / pak_name);
  return decode_manifest(text, pak);
}

PrepareSummary prepare_dataset(const PrepareOptions& opt) {
  if (opt.qp_list.empty()) throw Error("prepare-data: QP list is empty");
  if (!std::filesystem::is_directory(opt.hr_dir)) throw Error("HR directory not found: " + opt.hr_dir.string());
  if (!std::filesystem::is_directory(opt.lr_dir)) throw Error("LR directory not found: " + opt.lr_dir.string());
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(opt.hr_dir))
    if (entry.is_regular_file() && is_y4m_path(entry.path())) names.push_back(entry.path().stem().string());
  std::sort(names.begin(), names.end());

  struct Source {
    std::string name;
    int qp;
    std::filesystem::path lr;
  };
  std::vector<Source> sources;
  for (const auto& name : names)
    for (int qp : opt.qp_list) {
      auto lr = opt.lr_dir / (name + "_qp" + std::to_string(qp) + ".y4m");
      if (std::filesystem::exists(lr)) sources.push_back({name, qp, lr});
    }
  if (sources.empty())
    throw Error("prepare-data: no <name>_qp<QP>.y4m files in " + opt.lr_dir.string() + " match a <name>.y4m in " +
                opt.hr_dir.string());

  Xoshiro256 seeds(opt.seed);
  ManifestWriter writer(opt.out, opt.seed, opt.count, opt.qp_list);
  const std::uint64_t base = opt.count / sources.size(), extra = opt.count % sources.size();
  std::string loaded_name;
  VideoSequence hr;
  for (std::size_t i = 0; i < sources.size(); ++i) {
    const auto& s = sources[i];
    const std::uint64_t n = base + (i < extra ? 1 : 0);
    const std::uint64_t seed = seeds.next();
    if (n == 0) continue;
    if (s.name != loaded_name) {
      hr = load_video(opt.hr_dir / (s.name + ".y4m"));
      loaded_name = s.name;
    }
    const VideoSequence lr = load_video(s.lr);
    try {
      extract_patch_pairs_to(lr, hr, n, seed, s.qp, s.name + "_qp" + std::to_string(s.qp), opt.augment,
                             [&](PatchPair&& p) { writer.add(p); });
    } catch (const Error& e) {
      throw Error(s.lr.string() + ": " + e.what());
    }
  }
  writer.commit();
  return {sources.size(), opt.count};
}

}  // namespace vsrhe
