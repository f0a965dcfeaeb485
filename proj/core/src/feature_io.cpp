#include "dcvq/feature_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace dcvq {

namespace {

constexpr char kFeatureMagic[4] = {'D', 'C', 'V', 'F'};
constexpr std::uint32_t kFeatureVersion = 1;

void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) {
    throw FormatError(FormatError::Kind::truncated, "feature file: truncated header");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f32(std::ostream& out, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(out, bits);
}

void put_f32_block(std::ostream& out, const std::vector<float>& data) {
  for (float v : data) put_f32(out, v);
}

std::vector<float> get_f32_block(std::istream& in, std::size_t count) {
  std::vector<float> out(count);
  std::vector<unsigned char> raw(count * 4);
  if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(FormatError::Kind::truncated, "feature file: truncated payload");
  }
  for (std::size_t i = 0; i < count; ++i) {
    std::uint32_t bits = static_cast<std::uint32_t>(raw[4 * i]) |
                         (static_cast<std::uint32_t>(raw[4 * i + 1]) << 8) |
                         (static_cast<std::uint32_t>(raw[4 * i + 2]) << 16) |
                         (static_cast<std::uint32_t>(raw[4 * i + 3]) << 24);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void FeatureClip::validate() const {
  if (n_frames == 0) throw DataError("feature clip: zero frames");
  if (levels.empty()) throw DataError("feature clip: no levels");
  for (std::size_t l = 0; l < levels.size(); ++l) {
    const FeatureLevel& lv = levels[l];
    if (lv.c == 0) throw DataError("feature clip: level " + std::to_string(l) + " has 0 channels");
    std::size_t expect = n_frames * lv.c;
    if (lv.kind == FeatureLevel::Kind::spatial) {
      if (lv.h == 0 || lv.w == 0) {
        throw DataError("feature clip: level " + std::to_string(l) + " has empty spatial dims");
      }
      expect = n_frames * lv.h * lv.w * lv.c;
    }
    if (lv.data.size() != expect) {
      throw DataError("feature clip: level " + std::to_string(l) + " holds " +
                      std::to_string(lv.data.size()) + " values, expected " +
                      std::to_string(expect));
    }
    for (float v : lv.data) {
      if (!std::isfinite(v)) {
        throw FormatError(FormatError::Kind::non_finite,
                          "feature clip: non-finite value at level " + std::to_string(l));
      }
    }
  }
}

void write_feature_file(const FeatureClip& clip, const std::string& path) {
  clip.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("feature file: cannot open " + path + " for writing");
  out.write(kFeatureMagic, 4);
  put_u32(out, kFeatureVersion);
  put_u32(out, static_cast<std::uint32_t>(clip.n_frames));
  put_u32(out, static_cast<std::uint32_t>(clip.levels.size()));
  for (const FeatureLevel& lv : clip.levels) {
    const unsigned char kind = static_cast<unsigned char>(lv.kind);
    out.write(reinterpret_cast<const char*>(&kind), 1);
    if (lv.kind == FeatureLevel::Kind::spatial) {
      put_u32(out, static_cast<std::uint32_t>(lv.h));
      put_u32(out, static_cast<std::uint32_t>(lv.w));
    }
    put_u32(out, static_cast<std::uint32_t>(lv.c));
    put_f32_block(out, lv.data);
  }
  if (!out) throw DataError("feature file: write failed for " + path);
}

FeatureClip read_feature_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("feature file: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4)) {
    throw FormatError(FormatError::Kind::truncated, "feature file: shorter than magic");
  }
  if (std::memcmp(magic, kFeatureMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "feature file: bad magic in " + path);
  }
  const std::uint32_t version = get_u32(in);
  if (version != kFeatureVersion) {
    throw FormatError(FormatError::Kind::bad_version,
                      "feature file: unsupported version " + std::to_string(version));
  }
  FeatureClip clip;
  clip.n_frames = get_u32(in);
  const std::uint32_t n_levels = get_u32(in);
  clip.source_id = fs::path(path).stem().string();
  for (std::uint32_t l = 0; l < n_levels; ++l) {
    unsigned char kind_byte;
    if (!in.read(reinterpret_cast<char*>(&kind_byte), 1)) {
      throw FormatError(FormatError::Kind::truncated, "feature file: truncated level header");
    }
    if (kind_byte > 1) {
      throw FormatError(FormatError::Kind::other,
                        "feature file: unknown level kind " + std::to_string(kind_byte));
    }
    FeatureLevel lv;
    lv.kind = static_cast<FeatureLevel::Kind>(kind_byte);
    std::size_t count = clip.n_frames;
    if (lv.kind == FeatureLevel::Kind::spatial) {
      lv.h = get_u32(in);
      lv.w = get_u32(in);
      count *= lv.h * lv.w;
    }
    lv.c = get_u32(in);
    count *= lv.c;
    lv.data = get_f32_block(in, count);
    for (float v : lv.data) {
      if (!std::isfinite(v)) {
        throw FormatError(FormatError::Kind::non_finite,
                          "feature file: non-finite value in " + path);
      }
    }
    clip.levels.push_back(std::move(lv));
  }
  clip.validate();
  return clip;
}

// ---- manifest ----------------------------------------------------------------

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    default: return "unassigned";
  }
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  if (name == "unassigned" || name.empty()) return Split::unassigned;
  throw DataError("manifest: unknown split '" + name + "'");
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("manifest: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError("manifest: empty file " + path);
  std::vector<std::string> header = split_csv_line(line);
  const bool has_split = header.size() == 4 && header[3] == "split";
  if (!(header.size() == 3 || has_split) || header[0] != "video_id" ||
      header[1] != "feature_path" || header[2] != "mos") {
    throw DataError("manifest: bad header '" + line +
                    "', expected video_id,feature_path,mos[,split]");
  }
  const fs::path base = fs::path(path).parent_path();
  std::vector<ManifestEntry> entries;
  std::set<std::string> seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError("manifest: line " + std::to_string(line_no) + " has " +
                      std::to_string(f.size()) + " fields, expected " +
                      std::to_string(header.size()));
    }
    ManifestEntry e;
    e.video_id = f[0];
    e.feature_path = f[1];
    if (!seen.insert(e.video_id).second) {
      throw DataError("manifest: duplicate video_id '" + e.video_id + "'");
    }
    try {
      std::size_t pos = 0;
      e.mos = std::stod(f[2], &pos);
      if (pos != f[2].size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      throw DataError("manifest: line " + std::to_string(line_no) + ": unparsable mos '" +
                      f[2] + "'");
    }
    if (!std::isfinite(e.mos)) {
      throw DataError("manifest: line " + std::to_string(line_no) + ": non-finite mos");
    }
    if (has_split) e.split = split_from_name(f[3]);
    fs::path p(e.feature_path);
    e.resolved_path = (p.is_absolute() ? p : base / p).string();
    if (!fs::exists(e.resolved_path)) {
      throw DataError("manifest: feature file not found: " + e.resolved_path);
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("manifest: cannot open " + path + " for writing");
  out << "video_id,feature_path,mos,split\n";
  for (const ManifestEntry& e : entries) {
    out << e.video_id << ',' << e.feature_path << ',' << fmt_double(e.mos) << ','
        << split_name(e.split) << '\n';
  }
}

void split_dataset(std::vector<ManifestEntry>& entries, std::uint64_t seed, double train_ratio,
                   double val_ratio) {
  const std::size_t n = entries.size();
  if (n < 3) throw DataError("split_dataset: needs at least 3 entries, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    std::size_t j = static_cast<std::size_t>(rng.next_below(i + 1));
    std::swap(order[i], order[j]);
  }
  const std::size_t n_train = static_cast<std::size_t>(std::floor(train_ratio * static_cast<double>(n)));
  const std::size_t n_val = static_cast<std::size_t>(std::floor(val_ratio * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    Split s = Split::test;
    if (i < n_train) s = Split::train;
    else if (i < n_train + n_val) s = Split::val;
    entries[order[i]].split = s;
  }
}

// ---- synthetic clips -----------------------------------------------------------

void SyntheticSpec::validate() const {
  if (n_frames == 0) throw DataError("synthetic spec: n_frames must be positive");
  if (channels.empty()) throw DataError("synthetic spec: needs at least one level");
  for (std::size_t c : channels) {
    if (c == 0) throw DataError("synthetic spec: level with 0 channels");
  }
  if (theme_dim == 0 || theme_dim > channels.back()) {
    throw DataError("synthetic spec: theme_dim must be in [1, last level width]");
  }
  if (burst_rate < 0.0 || burst_rate > 1.0) {
    throw DataError("synthetic spec: burst_rate must be in [0,1]");
  }
  if (noise_scale < 0.0) throw DataError("synthetic spec: noise_scale must be >= 0");
  if (imp_bg <= 0.0 || imp_bg > 1.0) throw DataError("synthetic spec: imp_bg must be in (0,1]");
  if (burst_len_min == 0 || burst_len_max < burst_len_min) {
    throw DataError("synthetic spec: bad burst episode length range");
  }
  for (std::size_t i : theme_segments) {
    if (i >= n_frames) throw DataError("synthetic spec: theme segment index out of range");
  }
}

double synthetic_mos(const std::vector<std::uint8_t>& burst,
                     const std::vector<double>& importance) {
  if (burst.size() != importance.size() || burst.empty()) {
    throw DataError("synthetic_mos: burst/importance size mismatch");
  }
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < burst.size(); ++i) {
    num += importance[i] * static_cast<double>(burst[i]);
    den += importance[i];
  }
  const double penalty = std::clamp(num / den, 0.0, 1.0);
  return 5.0 - 4.0 * penalty;
}

std::pair<FeatureClip, SyntheticTruth> generate_synthetic_clip(const SyntheticSpec& spec,
                                                               std::uint64_t seed) {
  spec.validate();
  const std::size_t N = spec.n_frames;
  const std::size_t L = spec.channels.size();
  SplitMix64 rng(seed);

  // Draw order is fixed: theme direction, per-level base content, burst mask,
  // then per-frame content/jitter/noise.
  std::vector<double> theme_dir(spec.theme_dim);
  for (double& v : theme_dir) v = rng.next_normal();

  std::vector<std::vector<double>> base(L);
  for (std::size_t l = 0; l < L; ++l) {
    base[l].resize(spec.channels[l]);
    for (double& v : base[l]) v = spec.base_mag * rng.next_normal();
  }

  SyntheticTruth truth;
  truth.burst.assign(N, 0);
  truth.theme.assign(N, 0);
  for (std::size_t i : spec.theme_segments) truth.theme[i] = 1;

  // Bursts arrive as contiguous episodes until the target frame count is
  // covered; the realized mask (not the target) is the ground truth.
  const std::size_t target = static_cast<std::size_t>(
      std::llround(spec.burst_rate * static_cast<double>(N)));
  std::size_t marked = 0, attempts = 0;
  while (marked < target && attempts < 64) {
    ++attempts;
    const std::size_t start = static_cast<std::size_t>(rng.next_below(N));
    const std::size_t len =
        spec.burst_len_min +
        static_cast<std::size_t>(rng.next_below(spec.burst_len_max - spec.burst_len_min + 1));
    for (std::size_t i = start; i < std::min(start + len, N); ++i) {
      if (!truth.burst[i]) {
        truth.burst[i] = 1;
        ++marked;
      }
    }
  }

  FeatureClip clip;
  clip.n_frames = N;
  clip.levels.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    clip.levels[l].kind = FeatureLevel::Kind::pooled;
    clip.levels[l].c = spec.channels[l];
    clip.levels[l].data.resize(N * spec.channels[l]);
  }

  std::vector<double> content(spec.theme_dim);
  for (std::size_t i = 0; i < N; ++i) {
    if (truth.theme[i]) {
      content = theme_dir;
    } else {
      for (double& v : content) v = rng.next_normal();
    }
    for (std::size_t l = 0; l < L; ++l) {
      const std::size_t c = spec.channels[l];
      const double jitter_scale =
          (l + 1 == L) ? spec.burst_mag * spec.last_level_burst_leak
                       : spec.burst_mag / static_cast<double>(std::size_t{1} << l);
      float* row = clip.levels[l].data.data() + i * c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        double v = base[l][ch];
        if (l + 1 == L && ch < spec.theme_dim) v += spec.theme_mag * content[ch];
        if (truth.burst[i]) v += jitter_scale * rng.next_normal();
        v += spec.noise_scale * rng.next_normal();
        row[ch] = static_cast<float>(v);
      }
    }
  }

  truth.importance.resize(N);
  for (std::size_t i = 0; i < N; ++i) {
    truth.importance[i] = spec.imp_bg + (1.0 - spec.imp_bg) * static_cast<double>(truth.theme[i]);
  }
  truth.mos = synthetic_mos(truth.burst, truth.importance);
  return {std::move(clip), std::move(truth)};
}

// ---- corpus --------------------------------------------------------------------

CorpusSpec CorpusSpec::from_config(const KeyValueConfig& cfg) {
  CorpusSpec s;
  s.clip.n_frames = static_cast<std::size_t>(cfg.get_u64("n_frames", s.clip.n_frames));
  s.clip.channels = cfg.get_size_list("channels", s.clip.channels);
  s.clip.theme_dim = static_cast<std::size_t>(cfg.get_u64("theme_dim", s.clip.channels.back()));
  s.clip.noise_scale = cfg.get_double("noise_scale", s.clip.noise_scale);
  s.clip.imp_bg = cfg.get_double("imp_bg", s.clip.imp_bg);
  s.clip.burst_mag = cfg.get_double("burst_mag", s.clip.burst_mag);
  s.clip.last_level_burst_leak =
      cfg.get_double("last_level_burst_leak", s.clip.last_level_burst_leak);
  s.clip.theme_mag = cfg.get_double("theme_mag", s.clip.theme_mag);
  s.clip.base_mag = cfg.get_double("base_mag", s.clip.base_mag);
  s.clip.burst_len_min = static_cast<std::size_t>(cfg.get_u64("burst_len_min", s.clip.burst_len_min));
  s.clip.burst_len_max = static_cast<std::size_t>(cfg.get_u64("burst_len_max", s.clip.burst_len_max));
  s.burst_rate_max = cfg.get_double("burst_rate_max", s.burst_rate_max);
  s.theme_frac_min = cfg.get_double("theme_frac_min", s.theme_frac_min);
  s.theme_frac_max = cfg.get_double("theme_frac_max", s.theme_frac_max);
  const std::vector<std::string> known = {
      "n_frames",      "channels",   "theme_dim",      "noise_scale",
      "imp_bg",        "burst_mag",  "last_level_burst_leak", "theme_mag",
      "base_mag",      "burst_len_min", "burst_len_max", "burst_rate_max",
      "theme_frac_min", "theme_frac_max"};
  for (const std::string& k : cfg.unknown_keys(known)) {
    throw ConfigError("corpus spec: unknown key '" + k + "'");
  }
  s.validate();
  return s;
}

void CorpusSpec::validate() const {
  if (burst_rate_max < 0.0 || burst_rate_max > 1.0) {
    throw DataError("corpus spec: burst_rate_max must be in [0,1]");
  }
  if (!(0.0 <= theme_frac_min && theme_frac_min <= theme_frac_max && theme_frac_max <= 1.0)) {
    throw DataError("corpus spec: theme fraction range must satisfy 0 <= min <= max <= 1");
  }
  SyntheticSpec probe = clip;
  probe.burst_rate = 0.0;
  probe.validate();
}

GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::size_t count,
                                const std::string& out_dir, std::uint64_t seed) {
  spec.validate();
  fs::create_directories(out_dir);
  SplitMix64 root(seed);
  GeneratedCorpus corpus;
  const std::size_t N = spec.clip.n_frames;
  for (std::size_t k = 0; k < count; ++k) {
    SplitMix64 layout = root.derive({0x1ab01ull, k});
    SyntheticSpec s = spec.clip;
    s.burst_rate = spec.burst_rate_max * layout.next_double();
    const double frac =
        spec.theme_frac_min + (spec.theme_frac_max - spec.theme_frac_min) * layout.next_double();
    std::size_t len = static_cast<std::size_t>(std::llround(frac * static_cast<double>(N)));
    len = std::clamp<std::size_t>(len, 1, N);
    const std::size_t start = static_cast<std::size_t>(layout.next_below(N - len + 1));
    s.theme_segments.clear();
    for (std::size_t i = start; i < start + len; ++i) s.theme_segments.push_back(i);

    auto [clip, truth] = generate_synthetic_clip(s, root.derive({0xc11bull, k}).state());

    char name[32];
    std::snprintf(name, sizeof(name), "video_%05zu", k);
    clip.source_id = name;
    const std::string file_name = std::string(name) + ".dcvf";
    const std::string full_path = (fs::path(out_dir) / file_name).string();
    write_feature_file(clip, full_path);

    ManifestEntry e;
    e.video_id = name;
    e.feature_path = file_name;
    e.resolved_path = full_path;
    e.mos = truth.mos;
    corpus.manifest.push_back(std::move(e));
    corpus.truths.push_back(std::move(truth));
  }
  if (count >= 3) split_dataset(corpus.manifest, seed);
  write_manifest(corpus.manifest, (fs::path(out_dir) / "manifest.csv").string());
  write_truth_sidecar(corpus.manifest, corpus.truths,
                      (fs::path(out_dir) / "truth.csv").string());
  return corpus;
}

void write_truth_sidecar(const std::vector<ManifestEntry>& manifest,
                         const std::vector<SyntheticTruth>& truths, const std::string& path) {
  if (manifest.size() != truths.size()) {
    throw DataError("truth sidecar: manifest/truth size mismatch");
  }
  std::ofstream out(path);
  if (!out) throw DataError("truth sidecar: cannot open " + path + " for writing");
  out << "video_id,frame,burst,importance,theme\n";
  for (std::size_t k = 0; k < manifest.size(); ++k) {
    const SyntheticTruth& t = truths[k];
    for (std::size_t i = 0; i < t.burst.size(); ++i) {
      out << manifest[k].video_id << ',' << i << ',' << static_cast<int>(t.burst[i]) << ','
          << fmt_double(t.importance[i]) << ',' << static_cast<int>(t.theme[i]) << '\n';
    }
  }
}

std::vector<std::pair<std::string, SyntheticTruth>> load_truth_sidecar(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("truth sidecar: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || split_csv_line(line) !=
      std::vector<std::string>{"video_id", "frame", "burst", "importance", "theme"}) {
    throw DataError("truth sidecar: bad header in " + path);
  }
  std::vector<std::pair<std::string, SyntheticTruth>> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != 5) throw DataError("truth sidecar: bad row '" + line + "'");
    if (out.empty() || out.back().first != f[0]) out.push_back({f[0], SyntheticTruth{}});
    SyntheticTruth& t = out.back().second;
    t.burst.push_back(static_cast<std::uint8_t>(std::stoi(f[2])));
    t.importance.push_back(std::stod(f[3]));
    t.theme.push_back(static_cast<std::uint8_t>(std::stoi(f[4])));
  }
  for (auto& [id, t] : out) t.mos = synthetic_mos(t.burst, t.importance);
  return out;
}

}  // namespace dcvq
