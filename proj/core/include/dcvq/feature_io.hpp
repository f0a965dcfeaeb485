#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dcvq/config.hpp"
#include "dcvq/errors.hpp"
#include "dcvq/rng.hpp"

namespace dcvq {

// One level of backbone features for a clip: either already spatially pooled
// (N x c) or a spatial stack (N x h x w x c). Values are stored as 32-bit
// floats, matching the on-disk format bit for bit.
struct FeatureLevel {
  enum class Kind : std::uint8_t { pooled = 0, spatial = 1 };
  Kind kind = Kind::pooled;
  std::size_t h = 0, w = 0;  // spatial only
  std::size_t c = 0;
  std::vector<float> data;  // row-major over (frame, [h, w,] channel)
};

// Per-frame multi-level features for one video; the ingestion boundary of
// the whole pipeline.
struct FeatureClip {
  std::size_t n_frames = 0;
  std::vector<FeatureLevel> levels;
  std::string source_id;

  void validate() const;  // throws on inconsistent shapes / non-finite values
};

// Binary feature file, magic "DCVF": u32 version=1, u32 N, u32 L, then per
// level u8 kind, dims (u32 c for pooled; u32 h, w, c for spatial), then
// row-major f32 little-endian payload.
void write_feature_file(const FeatureClip& clip, const std::string& path);
FeatureClip read_feature_file(const std::string& path);

// ---- manifest ----------------------------------------------------------------

enum class Split { train, val, test, unassigned };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct ManifestEntry {
  std::string video_id;
  std::string feature_path;  // as written in the file
  std::string resolved_path; // absolute/relative to cwd, resolved at load
  double mos = 0.0;
  Split split = Split::unassigned;
};

// CSV with header `video_id,feature_path,mos[,split]`. Order is preserved.
// Errors: missing column, unparsable mos, duplicate video_id, unresolvable
// feature path.
std::vector<ManifestEntry> load_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestEntry>& entries, const std::string& path);

// Seed-deterministic 6:2:2 split (floor/floor/remainder); needs >= 3 entries.
void split_dataset(std::vector<ManifestEntry>& entries, std::uint64_t seed,
                   double train_ratio = 0.6, double val_ratio = 0.2);

// ---- synthetic clips -----------------------------------------------------------

// Recipe for one synthetic clip. Feature content is built from three planted
// signals: a per-clip theme direction carried by the frames in
// theme_segments (last level), distortion bursts that inject per-frame
// feature jitter (strongest at low levels), and white noise.
struct SyntheticSpec {
  std::size_t n_frames = 64;
  std::vector<std::size_t> channels = {96, 192, 384, 768};  // per level, low to high
  std::size_t theme_dim = 768;          // leading channels of the last level
  double burst_rate = 0.2;              // target fraction of burst frames, in [0,1]
  std::vector<std::size_t> theme_segments;  // frames carrying the theme signal
  double noise_scale = 0.1;

  // Signal strengths; defaults give a clean planted structure.
  double imp_bg = 0.15;       // importance of non-theme frames, in (0,1]
  double burst_mag = 3.0;     // jitter scale at the lowest level
  double last_level_burst_leak = 0.1;  // fraction of burst_mag on the last level
  double theme_mag = 2.0;
  double base_mag = 1.0;
  std::size_t burst_len_min = 8;   // burst episode length range (frames)
  std::size_t burst_len_max = 16;

  void validate() const;
};

// Ground-truth record of what was planted in a clip.
struct SyntheticTruth {
  std::vector<std::uint8_t> burst;   // per frame, 0/1
  std::vector<std::uint8_t> theme;   // per frame, 0/1
  std::vector<double> importance;    // imp_bg + (1 - imp_bg) * theme
  double mos = 0.0;
};

// mos = 5 - 4 * clamp(sum(imp * burst) / sum(imp), 0, 1). Both pathways are
// needed to predict it: bursts must be detected from the features and their
// penalty weighted by each frame's theme relevance.
double synthetic_mos(const std::vector<std::uint8_t>& burst,
                     const std::vector<double>& importance);

// Deterministic per (spec, seed).
std::pair<FeatureClip, SyntheticTruth> generate_synthetic_clip(const SyntheticSpec& spec,
                                                               std::uint64_t seed);

// ---- corpus generation -----------------------------------------------------------

// Parameters for a whole corpus of synthetic clips; per-clip burst rate is
// drawn uniform in [0, burst_rate_max] and the theme block covers a uniform
// fraction in [theme_frac_min, theme_frac_max] at a random offset.
struct CorpusSpec {
  SyntheticSpec clip;            // template; burst_rate / theme_segments filled per clip
  double burst_rate_max = 0.6;
  double theme_frac_min = 0.3;
  double theme_frac_max = 0.7;

  static CorpusSpec from_config(const KeyValueConfig& cfg);
  void validate() const;
};

struct GeneratedCorpus {
  std::vector<ManifestEntry> manifest;
  std::vector<SyntheticTruth> truths;  // parallel to manifest
};

// Writes `<out_dir>/<video_id>.dcvf` feature files plus manifest.csv and
// truth.csv (the ground-truth sidecar: video_id,frame,burst,importance,theme).
// Splits are assigned 6:2:2 when count >= 3.
GeneratedCorpus generate_corpus(const CorpusSpec& spec, std::size_t count,
                                const std::string& out_dir, std::uint64_t seed);

// Sidecar I/O for tests and tooling.
void write_truth_sidecar(const std::vector<ManifestEntry>& manifest,
                         const std::vector<SyntheticTruth>& truths, const std::string& path);
std::vector<std::pair<std::string, SyntheticTruth>> load_truth_sidecar(const std::string& path);

}  // namespace dcvq
