#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dcvq/config.hpp"
#include "dcvq/feature_io.hpp"
#include "dcvq/metrics.hpp"
#include "dcvq/model.hpp"
#include "dcvq/quality.hpp"

namespace dcvq {

struct TrainConfig {
  std::size_t batch_size = 16;
  double lr = 0.001;
  double weight_decay = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::size_t epochs = 200;
  std::size_t early_stop = 30;  // epochs without validation improvement
  double grad_clip = 5.0;       // global-norm clip; 0 disables
  std::size_t s_m = 8;          // inference-time sample count
  std::uint64_t seed = 0;
  ModelConfig model;            // includes s0 and the ablation toggles

  static TrainConfig from_config(const KeyValueConfig& cfg);
  KeyValueConfig to_config() const;
  void validate() const;
};

// ---- optimizer --------------------------------------------------------------

struct AdamWOpts {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.001;
};

struct AdamWState {
  std::vector<std::vector<double>> m, v;  // first/second moments per parameter
  std::size_t step = 0;
};

// Bias-corrected moment update with decoupled weight decay:
//   p <- p * (1 - lr*wd) - lr * m_hat / (sqrt(v_hat) + eps)
void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const std::vector<double>*>& grads, AdamWState& state,
                const AdamWOpts& opts);

// ---- training ----------------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_srocc = 0.0;
};

struct TrainResult {
  Model model;  // parameters of the best-validation epoch
  std::size_t best_epoch = 0;
  double best_val_srocc = 0.0;
  RemapStats stats;  // train-split remap stats under the best parameters
  std::vector<EpochLog> log;
};

// Deterministic given (config, manifest, seed): per epoch a seeded shuffle,
// one fresh TSF draw per training clip, per-batch remap, MAE loss, backward,
// AdamW step; the checkpoint with the best validation SROCC (s_m = 1) wins.
TrainResult train(const TrainConfig& cfg, const std::vector<ManifestEntry>& manifest,
                  const std::function<void(const EpochLog&)>& on_epoch = nullptr);

// ---- checkpoints ----------------------------------------------------------------

// Binary format, magic "DCVC": u32 version, u32 config-text length + UTF-8
// key=value block, u32 tensor count, then per tensor u32 name length + name +
// u32 rank + u32 dims + f32 little-endian payload.
struct Checkpoint {
  TrainConfig config;
  Model model;
  std::size_t epoch = 0;
  double best_val_srocc = 0.0;
  RemapStats stats;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// ---- evaluation -----------------------------------------------------------------

struct PredictionRow {
  std::string video_id;
  double mos = 0.0;
  double q_raw = 0.0;
  double q_mapped = 0.0;
};

struct EvalResult {
  MetricReport report;
  std::vector<PredictionRow> rows;
  RemapStats stats;  // q stats of this split, label range from training
};

// Multi-sample prediction per clip, split-level remap (q mean/std over this
// split's raw predictions; label range from the checkpoint), then metrics.
EvalResult evaluate(const Model& model, const std::vector<ManifestEntry>& entries, Split split,
                    std::size_t s_m, std::uint64_t seed, double s_min, double s_max);

struct StabilityRow {
  std::size_t s_m = 0;
  double mean_std = 0.0;  // mean per-video std of mapped predictions / label range
};

// Repeats each prediction with fresh sampling seeds and reports how the
// per-video spread shrinks as s_m grows.
std::vector<StabilityRow> tsf_stability_report(const Model& model,
                                               const std::vector<ManifestEntry>& entries,
                                               Split split,
                                               const std::vector<std::size_t>& s_m_list,
                                               std::size_t repeats, std::uint64_t seed,
                                               const RemapStats& stats);

// Entries of one split, preserving manifest order.
std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split);

// Formats one training log line as JSON (stable field order, %.17g floats).
std::string format_epoch_log(const EpochLog& e);

}  // namespace dcvq
