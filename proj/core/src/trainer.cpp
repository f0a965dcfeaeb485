#include "dcvq/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace dcvq {

namespace {

// Substream tags for the deterministic RNG tree.
constexpr std::uint64_t kTagInit = 0x1a17ull;
constexpr std::uint64_t kTagShuffle = 0x5680ull;
constexpr std::uint64_t kTagTsf = 0x75f0ull;
constexpr std::uint64_t kTagVal = 0xa1d0ull;
constexpr std::uint64_t kTagFinal = 0xf1a1ull;
constexpr std::uint64_t kTagEval = 0xe0a1ull;
constexpr std::uint64_t kTagStab = 0x57abull;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// ---- config -------------------------------------------------------------------

TrainConfig TrainConfig::from_config(const KeyValueConfig& cfg) {
  TrainConfig c;
  c.batch_size = static_cast<std::size_t>(cfg.get_u64("batch_size", c.batch_size));
  c.lr = cfg.get_double("lr", c.lr);
  c.weight_decay = cfg.get_double("weight_decay", c.weight_decay);
  c.beta1 = cfg.get_double("beta1", c.beta1);
  c.beta2 = cfg.get_double("beta2", c.beta2);
  c.adam_eps = cfg.get_double("adam_eps", c.adam_eps);
  c.epochs = static_cast<std::size_t>(cfg.get_u64("epochs", c.epochs));
  c.early_stop = static_cast<std::size_t>(cfg.get_u64("early_stop", c.early_stop));
  c.grad_clip = cfg.get_double("grad_clip", c.grad_clip);
  c.s_m = static_cast<std::size_t>(cfg.get_u64("s_m", c.s_m));
  c.seed = cfg.get_u64("seed", c.seed);
  c.model.level_channels = cfg.get_size_list("level_channels", {});  // empty: infer from data
  c.model.tct_channels = static_cast<std::size_t>(cfg.get_u64("tct_channels", c.model.tct_channels));
  c.model.n_heads = static_cast<std::size_t>(cfg.get_u64("n_heads", c.model.n_heads));
  c.model.d_hidden = static_cast<std::size_t>(cfg.get_u64("d_hidden", c.model.d_hidden));
  c.model.w_hidden = static_cast<std::size_t>(cfg.get_u64("w_hidden", c.model.w_hidden));
  c.model.ffn_mult = static_cast<std::size_t>(cfg.get_u64("ffn_mult", c.model.ffn_mult));
  c.model.s0 = static_cast<std::size_t>(cfg.get_u64("s0", c.model.s0));
  c.model.multilevel = cfg.get_bool("multilevel", c.model.multilevel);
  c.model.temporal_diff = cfg.get_bool("temporal_diff", c.model.temporal_diff);
  c.model.pure_encoder = cfg.get_bool("pure_encoder", c.model.pure_encoder);
  c.model.zero_token_target = cfg.get_bool("zero_token_target", c.model.zero_token_target);
  c.model.use_tct = cfg.get_bool("use_tct", c.model.use_tct);
  c.model.d_head_primary_only = cfg.get_bool("d_head_primary_only", c.model.d_head_primary_only);
  c.model.remap_decreasing = cfg.get_bool("remap_decreasing", c.model.remap_decreasing);
  const std::vector<std::string> known = {
      "batch_size", "lr", "weight_decay", "beta1", "beta2", "adam_eps", "epochs",
      "early_stop", "grad_clip", "s_m", "seed", "level_channels", "tct_channels",
      "n_heads", "d_hidden", "w_hidden", "ffn_mult", "s0", "multilevel",
      "temporal_diff", "pure_encoder", "zero_token_target", "use_tct",
      "d_head_primary_only", "remap_decreasing"};
  for (const std::string& k : cfg.unknown_keys(known)) {
    throw ConfigError("train config: unknown key '" + k + "'");
  }
  c.validate();
  return c;
}

KeyValueConfig TrainConfig::to_config() const {
  KeyValueConfig cfg;
  cfg.set("batch_size", std::to_string(batch_size));
  cfg.set("lr", fmt_double(lr));
  cfg.set("weight_decay", fmt_double(weight_decay));
  cfg.set("beta1", fmt_double(beta1));
  cfg.set("beta2", fmt_double(beta2));
  cfg.set("adam_eps", fmt_double(adam_eps));
  cfg.set("epochs", std::to_string(epochs));
  cfg.set("early_stop", std::to_string(early_stop));
  cfg.set("grad_clip", fmt_double(grad_clip));
  cfg.set("s_m", std::to_string(s_m));
  cfg.set("seed", std::to_string(seed));
  std::string levels;
  for (std::size_t i = 0; i < model.level_channels.size(); ++i) {
    if (i) levels += ',';
    levels += std::to_string(model.level_channels[i]);
  }
  cfg.set("level_channels", levels);
  cfg.set("tct_channels", std::to_string(model.tct_channels));
  cfg.set("n_heads", std::to_string(model.n_heads));
  cfg.set("d_hidden", std::to_string(model.d_hidden));
  cfg.set("w_hidden", std::to_string(model.w_hidden));
  cfg.set("ffn_mult", std::to_string(model.ffn_mult));
  cfg.set("s0", std::to_string(model.s0));
  cfg.set("multilevel", model.multilevel ? "true" : "false");
  cfg.set("temporal_diff", model.temporal_diff ? "true" : "false");
  cfg.set("pure_encoder", model.pure_encoder ? "true" : "false");
  cfg.set("zero_token_target", model.zero_token_target ? "true" : "false");
  cfg.set("use_tct", model.use_tct ? "true" : "false");
  cfg.set("d_head_primary_only", model.d_head_primary_only ? "true" : "false");
  cfg.set("remap_decreasing", model.remap_decreasing ? "true" : "false");
  return cfg;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw DataError("train config: batch_size must be >= 1");
  if (lr < 0.0 || weight_decay < 0.0 || grad_clip < 0.0) {
    throw DataError("train config: lr, weight_decay and grad_clip must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw DataError("train config: betas must lie in [0, 1)");
  }
  if (adam_eps <= 0.0) throw DataError("train config: adam_eps must be positive");
  if (epochs == 0) throw DataError("train config: epochs must be >= 1");
  if (s_m == 0) throw DataError("train config: s_m must be >= 1");
}

// ---- optimizer -------------------------------------------------------------------

void adamw_step(const std::vector<Tensor*>& params,
                const std::vector<const std::vector<double>*>& grads, AdamWState& state,
                const AdamWOpts& opts) {
  if (params.size() != grads.size()) {
    throw ShapeError("adamw_step: " + std::to_string(params.size()) + " params vs " +
                     std::to_string(grads.size()) + " grads");
  }
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i]->numel(), 0.0);
      state.v[i].assign(params[i]->numel(), 0.0);
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(opts.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(opts.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const std::vector<double>& g = *grads[i];
    if (g.size() != p.numel() || state.m[i].size() != p.numel()) {
      throw ShapeError("adamw_step: parameter " + std::to_string(i) + " size mismatch");
    }
    for (std::size_t e = 0; e < p.numel(); ++e) {
      state.m[i][e] = opts.beta1 * state.m[i][e] + (1.0 - opts.beta1) * g[e];
      state.v[i][e] = opts.beta2 * state.v[i][e] + (1.0 - opts.beta2) * g[e] * g[e];
      const double m_hat = state.m[i][e] / bc1;
      const double v_hat = state.v[i][e] / bc2;
      p.values[e] *= 1.0 - opts.lr * opts.weight_decay;  // decoupled decay
      p.values[e] -= opts.lr * m_hat / (std::sqrt(v_hat) + opts.eps);
    }
  }
}

// ---- training ---------------------------------------------------------------------

std::vector<ManifestEntry> filter_split(const std::vector<ManifestEntry>& entries, Split split) {
  std::vector<ManifestEntry> out;
  for (const ManifestEntry& e : entries) {
    if (e.split == split) out.push_back(e);
  }
  return out;
}

namespace {

struct LoadedClip {
  Tensor tokens;
  double mos = 0.0;
  std::size_t manifest_idx = 0;
  std::string video_id;
};

std::vector<LoadedClip> load_clips(const std::vector<ManifestEntry>& manifest, Split split,
                                   const ModelConfig& cfg) {
  std::vector<LoadedClip> out;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    if (manifest[i].split != split) continue;
    FeatureClip clip = read_feature_file(manifest[i].resolved_path);
    LoadedClip lc;
    lc.tokens = stde_token_matrix(clip, cfg);
    lc.mos = manifest[i].mos;
    lc.manifest_idx = i;
    lc.video_id = manifest[i].video_id;
    out.push_back(std::move(lc));
  }
  return out;
}

}  // namespace

TrainResult train(const TrainConfig& cfg_in, const std::vector<ManifestEntry>& manifest,
                  const std::function<void(const EpochLog&)>& on_epoch) {
  TrainConfig cfg = cfg_in;
  cfg.validate();
  if (cfg.model.level_channels.empty()) {
    // Infer level widths from the first training clip.
    for (const ManifestEntry& e : manifest) {
      if (e.split != Split::train) continue;
      FeatureClip probe = read_feature_file(e.resolved_path);
      cfg.model.level_channels.clear();
      for (const FeatureLevel& lv : probe.levels) cfg.model.level_channels.push_back(lv.c);
      break;
    }
  }
  cfg.model.validate();

  std::vector<LoadedClip> train_clips = load_clips(manifest, Split::train, cfg.model);
  std::vector<LoadedClip> val_clips = load_clips(manifest, Split::val, cfg.model);
  if (train_clips.empty()) throw DataError("train: no entries in the train split");
  if (val_clips.empty()) throw DataError("train: no entries in the val split");

  std::vector<double> train_labels;
  for (const LoadedClip& c : train_clips) train_labels.push_back(c.mos);

  SplitMix64 master(cfg.seed);
  Model model = init_model(cfg.model, master.derive({kTagInit}).state());

  std::vector<std::pair<std::string, Tensor*>> refs = param_refs(model.params);
  std::vector<Tensor*> param_ptrs;
  for (auto& [name, ptr] : refs) param_ptrs.push_back(ptr);
  AdamWState adam;
  const AdamWOpts opts{cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay};

  TrainResult result;
  result.best_val_srocc = -2.0;
  std::size_t since_best = 0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    // Seeded shuffle of the train set.
    std::vector<std::size_t> order(train_clips.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SplitMix64 shuffle_rng = master.derive({kTagShuffle, epoch});
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::size_t j = static_cast<std::size_t>(shuffle_rng.next_below(i + 1));
      std::swap(order[i], order[j]);
    }

    // Batch boundaries; a trailing single clip joins the previous batch so
    // per-batch remap statistics stay well-defined.
    std::vector<std::pair<std::size_t, std::size_t>> batches;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      batches.push_back({b, std::min(b + cfg.batch_size, order.size())});
    }
    if (batches.size() > 1 && batches.back().second - batches.back().first == 1) {
      batches[batches.size() - 2].second = batches.back().second;
      batches.pop_back();
    }

    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    for (auto [b_begin, b_end] : batches) {
      Tape tape;
      ModelVars vars = put_on_tape(tape, model.params, /*trainable=*/true);
      std::vector<Var> q_vars;
      std::vector<double> q_vals, batch_mos;
      for (std::size_t bi = b_begin; bi < b_end; ++bi) {
        const LoadedClip& clip = train_clips[order[bi]];
        SplitMix64 tsf_rng = master.derive({kTagTsf, epoch, clip.manifest_idx});
        TsfSelection sel;
        if (cfg.model.use_tct) sel = tsf_sample(clip.tokens.rows(), cfg.model.s0, tsf_rng);
        ModelForward f = model_forward(tape, vars, cfg.model, clip.tokens, sel);
        q_vars.push_back(f.q_raw);
        q_vals.push_back(tape.val(f.q_raw).values[0]);
        batch_mos.push_back(clip.mos);
      }
      RemapStats batch_stats = compute_remap_stats(q_vals, train_labels);
      std::vector<Var> mapped;
      for (Var q : q_vars) mapped.push_back(remap(tape, q, batch_stats, cfg.model.remap_decreasing));
      Var loss = mae_loss(tape, stack_scalars(tape, mapped), batch_mos);
      const double loss_val = tape.val(loss).values[0];
      if (!std::isfinite(loss_val)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch starting at " + std::to_string(b_begin));
      }
      loss_sum += loss_val * static_cast<double>(b_end - b_begin);
      loss_count += b_end - b_begin;
      tape.backward(loss);

      // Gather gradients in parameter order, clip by global norm, step.
      std::vector<std::pair<std::string, Var>> vrefs = var_refs(vars);
      std::vector<std::vector<double>> grads(vrefs.size());
      double norm_sq = 0.0;
      for (std::size_t i = 0; i < vrefs.size(); ++i) {
        grads[i] = tape.grad(vrefs[i].second);
        for (double g : grads[i]) norm_sq += g * g;
      }
      if (cfg.grad_clip > 0.0) {
        const double norm = std::sqrt(norm_sq);
        if (norm > cfg.grad_clip) {
          const double s = cfg.grad_clip / norm;
          for (auto& g : grads) {
            for (double& x : g) x *= s;
          }
        }
      }
      std::vector<const std::vector<double>*> grad_ptrs;
      for (auto& g : grads) grad_ptrs.push_back(&g);
      adamw_step(param_ptrs, grad_ptrs, adam, opts);
    }

    // Validation with a single TSF draw per clip.
    std::vector<double> val_q, val_mos;
    for (const LoadedClip& clip : val_clips) {
      SplitMix64 rng = master.derive({kTagVal, epoch, clip.manifest_idx});
      val_q.push_back(predict_raw(model, clip.tokens, rng));
      val_mos.push_back(clip.mos);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = loss_sum / static_cast<double>(loss_count);
    log.val_srocc = srocc(val_q, val_mos);
    result.log.push_back(log);
    if (on_epoch) on_epoch(log);

    if (log.val_srocc > result.best_val_srocc) {
      result.best_val_srocc = log.val_srocc;
      result.best_epoch = epoch;
      result.model.cfg = cfg.model;
      result.model.params = model.params;  // deep copy of the peak
      since_best = 0;
    } else if (++since_best >= cfg.early_stop) {
      break;
    }
  }

  // Remap stats of the best parameters over the train split.
  std::vector<double> q_final;
  for (const LoadedClip& clip : train_clips) {
    SplitMix64 rng = master.derive({kTagFinal, clip.manifest_idx});
    q_final.push_back(predict_raw(result.model, clip.tokens, rng));
  }
  result.stats = compute_remap_stats(q_final, train_labels);
  return result;
}

// ---- checkpoints ---------------------------------------------------------------------

namespace {

constexpr char kCheckpointMagic[4] = {'D', 'C', 'V', 'C'};
constexpr std::uint32_t kCheckpointVersion = 1;

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
    throw FormatError(FormatError::Kind::truncated, "checkpoint: truncated");
  }
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("checkpoint: cannot open " + path + " for writing");
  KeyValueConfig cfg = ckpt.config.to_config();
  cfg.set("epoch", std::to_string(ckpt.epoch));
  cfg.set("best_val_srocc", fmt_double(ckpt.best_val_srocc));
  cfg.set("remap_q_mean", fmt_double(ckpt.stats.q_mean));
  cfg.set("remap_q_std", fmt_double(ckpt.stats.q_std));
  cfg.set("remap_s_min", fmt_double(ckpt.stats.s_min));
  cfg.set("remap_s_max", fmt_double(ckpt.stats.s_max));
  const std::string text = cfg.to_text();

  out.write(kCheckpointMagic, 4);
  put_u32(out, kCheckpointVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  auto refs = param_refs(ckpt.model.params);
  put_u32(out, static_cast<std::uint32_t>(refs.size()));
  for (const auto& [name, tensor] : refs) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_u32(out, static_cast<std::uint32_t>(tensor->shape.size()));
    for (std::size_t d : tensor->shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (double v : tensor->values) {
      const float f = static_cast<float>(v);
      std::uint32_t bits;
      std::memcpy(&bits, &f, 4);
      put_u32(out, bits);
    }
  }
  if (!out) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4)) {
    throw FormatError(FormatError::Kind::truncated, "checkpoint: shorter than magic");
  }
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
    throw FormatError(FormatError::Kind::bad_magic, "checkpoint: bad magic in " + path);
  }
  const std::uint32_t version = get_u32(in);
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Kind::bad_version,
                      "checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t text_len = get_u32(in);
  std::string text(text_len, '\0');
  if (!in.read(text.data(), text_len)) {
    throw FormatError(FormatError::Kind::truncated, "checkpoint: truncated config block");
  }
  KeyValueConfig raw = KeyValueConfig::parse_string(text, path);

  Checkpoint ckpt;
  ckpt.epoch = static_cast<std::size_t>(raw.get_u64("epoch", 0));
  ckpt.best_val_srocc = raw.get_double("best_val_srocc", 0.0);
  ckpt.stats.q_mean = raw.get_double("remap_q_mean", 0.0);
  ckpt.stats.q_std = raw.get_double("remap_q_std", 1.0);
  ckpt.stats.s_min = raw.get_double("remap_s_min", 0.0);
  ckpt.stats.s_max = raw.get_double("remap_s_max", 1.0);
  KeyValueConfig cfg_only;
  for (const auto& [k, v] : raw.items()) {
    if (k == "epoch" || k == "best_val_srocc" || k.rfind("remap_", 0) == 0) continue;
    cfg_only.set(k, v);
  }
  ckpt.config = TrainConfig::from_config(cfg_only);
  ckpt.model = init_model(ckpt.config.model, 0);

  const std::uint32_t n_tensors = get_u32(in);
  auto refs = param_refs(ckpt.model.params);
  if (n_tensors != refs.size()) {
    throw FormatError(FormatError::Kind::other,
                      "checkpoint: holds " + std::to_string(n_tensors) + " tensors, model needs " +
                          std::to_string(refs.size()));
  }
  for (auto& [name, tensor] : refs) {
    const std::uint32_t name_len = get_u32(in);
    std::string got(name_len, '\0');
    if (!in.read(got.data(), name_len)) {
      throw FormatError(FormatError::Kind::truncated, "checkpoint: truncated tensor name");
    }
    if (got != name) {
      throw FormatError(FormatError::Kind::other,
                        "checkpoint: tensor '" + got + "' where '" + name + "' expected");
    }
    const std::uint32_t rank = get_u32(in);
    std::vector<std::size_t> shape(rank);
    std::size_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      shape[d] = get_u32(in);
      numel *= shape[d];
    }
    if (shape != tensor->shape) {
      throw FormatError(FormatError::Kind::other, "checkpoint: shape mismatch for '" + name + "'");
    }
    for (std::size_t e = 0; e < numel; ++e) {
      const std::uint32_t bits = get_u32(in);
      float f;
      std::memcpy(&f, &bits, 4);
      if (!std::isfinite(f)) {
        throw FormatError(FormatError::Kind::non_finite,
                          "checkpoint: non-finite value in '" + name + "'");
      }
      tensor->values[e] = static_cast<double>(f);
    }
  }
  return ckpt;
}

// ---- evaluation -----------------------------------------------------------------------

EvalResult evaluate(const Model& model, const std::vector<ManifestEntry>& entries, Split split,
                    std::size_t s_m, std::uint64_t seed, double s_min, double s_max) {
  std::vector<LoadedClip> clips = load_clips(entries, split, model.cfg);
  if (clips.empty()) {
    throw DataError("evaluate: split '" + split_name(split) + "' is empty");
  }
  SplitMix64 base(seed);
  std::vector<double> q_raw, mos;
  for (const LoadedClip& clip : clips) {
    SplitMix64 rng = base.derive({kTagEval, clip.manifest_idx});
    double sum = 0.0;
    for (std::size_t m = 0; m < s_m; ++m) sum += predict_raw(model, clip.tokens, rng);
    q_raw.push_back(sum / static_cast<double>(s_m));
    mos.push_back(clip.mos);
  }
  const std::vector<double> range{s_min, s_max};
  EvalResult out;
  out.stats = compute_remap_stats(q_raw, range);
  std::vector<double> q_mapped;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const double qm = remap(q_raw[i], out.stats, model.cfg.remap_decreasing);
    q_mapped.push_back(qm);
    out.rows.push_back({clips[i].video_id, clips[i].mos, q_raw[i], qm});
  }
  out.report = compute_metrics(q_mapped, mos);
  return out;
}

std::vector<StabilityRow> tsf_stability_report(const Model& model,
                                               const std::vector<ManifestEntry>& entries,
                                               Split split,
                                               const std::vector<std::size_t>& s_m_list,
                                               std::size_t repeats, std::uint64_t seed,
                                               const RemapStats& stats) {
  std::vector<LoadedClip> clips = load_clips(entries, split, model.cfg);
  if (clips.empty()) {
    throw DataError("tsf_stability_report: split '" + split_name(split) + "' is empty");
  }
  if (repeats < 2) throw ContractError("tsf_stability_report: needs repeats >= 2");
  SplitMix64 base(seed);
  const double range = stats.s_max - stats.s_min;
  std::vector<StabilityRow> out;
  for (std::size_t s_m : s_m_list) {
    double std_sum = 0.0;
    for (std::size_t v = 0; v < clips.size(); ++v) {
      std::vector<double> preds;
      for (std::size_t r = 0; r < repeats; ++r) {
        SplitMix64 rng = base.derive({kTagStab, s_m, v, r});
        double sum = 0.0;
        for (std::size_t m = 0; m < s_m; ++m) sum += predict_raw(model, clips[v].tokens, rng);
        preds.push_back(remap(sum / static_cast<double>(s_m), stats, model.cfg.remap_decreasing));
      }
      double mean = 0.0;
      for (double p : preds) mean += p;
      mean /= static_cast<double>(preds.size());
      double var = 0.0;
      for (double p : preds) var += (p - mean) * (p - mean);
      var /= static_cast<double>(preds.size());
      std_sum += std::sqrt(var);
    }
    out.push_back({s_m, std_sum / static_cast<double>(clips.size()) / range});
  }
  return out;
}

std::string format_epoch_log(const EpochLog& e) {
  std::ostringstream os;
  os << "{\"epoch\":" << e.epoch << ",\"train_loss\":" << fmt_double(e.train_loss)
     << ",\"val_srocc\":" << fmt_double(e.val_srocc) << "}";
  return os.str();
}

}  // namespace dcvq
