#include "dcvq/model.hpp"

#include <numeric>

namespace dcvq {

std::size_t ModelConfig::primary_width() const {
  if (!multilevel) return level_channels.back();
  std::size_t w = 0;
  for (std::size_t c : level_channels) w += c;
  return w;
}

std::size_t ModelConfig::token_width() const {
  return temporal_diff ? 2 * primary_width() : primary_width();
}

std::size_t ModelConfig::d_head_width() const {
  return d_head_primary_only ? primary_width() : token_width();
}

void ModelConfig::validate() const {
  if (level_channels.empty()) throw DataError("model config: no feature levels");
  for (std::size_t c : level_channels) {
    if (c == 0) throw DataError("model config: level with 0 channels");
  }
  if (tct_channels == 0 || n_heads == 0 || tct_channels % n_heads != 0) {
    throw DataError("model config: tct_channels must be a positive multiple of n_heads");
  }
  if (d_hidden == 0 || w_hidden == 0 || ffn_mult == 0 || s0 == 0) {
    throw DataError("model config: widths and s0 must be positive");
  }
}

Model init_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  Model m;
  m.cfg = cfg;
  SplitMix64 rng(SplitMix64::mix(seed, 0x1417ull));
  m.params.dhead = DistortionHeadParams::init(cfg.d_head_width(), cfg.d_hidden, rng);
  m.params.tct = TctParams::init(cfg.token_width(), cfg.tct_channels,
                                 cfg.ffn_mult * cfg.tct_channels, cfg.w_hidden, rng);
  return m;
}

namespace {

template <typename TensorPtr, typename Params>
std::vector<std::pair<std::string, TensorPtr>> collect_refs(Params& p) {
  std::vector<std::pair<std::string, TensorPtr>> out;
  auto push = [&out](const std::string& name, TensorPtr t) { out.push_back({name, t}); };
  push("dhead.l1_w", &p.dhead.l1_w);
  push("dhead.l1_b", &p.dhead.l1_b);
  push("dhead.l2_w", &p.dhead.l2_w);
  push("dhead.l2_b", &p.dhead.l2_b);
  push("tct.reduce_w", &p.tct.reduce_w);
  push("tct.reduce_b", &p.tct.reduce_b);
  for (std::size_t i = 0; i < 4; ++i) {
    auto& l = p.tct.encoder[i];
    const std::string pre = "tct.enc" + std::to_string(i) + ".";
    push(pre + "pk", &l.pk);
    push(pre + "pq", &l.pq);
    push(pre + "pv", &l.pv);
    push(pre + "po", &l.po);
    push(pre + "ff1_w", &l.ff1_w);
    push(pre + "ff1_b", &l.ff1_b);
    push(pre + "ff2_w", &l.ff2_w);
    push(pre + "ff2_b", &l.ff2_b);
    push(pre + "ln1_g", &l.ln1_g);
    push(pre + "ln1_b", &l.ln1_b);
    push(pre + "ln2_g", &l.ln2_g);
    push(pre + "ln2_b", &l.ln2_b);
  }
  {
    auto& l = p.tct.dec_refine;
    const std::string pre = "tct.dec1.";
    push(pre + "pk", &l.pk);
    push(pre + "pq", &l.pq);
    push(pre + "pv", &l.pv);
    push(pre + "po", &l.po);
    push(pre + "ff1_w", &l.ff1_w);
    push(pre + "ff1_b", &l.ff1_b);
    push(pre + "ff2_w", &l.ff2_w);
    push(pre + "ff2_b", &l.ff2_b);
    push(pre + "ln1_g", &l.ln1_g);
    push(pre + "ln1_b", &l.ln1_b);
    push(pre + "ln2_g", &l.ln2_g);
    push(pre + "ln2_b", &l.ln2_b);
  }
  push("tct.dec2.pk", &p.tct.dec_cross.pk);
  push("tct.dec2.pq", &p.tct.dec_cross.pq);
  push("tct.dec2.pv", &p.tct.dec_cross.pv);
  push("tct.head_w1", &p.tct.head_w1);
  push("tct.head_b1", &p.tct.head_b1);
  push("tct.head_w2", &p.tct.head_w2);
  push("tct.head_b2", &p.tct.head_b2);
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> param_refs(ModelParams& p) {
  return collect_refs<Tensor*>(p);
}

std::vector<std::pair<std::string, const Tensor*>> param_refs(const ModelParams& p) {
  return collect_refs<const Tensor*>(p);
}

ModelVars put_on_tape(Tape& t, const ModelParams& p, bool trainable) {
  ModelVars v;
  v.dhead = put_on_tape(t, p.dhead, trainable);
  v.tct = put_on_tape(t, p.tct, trainable);
  return v;
}

std::vector<std::pair<std::string, Var>> var_refs(const ModelVars& v) {
  std::vector<std::pair<std::string, Var>> out;
  auto push = [&out](const std::string& name, Var var) { out.push_back({name, var}); };
  push("dhead.l1_w", v.dhead.l1_w);
  push("dhead.l1_b", v.dhead.l1_b);
  push("dhead.l2_w", v.dhead.l2_w);
  push("dhead.l2_b", v.dhead.l2_b);
  push("tct.reduce_w", v.tct.reduce_w);
  push("tct.reduce_b", v.tct.reduce_b);
  for (std::size_t i = 0; i < 4; ++i) {
    const AttentionLayerVars& l = v.tct.encoder[i];
    const std::string pre = "tct.enc" + std::to_string(i) + ".";
    push(pre + "pk", l.pk);
    push(pre + "pq", l.pq);
    push(pre + "pv", l.pv);
    push(pre + "po", l.po);
    push(pre + "ff1_w", l.ff1_w);
    push(pre + "ff1_b", l.ff1_b);
    push(pre + "ff2_w", l.ff2_w);
    push(pre + "ff2_b", l.ff2_b);
    push(pre + "ln1_g", l.ln1_g);
    push(pre + "ln1_b", l.ln1_b);
    push(pre + "ln2_g", l.ln2_g);
    push(pre + "ln2_b", l.ln2_b);
  }
  {
    const AttentionLayerVars& l = v.tct.dec_refine;
    const std::string pre = "tct.dec1.";
    push(pre + "pk", l.pk);
    push(pre + "pq", l.pq);
    push(pre + "pv", l.pv);
    push(pre + "po", l.po);
    push(pre + "ff1_w", l.ff1_w);
    push(pre + "ff1_b", l.ff1_b);
    push(pre + "ff2_w", l.ff2_w);
    push(pre + "ff2_b", l.ff2_b);
    push(pre + "ln1_g", l.ln1_g);
    push(pre + "ln1_b", l.ln1_b);
    push(pre + "ln2_g", l.ln2_g);
    push(pre + "ln2_b", l.ln2_b);
  }
  push("tct.dec2.pk", v.tct.dec_cross.pk);
  push("tct.dec2.pq", v.tct.dec_cross.pq);
  push("tct.dec2.pv", v.tct.dec_cross.pv);
  push("tct.head_w1", v.tct.head_w1);
  push("tct.head_b1", v.tct.head_b1);
  push("tct.head_w2", v.tct.head_w2);
  push("tct.head_b2", v.tct.head_b2);
  return out;
}

Var stde_tokens_on_tape(Tape& t, const std::vector<Var>& levels, const ModelConfig& cfg) {
  std::vector<Var> pooled;
  pooled.reserve(levels.size());
  for (Var lv : levels) pooled.push_back(global_average_pool(t, lv));
  PrimaryTokens primary = concat_multilevel(t, pooled, cfg.multilevel);
  return temporal_difference(t, primary.tokens, cfg.temporal_diff);
}

Tensor stde_token_matrix(const FeatureClip& clip, const ModelConfig& cfg) {
  if (clip.levels.size() != cfg.level_channels.size()) {
    throw DataError("clip has " + std::to_string(clip.levels.size()) +
                    " levels, model expects " + std::to_string(cfg.level_channels.size()));
  }
  for (std::size_t l = 0; l < clip.levels.size(); ++l) {
    if (clip.levels[l].c != cfg.level_channels[l]) {
      throw DataError("clip level " + std::to_string(l) + " has " +
                      std::to_string(clip.levels[l].c) + " channels, model expects " +
                      std::to_string(cfg.level_channels[l]));
    }
  }
  Tape scratch;
  std::vector<Var> levels = clip_levels_to_tape(scratch, clip);
  Var tokens = stde_tokens_on_tape(scratch, levels, cfg);
  return scratch.val(tokens);
}

ModelForward model_forward(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                           const Tensor& tokens, const TsfSelection& sel) {
  ModelForward out;
  if (!cfg.use_tct) {
    // Plain distortion average over every frame; no sampling, no weights.
    const std::size_t n = tokens.rows();
    Var all = t.constant(tokens);
    Var head_in = cfg.d_head_primary_only && cfg.temporal_diff
                      ? slice_cols(t, all, 0, cfg.primary_width())
                      : all;
    out.d = frame_quality_head(t, head_in, vars.dhead);
    out.w = t.constant(Tensor::zeros({n}));
    out.selection.s0_effective = n;
    out.selection.indices.resize(n);
    std::iota(out.selection.indices.begin(), out.selection.indices.end(), 0);
    out.q_raw = aggregate_quality(t, out.d, out.w);
    return out;
  }

  out.selection = sel;
  Tensor gathered_rows = Tensor::zeros({sel.indices.size(), tokens.cols()});
  for (std::size_t r = 0; r < sel.indices.size(); ++r) {
    for (std::size_t c = 0; c < tokens.cols(); ++c) {
      gathered_rows.values[r * tokens.cols() + c] = tokens.at(sel.indices[r], c);
    }
  }
  Var gathered = t.constant(std::move(gathered_rows));
  Var head_in = cfg.d_head_primary_only && cfg.temporal_diff
                    ? slice_cols(t, gathered, 0, cfg.primary_width())
                    : gathered;
  out.d = frame_quality_head(t, head_in, vars.dhead);
  TctToggles toggles{cfg.n_heads, cfg.pure_encoder, cfg.zero_token_target};
  TctForwardResult tct = tct_apply(t, gathered, vars.tct, toggles, sel);
  out.w = tct.w;
  out.m_qk = std::move(tct.m_qk);
  out.q_raw = aggregate_quality(t, out.d, out.w);
  return out;
}

ForwardDetail predict_detail(const Model& model, const Tensor& tokens, SplitMix64& rng) {
  Tape t;
  TsfSelection sel;
  if (model.cfg.use_tct) sel = tsf_sample(tokens.rows(), model.cfg.s0, rng);
  ModelVars vars = put_on_tape(t, model.params, /*trainable=*/false);
  ModelForward f = model_forward(t, vars, model.cfg, tokens, sel);
  ForwardDetail d;
  d.selection = std::move(f.selection);
  d.d = t.val(f.d).values;
  d.w = t.val(f.w).values;
  d.m_qk = std::move(f.m_qk);
  d.q_raw = t.val(f.q_raw).values[0];
  return d;
}

double predict_raw(const Model& model, const Tensor& tokens, SplitMix64& rng) {
  return predict_detail(model, tokens, rng).q_raw;
}

QualityPrediction multi_sample_predict(const Model& model, const Tensor& tokens,
                                       std::size_t s_m, SplitMix64& rng,
                                       const RemapStats& stats) {
  if (s_m == 0) throw ContractError("multi_sample_predict: s_m must be >= 1");
  QualityPrediction pred;
  pred.per_sample_raw.reserve(s_m);
  for (std::size_t m = 0; m < s_m; ++m) {
    pred.per_sample_raw.push_back(predict_raw(model, tokens, rng));
  }
  double sum = 0.0;
  for (double q : pred.per_sample_raw) sum += q;
  pred.q_raw = sum / static_cast<double>(s_m);
  pred.q_mapped = remap(pred.q_raw, stats, model.cfg.remap_decreasing);
  return pred;
}

std::vector<ForwardDetail> multi_sample_detail(const Model& model, const Tensor& tokens,
                                               std::size_t s_m, SplitMix64& rng) {
  if (s_m == 0) throw ContractError("multi_sample_detail: s_m must be >= 1");
  std::vector<ForwardDetail> out;
  out.reserve(s_m);
  for (std::size_t m = 0; m < s_m; ++m) out.push_back(predict_detail(model, tokens, rng));
  return out;
}

}  // namespace dcvq
