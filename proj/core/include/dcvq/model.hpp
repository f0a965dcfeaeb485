#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dcvq/feature_io.hpp"
#include "dcvq/quality.hpp"
#include "dcvq/stde.hpp"
#include "dcvq/tct.hpp"

namespace dcvq {

struct ModelConfig {
  std::vector<std::size_t> level_channels = {96, 192, 384, 768};
  std::size_t tct_channels = 256;  // working width after channel reduction
  std::size_t n_heads = 4;
  std::size_t d_hidden = 64;  // distortion-quality head
  std::size_t w_hidden = 64;  // attention-weight head
  std::size_t ffn_mult = 4;
  std::size_t s0 = 16;

  // Ablation/variant toggles.
  bool multilevel = true;
  bool temporal_diff = true;
  bool pure_encoder = false;
  bool zero_token_target = false;
  bool use_tct = true;
  bool d_head_primary_only = false;  // distortion head reads only the primary token half
  bool remap_decreasing = false;     // decreasing logistic orientation in remap

  std::size_t primary_width() const;     // C_T after (optional) multilevel concat
  std::size_t token_width() const;       // with the difference half when enabled
  std::size_t d_head_width() const;
  void validate() const;
};

struct ModelParams {
  DistortionHeadParams dhead;
  TctParams tct;
};

struct Model {
  ModelConfig cfg;
  ModelParams params;
};

Model init_model(const ModelConfig& cfg, std::uint64_t seed);

// Fixed-order enumeration of every parameter tensor; the order defines the
// optimizer state layout and the checkpoint tensor order.
std::vector<std::pair<std::string, Tensor*>> param_refs(ModelParams& p);
std::vector<std::pair<std::string, const Tensor*>> param_refs(const ModelParams& p);

struct ModelVars {
  DistortionHeadVars dhead;
  TctVars tct;
};

ModelVars put_on_tape(Tape& t, const ModelParams& p, bool trainable = true);
// Same names and order as param_refs.
std::vector<std::pair<std::string, Var>> var_refs(const ModelVars& v);

// Clip ingestion: pool, concatenate, take temporal differences. Pure
// preprocessing with no trainable parameters upstream, evaluated once per
// clip and cached as a plain matrix (N x token_width).
Tensor stde_token_matrix(const FeatureClip& clip, const ModelConfig& cfg);

// On-tape version of the same pipeline for gradient checks.
Var stde_tokens_on_tape(Tape& t, const std::vector<Var>& levels, const ModelConfig& cfg);

struct ModelForward {
  Var q_raw;  // scalar
  Var d;      // per sampled frame
  Var w;
  TsfSelection selection;
  Tensor m_qk;  // empty when unused
};

// One quality evaluation for a fixed TSF selection. Under use_tct=false the
// selection is ignored: d is computed on every frame and averaged with zero
// weights.
ModelForward model_forward(Tape& t, const ModelVars& vars, const ModelConfig& cfg,
                           const Tensor& tokens, const TsfSelection& sel);

// ---- inference -------------------------------------------------------------------

struct QualityPrediction {
  double q_raw = 0.0;
  double q_mapped = 0.0;
  std::vector<double> per_sample_raw;
};

struct ForwardDetail {
  TsfSelection selection;
  std::vector<double> d;
  std::vector<double> w;
  Tensor m_qk;
  double q_raw = 0.0;
};

// One TSF draw, gradients off.
ForwardDetail predict_detail(const Model& model, const Tensor& tokens, SplitMix64& rng);
double predict_raw(const Model& model, const Tensor& tokens, SplitMix64& rng);

// s_m independent TSF draws averaged; q_mapped applies `stats` with the
// model's remap orientation. Deterministic given the rng state.
QualityPrediction multi_sample_predict(const Model& model, const Tensor& tokens,
                                       std::size_t s_m, SplitMix64& rng,
                                       const RemapStats& stats);
// Same draws, keeping per-sample diagnostics (the attention dump).
std::vector<ForwardDetail> multi_sample_detail(const Model& model, const Tensor& tokens,
                                               std::size_t s_m, SplitMix64& rng);

}  // namespace dcvq
