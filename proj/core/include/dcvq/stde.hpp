#pragma once

#include <utility>
#include <vector>

#include "dcvq/feature_io.hpp"
#include "dcvq/rng.hpp"
#include "dcvq/tensor.hpp"

namespace dcvq {

// Per-frame concatenation of spatially pooled multi-level features (N x C_T).
struct PrimaryTokens {
  Var tokens;
  std::vector<std::pair<std::size_t, std::size_t>> level_offsets;  // [begin, end) per level
};

// Load a clip's levels onto a tape as constants (f32 storage widened to f64).
std::vector<Var> clip_levels_to_tape(Tape& t, const FeatureClip& clip);

// Mean over spatial positions per frame per channel; pooled levels pass
// through unchanged. Input shape {N,c} or {N,h,w,c}.
Var global_average_pool(Tape& t, Var level);

// Concatenate pooled levels along channels in level order. With
// multilevel=false only the last level is kept (ablation).
PrimaryTokens concat_multilevel(Tape& t, const std::vector<Var>& pooled, bool multilevel = true);

// Row i of the output is T_i ++ (T_i - T_{i+1}); the difference half of the
// last row is exactly zero. N=1 yields a single zero-padded row. With
// enabled=false the tokens pass through unchanged (ablation).
Var temporal_difference(Tape& t, Var tokens, bool enabled = true);

// Two-layer MLP reducing distortion tokens to one quality per frame.
struct DistortionHeadParams {
  Tensor l1_w, l1_b;  // C_in x H, H
  Tensor l2_w, l2_b;  // H x 1, 1

  static DistortionHeadParams init(std::size_t c_in, std::size_t hidden, SplitMix64& rng);
};

struct DistortionHeadVars {
  Var l1_w, l1_b, l2_w, l2_b;
};

DistortionHeadVars put_on_tape(Tape& t, const DistortionHeadParams& p, bool trainable = true);

// d_i = l2(gelu(l1(row_i))) for every row; returns a vector of length k.
Var frame_quality_head(Tape& t, Var tokens, const DistortionHeadVars& p);

// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)]; shared by all modules.
Tensor uniform_init(std::size_t rows, std::size_t cols, SplitMix64& rng);

}  // namespace dcvq
