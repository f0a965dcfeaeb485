#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dcvq/rng.hpp"
#include "dcvq/stde.hpp"
#include "dcvq/tensor.hpp"

namespace dcvq {

// One sampled frame index per uniform segment.
struct TsfSelection {
  std::size_t s0_effective = 0;
  std::vector<std::size_t> indices;
};

// Divide [0, N) into s0' = min(s0, N) segments [floor(j*N/s0'), floor((j+1)*N/s0'))
// and draw one index uniformly from each. N == s0 yields the identity selection.
TsfSelection tsf_sample(std::size_t n_frames, std::size_t s0, SplitMix64& rng);

// One self/cross attention layer: projections, output projection, feed-forward
// and the two post-norm layer norms.
struct AttentionLayerParams {
  Tensor pk, pq, pv, po;            // C x C
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;  // C x F, F, F x C, C
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;  // C each

  static AttentionLayerParams init(std::size_t channels, std::size_t ff_width, SplitMix64& rng);
};

struct AttentionLayerVars {
  Var pk, pq, pv, po, ff1_w, ff1_b, ff2_w, ff2_b, ln1_g, ln1_b, ln2_g, ln2_b;
};

// Projections of the final decoder layer; its attention row and value matrix
// feed the attention-weight head directly.
struct CrossProjParams {
  Tensor pk, pq, pv;  // C x C
  static CrossProjParams init(std::size_t channels, SplitMix64& rng);
};

struct CrossProjVars {
  Var pk, pq, pv;
};

struct TctParams {
  Tensor reduce_w, reduce_b;               // C_in x C, C
  std::array<AttentionLayerParams, 4> encoder;
  AttentionLayerParams dec_refine;          // decoder layer 1: refines the query token
  CrossProjParams dec_cross;                // decoder layer 2
  Tensor head_w1, head_b1, head_w2, head_b2;  // C x H, H, H x 1, 1

  static TctParams init(std::size_t c_in, std::size_t channels, std::size_t ff_width,
                        std::size_t head_hidden, SplitMix64& rng);
};

struct TctVars {
  Var reduce_w, reduce_b;
  std::array<AttentionLayerVars, 4> encoder;
  AttentionLayerVars dec_refine;
  CrossProjVars dec_cross;
  Var head_w1, head_b1, head_w2, head_b2;
};

TctVars put_on_tape(Tape& t, const TctParams& p, bool trainable = true);

// Per-token affine map to the working width.
Var channel_reduce(Tape& t, Var tokens, Var weight, Var bias);

struct SelfAttentionResult {
  Var out;      // k x C
  Tensor attn;  // head-averaged k x k attention, diagnostic copy
};

// Scaled dot-product self-attention with n_heads channel slices (per-head
// scale 1/sqrt(C/h)) followed by the output projection. C must be divisible
// by n_heads.
SelfAttentionResult self_attention(Tape& t, Var tokens, const AttentionLayerVars& p,
                                   std::size_t n_heads);

// Four post-norm layers (attention + feed-forward sublayers, each with a
// residual), then the long-range residual add of the input.
Var encoder_forward(Tape& t, Var t_pe, const std::array<AttentionLayerVars, 4>& layers,
                    std::size_t n_heads);

struct DecoderResult {
  Var w;        // attention weights per sampled frame (length k)
  Tensor m_qk;  // head-averaged final cross-attention row (1 x k)
};

// Query = average of pre-encoding tokens (or a zero token under the
// zero_token_target ablation), refined by the first decoder layer; the second
// layer's attention row and values feed the weight head on top of t_en.
DecoderResult decoder_forward(Tape& t, Var t_en, Var t_pe, const TctVars& p,
                              std::size_t n_heads, bool zero_token_target = false);

struct TctToggles {
  std::size_t n_heads = 4;
  bool pure_encoder = false;
  bool zero_token_target = false;
};

struct TctForwardResult {
  Var w;
  Tensor m_qk;  // empty under pure_encoder
  TsfSelection selection;
};

// tsf_sample -> gather rows -> channel_reduce -> encoder -> decoder (or the
// encoder-only weight head under pure_encoder).
TctForwardResult tct_forward(Tape& t, Var stde_tokens, const TctVars& p,
                             const TctToggles& toggles, std::size_t s0, SplitMix64& rng);

// The composition downstream of an already-gathered token matrix; tct_forward
// and the full model share this path.
TctForwardResult tct_apply(Tape& t, Var gathered, const TctVars& p, const TctToggles& toggles,
                           TsfSelection selection);

}  // namespace dcvq
