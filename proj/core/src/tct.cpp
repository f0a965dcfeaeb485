#include "dcvq/tct.hpp"

#include <cmath>

namespace dcvq {

TsfSelection tsf_sample(std::size_t n_frames, std::size_t s0, SplitMix64& rng) {
  if (n_frames == 0) throw ContractError("tsf_sample: empty clip");
  if (s0 == 0) throw ContractError("tsf_sample: s0 must be positive");
  TsfSelection sel;
  sel.s0_effective = std::min(s0, n_frames);
  sel.indices.reserve(sel.s0_effective);
  for (std::size_t j = 0; j < sel.s0_effective; ++j) {
    const std::size_t lo = j * n_frames / sel.s0_effective;
    const std::size_t hi = (j + 1) * n_frames / sel.s0_effective;
    sel.indices.push_back(lo + static_cast<std::size_t>(rng.next_below(hi - lo)));
  }
  return sel;
}

AttentionLayerParams AttentionLayerParams::init(std::size_t channels, std::size_t ff_width,
                                                SplitMix64& rng) {
  AttentionLayerParams p;
  p.pk = uniform_init(channels, channels, rng);
  p.pq = uniform_init(channels, channels, rng);
  p.pv = uniform_init(channels, channels, rng);
  p.po = uniform_init(channels, channels, rng);
  p.ff1_w = uniform_init(channels, ff_width, rng);
  p.ff1_b = Tensor::zeros({ff_width});
  p.ff2_w = uniform_init(ff_width, channels, rng);
  p.ff2_b = Tensor::zeros({channels});
  p.ln1_g = Tensor({channels}, std::vector<double>(channels, 1.0));
  p.ln1_b = Tensor::zeros({channels});
  p.ln2_g = Tensor({channels}, std::vector<double>(channels, 1.0));
  p.ln2_b = Tensor::zeros({channels});
  return p;
}

CrossProjParams CrossProjParams::init(std::size_t channels, SplitMix64& rng) {
  CrossProjParams p;
  p.pk = uniform_init(channels, channels, rng);
  p.pq = uniform_init(channels, channels, rng);
  p.pv = uniform_init(channels, channels, rng);
  return p;
}

TctParams TctParams::init(std::size_t c_in, std::size_t channels, std::size_t ff_width,
                          std::size_t head_hidden, SplitMix64& rng) {
  TctParams p;
  p.reduce_w = uniform_init(c_in, channels, rng);
  p.reduce_b = Tensor::zeros({channels});
  for (auto& layer : p.encoder) layer = AttentionLayerParams::init(channels, ff_width, rng);
  p.dec_refine = AttentionLayerParams::init(channels, ff_width, rng);
  p.dec_cross = CrossProjParams::init(channels, rng);
  p.head_w1 = uniform_init(channels, head_hidden, rng);
  p.head_b1 = Tensor::zeros({head_hidden});
  p.head_w2 = uniform_init(head_hidden, 1, rng);
  p.head_b2 = Tensor::zeros({1});
  return p;
}

namespace {

AttentionLayerVars put_layer(Tape& t, const AttentionLayerParams& p, bool trainable) {
  auto put = [&](const Tensor& x) { return trainable ? t.leaf(x) : t.constant(x); };
  AttentionLayerVars v;
  v.pk = put(p.pk);
  v.pq = put(p.pq);
  v.pv = put(p.pv);
  v.po = put(p.po);
  v.ff1_w = put(p.ff1_w);
  v.ff1_b = put(p.ff1_b);
  v.ff2_w = put(p.ff2_w);
  v.ff2_b = put(p.ff2_b);
  v.ln1_g = put(p.ln1_g);
  v.ln1_b = put(p.ln1_b);
  v.ln2_g = put(p.ln2_g);
  v.ln2_b = put(p.ln2_b);
  return v;
}

}  // namespace

TctVars put_on_tape(Tape& t, const TctParams& p, bool trainable) {
  auto put = [&](const Tensor& x) { return trainable ? t.leaf(x) : t.constant(x); };
  TctVars v;
  v.reduce_w = put(p.reduce_w);
  v.reduce_b = put(p.reduce_b);
  for (std::size_t i = 0; i < 4; ++i) v.encoder[i] = put_layer(t, p.encoder[i], trainable);
  v.dec_refine = put_layer(t, p.dec_refine, trainable);
  v.dec_cross = CrossProjVars{put(p.dec_cross.pk), put(p.dec_cross.pq), put(p.dec_cross.pv)};
  v.head_w1 = put(p.head_w1);
  v.head_b1 = put(p.head_b1);
  v.head_w2 = put(p.head_w2);
  v.head_b2 = put(p.head_b2);
  return v;
}

Var channel_reduce(Tape& t, Var tokens, Var weight, Var bias) {
  return add_row(t, matmul(t, tokens, weight), bias);
}

namespace {

struct CrossAttention {
  Var context;   // q_rows x C
  Tensor attn;   // head-averaged q_rows x k
};

// Shared multi-head scaled dot-product: queries from `q_tokens`, keys/values
// from `kv_tokens`. Context products contract over the token axis, so they
// use the order-invariant matmul.
CrossAttention scaled_attention(Tape& t, Var q_tokens, Var kv_tokens, Var pk, Var pq, Var pv,
                                std::size_t n_heads) {
  const std::size_t C = t.val(kv_tokens).cols();
  if (n_heads == 0 || C % n_heads != 0) {
    throw ShapeError("attention: channel width " + std::to_string(C) +
                     " not divisible by head count " + std::to_string(n_heads));
  }
  const std::size_t dh = C / n_heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Var K = matmul(t, kv_tokens, pk);
  Var Q = matmul(t, q_tokens, pq);
  Var V = matmul(t, kv_tokens, pv);
  const std::size_t qr = t.val(Q).rows();
  const std::size_t k = t.val(K).rows();

  Var ctx;
  Tensor attn_mean = Tensor::zeros({qr, k});
  for (std::size_t h = 0; h < n_heads; ++h) {
    Var Qh = slice_cols(t, Q, h * dh, dh);
    Var Kh = slice_cols(t, K, h * dh, dh);
    Var Vh = slice_cols(t, V, h * dh, dh);
    Var logits = scale(t, matmul(t, Qh, transpose(t, Kh)), inv_scale);
    Var m = softmax_rows(t, logits);
    const Tensor& mv = t.val(m);
    for (std::size_t i = 0; i < mv.numel(); ++i) {
      attn_mean.values[i] += mv.values[i] / static_cast<double>(n_heads);
    }
    Var ctx_h = matmul(t, m, Vh, SumOrder::sorted);
    ctx = (h == 0) ? ctx_h : concat_cols(t, ctx, ctx_h);
  }
  return {ctx, std::move(attn_mean)};
}

Var feed_forward(Tape& t, Var x, const AttentionLayerVars& p) {
  Var h = gelu(t, add_row(t, matmul(t, x, p.ff1_w), p.ff1_b));
  return add_row(t, matmul(t, h, p.ff2_w), p.ff2_b);
}

// Post-norm sublayer pair shared by encoder layers and the decoder's
// query-refinement layer.
Var attention_block(Tape& t, Var q_tokens, Var kv_tokens, const AttentionLayerVars& p,
                    std::size_t n_heads) {
  CrossAttention att = scaled_attention(t, q_tokens, kv_tokens, p.pk, p.pq, p.pv, n_heads);
  Var projected = matmul(t, att.context, p.po);
  Var x = layer_norm(t, add(t, q_tokens, projected), p.ln1_g, p.ln1_b);
  Var f = feed_forward(t, x, p);
  return layer_norm(t, add(t, x, f), p.ln2_g, p.ln2_b);
}

}  // namespace

SelfAttentionResult self_attention(Tape& t, Var tokens, const AttentionLayerVars& p,
                                   std::size_t n_heads) {
  CrossAttention att = scaled_attention(t, tokens, tokens, p.pk, p.pq, p.pv, n_heads);
  return {matmul(t, att.context, p.po), std::move(att.attn)};
}

Var encoder_forward(Tape& t, Var t_pe, const std::array<AttentionLayerVars, 4>& layers,
                    std::size_t n_heads) {
  Var x = t_pe;
  for (const AttentionLayerVars& layer : layers) {
    x = attention_block(t, x, x, layer, n_heads);
  }
  return add(t, x, t_pe);  // long-range residual
}

DecoderResult decoder_forward(Tape& t, Var t_en, Var t_pe, const TctVars& p,
                              std::size_t n_heads, bool zero_token_target) {
  const std::size_t C = t.val(t_pe).cols();
  Var query;
  if (zero_token_target) {
    query = t.constant(Tensor::zeros({1, C}));
  } else {
    query = reshape(t, mean_axis(t, t_pe, 0), {1, C});  // average content token
  }
  query = attention_block(t, query, t_en, p.dec_refine, n_heads);
  CrossAttention last =
      scaled_attention(t, query, t_en, p.dec_cross.pk, p.dec_cross.pq, p.dec_cross.pv, n_heads);
  const std::size_t k = t.val(t_en).rows();
  Var fused = add_row(t, t_en, last.context);
  Var h = gelu(t, add_row(t, matmul(t, fused, p.head_w1), p.head_b1));
  Var w = reshape(t, add_row(t, matmul(t, h, p.head_w2), p.head_b2), {k});
  return {w, std::move(last.attn)};
}

TctForwardResult tct_apply(Tape& t, Var gathered, const TctVars& p, const TctToggles& toggles,
                           TsfSelection selection) {
  Var t_pe = channel_reduce(t, gathered, p.reduce_w, p.reduce_b);
  Var t_en = encoder_forward(t, t_pe, p.encoder, toggles.n_heads);
  TctForwardResult out;
  out.selection = std::move(selection);
  if (toggles.pure_encoder) {
    const std::size_t k = t.val(t_en).rows();
    Var h = gelu(t, add_row(t, matmul(t, t_en, p.head_w1), p.head_b1));
    out.w = reshape(t, add_row(t, matmul(t, h, p.head_w2), p.head_b2), {k});
  } else {
    DecoderResult dec = decoder_forward(t, t_en, t_pe, p, toggles.n_heads,
                                        toggles.zero_token_target);
    out.w = dec.w;
    out.m_qk = std::move(dec.m_qk);
  }
  return out;
}

TctForwardResult tct_forward(Tape& t, Var stde_tokens, const TctVars& p,
                             const TctToggles& toggles, std::size_t s0, SplitMix64& rng) {
  const std::size_t n = t.val(stde_tokens).rows();
  TsfSelection sel = tsf_sample(n, s0, rng);
  Var gathered = slice_rows(t, stde_tokens, sel.indices);
  return tct_apply(t, gathered, p, toggles, std::move(sel));
}

}  // namespace dcvq
