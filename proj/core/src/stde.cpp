#include "dcvq/stde.hpp"

#include <cmath>

namespace dcvq {

std::vector<Var> clip_levels_to_tape(Tape& t, const FeatureClip& clip) {
  clip.validate();
  std::vector<Var> out;
  out.reserve(clip.levels.size());
  for (const FeatureLevel& lv : clip.levels) {
    std::vector<double> vals(lv.data.begin(), lv.data.end());
    std::vector<std::size_t> shape;
    if (lv.kind == FeatureLevel::Kind::spatial) {
      shape = {clip.n_frames, lv.h, lv.w, lv.c};
    } else {
      shape = {clip.n_frames, lv.c};
    }
    out.push_back(t.constant(Tensor(std::move(shape), std::move(vals))));
  }
  return out;
}

Var global_average_pool(Tape& t, Var level) {
  const Tensor& X = t.val(level);
  if (X.rank() == 2) return level;
  if (X.rank() != 4) {
    throw ShapeError("global_average_pool: expected {N,c} or {N,h,w,c}, got " + X.shape_str());
  }
  // {N,h,w,c} -> {N,w,c} -> {N,c}
  return mean_axis(t, mean_axis(t, level, 1), 1);
}

PrimaryTokens concat_multilevel(Tape& t, const std::vector<Var>& pooled, bool multilevel) {
  if (pooled.empty()) throw ShapeError("concat_multilevel: no levels");
  std::vector<Var> use = multilevel ? pooled : std::vector<Var>{pooled.back()};
  const std::size_t n = t.val(use[0]).rows();
  PrimaryTokens out;
  std::size_t offset = 0;
  Var acc = use[0];
  for (std::size_t l = 0; l < use.size(); ++l) {
    const Tensor& lv = t.val(use[l]);
    if (lv.rank() != 2 || lv.rows() != n) {
      throw ShapeError("concat_multilevel: level " + std::to_string(l) +
                       " has shape " + lv.shape_str() + ", expected " + std::to_string(n) +
                       " rows");
    }
    out.level_offsets.push_back({offset, offset + lv.cols()});
    offset += lv.cols();
    if (l > 0) acc = concat_cols(t, acc, use[l]);
  }
  out.tokens = acc;
  return out;
}

Var temporal_difference(Tape& t, Var tokens, bool enabled) {
  if (!enabled) return tokens;
  const Tensor& T = t.val(tokens);
  if (T.rank() != 2) {
    throw ShapeError("temporal_difference: expected a matrix, got " + T.shape_str());
  }
  const std::size_t n = T.rows(), c = T.cols();
  Tensor Y = Tensor::zeros({n, 2 * c});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      Y.values[i * 2 * c + j] = T.values[i * c + j];
      if (i + 1 < n) {
        Y.values[i * 2 * c + c + j] = T.values[i * c + j] - T.values[(i + 1) * c + j];
      }
    }
  }
  bool rg = t.requires_grad(tokens);
  std::function<void(Tape&)> pull;
  if (rg) {
    Var out{t.size()};
    pull = [tokens, out, n, c](Tape& tp) {
      const std::vector<double>& g = tp.grad(out);
      std::vector<double>& gt = tp.grad_mut(tokens);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          gt[i * c + j] += g[i * 2 * c + j];
          if (i + 1 < n) {
            const double gd = g[i * 2 * c + c + j];
            gt[i * c + j] += gd;
            gt[(i + 1) * c + j] -= gd;
          }
        }
      }
    };
  }
  return t.emplace(std::move(Y), rg, std::move(pull));
}

Tensor uniform_init(std::size_t rows, std::size_t cols, SplitMix64& rng) {
  const double s = 1.0 / std::sqrt(static_cast<double>(rows));
  Tensor w = Tensor::zeros({rows, cols});
  for (double& v : w.values) v = s * (2.0 * rng.next_double() - 1.0);
  return w;
}

DistortionHeadParams DistortionHeadParams::init(std::size_t c_in, std::size_t hidden,
                                                SplitMix64& rng) {
  DistortionHeadParams p;
  p.l1_w = uniform_init(c_in, hidden, rng);
  p.l1_b = Tensor::zeros({hidden});
  p.l2_w = uniform_init(hidden, 1, rng);
  p.l2_b = Tensor::zeros({1});
  return p;
}

DistortionHeadVars put_on_tape(Tape& t, const DistortionHeadParams& p, bool trainable) {
  auto put = [&](const Tensor& x) { return trainable ? t.leaf(x) : t.constant(x); };
  return DistortionHeadVars{put(p.l1_w), put(p.l1_b), put(p.l2_w), put(p.l2_b)};
}

Var frame_quality_head(Tape& t, Var tokens, const DistortionHeadVars& p) {
  const std::size_t k = t.val(tokens).rows();
  Var h = gelu(t, add_row(t, matmul(t, tokens, p.l1_w), p.l1_b));
  Var o = add_row(t, matmul(t, h, p.l2_w), p.l2_b);  // k x 1
  return reshape(t, o, {k});
}

}  // namespace dcvq
