#pragma once

#include <span>
#include <string>
#include <vector>

#include "tbn/tensor.hpp"

namespace tbn {

struct TBConfig {
  int c_in = 0;
  int c_out = 0;
  int factors = 20;               // p
  double dropfactor_keep = 0.5;   // training keep probability
  int bottleneck_reduction = 4;
  int temporal_kernel = 3;
};

// Per-factor Bernoulli(keep) mask with inverted scaling, so evaluation (no
// mask) needs no rescale.
struct DropFactorMask {
  std::vector<uint8_t> keep_flags;
  double keep = 1.0;
  double scale() const { return 1.0 / keep; }
  int size() const { return static_cast<int>(keep_flags.size()); }
};

DropFactorMask dropfactor_sample(int p, double keep, uint64_t seed);

// x_i^T W x_next by explicit double loop; reference route independent of the
// tensor engine. w is (C x C) row-major.
template <typename T>
T bilinear_dense_oracle(std::span<const T> x_i, std::span<const T> x_next,
                        std::span<const T> w);

// Factorized temporal bilinear unit. x: (N,T,C_in,H,W), f: (C_out,p,C_in).
// Per position and output channel c: y = (F_c x_t)^T diag(mask/keep) (F_c x_{t+1})
// with the next frame supplied by temporal_shift (last frame pairs with
// itself). Output keeps the input time extent. Built from primitive ops
// (pointwise conv, shift, multiply, factor-axis sum) so autodiff covers it.
template <typename T>
Tensor<T> tb_forward(const Tensor<T>& x, const Tensor<T>& f,
                     const DropFactorMask* mask);

// Dense interaction matrix W_c = F_c^T F_c of shape (C_in x C_in).
template <typename T>
Tensor<T> expand_interaction_weights(const Tensor<T>& f, int c);

// temporal_conv (C_in -> C_mid) -> batch_norm -> tb_forward (C_mid) ->
// batch_norm -> temporal_conv (C_mid -> C_out), all stride 1, with
// C_mid = C_out / bottleneck_reduction. The bilinear product is quadratic in
// its input and heavy-tailed in its output; the surrounding norms cap both
// scales or stacked chains blow up under momentum SGD. No biases anywhere and
// both norms map zero to zero, so a zero factor weight still zeroes the whole
// chain output.
template <typename T>
struct BottleneckTB {
  TBConfig cfg;
  Tensor<T> w_in;   // (C_mid, k, C_in)
  Tensor<T> bn_in_gamma, bn_in_beta;    // (C_mid) affine
  Tensor<T> bn_in_mean, bn_in_var;      // (C_mid) running stats
  Tensor<T> f;      // (C_mid, p, C_mid)
  Tensor<T> bn_out_gamma, bn_out_beta;  // (C_mid)
  Tensor<T> bn_out_mean, bn_out_var;    // (C_mid)
  Tensor<T> w_out;  // (C_out, k, C_mid)

  static BottleneckTB init(const TBConfig& cfg, const std::string& name_prefix,
                           uint64_t seed_root);
  // Non-const: training-mode forward updates the running statistics.
  Tensor<T> forward(const Tensor<T>& x, bool training,
                    const DropFactorMask* mask);
  int mid_channels() const { return cfg.c_out / cfg.bottleneck_reduction; }
};

// Temporal receptive field of a stride-1 stack: 1 + sum(k_i - 1). A TB unit
// couples adjacent frames, so it contributes extent 2; purely spatial layers
// contribute 1.
struct TemporalLayerSpec {
  enum class Kind { kConv, kPool, kTB, kPointwise };
  Kind kind = Kind::kPointwise;
  int k = 1;  // ignored for kTB (2) and kPointwise (1)
};

int temporal_rfs(const std::vector<TemporalLayerSpec>& layers);

}  // namespace tbn
