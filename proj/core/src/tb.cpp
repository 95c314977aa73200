#include "tbn/tb.hpp"

#include "tbn/conv.hpp"
#include "tbn/rng.hpp"
#include "tbn/temporal.hpp"

namespace tbn {

DropFactorMask dropfactor_sample(int p, double keep, uint64_t seed) {
  if (p < 1) throw ContractError("dropfactor_sample: p must be >= 1");
  if (!(keep > 0.0 && keep <= 1.0))
    throw ContractError(detail::cat("dropfactor keep ", keep, " outside (0,1]"));
  DropFactorMask mask;
  mask.keep = keep;
  mask.keep_flags.resize(p);
  Rng rng(seed);
  for (int q = 0; q < p; ++q)
    mask.keep_flags[q] = keep >= 1.0 ? 1 : (rng.bernoulli(keep) ? 1 : 0);
  return mask;
}

template <typename T>
T bilinear_dense_oracle(std::span<const T> x_i, std::span<const T> x_next,
                        std::span<const T> w) {
  size_t c = x_i.size();
  if (x_next.size() != c || w.size() != c * c)
    throw DimensionError(detail::cat("bilinear_dense_oracle: C=", c,
                                     " vs next ", x_next.size(), " and W of ",
                                     w.size(), " entries"));
  T acc = 0;
  for (size_t a = 0; a < c; ++a)
    for (size_t b = 0; b < c; ++b) acc += x_i[a] * w[a * c + b] * x_next[b];
  return acc;
}

template <typename T>
Tensor<T> tb_forward(const Tensor<T>& x, const Tensor<T>& f,
                     const DropFactorMask* mask) {
  if (x.rank() != 5)
    throw DimensionError(detail::cat("tb_forward expects (N,T,C,H,W), got ",
                                     shape_str(x.shape())));
  if (f.rank() != 3)
    throw DimensionError(detail::cat("factor weight must be (C_out,p,C_in), got ",
                                     shape_str(f.shape())));
  int64_t co = f.dim(0), p = f.dim(1), ci = f.dim(2);
  if (x.dim(2) != ci)
    throw DimensionError(detail::cat("tb_forward: input has ", x.dim(2),
                                     " channels, factors expect ", ci));
  if (mask && mask->size() != p)
    throw ContractError(detail::cat("mask length ", mask->size(),
                                    " does not match p=", p));
  int64_t n = x.dim(0), t = x.dim(1), h = x.dim(3), w = x.dim(4);
  // Factor maps via a pointwise conv with C_out*p filters, grouped
  // channel-major: filter index = c*p + q.
  Tensor<T> wconv = reshape(f, {co * p, ci, 1, 1});
  Tensor<T> maps = conv2d_spatial(x, wconv, 1, 0);
  Tensor<T> shifted = temporal_shift(maps);
  Tensor<T> prod = mul(maps, shifted);
  Tensor<T> grouped = reshape(prod, {n, t, co, p, h, w});
  if (mask) {
    std::vector<T> mv(p);
    T s = static_cast<T>(mask->scale());
    for (int64_t q = 0; q < p; ++q)
      mv[q] = mask->keep_flags[q] ? s : T(0);
    Tensor<T> m = Tensor<T>::from_data({p, 1, 1}, std::move(mv));
    grouped = mul(grouped, m);
  }
  return reduce_sum(grouped, 3);
}

template <typename T>
Tensor<T> expand_interaction_weights(const Tensor<T>& f, int c) {
  if (f.rank() != 3)
    throw DimensionError(detail::cat("factor weight must be (C_out,p,C_in), got ",
                                     shape_str(f.shape())));
  int64_t co = f.dim(0), p = f.dim(1), ci = f.dim(2);
  if (c < 0 || c >= co)
    throw IndexError(detail::cat("channel ", c, " out of range [0,", co, ")"));
  const T* fv = f.value().data() + static_cast<int64_t>(c) * p * ci;
  std::vector<T> out(ci * ci, T(0));
  for (int64_t q = 0; q < p; ++q) {
    const T* row = fv + q * ci;
    for (int64_t a = 0; a < ci; ++a)
      for (int64_t b = 0; b < ci; ++b) out[a * ci + b] += row[a] * row[b];
  }
  return Tensor<T>::from_data({ci, ci}, std::move(out));
}

template <typename T>
BottleneckTB<T> BottleneckTB<T>::init(const TBConfig& cfg,
                                      const std::string& name_prefix,
                                      uint64_t seed_root) {
  if (cfg.c_in < 1 || cfg.c_out < 1)
    throw ContractError("bottleneck TB needs positive channel counts");
  if (cfg.bottleneck_reduction < 1 || cfg.c_out % cfg.bottleneck_reduction != 0)
    throw ContractError(detail::cat("channels ", cfg.c_out,
                                    " not divisible by reduction ",
                                    cfg.bottleneck_reduction));
  if (cfg.factors < 1) throw ContractError("factor count must be >= 1");
  int mid = cfg.c_out / cfg.bottleneck_reduction;
  int k = cfg.temporal_kernel;
  BottleneckTB<T> b;
  b.cfg = cfg;
  b.w_in = he_init<T>({mid, k, cfg.c_in}, static_cast<int64_t>(cfg.c_in) * k,
                      seed_for_name(seed_root, name_prefix + ".w_in"));
  b.w_in.set_requires_grad(true);
  b.bn_in_gamma = Tensor<T>::full({mid}, T(1));
  b.bn_in_gamma.set_requires_grad(true);
  b.bn_in_beta = Tensor<T>::zeros({mid});
  b.bn_in_beta.set_requires_grad(true);
  b.bn_in_mean = Tensor<T>::zeros({mid});
  b.bn_in_var = Tensor<T>::full({mid}, T(1));
  b.bn_out_gamma = Tensor<T>::full({mid}, T(1));
  b.bn_out_gamma.set_requires_grad(true);
  b.bn_out_beta = Tensor<T>::zeros({mid});
  b.bn_out_beta.set_requires_grad(true);
  b.bn_out_mean = Tensor<T>::zeros({mid});
  b.bn_out_var = Tensor<T>::full({mid}, T(1));
  b.f = he_init<T>({mid, cfg.factors, mid},
                   static_cast<int64_t>(mid) * cfg.factors,
                   seed_for_name(seed_root, name_prefix + ".f"));
  b.f.set_requires_grad(true);
  b.w_out = he_init<T>({cfg.c_out, k, mid}, static_cast<int64_t>(mid) * k,
                       seed_for_name(seed_root, name_prefix + ".w_out"));
  b.w_out.set_requires_grad(true);
  return b;
}

template <typename T>
Tensor<T> BottleneckTB<T>::forward(const Tensor<T>& x, bool training,
                                   const DropFactorMask* mask) {
  Tensor<T> h = temporal_conv(x, w_in, 1);
  h = batch_norm(h, bn_in_gamma, bn_in_beta, bn_in_mean, bn_in_var, training);
  h = tb_forward(h, f, mask);
  h = batch_norm(h, bn_out_gamma, bn_out_beta, bn_out_mean, bn_out_var,
                 training);
  return temporal_conv(h, w_out, 1);
}

int temporal_rfs(const std::vector<TemporalLayerSpec>& layers) {
  int rfs = 1;
  for (const auto& l : layers) {
    int extent;
    switch (l.kind) {
      case TemporalLayerSpec::Kind::kConv:
      case TemporalLayerSpec::Kind::kPool:
        if (l.k < 1)
          throw ContractError(detail::cat("layer extent ", l.k, " must be >= 1"));
        extent = l.k;
        break;
      case TemporalLayerSpec::Kind::kTB:
        extent = 2;
        break;
      case TemporalLayerSpec::Kind::kPointwise:
        extent = 1;
        break;
      default:
        throw ContractError("unknown temporal layer kind");
    }
    rfs += extent - 1;
  }
  return rfs;
}

#define TBN_INSTANTIATE(T)                                                     \
  template T bilinear_dense_oracle<T>(std::span<const T>, std::span<const T>,  \
                                      std::span<const T>);                     \
  template Tensor<T> tb_forward<T>(const Tensor<T>&, const Tensor<T>&,         \
                                   const DropFactorMask*);                     \
  template Tensor<T> expand_interaction_weights<T>(const Tensor<T>&, int);     \
  template struct BottleneckTB<T>;

TBN_INSTANTIATE(float)
TBN_INSTANTIATE(double)

#undef TBN_INSTANTIATE

}  // namespace tbn
