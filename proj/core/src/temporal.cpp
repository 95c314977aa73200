#include "tbn/temporal.hpp"

#include <algorithm>
#include <cstring>

#include "tbn/gemm.hpp"

namespace tbn {

TemporalWindow temporal_window_bounds(int k) {
  if (k < 1) throw ContractError(detail::cat("window size ", k, " must be >= 1"));
  return {k, 1 - (k + 1) / 2, k / 2};
}

namespace {

int64_t clamp_frame(int64_t t, int64_t max_t) {
  return std::max<int64_t>(0, std::min(t, max_t));
}

void check_clip(const Shape& s, const char* op) {
  if (s.size() != 5)
    throw DimensionError(detail::cat(op, " expects (N,T,C,H,W), got rank ", s.size()));
  if (s[1] < 1) throw ContractError(detail::cat(op, " on empty clip"));
}

}  // namespace

template <typename T>
Tensor<T> temporal_pool(const Tensor<T>& x, int k, int stride, PoolMode mode) {
  check_clip(x.shape(), "temporal_pool");
  if (stride < 1) throw ContractError("temporal_pool stride must be >= 1");
  TemporalWindow win = temporal_window_bounds(k);
  int64_t n = x.dim(0), t = x.dim(1), chw = x.dim(2) * x.dim(3) * x.dim(4);
  int64_t to = (t + stride - 1) / stride;
  Shape os{n, to, x.dim(2), x.dim(3), x.dim(4)};
  const T* xv = x.value().data();
  std::vector<T> out(n * to * chw);
  std::vector<int32_t> arg;  // chosen tap per element, max mode only
  if (mode == PoolMode::kMax) arg.resize(out.size());
  for (int64_t in = 0; in < n; ++in)
    for (int64_t tp = 0; tp < to; ++tp) {
      T* dst = out.data() + (in * to + tp) * chw;
      if (mode == PoolMode::kAvg) {
        std::fill(dst, dst + chw, T(0));
        for (int j = 0; j < k; ++j) {
          int64_t ts = clamp_frame(tp * stride + win.left + j, t - 1);
          const T* src = xv + (in * t + ts) * chw;
          for (int64_t i = 0; i < chw; ++i) dst[i] += src[i];
        }
        T inv = T(1) / static_cast<T>(k);
        for (int64_t i = 0; i < chw; ++i) dst[i] *= inv;
      } else {
        int32_t* am = arg.data() + (in * to + tp) * chw;
        for (int j = 0; j < k; ++j) {
          int64_t ts = clamp_frame(tp * stride + win.left + j, t - 1);
          const T* src = xv + (in * t + ts) * chw;
          if (j == 0) {
            std::copy(src, src + chw, dst);
            std::fill(am, am + chw, static_cast<int32_t>(ts));
          } else {
            for (int64_t i = 0; i < chw; ++i)
              if (src[i] > dst[i]) {
                dst[i] = src[i];
                am[i] = static_cast<int32_t>(ts);
              }
          }
        }
      }
    }
  const char* name = mode == PoolMode::kAvg ? "temporal_pool_avg" : "temporal_pool_max";
  return detail::make_op<T>(
      name, std::move(os), std::move(out), {x.node()},
      [n, t, to, chw, k, stride, win, mode, arg = std::move(arg)](Node<T>& nd) {
        auto& p = nd.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = nd.grad.data();
        if (mode == PoolMode::kAvg) {
          T inv = T(1) / static_cast<T>(k);
          for (int64_t in = 0; in < n; ++in)
            for (int64_t tp = 0; tp < to; ++tp) {
              const T* src = g + (in * to + tp) * chw;
              for (int j = 0; j < k; ++j) {
                int64_t ts = clamp_frame(tp * stride + win.left + j, t - 1);
                T* dst = d + (in * t + ts) * chw;
                for (int64_t i = 0; i < chw; ++i) dst[i] += src[i] * inv;
              }
            }
        } else {
          for (int64_t in = 0; in < n; ++in)
            for (int64_t tp = 0; tp < to; ++tp) {
              int64_t base = (in * to + tp) * chw;
              for (int64_t i = 0; i < chw; ++i)
                d[(in * t + arg[base + i]) * chw + i] += g[base + i];
            }
        }
      });
}

template <typename T>
Tensor<T> temporal_conv(const Tensor<T>& x, const Tensor<T>& w, int stride) {
  check_clip(x.shape(), "temporal_conv");
  if (stride < 1) throw ContractError("temporal_conv stride must be >= 1");
  if (w.rank() != 3)
    throw DimensionError(detail::cat("temporal_conv weight must be (C_out,k,C_in), got ",
                                     shape_str(w.shape())));
  int64_t n = x.dim(0), t = x.dim(1), ci = x.dim(2), hw = x.dim(3) * x.dim(4);
  int64_t co = w.dim(0), ci_w = w.dim(2);
  int k = static_cast<int>(w.dim(1));
  if (ci_w != ci)
    throw DimensionError(detail::cat("temporal_conv: input has ", ci,
                                     " channels, weight expects ", ci_w));
  TemporalWindow win = temporal_window_bounds(k);
  int64_t to = (t + stride - 1) / stride;
  Shape os{n, to, co, x.dim(3), x.dim(4)};
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  std::vector<T> out(n * to * co * hw, T(0));
  for (int64_t in = 0; in < n; ++in)
    for (int64_t tp = 0; tp < to; ++tp) {
      T* y = out.data() + (in * to + tp) * co * hw;
      for (int j = 0; j < k; ++j) {
        int64_t ts = clamp_frame(tp * stride + win.left + j, t - 1);
        const T* src = xv + (in * t + ts) * ci * hw;
        // y (co x hw) += W_j (co x ci) * src (ci x hw)
        gemm(false, false, co, hw, ci, T(1), wv + static_cast<int64_t>(j) * ci,
             static_cast<int64_t>(k) * ci, src, hw, T(1), y, hw);
      }
    }
  return detail::make_op<T>(
      "temporal_conv", std::move(os), std::move(out), {x.node(), w.node()},
      [n, t, to, ci, co, hw, k, stride, win](Node<T>& nd) {
        auto& px = nd.parents[0];
        auto& pw = nd.parents[1];
        const T* g = nd.grad.data();
        const T* xv = px->value.data();
        const T* wv = pw->value.data();
        T* dx = px->requires_grad ? detail::ensure_grad(*px).data() : nullptr;
        T* dw = pw->requires_grad ? detail::ensure_grad(*pw).data() : nullptr;
        for (int64_t in = 0; in < n; ++in)
          for (int64_t tp = 0; tp < to; ++tp) {
            const T* gy = g + (in * to + tp) * co * hw;
            for (int j = 0; j < k; ++j) {
              int64_t ts = clamp_frame(tp * stride + win.left + j, t - 1);
              if (dw) {
                const T* src = xv + (in * t + ts) * ci * hw;
                // dW_j (co x ci) += gy (co x hw) * src^T (hw x ci)
                gemm(false, true, co, ci, hw, T(1), gy, hw, src, hw, T(1),
                     dw + static_cast<int64_t>(j) * ci,
                     static_cast<int64_t>(k) * ci);
              }
              if (dx) {
                // dx_ts (ci x hw) += W_j^T (ci x co) * gy (co x hw)
                gemm(true, false, ci, hw, co, T(1),
                     wv + static_cast<int64_t>(j) * ci,
                     static_cast<int64_t>(k) * ci, gy, hw, T(1),
                     dx + (in * t + ts) * ci * hw, hw);
              }
            }
          }
      });
}

template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& x) {
  check_clip(x.shape(), "temporal_shift");
  int64_t n = x.dim(0), t = x.dim(1), chw = x.dim(2) * x.dim(3) * x.dim(4);
  const T* xv = x.value().data();
  std::vector<T> out(x.numel());
  for (int64_t in = 0; in < n; ++in) {
    for (int64_t it = 0; it + 1 < t; ++it)
      std::memcpy(out.data() + (in * t + it) * chw, xv + (in * t + it + 1) * chw,
                  sizeof(T) * chw);
    std::memcpy(out.data() + (in * t + t - 1) * chw, xv + (in * t + t - 1) * chw,
                sizeof(T) * chw);
  }
  return detail::make_op<T>(
      "temporal_shift", x.shape(), std::move(out), {x.node()},
      [n, t, chw](Node<T>& nd) {
        auto& p = nd.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = nd.grad.data();
        for (int64_t in = 0; in < n; ++in) {
          for (int64_t it = 0; it + 1 < t; ++it) {
            const T* src = g + (in * t + it) * chw;
            T* dst = d + (in * t + it + 1) * chw;
            for (int64_t i = 0; i < chw; ++i) dst[i] += src[i];
          }
          const T* src = g + (in * t + t - 1) * chw;
          T* dst = d + (in * t + t - 1) * chw;
          for (int64_t i = 0; i < chw; ++i) dst[i] += src[i];
        }
      });
}

#define TBN_INSTANTIATE(T)                                                    \
  template Tensor<T> temporal_pool<T>(const Tensor<T>&, int, int, PoolMode); \
  template Tensor<T> temporal_conv<T>(const Tensor<T>&, const Tensor<T>&,    \
                                      int);                                  \
  template Tensor<T> temporal_shift<T>(const Tensor<T>&);

TBN_INSTANTIATE(float)
TBN_INSTANTIATE(double)

#undef TBN_INSTANTIATE

}  // namespace tbn
