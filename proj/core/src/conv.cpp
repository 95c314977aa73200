#include "tbn/conv.hpp"

#include <algorithm>

#include "tbn/gemm.hpp"
#include "tbn/temporal.hpp"

namespace tbn {
namespace {

int64_t conv_extent(int64_t in, int k, int stride, int pad, const char* op) {
  int64_t out = (in + 2 * pad - k) / stride + 1;
  if (in + 2 * pad < k || out < 1)
    throw DimensionError(detail::cat(op, ": kernel ", k, " with pad ", pad,
                                     " exceeds input extent ", in));
  return out;
}

void check_conv_args(int stride, int pad, const char* op) {
  if (stride < 1) throw ContractError(detail::cat(op, " stride must be >= 1"));
  if (pad < 0) throw ContractError(detail::cat(op, " pad must be >= 0"));
}

// Gathers one (C_in*k*k) x (Ho*Wo) patch matrix for a single frame.
template <typename T>
void im2col_frame(const T* frame, int64_t ci, int64_t h, int64_t w, int k,
                  int stride, int pad, int64_t ho, int64_t wo, T* u) {
  for (int64_t c = 0; c < ci; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        T* row = u + ((c * k + ki) * k + kj) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          int64_t iy = oy * stride + ki - pad;
          T* dst = row + oy * wo;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + wo, T(0));
            continue;
          }
          const T* src = frame + (c * h + iy) * w;
          for (int64_t ox = 0; ox < wo; ++ox) {
            int64_t ix = ox * stride + kj - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
          }
        }
      }
}

// Scatter-adds a patch-matrix gradient back onto one frame.
template <typename T>
void col2im_frame(const T* u, int64_t ci, int64_t h, int64_t w, int k,
                  int stride, int pad, int64_t ho, int64_t wo, T* frame) {
  for (int64_t c = 0; c < ci; ++c)
    for (int ki = 0; ki < k; ++ki)
      for (int kj = 0; kj < k; ++kj) {
        const T* row = u + ((c * k + ki) * k + kj) * ho * wo;
        for (int64_t oy = 0; oy < ho; ++oy) {
          int64_t iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= h) continue;
          T* dst = frame + (c * h + iy) * w;
          const T* src = row + oy * wo;
          for (int64_t ox = 0; ox < wo; ++ox) {
            int64_t ix = ox * stride + kj - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
}

}  // namespace

template <typename T>
Tensor<T> conv2d_spatial(const Tensor<T>& x, const Tensor<T>& w, int stride,
                         int pad) {
  check_conv_args(stride, pad, "conv2d_spatial");
  if (x.rank() != 5)
    throw DimensionError(detail::cat("conv2d_spatial expects (N,T,C,H,W), got ",
                                     shape_str(x.shape())));
  if (w.rank() != 4 || w.dim(2) != w.dim(3))
    throw DimensionError(detail::cat("conv2d_spatial weight must be (C_out,C_in,k,k), got ",
                                     shape_str(w.shape())));
  int64_t n = x.dim(0), t = x.dim(1), ci = x.dim(2), h = x.dim(3), wd = x.dim(4);
  int64_t co = w.dim(0);
  int k = static_cast<int>(w.dim(2));
  if (w.dim(1) != ci)
    throw DimensionError(detail::cat("conv2d_spatial: input has ", ci,
                                     " channels, weight expects ", w.dim(1)));
  int64_t ho = conv_extent(h, k, stride, pad, "conv2d_spatial");
  int64_t wo = conv_extent(wd, k, stride, pad, "conv2d_spatial");
  int64_t rows = ci * k * k, cols = ho * wo;
  Shape os{n, t, co, ho, wo};
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  std::vector<T> out(n * t * co * cols);
  std::vector<T> u(rows * cols);
  for (int64_t f = 0; f < n * t; ++f) {
    im2col_frame(xv + f * ci * h * wd, ci, h, wd, k, stride, pad, ho, wo, u.data());
    gemm(false, false, co, cols, rows, T(1), wv, rows, u.data(), cols, T(0),
         out.data() + f * co * cols, cols);
  }
  return detail::make_op<T>(
      "conv2d_spatial", std::move(os), std::move(out), {x.node(), w.node()},
      [n, t, ci, h, wd, co, k, stride, pad, ho, wo, rows, cols](Node<T>& nd) {
        auto& px = nd.parents[0];
        auto& pw = nd.parents[1];
        const T* g = nd.grad.data();
        const T* xv = px->value.data();
        const T* wv = pw->value.data();
        T* dx = px->requires_grad ? detail::ensure_grad(*px).data() : nullptr;
        T* dw = pw->requires_grad ? detail::ensure_grad(*pw).data() : nullptr;
        std::vector<T> u(rows * cols);
        std::vector<T> du(dx ? rows * cols : 0);
        for (int64_t f = 0; f < n * t; ++f) {
          const T* gy = g + f * co * cols;
          if (dw) {
            im2col_frame(xv + f * ci * h * wd, ci, h, wd, k, stride, pad, ho,
                         wo, u.data());
            // dW (co x rows) += gy (co x cols) * u^T (cols x rows)
            gemm(false, true, co, rows, cols, T(1), gy, cols, u.data(), cols,
                 T(1), dw, rows);
          }
          if (dx) {
            // du (rows x cols) = W^T (rows x co) * gy (co x cols)
            gemm(true, false, rows, cols, co, T(1), wv, rows, gy, cols, T(0),
                 du.data(), cols);
            col2im_frame(du.data(), ci, h, wd, k, stride, pad, ho, wo,
                         dx + f * ci * h * wd);
          }
        }
      });
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, int stride_t,
                 int stride_s, int pad) {
  check_conv_args(stride_s, pad, "conv3d");
  if (stride_t < 1) throw ContractError("conv3d temporal stride must be >= 1");
  if (x.rank() != 5)
    throw DimensionError(detail::cat("conv3d expects (N,T,C,H,W), got ",
                                     shape_str(x.shape())));
  if (w.rank() != 5 || w.dim(3) != w.dim(4))
    throw DimensionError(detail::cat("conv3d weight must be (C_out,C_in,k_t,k,k), got ",
                                     shape_str(w.shape())));
  int64_t n = x.dim(0), t = x.dim(1), ci = x.dim(2), h = x.dim(3), wd = x.dim(4);
  int64_t co = w.dim(0);
  int kt = static_cast<int>(w.dim(2));
  int k = static_cast<int>(w.dim(3));
  if (w.dim(1) != ci)
    throw DimensionError(detail::cat("conv3d: input has ", ci,
                                     " channels, weight expects ", w.dim(1)));
  TemporalWindow win = temporal_window_bounds(kt);
  if (t < 1) throw ContractError("conv3d on empty clip");
  int64_t to = (t + stride_t - 1) / stride_t;
  int64_t ho = conv_extent(h, k, stride_s, pad, "conv3d");
  int64_t wo = conv_extent(wd, k, stride_s, pad, "conv3d");
  int64_t frame_rows = ci * k * k, rows = frame_rows * kt, cols = ho * wo;
  Shape os{n, to, co, ho, wo};
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  // Weight layout (co, ci, kt, k, k) regrouped to match patch rows
  // (kt-major, then ci*k*k) so one GEMM covers the whole window.
  std::vector<T> wmat(co * rows);
  for (int64_t c = 0; c < co; ++c)
    for (int64_t ic = 0; ic < ci; ++ic)
      for (int jt = 0; jt < kt; ++jt)
        for (int64_t s = 0; s < static_cast<int64_t>(k) * k; ++s)
          wmat[c * rows + jt * frame_rows + ic * k * k + s] =
              wv[((c * ci + ic) * kt + jt) * k * k + s];
  std::vector<T> out(n * to * co * cols);
  std::vector<T> u(rows * cols);
  auto clamp_t = [t](int64_t v) { return std::max<int64_t>(0, std::min(v, t - 1)); };
  for (int64_t in = 0; in < n; ++in)
    for (int64_t tp = 0; tp < to; ++tp) {
      for (int jt = 0; jt < kt; ++jt) {
        int64_t ts = clamp_t(tp * stride_t + win.left + jt);
        im2col_frame(xv + (in * t + ts) * ci * h * wd, ci, h, wd, k, stride_s,
                     pad, ho, wo, u.data() + jt * frame_rows * cols);
      }
      gemm(false, false, co, cols, rows, T(1), wmat.data(), rows, u.data(),
           cols, T(0), out.data() + (in * to + tp) * co * cols, cols);
    }
  return detail::make_op<T>(
      "conv3d", std::move(os), std::move(out), {x.node(), w.node()},
      [n, t, to, ci, h, wd, co, kt, k, stride_t, stride_s, pad, ho, wo,
       frame_rows, rows, cols, win, wmat = std::move(wmat)](Node<T>& nd) {
        auto& px = nd.parents[0];
        auto& pw = nd.parents[1];
        const T* g = nd.grad.data();
        const T* xv = px->value.data();
        T* dx = px->requires_grad ? detail::ensure_grad(*px).data() : nullptr;
        T* dw = pw->requires_grad ? detail::ensure_grad(*pw).data() : nullptr;
        std::vector<T> u(rows * cols);
        std::vector<T> du(dx ? rows * cols : 0);
        std::vector<T> dwmat(dw ? static_cast<size_t>(co) * rows : 0, T(0));
        auto clamp_t = [t](int64_t v) {
          return std::max<int64_t>(0, std::min(v, t - 1));
        };
        for (int64_t in = 0; in < n; ++in)
          for (int64_t tp = 0; tp < to; ++tp) {
            const T* gy = g + (in * to + tp) * co * cols;
            if (dw) {
              for (int jt = 0; jt < kt; ++jt) {
                int64_t ts = clamp_t(tp * stride_t + win.left + jt);
                im2col_frame(xv + (in * t + ts) * ci * h * wd, ci, h, wd, k,
                             stride_s, pad, ho, wo,
                             u.data() + jt * frame_rows * cols);
              }
              gemm(false, true, co, rows, cols, T(1), gy, cols, u.data(), cols,
                   T(1), dwmat.data(), rows);
            }
            if (dx) {
              gemm(true, false, rows, cols, co, T(1), wmat.data(), rows, gy,
                   cols, T(0), du.data(), cols);
              for (int jt = 0; jt < kt; ++jt) {
                int64_t ts = clamp_t(tp * stride_t + win.left + jt);
                col2im_frame(du.data() + jt * frame_rows * cols, ci, h, wd, k,
                             stride_s, pad, ho, wo, dx + (in * t + ts) * ci * h * wd);
              }
            }
          }
        if (dw) {
          for (int64_t c = 0; c < co; ++c)
            for (int64_t ic = 0; ic < ci; ++ic)
              for (int jt = 0; jt < kt; ++jt)
                for (int64_t s = 0; s < static_cast<int64_t>(k) * k; ++s)
                  dw[((c * ci + ic) * kt + jt) * k * k + s] +=
                      dwmat[c * rows + jt * frame_rows + ic * k * k + s];
        }
      });
}

#define TBN_INSTANTIATE(T)                                                   \
  template Tensor<T> conv2d_spatial<T>(const Tensor<T>&, const Tensor<T>&,  \
                                       int, int);                           \
  template Tensor<T> conv3d<T>(const Tensor<T>&, const Tensor<T>&, int, int, \
                               int);

TBN_INSTANTIATE(float)
TBN_INSTANTIATE(double)

#undef TBN_INSTANTIATE

}  // namespace tbn
