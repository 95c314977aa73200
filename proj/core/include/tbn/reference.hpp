#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "tbn/temporal.hpp"

// Direct-loop reference implementations. These deliberately avoid the
// im2col/GEMM lowering used by the production kernels so the two routes are
// independent; tests require them to agree to tight tolerances.
namespace tbn::reference {

template <typename T>
std::vector<T> conv2d(const std::vector<T>& x, int64_t n, int64_t t, int64_t ci,
                      int64_t h, int64_t w, const std::vector<T>& wt, int64_t co,
                      int k, int stride, int pad) {
  int64_t ho = (h + 2 * pad - k) / stride + 1;
  int64_t wo = (w + 2 * pad - k) / stride + 1;
  std::vector<T> out(n * t * co * ho * wo, T(0));
  for (int64_t f = 0; f < n * t; ++f)
    for (int64_t c = 0; c < co; ++c)
      for (int64_t oy = 0; oy < ho; ++oy)
        for (int64_t ox = 0; ox < wo; ++ox) {
          T acc = 0;
          for (int64_t ic = 0; ic < ci; ++ic)
            for (int ki = 0; ki < k; ++ki)
              for (int kj = 0; kj < k; ++kj) {
                int64_t iy = oy * stride + ki - pad;
                int64_t ix = ox * stride + kj - pad;
                if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                acc += wt[((c * ci + ic) * k + ki) * k + kj] *
                       x[((f * ci + ic) * h + iy) * w + ix];
              }
          out[((f * co + c) * ho + oy) * wo + ox] = acc;
        }
  return out;
}

template <typename T>
std::vector<T> conv3d(const std::vector<T>& x, int64_t n, int64_t t, int64_t ci,
                      int64_t h, int64_t w, const std::vector<T>& wt, int64_t co,
                      int kt, int k, int stride_t, int stride_s, int pad) {
  TemporalWindow win = temporal_window_bounds(kt);
  int64_t to = (t + stride_t - 1) / stride_t;
  int64_t ho = (h + 2 * pad - k) / stride_s + 1;
  int64_t wo = (w + 2 * pad - k) / stride_s + 1;
  std::vector<T> out(n * to * co * ho * wo, T(0));
  for (int64_t in = 0; in < n; ++in)
    for (int64_t tp = 0; tp < to; ++tp)
      for (int64_t c = 0; c < co; ++c)
        for (int64_t oy = 0; oy < ho; ++oy)
          for (int64_t ox = 0; ox < wo; ++ox) {
            T acc = 0;
            for (int64_t ic = 0; ic < ci; ++ic)
              for (int jt = 0; jt < kt; ++jt)
                for (int ki = 0; ki < k; ++ki)
                  for (int kj = 0; kj < k; ++kj) {
                    int64_t ts = std::max<int64_t>(
                        0, std::min<int64_t>(tp * stride_t + win.left + jt, t - 1));
                    int64_t iy = oy * stride_s + ki - pad;
                    int64_t ix = ox * stride_s + kj - pad;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    acc += wt[(((c * ci + ic) * kt + jt) * k + ki) * k + kj] *
                           x[(((in * t + ts) * ci + ic) * h + iy) * w + ix];
                  }
            out[(((in * to + tp) * co + c) * ho + oy) * wo + ox] = acc;
          }
  return out;
}

template <typename T>
std::vector<T> temporal_conv(const std::vector<T>& x, int64_t n, int64_t t,
                             int64_t ci, int64_t hw, const std::vector<T>& wt,
                             int64_t co, int k, int stride) {
  TemporalWindow win = temporal_window_bounds(k);
  int64_t to = (t + stride - 1) / stride;
  std::vector<T> out(n * to * co * hw, T(0));
  for (int64_t in = 0; in < n; ++in)
    for (int64_t tp = 0; tp < to; ++tp)
      for (int64_t c = 0; c < co; ++c)
        for (int64_t i = 0; i < hw; ++i) {
          T acc = 0;
          for (int j = 0; j < k; ++j) {
            int64_t ts = std::max<int64_t>(
                0, std::min<int64_t>(tp * stride + win.left + j, t - 1));
            for (int64_t ic = 0; ic < ci; ++ic)
              acc += wt[(c * k + j) * ci + ic] * x[((in * t + ts) * ci + ic) * hw + i];
          }
          out[((in * to + tp) * co + c) * hw + i] = acc;
        }
  return out;
}

// Expanded-form temporal bilinear unit: per output channel c builds
// W_c = sum_q m_q f_cq f_cq^T and evaluates x_t^T W_c x_{t+1} at every
// position (last frame pairs with itself). f layout: (co, p, ci).
template <typename T>
std::vector<T> tb_dense(const std::vector<T>& x, int64_t n, int64_t t,
                        int64_t ci, int64_t hw, const std::vector<T>& f,
                        int64_t co, int64_t p, const std::vector<T>* mask) {
  std::vector<T> out(n * t * co * hw, T(0));
  std::vector<T> wc(ci * ci);
  for (int64_t c = 0; c < co; ++c) {
    std::fill(wc.begin(), wc.end(), T(0));
    for (int64_t q = 0; q < p; ++q) {
      T m = mask ? (*mask)[q] : T(1);
      if (m == T(0)) continue;
      const T* fq = f.data() + (c * p + q) * ci;
      for (int64_t a = 0; a < ci; ++a)
        for (int64_t b = 0; b < ci; ++b) wc[a * ci + b] += m * fq[a] * fq[b];
    }
    for (int64_t in = 0; in < n; ++in)
      for (int64_t it = 0; it < t; ++it) {
        int64_t tn = std::min(it + 1, t - 1);
        for (int64_t i = 0; i < hw; ++i) {
          T acc = 0;
          for (int64_t a = 0; a < ci; ++a) {
            T xa = x[((in * t + it) * ci + a) * hw + i];
            if (xa == T(0)) continue;
            T inner = 0;
            for (int64_t b = 0; b < ci; ++b)
              inner += wc[a * ci + b] * x[((in * t + tn) * ci + b) * hw + i];
            acc += xa * inner;
          }
          out[((in * t + it) * co + c) * hw + i] = acc;
        }
      }
  }
  return out;
}

template <typename T>
std::vector<T> linear(const std::vector<T>& x, int64_t n, int64_t ci,
                      const std::vector<T>& w, int64_t co,
                      const std::vector<T>* bias) {
  std::vector<T> out(n * co, T(0));
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < co; ++c) {
      T acc = bias ? (*bias)[c] : T(0);
      for (int64_t j = 0; j < ci; ++j) acc += x[i * ci + j] * w[c * ci + j];
      out[i * co + c] = acc;
    }
  return out;
}

}  // namespace tbn::reference
