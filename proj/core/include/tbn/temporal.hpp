#pragma once

#include "tbn/tensor.hpp"

namespace tbn {

// Centered window covering k frames around index i: offsets left..right with
// left = 1 - floor((k+1)/2) and right = floor(k/2), so right - left + 1 == k.
struct TemporalWindow {
  int k;
  int left;
  int right;
};

TemporalWindow temporal_window_bounds(int k);

enum class PoolMode { kAvg, kMax };

// Pool over the centered temporal window, replicate padding at clip edges.
// Output length is ceil(T / stride). Average divides by k including
// replicated frames; max ties resolve to the earliest window offset.
template <typename T>
Tensor<T> temporal_pool(const Tensor<T>& x, int k, int stride, PoolMode mode);

// 1-D convolution across frames, channels fully connected per tap.
// x: (N, T, C_in, H, W), w: (C_out, k, C_in); tap j reads frame
// clamp(t*stride + left + j). Output (N, ceil(T/stride), C_out, H, W).
template <typename T>
Tensor<T> temporal_conv(const Tensor<T>& x, const Tensor<T>& w, int stride);

// out[t] = x[t+1] for t < T-1; the last frame pairs with itself.
template <typename T>
Tensor<T> temporal_shift(const Tensor<T>& x);

}  // namespace tbn
