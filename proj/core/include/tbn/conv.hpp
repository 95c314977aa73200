#pragma once

#include "tbn/tensor.hpp"

namespace tbn {

// Frame-wise 2D convolution with square kernel, zero padding.
// x: (N, T, C_in, H, W), w: (C_out, C_in, k, k).
// Output spatial extent: floor((H + 2*pad - k) / stride) + 1.
template <typename T>
Tensor<T> conv2d_spatial(const Tensor<T>& x, const Tensor<T>& w, int stride,
                         int pad);

// 3D convolution: centered temporal window with replicate padding (output
// length ceil(T / stride_t)), zero-padded square spatial kernel.
// x: (N, T, C_in, H, W), w: (C_out, C_in, k_t, k, k).
template <typename T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, int stride_t,
                 int stride_s, int pad);

}  // namespace tbn
