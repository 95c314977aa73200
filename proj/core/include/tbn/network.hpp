#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tbn/complexity.hpp"
#include "tbn/tb.hpp"
#include "tbn/tensor.hpp"

namespace tbn {

enum class Arch { kC2D, kC3D, kWideTBN, kDeepTBN };

Arch arch_from_string(const std::string& name);  // ConfigError on unknown
std::string arch_name(Arch a);

struct NetworkConfig {
  Arch arch = Arch::kC2D;
  std::array<int, 4> stage_widths{64, 128, 256, 512};
  double width_factor = 1.0;
  int blocks_per_stage = 2;
  int in_channels = 3;
  int clip_len = 8;
  int height = 112;
  int width = 112;
  int classes = 4;
  // TB placement per stage (res1..res4); only meaningful for the TB archs.
  std::array<bool, 4> tb_stages{false, false, false, false};
  int tb_factors = 20;
  double dropfactor_keep = 0.5;
  int tb_reduction = 4;
  int tb_temporal_kernel = 3;
  uint64_t init_seed = 1;

  int stage_width(int stage) const;  // width_factor applied, min 1
  int tb_block_count() const;        // placed TB blocks across stages
};

template <typename T>
struct ParamRef {
  std::string name;
  Tensor<T>* tensor;
  bool learnable;  // false for batch-norm running statistics
  bool decay;      // weight decay applies (false for norm params and buffers)
};

namespace net_detail {

template <typename T>
struct ConvBN {
  Tensor<T> w;
  Tensor<T> gamma, beta, run_mean, run_var;
  bool is3d = false;
  int stride_t = 1, stride_s = 1, pad = 0;
  Tensor<T> forward(const Tensor<T>& x, bool training);
};

// Residual block. Plain 2D/3D, or with an additive bottleneck-TB side path:
// wide reads the block input (spatially pooled when the block downsamples),
// deep reads the conv path's output. With zero factor weights the TB path
// contributes exact zeros and the block reproduces the plain one bitwise.
template <typename T>
struct ResBlock {
  ConvBN<T> conv1, conv2;
  std::optional<ConvBN<T>> shortcut;
  std::unique_ptr<BottleneckTB<T>> tb;
  bool tb_deep = false;
  bool tb_pool_input = false;  // wide path of a stride-2 block
  Tensor<T> forward(const Tensor<T>& x, bool training,
                    const DropFactorMask* mask);
};

}  // namespace net_detail

// Parameter-free 2x2/stride-2 spatial average pool; requires even H and W.
template <typename T>
Tensor<T> spatial_avg_pool2(const Tensor<T>& x);

template <typename T>
class Model {
 public:
  explicit Model(const NetworkConfig& cfg);

  // Logits of shape (N, classes). mask_seed drives DropFactor sampling
  // (one independent stream per TB block); unused in eval mode.
  Tensor<T> forward(const Tensor<T>& clips, bool training, uint64_t mask_seed);

  const NetworkConfig& config() const { return cfg_; }

  // Stable-ordered registry of every parameter and buffer.
  std::vector<ParamRef<T>> params();

  // Analytic (T,H,W) after conv1 and each stage, for the configured input.
  std::vector<std::array<int64_t, 3>> stage_output_shapes() const;

  ComplexityReport audit() const;

  void save_checkpoint(const std::string& path);
  void load_checkpoint(const std::string& path);

 private:
  NetworkConfig cfg_;
  net_detail::ConvBN<T> stem_;
  std::vector<std::vector<net_detail::ResBlock<T>>> stages_;
  Tensor<T> fc_w, fc_b;
};

}  // namespace tbn
