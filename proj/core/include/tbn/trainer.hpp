#pragma once

#include <array>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "tbn/data.hpp"
#include "tbn/network.hpp"

namespace tbn {

struct TrainConfig {
  int epochs = 30;
  double base_lr = 0.05;
  double momentum = 0.9;
  double weight_decay = 5e-4;  // skipped for batch-norm parameters
  int batch = 32;
  // Step schedule: lr drops by decay_factor at each milestone. Milestones are
  // round(frac * epochs), compared against 0-based epoch indices.
  std::array<double, 3> milestone_fracs = {0.30, 0.60, 125.0 / 150.0};
  double decay_factor = 0.1;
  uint64_t seed = 7;
  int clip_len = 8;
  int clip_stride = 4;
  int crop = 32;
};

double lr_at(const TrainConfig& cfg, int epoch);

// SGD with momentum: v <- m*v + g + wd*p, then p -= lr*v. Weight decay applies
// only to refs with decay set. Non-finite updates abort with TrainingError.
template <typename T>
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<ParamRef<T>> params, double momentum,
               double weight_decay);

  void step(double lr);
  void zero_grad();
  int64_t steps() const { return steps_; }

 private:
  std::vector<ParamRef<T>> params_;
  std::vector<std::vector<T>> velocity_;
  double momentum_;
  double weight_decay_;
  int64_t steps_ = 0;
};

struct EpochRow {
  int epoch = 0;
  double lr = 0;
  double train_loss = 0;
  double train_acc = 0;
  double eval_acc = -1;  // -1 when no eval set was given
};

struct TrainResult {
  std::vector<EpochRow> rows;
  std::string log_text;  // one fixed-format line per epoch
};

// Full training loop. Every random choice (shuffling, clip starts, crops,
// flips, factor masks) derives from cfg.seed, so a rerun is bit-identical.
// The per-epoch eval column uses a single center clip per video; use
// evaluate() for the multi-view protocol. Writes a checkpoint at the end when
// checkpoint_path is non-empty.
template <typename T>
TrainResult train(Model<T>& model, const VideoDataset& train_set,
                  const VideoDataset* eval_set, const TrainConfig& cfg,
                  std::ostream* live = nullptr,
                  const std::string& checkpoint_path = "");

// Multi-view test protocol: several clips at evenly spaced starts, each seen
// through several crop views; per-view softmax scores are averaged.
struct EvalProtocol {
  int clips = 6;
  int crops = 2;  // prefix of: center, center+flip, top-left, tl+flip, bottom-right, br+flip
  int topk = 2;
  int clip_len = 8;
  int clip_stride = 4;
  int crop = 32;
};

struct EvalResult {
  double top1 = 0;
  double topk = 0;
};

template <typename T>
EvalResult evaluate(Model<T>& model, const VideoDataset& ds,
                    const EvalProtocol& proto);

// Aggregation used by evaluate(), exposed for testing: elementwise mean of
// per-view probability rows, then argmax (first index wins ties).
std::vector<double> mean_scores(const std::vector<std::vector<double>>& views);
int argmax_index(const std::vector<double>& scores);

// Order-insensitive reference model: multinomial logistic regression on
// time-averaged full frames (standardized). Classes within a pair share these
// features in distribution, so within-pair accuracy stays at chance; it bounds
// what static appearance alone explains.
struct BaselineResult {
  double overall = 0;
  double within_pair = 0;  // argmax restricted to {label, its pair twin}
};

BaselineResult frame_marginal_baseline(const VideoDataset& train,
                                       const VideoDataset& test, int epochs,
                                       double lr, uint64_t seed);

}  // namespace tbn
