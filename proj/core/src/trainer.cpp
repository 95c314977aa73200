#include "tbn/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace tbn {

double lr_at(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs)
    throw ContractError(detail::cat("epoch ", epoch, " outside schedule of ",
                                    cfg.epochs));
  int passed = 0;
  for (double frac : cfg.milestone_fracs)
    if (epoch >= std::llround(frac * cfg.epochs)) ++passed;
  return cfg.base_lr * std::pow(cfg.decay_factor, passed);
}

template <typename T>
SgdOptimizer<T>::SgdOptimizer(std::vector<ParamRef<T>> params, double momentum,
                              double weight_decay)
    : params_(std::move(params)), momentum_(momentum),
      weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const auto& p : params_)
    velocity_.emplace_back(p.learnable ? p.tensor->numel() : 0, T(0));
}

template <typename T>
void SgdOptimizer<T>::step(double lr) {
  ++steps_;
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.learnable || !p.tensor->has_grad()) continue;
    std::span<T> w = p.tensor->value_mut();
    std::span<const T> g = p.tensor->grad();
    std::vector<T>& v = velocity_[i];
    T wd = p.decay ? static_cast<T>(weight_decay_) : T(0);
    T m = static_cast<T>(momentum_);
    T step_lr = static_cast<T>(lr);
    for (size_t j = 0; j < v.size(); ++j) {
      v[j] = m * v[j] + g[j] + wd * w[j];
      if (!std::isfinite(static_cast<double>(v[j])))
        throw TrainingError(detail::cat("non-finite update for '", p.name,
                                        "' at optimizer step ", steps_));
      w[j] -= step_lr * v[j];
    }
  }
}

template <typename T>
void SgdOptimizer<T>::zero_grad() {
  for (auto& p : params_) p.tensor->zero_grad();
}

namespace {

// Stream tags keep the independent random decision streams disjoint.
constexpr uint64_t kShuffleTag = 0xE00C;
constexpr uint64_t kClipTag = 0xC119;
constexpr uint64_t kAugmentTag = 0xA406;
constexpr uint64_t kMaskTag = 0xD809;

template <typename T>
Tensor<T> clips_to_tensor(const std::vector<Clip>& clips) {
  const Clip& first = clips.front();
  int64_t n = static_cast<int64_t>(clips.size());
  std::vector<T> data;
  data.reserve(n * first.data.size());
  for (const auto& c : clips)
    for (float v : c.data) data.push_back(static_cast<T>(v));
  return Tensor<T>::from_data({n, first.t, first.c, first.h, first.w},
                              std::move(data));
}

int argmax_row(const float* row, int64_t cols) {
  int best = 0;
  for (int64_t j = 1; j < cols; ++j)
    if (row[j] > row[best]) best = static_cast<int>(j);
  return best;
}
int argmax_row(const double* row, int64_t cols) {
  int best = 0;
  for (int64_t j = 1; j < cols; ++j)
    if (row[j] > row[best]) best = static_cast<int>(j);
  return best;
}

// Center-clip, center-crop accuracy; the cheap per-epoch eval column.
template <typename T>
double quick_eval(Model<T>& model, const VideoDataset& ds,
                  const TrainConfig& cfg) {
  NoGradGuard ng;
  int span = (cfg.clip_len - 1) * cfg.clip_stride + 1;
  int64_t correct = 0;
  size_t i = 0;
  while (i < ds.videos.size()) {
    size_t batch_end = std::min(ds.videos.size(), i + cfg.batch);
    std::vector<Clip> clips;
    std::vector<int> labels;
    for (size_t j = i; j < batch_end; ++j) {
      const auto& v = ds.videos[j];
      Clip clip = sample_clip_at(v, cfg.clip_len, cfg.clip_stride,
                                 (v.t - span) / 2);
      clips.push_back(augment(clip, AugmentMode::kEval, cfg.crop, 0));
      labels.push_back(v.label);
    }
    Tensor<T> logits = model.forward(clips_to_tensor<T>(clips), false, 0);
    auto lv = logits.value();
    int64_t classes = logits.dim(1);
    for (size_t j = 0; j < clips.size(); ++j)
      if (argmax_row(lv.data() + j * classes, classes) == labels[j]) ++correct;
    i = batch_end;
  }
  return static_cast<double>(correct) / ds.videos.size();
}

}  // namespace

template <typename T>
TrainResult train(Model<T>& model, const VideoDataset& train_set,
                  const VideoDataset* eval_set, const TrainConfig& cfg,
                  std::ostream* live, const std::string& checkpoint_path) {
  if (train_set.videos.empty()) throw ConfigError("empty training set");
  if (cfg.epochs < 1 || cfg.batch < 1)
    throw ConfigError("epochs and batch size must be positive");
  SgdOptimizer<T> opt(model.params(), cfg.momentum, cfg.weight_decay);
  TrainResult result;
  int64_t n = static_cast<int64_t>(train_set.videos.size());
  std::vector<int64_t> order(n);
  uint64_t global_step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double lr = lr_at(cfg, epoch);
    for (int64_t i = 0; i < n; ++i) order[i] = i;
    Rng shuffle_rng(mix64(mix64(cfg.seed, kShuffleTag), epoch));
    for (int64_t i = n - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    double loss_sum = 0;
    int64_t correct = 0;
    for (int64_t at = 0; at < n; at += cfg.batch) {
      int64_t batch_end = std::min(n, at + cfg.batch);
      std::vector<Clip> clips;
      std::vector<int> labels;
      for (int64_t i = at; i < batch_end; ++i) {
        const auto& v = train_set.videos[order[i]];
        Rng clip_rng(mix64(mix64(mix64(cfg.seed, kClipTag), epoch), order[i]));
        Clip clip = sample_clip(v, cfg.clip_len, cfg.clip_stride, clip_rng);
        clips.push_back(augment(clip, AugmentMode::kTrain, cfg.crop,
                                mix64(mix64(mix64(cfg.seed, kAugmentTag), epoch),
                                      order[i])));
        labels.push_back(v.label);
      }
      uint64_t mask_seed = mix64(mix64(cfg.seed, kMaskTag), global_step);
      Tensor<T> logits = model.forward(clips_to_tensor<T>(clips), true, mask_seed);
      Tensor<T> loss = softmax_cross_entropy(logits, labels);
      double loss_val = static_cast<double>(loss.item());
      if (!std::isfinite(loss_val))
        throw TrainingError(detail::cat("non-finite loss at epoch ", epoch,
                                        ", step ", global_step));
      backward(loss);
      opt.step(lr);
      opt.zero_grad();
      auto lv = logits.value();
      int64_t classes = logits.dim(1);
      for (size_t j = 0; j < labels.size(); ++j)
        if (argmax_row(lv.data() + j * classes, classes) == labels[j]) ++correct;
      loss_sum += loss_val * static_cast<double>(labels.size());
      ++global_step;
    }
    EpochRow row;
    row.epoch = epoch;
    row.lr = lr;
    row.train_loss = loss_sum / static_cast<double>(n);
    row.train_acc = static_cast<double>(correct) / static_cast<double>(n);
    row.eval_acc = eval_set ? quick_eval(model, *eval_set, cfg) : -1.0;
    result.rows.push_back(row);
    char line[160];
    std::snprintf(line, sizeof(line),
                  "epoch=%d lr=%.6f train_loss=%.6f train_acc=%.4f eval_acc=%.4f\n",
                  row.epoch, row.lr, row.train_loss, row.train_acc, row.eval_acc);
    result.log_text += line;
    if (live) (*live) << line << std::flush;
  }
  if (!checkpoint_path.empty()) model.save_checkpoint(checkpoint_path);
  return result;
}

std::vector<double> mean_scores(const std::vector<std::vector<double>>& views) {
  if (views.empty()) throw ContractError("no views to aggregate");
  std::vector<double> out(views[0].size(), 0.0);
  for (const auto& v : views) {
    if (v.size() != out.size())
      throw DimensionError("views disagree on class count");
    for (size_t j = 0; j < v.size(); ++j) out[j] += v[j];
  }
  for (double& x : out) x /= static_cast<double>(views.size());
  return out;
}

int argmax_index(const std::vector<double>& scores) {
  if (scores.empty()) throw ContractError("empty score vector");
  int best = 0;
  for (size_t j = 1; j < scores.size(); ++j)
    if (scores[j] > scores[best]) best = static_cast<int>(j);
  return best;
}

template <typename T>
EvalResult evaluate(Model<T>& model, const VideoDataset& ds,
                    const EvalProtocol& proto) {
  if (ds.videos.empty()) throw ConfigError("empty eval set");
  if (proto.clips < 1 || proto.crops < 1 || proto.crops > 6 || proto.topk < 1)
    throw ConfigError("bad eval protocol");
  NoGradGuard ng;
  int span = (proto.clip_len - 1) * proto.clip_stride + 1;
  int64_t top1 = 0, topk = 0;
  for (const auto& v : ds.videos) {
    if (span > v.t)
      throw ContractError(detail::cat("video has ", v.t, " frames, clip needs ",
                                      span));
    int max_start = v.t - span;
    std::vector<Clip> views;
    int cy = (v.h - proto.crop) / 2, cx = (v.w - proto.crop) / 2;
    int by = v.h - proto.crop, bx = v.w - proto.crop;
    // (y0, x0, flip) view list; fixed order, prefix selected by proto.crops.
    const std::array<std::array<int, 3>, 6> crop_specs = {{
        {cy, cx, 0}, {cy, cx, 1}, {0, 0, 0}, {0, 0, 1}, {by, bx, 0}, {by, bx, 1},
    }};
    for (int ci = 0; ci < proto.clips; ++ci) {
      int start = proto.clips == 1
                      ? max_start / 2
                      : static_cast<int>(std::llround(
                            static_cast<double>(ci) * max_start / (proto.clips - 1)));
      Clip clip = sample_clip_at(v, proto.clip_len, proto.clip_stride, start);
      for (int cr = 0; cr < proto.crops; ++cr)
        views.push_back(crop_region(clip, crop_specs[cr][0], crop_specs[cr][1],
                                    proto.crop, crop_specs[cr][2] != 0));
    }
    Tensor<T> logits = model.forward(clips_to_tensor<T>(views), false, 0);
    int64_t rows = logits.dim(0), classes = logits.dim(1);
    std::vector<T> probs(rows * classes);
    softmax_rows(logits.value().data(), rows, classes, probs.data());
    std::vector<std::vector<double>> view_scores(rows);
    for (int64_t r = 0; r < rows; ++r)
      view_scores[r].assign(probs.begin() + r * classes,
                            probs.begin() + (r + 1) * classes);
    std::vector<double> scores = mean_scores(view_scores);
    if (argmax_index(scores) == v.label) ++top1;
    int rank = 0;
    for (size_t j = 0; j < scores.size(); ++j)
      if (scores[j] > scores[v.label] ||
          (scores[j] == scores[v.label] && static_cast<int>(j) < v.label))
        ++rank;
    if (rank < proto.topk) ++topk;
  }
  double denom = static_cast<double>(ds.videos.size());
  return {static_cast<double>(top1) / denom, static_cast<double>(topk) / denom};
}

BaselineResult frame_marginal_baseline(const VideoDataset& train,
                                       const VideoDataset& test, int epochs,
                                       double lr, uint64_t seed) {
  if (train.videos.empty() || test.videos.empty())
    throw ConfigError("baseline needs non-empty train and test sets");
  const auto& v0 = train.videos[0];
  int64_t dim = static_cast<int64_t>(v0.c) * v0.h * v0.w;
  auto features = [dim](const SyntheticVideo& v) {
    std::vector<double> f(dim, 0.0);
    for (int t = 0; t < v.t; ++t)
      for (int64_t j = 0; j < dim; ++j)
        f[j] += v.pix[t * dim + j] * (1.0 / 255.0);
    for (double& x : f) x /= v.t;
    return f;
  };
  int64_t n = static_cast<int64_t>(train.videos.size());
  std::vector<double> x(n * dim);
  std::vector<int> y(n);
  for (int64_t i = 0; i < n; ++i) {
    auto f = features(train.videos[i]);
    std::copy(f.begin(), f.end(), x.begin() + i * dim);
    y[i] = train.videos[i].label;
  }
  // Standardize with train statistics.
  std::vector<double> mean(dim, 0.0), stdev(dim, 0.0);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dim; ++j) mean[j] += x[i * dim + j];
  for (double& m : mean) m /= static_cast<double>(n);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dim; ++j) {
      double d = x[i * dim + j] - mean[j];
      stdev[j] += d * d;
    }
  for (double& s : stdev) s = std::max(std::sqrt(s / n), 1e-6);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < dim; ++j)
      x[i * dim + j] = (x[i * dim + j] - mean[j]) / stdev[j];
  int classes = train.classes;
  Tensor<double> xt = Tensor<double>::from_data({n, dim}, std::move(x));
  Tensor<double> w = uniform_init<double>({classes, dim}, -1e-3, 1e-3,
                                          mix64(seed, 0xBA5E));
  w.set_requires_grad(true);
  Tensor<double> b = Tensor<double>::zeros({classes});
  b.set_requires_grad(true);
  for (int e = 0; e < epochs; ++e) {
    Tensor<double> loss = softmax_cross_entropy(linear(xt, w, b), y);
    backward(loss);
    auto wv = w.value_mut();
    auto wg = w.grad();
    for (int64_t j = 0; j < w.numel(); ++j) wv[j] -= lr * wg[j];
    auto bv = b.value_mut();
    auto bg = b.grad();
    for (int64_t j = 0; j < b.numel(); ++j) bv[j] -= lr * bg[j];
    w.zero_grad();
    b.zero_grad();
  }
  NoGradGuard ng;
  int64_t overall = 0, within = 0;
  auto wv = w.value();
  auto bv = b.value();
  for (const auto& v : test.videos) {
    auto f = features(v);
    std::vector<double> logit(classes);
    for (int c = 0; c < classes; ++c) {
      double s = bv[c];
      for (int64_t j = 0; j < dim; ++j)
        s += wv[c * dim + j] * (f[j] - mean[j]) / stdev[j];
      logit[c] = s;
    }
    int best = 0;
    for (int c = 1; c < classes; ++c)
      if (logit[c] > logit[best]) best = c;
    if (best == v.label) ++overall;
    int twin = v.label ^ 1;
    if (twin >= classes || logit[v.label] >= logit[twin]) ++within;
  }
  double denom = static_cast<double>(test.videos.size());
  return {static_cast<double>(overall) / denom,
          static_cast<double>(within) / denom};
}

#define TBN_TRAINER_INSTANTIATE(T)                                             \
  template class SgdOptimizer<T>;                                              \
  template TrainResult train<T>(Model<T>&, const VideoDataset&,                \
                                const VideoDataset*, const TrainConfig&,       \
                                std::ostream*, const std::string&);            \
  template EvalResult evaluate<T>(Model<T>&, const VideoDataset&,              \
                                  const EvalProtocol&);

TBN_TRAINER_INSTANTIATE(float)
TBN_TRAINER_INSTANTIATE(double)
#undef TBN_TRAINER_INSTANTIATE

}  // namespace tbn
