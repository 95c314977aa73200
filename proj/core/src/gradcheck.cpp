#include "tbn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tbn/conv.hpp"
#include "tbn/network.hpp"
#include "tbn/reference.hpp"
#include "tbn/rng.hpp"
#include "tbn/tb.hpp"
#include "tbn/temporal.hpp"

namespace tbn {

namespace {

double weighted_readout(const Tensor<double>& out, const Tensor<double>& w) {
  double s = 0;
  auto ov = out.value();
  auto wv = w.value();
  for (int64_t i = 0; i < out.numel(); ++i) s += ov[i] * wv[i];
  return s;
}

}  // namespace

double fd_worst_rel(const FdSpec& spec, uint64_t seed) {
  if (spec.inputs.empty()) throw ContractError("gradcheck needs inputs");
  for (auto* t : spec.inputs) t->set_requires_grad(true);
  // Analytic pass: scalar readout through a fixed random weighting.
  Tensor<double> out = spec.forward();
  Tensor<double> w =
      uniform_init<double>(out.shape(), 0.5, 1.5, mix64(seed, 0x0ead));
  Tensor<double> loss = reduce_sum_all(mul(out, w));
  for (auto* t : spec.inputs) t->zero_grad();
  backward(loss);
  std::vector<std::vector<double>> analytic;
  for (auto* t : spec.inputs) {
    auto g = t->grad();
    analytic.emplace_back(g.begin(), g.end());
    if (analytic.back().empty()) analytic.back().assign(t->numel(), 0.0);
  }
  auto eval_loss = [&]() {
    NoGradGuard ng;
    return weighted_readout(spec.forward(), w);
  };
  double worst = 0;
  Rng pick(mix64(seed, 0xFD));
  for (size_t ti = 0; ti < spec.inputs.size(); ++ti) {
    Tensor<double>& t = *spec.inputs[ti];
    int64_t n = t.numel();
    std::vector<int64_t> coords;
    if (n <= spec.max_coords_per_input) {
      coords.resize(n);
      for (int64_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (int i = 0; i < spec.max_coords_per_input; ++i)
        coords.push_back(static_cast<int64_t>(pick.uniform_int(n)));
    }
    for (int64_t c : coords) {
      double saved = t.value()[c];
      t.value_mut()[c] = saved + spec.h;
      double up = eval_loss();
      t.value_mut()[c] = saved - spec.h;
      double down = eval_loss();
      t.value_mut()[c] = saved;
      double numeric = (up - down) / (2 * spec.h);
      double a = analytic[ti][c];
      double rel = std::abs(a - numeric) /
                   std::max({std::abs(a), std::abs(numeric), 1e-6});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

namespace {

// Values bounded away from zero so relu/max kinks sit far from the FD step.
Tensor<double> off_kink(const Shape& s, uint64_t seed) {
  Tensor<double> t = uniform_init<double>(s, 0.25, 1.0, seed);
  auto v = t.value_mut();
  for (int64_t i = 0; i < t.numel(); ++i)
    if (i % 2 == 0) v[i] = -v[i];
  return t;
}

struct Check {
  double tol;
  std::function<double(uint64_t)> run;
};

using CheckMap = std::map<std::string, Check>;

CheckMap build_checks() {
  CheckMap m;
  auto simple = [](double tol, auto builder) {
    return Check{tol, [builder, tol](uint64_t seed) {
                   (void)tol;
                   return builder(seed);
                 }};
  };
  m["elementwise_add"] = simple(1e-7, [](uint64_t s) {
    auto a = uniform_init<double>({2, 3, 4}, -1, 1, mix64(s, 1));
    auto b = uniform_init<double>({4}, -1, 1, mix64(s, 2));
    FdSpec spec{{&a, &b}, [&] { return add(a, b); }};
    return fd_worst_rel(spec, s);
  });
  m["elementwise_mul"] = simple(1e-7, [](uint64_t s) {
    auto a = uniform_init<double>({2, 3, 4}, -1, 1, mix64(s, 1));
    auto b = uniform_init<double>({3, 4}, -1, 1, mix64(s, 2));
    FdSpec spec{{&a, &b}, [&] { return mul(a, b); }};
    return fd_worst_rel(spec, s);
  });
  m["scale"] = simple(1e-7, [](uint64_t s) {
    auto a = uniform_init<double>({3, 5}, -1, 1, mix64(s, 1));
    FdSpec spec{{&a}, [&] { return scale(a, 2.5); }};
    return fd_worst_rel(spec, s);
  });
  m["reduce_sum"] = simple(1e-7, [](uint64_t s) {
    auto a = uniform_init<double>({2, 3, 4}, -1, 1, mix64(s, 1));
    FdSpec spec{{&a}, [&] { return reduce_sum(a, 1); }};
    return fd_worst_rel(spec, s);
  });
  m["reshape"] = simple(1e-7, [](uint64_t s) {
    auto a = uniform_init<double>({2, 6}, -1, 1, mix64(s, 1));
    FdSpec spec{{&a}, [&] { return reshape(a, {3, 4}); }};
    return fd_worst_rel(spec, s);
  });
  m["relu"] = simple(1e-7, [](uint64_t s) {
    auto a = off_kink({2, 7}, mix64(s, 1));
    FdSpec spec{{&a}, [&] { return relu(a); }};
    return fd_worst_rel(spec, s);
  });
  m["linear"] = simple(1e-7, [](uint64_t s) {
    auto x = uniform_init<double>({3, 4}, -1, 1, mix64(s, 1));
    auto w = uniform_init<double>({5, 4}, -1, 1, mix64(s, 2));
    auto b = uniform_init<double>({5}, -1, 1, mix64(s, 3));
    FdSpec spec{{&x, &w, &b}, [&] { return linear(x, w, b); }};
    return fd_worst_rel(spec, s);
  });
  m["global_avg_pool"] = simple(1e-7, [](uint64_t s) {
    auto x = uniform_init<double>({2, 3, 4, 2, 2}, -1, 1, mix64(s, 1));
    FdSpec spec{{&x}, [&] { return global_avg_pool(x); }};
    return fd_worst_rel(spec, s);
  });
  m["softmax_cross_entropy"] = simple(1e-7, [](uint64_t s) {
    auto x = uniform_init<double>({4, 3}, -2, 2, mix64(s, 1));
    std::vector<int> labels = {0, 2, 1, 0};
    FdSpec spec{{&x}, [&] { return softmax_cross_entropy(x, labels); }};
    return fd_worst_rel(spec, s);
  });
  m["batch_norm"] = simple(1e-6, [](uint64_t s) {
    auto x = uniform_init<double>({2, 2, 3, 2, 2}, -1, 1, mix64(s, 1));
    auto gamma = uniform_init<double>({3}, 0.5, 1.5, mix64(s, 2));
    auto beta = uniform_init<double>({3}, -0.5, 0.5, mix64(s, 3));
    auto rm = Tensor<double>::zeros({3});
    auto rv = Tensor<double>::full({3}, 1.0);
    FdSpec spec{{&x, &gamma, &beta}, [&]() mutable {
                  // Training-mode BN mutates the running buffers; reset so
                  // every FD evaluation sees identical state.
                  std::fill(rm.value_mut().begin(), rm.value_mut().end(), 0.0);
                  std::fill(rv.value_mut().begin(), rv.value_mut().end(), 1.0);
                  return batch_norm(x, gamma, beta, rm, rv, true);
                }};
    return fd_worst_rel(spec, s);
  });
  m["conv2d"] = simple(1e-6, [](uint64_t s) {
    auto x = uniform_init<double>({1, 2, 2, 5, 5}, -1, 1, mix64(s, 1));
    auto w = uniform_init<double>({3, 2, 3, 3}, -1, 1, mix64(s, 2));
    FdSpec spec{{&x, &w}, [&] { return conv2d_spatial(x, w, 2, 1); }};
    return fd_worst_rel(spec, s);
  });
  m["conv3d"] = simple(1e-6, [](uint64_t s) {
    auto x = uniform_init<double>({1, 4, 2, 5, 5}, -1, 1, mix64(s, 1));
    auto w = uniform_init<double>({2, 2, 3, 3, 3}, -1, 1, mix64(s, 2));
    FdSpec spec{{&x, &w}, [&] { return conv3d(x, w, 2, 2, 1); }};
    return fd_worst_rel(spec, s);
  });
  m["temporal_conv"] = simple(1e-6, [](uint64_t s) {
    auto x = uniform_init<double>({2, 5, 3, 2, 2}, -1, 1, mix64(s, 1));
    auto w = uniform_init<double>({4, 3, 3}, -1, 1, mix64(s, 2));
    FdSpec spec{{&x, &w}, [&] { return temporal_conv(x, w, 2); }};
    return fd_worst_rel(spec, s);
  });
  m["temporal_pool_avg"] = simple(1e-7, [](uint64_t s) {
    auto x = uniform_init<double>({2, 6, 2, 2, 2}, -1, 1, mix64(s, 1));
    FdSpec spec{{&x}, [&] { return temporal_pool(x, 3, 2, PoolMode::kAvg); }};
    return fd_worst_rel(spec, s);
  });
  m["temporal_pool_max"] = simple(1e-6, [](uint64_t s) {
    auto x = uniform_init<double>({2, 6, 2, 2, 2}, -1, 1, mix64(s, 1));
    FdSpec spec{{&x}, [&] { return temporal_pool(x, 3, 2, PoolMode::kMax); }};
    return fd_worst_rel(spec, s);
  });
  m["temporal_shift"] = simple(1e-7, [](uint64_t s) {
    auto x = uniform_init<double>({2, 4, 3, 2, 2}, -1, 1, mix64(s, 1));
    FdSpec spec{{&x}, [&] { return temporal_shift(x); }};
    return fd_worst_rel(spec, s);
  });
  m["spatial_avg_pool2"] = simple(1e-7, [](uint64_t s) {
    auto x = uniform_init<double>({2, 2, 3, 4, 4}, -1, 1, mix64(s, 1));
    FdSpec spec{{&x}, [&] { return spatial_avg_pool2(x); }};
    return fd_worst_rel(spec, s);
  });
  m["tb_forward"] = simple(1e-6, [](uint64_t s) {
    auto x = uniform_init<double>({1, 3, 3, 2, 2}, -1, 1, mix64(s, 1));
    auto f = uniform_init<double>({4, 2, 3}, -1, 1, mix64(s, 2));
    DropFactorMask mask = dropfactor_sample(2, 0.75, mix64(s, 3));
    FdSpec spec{{&x, &f}, [&, mask] { return tb_forward(x, f, &mask); }};
    return fd_worst_rel(spec, s);
  });
  m["bottleneck_tb"] = simple(1e-6, [](uint64_t s) {
    TBConfig cfg;
    cfg.c_in = 4;
    cfg.c_out = 4;
    cfg.factors = 2;
    cfg.bottleneck_reduction = 4;
    auto blk = BottleneckTB<double>::init(cfg, "chk", mix64(s, 1));
    auto x = uniform_init<double>({1, 3, 4, 2, 2}, -1, 1, mix64(s, 2));
    FdSpec spec{{&x, &blk.w_in, &blk.bn_in_gamma, &blk.bn_in_beta, &blk.f,
                 &blk.bn_out_gamma, &blk.bn_out_beta, &blk.w_out},
                [&] { return blk.forward(x, false, nullptr); }};
    return fd_worst_rel(spec, s);
  });
  m["network"] = Check{1e-5, [](uint64_t s) {
    NetworkConfig cfg;
    cfg.arch = Arch::kWideTBN;
    cfg.stage_widths = {8, 8, 8, 8};
    cfg.blocks_per_stage = 1;
    cfg.clip_len = 4;
    cfg.height = 16;
    cfg.width = 16;
    cfg.classes = 3;
    cfg.tb_stages = {false, true, false, false};
    cfg.tb_factors = 2;
    cfg.init_seed = mix64(s, 1);
    Model<double> model(cfg);
    auto x = uniform_init<double>({2, 4, 3, 16, 16}, -1, 1, mix64(s, 2));
    std::vector<int> labels = {0, 2};
    std::vector<Tensor<double>*> inputs = {&x};
    for (auto& p : model.params())
      if (p.learnable) inputs.push_back(p.tensor);
    FdSpec spec{std::move(inputs), [&] {
                  // Eval mode: running stats stay fixed across FD probes.
                  return softmax_cross_entropy(model.forward(x, false, 0), labels);
                }};
    spec.max_coords_per_input = 4;
    return fd_worst_rel(spec, s);
  }};
  return m;
}

const CheckMap& checks() {
  static CheckMap m = build_checks();
  return m;
}

}  // namespace

std::vector<std::string> available_checks() {
  std::vector<std::string> names;
  for (const auto& [name, c] : checks()) names.push_back(name);
  return names;
}

CheckResult run_check(const std::string& name, uint64_t seed) {
  auto it = checks().find(name);
  if (it == checks().end())
    throw ConfigError(detail::cat("unknown gradient check '", name, "'"));
  CheckResult r;
  r.op = name;
  r.tol = it->second.tol;
  r.worst_rel = it->second.run(seed);
  r.pass = r.worst_rel <= r.tol;
  return r;
}

std::vector<CheckResult> run_all_checks(uint64_t seed) {
  std::vector<CheckResult> out;
  for (const auto& [name, c] : checks()) out.push_back(run_check(name, seed));
  return out;
}

namespace {

double worst_abs(std::span<const double> a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw DimensionError("route outputs differ in size");
  double w = 0;
  for (size_t i = 0; i < b.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

std::vector<double> rand_vec(int64_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

std::vector<CheckResult> run_oracle_suite(uint64_t seed) {
  std::vector<CheckResult> out;
  auto push = [&out](const char* name, double tol, double worst) {
    out.push_back({name, worst, tol, worst <= tol});
  };
  NoGradGuard ng;
  Rng rng(mix64(seed, 0x04AC1E));
  {
    double worst = 0;
    for (int it = 0; it < 10; ++it) {
      int64_t n = 1 + rng.uniform_int(2), t = 2 + rng.uniform_int(5);
      int64_t ci = 2 + rng.uniform_int(7), co = 2 + rng.uniform_int(7);
      int64_t p = 1 + rng.uniform_int(4), hw = 1 + rng.uniform_int(3);
      auto xv = rand_vec(n * t * ci * hw * 1, rng);
      auto fv = rand_vec(co * p * ci, rng);
      std::vector<double>* mask_vals = nullptr;
      std::vector<double> vals;
      DropFactorMask mask;
      if (it % 2 == 1) {
        mask = dropfactor_sample(static_cast<int>(p), 0.6, mix64(seed, it));
        vals.resize(p);
        for (int64_t q = 0; q < p; ++q)
          vals[q] = mask.keep_flags[q] ? mask.scale() : 0.0;
        mask_vals = &vals;
      }
      auto x = Tensor<double>::from_data({n, t, ci, hw, 1}, xv);
      auto f = Tensor<double>::from_data({co, p, ci}, fv);
      Tensor<double> got = tb_forward(x, f, mask_vals ? &mask : nullptr);
      auto want = reference::tb_dense(xv, n, t, ci, hw, fv, co, p, mask_vals);
      worst = std::max(worst, worst_abs(got.value(), want));
    }
    push("oracle_tb_factorized_vs_dense", 1e-10, worst);
  }
  {
    double worst = 0;
    for (int it = 0; it < 6; ++it) {
      int64_t n = 1 + rng.uniform_int(2), t = 1 + rng.uniform_int(3);
      int64_t ci = 1 + rng.uniform_int(3), co = 1 + rng.uniform_int(4);
      int64_t h = 4 + rng.uniform_int(4), w = 4 + rng.uniform_int(4);
      int k = 1 + 2 * static_cast<int>(rng.uniform_int(2));
      int stride = 1 + static_cast<int>(rng.uniform_int(2));
      int pad = static_cast<int>(rng.uniform_int(2));
      auto xv = rand_vec(n * t * ci * h * w, rng);
      auto wv = rand_vec(co * ci * k * k, rng);
      auto x = Tensor<double>::from_data({n, t, ci, h, w}, xv);
      auto wt = Tensor<double>::from_data({co, ci, k, k}, wv);
      Tensor<double> got = conv2d_spatial(x, wt, stride, pad);
      auto want = reference::conv2d(xv, n, t, ci, h, w, wv, co, k, stride, pad);
      worst = std::max(worst, worst_abs(got.value(), want));
    }
    push("oracle_conv2d_vs_loops", 1e-12, worst);
  }
  {
    double worst = 0;
    for (int it = 0; it < 6; ++it) {
      int64_t n = 1 + rng.uniform_int(2), t = 2 + rng.uniform_int(5);
      int64_t ci = 1 + rng.uniform_int(3), co = 1 + rng.uniform_int(3);
      int64_t h = 4 + rng.uniform_int(3), w = 4 + rng.uniform_int(3);
      int kt = 1 + 2 * static_cast<int>(rng.uniform_int(2));
      int k = 3;
      int st = 1 + static_cast<int>(rng.uniform_int(2));
      int ss = 1 + static_cast<int>(rng.uniform_int(2));
      auto xv = rand_vec(n * t * ci * h * w, rng);
      auto wv = rand_vec(co * ci * kt * k * k, rng);
      auto x = Tensor<double>::from_data({n, t, ci, h, w}, xv);
      auto wt = Tensor<double>::from_data({co, ci, kt, k, k}, wv);
      Tensor<double> got = conv3d(x, wt, st, ss, 1);
      auto want = reference::conv3d(xv, n, t, ci, h, w, wv, co, kt, k, st, ss, 1);
      worst = std::max(worst, worst_abs(got.value(), want));
    }
    push("oracle_conv3d_vs_loops", 1e-12, worst);
  }
  {
    double worst = 0;
    for (int it = 0; it < 6; ++it) {
      int64_t n = 1 + rng.uniform_int(2), t = 2 + rng.uniform_int(6);
      int64_t ci = 1 + rng.uniform_int(4), co = 1 + rng.uniform_int(4);
      int64_t hw = 1 + rng.uniform_int(6);
      int k = 1 + 2 * static_cast<int>(rng.uniform_int(3));
      int stride = 1 + static_cast<int>(rng.uniform_int(2));
      auto xv = rand_vec(n * t * ci * hw, rng);
      auto wv = rand_vec(co * k * ci, rng);
      auto x = Tensor<double>::from_data({n, t, ci, hw, 1}, xv);
      auto wt = Tensor<double>::from_data({co, k, ci}, wv);
      Tensor<double> got = temporal_conv(x, wt, stride);
      auto want = reference::temporal_conv(xv, n, t, ci, hw, wv, co, k, stride);
      worst = std::max(worst, worst_abs(got.value(), want));
    }
    push("oracle_temporal_conv_vs_loops", 1e-12, worst);
  }
  {
    double worst = 0;
    for (int it = 0; it < 6; ++it) {
      int64_t n = 1 + rng.uniform_int(5), ci = 1 + rng.uniform_int(6);
      int64_t co = 1 + rng.uniform_int(5);
      auto xv = rand_vec(n * ci, rng);
      auto wv = rand_vec(co * ci, rng);
      auto bv = rand_vec(co, rng);
      auto x = Tensor<double>::from_data({n, ci}, xv);
      auto w = Tensor<double>::from_data({co, ci}, wv);
      auto b = Tensor<double>::from_data({co}, bv);
      Tensor<double> got = linear(x, w, b);
      auto want = reference::linear(xv, n, ci, wv, co, &bv);
      worst = std::max(worst, worst_abs(got.value(), want));
    }
    push("oracle_linear_vs_loops", 1e-12, worst);
  }
  {
    // conv3d with a kernel w3[o,ic,jt,ki,kj] = sum_m wt[o,jt,m]*ws[m,ic,ki,kj]
    // must equal temporal_conv(conv2d(x, ws), wt); pins the shared centered
    // window and replicate-clamp conventions of the two routes.
    double worst = 0;
    for (int it = 0; it < 4; ++it) {
      int64_t n = 1, t = 3 + rng.uniform_int(4);
      int64_t ci = 1 + rng.uniform_int(2), cm = 1 + rng.uniform_int(3);
      int64_t co = 1 + rng.uniform_int(3);
      int64_t h = 5 + rng.uniform_int(3), w = 5 + rng.uniform_int(3);
      int kt = 3, k = 3;
      int st = 1 + static_cast<int>(rng.uniform_int(2));
      int ss = 1 + static_cast<int>(rng.uniform_int(2));
      auto xv = rand_vec(n * t * ci * h * w, rng);
      auto wtv = rand_vec(co * kt * cm, rng);
      auto wsv = rand_vec(cm * ci * k * k, rng);
      std::vector<double> w3(co * ci * kt * k * k, 0.0);
      for (int64_t o = 0; o < co; ++o)
        for (int64_t ic = 0; ic < ci; ++ic)
          for (int jt = 0; jt < kt; ++jt)
            for (int s = 0; s < k * k; ++s)
              for (int64_t m = 0; m < cm; ++m)
                w3[(((o * ci + ic) * kt + jt) * k * k) + s] +=
                    wtv[(o * kt + jt) * cm + m] * wsv[(m * ci + ic) * k * k + s];
      auto x = Tensor<double>::from_data({n, t, ci, h, w}, xv);
      auto fused = Tensor<double>::from_data({co, ci, kt, k, k}, w3);
      Tensor<double> got = conv3d(x, fused, st, ss, 1);
      auto ws = Tensor<double>::from_data({cm, ci, k, k}, wsv);
      auto wt = Tensor<double>::from_data({co, kt, cm}, wtv);
      Tensor<double> want = temporal_conv(conv2d_spatial(x, ws, ss, 1), wt, st);
      worst = std::max(
          worst, worst_abs(got.value(),
                           {want.value().begin(), want.value().end()}));
    }
    push("oracle_conv3d_separable", 1e-12, worst);
  }
  return out;
}

}  // namespace tbn
