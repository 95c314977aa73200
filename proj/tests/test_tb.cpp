#include <cmath>
#include <vector>

#include "doctest.h"
#include "tbn/reference.hpp"
#include "tbn/rng.hpp"
#include "tbn/tb.hpp"

using namespace tbn;

TEST_CASE("dense bilinear oracle worked examples") {
  std::vector<double> xi{1, 2}, xn{3, 4};
  std::vector<double> eye{1, 0, 0, 1};
  CHECK(bilinear_dense_oracle<double>(xi, xn, eye) == 11.0);

  std::vector<double> zero(4, 0.0);
  CHECK(bilinear_dense_oracle<double>(xi, xn, zero) == 0.0);

  // W = F^T F with F = [[1,0]]: only the (0,0) entry is 1.
  std::vector<double> x2{2, 3}, n2{4, 5};
  std::vector<double> w{1, 0, 0, 0};
  CHECK(bilinear_dense_oracle<double>(x2, n2, w) == 8.0);

  std::vector<double> short_x{1};
  CHECK_THROWS_AS(bilinear_dense_oracle<double>(short_x, xn, eye),
                  DimensionError);
}

TEST_CASE("tb_forward single-factor example equals the oracle") {
  // Frames (2,3) then (4,5); F_c = [[1,0]] for both output channels.
  auto x = Tensor<double>::from_data({1, 2, 2, 1, 1}, {2, 3, 4, 5});
  auto f = Tensor<double>::from_data({2, 1, 2}, {1, 0, 1, 0});
  auto y = tb_forward(x, f, nullptr);
  REQUIRE(y.shape() == Shape{1, 2, 2, 1, 1});
  CHECK(y.value()[0] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(y.value()[1] == doctest::Approx(8.0).epsilon(1e-12));
  // Last frame pairs with itself: 4*4 = 16.
  CHECK(y.value()[2] == doctest::Approx(16.0).epsilon(1e-12));
}

TEST_CASE("zero factor weights give zero output and zero gradients") {
  auto x = uniform_init<double>({1, 3, 4, 2, 2}, -1, 1, 21);
  x.set_requires_grad(true);
  auto f = Tensor<double>::zeros({4, 3, 4});
  f.set_requires_grad(true);
  auto y = tb_forward(x, f, nullptr);
  for (double v : y.value()) CHECK(v == 0.0);
  backward(reduce_sum_all(y));
  for (double g : x.grad()) CHECK(g == 0.0);
  for (double g : f.grad()) CHECK(g == 0.0);
}

TEST_CASE("tb_forward equals the dense expansion at every position") {
  Rng rng(314);
  auto x = uniform_init<double>({2, 5, 4, 2, 2}, -1, 1, rng.next_u64());
  auto f = uniform_init<double>({4, 3, 4}, -1, 1, rng.next_u64());
  auto mask = dropfactor_sample(3, 0.6, rng.next_u64());

  std::vector<double> xe(x.value().begin(), x.value().end());
  std::vector<double> fe(f.value().begin(), f.value().end());
  std::vector<double> me(mask.size());
  for (int i = 0; i < mask.size(); ++i)
    me[i] = mask.keep_flags[i] ? mask.scale() : 0.0;

  auto fast = tb_forward(x, f, &mask);
  auto dense = reference::tb_dense(xe, 2, 5, 4, 4, fe, 4, 3, &me);
  REQUIRE(static_cast<size_t>(fast.numel()) == dense.size());
  for (size_t i = 0; i < dense.size(); ++i)
    CHECK(std::fabs(fast.value()[i] - dense[i]) < 1e-10);

  auto fast_nomask = tb_forward(x, f, nullptr);
  auto dense_nomask = reference::tb_dense(xe, 2, 5, 4, 4, fe, 4, 3, nullptr);
  for (size_t i = 0; i < dense_nomask.size(); ++i)
    CHECK(std::fabs(fast_nomask.value()[i] - dense_nomask[i]) < 1e-10);
}

TEST_CASE("tb_forward validates channels and mask length") {
  auto x = uniform_init<double>({1, 2, 3, 1, 1}, -1, 1, 1);
  auto f = uniform_init<double>({2, 2, 4}, -1, 1, 2);  // expects 4 channels
  CHECK_THROWS_AS(tb_forward(x, f, nullptr), DimensionError);

  auto f3 = uniform_init<double>({2, 2, 3}, -1, 1, 3);
  auto mask = dropfactor_sample(5, 0.5, 4);  // wrong p
  CHECK_THROWS_AS(tb_forward(x, f3, &mask), ContractError);
}

TEST_CASE("expand_interaction_weights") {
  // Rows = standard basis -> identity.
  auto fe = Tensor<double>::from_data({1, 3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto eye = expand_interaction_weights(fe, 0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      CHECK(eye.value()[i * 3 + j] == (i == j ? 1.0 : 0.0));

  // Single factor [[1,2]] -> [[1,2],[2,4]].
  auto f1 = Tensor<double>::from_data({1, 1, 2}, {1, 2});
  auto w = expand_interaction_weights(f1, 0);
  CHECK(w.value()[0] == 1.0);
  CHECK(w.value()[1] == 2.0);
  CHECK(w.value()[2] == 2.0);
  CHECK(w.value()[3] == 4.0);

  // Exact symmetry and PSD quadratic form on random factors.
  auto fr = uniform_init<double>({3, 4, 5}, -1, 1, 77);
  for (int c = 0; c < 3; ++c) {
    auto wc = expand_interaction_weights(fr, c);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 5; ++j)
        CHECK(wc.value()[i * 5 + j] == wc.value()[j * 5 + i]);
    Rng rng(mix64(5150, c));
    for (int probe = 0; probe < 64; ++probe) {
      std::vector<double> v(5);
      double n2 = 0;
      for (auto& e : v) {
        e = rng.uniform(-1, 1);
        n2 += e * e;
      }
      double q = 0;
      for (int i = 0; i < 5; ++i)
        for (int j = 0; j < 5; ++j) q += v[i] * wc.value()[i * 5 + j] * v[j];
      CHECK(q >= -1e-10 * n2);
    }
  }
}

TEST_CASE("dropfactor sampling") {
  auto full = dropfactor_sample(6, 1.0, 9);
  CHECK(full.size() == 6);
  CHECK(full.scale() == 1.0);
  for (auto b : full.keep_flags) CHECK(b == 1);

  CHECK_THROWS_AS(dropfactor_sample(4, 0.0, 9), ContractError);
  CHECK_THROWS_AS(dropfactor_sample(4, 1.5, 9), ContractError);
  CHECK_THROWS_AS(dropfactor_sample(4, -0.1, 9), ContractError);

  // Monte-Carlo keep rate: 1e5 masks of p=20 at keep 0.5.
  int64_t kept = 0, total = 0;
  for (int i = 0; i < 100000; ++i) {
    auto m = dropfactor_sample(20, 0.5, mix64(123, i));
    for (auto b : m.keep_flags) kept += b;
    total += 20;
  }
  double rate = static_cast<double>(kept) / total;
  CHECK(rate == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("mask expectation recovers the unmasked output") {
  auto x = uniform_init<double>({1, 3, 3, 1, 1}, -1, 1, 31);
  auto f = uniform_init<double>({3, 4, 3}, -1, 1, 32);
  auto ref = tb_forward(x, f, nullptr);
  std::vector<double> acc(ref.numel(), 0.0);
  int masks = 10000;
  for (int i = 0; i < masks; ++i) {
    auto m = dropfactor_sample(4, 0.5, mix64(900, i));
    auto y = tb_forward(x, f, &m);
    for (int64_t j = 0; j < y.numel(); ++j) acc[j] += y.value()[j];
  }
  double peak = 0;
  for (double v : ref.value()) peak = std::max(peak, std::fabs(v));
  for (int64_t j = 0; j < ref.numel(); ++j)
    CHECK(std::fabs(acc[j] / masks - ref.value()[j]) <= 0.02 * peak);
}

TEST_CASE("tb_forward is quadratic in input scale") {
  auto x = uniform_init<double>({1, 4, 3, 2, 2}, -1, 1, 41);
  auto f = uniform_init<double>({3, 2, 3}, -1, 1, 42);
  double alpha = 1.3;
  auto y1 = tb_forward(x, f, nullptr);
  auto y2 = tb_forward(scale(x, alpha), f, nullptr);
  for (int64_t i = 0; i < y1.numel(); ++i)
    CHECK(std::fabs(y2.value()[i] - alpha * alpha * y1.value()[i]) < 1e-10);
}

TEST_CASE("zeroing one factor subtracts exactly its rank-1 term") {
  auto x = uniform_init<double>({1, 3, 3, 1, 1}, -1, 1, 51);
  auto f = uniform_init<double>({2, 3, 3}, -1, 1, 52);
  int p = 3, q = 1;
  DropFactorMask all{std::vector<uint8_t>(p, 1), 1.0};
  DropFactorMask without = all;
  without.keep_flags[q] = 0;
  DropFactorMask only{std::vector<uint8_t>(p, 0), 1.0};
  only.keep_flags[q] = 1;
  auto ya = tb_forward(x, f, &all);
  auto yw = tb_forward(x, f, &without);
  auto yo = tb_forward(x, f, &only);
  for (int64_t i = 0; i < ya.numel(); ++i)
    CHECK(std::fabs(ya.value()[i] - yw.value()[i] - yo.value()[i]) < 1e-12);
}

TEST_CASE("temporal receptive field accounting") {
  using K = TemporalLayerSpec::Kind;
  CHECK(temporal_rfs({{K::kTB, 0}}) == 2);
  CHECK(temporal_rfs({{K::kConv, 3}}) == 3);
  CHECK(temporal_rfs({{K::kConv, 3}, {K::kTB, 0}, {K::kConv, 3}}) == 6);
  CHECK(temporal_rfs({}) == 1);
  CHECK(temporal_rfs({{K::kPointwise, 1}}) == 1);
  CHECK(temporal_rfs({{K::kPool, 2}, {K::kConv, 3}}) == 4);
}

TEST_CASE("bottleneck chain zeroes on zero input and counts 11264 weights") {
  TBConfig cfg;
  cfg.c_in = 64;
  cfg.c_out = 64;
  cfg.factors = 20;
  auto blk = BottleneckTB<double>::init(cfg, "t", 3);
  CHECK(blk.mid_channels() == 16);
  CHECK(blk.w_in.numel() + blk.f.numel() + blk.w_out.numel() == 11264);

  auto zero = Tensor<double>::zeros({1, 4, 64, 2, 2});
  for (bool training : {false, true}) {
    auto blk2 = BottleneckTB<double>::init(cfg, "t", 3);
    auto y = blk2.forward(zero, training, nullptr);
    for (double v : y.value()) CHECK(v == 0.0);
  }
}

TEST_CASE("bottleneck chain validates its config") {
  TBConfig bad;
  bad.c_in = 8;
  bad.c_out = 6;  // not divisible by 4
  CHECK_THROWS_AS(BottleneckTB<double>::init(bad, "t", 1), ContractError);
  TBConfig nof;
  nof.c_in = 8;
  nof.c_out = 8;
  nof.factors = 0;
  CHECK_THROWS_AS(BottleneckTB<double>::init(nof, "t", 1), ContractError);
}
