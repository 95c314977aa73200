#include "tbn/network.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "doctest.h"
#include "tbn/tb.hpp"
#include "tbn/temporal.hpp"

using namespace tbn;

namespace {

// Small TB-capable config that builds and runs in milliseconds.
NetworkConfig tiny_cfg(Arch arch) {
  NetworkConfig cfg;
  cfg.arch = arch;
  cfg.width_factor = 1.0 / 8.0;
  cfg.clip_len = 4;
  cfg.height = 16;
  cfg.width = 16;
  cfg.classes = 4;
  cfg.blocks_per_stage = 1;
  if (arch == Arch::kWideTBN || arch == Arch::kDeepTBN)
    cfg.tb_stages = {false, true, true, false};
  cfg.tb_factors = 3;
  cfg.init_seed = 11;
  return cfg;
}

template <typename T>
Tensor<T> clip_batch(int n, const NetworkConfig& cfg, uint64_t seed) {
  return uniform_init<T>({n, cfg.clip_len, cfg.in_channels, cfg.height, cfg.width},
                         0, 1, seed);
}

template <typename T>
void zero_factor_weights(Model<T>& m) {
  for (auto& p : m.params())
    if (p.name.ends_with(".tb.f")) *p.tensor = Tensor<T>::zeros(p.tensor->shape());
}

}  // namespace

TEST_CASE("stage output extents match the reference network layouts") {
  NetworkConfig cfg;  // defaults: C2D, full width, 8x3x112x112
  Model<float> c2d(cfg);
  std::vector<std::array<int64_t, 3>> want_c2d = {
      {8, 56, 56}, {8, 56, 56}, {8, 28, 28}, {8, 14, 14}, {8, 7, 7}};
  CHECK(c2d.stage_output_shapes() == want_c2d);

  cfg.arch = Arch::kC3D;
  Model<float> c3d(cfg);
  std::vector<std::array<int64_t, 3>> want_c3d = {
      {8, 56, 56}, {8, 56, 56}, {4, 28, 28}, {2, 14, 14}, {1, 7, 7}};
  CHECK(c3d.stage_output_shapes() == want_c3d);
}

TEST_CASE("width factor scales channel counts but not extents") {
  NetworkConfig full;
  NetworkConfig eighth;
  eighth.width_factor = 1.0 / 8.0;
  CHECK(eighth.stage_width(0) == 8);
  CHECK(eighth.stage_width(1) == 16);
  CHECK(eighth.stage_width(2) == 32);
  CHECK(eighth.stage_width(3) == 64);
  Model<float> a(full), b(eighth);
  CHECK(a.stage_output_shapes() == b.stage_output_shapes());
}

TEST_CASE("logits have one row per clip and one column per class") {
  auto cfg = tiny_cfg(Arch::kC2D);
  Model<float> m(cfg);
  auto x = clip_batch<float>(3, cfg, 5);
  auto y = m.forward(x, false, 0);
  CHECK(y.shape() == Shape{3, 4});
}

TEST_CASE("a block whose second conv is zero passes nonnegative input through") {
  // relu(x + conv_path(x)) with conv_path ending in a zeroed conv collapses to
  // relu(x), the identity on x >= 0.
  net_detail::ResBlock<float> blk;
  auto make = [](int64_t c) {
    net_detail::ConvBN<float> l;
    l.stride_t = 1;
    l.stride_s = 1;
    l.pad = 1;
    l.w = he_init<float>({c, c, 3, 3}, c * 9, 77);
    l.gamma = Tensor<float>::full({c}, 1.0f);
    l.beta = Tensor<float>::zeros({c});
    l.run_mean = Tensor<float>::zeros({c});
    l.run_var = Tensor<float>::full({c}, 1.0f);
    return l;
  };
  blk.conv1 = make(3);
  blk.conv2 = make(3);
  blk.conv2.w = Tensor<float>::zeros({3, 3, 3, 3});
  auto x = uniform_init<float>({2, 4, 3, 6, 6}, 0, 1, 9);
  auto y = blk.forward(x, false, nullptr);
  REQUIRE(y.shape() == x.shape());
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(y.value()[i] == x.value()[i]);
}

TEST_CASE("zero factor weights reproduce the plain network exactly") {
  auto base = tiny_cfg(Arch::kC2D);
  Model<float> c2d(base);
  auto x = clip_batch<float>(2, base, 21);
  for (Arch arch : {Arch::kWideTBN, Arch::kDeepTBN}) {
    auto cfg = tiny_cfg(arch);
    Model<float> tbn_model(cfg);
    zero_factor_weights(tbn_model);
    for (bool training : {false, true}) {
      auto want = c2d.forward(x, training, 3);
      auto got = tbn_model.forward(x, training, 3);
      REQUIRE(want.shape() == got.shape());
      for (int64_t i = 0; i < want.numel(); ++i)
        CHECK(got.value()[i] == want.value()[i]);
    }
  }
}

TEST_CASE("frame-constant input keeps the TB side path frame-constant") {
  TBConfig cfg;
  cfg.c_in = 4;
  cfg.c_out = 4;
  cfg.factors = 2;
  auto blk = BottleneckTB<double>::init(cfg, "cc", 3);
  auto one_frame = uniform_init<double>({2, 1, 4, 3, 3}, -1, 1, 8);
  Tensor<double> x = Tensor<double>::zeros({2, 5, 4, 3, 3});
  {
    auto& xv = x.value_mut();
    const auto& fv = one_frame.value();
    int64_t frame = 4 * 3 * 3;
    for (int64_t n = 0; n < 2; ++n)
      for (int64_t t = 0; t < 5; ++t)
        std::copy(fv.begin() + n * frame, fv.begin() + (n + 1) * frame,
                  xv.begin() + (n * 5 + t) * frame);
  }
  auto y = blk.forward(x, false, nullptr);
  const auto& yv = y.value();
  int64_t frame = 4 * 3 * 3;
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t t = 1; t < 5; ++t)
      for (int64_t i = 0; i < frame; ++i)
        CHECK(yv[(n * 5 + t) * frame + i] == yv[n * 5 * frame + i]);
}

TEST_CASE("gradients reach both the conv path and the factor weights") {
  auto cfg = tiny_cfg(Arch::kWideTBN);
  Model<double> m(cfg);
  auto x = clip_batch<double>(2, cfg, 31);
  auto loss = softmax_cross_entropy(m.forward(x, false, 0), {0, 2});
  loss.backward();
  double conv_sq = 0, f_sq = 0;
  for (auto& p : m.params()) {
    if (!p.tensor->has_grad()) continue;
    double sq = 0;
    for (double g : p.tensor->grad()) sq += g * g;
    if (p.name.ends_with(".conv1.w")) conv_sq += sq;
    if (p.name.ends_with(".tb.f")) f_sq += sq;
  }
  CHECK(conv_sq > 0);
  CHECK(f_sq > 0);
}

TEST_CASE("deep TB parameters are the plain network plus its side chains") {
  auto c2d = tiny_cfg(Arch::kC2D);
  auto deep = tiny_cfg(Arch::kDeepTBN);
  Model<float> a(c2d), b(deep);
  auto pa = a.params();
  auto pb = b.params();
  int64_t plain = 0, with_tb = 0, chain = 0;
  for (auto& p : pa) plain += p.tensor->numel();
  size_t ia = 0;
  for (auto& p : pb) {
    with_tb += p.tensor->numel();
    if (p.name.find(".tb.") != std::string::npos) {
      chain += p.tensor->numel();
    } else {
      // Non-chain entries line up one-to-one with the plain network.
      REQUIRE(ia < pa.size());
      CHECK(p.name == pa[ia].name);
      CHECK(p.tensor->shape() == pa[ia].tensor->shape());
      ++ia;
    }
  }
  CHECK(ia == pa.size());
  CHECK(chain > 0);
  CHECK(with_tb == plain + chain);
}

TEST_CASE("eval forward treats batch entries independently") {
  auto cfg = tiny_cfg(Arch::kWideTBN);
  Model<float> m(cfg);
  auto x = clip_batch<float>(3, cfg, 41);
  auto y = m.forward(x, false, 0);
  // Reverse the batch and compare row-permuted logits bitwise.
  Tensor<float> rx = Tensor<float>::zeros(x.shape());
  int64_t row = x.numel() / 3;
  for (int64_t n = 0; n < 3; ++n)
    std::copy(x.value().begin() + n * row, x.value().begin() + (n + 1) * row,
              rx.value_mut().begin() + (2 - n) * row);
  auto ry = m.forward(rx, false, 0);
  for (int64_t n = 0; n < 3; ++n)
    for (int64_t c = 0; c < 4; ++c)
      CHECK(ry.value()[(2 - n) * 4 + c] == y.value()[n * 4 + c]);
}

TEST_CASE("identical clips in one batch get identical logits") {
  auto cfg = tiny_cfg(Arch::kC2D);
  Model<float> m(cfg);
  auto one = clip_batch<float>(1, cfg, 43);
  Tensor<float> two = Tensor<float>::zeros({2, cfg.clip_len, 3, 16, 16});
  std::copy(one.value().begin(), one.value().end(), two.value_mut().begin());
  std::copy(one.value().begin(), one.value().end(),
            two.value_mut().begin() + one.numel());
  auto y = m.forward(two, false, 0);
  for (int64_t c = 0; c < 4; ++c)
    CHECK(y.value()[c] == y.value()[4 + c]);
}

TEST_CASE("eval forward is repeatable and mutates nothing") {
  auto cfg = tiny_cfg(Arch::kDeepTBN);
  Model<float> m(cfg);
  auto x = clip_batch<float>(2, cfg, 47);
  auto a = m.forward(x, false, 0);
  auto b = m.forward(x, false, 9999);  // mask seed is ignored in eval mode
  for (int64_t i = 0; i < a.numel(); ++i) CHECK(a.value()[i] == b.value()[i]);
}

TEST_CASE("training mode advances batch-norm running statistics") {
  auto cfg = tiny_cfg(Arch::kC2D);
  Model<float> m(cfg);
  auto x = clip_batch<float>(2, cfg, 53);
  auto before = m.forward(x, false, 0);
  (void)m.forward(x, true, 0);
  auto after = m.forward(x, false, 0);
  bool moved = false;
  for (int64_t i = 0; i < before.numel(); ++i)
    if (before.value()[i] != after.value()[i]) moved = true;
  CHECK(moved);
}

TEST_CASE("checkpoints round-trip the full model state") {
  auto cfg = tiny_cfg(Arch::kWideTBN);
  Model<float> m(cfg);
  auto x = clip_batch<float>(2, cfg, 61);
  // Move running stats off their init values so buffers are exercised too.
  (void)m.forward(x, true, 1);
  auto want = m.forward(x, false, 0);
  auto path = std::filesystem::temp_directory_path() / "tbn_test_ckpt.bin";
  m.save_checkpoint(path.string());

  Model<float> other(cfg);
  auto fresh = other.forward(x, false, 0);
  bool differs = false;
  for (int64_t i = 0; i < want.numel(); ++i)
    if (fresh.value()[i] != want.value()[i]) differs = true;
  CHECK(differs);  // distinct state before the load: forward(+stats) moved m

  other.load_checkpoint(path.string());
  auto got = other.forward(x, false, 0);
  for (int64_t i = 0; i < want.numel(); ++i)
    CHECK(got.value()[i] == want.value()[i]);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects truncation and mismatched models") {
  auto cfg = tiny_cfg(Arch::kC2D);
  Model<float> m(cfg);
  auto dir = std::filesystem::temp_directory_path();
  auto path = (dir / "tbn_test_ckpt2.bin").string();
  m.save_checkpoint(path);

  SUBCASE("truncated file") {
    auto cut = (dir / "tbn_test_ckpt2_cut.bin").string();
    {
      std::ifstream in(path, std::ios::binary);
      std::string bytes((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());
      std::ofstream out(cut, std::ios::binary);
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    }
    Model<float> fresh(cfg);
    CHECK_THROWS_AS(fresh.load_checkpoint(cut), FormatError);
    std::filesystem::remove(cut);
  }
  SUBCASE("bad magic") {
    auto bad = (dir / "tbn_test_ckpt2_bad.bin").string();
    std::ofstream(bad, std::ios::binary) << "NOTACKPT garbage";
    Model<float> fresh(cfg);
    CHECK_THROWS_AS(fresh.load_checkpoint(bad), FormatError);
    std::filesystem::remove(bad);
  }
  SUBCASE("class-count mismatch") {
    auto cfg6 = cfg;
    cfg6.classes = 6;
    Model<float> fresh(cfg6);
    CHECK_THROWS_AS(fresh.load_checkpoint(path), ConfigError);
  }
  SUBCASE("architecture mismatch") {
    Model<float> fresh(tiny_cfg(Arch::kDeepTBN));
    CHECK_THROWS_AS(fresh.load_checkpoint(path), ConfigError);
  }
  std::filesystem::remove(path);
}

TEST_CASE("invalid configurations fail with named errors") {
  CHECK_THROWS_AS(arch_from_string("resnet"), ConfigError);
  CHECK(arch_from_string("wtbn") == Arch::kWideTBN);
  CHECK(arch_name(Arch::kC3D) == "c3d");

  auto no_stage = tiny_cfg(Arch::kWideTBN);
  no_stage.tb_stages = {false, false, false, false};
  CHECK_THROWS_AS(Model<float>(no_stage), ConfigError);

  auto plain_with_tb = tiny_cfg(Arch::kC2D);
  plain_with_tb.tb_stages = {false, true, false, false};
  CHECK_THROWS_AS(Model<float>(plain_with_tb), ConfigError);

  auto small = tiny_cfg(Arch::kC2D);
  small.height = 1;
  small.width = 1;
  CHECK_THROWS_WITH_AS(Model<float>(small),
                       doctest::Contains("7x7 stride-2 stem"), ConfigError);

  // 18x18 input leaves odd 9x9 extents entering the strided res2 block, which
  // the pooled wide TB side path cannot halve.
  auto odd = tiny_cfg(Arch::kWideTBN);
  odd.height = 18;
  odd.width = 18;
  CHECK_THROWS_WITH_AS(Model<float>(odd), doctest::Contains("res2"),
                       ConfigError);
}

TEST_CASE("forward rejects clips that do not match the config") {
  auto cfg = tiny_cfg(Arch::kC2D);
  Model<float> m(cfg);
  auto bad_rank = uniform_init<float>({2, 3, 16, 16}, 0, 1, 3);
  CHECK_THROWS_AS(m.forward(bad_rank, false, 0), DimensionError);
  auto bad_hw = uniform_init<float>({2, cfg.clip_len, 3, 8, 8}, 0, 1, 3);
  CHECK_THROWS_AS(m.forward(bad_hw, false, 0), DimensionError);
}
