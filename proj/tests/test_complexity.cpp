#include "tbn/complexity.hpp"

#include <string>

#include "doctest.h"
#include "json.hpp"
#include "tbn/errors.hpp"
#include "tbn/network.hpp"

using namespace tbn;

TEST_CASE("closed-form table rows at C=64, p=20") {
  auto conv2 = table1_formula(Table1Method::kConv2d3x3, 64, 20, 1);
  CHECK(conv2.params == 36864);
  CHECK(conv2.rfs == 1);
  auto conv3 = table1_formula(Table1Method::kConv3d3x3x3, 64, 20, 1);
  CHECK(conv3.params == 110592);
  CHECK(conv3.rfs == 3);
  auto tb = table1_formula(Table1Method::kTBBlock, 64, 20, 1);
  CHECK(tb.params == 81920);
  CHECK(tb.rfs == 2);
  auto chain = table1_formula(Table1Method::kBottleneckTB, 64, 20, 1);
  CHECK(chain.params == 29696);
  CHECK(chain.rfs == 6);
}

TEST_CASE("closed-form computation column scales linearly in Q") {
  for (auto m : {Table1Method::kConv2d3x3, Table1Method::kConv3d3x3x3,
                 Table1Method::kTBBlock, Table1Method::kBottleneckTB}) {
    auto q1 = table1_formula(m, 32, 8, 100);
    auto q2 = table1_formula(m, 32, 8, 200);
    CHECK(q1.macs == q1.params * 100);
    CHECK(q2.macs == 2 * q1.macs);
  }
}

TEST_CASE("closed-form arguments are validated") {
  CHECK_THROWS_AS(table1_formula(Table1Method::kConv2d3x3, 0, 1, 1),
                  ContractError);
  CHECK_THROWS_AS(table1_formula(Table1Method::kTBBlock, 4, 0, 1),
                  ContractError);
  CHECK_THROWS_AS(table1_method_from_string("dense_tb"), ContractError);
  CHECK(table1_method_from_string("bottleneck_tb") ==
        Table1Method::kBottleneckTB);
  CHECK(table1_method_name(Table1Method::kTBBlock) == "tb_block");
}

TEST_CASE("a biased linear layer counts weights plus biases") {
  auto row = linear_cost("fc", 4, 3, true);
  CHECK(row.params == 15);
}

TEST_CASE("as-built chain row flags its gap against the closed form") {
  // temporal k=3 convs 64->16->..->64 plus a 16x3x16 factor tensor.
  auto row = bottleneck_tb_cost("chain", 64, 64, 20, 4, 3, 8, 7, 7);
  CHECK(row.params == 11264);
  CHECK(row.formula_params == 29696);
  CHECK(row.discrepancy == 11264 - 29696);
  CHECK(row.rfs == 6);
}

TEST_CASE("plain conv rows match their closed form with zero discrepancy") {
  auto c2 = conv2d_cost("res2.b0.conv1", 64, 64, 3, 8, 28, 28);
  CHECK(c2.params == 36864);
  CHECK(c2.formula_params == 36864);
  CHECK(c2.discrepancy == 0);
  CHECK(c2.flops == 2 * 36864 * 8 * 28 * 28);
  auto c3 = conv3d_cost("res2.b0.conv1", 64, 64, 3, 3, 4, 28, 28);
  CHECK(c3.params == 110592);
  CHECK(c3.discrepancy == 0);
}

TEST_CASE("report totals equal the sum of their rows") {
  NetworkConfig cfg;
  cfg.arch = Arch::kWideTBN;
  cfg.width_factor = 0.25;
  cfg.tb_stages = {false, true, true, true};
  Model<float> m(cfg);
  auto report = m.audit();
  int64_t params = 0, flops = 0;
  for (const auto& r : report.rows) {
    params += r.params;
    flops += r.flops;
  }
  CHECK(report.total_params == params);
  CHECK(report.total_flops == flops);
  CHECK(report.q == 8 * 56 * 56);
}

TEST_CASE("as-built totals equal the parameter registry") {
  for (Arch arch : {Arch::kC2D, Arch::kC3D, Arch::kWideTBN, Arch::kDeepTBN}) {
    NetworkConfig cfg;
    cfg.arch = arch;
    cfg.width_factor = 0.125;
    if (arch == Arch::kWideTBN || arch == Arch::kDeepTBN)
      cfg.tb_stages = {false, true, true, false};
    Model<float> m(cfg);
    int64_t learnable = 0;
    for (auto& p : m.params())
      if (p.learnable) learnable += p.tensor->numel();
    CHECK(m.audit().total_params == learnable);
  }
}

TEST_CASE("the full-width plain backbone lands near eleven million weights") {
  NetworkConfig cfg;
  Model<float> m(cfg);
  auto total = m.audit().total_params;
  CHECK(total > 11.3e6 * 0.95);
  CHECK(total < 11.3e6 * 1.05);
}

TEST_CASE("chain norm rows appear separately from the aggregate chain row") {
  NetworkConfig cfg;
  cfg.arch = Arch::kWideTBN;
  cfg.width_factor = 0.125;
  cfg.tb_stages = {false, true, false, false};
  Model<float> m(cfg);
  auto report = m.audit();
  int chains = 0, chain_norms = 0;
  for (const auto& r : report.rows) {
    if (r.kind == "bottleneck_tb") {
      ++chains;
      CHECK(r.discrepancy != 0);
    }
    if (r.name.find(".tb.bn_") != std::string::npos) ++chain_norms;
  }
  CHECK(chains == 2);       // two blocks at res2
  CHECK(chain_norms == 4);  // entry and exit norms per chain
}

TEST_CASE("text report declares its FLOP convention") {
  NetworkConfig cfg;
  cfg.width_factor = 0.125;
  Model<float> m(cfg);
  auto text = render_text(m.audit());
  CHECK(text.find("2 per multiply-accumulate") != std::string::npos);
  CHECK(text.find("total") != std::string::npos);
}

TEST_CASE("structured report parses and mirrors the rows") {
  NetworkConfig cfg;
  cfg.arch = Arch::kDeepTBN;
  cfg.width_factor = 0.125;
  cfg.tb_stages = {false, false, true, false};
  Model<float> m(cfg);
  auto report = m.audit();
  auto parsed = nlohmann::json::parse(render_json(report));
  REQUIRE(parsed.contains("layers"));
  REQUIRE(parsed["layers"].size() == report.rows.size());
  CHECK(parsed["total_params"].get<int64_t>() == report.total_params);
  CHECK(parsed["total_flops"].get<int64_t>() == report.total_flops);
  CHECK(parsed["q"].get<int64_t>() == report.q);
  CHECK(parsed["flop_convention"].get<std::string>() ==
        "2 FLOPs per multiply-accumulate");
  const auto& first = parsed["layers"][0];
  CHECK(first.contains("layer"));
  CHECK(first.contains("kind"));
  CHECK(first.contains("params"));
  CHECK(first.contains("flops"));
  CHECK(first.contains("rfs"));
  CHECK(first.contains("formula_params"));
  CHECK(first.contains("discrepancy"));
}
