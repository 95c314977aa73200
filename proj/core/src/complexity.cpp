#include "tbn/complexity.hpp"

#include <cmath>
#include <cstdio>

#include <nlohmann/json.hpp>

#include "tbn/errors.hpp"
#include "tbn/tensor.hpp"

namespace tbn {

Table1Method table1_method_from_string(const std::string& name) {
  if (name == "conv2d_3x3") return Table1Method::kConv2d3x3;
  if (name == "conv3d_3x3x3") return Table1Method::kConv3d3x3x3;
  if (name == "tb_block") return Table1Method::kTBBlock;
  if (name == "bottleneck_tb") return Table1Method::kBottleneckTB;
  throw ContractError(detail::cat("unknown method '", name, "'"));
}

std::string table1_method_name(Table1Method m) {
  switch (m) {
    case Table1Method::kConv2d3x3: return "conv2d_3x3";
    case Table1Method::kConv3d3x3x3: return "conv3d_3x3x3";
    case Table1Method::kTBBlock: return "tb_block";
    case Table1Method::kBottleneckTB: return "bottleneck_tb";
  }
  throw ContractError("unknown method");
}

Table1Entry table1_formula(Table1Method m, int64_t c, int p, int64_t q) {
  if (c < 1 || q < 1 || p < 1)
    throw ContractError("table1_formula requires C, p, Q >= 1");
  Table1Entry e;
  switch (m) {
    case Table1Method::kConv2d3x3:
      e.params = 9 * c * c;
      e.rfs = 1;
      break;
    case Table1Method::kConv3d3x3x3:
      e.params = 27 * c * c;
      e.rfs = 3;
      break;
    case Table1Method::kTBBlock:
      e.params = static_cast<int64_t>(p) * c * c;
      e.rfs = 2;
      break;
    case Table1Method::kBottleneckTB:
      e.params = std::llround((6.0 + p / 16.0) * static_cast<double>(c) * c);
      e.rfs = 6;
      break;
    default:
      throw ContractError("unknown method");
  }
  e.macs = e.params * q;
  return e;
}

ComplexityReport make_report(std::vector<LayerCost> rows, int64_t q) {
  ComplexityReport r;
  r.rows = std::move(rows);
  r.q = q;
  for (const auto& row : r.rows) {
    r.total_params += row.params;
    r.total_flops += row.flops;
  }
  return r;
}

LayerCost conv2d_cost(const std::string& name, int64_t ci, int64_t co, int k,
                      int64_t t_out, int64_t h_out, int64_t w_out) {
  LayerCost c;
  c.name = name;
  c.kind = "conv2d";
  c.params = co * ci * k * k;
  c.flops = 2 * c.params * t_out * h_out * w_out;
  c.rfs = 1;
  c.formula_params = static_cast<int64_t>(k) * k * ci * co;
  c.discrepancy = c.params - c.formula_params;
  return c;
}

LayerCost conv3d_cost(const std::string& name, int64_t ci, int64_t co, int kt,
                      int k, int64_t t_out, int64_t h_out, int64_t w_out) {
  LayerCost c;
  c.name = name;
  c.kind = "conv3d";
  c.params = co * ci * kt * k * k;
  c.flops = 2 * c.params * t_out * h_out * w_out;
  c.rfs = kt;
  c.formula_params = static_cast<int64_t>(kt) * k * k * ci * co;
  c.discrepancy = c.params - c.formula_params;
  return c;
}

LayerCost temporal_conv_cost(const std::string& name, int64_t ci, int64_t co,
                             int k, int64_t t_out, int64_t h_out,
                             int64_t w_out) {
  LayerCost c;
  c.name = name;
  c.kind = "temporal_conv";
  c.params = co * static_cast<int64_t>(k) * ci;
  c.flops = 2 * c.params * t_out * h_out * w_out;
  c.rfs = k;
  c.formula_params = static_cast<int64_t>(k) * ci * co;
  c.discrepancy = 0;
  return c;
}

LayerCost batch_norm_cost(const std::string& name, int64_t c, int64_t t,
                          int64_t h, int64_t w) {
  LayerCost r;
  r.name = name;
  r.kind = "batch_norm";
  r.params = 2 * c;
  r.flops = 2 * c * t * h * w;
  r.rfs = 1;
  return r;
}

LayerCost linear_cost(const std::string& name, int64_t ci, int64_t co,
                      bool bias) {
  LayerCost r;
  r.name = name;
  r.kind = "linear";
  r.params = ci * co + (bias ? co : 0);
  r.flops = 2 * ci * co;
  r.rfs = 1;
  return r;
}

LayerCost tb_module_cost(const std::string& name, int64_t ci, int64_t co,
                         int p, int64_t t, int64_t h, int64_t w) {
  LayerCost r;
  r.name = name;
  r.kind = "tb";
  r.params = co * static_cast<int64_t>(p) * ci;
  int64_t positions = t * h * w;
  // Factor-map conv MACs, then per position: product, mask, factor sum.
  r.flops = 2 * r.params * positions + 3 * co * static_cast<int64_t>(p) * positions;
  r.rfs = 2;
  r.formula_params = static_cast<int64_t>(p) * ci * co;
  r.discrepancy = r.params - r.formula_params;
  return r;
}

LayerCost bottleneck_tb_cost(const std::string& name, int64_t ci, int64_t co,
                             int p, int reduction, int k, int64_t t, int64_t h,
                             int64_t w) {
  int64_t mid = co / reduction;
  LayerCost in = temporal_conv_cost(name, ci, mid, k, t, h, w);
  LayerCost tb = tb_module_cost(name, mid, mid, p, t, h, w);
  LayerCost out = temporal_conv_cost(name, mid, co, k, t, h, w);
  LayerCost r;
  r.name = name;
  r.kind = "bottleneck_tb";
  r.params = in.params + tb.params + out.params;
  r.flops = in.flops + tb.flops + out.flops;
  r.rfs = 1 + (k - 1) + 1 + (k - 1);  // conv k, TB (extent 2), conv k
  // The source table's closed form assumes full-width temporal convolutions;
  // the as-built bottleneck is intentionally narrower. Report both.
  r.formula_params =
      table1_formula(Table1Method::kBottleneckTB, co, p, 1).params;
  r.discrepancy = r.params - r.formula_params;
  return r;
}

std::string render_text(const ComplexityReport& report) {
  std::string out;
  out += "complexity audit (FLOPs counted as 2 per multiply-accumulate; "
         "closed-form columns count params only)\n";
  out += detail::cat("Q (input T*H*W): ", report.q, "\n");
  char line[256];
  std::snprintf(line, sizeof(line), "%-28s %-14s %12s %16s %5s %12s %12s\n",
                "layer", "kind", "params", "flops", "rfs", "formula", "delta");
  out += line;
  for (const auto& r : report.rows) {
    if (r.formula_params >= 0) {
      std::snprintf(line, sizeof(line), "%-28s %-14s %12lld %16lld %5d %12lld %12lld\n",
                    r.name.c_str(), r.kind.c_str(),
                    static_cast<long long>(r.params),
                    static_cast<long long>(r.flops), r.rfs,
                    static_cast<long long>(r.formula_params),
                    static_cast<long long>(r.discrepancy));
    } else {
      std::snprintf(line, sizeof(line), "%-28s %-14s %12lld %16lld %5d %12s %12s\n",
                    r.name.c_str(), r.kind.c_str(),
                    static_cast<long long>(r.params),
                    static_cast<long long>(r.flops), r.rfs, "-", "-");
    }
    out += line;
  }
  std::snprintf(line, sizeof(line), "%-28s %-14s %12lld %16lld\n", "total", "",
                static_cast<long long>(report.total_params),
                static_cast<long long>(report.total_flops));
  out += line;
  return out;
}

std::string render_json(const ComplexityReport& report) {
  nlohmann::json j;
  j["flop_convention"] = "2 FLOPs per multiply-accumulate";
  j["q"] = report.q;
  j["total_params"] = report.total_params;
  j["total_flops"] = report.total_flops;
  j["layers"] = nlohmann::json::array();
  for (const auto& r : report.rows) {
    nlohmann::json row;
    row["layer"] = r.name;
    row["kind"] = r.kind;
    row["params"] = r.params;
    row["flops"] = r.flops;
    row["rfs"] = r.rfs;
    if (r.formula_params >= 0) {
      row["formula_params"] = r.formula_params;
      row["discrepancy"] = r.discrepancy;
    } else {
      row["formula_params"] = nullptr;
      row["discrepancy"] = nullptr;
    }
    j["layers"].push_back(row);
  }
  return j.dump(2) + "\n";
}

}  // namespace tbn
