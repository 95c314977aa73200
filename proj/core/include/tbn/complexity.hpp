#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tbn {

enum class Table1Method { kConv2d3x3, kConv3d3x3x3, kTBBlock, kBottleneckTB };

Table1Method table1_method_from_string(const std::string& name);
std::string table1_method_name(Table1Method m);

// Closed forms reproduced verbatim: params {9C^2, 27C^2, pC^2, (6+p/16)C^2},
// computation = params * Q counted as multiply-accumulates (the source table
// does not state a FLOP convention; as-built reports use 2 FLOPs per MAC and
// say so in their header).
struct Table1Entry {
  int64_t params = 0;
  int64_t macs = 0;
  int rfs = 1;
};

Table1Entry table1_formula(Table1Method m, int64_t c, int p, int64_t q);

// One audited layer (or aggregated block). flops use the 2-per-MAC
// convention; formula_params < 0 means no closed form applies.
struct LayerCost {
  std::string name;
  std::string kind;
  int64_t params = 0;
  int64_t flops = 0;
  int rfs = 1;  // temporal extent contributed to a stride-1 stack
  int64_t formula_params = -1;
  int64_t discrepancy = 0;
};

struct ComplexityReport {
  std::vector<LayerCost> rows;
  int64_t total_params = 0;
  int64_t total_flops = 0;
  int64_t q = 0;  // T*H*W of the audited input
};

ComplexityReport make_report(std::vector<LayerCost> rows, int64_t q);

// Cost rows for primitive layers at a given output geometry (per-clip, N=1).
LayerCost conv2d_cost(const std::string& name, int64_t ci, int64_t co, int k,
                      int64_t t_out, int64_t h_out, int64_t w_out);
LayerCost conv3d_cost(const std::string& name, int64_t ci, int64_t co, int kt,
                      int k, int64_t t_out, int64_t h_out, int64_t w_out);
LayerCost temporal_conv_cost(const std::string& name, int64_t ci, int64_t co,
                             int k, int64_t t_out, int64_t h_out, int64_t w_out);
LayerCost batch_norm_cost(const std::string& name, int64_t c, int64_t t,
                          int64_t h, int64_t w);
LayerCost linear_cost(const std::string& name, int64_t ci, int64_t co,
                      bool bias);
LayerCost tb_module_cost(const std::string& name, int64_t ci, int64_t co,
                         int p, int64_t t, int64_t h, int64_t w);
// Aggregate row for the full temporal-conv/TB/temporal-conv chain, compared
// against the (6 + p/16)C^2 closed form via the discrepancy field.
LayerCost bottleneck_tb_cost(const std::string& name, int64_t ci, int64_t co,
                             int p, int reduction, int k, int64_t t, int64_t h,
                             int64_t w);

std::string render_text(const ComplexityReport& report);
std::string render_json(const ComplexityReport& report);

}  // namespace tbn
