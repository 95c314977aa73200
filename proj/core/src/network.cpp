#include "tbn/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <map>

#include "tbn/conv.hpp"
#include "tbn/rng.hpp"
#include "tbn/temporal.hpp"

namespace tbn {

Arch arch_from_string(const std::string& name) {
  if (name == "c2d") return Arch::kC2D;
  if (name == "c3d") return Arch::kC3D;
  if (name == "wtbn") return Arch::kWideTBN;
  if (name == "dtbn") return Arch::kDeepTBN;
  throw ConfigError(detail::cat("unknown arch '", name,
                                "' (expected c2d|c3d|wtbn|dtbn)"));
}

std::string arch_name(Arch a) {
  switch (a) {
    case Arch::kC2D: return "c2d";
    case Arch::kC3D: return "c3d";
    case Arch::kWideTBN: return "wtbn";
    case Arch::kDeepTBN: return "dtbn";
  }
  throw ConfigError("unknown arch");
}

int NetworkConfig::stage_width(int stage) const {
  if (stage < 0 || stage > 3) throw IndexError("stage index out of range");
  int w = static_cast<int>(std::llround(stage_widths[stage] * width_factor));
  return w < 1 ? 1 : w;
}

int NetworkConfig::tb_block_count() const {
  int n = 0;
  for (bool s : tb_stages)
    if (s) n += blocks_per_stage;
  return n;
}

// ---------------------------------------------------------------------------
// spatial_avg_pool2

template <typename T>
Tensor<T> spatial_avg_pool2(const Tensor<T>& x) {
  if (x.rank() != 5)
    throw DimensionError(detail::cat("spatial_avg_pool2 expects (N,T,C,H,W), got ",
                                     shape_str(x.shape())));
  int64_t n = x.dim(0), t = x.dim(1), c = x.dim(2), h = x.dim(3), w = x.dim(4);
  if (h % 2 != 0 || w % 2 != 0)
    throw ContractError(detail::cat("spatial_avg_pool2 needs even extents, got ",
                                    h, "x", w));
  int64_t ho = h / 2, wo = w / 2;
  const T* xv = x.value().data();
  std::vector<T> out(n * t * c * ho * wo);
  for (int64_t f = 0; f < n * t * c; ++f) {
    const T* src = xv + f * h * w;
    T* dst = out.data() + f * ho * wo;
    for (int64_t y = 0; y < ho; ++y)
      for (int64_t z = 0; z < wo; ++z)
        dst[y * wo + z] = (src[(2 * y) * w + 2 * z] + src[(2 * y) * w + 2 * z + 1] +
                           src[(2 * y + 1) * w + 2 * z] +
                           src[(2 * y + 1) * w + 2 * z + 1]) *
                          T(0.25);
  }
  return detail::make_op<T>(
      "spatial_avg_pool2", {n, t, c, ho, wo}, std::move(out), {x.node()},
      [n, t, c, h, w, ho, wo](Node<T>& nd) {
        auto& p = nd.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = nd.grad.data();
        for (int64_t f = 0; f < n * t * c; ++f) {
          const T* src = g + f * ho * wo;
          T* dst = d + f * h * w;
          for (int64_t y = 0; y < ho; ++y)
            for (int64_t z = 0; z < wo; ++z) {
              T v = src[y * wo + z] * T(0.25);
              dst[(2 * y) * w + 2 * z] += v;
              dst[(2 * y) * w + 2 * z + 1] += v;
              dst[(2 * y + 1) * w + 2 * z] += v;
              dst[(2 * y + 1) * w + 2 * z + 1] += v;
            }
        }
      });
}

namespace net_detail {

template <typename T>
Tensor<T> ConvBN<T>::forward(const Tensor<T>& x, bool training) {
  Tensor<T> h = is3d ? conv3d(x, w, stride_t, stride_s, pad)
                     : conv2d_spatial(x, w, stride_s, pad);
  return batch_norm(h, gamma, beta, run_mean, run_var, training);
}

template <typename T>
Tensor<T> ResBlock<T>::forward(const Tensor<T>& x, bool training,
                               const DropFactorMask* mask) {
  Tensor<T> h = relu(conv1.forward(x, training));
  h = conv2.forward(h, training);
  Tensor<T> s = shortcut ? shortcut->forward(x, training) : x;
  Tensor<T> sum = add(s, h);
  if (tb) {
    Tensor<T> tb_in = tb_deep ? h : (tb_pool_input ? spatial_avg_pool2(x) : x);
    sum = add(sum, tb->forward(tb_in, training, mask));
  }
  return relu(sum);
}

template struct ConvBN<float>;
template struct ConvBN<double>;
template struct ResBlock<float>;
template struct ResBlock<double>;

}  // namespace net_detail

// ---------------------------------------------------------------------------
// Model construction

namespace {

struct BlockGeom {
  int in_c = 0, out_c = 0;
  int stride_s = 1, stride_t = 1;
  bool has_tb = false;
};

// Shared static layout of a network; both the builder and the analytic
// auditors walk this.
struct NetPlan {
  bool is3d = false;
  int stem_out = 0;
  std::array<std::vector<BlockGeom>, 4> stages;
};

NetPlan plan_network(const NetworkConfig& cfg) {
  if (cfg.classes < 2) throw ConfigError("need at least 2 classes");
  if (cfg.blocks_per_stage < 1) throw ConfigError("blocks_per_stage must be >= 1");
  if (cfg.in_channels < 1 || cfg.clip_len < 1 || cfg.height < 1 || cfg.width < 1)
    throw ConfigError("invalid input clip shape");
  if (!(cfg.width_factor > 0)) throw ConfigError("width factor must be positive");
  bool tb_arch = cfg.arch == Arch::kWideTBN || cfg.arch == Arch::kDeepTBN;
  bool any_tb = cfg.tb_stages[0] || cfg.tb_stages[1] || cfg.tb_stages[2] ||
                cfg.tb_stages[3];
  if (tb_arch && !any_tb)
    throw ConfigError("TB arch needs at least one stage in tb placement");
  if (!tb_arch && any_tb)
    throw ConfigError(detail::cat("tb placement requires wtbn or dtbn, arch is ",
                                  arch_name(cfg.arch)));
  NetPlan plan;
  plan.is3d = cfg.arch == Arch::kC3D;
  plan.stem_out = cfg.stage_width(0);
  for (int s = 0; s < 4; ++s) {
    int w = cfg.stage_width(s);
    int prev = s == 0 ? plan.stem_out : cfg.stage_width(s - 1);
    for (int b = 0; b < cfg.blocks_per_stage; ++b) {
      BlockGeom g;
      g.in_c = b == 0 ? prev : w;
      g.out_c = w;
      g.stride_s = (b == 0 && s > 0) ? 2 : 1;
      g.stride_t = (plan.is3d && g.stride_s == 2) ? 2 : 1;
      g.has_tb = tb_arch && cfg.tb_stages[s];
      plan.stages[s].push_back(g);
    }
  }
  return plan;
}

int64_t conv_out_extent(int64_t in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

struct StageShapes {
  // (T,H,W) after conv1, then after each stage.
  std::vector<std::array<int64_t, 3>> at;
};

StageShapes propagate_shapes(const NetworkConfig& cfg, const NetPlan& plan) {
  StageShapes out;
  int64_t t = cfg.clip_len;
  int64_t h = conv_out_extent(cfg.height, 7, 2, 3);
  int64_t w = conv_out_extent(cfg.width, 7, 2, 3);
  if (h < 1 || w < 1)
    throw ConfigError(detail::cat("conv1: input ", cfg.height, "x", cfg.width,
                                  " too small for the 7x7 stride-2 stem"));
  out.at.push_back({t, h, w});
  for (int s = 0; s < 4; ++s) {
    for (const auto& g : plan.stages[s]) {
      if (g.has_tb && g.stride_s == 2 && cfg.arch == Arch::kWideTBN &&
          (h % 2 != 0 || w % 2 != 0))
        throw ConfigError(detail::cat("res", s + 1,
                                      ": wide TB input pooling needs even extents, got ",
                                      h, "x", w));
      h = conv_out_extent(h + 0, 3, g.stride_s, 1);
      w = conv_out_extent(w + 0, 3, g.stride_s, 1);
      t = (t + g.stride_t - 1) / g.stride_t;
      if (h < 1 || w < 1 || t < 1)
        throw ConfigError(detail::cat("res", s + 1,
                                      ": feature map vanished during shape propagation"));
    }
    out.at.push_back({t, h, w});
  }
  return out;
}

}  // namespace

template <typename T>
static net_detail::ConvBN<T> make_conv_bn(const std::string& name, bool is3d,
                                          int64_t ci, int64_t co, int kt, int k,
                                          int stride_t, int stride_s, int pad,
                                          uint64_t seed_root) {
  net_detail::ConvBN<T> l;
  l.is3d = is3d;
  l.stride_t = stride_t;
  l.stride_s = stride_s;
  l.pad = pad;
  int64_t fan_in = is3d ? ci * kt * k * k : ci * k * k;
  Shape ws = is3d ? Shape{co, ci, kt, k, k} : Shape{co, ci, k, k};
  l.w = he_init<T>(ws, fan_in, seed_for_name(seed_root, name + ".w"));
  l.w.set_requires_grad(true);
  l.gamma = Tensor<T>::full({co}, T(1));
  l.gamma.set_requires_grad(true);
  l.beta = Tensor<T>::zeros({co});
  l.beta.set_requires_grad(true);
  l.run_mean = Tensor<T>::zeros({co});
  l.run_var = Tensor<T>::full({co}, T(1));
  return l;
}

template <typename T>
Model<T>::Model(const NetworkConfig& cfg) : cfg_(cfg) {
  NetPlan plan = plan_network(cfg);
  propagate_shapes(cfg, plan);  // validates extents, throws ConfigError
  uint64_t seed = cfg.init_seed;
  stem_ = plan.is3d ? make_conv_bn<T>("stem", true, cfg.in_channels,
                                      plan.stem_out, 3, 7, 1, 2, 3, seed)
                    : make_conv_bn<T>("stem", false, cfg.in_channels,
                                      plan.stem_out, 1, 7, 1, 2, 3, seed);
  stages_.resize(4);
  for (int s = 0; s < 4; ++s) {
    for (size_t b = 0; b < plan.stages[s].size(); ++b) {
      const BlockGeom& g = plan.stages[s][b];
      std::string prefix = detail::cat("res", s + 1, ".b", b);
      net_detail::ResBlock<T> blk;
      blk.conv1 = make_conv_bn<T>(prefix + ".conv1", plan.is3d, g.in_c, g.out_c,
                                  3, 3, g.stride_t, g.stride_s, 1, seed);
      blk.conv2 = make_conv_bn<T>(prefix + ".conv2", plan.is3d, g.out_c,
                                  g.out_c, 3, 3, 1, 1, 1, seed);
      if (g.stride_s != 1 || g.in_c != g.out_c)
        blk.shortcut = make_conv_bn<T>(prefix + ".shortcut", plan.is3d, g.in_c,
                                       g.out_c, 1, 1, g.stride_t, g.stride_s,
                                       0, seed);
      if (g.has_tb) {
        blk.tb_deep = cfg.arch == Arch::kDeepTBN;
        blk.tb_pool_input = !blk.tb_deep && g.stride_s == 2;
        TBConfig tc;
        tc.c_in = blk.tb_deep ? g.out_c : g.in_c;
        tc.c_out = g.out_c;
        tc.factors = cfg.tb_factors;
        tc.dropfactor_keep = cfg.dropfactor_keep;
        tc.bottleneck_reduction = cfg.tb_reduction;
        tc.temporal_kernel = cfg.tb_temporal_kernel;
        blk.tb = std::make_unique<BottleneckTB<T>>(
            BottleneckTB<T>::init(tc, prefix + ".tb", seed));
      }
      stages_[s].push_back(std::move(blk));
    }
  }
  int64_t feat = cfg.stage_width(3);
  fc_w = he_init<T>({cfg.classes, feat}, feat, seed_for_name(seed, "fc.w"));
  fc_w.set_requires_grad(true);
  fc_b = Tensor<T>::zeros({cfg.classes});
  fc_b.set_requires_grad(true);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& clips, bool training,
                            uint64_t mask_seed) {
  if (clips.rank() != 5)
    throw DimensionError(detail::cat("expected (N,T,C,H,W) clips, got ",
                                     shape_str(clips.shape())));
  if (clips.dim(1) != cfg_.clip_len || clips.dim(2) != cfg_.in_channels ||
      clips.dim(3) != cfg_.height || clips.dim(4) != cfg_.width)
    throw DimensionError(detail::cat(
        "clip shape ", shape_str(clips.shape()), " does not match config (T=",
        cfg_.clip_len, ", C=", cfg_.in_channels, ", ", cfg_.height, "x",
        cfg_.width, ")"));
  Tensor<T> h = relu(stem_.forward(clips, training));
  int tb_index = 0;
  for (auto& stage : stages_)
    for (auto& blk : stage) {
      DropFactorMask mask;
      const DropFactorMask* mp = nullptr;
      if (blk.tb && training) {
        mask = dropfactor_sample(cfg_.tb_factors, cfg_.dropfactor_keep,
                                 mix64(mask_seed, 0x7b1000 + tb_index));
        mp = &mask;
      }
      if (blk.tb) ++tb_index;
      h = blk.forward(h, training, mp);
    }
  Tensor<T> pooled = global_avg_pool(h);
  return linear(pooled, fc_w, fc_b);
}

template <typename T>
std::vector<ParamRef<T>> Model<T>::params() {
  std::vector<ParamRef<T>> out;
  auto push_conv_bn = [&out](const std::string& name, net_detail::ConvBN<T>& l) {
    out.push_back({name + ".w", &l.w, true, true});
    out.push_back({name + ".bn.gamma", &l.gamma, true, false});
    out.push_back({name + ".bn.beta", &l.beta, true, false});
    out.push_back({name + ".bn.run_mean", &l.run_mean, false, false});
    out.push_back({name + ".bn.run_var", &l.run_var, false, false});
  };
  push_conv_bn("stem", stem_);
  for (int s = 0; s < 4; ++s)
    for (size_t b = 0; b < stages_[s].size(); ++b) {
      std::string prefix = detail::cat("res", s + 1, ".b", b);
      auto& blk = stages_[s][b];
      push_conv_bn(prefix + ".conv1", blk.conv1);
      push_conv_bn(prefix + ".conv2", blk.conv2);
      if (blk.shortcut) push_conv_bn(prefix + ".shortcut", *blk.shortcut);
      if (blk.tb) {
        auto& tb = *blk.tb;
        out.push_back({prefix + ".tb.w_in", &tb.w_in, true, true});
        out.push_back({prefix + ".tb.bn_in.gamma", &tb.bn_in_gamma, true, false});
        out.push_back({prefix + ".tb.bn_in.beta", &tb.bn_in_beta, true, false});
        out.push_back({prefix + ".tb.bn_in.run_mean", &tb.bn_in_mean, false, false});
        out.push_back({prefix + ".tb.bn_in.run_var", &tb.bn_in_var, false, false});
        out.push_back({prefix + ".tb.f", &tb.f, true, true});
        out.push_back({prefix + ".tb.bn_out.gamma", &tb.bn_out_gamma, true, false});
        out.push_back({prefix + ".tb.bn_out.beta", &tb.bn_out_beta, true, false});
        out.push_back({prefix + ".tb.bn_out.run_mean", &tb.bn_out_mean, false, false});
        out.push_back({prefix + ".tb.bn_out.run_var", &tb.bn_out_var, false, false});
        out.push_back({prefix + ".tb.w_out", &tb.w_out, true, true});
      }
    }
  out.push_back({"fc.w", &fc_w, true, true});
  out.push_back({"fc.b", &fc_b, true, true});
  return out;
}

template <typename T>
std::vector<std::array<int64_t, 3>> Model<T>::stage_output_shapes() const {
  NetPlan plan = plan_network(cfg_);
  return propagate_shapes(cfg_, plan).at;
}

template <typename T>
ComplexityReport Model<T>::audit() const {
  NetPlan plan = plan_network(cfg_);
  StageShapes shapes = propagate_shapes(cfg_, plan);
  std::vector<LayerCost> rows;
  auto conv_rows = [&rows, &plan](const std::string& name, int64_t ci,
                                  int64_t co, int kt, int k,
                                  std::array<int64_t, 3> geom) {
    rows.push_back(plan.is3d
                       ? conv3d_cost(name, ci, co, kt, k, geom[0], geom[1], geom[2])
                       : conv2d_cost(name, ci, co, k, geom[0], geom[1], geom[2]));
    rows.push_back(batch_norm_cost(name + ".bn", co, geom[0], geom[1], geom[2]));
  };
  conv_rows("stem", cfg_.in_channels, plan.stem_out, 3, 7, shapes.at[0]);
  std::array<int64_t, 3> cur = shapes.at[0];
  for (int s = 0; s < 4; ++s)
    for (size_t b = 0; b < plan.stages[s].size(); ++b) {
      const BlockGeom& g = plan.stages[s][b];
      std::string prefix = detail::cat("res", s + 1, ".b", b);
      std::array<int64_t, 3> in_geom = cur;
      std::array<int64_t, 3> out_geom = {
          (cur[0] + g.stride_t - 1) / g.stride_t,
          conv_out_extent(cur[1], 3, g.stride_s, 1),
          conv_out_extent(cur[2], 3, g.stride_s, 1)};
      conv_rows(prefix + ".conv1", g.in_c, g.out_c, 3, 3, out_geom);
      conv_rows(prefix + ".conv2", g.out_c, g.out_c, 3, 3, out_geom);
      if (g.stride_s != 1 || g.in_c != g.out_c) {
        rows.push_back(plan.is3d ? conv3d_cost(prefix + ".shortcut", g.in_c,
                                               g.out_c, 1, 1, out_geom[0],
                                               out_geom[1], out_geom[2])
                                 : conv2d_cost(prefix + ".shortcut", g.in_c,
                                               g.out_c, 1, out_geom[0],
                                               out_geom[1], out_geom[2]));
        rows.push_back(batch_norm_cost(prefix + ".shortcut.bn", g.out_c,
                                       out_geom[0], out_geom[1], out_geom[2]));
      }
      if (g.has_tb) {
        bool deep = cfg_.arch == Arch::kDeepTBN;
        int64_t tb_ci = deep ? g.out_c : g.in_c;
        // Wide path runs at the block's output geometry (pooled when strided);
        // deep path consumes the conv path output directly.
        int64_t tb_t = deep ? out_geom[0] : in_geom[0];
        rows.push_back(bottleneck_tb_cost(
            prefix + ".tb", tb_ci, g.out_c, cfg_.tb_factors, cfg_.tb_reduction,
            cfg_.tb_temporal_kernel, tb_t, out_geom[1], out_geom[2]));
        // Norms flanking the bilinear product inside the chain. Kept out of
        // the aggregate row, which counts weight matrices only.
        int64_t tb_mid = g.out_c / cfg_.tb_reduction;
        rows.push_back(batch_norm_cost(prefix + ".tb.bn_in", tb_mid, tb_t,
                                       out_geom[1], out_geom[2]));
        rows.push_back(batch_norm_cost(prefix + ".tb.bn_out", tb_mid, tb_t,
                                       out_geom[1], out_geom[2]));
      }
      cur = out_geom;
    }
  LayerCost pool;
  pool.name = "global_avg_pool";
  pool.kind = "global_avg_pool";
  pool.params = 0;
  pool.flops = cfg_.stage_width(3) * cur[0] * cur[1] * cur[2];
  pool.rfs = static_cast<int>(cur[0]);
  rows.push_back(pool);
  rows.push_back(linear_cost("fc", cfg_.stage_width(3), cfg_.classes, true));
  return make_report(std::move(rows),
                     static_cast<int64_t>(cfg_.clip_len) * cfg_.height * cfg_.width);
}

// ---------------------------------------------------------------------------
// Checkpoint io
//
// Layout: magic "TBNCKPT1", u32 entry count, then per entry
// {u32 name_len, name bytes, u8 dtype (1=f32, 2=f64), u8 rank, u64 dims[rank],
// u64 byte_offset}, followed by raw little-endian buffers.

namespace {

constexpr char kCkptMagic[8] = {'T', 'B', 'N', 'C', 'K', 'P', 'T', '1'};

template <class V>
void write_raw(std::ofstream& f, const V& v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

}  // namespace

template <typename T>
void Model<T>::save_checkpoint(const std::string& path) {
  auto ps = params();
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw FormatError(detail::cat("cannot open '", path, "' for writing"));
  f.write(kCkptMagic, 8);
  uint32_t count = static_cast<uint32_t>(ps.size());
  write_raw(f, count);
  // Manifest size precomputed so data offsets are known up front.
  uint64_t offset = 8 + 4;
  for (const auto& p : ps)
    offset += 4 + p.name.size() + 1 + 1 + 8ull * p.tensor->rank() + 8;
  for (const auto& p : ps) {
    uint32_t len = static_cast<uint32_t>(p.name.size());
    write_raw(f, len);
    f.write(p.name.data(), len);
    uint8_t dtype = sizeof(T) == 4 ? 1 : 2;
    write_raw(f, dtype);
    uint8_t rank = static_cast<uint8_t>(p.tensor->rank());
    write_raw(f, rank);
    for (int64_t d : p.tensor->shape()) {
      uint64_t e = static_cast<uint64_t>(d);
      write_raw(f, e);
    }
    write_raw(f, offset);
    offset += sizeof(T) * static_cast<uint64_t>(p.tensor->numel());
  }
  for (const auto& p : ps)
    f.write(reinterpret_cast<const char*>(p.tensor->value().data()),
            sizeof(T) * p.tensor->numel());
  if (!f) throw FormatError(detail::cat("short write to '", path, "'"));
}

template <typename T>
void Model<T>::load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError(detail::cat("cannot open '", path, "'"));
  auto fail_at = [&path](uint64_t off, const char* what) {
    throw FormatError(detail::cat("checkpoint '", path, "': ", what,
                                  " at byte ", off));
  };
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, kCkptMagic, 8) != 0) fail_at(0, "bad magic");
  uint32_t count = 0;
  f.read(reinterpret_cast<char*>(&count), 4);
  if (!f) fail_at(8, "truncated header");
  struct Entry {
    uint8_t dtype = 0;
    Shape dims;
    uint64_t offset = 0;
  };
  std::map<std::string, Entry> manifest;
  for (uint32_t i = 0; i < count; ++i) {
    uint64_t at = static_cast<uint64_t>(f.tellg());
    uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    if (!f || len > 4096) fail_at(at, "bad name length");
    std::string name(len, '\0');
    f.read(name.data(), len);
    Entry e;
    uint8_t rank = 0;
    f.read(reinterpret_cast<char*>(&e.dtype), 1);
    f.read(reinterpret_cast<char*>(&rank), 1);
    if (!f || rank > 8) fail_at(at, "bad manifest entry");
    e.dims.resize(rank);
    for (int d = 0; d < rank; ++d) {
      uint64_t v = 0;
      f.read(reinterpret_cast<char*>(&v), 8);
      e.dims[d] = static_cast<int64_t>(v);
    }
    f.read(reinterpret_cast<char*>(&e.offset), 8);
    if (!f) fail_at(at, "truncated manifest");
    manifest.emplace(std::move(name), std::move(e));
  }
  auto ps = params();
  if (manifest.size() != ps.size())
    throw ConfigError(detail::cat("checkpoint '", path, "' holds ",
                                  manifest.size(), " tensors, model expects ",
                                  ps.size(), " (architecture mismatch?)"));
  uint8_t want_dtype = sizeof(T) == 4 ? 1 : 2;
  for (auto& p : ps) {
    auto it = manifest.find(p.name);
    if (it == manifest.end())
      throw ConfigError(detail::cat("checkpoint '", path, "' is missing tensor '",
                                    p.name, "' (architecture mismatch?)"));
    const Entry& e = it->second;
    if (e.dtype != want_dtype)
      throw ConfigError(detail::cat("tensor '", p.name, "' stored with dtype code ",
                                    int(e.dtype), ", model uses ", int(want_dtype)));
    if (e.dims != p.tensor->shape())
      throw ConfigError(detail::cat("tensor '", p.name, "' has shape ",
                                    shape_str(e.dims), ", model expects ",
                                    shape_str(p.tensor->shape())));
    f.seekg(static_cast<std::streamoff>(e.offset));
    f.read(reinterpret_cast<char*>(p.tensor->value_mut().data()),
           sizeof(T) * p.tensor->numel());
    if (!f) fail_at(e.offset, "truncated tensor data");
  }
}

template Tensor<float> spatial_avg_pool2<float>(const Tensor<float>&);
template Tensor<double> spatial_avg_pool2<double>(const Tensor<double>&);
template class Model<float>;
template class Model<double>;

}  // namespace tbn
