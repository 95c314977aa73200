#include "tbn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>
#include <utility>

#include "tbn/gemm.hpp"
#include "tbn/rng.hpp"

namespace tbn {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) {
    if (e < 0) throw ContractError(detail::cat("negative extent in shape ", shape_str(s)));
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  out += ")";
  return out;
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }
void set_grad_enabled(bool on) { g_grad_enabled = on; }

// ---------------------------------------------------------------------------
// Tensor basics

template <typename T>
Tensor<T> Tensor<T>::zeros(const Shape& s) {
  return from_data(s, std::vector<T>(shape_numel(s), T(0)));
}

template <typename T>
Tensor<T> Tensor<T>::full(const Shape& s, T v) {
  return from_data(s, std::vector<T>(shape_numel(s), v));
}

template <typename T>
Tensor<T> Tensor<T>::from_data(const Shape& s, std::vector<T> data) {
  if (static_cast<int64_t>(data.size()) != shape_numel(s))
    throw DimensionError(detail::cat("data size ", data.size(),
                                     " does not match shape ", shape_str(s)));
  auto n = std::make_shared<Node<T>>();
  n->shape = s;
  n->value = std::move(data);
  n->leaf = true;
  return Tensor<T>(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v) {
  return from_data({}, {v});
}

template <typename T>
Tensor<T> Tensor<T>::param(const Shape& s, std::vector<T> data) {
  Tensor<T> t = from_data(s, std::move(data));
  t.node()->requires_grad = true;
  return t;
}

template <typename T>
int64_t Tensor<T>::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size()))
    throw IndexError(detail::cat("axis ", i, " out of range for rank ", s.size()));
  return s[i];
}

template <typename T>
void Tensor<T>::zero_grad() {
  Node<T>& n = check();
  std::fill(n.grad.begin(), n.grad.end(), T(0));
}

template <typename T>
void Tensor<T>::set_requires_grad(bool on) {
  Node<T>& n = check();
  if (!n.leaf) throw ContractError("requires_grad is only settable on leaves");
  n.requires_grad = on;
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1)
    throw ContractError(detail::cat("item() on tensor of ", numel(), " elements"));
  return check().value[0];
}

namespace detail {

template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward_fn) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = op;
  if (grad_enabled()) {
    bool any = false;
    for (const auto& p : parents) any = any || p->requires_grad;
    if (any) {
      n->requires_grad = true;
      n->parents = std::move(parents);
      n->backward_fn = std::move(backward_fn);
    }
  }
  return Tensor<T>(std::move(n));
}

template <typename T>
std::vector<T>& ensure_grad(Node<T>& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), T(0));
  return n.grad;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Broadcasting

namespace {

// Right-aligned broadcast of b onto a. bstride[d] is b's step when a's axis d
// advances; 0 on broadcast axes.
struct BcastPlan {
  bool same = false;
  std::vector<int64_t> bstride;
};

BcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  if (b.size() > a.size())
    throw DimensionError(detail::cat("cannot broadcast ", shape_str(b),
                                     " onto lower-rank ", shape_str(a)));
  BcastPlan plan;
  if (a == b) {
    plan.same = true;
    return plan;
  }
  int off = static_cast<int>(a.size() - b.size());
  std::vector<int64_t> bst = strides_of(b);
  plan.bstride.assign(a.size(), 0);
  for (size_t d = 0; d < a.size(); ++d) {
    if (static_cast<int>(d) < off) continue;
    int64_t be = b[d - off];
    if (be == a[d]) {
      plan.bstride[d] = bst[d - off];
    } else if (be != 1) {
      throw DimensionError(detail::cat("cannot broadcast ", shape_str(b),
                                       " onto ", shape_str(a)));
    }
  }
  return plan;
}

// Calls f(flat_a_index, b_index) over every element of shape a.
template <class F>
void bcast_for_each(const Shape& a, const BcastPlan& plan, F f) {
  int64_t n = shape_numel(a);
  if (n == 0) return;
  int rank = static_cast<int>(a.size());
  std::vector<int64_t> idx(rank, 0);
  int64_t bi = 0;
  for (int64_t i = 0; i < n; ++i) {
    f(i, bi);
    for (int d = rank - 1; d >= 0; --d) {
      ++idx[d];
      bi += plan.bstride[d];
      if (idx[d] < a[d]) break;
      bi -= plan.bstride[d] * a[d];
      idx[d] = 0;
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Elementwise ops

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  BcastPlan plan = plan_broadcast(a.shape(), b.shape());
  const T* av = a.value().data();
  const T* bv = b.value().data();
  std::vector<T> out(a.numel());
  if (plan.same) {
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = av[i] + bv[i];
  } else {
    bcast_for_each(a.shape(), plan, [&](int64_t i, int64_t bi) { out[i] = av[i] + bv[bi]; });
  }
  Shape ashape = a.shape();
  return detail::make_op<T>(
      "add", a.shape(), std::move(out), {a.node(), b.node()},
      [plan, ashape](Node<T>& n) {
        const T* g = n.grad.data();
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        if (pa->requires_grad) {
          T* da = detail::ensure_grad(*pa).data();
          for (size_t i = 0; i < n.value.size(); ++i) da[i] += g[i];
        }
        if (pb->requires_grad) {
          T* db = detail::ensure_grad(*pb).data();
          if (plan.same) {
            for (size_t i = 0; i < n.value.size(); ++i) db[i] += g[i];
          } else {
            bcast_for_each(ashape, plan, [&](int64_t i, int64_t bi) { db[bi] += g[i]; });
          }
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  BcastPlan plan = plan_broadcast(a.shape(), b.shape());
  const T* av = a.value().data();
  const T* bv = b.value().data();
  std::vector<T> out(a.numel());
  if (plan.same) {
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = av[i] * bv[i];
  } else {
    bcast_for_each(a.shape(), plan, [&](int64_t i, int64_t bi) { out[i] = av[i] * bv[bi]; });
  }
  Shape ashape = a.shape();
  return detail::make_op<T>(
      "mul", a.shape(), std::move(out), {a.node(), b.node()},
      [plan, ashape](Node<T>& n) {
        const T* g = n.grad.data();
        auto& pa = n.parents[0];
        auto& pb = n.parents[1];
        const T* av = pa->value.data();
        const T* bv = pb->value.data();
        T* da = pa->requires_grad ? detail::ensure_grad(*pa).data() : nullptr;
        T* db = pb->requires_grad ? detail::ensure_grad(*pb).data() : nullptr;
        if (plan.same) {
          for (size_t i = 0; i < n.value.size(); ++i) {
            if (da) da[i] += g[i] * bv[i];
            if (db) db[i] += g[i] * av[i];
          }
        } else {
          bcast_for_each(ashape, plan, [&](int64_t i, int64_t bi) {
            if (da) da[i] += g[i] * bv[bi];
            if (db) db[bi] += g[i] * av[i];
          });
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  const T* av = a.value().data();
  std::vector<T> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = av[i] * s;
  return detail::make_op<T>(
      "scale", a.shape(), std::move(out), {a.node()}, [s](Node<T>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = n.grad.data();
        for (size_t i = 0; i < n.value.size(); ++i) d[i] += g[i] * s;
      });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  const T* av = a.value().data();
  std::vector<T> out(a.numel());
  for (int64_t i = 0; i < a.numel(); ++i) out[i] = av[i] > T(0) ? av[i] : T(0);
  return detail::make_op<T>(
      "relu", a.shape(), std::move(out), {a.node()}, [](Node<T>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = n.grad.data();
        const T* x = p->value.data();
        for (size_t i = 0; i < n.value.size(); ++i)
          if (x[i] > T(0)) d[i] += g[i];
      });
}

// ---------------------------------------------------------------------------
// Reductions and reshape

template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& a, int axis) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw IndexError(detail::cat("axis ", axis, " out of range for rank ", s.size()));
  int64_t outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s[d];
  for (size_t d = axis + 1; d < s.size(); ++d) inner *= s[d];
  int64_t ax = s[axis];
  Shape os;
  for (size_t d = 0; d < s.size(); ++d)
    if (static_cast<int>(d) != axis) os.push_back(s[d]);
  std::vector<T> out(outer * inner, T(0));
  const T* x = a.value().data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t k = 0; k < ax; ++k) {
      const T* src = x + (o * ax + k) * inner;
      T* dst = out.data() + o * inner;
      for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  return detail::make_op<T>(
      "reduce_sum", std::move(os), std::move(out), {a.node()},
      [outer, ax, inner](Node<T>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = n.grad.data();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t k = 0; k < ax; ++k) {
            T* dst = d + (o * ax + k) * inner;
            const T* src = g + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i];
          }
      });
}

template <typename T>
Tensor<T> reduce_sum_all(const Tensor<T>& a) {
  const T* x = a.value().data();
  T acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += x[i];
  return detail::make_op<T>(
      "reduce_sum_all", {}, {acc}, {a.node()}, [](Node<T>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        T g = n.grad[0];
        for (size_t i = 0; i < p->value.size(); ++i) d[i] += g;
      });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, const Shape& s) {
  if (shape_numel(s) != a.numel())
    throw DimensionError(detail::cat("reshape ", shape_str(a.shape()), " -> ",
                                     shape_str(s), " changes element count"));
  std::vector<T> out(a.value().begin(), a.value().end());
  return detail::make_op<T>(
      "reshape", s, std::move(out), {a.node()}, [](Node<T>& n) {
        auto& p = n.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = n.grad.data();
        for (size_t i = 0; i < n.value.size(); ++i) d[i] += g[i];
      });
}

// ---------------------------------------------------------------------------
// Linear

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  if (x.rank() != 2 || w.rank() != 2)
    throw DimensionError(detail::cat("linear expects rank-2 x and w, got ",
                                     shape_str(x.shape()), " and ", shape_str(w.shape())));
  int64_t n = x.dim(0), ci = x.dim(1), co = w.dim(0);
  if (w.dim(1) != ci)
    throw DimensionError(detail::cat("linear: x ", shape_str(x.shape()),
                                     " incompatible with w ", shape_str(w.shape())));
  bool has_bias = b.defined();
  if (has_bias && (b.rank() != 1 || b.dim(0) != co))
    throw DimensionError("linear: bias shape must be (C_out)");
  std::vector<T> out(n * co, T(0));
  if (has_bias) {
    const T* bv = b.value().data();
    for (int64_t i = 0; i < n; ++i)
      std::copy(bv, bv + co, out.data() + i * co);
  }
  gemm(false, true, n, co, ci, T(1), x.value().data(), ci, w.value().data(), ci,
       T(1), out.data(), co);
  std::vector<std::shared_ptr<Node<T>>> parents{x.node(), w.node()};
  if (has_bias) parents.push_back(b.node());
  return detail::make_op<T>(
      "linear", {n, co}, std::move(out), std::move(parents),
      [n, ci, co, has_bias](Node<T>& nd) {
        const T* g = nd.grad.data();
        auto& px = nd.parents[0];
        auto& pw = nd.parents[1];
        if (px->requires_grad) {
          T* dx = detail::ensure_grad(*px).data();
          gemm(false, false, n, ci, co, T(1), g, co, pw->value.data(), ci, T(1), dx, ci);
        }
        if (pw->requires_grad) {
          T* dw = detail::ensure_grad(*pw).data();
          gemm(true, false, co, ci, n, T(1), g, co, px->value.data(), ci, T(1), dw, ci);
        }
        if (has_bias && nd.parents[2]->requires_grad) {
          T* db = detail::ensure_grad(*nd.parents[2]).data();
          for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < co; ++j) db[j] += g[i * co + j];
        }
      });
}

// ---------------------------------------------------------------------------
// Global average pool

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  if (x.rank() != 5)
    throw DimensionError(detail::cat("global_avg_pool expects (N,T,C,H,W), got ",
                                     shape_str(x.shape())));
  int64_t n = x.dim(0), t = x.dim(1), c = x.dim(2), hw = x.dim(3) * x.dim(4);
  int64_t m = t * hw;
  if (m == 0) throw ContractError("global_avg_pool on empty clip");
  std::vector<T> out(n * c, T(0));
  const T* xv = x.value().data();
  for (int64_t in = 0; in < n; ++in)
    for (int64_t it = 0; it < t; ++it)
      for (int64_t ic = 0; ic < c; ++ic) {
        const T* src = xv + ((in * t + it) * c + ic) * hw;
        T acc = 0;
        for (int64_t i = 0; i < hw; ++i) acc += src[i];
        out[in * c + ic] += acc;
      }
  T inv = T(1) / static_cast<T>(m);
  for (auto& v : out) v *= inv;
  return detail::make_op<T>(
      "global_avg_pool", {n, c}, std::move(out), {x.node()},
      [n, t, c, hw, inv](Node<T>& nd) {
        auto& p = nd.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        const T* g = nd.grad.data();
        for (int64_t in = 0; in < n; ++in)
          for (int64_t it = 0; it < t; ++it)
            for (int64_t ic = 0; ic < c; ++ic) {
              T gv = g[in * c + ic] * inv;
              T* dst = d + ((in * t + it) * c + ic) * hw;
              for (int64_t i = 0; i < hw; ++i) dst[i] += gv;
            }
      });
}

// ---------------------------------------------------------------------------
// Softmax cross entropy

template <typename T>
Tensor<T> softmax_cross_entropy(const Tensor<T>& logits,
                                const std::vector<int>& labels) {
  if (logits.rank() != 2)
    throw DimensionError("softmax_cross_entropy expects (N, classes) logits");
  int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n)
    throw DimensionError(detail::cat("got ", labels.size(), " labels for ", n, " rows"));
  if (n == 0) throw ContractError("softmax_cross_entropy on empty batch");
  for (int64_t i = 0; i < n; ++i)
    if (labels[i] < 0 || labels[i] >= k)
      throw IndexError(detail::cat("label ", labels[i], " out of range [0,", k, ")"));
  const T* lv = logits.value().data();
  std::vector<T> probs(n * k);
  softmax_rows(lv, n, k, probs.data());
  double loss = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = lv + i * k;
    T m = row[0];
    for (int64_t j = 1; j < k; ++j) m = std::max(m, row[j]);
    double sum = 0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(static_cast<double>(row[j] - m));
    loss += static_cast<double>(m) + std::log(sum) - static_cast<double>(row[labels[i]]);
  }
  loss /= static_cast<double>(n);
  return detail::make_op<T>(
      "softmax_cross_entropy", {}, {static_cast<T>(loss)}, {logits.node()},
      [n, k, labels, probs = std::move(probs)](Node<T>& nd) {
        auto& p = nd.parents[0];
        if (!p->requires_grad) return;
        T* d = detail::ensure_grad(*p).data();
        T g = nd.grad[0] / static_cast<T>(n);
        for (int64_t i = 0; i < n; ++i) {
          const T* pr = probs.data() + i * k;
          T* dst = d + i * k;
          for (int64_t j = 0; j < k; ++j) dst[j] += g * pr[j];
          dst[labels[i]] -= g;
        }
      });
}

// ---------------------------------------------------------------------------
// Batch norm

template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma,
                     const Tensor<T>& beta, Tensor<T>& running_mean,
                     Tensor<T>& running_var, bool training, double momentum,
                     double eps) {
  if (x.rank() != 5)
    throw DimensionError(detail::cat("batch_norm expects (N,T,C,H,W), got ",
                                     shape_str(x.shape())));
  int64_t n = x.dim(0), t = x.dim(1), c = x.dim(2), hw = x.dim(3) * x.dim(4);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c)
    throw DimensionError(detail::cat("batch_norm: channel params must have ", c,
                                     " elements"));
  int64_t m = n * t * hw;
  if (m == 0) throw ContractError("batch_norm on empty input");
  const T* xv = x.value().data();
  std::vector<double> mean(c, 0.0), var(c, 0.0);
  if (training) {
    for (int64_t in = 0; in < n; ++in)
      for (int64_t it = 0; it < t; ++it)
        for (int64_t ic = 0; ic < c; ++ic) {
          const T* src = xv + ((in * t + it) * c + ic) * hw;
          double acc = 0;
          for (int64_t i = 0; i < hw; ++i) acc += src[i];
          mean[ic] += acc;
        }
    for (int64_t ic = 0; ic < c; ++ic) mean[ic] /= static_cast<double>(m);
    for (int64_t in = 0; in < n; ++in)
      for (int64_t it = 0; it < t; ++it)
        for (int64_t ic = 0; ic < c; ++ic) {
          const T* src = xv + ((in * t + it) * c + ic) * hw;
          double mu = mean[ic], acc = 0;
          for (int64_t i = 0; i < hw; ++i) {
            double dv = src[i] - mu;
            acc += dv * dv;
          }
          var[ic] += acc;
        }
    for (int64_t ic = 0; ic < c; ++ic) var[ic] /= static_cast<double>(m);
    T* rm = running_mean.value_mut().data();
    T* rv = running_var.value_mut().data();
    double unbias = m > 1 ? static_cast<double>(m) / static_cast<double>(m - 1) : 1.0;
    for (int64_t ic = 0; ic < c; ++ic) {
      rm[ic] = static_cast<T>((1.0 - momentum) * rm[ic] + momentum * mean[ic]);
      rv[ic] = static_cast<T>((1.0 - momentum) * rv[ic] + momentum * var[ic] * unbias);
    }
  } else {
    const T* rm = running_mean.value().data();
    const T* rv = running_var.value().data();
    for (int64_t ic = 0; ic < c; ++ic) {
      mean[ic] = rm[ic];
      var[ic] = rv[ic];
    }
  }
  std::vector<T> inv_std(c);
  for (int64_t ic = 0; ic < c; ++ic)
    inv_std[ic] = static_cast<T>(1.0 / std::sqrt(var[ic] + eps));
  const T* gv = gamma.value().data();
  const T* bv = beta.value().data();
  std::vector<T> xhat(x.numel());
  std::vector<T> out(x.numel());
  for (int64_t in = 0; in < n; ++in)
    for (int64_t it = 0; it < t; ++it)
      for (int64_t ic = 0; ic < c; ++ic) {
        int64_t base = ((in * t + it) * c + ic) * hw;
        T mu = static_cast<T>(mean[ic]), is = inv_std[ic], ga = gv[ic], be = bv[ic];
        for (int64_t i = 0; i < hw; ++i) {
          T xh = (xv[base + i] - mu) * is;
          xhat[base + i] = xh;
          out[base + i] = ga * xh + be;
        }
      }
  return detail::make_op<T>(
      "batch_norm", x.shape(), std::move(out),
      {x.node(), gamma.node(), beta.node()},
      [n, t, c, hw, m, training, inv_std = std::move(inv_std),
       xhat = std::move(xhat)](Node<T>& nd) {
        auto& px = nd.parents[0];
        auto& pg = nd.parents[1];
        auto& pb = nd.parents[2];
        const T* g = nd.grad.data();
        const T* gv = pg->value.data();
        std::vector<double> sum_g(c, 0.0), sum_gx(c, 0.0);
        for (int64_t in = 0; in < n; ++in)
          for (int64_t it = 0; it < t; ++it)
            for (int64_t ic = 0; ic < c; ++ic) {
              int64_t base = ((in * t + it) * c + ic) * hw;
              double a = 0, b2 = 0;
              for (int64_t i = 0; i < hw; ++i) {
                a += g[base + i];
                b2 += static_cast<double>(g[base + i]) * xhat[base + i];
              }
              sum_g[ic] += a;
              sum_gx[ic] += b2;
            }
        if (pg->requires_grad) {
          T* dg = detail::ensure_grad(*pg).data();
          for (int64_t ic = 0; ic < c; ++ic) dg[ic] += static_cast<T>(sum_gx[ic]);
        }
        if (pb->requires_grad) {
          T* db = detail::ensure_grad(*pb).data();
          for (int64_t ic = 0; ic < c; ++ic) db[ic] += static_cast<T>(sum_g[ic]);
        }
        if (!px->requires_grad) return;
        T* dx = detail::ensure_grad(*px).data();
        if (training) {
          double inv_m = 1.0 / static_cast<double>(m);
          for (int64_t in = 0; in < n; ++in)
            for (int64_t it = 0; it < t; ++it)
              for (int64_t ic = 0; ic < c; ++ic) {
                int64_t base = ((in * t + it) * c + ic) * hw;
                double ga = gv[ic], is = inv_std[ic];
                double sg = sum_g[ic] * inv_m, sgx = sum_gx[ic] * inv_m;
                for (int64_t i = 0; i < hw; ++i) {
                  double gi = g[base + i];
                  dx[base + i] += static_cast<T>(
                      ga * is * (gi - sg - xhat[base + i] * sgx));
                }
              }
        } else {
          for (int64_t in = 0; in < n; ++in)
            for (int64_t it = 0; it < t; ++it)
              for (int64_t ic = 0; ic < c; ++ic) {
                int64_t base = ((in * t + it) * c + ic) * hw;
                T k = static_cast<T>(gv[ic] * inv_std[ic]);
                for (int64_t i = 0; i < hw; ++i) dx[base + i] += g[base + i] * k;
              }
        }
      });
}

// ---------------------------------------------------------------------------
// Backward

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1)
    throw ContractError(detail::cat("backward from non-scalar ",
                                    shape_str(loss.shape())));
  auto root = loss.node();
  if (!root->requires_grad) return;
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> visited;
  std::vector<std::pair<Node<T>*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    if (top.second < top.first->parents.size()) {
      Node<T>* p = top.first->parents[top.second++].get();
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(top.first);
      stack.pop_back();
    }
  }
  detail::ensure_grad(*root)[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
}

// ---------------------------------------------------------------------------
// Init and helpers

template <typename T>
Tensor<T> he_init(const Shape& s, int64_t fan_in, uint64_t seed) {
  if (fan_in <= 0) throw ContractError("he_init requires positive fan_in");
  Rng rng(seed);
  double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  std::vector<T> v(shape_numel(s));
  for (auto& e : v) e = static_cast<T>(std * rng.normal());
  return Tensor<T>::from_data(s, std::move(v));
}

template <typename T>
Tensor<T> uniform_init(const Shape& s, T lo, T hi, uint64_t seed) {
  Rng rng(seed);
  std::vector<T> v(shape_numel(s));
  for (auto& e : v) e = static_cast<T>(rng.uniform(lo, hi));
  return Tensor<T>::from_data(s, std::move(v));
}

template <typename T>
void softmax_rows(const T* logits, int64_t rows, int64_t cols, T* out) {
  for (int64_t i = 0; i < rows; ++i) {
    const T* row = logits + i * cols;
    T* dst = out + i * cols;
    T m = row[0];
    for (int64_t j = 1; j < cols; ++j) m = std::max(m, row[j]);
    double sum = 0;
    for (int64_t j = 0; j < cols; ++j) {
      double e = std::exp(static_cast<double>(row[j] - m));
      dst[j] = static_cast<T>(e);
      sum += e;
    }
    T inv = static_cast<T>(1.0 / sum);
    for (int64_t j = 0; j < cols; ++j) dst[j] *= inv;
  }
}

// ---------------------------------------------------------------------------
// Instantiations

#define TBN_INSTANTIATE(T)                                                     \
  template class Tensor<T>;                                                    \
  template Tensor<T> detail::make_op<T>(const char*, Shape, std::vector<T>,    \
                                        std::vector<std::shared_ptr<Node<T>>>, \
                                        std::function<void(Node<T>&)>);        \
  template std::vector<T>& detail::ensure_grad<T>(Node<T>&);                   \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                            \
  template Tensor<T> relu<T>(const Tensor<T>&);                                \
  template Tensor<T> reduce_sum<T>(const Tensor<T>&, int);                     \
  template Tensor<T> reduce_sum_all<T>(const Tensor<T>&);                      \
  template Tensor<T> reshape<T>(const Tensor<T>&, const Shape&);               \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&,             \
                               const Tensor<T>&);                              \
  template Tensor<T> global_avg_pool<T>(const Tensor<T>&);                     \
  template Tensor<T> softmax_cross_entropy<T>(const Tensor<T>&,                \
                                              const std::vector<int>&);        \
  template Tensor<T> batch_norm<T>(const Tensor<T>&, const Tensor<T>&,         \
                                   const Tensor<T>&, Tensor<T>&, Tensor<T>&,   \
                                   bool, double, double);                      \
  template void backward<T>(const Tensor<T>&);                                 \
  template Tensor<T> he_init<T>(const Shape&, int64_t, uint64_t);              \
  template Tensor<T> uniform_init<T>(const Shape&, T, T, uint64_t);            \
  template void softmax_rows<T>(const T*, int64_t, int64_t, T*);

TBN_INSTANTIATE(float)
TBN_INSTANTIATE(double)

#undef TBN_INSTANTIATE

}  // namespace tbn
