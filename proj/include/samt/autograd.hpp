#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <unordered_set>
#include <vector>

#include "samt/common.hpp"
#include "samt/rng.hpp"

// Reverse-mode autodiff on dense tensors of up to three dimensions. Graphs
// are built eagerly; each node owns its value and a closure that scatters
// its gradient into its parents. Scalar type is a template parameter so the
// same operators run in float for training and double for derivative checks.
namespace samt::ag {

inline thread_local bool g_grad_enabled = true;

struct NoGrad {
  bool prev;
  NoGrad() : prev(g_grad_enabled) { g_grad_enabled = false; }
  ~NoGrad() { g_grad_enabled = prev; }
};

template <class S>
struct Node {
  std::vector<S> value;
  std::vector<S> grad;
  std::vector<int> shape;
  std::vector<std::shared_ptr<Node<S>>> parents;
  std::function<void()> backward;
  bool requires_grad = false;

  size_t size() const { return value.size(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), S(0));
  }
  void zero_grad() { grad.assign(value.size(), S(0)); }
  int dim(int i) const { return shape[i]; }
};

template <class S>
using NodePtr = std::shared_ptr<Node<S>>;

template <class S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class S>
using MatMap = Eigen::Map<Mat<S>>;
template <class S>
using ConstMatMap = Eigen::Map<const Mat<S>>;

namespace detail {

inline size_t numel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) n *= static_cast<size_t>(d);
  return n;
}

template <class S>
bool track(std::initializer_list<NodePtr<S>> parents) {
  if (!g_grad_enabled) return false;
  for (const auto& p : parents) {
    if (p && p->requires_grad) return true;
  }
  return false;
}

}  // namespace detail

template <class S>
NodePtr<S> make_tensor(std::vector<int> shape, bool requires_grad = false) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  n->value.assign(detail::numel(n->shape), S(0));
  n->requires_grad = requires_grad && g_grad_enabled;
  return n;
}

template <class S>
NodePtr<S> make_tensor(std::vector<int> shape, std::vector<S> value,
                       bool requires_grad = false) {
  auto n = std::make_shared<Node<S>>();
  n->shape = std::move(shape);
  check(value.size() == detail::numel(n->shape), "tensor data size mismatch");
  n->value = std::move(value);
  n->requires_grad = requires_grad && g_grad_enabled;
  return n;
}

// reverse topological order from root, then run each node's backward closure
template <class S>
void backward(const NodePtr<S>& root) {
  check(root->size() == 1, "backward expects a scalar root");
  std::vector<Node<S>*> order;
  std::unordered_set<Node<S>*> seen;
  std::vector<std::pair<Node<S>*, size_t>> stack{{root.get(), 0}};
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node<S>* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = S(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward();
  }
}

// ---- elementwise and linear algebra ----

template <class S>
NodePtr<S> add(const NodePtr<S>& a, const NodePtr<S>& b) {
  check(a->shape == b->shape, "add: shape mismatch");
  auto out = make_tensor<S>(a->shape);
  for (size_t i = 0; i < a->size(); ++i) out->value[i] = a->value[i] + b->value[i];
  if (detail::track<S>({a, b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node<S>* o = out.get();
    out->backward = [o, a, b]() {
      if (a->requires_grad) {
        a->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += o->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) b->grad[i] += o->grad[i];
      }
    };
  }
  return out;
}

template <class S>
NodePtr<S> scale(const NodePtr<S>& a, S c) {
  auto out = make_tensor<S>(a->shape);
  for (size_t i = 0; i < a->size(); ++i) out->value[i] = a->value[i] * c;
  if (detail::track<S>({a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node<S>* o = out.get();
    out->backward = [o, a, c]() {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) a->grad[i] += c * o->grad[i];
    };
  }
  return out;
}

template <class S>
NodePtr<S> relu(const NodePtr<S>& a) {
  auto out = make_tensor<S>(a->shape);
  for (size_t i = 0; i < a->size(); ++i) out->value[i] = std::max(a->value[i], S(0));
  if (detail::track<S>({a})) {
    out->requires_grad = true;
    out->parents = {a};
    Node<S>* o = out.get();
    out->backward = [o, a]() {
      a->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) {
        if (a->value[i] > S(0)) a->grad[i] += o->grad[i];
      }
    };
  }
  return out;
}

// a [n,k] x b [k,m] -> [n,m]
template <class S>
NodePtr<S> matmul(const NodePtr<S>& a, const NodePtr<S>& b) {
  check(a->shape.size() == 2 && b->shape.size() == 2, "matmul: rank-2 only");
  int n = a->dim(0), k = a->dim(1), m = b->dim(1);
  check(b->dim(0) == k, "matmul: inner dimension mismatch");
  auto out = make_tensor<S>({n, m});
  ConstMatMap<S> A(a->value.data(), n, k), B(b->value.data(), k, m);
  MatMap<S>(out->value.data(), n, m).noalias() = A * B;
  if (detail::track<S>({a, b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node<S>* o = out.get();
    out->backward = [o, a, b, n, k, m]() {
      ConstMatMap<S> G(o->grad.data(), n, m);
      if (a->requires_grad) {
        a->ensure_grad();
        ConstMatMap<S> B(b->value.data(), k, m);
        MatMap<S>(a->grad.data(), n, k).noalias() += G * B.transpose();
      }
      if (b->requires_grad) {
        b->ensure_grad();
        ConstMatMap<S> A(a->value.data(), n, k);
        MatMap<S>(b->grad.data(), k, m).noalias() += A.transpose() * G;
      }
    };
  }
  return out;
}

// a [n,k] x b[m,k]^T -> [n,m]
template <class S>
NodePtr<S> matmul_nt(const NodePtr<S>& a, const NodePtr<S>& b) {
  check(a->shape.size() == 2 && b->shape.size() == 2, "matmul_nt: rank-2 only");
  int n = a->dim(0), k = a->dim(1), m = b->dim(0);
  check(b->dim(1) == k, "matmul_nt: inner dimension mismatch");
  auto out = make_tensor<S>({n, m});
  ConstMatMap<S> A(a->value.data(), n, k), B(b->value.data(), m, k);
  MatMap<S>(out->value.data(), n, m).noalias() = A * B.transpose();
  if (detail::track<S>({a, b})) {
    out->requires_grad = true;
    out->parents = {a, b};
    Node<S>* o = out.get();
    out->backward = [o, a, b, n, k, m]() {
      ConstMatMap<S> G(o->grad.data(), n, m);
      if (a->requires_grad) {
        a->ensure_grad();
        ConstMatMap<S> B(b->value.data(), m, k);
        MatMap<S>(a->grad.data(), n, k).noalias() += G * B;
      }
      if (b->requires_grad) {
        b->ensure_grad();
        ConstMatMap<S> A(a->value.data(), n, k);
        MatMap<S>(b->grad.data(), m, k).noalias() += G.transpose() * A;
      }
    };
  }
  return out;
}

// x [n,m] + b [m] broadcast over rows
template <class S>
NodePtr<S> add_bias(const NodePtr<S>& x, const NodePtr<S>& b) {
  check(x->shape.size() == 2 && b->shape.size() == 1, "add_bias: bad ranks");
  int n = x->dim(0), m = x->dim(1);
  check(b->dim(0) == m, "add_bias: width mismatch");
  auto out = make_tensor<S>({n, m});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      out->value[i * m + j] = x->value[i * m + j] + b->value[j];
    }
  }
  if (detail::track<S>({x, b})) {
    out->requires_grad = true;
    out->parents = {x, b};
    Node<S>* o = out.get();
    out->backward = [o, x, b, n, m]() {
      if (x->requires_grad) {
        x->ensure_grad();
        for (size_t i = 0; i < o->grad.size(); ++i) x->grad[i] += o->grad[i];
      }
      if (b->requires_grad) {
        b->ensure_grad();
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < m; ++j) b->grad[j] += o->grad[i * m + j];
        }
      }
    };
  }
  return out;
}

template <class S>
NodePtr<S> split_cols(const NodePtr<S>& x, int start, int len) {
  check(x->shape.size() == 2, "split_cols: rank-2 only");
  int n = x->dim(0), m = x->dim(1);
  check(start >= 0 && len > 0 && start + len <= m, "split_cols: bad range");
  auto out = make_tensor<S>({n, len});
  for (int i = 0; i < n; ++i) {
    std::copy_n(x->value.data() + i * m + start, len, out->value.data() + i * len);
  }
  if (detail::track<S>({x})) {
    out->requires_grad = true;
    out->parents = {x};
    Node<S>* o = out.get();
    out->backward = [o, x, n, m, start, len]() {
      x->ensure_grad();
      for (int i = 0; i < n; ++i) {
        for (int j = 0; j < len; ++j) {
          x->grad[i * m + start + j] += o->grad[i * len + j];
        }
      }
    };
  }
  return out;
}

template <class S>
NodePtr<S> concat_cols(const std::vector<NodePtr<S>>& parts) {
  check(!parts.empty(), "concat_cols: empty");
  int n = parts[0]->dim(0), m = 0;
  for (const auto& p : parts) {
    check(p->shape.size() == 2 && p->dim(0) == n, "concat_cols: row mismatch");
    m += p->dim(1);
  }
  auto out = make_tensor<S>({n, m});
  int at = 0;
  for (const auto& p : parts) {
    int w = p->dim(1);
    for (int i = 0; i < n; ++i) {
      std::copy_n(p->value.data() + i * w, w, out->value.data() + i * m + at);
    }
    at += w;
  }
  bool req = false;
  if (g_grad_enabled) {
    for (const auto& p : parts) req = req || p->requires_grad;
  }
  if (req) {
    out->requires_grad = true;
    out->parents.assign(parts.begin(), parts.end());
    Node<S>* o = out.get();
    out->backward = [o, parts, n, m]() {
      int at = 0;
      for (const auto& p : parts) {
        int w = p->dim(1);
        if (p->requires_grad) {
          p->ensure_grad();
          for (int i = 0; i < n; ++i) {
            for (int j = 0; j < w; ++j) p->grad[i * w + j] += o->grad[i * m + at + j];
          }
        }
        at += w;
      }
    };
  }
  return out;
}

// rows of `table` gathered by id
template <class S>
NodePtr<S> embedding(const NodePtr<S>& table, const std::vector<int>& ids) {
  check(table->shape.size() == 2, "embedding: table must be rank 2");
  int v = table->dim(0), d = table->dim(1);
  auto out = make_tensor<S>({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < v, "embedding: id out of range");
    std::copy_n(table->value.data() + ids[i] * d, d, out->value.data() + i * d);
  }
  if (detail::track<S>({table})) {
    out->requires_grad = true;
    out->parents = {table};
    Node<S>* o = out.get();
    out->backward = [o, table, ids, d]() {
      table->ensure_grad();
      for (size_t i = 0; i < ids.size(); ++i) {
        for (int j = 0; j < d; ++j) {
          table->grad[ids[i] * d + j] += o->grad[i * d + j];
        }
      }
    };
  }
  return out;
}

template <class S>
NodePtr<S> layer_norm(const NodePtr<S>& x, const NodePtr<S>& gamma,
                      const NodePtr<S>& beta, S eps = S(1e-5)) {
  check(x->shape.size() == 2, "layer_norm: rank-2 only");
  int n = x->dim(0), d = x->dim(1);
  check(gamma->shape.size() == 1 && gamma->dim(0) == d, "layer_norm: gamma width");
  check(beta->shape.size() == 1 && beta->dim(0) == d, "layer_norm: beta width");
  auto out = make_tensor<S>({n, d});
  auto xhat = std::make_shared<std::vector<S>>(static_cast<size_t>(n) * d);
  auto inv_std = std::make_shared<std::vector<S>>(n);
  for (int i = 0; i < n; ++i) {
    const S* row = x->value.data() + i * d;
    S mean = 0;
    for (int j = 0; j < d; ++j) mean += row[j];
    mean /= d;
    S var = 0;
    for (int j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= d;
    S is = S(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < d; ++j) {
      S xh = (row[j] - mean) * is;
      (*xhat)[i * d + j] = xh;
      out->value[i * d + j] = gamma->value[j] * xh + beta->value[j];
    }
  }
  if (detail::track<S>({x, gamma, beta})) {
    out->requires_grad = true;
    out->parents = {x, gamma, beta};
    Node<S>* o = out.get();
    out->backward = [o, x, gamma, beta, xhat, inv_std, n, d]() {
      for (int i = 0; i < n; ++i) {
        const S* g = o->grad.data() + i * d;
        const S* xh = xhat->data() + i * d;
        if (gamma->requires_grad) {
          gamma->ensure_grad();
          for (int j = 0; j < d; ++j) gamma->grad[j] += g[j] * xh[j];
        }
        if (beta->requires_grad) {
          beta->ensure_grad();
          for (int j = 0; j < d; ++j) beta->grad[j] += g[j];
        }
        if (x->requires_grad) {
          x->ensure_grad();
          S sum_gy = 0, sum_gyx = 0;
          for (int j = 0; j < d; ++j) {
            S gy = g[j] * gamma->value[j];
            sum_gy += gy;
            sum_gyx += gy * xh[j];
          }
          S is = (*inv_std)[i];
          for (int j = 0; j < d; ++j) {
            S gy = g[j] * gamma->value[j];
            x->grad[i * d + j] +=
                is * (gy - sum_gy / d - xh[j] * sum_gyx / d);
          }
        }
      }
    };
  }
  return out;
}

// Row softmax with a key mask: masked entries get -1e30 added to the score,
// which drives their weight to exactly zero, so masking is bitwise-faithful
// between padded training batches and unpadded inference.
template <class S>
NodePtr<S> softmax_rows(const NodePtr<S>& x, const std::vector<uint8_t>& mask = {}) {
  check(x->shape.size() == 2, "softmax_rows: rank-2 only");
  int n = x->dim(0), m = x->dim(1);
  check(mask.empty() || mask.size() == x->size(), "softmax_rows: mask size");
  auto out = make_tensor<S>({n, m});
  for (int i = 0; i < n; ++i) {
    const S* row = x->value.data() + i * m;
    S* y = out->value.data() + i * m;
    S mx = -std::numeric_limits<S>::infinity();
    for (int j = 0; j < m; ++j) {
      S v = row[j];
      if (!mask.empty() && !mask[i * m + j]) v += S(-1e30);
      y[j] = v;
      mx = std::max(mx, v);
    }
    S sum = 0;
    for (int j = 0; j < m; ++j) {
      y[j] = std::exp(y[j] - mx);
      sum += y[j];
    }
    for (int j = 0; j < m; ++j) y[j] /= sum;
  }
  if (detail::track<S>({x})) {
    out->requires_grad = true;
    out->parents = {x};
    Node<S>* o = out.get();
    out->backward = [o, x, n, m]() {
      x->ensure_grad();
      for (int i = 0; i < n; ++i) {
        const S* y = o->value.data() + i * m;
        const S* g = o->grad.data() + i * m;
        S dot = 0;
        for (int j = 0; j < m; ++j) dot += y[j] * g[j];
        for (int j = 0; j < m; ++j) {
          x->grad[i * m + j] += y[j] * (g[j] - dot);
        }
      }
    };
  }
  return out;
}

// mean over selected rows of -log softmax(logits)[target]; rows with zero
// weight contribute nothing (and get exactly zero gradient)
template <class S>
NodePtr<S> cross_entropy_rows(const NodePtr<S>& logits, const std::vector<int>& targets,
                              const std::vector<S>& row_weights) {
  check(logits->shape.size() == 2, "cross_entropy_rows: rank-2 only");
  int n = logits->dim(0), m = logits->dim(1);
  check(static_cast<int>(targets.size()) == n, "cross_entropy_rows: target count");
  check(static_cast<int>(row_weights.size()) == n, "cross_entropy_rows: weight count");
  S wsum = 0;
  for (S w : row_weights) wsum += w;
  check(wsum > S(0), "cross_entropy_rows: all rows masked");
  auto probs = std::make_shared<std::vector<S>>(logits->value.size());
  auto out = make_tensor<S>({1});
  S loss = 0;
  for (int i = 0; i < n; ++i) {
    if (row_weights[i] == S(0)) continue;
    check(targets[i] >= 0 && targets[i] < m, "cross_entropy_rows: target id range");
    const S* row = logits->value.data() + i * m;
    S mx = row[0];
    for (int j = 1; j < m; ++j) mx = std::max(mx, row[j]);
    S sum = 0;
    for (int j = 0; j < m; ++j) sum += std::exp(row[j] - mx);
    S lse = mx + std::log(sum);
    for (int j = 0; j < m; ++j) {
      (*probs)[i * m + j] = std::exp(row[j] - mx) / sum;
    }
    loss += row_weights[i] * (lse - row[targets[i]]);
  }
  out->value[0] = loss / wsum;
  if (detail::track<S>({logits})) {
    out->requires_grad = true;
    out->parents = {logits};
    Node<S>* o = out.get();
    out->backward = [o, logits, probs, targets, row_weights, wsum, n, m]() {
      logits->ensure_grad();
      S up = o->grad[0] / wsum;
      for (int i = 0; i < n; ++i) {
        if (row_weights[i] == S(0)) continue;
        S w = row_weights[i] * up;
        for (int j = 0; j < m; ++j) {
          S delta = (j == targets[i]) ? S(1) : S(0);
          logits->grad[i * m + j] += w * ((*probs)[i * m + j] - delta);
        }
      }
    };
  }
  return out;
}

// inverted dropout; mask drawn from the caller's RNG so runs are replayable
template <class S>
NodePtr<S> dropout(const NodePtr<S>& x, double p, Rng& rng) {
  check(p >= 0.0 && p < 1.0, "dropout: p out of range");
  if (p == 0.0) return x;
  auto mask = std::make_shared<std::vector<uint8_t>>(x->size());
  S keep_scale = S(1.0 / (1.0 - p));
  auto out = make_tensor<S>(x->shape);
  for (size_t i = 0; i < x->size(); ++i) {
    bool keep = rng.uniform() >= p;
    (*mask)[i] = keep;
    out->value[i] = keep ? x->value[i] * keep_scale : S(0);
  }
  if (detail::track<S>({x})) {
    out->requires_grad = true;
    out->parents = {x};
    Node<S>* o = out.get();
    out->backward = [o, x, mask, keep_scale]() {
      x->ensure_grad();
      for (size_t i = 0; i < o->grad.size(); ++i) {
        if ((*mask)[i]) x->grad[i] += o->grad[i] * keep_scale;
      }
    };
  }
  return out;
}

// ---- convolution over [C, T, F] feature maps ----

// Taps are (dt, df) pairs; dt >= 0 consumes the time axis (out_T = T -
// max_dt), df is zero-padded on the frequency axis. Weights are laid out
// [C_out, C_in * n_taps], column index ci * n_taps + k. The im2col buffer is
// rebuilt during the backward pass instead of being stored.
template <class S>
NodePtr<S> conv_taps(const NodePtr<S>& x, const NodePtr<S>& w, const NodePtr<S>& b,
                     const std::vector<std::pair<int, int>>& taps) {
  check(x->shape.size() == 3, "conv_taps: input must be [C,T,F]");
  check(!taps.empty(), "conv_taps: empty tap set");
  int cin = x->dim(0), t_in = x->dim(1), f = x->dim(2);
  int n_taps = static_cast<int>(taps.size());
  int max_dt = 0;
  for (auto [dt, df] : taps) {
    check(dt >= 0, "conv_taps: negative time tap");
    max_dt = std::max(max_dt, dt);
  }
  int t_out = t_in - max_dt;
  check(t_out >= 1, "conv_taps: window too short for tap extent");
  check(w->shape.size() == 2 && w->dim(1) == cin * n_taps, "conv_taps: weight shape");
  int cout = w->dim(0);
  check(!b || (b->shape.size() == 1 && b->dim(0) == cout), "conv_taps: bias shape");

  const int rows = t_out * f, cols = cin * n_taps;
  auto build_col = [x, taps, cin, t_out, f, n_taps, cols](std::vector<S>& col) {
    col.assign(static_cast<size_t>(t_out) * f * cols, S(0));
    int t_in_local = x->dim(1);
    for (int t = 0; t < t_out; ++t) {
      for (int ff = 0; ff < f; ++ff) {
        S* dst = col.data() + (static_cast<size_t>(t) * f + ff) * cols;
        for (int ci = 0; ci < cin; ++ci) {
          const S* src = x->value.data() + static_cast<size_t>(ci) * t_in_local * f;
          for (int k = 0; k < n_taps; ++k) {
            auto [dt, df] = taps[k];
            int sf = ff + df;
            if (sf >= 0 && sf < f) {
              dst[ci * n_taps + k] = src[static_cast<size_t>(t + dt) * f + sf];
            }
          }
        }
      }
    }
  };

  auto out = make_tensor<S>({cout, t_out, f});
  {
    std::vector<S> col;
    build_col(col);
    ConstMatMap<S> C(col.data(), rows, cols), W(w->value.data(), cout, cols);
    // out[c, r] = sum_j W[c, j] * col[r, j]
    MatMap<S>(out->value.data(), cout, rows).noalias() = W * C.transpose();
  }
  if (b) {
    for (int c = 0; c < cout; ++c) {
      S bias = b->value[c];
      S* dst = out->value.data() + static_cast<size_t>(c) * rows;
      for (int r = 0; r < rows; ++r) dst[r] += bias;
    }
  }

  bool req = b ? detail::track<S>({x, w, b}) : detail::track<S>({x, w});
  if (req) {
    out->requires_grad = true;
    out->parents = b ? std::vector<NodePtr<S>>{x, w, b} : std::vector<NodePtr<S>>{x, w};
    Node<S>* o = out.get();
    out->backward = [o, x, w, b, taps, build_col, cin, f, n_taps, rows, cols,
                     cout]() {
      ConstMatMap<S> G(o->grad.data(), cout, rows);
      if (b && b->requires_grad) {
        b->ensure_grad();
        for (int c = 0; c < cout; ++c) {
          S s = 0;
          const S* g = o->grad.data() + static_cast<size_t>(c) * rows;
          for (int r = 0; r < rows; ++r) s += g[r];
          b->grad[c] += s;
        }
      }
      if (w->requires_grad) {
        w->ensure_grad();
        std::vector<S> col;
        build_col(col);
        ConstMatMap<S> C(col.data(), rows, cols);
        MatMap<S>(w->grad.data(), cout, cols).noalias() += G * C;
      }
      if (x->requires_grad) {
        x->ensure_grad();
        std::vector<S> dcol(static_cast<size_t>(rows) * cols);
        ConstMatMap<S> W(w->value.data(), cout, cols);
        MatMap<S>(dcol.data(), rows, cols).noalias() = G.transpose() * W;
        int t_out_local = o->dim(1), t_in_local = x->dim(1);
        for (int t = 0; t < t_out_local; ++t) {
          for (int ff = 0; ff < f; ++ff) {
            const S* src = dcol.data() + (static_cast<size_t>(t) * f + ff) * cols;
            for (int ci = 0; ci < cin; ++ci) {
              S* dst = x->grad.data() + static_cast<size_t>(ci) * t_in_local * f;
              for (int k = 0; k < n_taps; ++k) {
                auto [dt, df] = taps[k];
                int sf = ff + df;
                if (sf >= 0 && sf < f) {
                  dst[static_cast<size_t>(t + dt) * f + sf] += src[ci * n_taps + k];
                }
              }
            }
          }
        }
      }
    };
  }
  return out;
}

// [C, 1, F] -> [F/width, C]: average groups of `width` adjacent frequency
// rows and transpose so frequency becomes the row axis
template <class S>
NodePtr<S> pool_freq_to_rows(const NodePtr<S>& x, int width) {
  check(x->shape.size() == 3 && x->dim(1) == 1, "pool_freq_to_rows: need [C,1,F]");
  int c = x->dim(0), f = x->dim(2);
  check(width > 0 && f % width == 0, "pool_freq_to_rows: width must divide F");
  int rows = f / width;
  auto out = make_tensor<S>({rows, c});
  S inv = S(1) / S(width);
  for (int ci = 0; ci < c; ++ci) {
    const S* src = x->value.data() + static_cast<size_t>(ci) * f;
    for (int r = 0; r < rows; ++r) {
      S s = 0;
      for (int k = 0; k < width; ++k) s += src[r * width + k];
      out->value[static_cast<size_t>(r) * c + ci] = s * inv;
    }
  }
  if (detail::track<S>({x})) {
    out->requires_grad = true;
    out->parents = {x};
    Node<S>* o = out.get();
    out->backward = [o, x, c, f, width, rows, inv]() {
      x->ensure_grad();
      for (int ci = 0; ci < c; ++ci) {
        S* dst = x->grad.data() + static_cast<size_t>(ci) * f;
        for (int r = 0; r < rows; ++r) {
          S g = o->grad[static_cast<size_t>(r) * c + ci] * inv;
          for (int k = 0; k < width; ++k) dst[r * width + k] += g;
        }
      }
    };
  }
  return out;
}

}  // namespace samt::ag
