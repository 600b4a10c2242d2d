#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hscd/array.hpp"

namespace hscd::ag {

// Reverse-mode autodiff over Array values. A graph is built per training
// step; inference paths pass requires_grad=false leaves and pay no tape cost.
struct Node {
  Array val;
  Array grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward_fn;
};

using Var = std::shared_ptr<Node>;

Var leaf(Array v, bool requires_grad = false);
inline Var constant(Array v) { return leaf(std::move(v), false); }

// Runs reverse accumulation from a scalar root. Gradients of all reachable
// requires_grad nodes are left in node->grad.
void backward(const Var& root);

// ---- elementwise ----
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
Var exp_(const Var& a);
Var log_(const Var& a);
Var sqrt_(const Var& a);
Var clamp(const Var& a, double lo, double hi);
Var gelu(const Var& a);
Var relu(const Var& a);

// ---- reductions ----
Var sum(const Var& a);
Var mean(const Var& a);
Var sumsq(const Var& a);
Var row_sumsq(const Var& a);  // (R,C) -> (R,1)

// ---- linear algebra ----
Var matmul(const Var& a, const Var& b);
Var matmul_nt(const Var& a, const Var& b);  // a @ b^T
// y = x @ w + bias (bias broadcast over rows; bias shape (1,out) or (out))
Var linear(const Var& x, const Var& w, const Var& bias);
// rowwise layer norm with learned gain/offset, both shaped (1,C) or (C)
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var softmax_rows(const Var& x);
Var log_softmax_rows(const Var& x);
// y[r,c] = x[r,c] / v[r]; v shaped (R,1)
Var div_colvec(const Var& x, const Var& v);

// Multi-head scaled-dot-product attention over `items` independent token
// groups. q is (items*lq, d); k and v are (items*lkv, d); heads must divide d.
Var attention(const Var& q, const Var& k, const Var& v, int64_t items, int heads);

// ---- structural ----
Var concat_cols(const Var& a, const Var& b);
Var slice_cols(const Var& a, int64_t c0, int64_t c1);
Var concat_rows(const std::vector<Var>& parts);
Var slice_rows(const Var& a, int64_t r0, int64_t r1);
Var gather_rows(const Var& x, std::vector<int64_t> idx);
Var tile_rows(const Var& x, int64_t times);
// y = x + tile_rows(p, times); p has x.rows()/times rows
Var add_tiled(const Var& x, const Var& p, int64_t times);
// picks (n,1) entries x[rows[i], cols[i]]
Var gather_elems(const Var& x, std::vector<int64_t> rows, std::vector<int64_t> cols);

}  // namespace hscd::ag
