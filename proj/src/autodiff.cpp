#include "hscd/autodiff.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <unordered_set>

namespace hscd::ag {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

CMap cmap(const Array& a) { return CMap(a.data(), a.rows(), a.cols()); }
MMap mmap(Array& a) { return MMap(a.data(), a.rows(), a.cols()); }

Var make(Array val, std::vector<Var> inputs, std::function<void(Node&)> bw) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  for (const auto& i : inputs) n->requires_grad = n->requires_grad || i->requires_grad;
  if (n->requires_grad) {
    n->inputs = std::move(inputs);
    n->backward_fn = std::move(bw);
  }
  return n;
}

Array& grad_buf(const Var& v) {
  if (v->grad.size() != v->val.size()) v->grad = Array::zeros(v->val.shape());
  return v->grad;
}

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

}  // namespace

Var leaf(Array v, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->val = std::move(v);
  n->requires_grad = requires_grad;
  return n;
}

void backward(const Var& root) {
  require(root->val.size() == 1, "backward: root must be scalar");
  require(root->requires_grad, "backward: root does not require grad");

  // Iterative DFS postorder gives a topological order of the DAG.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->inputs.size()) {
      Node* child = node->inputs[idx++].get();
      if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node* n : order) {
    if (n->grad.size() != n->val.size()) n->grad = Array::zeros(n->val.shape());
    else n->grad.fill(0.0);
  }
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------- elementwise ----------------

Var add(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), "add: shape mismatch");
  Array out = a->val;
  axpy(out, 1.0, b->val);
  return make(std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) axpy(grad_buf(self.inputs[0]), 1.0, self.grad);
    if (self.inputs[1]->requires_grad) axpy(grad_buf(self.inputs[1]), 1.0, self.grad);
  });
}

Var sub(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), "sub: shape mismatch");
  Array out = a->val;
  axpy(out, -1.0, b->val);
  return make(std::move(out), {a, b}, [](Node& self) {
    if (self.inputs[0]->requires_grad) axpy(grad_buf(self.inputs[0]), 1.0, self.grad);
    if (self.inputs[1]->requires_grad) axpy(grad_buf(self.inputs[1]), -1.0, self.grad);
  });
}

Var mul(const Var& a, const Var& b) {
  require(a->val.same_shape(b->val), "mul: shape mismatch");
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= b->val[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    const Array& av = self.inputs[0]->val;
    const Array& bv = self.inputs[1]->val;
    if (self.inputs[0]->requires_grad) {
      Array& g = grad_buf(self.inputs[0]);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bv[i];
    }
    if (self.inputs[1]->requires_grad) {
      Array& g = grad_buf(self.inputs[1]);
      for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * av[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  return make(std::move(out), {a}, [s](Node& self) {
    if (self.inputs[0]->requires_grad) axpy(grad_buf(self.inputs[0]), s, self.grad);
  });
}

Var add_scalar(const Var& a, double s) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += s;
  return make(std::move(out), {a}, [](Node& self) {
    if (self.inputs[0]->requires_grad) axpy(grad_buf(self.inputs[0]), 1.0, self.grad);
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var exp_(const Var& a) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(out[i]);
  return make(std::move(out), {a}, [](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * self.val[i];
  });
}

Var log_(const Var& a) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::log(out[i]);
  return make(std::move(out), {a}, [](Node& self) {
    const Array& av = self.inputs[0]->val;
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / av[i];
  });
}

Var sqrt_(const Var& a) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::sqrt(out[i]);
  return make(std::move(out), {a}, [](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * 0.5 / self.val[i];
  });
}

Var clamp(const Var& a, double lo, double hi) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, out[i]));
  return make(std::move(out), {a}, [lo, hi](Node& self) {
    const Array& av = self.inputs[0]->val;
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i)
      if (av[i] >= lo && av[i] <= hi) g[i] += self.grad[i];
  });
}

Var gelu(const Var& a) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) {
    const double x = out[i];
    out[i] = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
  }
  return make(std::move(out), {a}, [](Node& self) {
    const Array& av = self.inputs[0]->val;
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i) {
      const double x = av[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
      g[i] += self.grad[i] * (cdf + x * pdf);
    }
  });
}

Var relu(const Var& a) {
  Array out = a->val;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, out[i]);
  return make(std::move(out), {a}, [](Node& self) {
    const Array& av = self.inputs[0]->val;
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i)
      if (av[i] > 0.0) g[i] += self.grad[i];
  });
}

// ---------------- reductions ----------------

Var sum(const Var& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a->val.size(); ++i) s += a->val[i];
  return make(Array::full({1}, s), {a}, [](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[0];
  });
}

Var mean(const Var& a) {
  const double inv = 1.0 / static_cast<double>(a->val.size());
  double s = 0.0;
  for (int64_t i = 0; i < a->val.size(); ++i) s += a->val[i];
  return make(Array::full({1}, s * inv), {a}, [inv](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += self.grad[0] * inv;
  });
}

Var sumsq(const Var& a) {
  double s = 0.0;
  for (int64_t i = 0; i < a->val.size(); ++i) s += a->val[i] * a->val[i];
  return make(Array::full({1}, s), {a}, [](Node& self) {
    const Array& av = self.inputs[0]->val;
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < g.size(); ++i) g[i] += 2.0 * self.grad[0] * av[i];
  });
}

Var row_sumsq(const Var& a) {
  const int64_t r = a->val.rows(), c = a->val.cols();
  Array out({r, 1});
  for (int64_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (int64_t j = 0; j < c; ++j) s += a->val.at(i, j) * a->val.at(i, j);
    out[i] = s;
  }
  return make(std::move(out), {a}, [r, c](Node& self) {
    const Array& av = self.inputs[0]->val;
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = 0; j < c; ++j) g.at(i, j) += 2.0 * self.grad[i] * av.at(i, j);
  });
}

// ---------------- linear algebra ----------------

Var matmul(const Var& a, const Var& b) {
  Array out = hscd::matmul(a->val, b->val);
  return make(std::move(out), {a, b}, [](Node& self) {
    const Var& a = self.inputs[0];
    const Var& b = self.inputs[1];
    if (a->requires_grad) add_matmul_nt(grad_buf(a), self.grad, b->val);
    if (b->requires_grad) add_matmul_tn(grad_buf(b), a->val, self.grad);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  Array out = hscd::matmul_nt(a->val, b->val);
  return make(std::move(out), {a, b}, [](Node& self) {
    const Var& a = self.inputs[0];
    const Var& b = self.inputs[1];
    if (a->requires_grad) add_matmul(grad_buf(a), self.grad, b->val);
    if (b->requires_grad) add_matmul_tn(grad_buf(b), self.grad, a->val);
  });
}

Var linear(const Var& x, const Var& w, const Var& bias) {
  require(x->val.cols() == w->val.rows(), "linear: x/w dimension mismatch");
  require(bias->val.size() == w->val.cols(), "linear: bias size mismatch");
  Array out = hscd::matmul(x->val, w->val);
  const int64_t r = out.rows(), c = out.cols();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(i, j) += bias->val[j];
  return make(std::move(out), {x, w, bias}, [r, c](Node& self) {
    const Var& x = self.inputs[0];
    const Var& w = self.inputs[1];
    const Var& bias = self.inputs[2];
    if (x->requires_grad) add_matmul_nt(grad_buf(x), self.grad, w->val);
    if (w->requires_grad) add_matmul_tn(grad_buf(w), x->val, self.grad);
    if (bias->requires_grad) {
      Array& g = grad_buf(bias);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) g[j] += self.grad.at(i, j);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const int64_t r = x->val.rows(), c = x->val.cols();
  require(gamma->val.size() == c && beta->val.size() == c, "layer_norm: param size mismatch");
  Array out({r, c});
  Array xhat({r, c});
  Array inv_std({r, 1});
  for (int64_t i = 0; i < r; ++i) {
    double mu = 0.0;
    for (int64_t j = 0; j < c; ++j) mu += x->val.at(i, j);
    mu /= static_cast<double>(c);
    double var = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double d = x->val.at(i, j) - mu;
      var += d * d;
    }
    var /= static_cast<double>(c);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int64_t j = 0; j < c; ++j) {
      const double xh = (x->val.at(i, j) - mu) * is;
      xhat.at(i, j) = xh;
      out.at(i, j) = gamma->val[j] * xh + beta->val[j];
    }
  }
  return make(std::move(out), {x, gamma, beta},
              [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& self) {
                const Var& x = self.inputs[0];
                const Var& gamma = self.inputs[1];
                const Var& beta = self.inputs[2];
                if (gamma->requires_grad) {
                  Array& g = grad_buf(gamma);
                  for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) g[j] += self.grad.at(i, j) * xhat.at(i, j);
                }
                if (beta->requires_grad) {
                  Array& g = grad_buf(beta);
                  for (int64_t i = 0; i < r; ++i)
                    for (int64_t j = 0; j < c; ++j) g[j] += self.grad.at(i, j);
                }
                if (x->requires_grad) {
                  Array& g = grad_buf(x);
                  for (int64_t i = 0; i < r; ++i) {
                    double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                    for (int64_t j = 0; j < c; ++j) {
                      const double dxh = self.grad.at(i, j) * gamma->val[j];
                      m1 += dxh;
                      m2 += dxh * xhat.at(i, j);
                    }
                    m1 /= static_cast<double>(c);
                    m2 /= static_cast<double>(c);
                    for (int64_t j = 0; j < c; ++j) {
                      const double dxh = self.grad.at(i, j) * gamma->val[j];
                      g.at(i, j) += inv_std[i] * (dxh - m1 - xhat.at(i, j) * m2);
                    }
                  }
                }
              });
}

Var softmax_rows(const Var& x) {
  const int64_t r = x->val.rows(), c = x->val.cols();
  Array out({r, c});
  for (int64_t i = 0; i < r; ++i) {
    double mx = -1e300;
    for (int64_t j = 0; j < c; ++j) mx = std::max(mx, x->val.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) {
      const double e = std::exp(x->val.at(i, j) - mx);
      out.at(i, j) = e;
      z += e;
    }
    for (int64_t j = 0; j < c; ++j) out.at(i, j) /= z;
  }
  return make(std::move(out), {x}, [r, c](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (int64_t j = 0; j < c; ++j) dot += self.grad.at(i, j) * self.val.at(i, j);
      for (int64_t j = 0; j < c; ++j)
        g.at(i, j) += self.val.at(i, j) * (self.grad.at(i, j) - dot);
    }
  });
}

Var log_softmax_rows(const Var& x) {
  const int64_t r = x->val.rows(), c = x->val.cols();
  Array out({r, c});
  for (int64_t i = 0; i < r; ++i) {
    double mx = -1e300;
    for (int64_t j = 0; j < c; ++j) mx = std::max(mx, x->val.at(i, j));
    double z = 0.0;
    for (int64_t j = 0; j < c; ++j) z += std::exp(x->val.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (int64_t j = 0; j < c; ++j) out.at(i, j) = x->val.at(i, j) - lse;
  }
  return make(std::move(out), {x}, [r, c](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (int64_t j = 0; j < c; ++j) gsum += self.grad.at(i, j);
      for (int64_t j = 0; j < c; ++j)
        g.at(i, j) += self.grad.at(i, j) - std::exp(self.val.at(i, j)) * gsum;
    }
  });
}

Var div_colvec(const Var& x, const Var& v) {
  const int64_t r = x->val.rows(), c = x->val.cols();
  require(v->val.rows() == r && v->val.cols() == 1, "div_colvec: divisor must be (R,1)");
  Array out({r, c});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(i, j) = x->val.at(i, j) / v->val[i];
  return make(std::move(out), {x, v}, [r, c](Node& self) {
    const Var& x = self.inputs[0];
    const Var& v = self.inputs[1];
    if (x->requires_grad) {
      Array& g = grad_buf(x);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < c; ++j) g.at(i, j) += self.grad.at(i, j) / v->val[i];
    }
    if (v->requires_grad) {
      Array& g = grad_buf(v);
      for (int64_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (int64_t j = 0; j < c; ++j) s += self.grad.at(i, j) * x->val.at(i, j);
        g[i] -= s / (v->val[i] * v->val[i]);
      }
    }
  });
}

Var attention(const Var& q, const Var& k, const Var& v, int64_t items, int heads) {
  const int64_t d = q->val.cols();
  require(d == k->val.cols() && d == v->val.cols(), "attention: feature dims differ");
  require(heads > 0 && d % heads == 0, "attention: heads must divide dim");
  require(q->val.rows() % items == 0 && k->val.rows() % items == 0,
          "attention: rows not divisible by items");
  require(k->val.rows() == v->val.rows(), "attention: k/v row mismatch");
  const int64_t lq = q->val.rows() / items;
  const int64_t lkv = k->val.rows() / items;
  const int64_t dh = d / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));

  Array out({items * lq, d});
  Array attn({items, heads, lq, lkv});
  EMat s(lq, lkv);
  for (int64_t b = 0; b < items; ++b) {
    CMap qm(q->val.data() + b * lq * d, lq, d);
    CMap km(k->val.data() + b * lkv * d, lkv, d);
    CMap vm(v->val.data() + b * lkv * d, lkv, d);
    MMap om(out.data() + b * lq * d, lq, d);
    for (int h = 0; h < heads; ++h) {
      auto qh = qm.middleCols(h * dh, dh);
      auto kh = km.middleCols(h * dh, dh);
      s.noalias() = qh * kh.transpose() * sc;
      MMap am(attn.data() + (b * heads + h) * lq * lkv, lq, lkv);
      for (int64_t i = 0; i < lq; ++i) {
        const double mx = s.row(i).maxCoeff();
        double z = 0.0;
        for (int64_t j = 0; j < lkv; ++j) {
          const double e = std::exp(s(i, j) - mx);
          am(i, j) = e;
          z += e;
        }
        am.row(i) /= z;
      }
      om.middleCols(h * dh, dh).noalias() = am * vm.middleCols(h * dh, dh);
    }
  }

  return make(std::move(out), {q, k, v},
              [items, heads, lq, lkv, dh, d, sc, attn = std::move(attn)](Node& self) {
                const Var& q = self.inputs[0];
                const Var& k = self.inputs[1];
                const Var& v = self.inputs[2];
                Array& gq = grad_buf(q);
                Array& gk = grad_buf(k);
                Array& gv = grad_buf(v);
                EMat da(lq, lkv), ds(lq, lkv);
                for (int64_t b = 0; b < items; ++b) {
                  CMap qm(q->val.data() + b * lq * d, lq, d);
                  CMap km(k->val.data() + b * lkv * d, lkv, d);
                  CMap vm(v->val.data() + b * lkv * d, lkv, d);
                  CMap gom(self.grad.data() + b * lq * d, lq, d);
                  MMap gqm(gq.data() + b * lq * d, lq, d);
                  MMap gkm(gk.data() + b * lkv * d, lkv, d);
                  MMap gvm(gv.data() + b * lkv * d, lkv, d);
                  for (int h = 0; h < heads; ++h) {
                    CMap am(attn.data() + (b * heads + h) * lq * lkv, lq, lkv);
                    auto goh = gom.middleCols(h * dh, dh);
                    gvm.middleCols(h * dh, dh).noalias() += am.transpose() * goh;
                    da.noalias() = goh * vm.middleCols(h * dh, dh).transpose();
                    for (int64_t i = 0; i < lq; ++i) {
                      const double dot = da.row(i).dot(am.row(i));
                      ds.row(i) = am.row(i).cwiseProduct((da.row(i).array() - dot).matrix());
                    }
                    gqm.middleCols(h * dh, dh).noalias() += ds * km.middleCols(h * dh, dh) * sc;
                    gkm.middleCols(h * dh, dh).noalias() += ds.transpose() * qm.middleCols(h * dh, dh) * sc;
                  }
                }
              });
}

// ---------------- structural ----------------

Var concat_cols(const Var& a, const Var& b) {
  const int64_t r = a->val.rows();
  require(b->val.rows() == r, "concat_cols: row mismatch");
  const int64_t ca = a->val.cols(), cb = b->val.cols();
  Array out({r, ca + cb});
  for (int64_t i = 0; i < r; ++i) {
    for (int64_t j = 0; j < ca; ++j) out.at(i, j) = a->val.at(i, j);
    for (int64_t j = 0; j < cb; ++j) out.at(i, ca + j) = b->val.at(i, j);
  }
  return make(std::move(out), {a, b}, [r, ca, cb](Node& self) {
    if (self.inputs[0]->requires_grad) {
      Array& g = grad_buf(self.inputs[0]);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < ca; ++j) g.at(i, j) += self.grad.at(i, j);
    }
    if (self.inputs[1]->requires_grad) {
      Array& g = grad_buf(self.inputs[1]);
      for (int64_t i = 0; i < r; ++i)
        for (int64_t j = 0; j < cb; ++j) g.at(i, j) += self.grad.at(i, ca + j);
    }
  });
}

Var slice_cols(const Var& a, int64_t c0, int64_t c1) {
  const int64_t r = a->val.rows(), c = a->val.cols();
  require(0 <= c0 && c0 < c1 && c1 <= c, "slice_cols: range out of bounds");
  Array out({r, c1 - c0});
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = c0; j < c1; ++j) out.at(i, j - c0) = a->val.at(i, j);
  return make(std::move(out), {a}, [c0, c1, r](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t i = 0; i < r; ++i)
      for (int64_t j = c0; j < c1; ++j) g.at(i, j) += self.grad.at(i, j - c0);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty input");
  const int64_t c = parts[0]->val.cols();
  int64_t r = 0;
  for (const auto& p : parts) {
    require(p->val.cols() == c, "concat_rows: column mismatch");
    r += p->val.rows();
  }
  Array out({r, c});
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t n = p->val.size();
    std::copy(p->val.data(), p->val.data() + n, out.data() + off);
    off += n;
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return make(std::move(out), std::move(inputs), [](Node& self) {
    int64_t off = 0;
    for (auto& in : self.inputs) {
      const int64_t n = in->val.size();
      if (in->requires_grad) {
        Array& g = grad_buf(in);
        for (int64_t i = 0; i < n; ++i) g[i] += self.grad[off + i];
      }
      off += n;
    }
  });
}

Var slice_rows(const Var& a, int64_t r0, int64_t r1) {
  const int64_t r = a->val.rows(), c = a->val.cols();
  require(0 <= r0 && r0 < r1 && r1 <= r, "slice_rows: range out of bounds");
  Array out({r1 - r0, c});
  std::copy(a->val.data() + r0 * c, a->val.data() + r1 * c, out.data());
  return make(std::move(out), {a}, [r0, c](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    const int64_t n = self.val.size();
    for (int64_t i = 0; i < n; ++i) g[r0 * c + i] += self.grad[i];
  });
}

Var gather_rows(const Var& x, std::vector<int64_t> idx) {
  const int64_t c = x->val.cols(), r = x->val.rows();
  Array out({static_cast<int64_t>(idx.size()), c});
  for (size_t i = 0; i < idx.size(); ++i) {
    require(idx[i] >= 0 && idx[i] < r, "gather_rows: index out of bounds");
    std::copy(x->val.data() + idx[i] * c, x->val.data() + (idx[i] + 1) * c,
              out.data() + static_cast<int64_t>(i) * c);
  }
  return make(std::move(out), {x}, [idx = std::move(idx), c](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (size_t i = 0; i < idx.size(); ++i) {
      const double* src = self.grad.data() + static_cast<int64_t>(i) * c;
      double* dst = g.data() + idx[i] * c;
      for (int64_t j = 0; j < c; ++j) dst[j] += src[j];
    }
  });
}

Var tile_rows(const Var& x, int64_t times) {
  const int64_t r = x->val.rows(), c = x->val.cols();
  Array out({r * times, c});
  for (int64_t t = 0; t < times; ++t)
    std::copy(x->val.data(), x->val.data() + r * c, out.data() + t * r * c);
  return make(std::move(out), {x}, [r, c, times](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (int64_t t = 0; t < times; ++t)
      for (int64_t i = 0; i < r * c; ++i) g[i] += self.grad[t * r * c + i];
  });
}

Var add_tiled(const Var& x, const Var& p, int64_t times) {
  const int64_t r = p->val.rows(), c = p->val.cols();
  require(x->val.rows() == r * times && x->val.cols() == c, "add_tiled: shape mismatch");
  Array out = x->val;
  for (int64_t t = 0; t < times; ++t)
    for (int64_t i = 0; i < r * c; ++i) out[t * r * c + i] += p->val[i];
  return make(std::move(out), {x, p}, [r, c, times](Node& self) {
    if (self.inputs[0]->requires_grad) axpy(grad_buf(self.inputs[0]), 1.0, self.grad);
    if (self.inputs[1]->requires_grad) {
      Array& g = grad_buf(self.inputs[1]);
      for (int64_t t = 0; t < times; ++t)
        for (int64_t i = 0; i < r * c; ++i) g[i] += self.grad[t * r * c + i];
    }
  });
}

Var gather_elems(const Var& x, std::vector<int64_t> rows, std::vector<int64_t> cols) {
  require(rows.size() == cols.size(), "gather_elems: index length mismatch");
  const int64_t n = static_cast<int64_t>(rows.size());
  Array out({n, 1});
  for (int64_t i = 0; i < n; ++i) {
    require(rows[i] >= 0 && rows[i] < x->val.rows() && cols[i] >= 0 && cols[i] < x->val.cols(),
            "gather_elems: index out of bounds");
    out[i] = x->val.at(rows[i], cols[i]);
  }
  return make(std::move(out), {x}, [rows = std::move(rows), cols = std::move(cols)](Node& self) {
    Array& g = grad_buf(self.inputs[0]);
    for (size_t i = 0; i < rows.size(); ++i)
      g.at(rows[i], cols[i]) += self.grad[static_cast<int64_t>(i)];
  });
}

}  // namespace hscd::ag
