#include "hscd/nn.hpp"

#include <cmath>

#include "hscd/common.hpp"

namespace hscd::nn {

int64_t ParamStore::add(const std::string& name, Array init) {
  require(!contains(name), "duplicate parameter name: " + name);
  const int64_t idx = count();
  entries_.push_back({name, std::move(init)});
  lookup_[name] = idx;
  return idx;
}

int64_t ParamStore::index_of(const std::string& name) const {
  auto it = lookup_.find(name);
  require(it != lookup_.end(), "unknown parameter name: " + name);
  return it->second;
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& e : entries_) n += e.value.size();
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> flat;
  flat.reserve(static_cast<size_t>(total_size()));
  for (const auto& e : entries_)
    flat.insert(flat.end(), e.value.vec().begin(), e.value.vec().end());
  return flat;
}

void ParamStore::unflatten(const std::vector<double>& flat) {
  require(static_cast<int64_t>(flat.size()) == total_size(),
          "parameter blob size does not match model layout");
  size_t off = 0;
  for (auto& e : entries_) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(off),
              flat.begin() + static_cast<std::ptrdiff_t>(off + e.value.vec().size()),
              e.value.vec().begin());
    off += e.value.vec().size();
  }
}

Var TapeCtx::use(int64_t idx) {
  auto& slot = cache_[static_cast<size_t>(idx)];
  if (!slot) slot = ag::leaf(store_->entry(idx).value, trainable_);
  return slot;
}

Array glorot_uniform(int64_t in_dim, int64_t out_dim, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  Array w({in_dim, out_dim});
  for (int64_t i = 0; i < w.size(); ++i) w[i] = (2.0 * rng.uniform() - 1.0) * a;
  return w;
}

Array timestep_embedding(int64_t t, int64_t dim) {
  require(dim >= 2 && dim % 2 == 0, "timestep embedding dim must be even");
  const int64_t half = dim / 2;
  Array e({1, dim});
  for (int64_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                 static_cast<double>(half));
    const double arg = static_cast<double>(t) * freq;
    e[i] = std::cos(arg);
    e[half + i] = std::sin(arg);
  }
  return e;
}

void Linear::init(ParamStore& ps, const std::string& prefix, int64_t in_dim, int64_t out_dim,
                  Rng& rng) {
  w = ps.add(prefix + ".w", glorot_uniform(in_dim, out_dim, rng));
  b = ps.add(prefix + ".b", Array::zeros({out_dim}));
}

Var Linear::apply(TapeCtx& ctx, const Var& x) const {
  return ag::linear(x, ctx.use(w), ctx.use(b));
}

void LayerNorm::init(ParamStore& ps, const std::string& prefix, int64_t dim) {
  gamma = ps.add(prefix + ".gamma", Array::full({dim}, 1.0));
  beta = ps.add(prefix + ".beta", Array::zeros({dim}));
}

Var LayerNorm::apply(TapeCtx& ctx, const Var& x) const {
  return ag::layer_norm(x, ctx.use(gamma), ctx.use(beta));
}

void SelfAttention::init(ParamStore& ps, const std::string& prefix, int64_t dim, int heads_,
                         Rng& rng) {
  heads = heads_;
  wq.init(ps, prefix + ".q", dim, dim, rng);
  wk.init(ps, prefix + ".k", dim, dim, rng);
  wv.init(ps, prefix + ".v", dim, dim, rng);
  wo.init(ps, prefix + ".o", dim, dim, rng);
}

Var SelfAttention::apply(TapeCtx& ctx, const Var& x, int64_t items) const {
  Var q = wq.apply(ctx, x);
  Var k = wk.apply(ctx, x);
  Var v = wv.apply(ctx, x);
  return wo.apply(ctx, ag::attention(q, k, v, items, heads));
}

void FeedForward::init(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t hidden,
                       Rng& rng) {
  fc1.init(ps, prefix + ".fc1", dim, hidden, rng);
  fc2.init(ps, prefix + ".fc2", hidden, dim, rng);
}

Var FeedForward::apply(TapeCtx& ctx, const Var& x) const {
  return fc2.apply(ctx, ag::gelu(fc1.apply(ctx, x)));
}

void TransformerBlock::init(ParamStore& ps, const std::string& prefix, int64_t dim, int heads,
                            Rng& rng) {
  ln1.init(ps, prefix + ".ln1", dim);
  ln2.init(ps, prefix + ".ln2", dim);
  attn.init(ps, prefix + ".attn", dim, heads, rng);
  ff.init(ps, prefix + ".ff", dim, 4 * dim, rng);
}

Var TransformerBlock::apply(TapeCtx& ctx, const Var& x, int64_t items) const {
  Var h = ag::add(x, attn.apply(ctx, ln1.apply(ctx, x), items));
  return ag::add(h, ff.apply(ctx, ln2.apply(ctx, h)));
}

void CrossBlock::init(ParamStore& ps, const std::string& prefix, int64_t dim, int heads_,
                      Rng& rng) {
  heads = heads_;
  ln_q.init(ps, prefix + ".ln_q", dim);
  ln_kv.init(ps, prefix + ".ln_kv", dim);
  ln_self.init(ps, prefix + ".ln_self", dim);
  ln_ff.init(ps, prefix + ".ln_ff", dim);
  cq.init(ps, prefix + ".cq", dim, dim, rng);
  ck.init(ps, prefix + ".ck", dim, dim, rng);
  cv.init(ps, prefix + ".cv", dim, dim, rng);
  co.init(ps, prefix + ".co", dim, dim, rng);
  attn.init(ps, prefix + ".attn", dim, heads_, rng);
  ff.init(ps, prefix + ".ff", dim, 4 * dim, rng);
}

Var CrossBlock::apply(TapeCtx& ctx, const Var& x, const Var& kv, int64_t items) const {
  Var q = cq.apply(ctx, ln_q.apply(ctx, x));
  Var kvn = ln_kv.apply(ctx, kv);
  Var cross = ag::attention(q, ck.apply(ctx, kvn), cv.apply(ctx, kvn), items, heads);
  Var h = ag::add(x, co.apply(ctx, cross));
  h = ag::add(h, attn.apply(ctx, ln_self.apply(ctx, h), items));
  return ag::add(h, ff.apply(ctx, ln_ff.apply(ctx, h)));
}

void AdamW::step(ParamStore& ps, const TapeCtx& ctx) {
  const size_t n = static_cast<size_t>(ps.count());
  if (m_.size() < n) {
    m_.resize(n);
    v_.resize(n);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (int64_t i = 0; i < ps.count(); ++i) {
    const Var& var = ctx.cached(i);
    if (!var || var->grad.size() != var->val.size()) continue;
    Array& p = ps.entry(i).value;
    Array& m = m_[static_cast<size_t>(i)];
    Array& v = v_[static_cast<size_t>(i)];
    if (m.size() != p.size()) {
      m = Array::zeros(p.shape());
      v = Array::zeros(p.shape());
    }
    const Array& g = var->grad;
    for (int64_t j = 0; j < p.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p[j] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * p[j]);
    }
  }
}

void Adadelta::step(ParamStore& ps, const TapeCtx& ctx) {
  const size_t n = static_cast<size_t>(ps.count());
  if (acc_grad_.size() < n) {
    acc_grad_.resize(n);
    acc_update_.resize(n);
  }
  for (int64_t i = 0; i < ps.count(); ++i) {
    const Var& var = ctx.cached(i);
    if (!var || var->grad.size() != var->val.size()) continue;
    Array& p = ps.entry(i).value;
    Array& eg = acc_grad_[static_cast<size_t>(i)];
    Array& eu = acc_update_[static_cast<size_t>(i)];
    if (eg.size() != p.size()) {
      eg = Array::zeros(p.shape());
      eu = Array::zeros(p.shape());
    }
    const Array& g = var->grad;
    for (int64_t j = 0; j < p.size(); ++j) {
      eg[j] = rho_ * eg[j] + (1.0 - rho_) * g[j] * g[j];
      const double dx = -std::sqrt(eu[j] + eps_) / std::sqrt(eg[j] + eps_) * g[j];
      eu[j] = rho_ * eu[j] + (1.0 - rho_) * dx * dx;
      p[j] += lr_ * dx;
    }
  }
}

}  // namespace hscd::nn
