#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "hscd/autodiff.hpp"
#include "hscd/rng.hpp"

namespace hscd::nn {

using ag::Var;

// Named parameter tensors in insertion order. Insertion order is the
// serialization order, so it must be identical across construction paths.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Array value;
  };

  int64_t add(const std::string& name, Array init);
  int64_t index_of(const std::string& name) const;
  bool contains(const std::string& name) const { return lookup_.count(name) > 0; }

  int64_t count() const { return static_cast<int64_t>(entries_.size()); }
  Entry& entry(int64_t idx) { return entries_[static_cast<size_t>(idx)]; }
  const Entry& entry(int64_t idx) const { return entries_[static_cast<size_t>(idx)]; }

  int64_t total_size() const;
  std::vector<double> flatten() const;
  void unflatten(const std::vector<double>& flat);

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int64_t> lookup_;
};

// Per-forward-pass bridge from stored parameters to tape variables. Each
// parameter gets one Var per tape so gradients accumulate within a step and
// reset naturally on the next one. A non-trainable tape produces constant
// leaves and therefore records no graph.
class TapeCtx {
 public:
  explicit TapeCtx(const ParamStore& store, bool trainable = true)
      : store_(&store), trainable_(trainable), cache_(static_cast<size_t>(store.count())) {}

  Var use(int64_t idx);
  bool trainable() const { return trainable_; }
  const Var& cached(int64_t idx) const { return cache_[static_cast<size_t>(idx)]; }

 private:
  const ParamStore* store_;
  bool trainable_;
  std::vector<Var> cache_;
};

Array glorot_uniform(int64_t in_dim, int64_t out_dim, Rng& rng);

// Sinusoidal embedding of an integer step index: first half cosines, second
// half sines, frequencies log-spaced from 1 down to 1/10000.
Array timestep_embedding(int64_t t, int64_t dim);

struct Linear {
  int64_t w = -1;
  int64_t b = -1;
  void init(ParamStore& ps, const std::string& prefix, int64_t in_dim, int64_t out_dim, Rng& rng);
  Var apply(TapeCtx& ctx, const Var& x) const;
};

struct LayerNorm {
  int64_t gamma = -1;
  int64_t beta = -1;
  void init(ParamStore& ps, const std::string& prefix, int64_t dim);
  Var apply(TapeCtx& ctx, const Var& x) const;
};

struct SelfAttention {
  Linear wq, wk, wv, wo;
  int heads = 1;
  void init(ParamStore& ps, const std::string& prefix, int64_t dim, int heads_, Rng& rng);
  Var apply(TapeCtx& ctx, const Var& x, int64_t items) const;
};

struct FeedForward {
  Linear fc1, fc2;
  void init(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t hidden, Rng& rng);
  Var apply(TapeCtx& ctx, const Var& x) const;
};

// Pre-norm transformer block: x + attn(ln(x)), then x + ff(ln(x)).
struct TransformerBlock {
  LayerNorm ln1, ln2;
  SelfAttention attn;
  FeedForward ff;
  void init(ParamStore& ps, const std::string& prefix, int64_t dim, int heads, Rng& rng);
  Var apply(TapeCtx& ctx, const Var& x, int64_t items) const;
};

// Pre-norm block with a leading cross-attention stage: queries come from x,
// keys and values from a paired sequence kv with the same item count.
struct CrossBlock {
  LayerNorm ln_q, ln_kv, ln_self, ln_ff;
  Linear cq, ck, cv, co;
  SelfAttention attn;
  FeedForward ff;
  int heads = 1;
  void init(ParamStore& ps, const std::string& prefix, int64_t dim, int heads_, Rng& rng);
  Var apply(TapeCtx& ctx, const Var& x, const Var& kv, int64_t items) const;
};

class AdamW {
 public:
  AdamW(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
        double weight_decay = 0.01)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step(ParamStore& ps, const TapeCtx& ctx);

 private:
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  int64_t t_ = 0;
  std::vector<Array> m_, v_;
};

class Adadelta {
 public:
  explicit Adadelta(double lr = 1.0, double rho = 0.9, double eps = 1e-6)
      : lr_(lr), rho_(rho), eps_(eps) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  void step(ParamStore& ps, const TapeCtx& ctx);

 private:
  double lr_, rho_, eps_;
  std::vector<Array> acc_grad_, acc_update_;
};

}  // namespace hscd::nn
