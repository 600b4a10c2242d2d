#include "hscd/diffusion.hpp"

#include <cmath>

namespace hscd {

void NoiseSchedule::validate() const {
  require(steps >= 1, "schedule must have at least one step");
  require(beta.size() == static_cast<size_t>(steps) && alpha.size() == beta.size() &&
              alpha_bar.size() == beta.size() && sigma.size() == beta.size(),
          "schedule sequences must all have length T");
  double run = 1.0;
  for (int64_t t = 0; t < steps; ++t) {
    const size_t i = static_cast<size_t>(t);
    require(beta[i] > 0.0 && beta[i] < 1.0, "beta must lie in (0,1)");
    require(std::abs(alpha[i] - (1.0 - beta[i])) <= 1e-15, "alpha must equal 1 - beta");
    run *= alpha[i];
    require(std::abs(alpha_bar[i] - run) <= 1e-12 * run,
            "alpha_bar must match the running product of alpha");
    if (t > 0)
      require(alpha_bar[i] < alpha_bar[i - 1], "alpha_bar must be strictly decreasing");
  }
}

NoiseSchedule make_linear_schedule(int64_t steps, double beta_start, double beta_end) {
  require(steps >= 1, "schedule needs at least one step");
  require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0,
          "beta bounds must satisfy 0 < start <= end < 1");
  NoiseSchedule s;
  s.steps = steps;
  s.beta.resize(static_cast<size_t>(steps));
  s.alpha.resize(static_cast<size_t>(steps));
  s.alpha_bar.resize(static_cast<size_t>(steps));
  s.sigma.resize(static_cast<size_t>(steps));
  double run = 1.0;
  for (int64_t t = 0; t < steps; ++t) {
    const size_t i = static_cast<size_t>(t);
    s.beta[i] = steps > 1 ? beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                static_cast<double>(steps - 1)
                          : beta_start;
    s.alpha[i] = 1.0 - s.beta[i];
    run *= s.alpha[i];
    s.alpha_bar[i] = run;
    s.sigma[i] =
        t == 0 ? 0.0
               : std::sqrt((1.0 - s.alpha_bar[i - 1]) / (1.0 - s.alpha_bar[i]) * s.beta[i]);
  }
  s.validate();
  return s;
}

Array forward_diffuse(const Array& x0, int64_t t, const Array& eps, const NoiseSchedule& sched) {
  sched.check_t(t);
  require(x0.same_shape(eps), "x0 and eps shapes differ");
  const double a = std::sqrt(sched.alpha_bar[static_cast<size_t>(t)]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[static_cast<size_t>(t)]);
  Array out = x0;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

Array estimate_x0(const Array& xt, int64_t t, const Array& eps_hat, const NoiseSchedule& sched) {
  sched.check_t(t);
  require(xt.same_shape(eps_hat), "xt and eps_hat shapes differ");
  const double inv_a = 1.0 / std::sqrt(sched.alpha_bar[static_cast<size_t>(t)]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[static_cast<size_t>(t)]);
  Array out = xt;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = (xt[i] - b * eps_hat[i]) * inv_a;
  return out;
}

Array reverse_step(const Array& xt, int64_t t, const Array& eps_hat, const Array& z,
                   const NoiseSchedule& sched) {
  sched.check_t(t);
  require(xt.same_shape(eps_hat) && xt.same_shape(z), "reverse_step shape mismatch");
  const size_t i = static_cast<size_t>(t);
  if (t == 0)
    for (int64_t k = 0; k < z.size(); ++k)
      require(z[k] == 0.0, "the final reverse step is deterministic; z must be zero at t=0");
  const double inv_sqrt_a = 1.0 / std::sqrt(sched.alpha[i]);
  const double coef = (1.0 - sched.alpha[i]) / std::sqrt(1.0 - sched.alpha_bar[i]);
  const double sig = sched.sigma[i];
  Array out = xt;
  for (int64_t k = 0; k < out.size(); ++k)
    out[k] = inv_sqrt_a * (xt[k] - coef * eps_hat[k]) + sig * z[k];
  return out;
}

double noise_loss(const Array& eps, const Array& eps_hat) {
  require(eps.same_shape(eps_hat), "noise_loss shape mismatch");
  const int64_t n = eps.rows();
  require(n > 0 && eps.size() > 0, "noise_loss needs a nonempty batch");
  double acc = 0.0;
  for (int64_t i = 0; i < eps.size(); ++i) {
    const double d = eps[i] - eps_hat[i];
    acc += d * d;
  }
  return acc / static_cast<double>(n);
}

ag::Var noise_loss_var(const ag::Var& eps_hat, const Array& eps, int64_t batch) {
  require(eps_hat->val.same_shape(eps), "noise_loss shape mismatch");
  require(batch > 0, "noise_loss needs a nonempty batch");
  ag::Var diff = ag::sub(eps_hat, ag::constant(eps));
  return ag::scale(ag::sumsq(diff), 1.0 / static_cast<double>(batch));
}

Array sample(const NoisePredictFn& predictor, const std::vector<int64_t>& shape, Cond cond,
             const NoiseSchedule& sched, Rng& rng) {
  Array x = Array::randn(shape, rng);
  for (int64_t t = sched.steps - 1; t >= 0; --t) {
    Array eps_hat = predictor(x, t, cond);
    require(eps_hat.same_shape(x), "predictor returned a mismatched shape");
    Array z = t > 0 ? Array::randn(shape, rng) : Array::zeros(shape);
    x = reverse_step(x, t, eps_hat, z, sched);
  }
  return x;
}

}  // namespace hscd
