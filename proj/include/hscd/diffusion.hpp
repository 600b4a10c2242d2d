#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hscd/array.hpp"
#include "hscd/autodiff.hpp"
#include "hscd/common.hpp"
#include "hscd/rng.hpp"

namespace hscd {

// Variance schedule for the denoising chain. sigma[0] is defined as 0: the
// final reverse step injects no noise.
struct NoiseSchedule {
  int64_t steps = 0;
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha
  std::vector<double> sigma;

  void validate() const;
  void check_t(int64_t t) const {
    require(t >= 0 && t < steps, "timestep " + std::to_string(t) + " outside [0," +
                                     std::to_string(steps) + ")");
  }
};

NoiseSchedule make_linear_schedule(int64_t steps, double beta_start, double beta_end);

// x_t = x0 * sqrt(abar_t) + eps * sqrt(1 - abar_t)
Array forward_diffuse(const Array& x0, int64_t t, const Array& eps, const NoiseSchedule& sched);

// x0_hat = (xt - sqrt(1 - abar_t) * eps_hat) / sqrt(abar_t)
Array estimate_x0(const Array& xt, int64_t t, const Array& eps_hat, const NoiseSchedule& sched);

// x_{t-1} = (xt - (1 - alpha_t) / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
//           + sigma_t * z, with z required to be zero at t = 0.
Array reverse_step(const Array& xt, int64_t t, const Array& eps_hat, const Array& z,
                   const NoiseSchedule& sched);

// Mean over batch rows of the per-item summed squared prediction error.
double noise_loss(const Array& eps, const Array& eps_hat);
ag::Var noise_loss_var(const ag::Var& eps_hat, const Array& eps, int64_t batch);

using NoisePredictFn = std::function<Array(const Array& xt, int64_t t, Cond cond)>;

// Ancestral sampling: draws the terminal state, then walks the chain down to
// t = 0. Per step the predictor runs first, then (for t > 0) the step noise
// is drawn, so outputs are reproducible from the rng seed alone.
Array sample(const NoisePredictFn& predictor, const std::vector<int64_t>& shape, Cond cond,
             const NoiseSchedule& sched, Rng& rng);

}  // namespace hscd
