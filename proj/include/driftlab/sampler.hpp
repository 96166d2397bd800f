#pragma once

#include <map>
#include <set>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/eps_net.hpp"
#include "driftlab/random.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

struct SamplerOptions {
  /// Drop the sigma_1 noise on the final t = 1 step.
  bool noiseless_last_step = false;
  /// Bootstrap chains start from the forward jump; false starts them from
  /// N(0, I) instead (warm-start ablation).
  bool warm_start = true;
};

/// mu = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t).
Matrix posterior_mean_from_eps(const Matrix& xt, const Matrix& eps_hat, int t,
                               const NoiseSchedule& sched);

Batch posterior_mean(const NoisePredictor& net, const Batch& xt, const NoiseSchedule& sched);

/// x_{t-1} = mu + sigma_t z, z_i from seeds.stream(i).
Batch denoise_step(const NoisePredictor& net, const Batch& xt, const NoiseSchedule& sched,
                   const SeedTree& seeds, const SamplerOptions& opts = {});

/// Seeds used by sample_chain for the step that leaves index k.
SeedTree chain_step_seeds(const SeedTree& seeds, int k);

/// Ancestral sampling from N(0, I) at t = T down to 0. Returns the batch at
/// every requested index.
std::map<int, Batch> sample_chain(const NoisePredictor& net, Eigen::Index n,
                                  const NoiseSchedule& sched, const SeedTree& seeds,
                                  const std::set<int>& record_at,
                                  const SamplerOptions& opts = {});

/// Draws s uniformly from {t+1, ..., min(t+L, T)}.
int draw_bootstrap_start(int t, int L, int T, const SeedTree& seeds);

struct BootstrapResult {
  Batch xt;
  int s = 0;
};

/// Warm start at s via the forward jump from data_batch, then denoise from s
/// down to t. At most L network evaluations per vector.
BootstrapResult bootstrap_backward(const NoisePredictor& net, const Batch& data_batch, int t,
                                   int L, const NoiseSchedule& sched, const SeedTree& seeds,
                                   const SamplerOptions& opts = {});

/// Bootstrap chain with the activations needed to differentiate the output
/// with respect to the network parameters.
struct BootstrapTrace {
  Batch xt;
  int s = 0;
  std::vector<EpsNet::Tape> tapes;  // tapes[j] is the step leaving index s - j
};

BootstrapTrace bootstrap_backward_traced(const EpsNet& net, const Batch& data_batch, int t,
                                         int L, const NoiseSchedule& sched,
                                         const SeedTree& seeds, const SamplerOptions& opts = {});

/// Accumulates into grad_params the gradient of a scalar whose gradient with
/// respect to the bootstrap output is grad_xt. The warm start carries no
/// parameter dependence; the additive sigma_k z terms are constants.
void bootstrap_backprop(const EpsNet& net, const BootstrapTrace& trace, const Matrix& grad_xt,
                        const NoiseSchedule& sched, Vector& grad_params);

}  // namespace driftlab
