#pragma once

#include "driftlab/batch.hpp"
#include "driftlab/random.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

/// One noising step q(x_t | x_{t-1}). Vector i draws its noise from
/// seeds.stream(i); the output time index is x_prev.t + 1.
Batch forward_step(const Batch& x_prev, const NoiseSchedule& sched, const SeedTree& seeds);

struct JumpResult {
  Batch xt;
  Matrix noise;
};

/// Closed-form jump x_t = sqrt(abar_t) x_0 + sqrt(1 - abar_t) eps.
JumpResult forward_jump(const Batch& x0, int t, const NoiseSchedule& sched, const SeedTree& seeds);

/// Same as forward_jump with a caller-supplied noise matrix.
Batch forward_jump_with_noise(const Batch& x0, int t, const NoiseSchedule& sched,
                              const Matrix& noise);

/// N x K standard-normal matrix, row i from seeds.stream(i).
Matrix standard_normal(Eigen::Index n, Eigen::Index k, const SeedTree& seeds);

}  // namespace driftlab
