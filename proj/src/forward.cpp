#include "driftlab/forward.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace driftlab {

Matrix standard_normal(Eigen::Index n, Eigen::Index k, const SeedTree& seeds) {
  Matrix z(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    RandomStream rs = seeds.stream(static_cast<std::uint64_t>(i));
    for (Eigen::Index j = 0; j < k; ++j) z(i, j) = rs.normal();
  }
  return z;
}

Batch forward_step(const Batch& x_prev, const NoiseSchedule& sched, const SeedTree& seeds) {
  const int t = x_prev.t + 1;
  if (t < 1 || t > sched.T()) {
    throw std::out_of_range("forward_step: step " + std::to_string(t) +
                            " exceeds schedule length " + std::to_string(sched.T()));
  }
  const double b = sched.beta(t);
  Matrix out = std::sqrt(1.0 - b) * x_prev.data;
  if (b > 0.0) out += std::sqrt(b) * standard_normal(out.rows(), out.cols(), seeds);
  return Batch(std::move(out), t, Origin::kForward);
}

Batch forward_jump_with_noise(const Batch& x0, int t, const NoiseSchedule& sched,
                              const Matrix& noise) {
  if (t < 1 || t > sched.T()) {
    throw std::out_of_range("forward_jump: t = " + std::to_string(t) + " outside [1, " +
                            std::to_string(sched.T()) + "]");
  }
  if (noise.rows() != x0.size() || noise.cols() != x0.dim()) {
    throw std::invalid_argument("forward_jump: noise shape mismatch");
  }
  const double ab = sched.alpha_bar(t);
  Matrix out = std::sqrt(ab) * x0.data;
  if (ab < 1.0) out += std::sqrt(1.0 - ab) * noise;
  return Batch(std::move(out), t, Origin::kForward);
}

JumpResult forward_jump(const Batch& x0, int t, const NoiseSchedule& sched, const SeedTree& seeds) {
  if (t < 1 || t > sched.T()) {
    throw std::out_of_range("forward_jump: t = " + std::to_string(t) + " outside [1, " +
                            std::to_string(sched.T()) + "]");
  }
  Matrix noise = standard_normal(x0.size(), x0.dim(), seeds);
  Batch xt = forward_jump_with_noise(x0, t, sched, noise);
  return {std::move(xt), std::move(noise)};
}

}  // namespace driftlab
