#include "driftlab/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace driftlab {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, SigmaMode sigma_mode)
    : beta_(std::move(betas)), sigma_mode_(sigma_mode) {
  if (beta_.empty()) throw std::invalid_argument("schedule: T must be at least 1");
  const std::size_t n = beta_.size();
  alpha_.resize(n);
  alpha_bar_.resize(n);
  sigma_.resize(n);
  double running = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double b = beta_[i];
    // beta = 0 is tolerated for degenerate test configurations.
    if (!(b >= 0.0 && b < 1.0)) {
      throw std::invalid_argument("schedule: beta_" + std::to_string(i + 1) +
                                  " outside [0, 1)");
    }
    alpha_[i] = 1.0 - b;
    running *= alpha_[i];
    alpha_bar_[i] = running;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double var =
        sigma_mode_ == SigmaMode::kBeta
            ? beta_[i]
            : (i == 0 ? beta_[0]
                      : beta_[i] * (1.0 - alpha_bar_[i - 1]) / (1.0 - alpha_bar_[i]));
    sigma_[i] = std::sqrt(var);
  }
}

void NoiseSchedule::check(int t) const {
  if (t < 1 || t > T()) {
    throw std::out_of_range("schedule: index " + std::to_string(t) + " outside [1, " +
                            std::to_string(T()) + "]");
  }
}

double NoiseSchedule::beta(int t) const {
  check(t);
  return beta_[t - 1];
}

double NoiseSchedule::alpha(int t) const {
  check(t);
  return alpha_[t - 1];
}

double NoiseSchedule::alpha_bar(int t) const {
  if (t == 0) return 1.0;
  check(t);
  return alpha_bar_[t - 1];
}

double NoiseSchedule::sigma(int t) const {
  check(t);
  return sigma_[t - 1];
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end,
                                   SigmaMode sigma_mode) {
  if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw std::invalid_argument(
        "make_linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int i = 0; i < T; ++i) {
    betas[i] = T == 1 ? beta_start
                      : beta_start + (beta_end - beta_start) * static_cast<double>(i) / (T - 1);
  }
  betas.back() = beta_end;
  return NoiseSchedule(std::move(betas), sigma_mode);
}

LinearEndpoints default_linear_endpoints(int T) {
  if (T < 1) throw std::invalid_argument("default_linear_endpoints: T must be >= 1");
  const double scale = 1000.0 / T;
  return {std::min(1e-4 * scale, 0.5), std::min(0.02 * scale, 0.999)};
}

WeightSchedule::WeightSchedule(double rho, int T) : rho_(rho) {
  if (!(rho >= 0.0) || !std::isfinite(rho)) {
    throw std::invalid_argument("make_weight_schedule: rho must be finite and >= 0");
  }
  if (T < 1) throw std::invalid_argument("make_weight_schedule: T must be >= 1");
  // exp(rho (T - t)) shifted by the largest exponent rho (T - 1).
  w_.resize(static_cast<std::size_t>(T));
  double total = 0.0;
  for (int t = 1; t <= T; ++t) {
    w_[t - 1] = std::exp(-rho * (t - 1));
    total += w_[t - 1];
  }
  for (double& w : w_) w /= total;
}

double WeightSchedule::weight(int t) const {
  if (t < 1 || t > T()) {
    throw std::out_of_range("weight schedule: index " + std::to_string(t) + " out of range");
  }
  return w_[t - 1];
}

}  // namespace driftlab
