#pragma once

#include <vector>

namespace driftlab {

enum class SigmaMode {
  kBeta,       // sigma_t^2 = beta_t
  kPosterior,  // sigma_t^2 = beta_t (1 - abar_{t-1}) / (1 - abar_t)
};

/// Per-timestep scalars for t = 1..T. Sequences are stored 0-based
/// (index t-1) and accessed through the 1-based accessors.
class NoiseSchedule {
 public:
  NoiseSchedule(std::vector<double> betas, SigmaMode sigma_mode = SigmaMode::kBeta);

  int T() const noexcept { return static_cast<int>(beta_.size()); }
  double beta(int t) const;
  double alpha(int t) const;
  /// abar_0 = 1 by convention.
  double alpha_bar(int t) const;
  /// Backward standard deviation sigma_t.
  double sigma(int t) const;
  SigmaMode sigma_mode() const noexcept { return sigma_mode_; }

  const std::vector<double>& betas() const noexcept { return beta_; }

 private:
  void check(int t) const;

  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma_;
  SigmaMode sigma_mode_;
};

/// Linear beta from beta_start (t=1) to beta_end (t=T).
NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end,
                                   SigmaMode sigma_mode = SigmaMode::kBeta);

/// Endpoints used when a config leaves them unset: the usual 1e-4 .. 0.02
/// at T = 1000, scaled by 1000/T so that abar_T stays near zero for short
/// chains.
struct LinearEndpoints {
  double beta_start;
  double beta_end;
};
LinearEndpoints default_linear_endpoints(int T);

/// Exponential weights w_t ~ exp(rho (T - t)) over t = 1..T, summing to 1.
class WeightSchedule {
 public:
  WeightSchedule(double rho, int T);

  double rho() const noexcept { return rho_; }
  int T() const noexcept { return static_cast<int>(w_.size()); }
  double weight(int t) const;
  const std::vector<double>& weights() const noexcept { return w_; }

 private:
  double rho_;
  std::vector<double> w_;
};

inline WeightSchedule make_weight_schedule(double rho, int T) { return WeightSchedule(rho, T); }

}  // namespace driftlab
