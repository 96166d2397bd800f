#pragma once

#include <optional>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/eps_net.hpp"
#include "driftlab/mmd.hpp"
#include "driftlab/random.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab::oracle {

using Mat = Eigen::MatrixXd;

/// Multivariate normal with a symmetric positive-definite covariance.
class Gaussian {
 public:
  Gaussian(Vector mean, Mat cov);
  static Gaussian standard(Eigen::Index k);

  const Vector& mean() const noexcept { return mean_; }
  const Mat& cov() const noexcept { return cov_; }
  Eigen::Index dim() const noexcept { return mean_.size(); }

  /// Differential entropy in nats.
  double entropy() const;
  double log_det() const;

  /// n x k draws, row i from seeds.stream(i).
  Matrix sample(Eigen::Index n, const SeedTree& seeds) const;

 private:
  Vector mean_;
  Mat cov_;
  Mat chol_;  // lower Cholesky factor
};

double gaussian_kl(const Gaussian& p, const Gaussian& q);

/// E_p[-ln q(x)].
double cross_entropy(const Gaussian& p, const Gaussian& q);

/// Gaussian conditional x_{t-1} | x_t ~ N(A x_t + b, cov).
struct AffineKernel {
  Mat A;
  Vector b;
  Mat cov;
};

/// Linear-Gaussian forward/backward pair. steps[t-1] defines p(x_{t-1} | x_t).
class GaussChain {
 public:
  GaussChain(NoiseSchedule sched, Gaussian data, Gaussian prior, std::vector<AffineKernel> steps);

  /// Backward conditionals equal to the exact forward posteriors. With
  /// exact_terminal the chain starts from q(x_T) instead of N(0, I); for a
  /// finite chain that is the only start that makes p and q agree at T.
  static GaussChain perfect(const NoiseSchedule& sched, const Gaussian& data,
                            bool exact_terminal = true);

  /// DDPM-form chain: mean from the reparameterised posterior mean with the
  /// noise predictor that is optimal under q, covariance sigma_t^2 I, prior
  /// N(0, I).
  static GaussChain ddpm(const NoiseSchedule& sched, const Gaussian& data);

  const NoiseSchedule& schedule() const noexcept { return sched_; }
  const Gaussian& data() const noexcept { return data_; }
  const Gaussian& prior() const noexcept { return prior_; }
  int T() const noexcept { return sched_.T(); }
  Eigen::Index dim() const noexcept { return data_.dim(); }
  const AffineKernel& step(int t) const;

  void scale_A(int t, double factor);
  void shift_b(int t, const Vector& delta);
  void inflate_sigma(int t, double factor);

 private:
  NoiseSchedule sched_;
  Gaussian data_;
  Gaussian prior_;
  std::vector<AffineKernel> steps_;
};

/// q(x_t), t in [0, T].
Gaussian q_marginal(const GaussChain& chain, int t);

/// q(x_{t-1} | x_t), t in [1, T].
AffineKernel q_posterior_coeffs(const GaussChain& chain, int t);

/// p(x_t), t in [0, T].
Gaussian p_marginal(const GaussChain& chain, int t);

/// All backward marginals p(x_0) .. p(x_T) in one pass.
std::vector<Gaussian> p_marginals(const GaussChain& chain);

/// E_{x ~ N(m, P)}[KL(N(A x + b, C) || N(A2 x + b2, C2))].
double expected_conditional_kl(const AffineKernel& p, const AffineKernel& q, const Gaussian& x);

double modular_error(const GaussChain& chain, int t);

/// KL(p(x_{t-1}) || q(x_{t-1})) for t in [1, T]; t = T + 1 gives 0.
double cumulative_error(const GaussChain& chain, int t);

/// E_{x ~ p(x_t)} ||eps_hat(x)||^2 where eps_hat is the noise estimate
/// implied by the chain's mean map through the reparameterised mean.
double implied_eps_second_moment(const GaussChain& chain, int t);

struct AssumptionThresholds {
  double entropy_tol = 1e-12;
  double eps_rel_tol = 0.01;
};

struct PropagationRecord {
  int t = 0;
  double e_cumu = 0.0;
  double e_mod = 0.0;
  double slack = 0.0;               // e_cumu(t) - e_cumu(t+1) - e_mod(t)
  std::optional<double> mu_eff;     // (e_cumu(t) - e_mod(t)) / e_cumu(t+1)
  double entropy = 0.0;             // H(p(x_t))
  double eps_second_moment = 0.0;
  bool flag_entropy = false;        // H(p(x_{t-1})) <= H(p(x_t)) + tol
  bool flag_eps = false;            // |E||eps_hat||^2 - K| <= tol K
};

/// Records for t = T down to 1.
std::vector<PropagationRecord> propagation_report(const GaussChain& chain,
                                                  const AssumptionThresholds& thr = {});

/// True when every record carries both assumption flags.
bool assumptions_hold(const std::vector<PropagationRecord>& report);

struct RecursionTerms {
  double cross_prev = 0.0;  // E_{p(x_{t-1})}[-ln q(x_{t-1})]
  double cross_cur = 0.0;   // E_{p(x_t)}[-ln q(x_t)]
  double e_mod = 0.0;
  double i_t = 0.0;         // E[ln q(x_t | x_{t-1}) - ln p(x_{t-1} | x_t)]
  double residual = 0.0;    // cross_prev - cross_cur - e_mod - i_t
};

RecursionTerms recursion_identity_check(const GaussChain& chain, int t);

struct BoundsRecord {
  double kl_exact = 0.0;
  double mmd_est = 0.0;
  double lower = 0.0;   // mmd / 4
  double upper = 0.0;   // mmd
  double mmd_se = 0.0;  // bootstrap-resampling standard error of mmd_est
  double gamma = 0.0;
};

inline constexpr Eigen::Index kDefaultSampleCount = 1000;

/// Samples p(x_{t-1}) and q(x_{t-1}), estimates MMD, and pairs it with the
/// exact cumulative error.
BoundsRecord bounds_check(const GaussChain& chain, int t, const KernelSpec& kernel,
                          Eigen::Index n = kDefaultSampleCount, Eigen::Index m = kDefaultSampleCount,
                          const SeedTree& seeds = SeedTree(0), int resamples = 10);

/// Noise predictor that is exactly optimal under q for Gaussian data:
/// eps_hat(x, t) = sqrt(1 - abar_t) Sigma_t^{-1} (x - sqrt(abar_t) m0).
class LinearGaussianPredictor final : public NoisePredictor {
 public:
  LinearGaussianPredictor(NoiseSchedule sched, Gaussian data);
  Matrix predict(const Matrix& x, int t) const override;
  Eigen::Index dim() const override { return data_.dim(); }

 private:
  NoiseSchedule sched_;
  Gaussian data_;
};

}  // namespace driftlab::oracle
