#include "driftlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "driftlab/forward.hpp"

namespace driftlab::oracle {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2 pi)

Mat identity(Eigen::Index k) { return Mat::Identity(k, k); }

Mat symmetrize(const Mat& m) { return 0.5 * (m + m.transpose()); }

void check_t(const GaussChain& chain, int t, int lo, int hi, const char* what) {
  if (t < lo || t > hi) {
    throw std::out_of_range(std::string(what) + ": t = " + std::to_string(t) + " outside [" +
                            std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  (void)chain;
}

// tr(C^{-1} S), x^T C^{-1} x and ln det C through one Cholesky factor.
struct SpdSolver {
  Eigen::LLT<Mat> llt;
  explicit SpdSolver(const Mat& c) : llt(c) {
    if (llt.info() != Eigen::Success) throw std::invalid_argument("covariance not SPD");
  }
  double log_det() const { return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum(); }
  double trace_solve(const Mat& s) const { return llt.solve(s).trace(); }
  double quad(const Vector& v) const { return v.dot(llt.solve(v)); }
};

}  // namespace

Gaussian::Gaussian(Vector mean, Mat cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  const Eigen::Index k = mean_.size();
  if (k < 1 || cov_.rows() != k || cov_.cols() != k) {
    throw std::invalid_argument("Gaussian: mean/covariance dimension mismatch");
  }
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if ((cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
    throw std::invalid_argument("Gaussian: covariance not symmetric");
  }
  cov_ = symmetrize(cov_);
  Eigen::LLT<Mat> llt(cov_);
  if (llt.info() != Eigen::Success) throw std::invalid_argument("Gaussian: covariance not SPD");
  chol_ = llt.matrixL();
  if ((chol_.diagonal().array() <= 0.0).any()) {
    throw std::invalid_argument("Gaussian: covariance not SPD");
  }
}

Gaussian Gaussian::standard(Eigen::Index k) { return Gaussian(Vector::Zero(k), identity(k)); }

double Gaussian::log_det() const { return 2.0 * chol_.diagonal().array().log().sum(); }

double Gaussian::entropy() const {
  return 0.5 * (static_cast<double>(dim()) * (kLog2Pi + 1.0) + log_det());
}

Matrix Gaussian::sample(Eigen::Index n, const SeedTree& seeds) const {
  const Matrix z = standard_normal(n, dim(), seeds);
  Matrix out = z * chol_.transpose();
  out.rowwise() += mean_.transpose();
  return out;
}

double gaussian_kl(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) throw std::invalid_argument("gaussian_kl: dimension mismatch");
  const SpdSolver sq(q.cov());
  const Vector dm = q.mean() - p.mean();
  const double kl = 0.5 * (sq.trace_solve(p.cov()) + sq.quad(dm) - static_cast<double>(p.dim()) +
                           q.log_det() - p.log_det());
  return std::max(0.0, kl);
}

double cross_entropy(const Gaussian& p, const Gaussian& q) {
  if (p.dim() != q.dim()) throw std::invalid_argument("cross_entropy: dimension mismatch");
  const SpdSolver sq(q.cov());
  const Vector dm = p.mean() - q.mean();
  return 0.5 * (static_cast<double>(p.dim()) * kLog2Pi + q.log_det() + sq.trace_solve(p.cov()) +
                sq.quad(dm));
}

GaussChain::GaussChain(NoiseSchedule sched, Gaussian data, Gaussian prior,
                       std::vector<AffineKernel> steps)
    : sched_(std::move(sched)), data_(std::move(data)), prior_(std::move(prior)),
      steps_(std::move(steps)) {
  const Eigen::Index k = data_.dim();
  if (prior_.dim() != k) throw std::invalid_argument("GaussChain: prior dimension mismatch");
  if (static_cast<int>(steps_.size()) != sched_.T()) {
    throw std::invalid_argument("GaussChain: need exactly T backward steps");
  }
  for (const AffineKernel& s : steps_) {
    if (s.A.rows() != k || s.A.cols() != k || s.b.size() != k || s.cov.rows() != k ||
        s.cov.cols() != k) {
      throw std::invalid_argument("GaussChain: step dimension mismatch");
    }
  }
}

const AffineKernel& GaussChain::step(int t) const {
  check_t(*this, t, 1, T(), "GaussChain::step");
  return steps_[static_cast<std::size_t>(t - 1)];
}

void GaussChain::scale_A(int t, double factor) {
  check_t(*this, t, 1, T(), "scale_A");
  steps_[static_cast<std::size_t>(t - 1)].A *= factor;
}

void GaussChain::shift_b(int t, const Vector& delta) {
  check_t(*this, t, 1, T(), "shift_b");
  if (delta.size() != dim()) throw std::invalid_argument("shift_b: dimension mismatch");
  steps_[static_cast<std::size_t>(t - 1)].b += delta;
}

void GaussChain::inflate_sigma(int t, double factor) {
  check_t(*this, t, 1, T(), "inflate_sigma");
  if (!(factor > 0.0)) throw std::invalid_argument("inflate_sigma: factor must be > 0");
  steps_[static_cast<std::size_t>(t - 1)].cov *= factor * factor;
}

namespace {

Gaussian forward_marginal(const NoiseSchedule& sched, const Gaussian& data, int t) {
  if (t == 0) return data;
  const double ab = sched.alpha_bar(t);
  const Eigen::Index k = data.dim();
  return Gaussian(std::sqrt(ab) * data.mean(), ab * data.cov() + (1.0 - ab) * identity(k));
}

AffineKernel forward_posterior(const NoiseSchedule& sched, const Gaussian& data, int t) {
  const Gaussian prev = forward_marginal(sched, data, t - 1);
  const Gaussian cur = forward_marginal(sched, data, t);
  const double sa = std::sqrt(sched.alpha(t));
  const SpdSolver s(cur.cov());
  // A = sqrt(alpha) S_{t-1} S_t^{-1}; S_t symmetric so solve on the transpose.
  const Mat cross = sa * prev.cov();
  const Mat A = s.llt.solve(cross.transpose()).transpose();
  AffineKernel out;
  out.A = A;
  out.b = prev.mean() - A * cur.mean();
  out.cov = symmetrize(prev.cov() - A * cross.transpose());
  return out;
}

}  // namespace

GaussChain GaussChain::perfect(const NoiseSchedule& sched, const Gaussian& data, bool exact_terminal) {
  std::vector<AffineKernel> steps;
  steps.reserve(static_cast<std::size_t>(sched.T()));
  for (int t = 1; t <= sched.T(); ++t) steps.push_back(forward_posterior(sched, data, t));
  Gaussian prior = exact_terminal ? forward_marginal(sched, data, sched.T())
                                  : Gaussian::standard(data.dim());
  return GaussChain(sched, data, std::move(prior), std::move(steps));
}

GaussChain GaussChain::ddpm(const NoiseSchedule& sched, const Gaussian& data) {
  const Eigen::Index k = data.dim();
  std::vector<AffineKernel> steps;
  steps.reserve(static_cast<std::size_t>(sched.T()));
  for (int t = 1; t <= sched.T(); ++t) {
    const double ab = sched.alpha_bar(t);
    const Gaussian cur = forward_marginal(sched, data, t);
    const SpdSolver s(cur.cov());
    const Mat G = std::sqrt(1.0 - ab) * s.llt.solve(identity(k));
    const Vector g = -std::sqrt(ab) * (G * data.mean());
    const double c = sched.beta(t) / std::sqrt(1.0 - ab);
    const double inv_sa = 1.0 / std::sqrt(sched.alpha(t));
    AffineKernel step;
    step.A = inv_sa * (identity(k) - c * G);
    step.b = -inv_sa * c * g;
    const double sigma = sched.sigma(t);
    step.cov = sigma * sigma * identity(k);
    steps.push_back(std::move(step));
  }
  return GaussChain(sched, data, Gaussian::standard(k), std::move(steps));
}

Gaussian q_marginal(const GaussChain& chain, int t) {
  check_t(chain, t, 0, chain.T(), "q_marginal");
  return forward_marginal(chain.schedule(), chain.data(), t);
}

AffineKernel q_posterior_coeffs(const GaussChain& chain, int t) {
  check_t(chain, t, 1, chain.T(), "q_posterior_coeffs");
  return forward_posterior(chain.schedule(), chain.data(), t);
}

std::vector<Gaussian> p_marginals(const GaussChain& chain) {
  const int T = chain.T();
  std::vector<Gaussian> out(static_cast<std::size_t>(T + 1), chain.prior());
  for (int t = T; t >= 1; --t) {
    const Gaussian& cur = out[static_cast<std::size_t>(t)];
    const AffineKernel& s = chain.step(t);
    out[static_cast<std::size_t>(t - 1)] =
        Gaussian(s.A * cur.mean() + s.b, symmetrize(s.A * cur.cov() * s.A.transpose() + s.cov));
  }
  return out;
}

Gaussian p_marginal(const GaussChain& chain, int t) {
  check_t(chain, t, 0, chain.T(), "p_marginal");
  Gaussian cur = chain.prior();
  for (int k = chain.T(); k > t; --k) {
    const AffineKernel& s = chain.step(k);
    cur = Gaussian(s.A * cur.mean() + s.b, symmetrize(s.A * cur.cov() * s.A.transpose() + s.cov));
  }
  return cur;
}

double expected_conditional_kl(const AffineKernel& p, const AffineKernel& q, const Gaussian& x) {
  const Eigen::Index k = x.dim();
  const SpdSolver sq(q.cov);
  const SpdSolver sp(p.cov);
  const Mat D = q.A - p.A;
  const Vector d = q.b - p.b;
  const Vector mean_gap = D * x.mean() + d;
  const double quad = sq.quad(mean_gap) + sq.trace_solve(D * x.cov() * D.transpose());
  const double kl = 0.5 * (sq.trace_solve(p.cov) - static_cast<double>(k) + sq.log_det() -
                           sp.log_det() + quad);
  return std::max(0.0, kl);
}

double modular_error(const GaussChain& chain, int t) {
  check_t(chain, t, 1, chain.T(), "modular_error");
  return expected_conditional_kl(chain.step(t), q_posterior_coeffs(chain, t), p_marginal(chain, t));
}

double cumulative_error(const GaussChain& chain, int t) {
  check_t(chain, t, 1, chain.T() + 1, "cumulative_error");
  if (t == chain.T() + 1) return 0.0;
  return gaussian_kl(p_marginal(chain, t - 1), q_marginal(chain, t - 1));
}

namespace {

double eps_moment(const GaussChain& chain, int t, const Gaussian& pt) {
  const NoiseSchedule& sched = chain.schedule();
  const AffineKernel& s = chain.step(t);
  const double sa = std::sqrt(sched.alpha(t));
  const double c = std::sqrt(1.0 - sched.alpha_bar(t)) / sched.beta(t);
  const Mat D = c * (identity(chain.dim()) - sa * s.A);
  const Vector d = -c * sa * s.b;
  const Vector m = D * pt.mean() + d;
  return m.squaredNorm() + (D * pt.cov() * D.transpose()).trace();
}

}  // namespace

double implied_eps_second_moment(const GaussChain& chain, int t) {
  check_t(chain, t, 1, chain.T(), "implied_eps_second_moment");
  return eps_moment(chain, t, p_marginal(chain, t));
}

std::vector<PropagationRecord> propagation_report(const GaussChain& chain,
                                                  const AssumptionThresholds& thr) {
  const int T = chain.T();
  const auto pm = p_marginals(chain);
  std::vector<double> cumu(static_cast<std::size_t>(T + 2), 0.0);
  for (int t = 1; t <= T; ++t) {
    cumu[static_cast<std::size_t>(t)] =
        gaussian_kl(pm[static_cast<std::size_t>(t - 1)], q_marginal(chain, t - 1));
  }
  const double K = static_cast<double>(chain.dim());
  std::vector<PropagationRecord> out;
  out.reserve(static_cast<std::size_t>(T));
  for (int t = T; t >= 1; --t) {
    const Gaussian& pt = pm[static_cast<std::size_t>(t)];
    PropagationRecord r;
    r.t = t;
    r.e_cumu = cumu[static_cast<std::size_t>(t)];
    r.e_mod = expected_conditional_kl(chain.step(t), q_posterior_coeffs(chain, t), pt);
    const double next = cumu[static_cast<std::size_t>(t + 1)];
    r.slack = r.e_cumu - next - r.e_mod;
    if (next > 1e-12) r.mu_eff = (r.e_cumu - r.e_mod) / next;
    r.entropy = pt.entropy();
    r.flag_entropy = pm[static_cast<std::size_t>(t - 1)].entropy() <= r.entropy + thr.entropy_tol;
    r.eps_second_moment = eps_moment(chain, t, pt);
    r.flag_eps = std::abs(r.eps_second_moment - K) <= thr.eps_rel_tol * K;
    out.push_back(std::move(r));
  }
  return out;
}

bool assumptions_hold(const std::vector<PropagationRecord>& report) {
  return std::all_of(report.begin(), report.end(),
                     [](const PropagationRecord& r) { return r.flag_entropy && r.flag_eps; });
}

RecursionTerms recursion_identity_check(const GaussChain& chain, int t) {
  check_t(chain, t, 1, chain.T(), "recursion_identity_check");
  const NoiseSchedule& sched = chain.schedule();
  const Eigen::Index k = chain.dim();
  const double K = static_cast<double>(k);
  const Gaussian pt = p_marginal(chain, t);
  const AffineKernel& s = chain.step(t);
  const Gaussian pprev(s.A * pt.mean() + s.b, symmetrize(s.A * pt.cov() * s.A.transpose() + s.cov));

  RecursionTerms r;
  r.cross_prev = cross_entropy(pprev, q_marginal(chain, t - 1));
  r.cross_cur = cross_entropy(pt, q_marginal(chain, t));
  r.e_mod = expected_conditional_kl(s, q_posterior_coeffs(chain, t), pt);

  // E[ln p(x_{t-1} | x_t)] is minus the conditional entropy.
  const SpdSolver sc(s.cov);
  const double e_log_p = -0.5 * (K * (kLog2Pi + 1.0) + sc.log_det());
  // x_t - sqrt(alpha) x_{t-1} = (I - sqrt(alpha) A) x_t - sqrt(alpha) b - sqrt(alpha) eta.
  const double beta = sched.beta(t);
  const double alpha = sched.alpha(t);
  const double sa = std::sqrt(alpha);
  const Mat R = identity(k) - sa * s.A;
  const Vector rm = R * pt.mean() - sa * s.b;
  const double e_sq = rm.squaredNorm() + (R * pt.cov() * R.transpose()).trace() + alpha * s.cov.trace();
  const double e_log_q = -0.5 * K * (kLog2Pi + std::log(beta)) - e_sq / (2.0 * beta);
  r.i_t = e_log_q - e_log_p;
  r.residual = r.cross_prev - r.cross_cur - r.e_mod - r.i_t;
  return r;
}

BoundsRecord bounds_check(const GaussChain& chain, int t, const KernelSpec& kernel, Eigen::Index n,
                          Eigen::Index m, const SeedTree& seeds, int resamples) {
  check_t(chain, t, 1, chain.T(), "bounds_check");
  if (n < 2 || m < 2) throw std::invalid_argument("bounds_check: need N, M >= 2");
  BoundsRecord r;
  r.kl_exact = cumulative_error(chain, t);
  const Matrix x = p_marginal(chain, t - 1).sample(n, seeds.child(1));
  const Matrix y = q_marginal(chain, t - 1).sample(m, seeds.child(2));
  const KernelSpec resolved = resolve_bandwidth(kernel, x, y);
  r.gamma = resolved.gamma;
  r.mmd_est = mmd_estimate(x, y, resolved, Estimator::kV).value;
  r.lower = r.mmd_est / 4.0;
  r.upper = r.mmd_est;
  if (resamples >= 2) {
    const SeedTree rs = seeds.child(3);
    std::vector<double> vals;
    vals.reserve(static_cast<std::size_t>(resamples));
    Matrix xb(n, x.cols());
    Matrix yb(m, y.cols());
    for (int b = 0; b < resamples; ++b) {
      RandomStream s = rs.stream(static_cast<std::uint64_t>(b));
      for (Eigen::Index i = 0; i < n; ++i) xb.row(i) = x.row(s.uniform_int(0, n - 1));
      for (Eigen::Index i = 0; i < m; ++i) yb.row(i) = y.row(s.uniform_int(0, m - 1));
      vals.push_back(mmd_estimate(xb, yb, resolved, Estimator::kV).value);
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double ss = 0.0;
    for (double v : vals) ss += (v - mean) * (v - mean);
    r.mmd_se = std::sqrt(ss / static_cast<double>(vals.size() - 1));
  }
  return r;
}

LinearGaussianPredictor::LinearGaussianPredictor(NoiseSchedule sched, Gaussian data)
    : sched_(std::move(sched)), data_(std::move(data)) {}

Matrix LinearGaussianPredictor::predict(const Matrix& x, int t) const {
  if (x.cols() != data_.dim()) throw std::invalid_argument("LinearGaussianPredictor: dim mismatch");
  const Gaussian cur = forward_marginal(sched_, data_, t);
  const double ab = sched_.alpha_bar(t);
  Matrix centered = x;
  centered.rowwise() -= (std::sqrt(ab) * data_.mean()).transpose();
  const SpdSolver s(cur.cov());
  // rows: sqrt(1 - abar) S_t^{-1} (x - sqrt(abar) m0)
  const Mat sol = s.llt.solve(centered.transpose());
  return std::sqrt(1.0 - ab) * Matrix(sol.transpose());
}

}  // namespace driftlab::oracle
