#include "driftlab/mmd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "driftlab/counters.hpp"

namespace driftlab {

namespace {

// Kernel values lie in (0, 1]. Sums are accumulated as exact integers on a
// 2^-62 grid, which makes every kernel sum independent of summation order:
// mmd(X, Y) == mmd(Y, X) bit for bit and mmd(X, X) == 0.
constexpr double kFixedScale = 0x1.0p62;
using Accum = __int128;

inline Accum to_fixed(double v) { return static_cast<Accum>(std::llround(v * kFixedScale)); }
inline double from_fixed(Accum a) {
  // Split to keep the conversion exact for sums beyond 2^64.
  const auto hi = static_cast<std::int64_t>(a >> 62);
  const auto lo = static_cast<std::uint64_t>(a & ((Accum{1} << 62) - 1));
  return static_cast<double>(hi) + static_cast<double>(lo) / kFixedScale;
}

struct KernelFn {
  KernelFamily family;
  double gamma;

  double operator()(const double* x, const double* y, Eigen::Index k) const {
    switch (family) {
      case KernelFamily::kRbf: {
        double d2 = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
          const double d = x[i] - y[i];
          d2 += d * d;
        }
        return std::exp(-gamma * d2);
      }
      case KernelFamily::kLaplace: {
        double d1 = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) d1 += std::abs(x[i] - y[i]);
        return std::exp(-gamma * d1);
      }
      case KernelFamily::kRationalQuadratic: {
        double d2 = 0.0;
        for (Eigen::Index i = 0; i < k; ++i) {
          const double d = x[i] - y[i];
          d2 += d * d;
        }
        constexpr double a = kRationalQuadraticShape;
        return std::pow(1.0 + gamma * d2 / a, -a);
      }
    }
    return 0.0;
  }

  // Adds scale * grad_x k(x, y) into out.
  void add_grad(const double* x, const double* y, Eigen::Index k, double scale, double* out) const {
    const double kv = (*this)(x, y, k);
    switch (family) {
      case KernelFamily::kRbf:
        for (Eigen::Index i = 0; i < k; ++i) out[i] += scale * (-2.0 * gamma * (x[i] - y[i]) * kv);
        break;
      case KernelFamily::kLaplace:
        for (Eigen::Index i = 0; i < k; ++i) {
          const double d = x[i] - y[i];
          const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          out[i] += scale * (-gamma * sgn * kv);
        }
        break;
      case KernelFamily::kRationalQuadratic: {
        constexpr double a = kRationalQuadraticShape;
        const double f = std::pow(kv, (a + 1.0) / a);
        for (Eigen::Index i = 0; i < k; ++i) out[i] += scale * (-2.0 * gamma * (x[i] - y[i]) * f);
        break;
      }
    }
  }
};

void check_gamma(const KernelSpec& k) {
  if (!(k.gamma > 0.0) || !std::isfinite(k.gamma)) {
    throw std::invalid_argument("kernel: bandwidth gamma must be finite and > 0");
  }
}

// Sum over all ordered pairs (i, j) of one set, split into diagonal and
// off-diagonal parts.
struct WithinSums {
  Accum diag = 0;
  Accum off = 0;
};

WithinSums within_sums(const Matrix& x, const KernelFn& kf) {
  WithinSums s;
  const Eigen::Index n = x.rows();
  const Eigen::Index k = x.cols();
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    s.diag += to_fixed(kf(xi, xi, k));
    for (Eigen::Index j = i + 1; j < n; ++j) s.off += 2 * to_fixed(kf(xi, x.row(j).data(), k));
  }
  counters().kernel_evals += static_cast<std::uint64_t>(n * (n + 1) / 2);
  return s;
}

Accum cross_sum(const Matrix& x, const Matrix& y, const KernelFn& kf) {
  Accum s = 0;
  const Eigen::Index k = x.cols();
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double* xi = x.row(i).data();
    for (Eigen::Index j = 0; j < y.rows(); ++j) s += to_fixed(kf(xi, y.row(j).data(), k));
  }
  counters().kernel_evals += static_cast<std::uint64_t>(x.rows() * y.rows());
  return s;
}

double pairwise_median(const Matrix& pooled, bool l1) {
  const Eigen::Index p = pooled.rows();
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(p * (p - 1) / 2));
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = i + 1; j < p; ++j) {
      const auto diff = pooled.row(i) - pooled.row(j);
      d.push_back(l1 ? diff.cwiseAbs().sum() : diff.norm());
    }
  }
  const std::size_t mid = d.size() / 2;
  std::nth_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid), d.end());
  const double upper = d[mid];
  if (d.size() % 2 == 1) return upper;
  const double lower = *std::max_element(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

}  // namespace

std::string_view kernel_name(KernelFamily f) noexcept {
  switch (f) {
    case KernelFamily::kRbf: return "rbf";
    case KernelFamily::kLaplace: return "laplace";
    case KernelFamily::kRationalQuadratic: return "rq";
  }
  return "unknown";
}

KernelFamily parse_kernel(std::string_view name) {
  if (name == "rbf" || name == "gaussian") return KernelFamily::kRbf;
  if (name == "laplace") return KernelFamily::kLaplace;
  if (name == "rq" || name == "rational-quadratic") return KernelFamily::kRationalQuadratic;
  throw std::invalid_argument("unknown kernel family '" + std::string(name) + "'");
}

std::string_view estimator_name(Estimator e) noexcept { return e == Estimator::kV ? "v" : "u"; }

Estimator parse_estimator(std::string_view name) {
  if (name == "v") return Estimator::kV;
  if (name == "u") return Estimator::kU;
  throw std::invalid_argument("unknown estimator '" + std::string(name) + "' (expected v or u)");
}

double kernel_eval(const KernelSpec& k, std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("kernel_eval: dimension mismatch");
  check_gamma(k);
  ++counters().kernel_evals;
  return KernelFn{k.family, k.gamma}(x.data(), y.data(), static_cast<Eigen::Index>(x.size()));
}

BandwidthChoice median_heuristic(const Matrix& x, const Matrix& y, KernelFamily family) {
  if (x.cols() != y.cols()) throw std::invalid_argument("median_heuristic: dimension mismatch");
  const Eigen::Index total = x.rows() + y.rows();
  if (total < 2) throw std::invalid_argument("median_heuristic: need at least two points");
  const Eigen::Index keep = std::min(total, kMedianMaxPoints);
  Matrix pooled(keep, x.cols());
  for (Eigen::Index r = 0; r < keep; ++r) {
    const Eigen::Index src = r * total / keep;
    pooled.row(r) = src < x.rows() ? x.row(src) : y.row(src - x.rows());
  }
  const bool l1 = family == KernelFamily::kLaplace;
  const double med = pairwise_median(pooled, l1);
  if (!(med > 0.0)) return {1.0, true};
  return {l1 ? 1.0 / med : 1.0 / (2.0 * med * med), false};
}

KernelSpec resolve_bandwidth(const KernelSpec& k, const Matrix& x, const Matrix& y, bool* fallback) {
  KernelSpec out = k;
  if (fallback) *fallback = false;
  if (k.mode == BandwidthMode::kMedianHeuristic) {
    const BandwidthChoice bc = median_heuristic(x, y, k.family);
    out.gamma = bc.gamma;
    if (fallback) *fallback = bc.fallback;
  }
  out.mode = BandwidthMode::kFixed;
  check_gamma(out);
  return out;
}

MmdEstimate mmd_estimate(const Matrix& x, const Matrix& y, const KernelSpec& k, Estimator estimator) {
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd_estimate: dimension mismatch");
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  if (n < 1 || m < 1) throw std::invalid_argument("mmd_estimate: empty sample set");
  if (estimator == Estimator::kU && (n < 2 || m < 2)) {
    throw std::invalid_argument("mmd_estimate: u-statistic needs at least 2 samples per set");
  }
  MmdEstimate est;
  est.estimator = estimator;
  est.n = n;
  est.m = m;
  est.kernel = resolve_bandwidth(k, x, y, &est.bandwidth_fallback);
  const KernelFn kf{est.kernel.family, est.kernel.gamma};

  const WithinSums sx = within_sums(x, kf);
  const WithinSums sy = within_sums(y, kf);
  const double sxy = from_fixed(cross_sum(x, y, kf));
  const double dn = static_cast<double>(n);
  const double dm = static_cast<double>(m);
  if (estimator == Estimator::kV) {
    est.value = from_fixed(sx.diag + sx.off) / (dn * dn) + from_fixed(sy.diag + sy.off) / (dm * dm) -
                2.0 * (sxy / (dn * dm));
  } else {
    est.value = from_fixed(sx.off) / (dn * (dn - 1.0)) + from_fixed(sy.off) / (dm * (dm - 1.0)) -
                2.0 * (sxy / (dn * dm));
  }
  return est;
}

Matrix mmd_gradient_x(const Matrix& x, const Matrix& y, const KernelSpec& resolved,
                      Estimator estimator) {
  if (x.cols() != y.cols()) throw std::invalid_argument("mmd_gradient_x: dimension mismatch");
  if (resolved.mode != BandwidthMode::kFixed) {
    throw std::invalid_argument("mmd_gradient_x: bandwidth must be resolved first");
  }
  check_gamma(resolved);
  const Eigen::Index n = x.rows();
  const Eigen::Index m = y.rows();
  const Eigen::Index k = x.cols();
  if (estimator == Estimator::kU && n < 2) {
    throw std::invalid_argument("mmd_gradient_x: u-statistic needs at least 2 samples");
  }
  const KernelFn kf{resolved.family, resolved.gamma};
  const double dn = static_cast<double>(n);
  const double within_scale =
      estimator == Estimator::kV ? 2.0 / (dn * dn) : 2.0 / (dn * (dn - 1.0));
  const double cross_scale = -2.0 / (dn * static_cast<double>(m));
  Matrix g = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double* xi = x.row(i).data();
    double* gi = g.row(i).data();
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;  // zero-distance gradient vanishes; excluded for U anyway
      kf.add_grad(xi, x.row(j).data(), k, within_scale, gi);
    }
    for (Eigen::Index j = 0; j < m; ++j) kf.add_grad(xi, y.row(j).data(), k, cross_scale, gi);
  }
  counters().kernel_evals += static_cast<std::uint64_t>(n * (n - 1) + n * m);
  return g;
}

}  // namespace driftlab
