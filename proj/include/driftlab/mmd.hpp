#pragma once

#include <span>
#include <string>
#include <string_view>

#include "driftlab/batch.hpp"

namespace driftlab {

enum class KernelFamily { kRbf, kLaplace, kRationalQuadratic };
enum class BandwidthMode { kFixed, kMedianHeuristic };
enum class Estimator { kV, kU };

std::string_view kernel_name(KernelFamily f) noexcept;
KernelFamily parse_kernel(std::string_view name);
std::string_view estimator_name(Estimator e) noexcept;
Estimator parse_estimator(std::string_view name);

/// rbf:                exp(-gamma ||x - y||^2)
/// laplace:            exp(-gamma ||x - y||_1)
/// rational-quadratic: (1 + gamma ||x - y||^2 / a)^(-a), shape a fixed at 1
struct KernelSpec {
  KernelFamily family = KernelFamily::kRbf;
  double gamma = 1.0;
  BandwidthMode mode = BandwidthMode::kMedianHeuristic;
};

inline constexpr double kRationalQuadraticShape = 1.0;

double kernel_eval(const KernelSpec& k, std::span<const double> x, std::span<const double> y);

struct MmdEstimate {
  double value = 0.0;
  Estimator estimator = Estimator::kV;
  Eigen::Index n = 0;
  Eigen::Index m = 0;
  KernelSpec kernel;  // bandwidth resolved
  bool bandwidth_fallback = false;
};

struct BandwidthChoice {
  double gamma = 1.0;
  bool fallback = false;  // pooled points coincide; gamma forced to 1
};

/// Largest pooled set used for the pairwise median; bigger sets are thinned
/// by a fixed stride.
inline constexpr Eigen::Index kMedianMaxPoints = 1000;

/// rbf / rational-quadratic: gamma = 1 / (2 median(||.||_2)^2).
/// laplace: gamma = 1 / median(||.||_1).
BandwidthChoice median_heuristic(const Matrix& x, const Matrix& y, KernelFamily family);

/// Returns k with gamma filled in when mode is median-heuristic.
KernelSpec resolve_bandwidth(const KernelSpec& k, const Matrix& x, const Matrix& y,
                             bool* fallback = nullptr);

/// V-statistic: all pairs including i = j. U-statistic: within-set sums
/// exclude the diagonal and use 1/(N(N-1)). Requires N, M >= 2 for U.
MmdEstimate mmd_estimate(const Matrix& x, const Matrix& y, const KernelSpec& k,
                         Estimator estimator = Estimator::kV);

/// d(estimate)/d(x) with y and the (already resolved) bandwidth held fixed.
Matrix mmd_gradient_x(const Matrix& x, const Matrix& y, const KernelSpec& resolved,
                      Estimator estimator = Estimator::kV);

}  // namespace driftlab
