#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "driftlab/dataset.hpp"
#include "driftlab/mmd.hpp"
#include "driftlab/oracle.hpp"
#include "driftlab/sampler.hpp"
#include "driftlab/trainer.hpp"

namespace driftlab {

/// Schema tags written as the first line of every CSV.
inline constexpr std::string_view kDriftSchema = "drift/1";
inline constexpr std::string_view kSweepSchema = "sweep-l/1";
inline constexpr std::string_view kOracleSchema = "oracle/1";
inline constexpr std::string_view kBoundsSchema = "bounds/1";
inline constexpr std::string_view kDriftHeader = "t,kernel,estimator,value,N,M,gamma";
inline constexpr std::string_view kSweepHeader =
    "L,kernel,drift_ratio,mean_wall_ms,max_net_evals,net_eval_bound";
inline constexpr std::string_view kOracleHeader =
    "t,E_cumu,E_mod,slack,mu_eff,entropy,flag_entropy,flag_eps";
inline constexpr std::string_view kBoundsHeader =
    "chain,t,kl_exact,mmd_est,lower,upper,mmd_se,gamma,within";

std::string schema_line(std::string_view schema);

/// `points` equally spaced indices from T down to 1, both ends included.
std::vector<int> default_t_grid(int T, int points = 10);
/// Parses "1,10,100"; result sorted in decreasing order, duplicates removed.
std::vector<int> parse_t_grid(const std::string& text, int T);
/// Parses "rbf,laplace,rq" into median-heuristic kernel specs.
std::vector<KernelSpec> parse_kernel_list(const std::string& text);
std::vector<KernelSpec> all_kernels();

enum class DriftReference { kForward, kBootstrap };

struct DriftOptions {
  std::vector<int> t_grid;  // empty: default_t_grid(T)
  std::vector<KernelSpec> kernels = all_kernels();
  Eigen::Index N = 1000;
  Eigen::Index M = 1000;
  Estimator estimator = Estimator::kV;
  std::uint64_t seed = 0;
  /// kBootstrap compares against bootstrap-chain outputs started from data
  /// (the inputs a regularized model sees in training) instead of q(x_{t-1}).
  DriftReference reference = DriftReference::kForward;
  int L = 5;
  SamplerOptions sampler{};
};

struct DriftRecord {
  int t = 0;
  KernelFamily kernel = KernelFamily::kRbf;
  Estimator estimator = Estimator::kV;
  double value = 0.0;
  Eigen::Index N = 0;
  Eigen::Index M = 0;
  double gamma = 0.0;
};

struct DriftSeries {
  std::vector<DriftRecord> records;  // t decreasing, kernels in request order
  std::uint64_t seed = 0;
  std::string checkpoint_id;
  std::string dataset_id;
  DriftReference reference = DriftReference::kForward;
};

/// For each t: N full-chain samples recorded at t - 1 against M reference
/// samples at t - 1, one MMD estimate per kernel.
DriftSeries measure_drift(const NoisePredictor& net, const NoiseSchedule& sched,
                          const DataSource& data, const DriftOptions& opts);

/// value(t = 1) / value(t = T) for one kernel; the series must contain both.
double drift_ratio(const DriftSeries& s, KernelFamily kernel);

void write_drift_csv(const DriftSeries& s, const std::string& path);

/// Stable 64-bit FNV-1a digest of the encoded checkpoint, hex.
std::string checkpoint_id(const Checkpoint& c);

struct SweepRecord {
  int L = 0;
  KernelFamily kernel = KernelFamily::kRbf;
  double drift_ratio = 0.0;
  double mean_wall_ms = 0.0;
  std::uint64_t max_net_evals = 0;
  std::uint64_t net_eval_bound = 0;  // B (1 + L) + B
};

/// Trains one model per L from the same seed and measures its drift ratio.
std::vector<SweepRecord> sweep_L(const TrainConfig& base, const DataSource& data,
                                 const std::vector<int>& Ls, const DriftOptions& drift);

void write_sweep_csv(const std::vector<SweepRecord>& recs, const std::string& path);

void write_oracle_csv(const std::vector<oracle::PropagationRecord>& report,
                      const std::string& path);

/// Random chain: near-degenerate data (variance 1e-8 .. 3e-6), a DDPM-form or
/// perfect backward chain, and one mild perturbation (scale A, shift b or
/// inflate sigma) at a random step.
oracle::GaussChain random_perturbed_chain(RandomStream& rs, int T, int K);

/// Moderately perturbed 2-D chain for the KL / MMD comparison; the perturbed
/// steps sit near t = 1.
oracle::GaussChain random_bounds_chain(RandomStream& rs, int T);

struct OracleOutcome {
  std::string scenario;
  bool assertable = true;
  bool passed = true;
  std::vector<std::string> lines;  // human-readable summary
  std::vector<std::string> files;
};

inline const std::vector<std::string> kOracleScenarios = {"perfect", "perturbed",
                                                          "assumption-violating", "bounds"};

/// Runs one oracle scenario and writes its CSVs into out_dir.
OracleOutcome run_oracle_scenario(const std::string& scenario, const std::string& out_dir,
                                  std::uint64_t seed = 0);

}  // namespace driftlab
