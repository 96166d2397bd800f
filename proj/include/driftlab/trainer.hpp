#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "driftlab/dataset.hpp"
#include "driftlab/eps_net.hpp"
#include "driftlab/mmd.hpp"
#include "driftlab/sampler.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

enum class OptimizerKind { kAdam, kSgd };

std::string_view optimizer_name(OptimizerKind k) noexcept;
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  int T = 100;
  int K = 2;
  int batch_size = 256;
  int L = 5;
  double lambda_nll = 0.8;
  double lambda_reg = 0.2;
  double rho = 0.003;
  double learning_rate = 1e-3;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  std::int64_t steps = 20000;
  std::uint64_t seed = 0;
  KernelSpec kernel{};
  Estimator estimator = Estimator::kV;
  DatasetSpec dataset{};
  bool regularize = true;
  SigmaMode sigma_mode = SigmaMode::kBeta;
  std::int64_t record_every = 100;
  bool record_timing = true;
  /// Unset endpoints fall back to default_linear_endpoints(T).
  std::optional<double> beta_start;
  std::optional<double> beta_end;
  std::vector<int> hidden = {128, 128, 128};
  int time_embed = 16;
  bool noiseless_last_step = false;
  /// Ablation: start bootstrap chains from N(0, I) instead of the forward jump.
  bool warm_start = true;

  /// Throws std::invalid_argument naming the violated invariant.
  void validate() const;

  NoiseSchedule schedule() const;
  WeightSchedule weights() const;
  EpsNetShape shape() const;
  SamplerOptions sampler_options() const;

  /// Disables regularization: lambda_reg = 0, lambda_nll = 1.
  void disable_regularization();
};

/// Full-scale coefficients (T = 1000, L = 5, lambda = 0.8 / 0.2, rho = 0.003).
TrainConfig full_scale_config();

struct OptimizerState {
  OptimizerKind kind = OptimizerKind::kAdam;
  std::uint64_t step = 0;
  Vector m;
  Vector v;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// One update; Adam with the constants above or plain gradient descent.
void optimizer_update(OptimizerState& st, Vector& params, const Vector& grad, double lr);

struct TrainState {
  EpsNet net;
  OptimizerState opt;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;
};

TrainState init_state(const TrainConfig& cfg);

struct MetricsRecord {
  std::uint64_t step = 0;
  double loss_total = 0.0;
  double loss_nll = 0.0;
  double loss_reg = 0.0;
  int t = 0;
  int s = 0;  // 0 when no bootstrap chain ran
  double wall_ms = 0.0;
  std::uint64_t net_evals = 0;
  std::uint64_t kernel_evals = 0;
  double weight = 0.0;  // w_t applied to loss_reg
};

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(const std::string& what, MetricsRecord rec)
      : std::runtime_error(what), record(rec) {}
  MetricsRecord record;
};

struct StepObjective {
  MetricsRecord record;  // losses, t, s, weight; no timing
  Vector grad;           // d(loss_total)/d(params)
  KernelSpec kernel;     // bandwidth used by the regularizer
};

/// Evaluates the per-step objective lambda_nll L^nll_t + lambda_reg w_t L^reg
/// and its gradient for the draws keyed by (seed, step). A fixed-bandwidth
/// `kernel` overrides cfg.kernel (used to hold the bandwidth constant).
StepObjective evaluate_objective(const EpsNet& net, const TrainConfig& cfg, const DataSource& data,
                                 std::uint64_t seed, std::uint64_t step,
                                 const KernelSpec* kernel = nullptr);

/// One iteration of the regularized objective. The regularizer compares a
/// bootstrap batch with a forward batch at index t - 1 (the gap measured by
/// the cumulative error at t), weighted by w_t.
MetricsRecord train_step(TrainState& state, const TrainConfig& cfg, const DataSource& data);

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;
  std::uint32_t version = kVersion;
  int T = 0;
  double beta_start = 0.0;
  double beta_end = 0.0;
  double rho = 0.0;
  SigmaMode sigma_mode = SigmaMode::kBeta;
  EpsNetShape shape;
  Vector params;
  OptimizerState opt;
  std::uint64_t step = 0;
  std::uint64_t seed = 0;

  NoiseSchedule schedule() const;
  EpsNet net() const;
};

Checkpoint make_checkpoint(const TrainState& st, const TrainConfig& cfg);
TrainState restore_state(const Checkpoint& c);

enum class CheckpointErrorKind { kIo, kMagic, kVersion, kTruncated, kCorrupt };

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorKind k, const std::string& what)
      : std::runtime_error(what), kind(k) {}
  CheckpointErrorKind kind;
};

void save_checkpoint(const Checkpoint& c, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
std::string encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(const std::string& bytes);

struct TrainResult {
  TrainState state;
  std::vector<MetricsRecord> metrics;
};

using RecordCallback = std::function<void(const MetricsRecord&)>;

/// Runs cfg.steps iterations (continuing from `from` when given). Records
/// every record_every steps, plus the final step.
TrainResult train(const TrainConfig& cfg, const DataSource& data,
                  std::optional<TrainState> from = std::nullopt,
                  const RecordCallback& on_record = {});

inline constexpr std::string_view kMetricsHeader = "step,loss_total,loss_nll,loss_reg,t,s,wall_ms";
void write_metrics_csv(const std::vector<MetricsRecord>& recs, const std::string& path);
std::string metrics_csv_line(const MetricsRecord& r);

}  // namespace driftlab
