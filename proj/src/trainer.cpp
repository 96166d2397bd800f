#include "driftlab/trainer.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "driftlab/counters.hpp"
#include "driftlab/forward.hpp"

namespace driftlab {

std::string_view optimizer_name(OptimizerKind k) noexcept {
  return k == OptimizerKind::kAdam ? "adam" : "sgd";
}

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("config: " + m); };
  if (T < 1) fail("T must be >= 1");
  if (K < 1) fail("K must be >= 1");
  if (batch_size < 2) fail("batch_size must be >= 2");
  if (L < 1) fail("L must be >= 1");
  if (steps < 0) fail("steps must be >= 0");
  if (record_every < 1) fail("record_every must be >= 1");
  if (!(learning_rate > 0.0)) fail("learning_rate must be > 0");
  if (!(rho >= 0.0)) fail("rho must be >= 0");
  if (std::abs(lambda_nll + lambda_reg - 1.0) > 1e-12) fail("lambda_nll + lambda_reg must equal 1");
  if (regularize) {
    if (!(lambda_nll > 0.0 && lambda_nll < 1.0 && lambda_reg > 0.0 && lambda_reg < 1.0)) {
      fail("lambda_nll and lambda_reg must lie in (0, 1) when regularization is on");
    }
    if (estimator == Estimator::kU && batch_size < 2) fail("u-statistic needs batch_size >= 2");
  } else if (lambda_reg != 0.0) {
    fail("lambda_reg must be 0 when regularization is off");
  }
  if (dataset.kind != DatasetKind::kCsv && K != 2) fail("built-in datasets require K = 2");
  if (dataset.dim != K) fail("dataset dimension must equal K");
  if (kernel.mode == BandwidthMode::kFixed && !(kernel.gamma > 0.0)) fail("kernel gamma must be > 0");
  if (time_embed < 0 || time_embed % 2 != 0) fail("time_embed must be even and >= 0");
  if (hidden.empty()) fail("hidden must list at least one layer width");
  schedule();  // endpoint checks
}

NoiseSchedule TrainConfig::schedule() const {
  const LinearEndpoints d = default_linear_endpoints(T);
  return make_linear_schedule(T, beta_start.value_or(d.beta_start), beta_end.value_or(d.beta_end),
                              sigma_mode);
}

WeightSchedule TrainConfig::weights() const { return WeightSchedule(rho, T); }

EpsNetShape TrainConfig::shape() const { return EpsNetShape{K, time_embed, hidden}; }

SamplerOptions TrainConfig::sampler_options() const {
  SamplerOptions o;
  o.noiseless_last_step = noiseless_last_step;
  o.warm_start = warm_start;
  return o;
}

void TrainConfig::disable_regularization() {
  regularize = false;
  lambda_reg = 0.0;
  lambda_nll = 1.0;
}

TrainConfig full_scale_config() {
  TrainConfig c;
  c.T = 1000;
  c.L = 5;
  c.lambda_nll = 0.8;
  c.lambda_reg = 0.2;
  c.rho = 0.003;
  c.sigma_mode = SigmaMode::kBeta;
  return c;
}

void optimizer_update(OptimizerState& st, Vector& params, const Vector& grad, double lr) {
  if (grad.size() != params.size()) throw std::invalid_argument("optimizer: gradient size mismatch");
  ++st.step;
  if (st.kind == OptimizerKind::kSgd) {
    params -= lr * grad;
    return;
  }
  if (st.m.size() != params.size()) {
    st.m = Vector::Zero(params.size());
    st.v = Vector::Zero(params.size());
  }
  const double t = static_cast<double>(st.step);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    st.m(i) = kAdamBeta1 * st.m(i) + (1.0 - kAdamBeta1) * grad(i);
    st.v(i) = kAdamBeta2 * st.v(i) + (1.0 - kAdamBeta2) * grad(i) * grad(i);
    params(i) -= lr * (st.m(i) / c1) / (std::sqrt(st.v(i) / c2) + kAdamEps);
  }
}

TrainState init_state(const TrainConfig& cfg) {
  cfg.validate();
  TrainState st{EpsNet::initialized(cfg.shape(), cfg.seed), OptimizerState{}, 0, cfg.seed};
  st.opt.kind = cfg.optimizer;
  return st;
}

StepObjective evaluate_objective(const EpsNet& net, const TrainConfig& cfg, const DataSource& data,
                                 std::uint64_t seed, std::uint64_t step, const KernelSpec* kernel) {
  const NoiseSchedule sched = cfg.schedule();
  const SeedTree seeds = SeedTree(seed).child(tags::kStep).child(step);
  const Eigen::Index B = cfg.batch_size;
  if (data.dim() != cfg.K) throw std::invalid_argument("train_step: data dimension mismatch");

  StepObjective out;
  MetricsRecord& rec = out.record;
  rec.step = step + 1;
  const Batch s0 = Batch::from_data(data.batch(seed, step, 0, B));
  RandomStream t_rs = seeds.child(tags::kTimestep).stream(0);
  const int t = static_cast<int>(t_rs.uniform_int(1, cfg.T));
  rec.t = t;

  NllResult nll = loss_nll_t(net, s0, t, sched, seeds.child(tags::kJump));
  rec.loss_nll = nll.loss;
  out.grad = cfg.lambda_nll * nll.grad;
  out.kernel = kernel ? *kernel : cfg.kernel;

  if (cfg.regularize) {
    // measured at r = t - 1, the index whose marginal gap E_cumu(t) describes
    const int r = t - 1;
    const Batch s0_prime = Batch::from_data(data.batch(seed, step, 1, B));
    const BootstrapTrace trace = bootstrap_backward_traced(
        net, s0_prime, r, cfg.L, sched, seeds.child(tags::kBootstrapStart), cfg.sampler_options());
    rec.s = trace.s;
    const Matrix forward_ref =
        r == 0 ? s0.data : forward_jump(s0, r, sched, seeds.child(tags::kForward)).xt.data;
    const MmdEstimate est = mmd_estimate(trace.xt.data, forward_ref, out.kernel, cfg.estimator);
    out.kernel = est.kernel;
    rec.loss_reg = est.value;
    rec.weight = cfg.weights().weight(t);
    const double coef = cfg.lambda_reg * rec.weight;
    const Matrix g_x = coef * mmd_gradient_x(trace.xt.data, forward_ref, est.kernel, cfg.estimator);
    bootstrap_backprop(net, trace, g_x, sched, out.grad);
  }
  rec.loss_total = cfg.lambda_nll * rec.loss_nll + cfg.lambda_reg * rec.weight * rec.loss_reg;
  return out;
}

MetricsRecord train_step(TrainState& state, const TrainConfig& cfg, const DataSource& data) {
  const auto started = std::chrono::steady_clock::now();
  const std::uint64_t net0 = counters().net_evals;
  const std::uint64_t ker0 = counters().kernel_evals;
  StepObjective obj = evaluate_objective(state.net, cfg, data, state.seed, state.step);
  MetricsRecord rec = obj.record;
  rec.net_evals = counters().net_evals - net0;
  rec.kernel_evals = counters().kernel_evals - ker0;
  if (!std::isfinite(rec.loss_total) || !obj.grad.allFinite()) {
    throw DivergenceError("training diverged at step " + std::to_string(rec.step) +
                              " (non-finite loss or gradient)",
                          rec);
  }
  optimizer_update(state.opt, state.net.mutable_parameters(), obj.grad, cfg.learning_rate);
  ++state.step;
  rec.wall_ms = cfg.record_timing
                    ? std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                                started)
                          .count()
                    : 0.0;
  return rec;
}

TrainResult train(const TrainConfig& cfg, const DataSource& data, std::optional<TrainState> from,
                  const RecordCallback& on_record) {
  cfg.validate();
  TrainResult res{from ? std::move(*from) : init_state(cfg), {}};
  if (res.state.net.shape() != cfg.shape()) {
    throw std::invalid_argument("train: resumed network shape does not match config");
  }
  const auto target = static_cast<std::uint64_t>(cfg.steps);
  while (res.state.step < target) {
    MetricsRecord rec = train_step(res.state, cfg, data);
    if (rec.step % static_cast<std::uint64_t>(cfg.record_every) == 0 || rec.step == target) {
      if (on_record) on_record(rec);
      res.metrics.push_back(rec);
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Checkpoints

NoiseSchedule Checkpoint::schedule() const {
  return make_linear_schedule(T, beta_start, beta_end, sigma_mode);
}

EpsNet Checkpoint::net() const {
  EpsNet n(shape);
  n.set_parameters(params);
  return n;
}

Checkpoint make_checkpoint(const TrainState& st, const TrainConfig& cfg) {
  Checkpoint c;
  const LinearEndpoints d = default_linear_endpoints(cfg.T);
  c.T = cfg.T;
  c.beta_start = cfg.beta_start.value_or(d.beta_start);
  c.beta_end = cfg.beta_end.value_or(d.beta_end);
  c.rho = cfg.rho;
  c.sigma_mode = cfg.sigma_mode;
  c.shape = st.net.shape();
  c.params = st.net.parameters();
  c.opt = st.opt;
  c.step = st.step;
  c.seed = st.seed;
  return c;
}

TrainState restore_state(const Checkpoint& c) { return TrainState{c.net(), c.opt, c.step, c.seed}; }

namespace {

constexpr char kMagic[4] = {'D', 'L', 'A', 'B'};

class ByteWriter {
 public:
  void raw(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <typename U>
  void uint(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  void i32(std::int32_t v) { uint(static_cast<std::uint32_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void vec(const Vector& v) {
    uint(static_cast<std::uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& b) : b_(b) {}
  void need(std::size_t n) const {
    if (pos_ + n > b_.size()) {
      throw CheckpointError(CheckpointErrorKind::kTruncated,
                            "checkpoint truncated at byte " + std::to_string(b_.size()));
    }
  }
  template <typename U>
  U uint() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(b_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(U);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(uint<std::uint32_t>()); }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  Vector vec() {
    const auto n = uint<std::uint64_t>();
    if (n > (b_.size() - pos_) / 8) {
      throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint truncated inside array");
    }
    Vector v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    return v;
  }
  bool done() const { return pos_ == b_.size(); }

 private:
  const std::string& b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_checkpoint(const Checkpoint& c) {
  ByteWriter w;
  w.raw(kMagic, 4);
  w.uint(c.version);
  w.i32(c.T);
  w.f64(c.beta_start);
  w.f64(c.beta_end);
  w.f64(c.rho);
  w.uint(static_cast<std::uint8_t>(c.sigma_mode == SigmaMode::kBeta ? 0 : 1));
  w.i32(c.shape.dim);
  w.i32(c.shape.time_embed);
  w.uint(static_cast<std::uint32_t>(c.shape.hidden.size()));
  for (int h : c.shape.hidden) w.i32(h);
  w.vec(c.params);
  w.uint(static_cast<std::uint8_t>(c.opt.kind == OptimizerKind::kAdam ? 0 : 1));
  w.uint(c.opt.step);
  w.vec(c.opt.m);
  w.vec(c.opt.v);
  w.uint(c.step);
  w.uint(c.seed);
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    if (bytes.size() < 4 && std::memcmp(bytes.data(), kMagic, bytes.size()) == 0) {
      throw CheckpointError(CheckpointErrorKind::kTruncated, "checkpoint truncated in header");
    }
    throw CheckpointError(CheckpointErrorKind::kMagic, "not a checkpoint (bad magic)");
  }
  ByteReader r(bytes);
  r.uint<std::uint32_t>();  // magic
  Checkpoint c;
  c.version = r.uint<std::uint32_t>();
  if (c.version != Checkpoint::kVersion) {
    throw CheckpointError(CheckpointErrorKind::kVersion,
                          "unsupported checkpoint version " + std::to_string(c.version));
  }
  c.T = r.i32();
  c.beta_start = r.f64();
  c.beta_end = r.f64();
  c.rho = r.f64();
  const auto sm = r.uint<std::uint8_t>();
  if (sm > 1) throw CheckpointError(CheckpointErrorKind::kCorrupt, "bad sigma mode");
  c.sigma_mode = sm == 0 ? SigmaMode::kBeta : SigmaMode::kPosterior;
  c.shape.dim = r.i32();
  c.shape.time_embed = r.i32();
  const auto layers = r.uint<std::uint32_t>();
  r.need(static_cast<std::size_t>(layers) * 4);
  c.shape.hidden.clear();
  for (std::uint32_t i = 0; i < layers; ++i) c.shape.hidden.push_back(r.i32());
  c.params = r.vec();
  const auto ok = r.uint<std::uint8_t>();
  if (ok > 1) throw CheckpointError(CheckpointErrorKind::kCorrupt, "bad optimizer kind");
  c.opt.kind = ok == 0 ? OptimizerKind::kAdam : OptimizerKind::kSgd;
  c.opt.step = r.uint<std::uint64_t>();
  c.opt.m = r.vec();
  c.opt.v = r.vec();
  c.step = r.uint<std::uint64_t>();
  c.seed = r.uint<std::uint64_t>();
  if (!r.done()) throw CheckpointError(CheckpointErrorKind::kCorrupt, "trailing bytes in checkpoint");
  try {
    if (static_cast<std::size_t>(c.params.size()) != EpsNet(c.shape).parameter_count()) {
      throw CheckpointError(CheckpointErrorKind::kCorrupt, "parameter count does not match shape");
    }
  } catch (const std::invalid_argument& e) {
    throw CheckpointError(CheckpointErrorKind::kCorrupt, std::string("bad network shape: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& c, const std::string& path) {
  const std::string bytes = encode_checkpoint(c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::kIo, "write failed for '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::kIo, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return decode_checkpoint(ss.str());
  } catch (const CheckpointError& e) {
    throw CheckpointError(e.kind, "'" + path + "': " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metrics

std::string metrics_csv_line(const MetricsRecord& r) {
  std::ostringstream os;
  os << std::setprecision(17) << r.step << ',' << r.loss_total << ',' << r.loss_nll << ','
     << r.loss_reg << ',' << r.t << ',' << r.s << ',' << std::setprecision(6) << r.wall_ms;
  return os.str();
}

void write_metrics_csv(const std::vector<MetricsRecord>& recs, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open metrics file '" + path + "'");
  out << "# driftlab-schema: metrics/1\n" << kMetricsHeader << '\n';
  for (const auto& r : recs) out << metrics_csv_line(r) << '\n';
  if (!out) throw std::runtime_error("write failed for metrics file '" + path + "'");
}

}  // namespace driftlab
