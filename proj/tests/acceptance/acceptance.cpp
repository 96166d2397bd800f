// Acceptance suite: one PASS/FAIL line per criterion, tolerances pinned below.
#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "driftlab/counters.hpp"
#include "driftlab/forward.hpp"
#include "driftlab/harness.hpp"
#include "driftlab/oracle.hpp"
#include "driftlab/trainer.hpp"

using namespace driftlab;
using namespace driftlab::oracle;

namespace {

constexpr double kZeroErrorTol = 1e-10;
constexpr double kSlackTol = -1e-9;
constexpr double kResidualTol = 1e-8;
constexpr double kItRelTol = 1e-6;
constexpr double kHypothesisTol = 1e-9;  // |E||eps_hat||^2 / K - 1|
constexpr double kBoundsSeMultiplier = 3.0;
constexpr int kBoundsChains = 30;
constexpr int kBoundsRequired = 28;
constexpr Eigen::Index kBoundsSamples = 4000;
constexpr double kNaiveTol = 1e-10;
constexpr double kGradRelTol = 1e-4;
constexpr double kGradScaleFloor = 1e-6;  // relative error denominator floor
constexpr double kFdStep = 1e-5;
constexpr int kGradConfigs = 32;
constexpr double kDriftRatioMin = 2.0;
constexpr double kExcessReduction = 0.30;
constexpr std::int64_t kTwinSteps = 20000;
constexpr double kWallJitter = 0.10;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

NoiseSchedule sched100() {
  const auto e = default_linear_endpoints(100);
  return make_linear_schedule(100, e.beta_start, e.beta_end);
}

Mat random_spd(RandomStream& rs, int K) {
  Mat G(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) G(i, j) = rs.normal();
  Mat S = G * G.transpose() / K + 0.2 * Mat::Identity(K, K);
  return 0.5 * (S + S.transpose());
}

std::vector<GaussChain> flag_true_chains(int want, int* attempts_out) {
  RandomStream rs = SeedTree(2).child(tags::kOracle).stream(0);
  std::vector<GaussChain> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < want && attempts < 5000) {
    ++attempts;
    GaussChain c = random_perturbed_chain(rs, 100, 1 + attempts % 2);
    if (assumptions_hold(propagation_report(c))) out.push_back(std::move(c));
  }
  if (attempts_out) *attempts_out = attempts;
  return out;
}

// 1 ---------------------------------------------------------------------------
Outcome zero_error_oracle() {
  RandomStream rs = SeedTree(1).stream(0);
  double worst = 0.0;
  for (int K : {1, 2, 4}) {
    Vector m(K);
    for (int i = 0; i < K; ++i) m(i) = rs.normal();
    const GaussChain c = GaussChain::perfect(sched100(), Gaussian(m, random_spd(rs, K)));
    for (int t = 1; t <= 100; ++t) worst = std::max(worst, cumulative_error(c, t));
  }
  return {worst <= kZeroErrorTol, fmt("max E_cumu over K in {1,2,4}, t in [1,100] = %.3g (tol %.0e)", worst, kZeroErrorTol)};
}

// 2 ---------------------------------------------------------------------------
Outcome propagation_inequality() {
  int attempts = 0;
  const auto chains = flag_true_chains(20, &attempts);
  int ok = 0;
  double worst = 0.0;
  for (const auto& c : chains) {
    double mn = 0.0;
    for (const auto& r : propagation_report(c)) mn = std::min(mn, r.slack);
    worst = std::min(worst, mn);
    ok += mn >= kSlackTol;
  }
  const bool pass = chains.size() >= 20 && ok == static_cast<int>(chains.size());
  return {pass, fmt("%zu flag-true chains (%d generated); %d with slack >= %.0e everywhere; min slack %.3g",
                    chains.size(), attempts, ok, kSlackTol, worst)};
}

// 3 ---------------------------------------------------------------------------
Outcome recursion_identity() {
  std::vector<GaussChain> chains = flag_true_chains(20, nullptr);
  RandomStream rs = SeedTree(3).stream(0);
  for (int i = 0; i < 10; ++i) {
    const int K = 1 + i % 3;
    GaussChain c = GaussChain::ddpm(sched100(), Gaussian(Vector::Constant(K, rs.normal()), random_spd(rs, K)));
    c.inflate_sigma(static_cast<int>(rs.uniform_int(1, 100)), 1.5);
    c.scale_A(static_cast<int>(rs.uniform_int(1, 100)), 1.1);
    chains.push_back(std::move(c));
  }
  double worst_res = 0.0;
  for (const auto& c : chains) {
    for (int t = 1; t <= c.T(); ++t) worst_res = std::max(worst_res, std::abs(recursion_identity_check(c, t).residual));
  }
  // I_t closed form, checked where sigma_t^2 = beta_t and E||eps_hat||^2 = K hold
  double worst_rel = 0.0, worst_signed = 0.0, worst_general = 0.0;
  int points = 0;
  for (int K : {1, 2, 4}) {
    const GaussChain d = GaussChain::ddpm(sched100(), Gaussian(Vector::Constant(K, 0.5), 1e-12 * Mat::Identity(K, K)));
    std::vector<AffineKernel> steps;
    for (int t = 1; t <= d.T(); ++t) steps.push_back(d.step(t));
    const GaussChain c(d.schedule(), d.data(), q_marginal(d, d.T()), steps);
    const auto& s = c.schedule();
    for (int t = 1; t <= c.T(); ++t) {
      const double it = recursion_identity_check(c, t).i_t;
      const double m2 = implied_eps_second_moment(c, t);
      const double b = s.beta(t), ab = s.alpha_bar(t);
      const double general = 0.5 * K - (b * b / (1 - ab) * m2 + s.alpha(t) * b * K) / (2 * b);
      worst_general = std::max(worst_general, std::abs(it - general));
      if (std::abs(m2 / K - 1.0) > kHypothesisTol) continue;
      ++points;
      const double claimed = b * ab / (1 - ab);
      worst_rel = std::max(worst_rel, std::abs(it - claimed) / std::abs(claimed));
      const double derived = -0.5 * K * claimed;
      worst_signed = std::max(worst_signed, std::abs(it - derived) / std::abs(derived));
    }
  }
  const bool pass = worst_res <= kResidualTol && points > 0 && worst_rel <= kItRelTol;
  return {pass, fmt("max |residual| over %zu chains = %.3g (tol %.0e); at %d hypothesis points I_t vs "
                    "beta*abar/(1-abar): max rel err %.3g (tol %.0e); vs -(K/2)*beta*abar/(1-abar): %.3g; "
                    "general form max abs err %.3g",
                    chains.size(), worst_res, kResidualTol, points, worst_rel, kItRelTol, worst_signed, worst_general)};
}

// 4 ---------------------------------------------------------------------------
Outcome kl_mmd_sandwich() {
  RandomStream rs = SeedTree(4).child(tags::kOracle).stream(0);
  int within = 0, below = 0, above = 0;
  double ratio_min = 1e300, ratio_max = 0;
  for (int i = 0; i < kBoundsChains; ++i) {
    const GaussChain c = random_bounds_chain(rs, 100);
    const auto b = bounds_check(c, 1, KernelSpec{KernelFamily::kRbf}, kBoundsSamples, kBoundsSamples,
                                SeedTree(4).child(100 + i), 10);
    const double d = kBoundsSeMultiplier * b.mmd_se;
    if (b.kl_exact < b.lower - d) ++below;
    else if (b.kl_exact > b.upper + d) ++above;
    else ++within;
    ratio_min = std::min(ratio_min, b.kl_exact / b.mmd_est);
    ratio_max = std::max(ratio_max, b.kl_exact / b.mmd_est);
  }
  return {within >= kBoundsRequired,
          fmt("%d/%d chains with KL in [mmd/4 - 3se, mmd + 3se] (need %d); %d above, %d below; KL/mmd in [%.3g, %.3g]",
              within, kBoundsChains, kBoundsRequired, above, below, ratio_min, ratio_max)};
}

// 5 ---------------------------------------------------------------------------
double naive_mmd(const Matrix& x, const Matrix& y, const KernelSpec& k, Estimator e) {
  auto kv = [&](const Matrix& a, Eigen::Index i, const Matrix& b, Eigen::Index j) {
    return kernel_eval(k, {a.row(i).data(), static_cast<std::size_t>(a.cols())},
                       {b.row(j).data(), static_cast<std::size_t>(b.cols())});
  };
  const double n = static_cast<double>(x.rows()), m = static_cast<double>(y.rows());
  double sxx = 0, syy = 0, sxy = 0;
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < x.rows(); ++j)
      if (e == Estimator::kV || i != j) sxx += kv(x, i, x, j);
  for (Eigen::Index i = 0; i < y.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j)
      if (e == Estimator::kV || i != j) syy += kv(y, i, y, j);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    for (Eigen::Index j = 0; j < y.rows(); ++j) sxy += kv(x, i, y, j);
  if (e == Estimator::kV) return sxx / (n * n) + syy / (m * m) - 2 * sxy / (n * m);
  return sxx / (n * (n - 1)) + syy / (m * (m - 1)) - 2 * sxy / (n * m);
}

Outcome estimator_fidelity() {
  RandomStream rs = SeedTree(5).stream(0);
  double worst = 0.0;
  bool self_zero = true;
  for (int i = 0; i < 100; ++i) {
    const auto n = rs.uniform_int(2, 64), m = rs.uniform_int(2, 64), K = rs.uniform_int(1, 4);
    const Matrix x = standard_normal(n, K, SeedTree(5).child(1).child(i));
    Matrix y = standard_normal(m, K, SeedTree(5).child(2).child(i));
    y.array() += 0.5 * rs.uniform();
    KernelSpec k{static_cast<KernelFamily>(rs.uniform_int(0, 2))};
    if (rs.uniform() < 0.5) {
      k.mode = BandwidthMode::kFixed;
      k.gamma = 0.1 + 2 * rs.uniform();
    }
    const Estimator e = rs.uniform() < 0.5 ? Estimator::kV : Estimator::kU;
    const auto est = mmd_estimate(x, y, k, e);
    worst = std::max(worst, std::abs(est.value - naive_mmd(x, y, est.kernel, e)));
    self_zero = self_zero && mmd_estimate(x, x, k, Estimator::kV).value == 0.0;
  }
  return {worst <= kNaiveTol && self_zero,
          fmt("100 instances: max |estimate - naive| = %.3g (tol %.0e); V(X, X) == 0 exactly: %s", worst,
              kNaiveTol, self_zero ? "yes" : "no")};
}

// 6 ---------------------------------------------------------------------------
Outcome gradient_correctness() {
  RandomStream rs = SeedTree(6).stream(0);
  double worst_nll = 0.0, worst_reg = 0.0;
  int max_boot = 0;
  for (int i = 0; i < kGradConfigs; ++i) {
    TrainConfig cfg;
    cfg.T = static_cast<int>(rs.uniform_int(5, 20));
    cfg.batch_size = static_cast<int>(rs.uniform_int(3, 6));
    cfg.L = static_cast<int>(rs.uniform_int(1, 4));
    cfg.time_embed = rs.uniform() < 0.5 ? 0 : 4;
    cfg.hidden.assign(static_cast<std::size_t>(rs.uniform_int(1, 2)), static_cast<int>(rs.uniform_int(3, 6)));
    cfg.kernel.family = rs.uniform() < 0.5 ? KernelFamily::kRbf : KernelFamily::kRationalQuadratic;
    cfg.estimator = rs.uniform() < 0.5 ? Estimator::kV : Estimator::kU;
    cfg.rho = 0.5;
    cfg.seed = 1000 + i;
    const auto data = make_source(cfg.dataset);
    const EpsNet net = EpsNet::initialized(cfg.shape(), cfg.seed);
    const std::uint64_t step = rs.uniform_int(0, 1000);

    for (bool reg : {false, true}) {
      TrainConfig c = cfg;
      if (!reg) c.disable_regularization();
      const StepObjective obj = evaluate_objective(net, c, *data, c.seed, step);
      const KernelSpec fixed = obj.kernel;
      if (reg) max_boot = std::max(max_boot, obj.record.s - (obj.record.t - 1));
      double worst = 0.0;
      for (Eigen::Index p = 0; p < obj.grad.size(); ++p) {
        EpsNet a = net, b = net;
        a.mutable_parameters()(p) += kFdStep;
        b.mutable_parameters()(p) -= kFdStep;
        const double fa = evaluate_objective(a, c, *data, c.seed, step, &fixed).record.loss_total;
        const double fb = evaluate_objective(b, c, *data, c.seed, step, &fixed).record.loss_total;
        const double fd = (fa - fb) / (2 * kFdStep);
        const double g = obj.grad(p);
        worst = std::max(worst, std::abs(fd - g) / std::max({std::abs(fd), std::abs(g), kGradScaleFloor}));
      }
      (reg ? worst_reg : worst_nll) = std::max(reg ? worst_reg : worst_nll, worst);
    }
  }
  const bool pass = worst_nll <= kGradRelTol && worst_reg <= kGradRelTol;
  return {pass, fmt("%d configs: max rel err L^nll %.3g, regularized %.3g (tol %.0e, bootstrap depth up to %d)",
                    kGradConfigs, worst_nll, worst_reg, kGradRelTol, max_boot)};
}

// 7, 8 ------------------------------------------------------------------------
TrainConfig twin_config() {
  TrainConfig c;  // toy preset: T = 100, 8-mode mixture, B = 256
  c.steps = kTwinSteps;
  c.record_every = 1000;
  c.record_timing = false;
  c.seed = 0;
  return c;
}

struct Twins {
  std::map<KernelFamily, double> vanilla, regularized;
  double seconds = 0.0;
};

const Twins& twins() {
  static std::optional<Twins> cache;
  if (cache) return *cache;
  const auto t0 = std::chrono::steady_clock::now();
  Twins out;
  DriftOptions d;  // N = M = 1000, 10-point grid, all kernels, V-statistic
  for (bool reg : {false, true}) {
    TrainConfig cfg = twin_config();
    if (!reg) cfg.disable_regularization();
    const auto data = make_source(cfg.dataset);
    const TrainResult r = train(cfg, *data);
    const DriftSeries s = measure_drift(r.state.net, cfg.schedule(), *data, d);
    for (const auto& k : d.kernels) (reg ? out.regularized : out.vanilla)[k.family] = drift_ratio(s, k.family);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cache = out;
  return *cache;
}

Outcome drift_curve() {
  const Twins& tw = twins();
  bool pass = true;
  std::ostringstream os;
  os << "vanilla drift ratio (need > " << kDriftRatioMin << "):";
  for (auto [k, v] : tw.vanilla) {
    os << ' ' << kernel_name(k) << '=' << fmt("%.3f", v);
    pass = pass && v > kDriftRatioMin;
  }
  os << fmt(" [twin training %.0f s]", tw.seconds);
  return {pass, os.str()};
}

Outcome regularization_effect() {
  const Twins& tw = twins();
  bool pass = true;
  std::ostringstream os;
  os << "regularized vs vanilla ratio, excess reduction (need < vanilla and >= "
     << static_cast<int>(kExcessReduction * 100) << "%):";
  for (auto [k, v] : tw.vanilla) {
    const double r = tw.regularized.at(k);
    const double red = (v - 1.0) > 0 ? 1.0 - (r - 1.0) / (v - 1.0) : 0.0;
    os << ' ' << kernel_name(k) << fmt("=%.3f/%.3f (%.0f%%)", r, v, 100 * red);
    pass = pass && r < v && red >= kExcessReduction;
  }
  return {pass, os.str()};
}

// 9 ---------------------------------------------------------------------------
Outcome l_tradeoff() {
  std::vector<double> mean_ms;
  bool exact = true, bounded = true;
  std::ostringstream os;
  for (int L : {1, 3, 5, 7}) {
    TrainConfig cfg;
    cfg.L = L;
    cfg.steps = 150;
    cfg.record_every = 1;
    cfg.seed = 9;
    const auto data = make_source(cfg.dataset);
    double total = 0.0;
    train(cfg, *data, std::nullopt, [&](const MetricsRecord& r) {
      total += r.wall_ms;
      const auto B = static_cast<std::uint64_t>(cfg.batch_size);
      exact = exact && r.net_evals == B * (1 + static_cast<std::uint64_t>(r.s - (r.t - 1)));
      bounded = bounded && r.net_evals <= B * (1 + static_cast<std::uint64_t>(L)) + B;
    });
    mean_ms.push_back(total / cfg.steps);
    os << fmt(" L=%d:%.2fms", L, mean_ms.back());
  }
  bool monotone = true;
  for (std::size_t i = 1; i < mean_ms.size(); ++i) monotone = monotone && mean_ms[i] >= (1 - kWallJitter) * mean_ms[i - 1];
  return {monotone && exact && bounded,
          "mean wall ms/step" + os.str() + fmt("; non-decreasing within %.0f%%: %s; net evals == B(1+s-t+1) every step: %s; "
                                                "<= B(1+L)+B: %s",
                                                kWallJitter * 100, monotone ? "yes" : "no", exact ? "yes" : "no",
                                                bounded ? "yes" : "no")};
}

// 10 --------------------------------------------------------------------------
// Plain DDPM step written out directly on the shared building blocks.
void reference_ddpm_step(EpsNet& net, Vector& m, Vector& v, std::uint64_t& k, const TrainConfig& cfg,
                         const DataSource& data, std::uint64_t step) {
  const NoiseSchedule sched = cfg.schedule();
  const SeedTree seeds = SeedTree(cfg.seed).child(tags::kStep).child(step);
  const Matrix x0 = data.batch(cfg.seed, step, 0, cfg.batch_size);
  RandomStream trs = seeds.child(tags::kTimestep).stream(0);
  const int t = static_cast<int>(trs.uniform_int(1, cfg.T));
  Matrix eps(x0.rows(), x0.cols());
  for (Eigen::Index i = 0; i < x0.rows(); ++i) {
    RandomStream rs = seeds.child(tags::kJump).stream(static_cast<std::uint64_t>(i));
    for (Eigen::Index j = 0; j < x0.cols(); ++j) eps(i, j) = rs.normal();
  }
  const double ab = sched.alpha_bar(t);
  Matrix xt = std::sqrt(ab) * x0;
  xt += std::sqrt(1.0 - ab) * eps;
  EpsNet::Tape tape;
  const Matrix pred = net.forward(xt, t, tape);
  Vector g = Vector::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  net.backward(tape, (-2.0 / static_cast<double>(x0.rows())) * (eps - pred), g);
  g = 1.0 * g;
  if (m.size() == 0) {
    m = Vector::Zero(g.size());
    v = Vector::Zero(g.size());
  }
  ++k;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(k));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(k));
  Vector& p = net.mutable_parameters();
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    m(i) = kAdamBeta1 * m(i) + (1.0 - kAdamBeta1) * g(i);
    v(i) = kAdamBeta2 * v(i) + (1.0 - kAdamBeta2) * g(i) * g(i);
    p(i) -= cfg.learning_rate * (m(i) / c1) / (std::sqrt(v(i) / c2) + kAdamEps);
  }
}

Outcome baseline_reduction() {
  TrainConfig cfg;
  cfg.steps = 200;
  cfg.seed = 10;
  cfg.disable_regularization();
  const auto data = make_source(cfg.dataset);
  TrainState st = init_state(cfg);
  EpsNet ref = EpsNet::initialized(cfg.shape(), cfg.seed);
  Vector m, v;
  std::uint64_t k = 0;
  counters().reset();
  int identical = 0;
  for (std::uint64_t s = 0; s < static_cast<std::uint64_t>(cfg.steps); ++s) {
    train_step(st, cfg, *data);
    reference_ddpm_step(ref, m, v, k, cfg, *data, s);
    const Vector& a = st.net.parameters();
    const Vector& b = ref.parameters();
    identical += std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
  }
  const std::uint64_t kevals = counters().kernel_evals;
  return {identical == cfg.steps && kevals == 0,
          fmt("%d/%lld steps with bit-identical parameters; kernel evaluations %llu", identical,
              static_cast<long long>(cfg.steps), static_cast<unsigned long long>(kevals))};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftlab acceptance criteria"};
  std::vector<int> selected;
  app.add_option("--criterion,-c", selected, "Criteria to run (default: all)")->delimiter(',');
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> all = {
      {"zero-error oracle", zero_error_oracle},
      {"propagation inequality", propagation_inequality},
      {"recursion identity", recursion_identity},
      {"KL-MMD sandwich", kl_mmd_sandwich},
      {"estimator fidelity", estimator_fidelity},
      {"gradient correctness", gradient_correctness},
      {"drift-curve reproduction", drift_curve},
      {"regularization effect", regularization_effect},
      {"L trade-off", l_tradeoff},
      {"baseline reduction", baseline_reduction},
  };
  if (selected.empty())
    for (int i = 1; i <= static_cast<int>(all.size()); ++i) selected.push_back(i);

  int failed = 0;
  for (int id : selected) {
    if (id < 1 || id > static_cast<int>(all.size())) {
      std::fprintf(stderr, "unknown criterion %d\n", id);
      return 2;
    }
    const auto& [name, fn] = all[static_cast<std::size_t>(id - 1)];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("criterion %2d %-26s %s  %s  [%.1f s]\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(), sec);
    std::fflush(stdout);
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
