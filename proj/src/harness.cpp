#include "driftlab/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "driftlab/counters.hpp"
#include "driftlab/forward.hpp"

namespace driftlab {
namespace {

std::ofstream open_csv(const std::string& path, std::string_view schema, std::string_view header,
                       const std::vector<std::string>& meta = {}) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << schema_line(schema) << '\n';
  for (const auto& m : meta) out << "# " << m << '\n';
  out << header << '\n';
  out << std::setprecision(17);
  return out;
}

void close_csv(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw std::runtime_error("write failed for '" + path + "'");
}

std::vector<std::string> split(const std::string& text, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, sep)) {
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

std::string schema_line(std::string_view schema) {
  return "# driftlab-schema: " + std::string(schema);
}

std::vector<int> default_t_grid(int T, int points) {
  if (T < 1) throw std::invalid_argument("t-grid: T must be >= 1");
  if (points < 2) throw std::invalid_argument("t-grid: need at least 2 points");
  std::set<int, std::greater<>> ts;
  for (int i = 0; i < points; ++i) {
    ts.insert(1 + static_cast<int>(std::lround(static_cast<double>(i) * (T - 1) / (points - 1))));
  }
  return {ts.begin(), ts.end()};
}

std::vector<int> parse_t_grid(const std::string& text, int T) {
  std::set<int, std::greater<>> ts;
  for (const auto& item : split(text, ',')) {
    std::size_t used = 0;
    int t = 0;
    try {
      t = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw std::invalid_argument("t-grid: '" + item + "' is not an integer");
    if (t < 1 || t > T) {
      throw std::out_of_range("t-grid: t = " + item + " outside [1, " + std::to_string(T) + "]");
    }
    ts.insert(t);
  }
  if (ts.empty()) throw std::invalid_argument("t-grid: empty");
  return {ts.begin(), ts.end()};
}

std::vector<KernelSpec> parse_kernel_list(const std::string& text) {
  std::vector<KernelSpec> out;
  for (const auto& item : split(text, ',')) out.push_back(KernelSpec{parse_kernel(item)});
  if (out.empty()) throw std::invalid_argument("kernel list is empty");
  return out;
}

std::vector<KernelSpec> all_kernels() {
  return {KernelSpec{KernelFamily::kRbf}, KernelSpec{KernelFamily::kLaplace},
          KernelSpec{KernelFamily::kRationalQuadratic}};
}

DriftSeries measure_drift(const NoisePredictor& net, const NoiseSchedule& sched,
                          const DataSource& data, const DriftOptions& opts) {
  const int T = sched.T();
  if (data.dim() != net.dim()) {
    throw std::invalid_argument("drift: dataset dimension " + std::to_string(data.dim()) +
                                " does not match model dimension " + std::to_string(net.dim()));
  }
  if (opts.N < 2 || opts.M < 2) throw std::invalid_argument("drift: N and M must be >= 2");
  if (opts.kernels.empty()) throw std::invalid_argument("drift: no kernels requested");
  std::vector<int> grid = opts.t_grid.empty() ? default_t_grid(T) : opts.t_grid;
  std::sort(grid.begin(), grid.end(), std::greater<>());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (int t : grid) {
    if (t < 1 || t > T) {
      throw std::out_of_range("drift: t = " + std::to_string(t) + " outside [1, " +
                              std::to_string(T) + "]");
    }
  }

  const SeedTree root = SeedTree(opts.seed).child(tags::kDrift);
  std::set<int> record;
  for (int t : grid) record.insert(t - 1);
  const auto backward = sample_chain(net, opts.N, sched, root.child(1), record, opts.sampler);
  const Batch ref0 = Batch::from_data(data.batch(opts.seed, 0, 2, opts.M));

  DriftSeries out;
  out.seed = opts.seed;
  out.dataset_id = data.id();
  out.reference = opts.reference;
  for (int t : grid) {
    const int r = t - 1;
    Matrix ref;
    if (opts.reference == DriftReference::kBootstrap) {
      ref = bootstrap_backward(net, ref0, r, opts.L, sched, root.child(3).child(t), opts.sampler)
                .xt.data;
    } else {
      ref = r == 0 ? ref0.data : forward_jump(ref0, r, sched, root.child(2).child(t)).xt.data;
    }
    const Matrix& x = backward.at(r).data;
    for (const auto& k : opts.kernels) {
      const MmdEstimate e = mmd_estimate(x, ref, k, opts.estimator);
      out.records.push_back(DriftRecord{t, k.family, opts.estimator, e.value, opts.N, opts.M,
                                        e.kernel.gamma});
    }
  }
  return out;
}

double drift_ratio(const DriftSeries& s, KernelFamily kernel) {
  const DriftRecord* lo = nullptr;
  const DriftRecord* hi = nullptr;
  int t_max = 0;
  for (const auto& r : s.records) t_max = std::max(t_max, r.t);
  for (const auto& r : s.records) {
    if (r.kernel != kernel) continue;
    if (r.t == 1) lo = &r;
    if (r.t == t_max) hi = &r;
  }
  if (!lo || !hi || t_max == 1) {
    throw std::invalid_argument("drift ratio needs records at t = 1 and t = T for kernel " +
                                std::string(kernel_name(kernel)));
  }
  return lo->value / hi->value;
}

void write_drift_csv(const DriftSeries& s, const std::string& path) {
  std::ostringstream meta;
  meta << "seed=" << s.seed << ",checkpoint=" << (s.checkpoint_id.empty() ? "none" : s.checkpoint_id)
       << ",dataset=" << s.dataset_id
       << ",reference=" << (s.reference == DriftReference::kForward ? "forward" : "bootstrap");
  auto out = open_csv(path, kDriftSchema, kDriftHeader, {meta.str()});
  for (const auto& r : s.records) {
    out << r.t << ',' << kernel_name(r.kernel) << ',' << estimator_name(r.estimator) << ','
        << r.value << ',' << r.N << ',' << r.M << ',' << r.gamma << '\n';
  }
  close_csv(out, path);
}

std::string checkpoint_id(const Checkpoint& c) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : encode_checkpoint(c)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::vector<SweepRecord> sweep_L(const TrainConfig& base, const DataSource& data,
                                 const std::vector<int>& Ls, const DriftOptions& drift) {
  if (Ls.empty()) throw std::invalid_argument("sweep: L list is empty");
  for (int L : Ls) {
    if (L < 1) throw std::invalid_argument("sweep: L = " + std::to_string(L) + " must be >= 1");
  }
  std::vector<SweepRecord> out;
  for (int L : Ls) {
    TrainConfig cfg = base;
    cfg.L = L;
    std::uint64_t max_evals = 0;
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult res = train(cfg, data, std::nullopt, [&](const MetricsRecord& r) {
      max_evals = std::max(max_evals, r.net_evals);
    });
    const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    const double mean_ms = cfg.steps > 0 ? ms / static_cast<double>(cfg.steps) : 0.0;
    DriftOptions d = drift;
    d.L = L;
    const DriftSeries series = measure_drift(res.state.net, cfg.schedule(), data, d);
    const auto B = static_cast<std::uint64_t>(cfg.batch_size);
    for (const auto& k : d.kernels) {
      out.push_back(SweepRecord{L, k.family, drift_ratio(series, k.family), mean_ms, max_evals,
                                B * (1 + static_cast<std::uint64_t>(L)) + B});
    }
  }
  return out;
}

void write_sweep_csv(const std::vector<SweepRecord>& recs, const std::string& path) {
  auto out = open_csv(path, kSweepSchema, kSweepHeader);
  for (const auto& r : recs) {
    out << r.L << ',' << kernel_name(r.kernel) << ',' << r.drift_ratio << ',' << r.mean_wall_ms
        << ',' << r.max_net_evals << ',' << r.net_eval_bound << '\n';
  }
  close_csv(out, path);
}

void write_oracle_csv(const std::vector<oracle::PropagationRecord>& report,
                      const std::string& path) {
  auto out = open_csv(path, kOracleSchema, kOracleHeader);
  for (const auto& r : report) {
    out << r.t << ',' << r.e_cumu << ',' << r.e_mod << ',' << r.slack << ',';
    if (r.mu_eff) out << *r.mu_eff;
    out << ',' << r.entropy << ',' << int(r.flag_entropy) << ',' << int(r.flag_eps) << '\n';
  }
  close_csv(out, path);
}

namespace {

oracle::Mat random_spd(RandomStream& rs, int K, double lo, double hi) {
  oracle::Mat G(K, K);
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) G(i, j) = rs.normal();
  Eigen::HouseholderQR<oracle::Mat> qr(G);
  const oracle::Mat Q = qr.householderQ();
  Vector ev(K);
  for (int i = 0; i < K; ++i) ev(i) = lo + (hi - lo) * rs.uniform();
  oracle::Mat S = Q * ev.asDiagonal() * Q.transpose();
  return 0.5 * (S + S.transpose());
}

NoiseSchedule oracle_schedule(int T) {
  const LinearEndpoints e = default_linear_endpoints(T);
  return make_linear_schedule(T, e.beta_start, e.beta_end);
}

}  // namespace

oracle::GaussChain random_perturbed_chain(RandomStream& rs, int T, int K) {
  const NoiseSchedule sched = oracle_schedule(T);
  const double v0 = std::pow(10.0, -8.0 + 2.5 * rs.uniform());
  Vector m(K);
  for (int i = 0; i < K; ++i) m(i) = 2.0 * rs.uniform() - 1.0;
  oracle::Gaussian data(m, v0 * oracle::Mat::Identity(K, K));
  oracle::GaussChain c = rs.uniform() < 0.5 ? oracle::GaussChain::ddpm(sched, data)
                                             : oracle::GaussChain::perfect(sched, data, true);
  const int t = static_cast<int>(rs.uniform_int(1, T));
  const double mag = 0.05 * rs.uniform();
  switch (rs.uniform_int(0, 2)) {
    case 0: c.scale_A(t, 1.0 - mag); break;
    case 1: c.shift_b(t, Vector::Constant(K, mag)); break;
    default: c.inflate_sigma(t, 1.0 + mag); break;
  }
  return c;
}

oracle::GaussChain random_bounds_chain(RandomStream& rs, int T) {
  const NoiseSchedule sched = oracle_schedule(T);
  Vector m(2);
  m << rs.uniform() - 0.5, rs.uniform() - 0.5;
  oracle::Gaussian data(m, random_spd(rs, 2, 0.3, 1.5));
  oracle::GaussChain c = oracle::GaussChain::perfect(sched, data, true);
  const int n = static_cast<int>(rs.uniform_int(1, 3));
  for (int i = 0; i < n; ++i) {
    const int t = static_cast<int>(rs.uniform_int(1, std::min(T, 10)));
    Vector d(2);
    d << rs.normal(), rs.normal();
    c.shift_b(t, (0.05 + 0.15 * rs.uniform()) * d.normalized());
    c.scale_A(t, 0.95 + 0.1 * rs.uniform());
  }
  return c;
}

OracleOutcome run_oracle_scenario(const std::string& scenario, const std::string& out_dir,
                                  std::uint64_t seed) {
  if (std::find(kOracleScenarios.begin(), kOracleScenarios.end(), scenario) ==
      kOracleScenarios.end()) {
    throw std::invalid_argument("unknown oracle scenario '" + scenario +
                                "' (expected perfect, perturbed, assumption-violating or bounds)");
  }
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  OracleOutcome out;
  out.scenario = scenario;
  RandomStream rs = SeedTree(seed).child(tags::kOracle).stream(0);
  constexpr int T = 100;
  std::ostringstream line;
  line << std::setprecision(6);

  if (scenario == "perfect") {
    for (int K : {1, 2, 4}) {
      Vector m(K);
      for (int i = 0; i < K; ++i) m(i) = rs.normal();
      oracle::Gaussian data(m, random_spd(rs, K, 0.1, 2.0));
      const auto chain = oracle::GaussChain::perfect(oracle_schedule(T), data);
      const auto report = oracle::propagation_report(chain);
      double worst = 0.0;
      for (const auto& r : report) worst = std::max(worst, r.e_cumu);
      const bool ok = worst <= 1e-10;
      out.passed = out.passed && ok;
      const std::string f = (dir / ("oracle_perfect_K" + std::to_string(K) + ".csv")).string();
      write_oracle_csv(report, f);
      out.files.push_back(f);
      line.str("");
      line << "K=" << K << " max E_cumu=" << worst << (ok ? " ok" : " FAIL (> 1e-10)");
      out.lines.push_back(line.str());
    }
  } else if (scenario == "perturbed") {
    int flagged = 0, attempts = 0, violating = 0;
    double worst = 0.0;
    while (flagged < 20 && attempts < 5000) {
      ++attempts;
      const int K = 1 + attempts % 2;
      const auto chain = random_perturbed_chain(rs, T, K);
      const auto report = oracle::propagation_report(chain);
      if (!oracle::assumptions_hold(report)) continue;
      ++flagged;
      double mn = 0.0;
      for (const auto& r : report) mn = std::min(mn, r.slack);
      worst = std::min(worst, mn);
      if (mn < -1e-9) ++violating;
      const std::string f = (dir / ("oracle_perturbed_" + std::to_string(flagged) + ".csv")).string();
      write_oracle_csv(report, f);
      out.files.push_back(f);
    }
    line << flagged << " chains with both assumption flags true (" << attempts
         << " generated); " << violating << " with slack < -1e-9; min slack " << worst;
    out.lines.push_back(line.str());
    out.passed = flagged >= 20 && violating == 0;
    if (flagged < 20) out.lines.push_back("FAIL: fewer than 20 flag-true chains found");
  } else if (scenario == "assumption-violating") {
    out.assertable = false;
    Vector m(2);
    m << 1.0, -0.5;
    oracle::Mat S(2, 2);
    S << 4.0, 0.5, 0.5, 0.25;
    auto chain = oracle::GaussChain::ddpm(oracle_schedule(T), oracle::Gaussian(m, S));
    chain.inflate_sigma(20, 1.5);
    const auto report = oracle::propagation_report(chain);
    const std::string f = (dir / "oracle_assumption_violating.csv").string();
    write_oracle_csv(report, f);
    out.files.push_back(f);
    int neg = 0;
    for (const auto& r : report) neg += r.slack < -1e-9;
    line << "assumption flags hold: " << (oracle::assumptions_hold(report) ? "yes" : "no")
         << "; records with negative slack: " << neg << " of " << report.size();
    out.lines.push_back(line.str());
    out.lines.push_back("no-claim: propagation hypotheses unmet, report only");
  } else {
    const std::string f = (dir / "oracle_bounds.csv").string();
    auto csv = open_csv(f, kBoundsSchema, kBoundsHeader);
    int within = 0;
    constexpr int kChains = 30;
    for (int i = 0; i < kChains; ++i) {
      const auto chain = random_bounds_chain(rs, T);
      const auto b = oracle::bounds_check(chain, 1, KernelSpec{KernelFamily::kRbf}, 4000, 4000,
                                          SeedTree(seed).child(tags::kOracle).child(100 + i), 10);
      const double delta = 3.0 * b.mmd_se;
      const bool ok = b.kl_exact >= b.lower - delta && b.kl_exact <= b.upper + delta;
      within += ok;
      csv << i << ",1," << b.kl_exact << ',' << b.mmd_est << ',' << b.lower << ',' << b.upper
          << ',' << b.mmd_se << ',' << b.gamma << ',' << int(ok) << '\n';
    }
    close_csv(csv, f);
    out.files.push_back(f);
    line << within << "/" << kChains << " chains with KL in [mmd/4 - 3se, mmd + 3se]";
    out.lines.push_back(line.str());
    out.passed = within >= 28;
  }
  return out;
}

}  // namespace driftlab
