#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "driftlab/config.hpp"
#include "driftlab/harness.hpp"

namespace fs = std::filesystem;
using namespace driftlab;

namespace {

struct CommonDrift {
  std::string kernels = "rbf,laplace,rq";
  Eigen::Index N = 1000;
  Eigen::Index M = 1000;
  std::string t_grid;
  std::string estimator = "v";
};

void add_drift_flags(CLI::App* cmd, CommonDrift& d) {
  cmd->add_option("--kernels", d.kernels, "Comma-separated kernels: rbf, laplace, rq")
      ->capture_default_str();
  cmd->add_option("--N", d.N, "Backward samples per t")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--M", d.M, "Reference samples per t")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--t-grid", d.t_grid, "Comma-separated t values (default: 10 points over [1, T])");
  cmd->add_option("--estimator", d.estimator, "MMD estimator")
      ->check(CLI::IsMember({"v", "u"}))
      ->capture_default_str();
}

DriftOptions to_options(const CommonDrift& d, int T, std::uint64_t seed) {
  DriftOptions o;
  o.kernels = parse_kernel_list(d.kernels);
  o.N = d.N;
  o.M = d.M;
  o.t_grid = d.t_grid.empty() ? default_t_grid(T) : parse_t_grid(d.t_grid, T);
  o.estimator = parse_estimator(d.estimator);
  o.seed = seed;
  return o;
}

TrainConfig config_or_default(const std::string& path) {
  return path.empty() ? TrainConfig{} : load_config(path);
}

void write_run_metadata(const TrainConfig& cfg, const DataSource& data, const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << "# dataset: " << data.id() << '\n';
  if (const auto* table = dynamic_cast<const TableSource*>(&data)) {
    out << std::setprecision(17) << "# normalization offset:";
    for (Eigen::Index i = 0; i < table->offset().size(); ++i) out << ' ' << table->offset()(i);
    out << "\n# normalization scale:";
    for (Eigen::Index i = 0; i < table->scale().size(); ++i) out << ' ' << table->scale()(i);
    out << '\n';
  }
  out << config_to_text(cfg);
}

int cmd_train(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out_dir,
              bool no_reg) {
  TrainConfig cfg = config_or_default(config);
  if (seed) cfg.seed = *seed;
  if (no_reg) cfg.disable_regularization();
  cfg.validate();
  const auto data = make_source(cfg.dataset);
  fs::create_directories(out_dir);
  write_run_metadata(cfg, *data, fs::path(out_dir) / "run.cfg");
  std::cout << "training " << cfg.steps << " steps on " << data->id() << " (lambda_nll="
            << cfg.lambda_nll << ", lambda_reg=" << cfg.lambda_reg << ", L=" << cfg.L
            << ", rho=" << cfg.rho << ")\n";
  TrainResult res = train(cfg, *data, std::nullopt, [](const MetricsRecord& r) {
    std::cout << "step " << r.step << " loss " << r.loss_total << " nll " << r.loss_nll << " reg "
              << r.loss_reg << " t " << r.t << " s " << r.s << '\n';
  });
  const fs::path metrics = fs::path(out_dir) / "metrics.csv";
  const fs::path ckpt = fs::path(out_dir) / "checkpoint.dlab";
  write_metrics_csv(res.metrics, metrics.string());
  const Checkpoint c = make_checkpoint(res.state, cfg);
  save_checkpoint(c, ckpt.string());
  std::cout << "wrote " << metrics.string() << " and " << ckpt.string() << " (id "
            << checkpoint_id(c) << ")\n";
  return 0;
}

int cmd_drift(const std::string& checkpoint, const std::string& config,
              std::optional<std::uint64_t> seed, const std::string& out, const CommonDrift& d,
              const std::string& reference, int L) {
  const Checkpoint c = load_checkpoint(checkpoint);
  const TrainConfig cfg = config_or_default(config);
  const auto data = make_source(cfg.dataset);
  DriftOptions o = to_options(d, c.T, seed.value_or(0));
  o.reference = reference == "bootstrap" ? DriftReference::kBootstrap : DriftReference::kForward;
  o.L = L;
  const EpsNet net = c.net();
  DriftSeries s = measure_drift(net, c.schedule(), *data, o);
  s.checkpoint_id = checkpoint_id(c);
  if (auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_drift_csv(s, out);
  std::cout << std::setprecision(6);
  for (const auto& k : o.kernels) {
    if (o.t_grid.size() > 1 && o.t_grid.back() == 1) {
      std::cout << kernel_name(k.family) << " drift ratio value(t=1)/value(t=" << o.t_grid.front()
                << ") = " << drift_ratio(s, k.family) << '\n';
    }
  }
  std::cout << "wrote " << out << '\n';
  return 0;
}

int cmd_sweep(const std::string& config, std::optional<std::uint64_t> seed, const std::string& out,
              const CommonDrift& d, const std::string& Ls) {
  TrainConfig cfg = config_or_default(config);
  if (seed) cfg.seed = *seed;
  std::vector<int> list;
  std::stringstream ss(Ls);
  std::string item;
  while (std::getline(ss, item, ',')) list.push_back(std::stoi(item));
  const auto data = make_source(cfg.dataset);
  const auto recs = sweep_L(cfg, *data, list, to_options(d, cfg.T, cfg.seed));
  if (auto parent = fs::path(out).parent_path(); !parent.empty()) fs::create_directories(parent);
  write_sweep_csv(recs, out);
  for (const auto& r : recs) {
    std::cout << "L=" << r.L << ' ' << kernel_name(r.kernel) << " ratio=" << r.drift_ratio
              << " wall_ms/step=" << r.mean_wall_ms << '\n';
  }
  std::cout << "wrote " << out << '\n';
  return 0;
}

int cmd_oracle(const std::string& scenario, const std::string& out_dir, std::uint64_t seed) {
  const OracleOutcome o = run_oracle_scenario(scenario, out_dir, seed);
  for (const auto& l : o.lines) std::cout << scenario << ": " << l << '\n';
  if (!o.assertable) {
    std::cout << scenario << ": no-claim\n";
    return 0;
  }
  std::cout << scenario << ": " << (o.passed ? "PASS" : "FAIL") << '\n';
  return o.passed ? 0 : 1;
}

int cmd_ingest(const std::string& path, int K, bool standardize) {
  const auto src = ingest_csv(path, K, standardize ? Normalization::kStandardize : Normalization::kNone);
  const Matrix& rows = src->rows();
  const Vector mean = rows.colwise().mean();
  const Vector var = (rows.rowwise() - mean.transpose()).array().square().colwise().mean();
  std::cout << std::setprecision(6) << path << ": " << rows.rows() << " rows, K = " << rows.cols()
            << '\n';
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    std::cout << "  dim " << j << ": mean " << mean(j) << " var " << var(j) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"driftlab: error propagation in diffusion models at desk scale"};
  app.require_subcommand(1);

  std::string config, out, checkpoint, reference = "forward", scenario, Ls = "1,3,5,7", path;
  std::optional<std::uint64_t> seed;
  bool no_reg = false, standardize = false;
  int L = 5, K = 2;
  CommonDrift d;

  auto* train_cmd = app.add_subcommand("train", "Train a noise predictor");
  train_cmd->add_option("--config", config, "Config file (key = value)");
  train_cmd->add_option("--seed", seed, "Override the config seed");
  train_cmd->add_option("--out", out, "Output directory")->default_val("run");
  train_cmd->add_flag("--no-reg", no_reg, "Disable the regularization term");

  auto* drift_cmd = app.add_subcommand("drift", "Measure MMD drift against the forward process");
  drift_cmd->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  drift_cmd->add_option("--config", config, "Config naming the dataset");
  drift_cmd->add_option("--seed", seed, "Sampling seed (default 0)");
  drift_cmd->add_option("--out", out, "Output CSV")->default_val("drift.csv");
  drift_cmd->add_option("--reference", reference, "Reference samples")
      ->check(CLI::IsMember({"forward", "bootstrap"}))
      ->capture_default_str();
  drift_cmd->add_option("--L", L, "Bootstrap span for --reference bootstrap")->capture_default_str();
  add_drift_flags(drift_cmd, d);

  auto* sweep_cmd = app.add_subcommand("sweep-l", "Train one model per bootstrap span L");
  sweep_cmd->add_option("--config", config, "Config file (key = value)");
  sweep_cmd->add_option("--seed", seed, "Override the config seed");
  sweep_cmd->add_option("--out", out, "Output CSV")->default_val("sweep_l.csv");
  sweep_cmd->add_option("--L", Ls, "Comma-separated spans")->capture_default_str();
  add_drift_flags(sweep_cmd, d);

  auto* oracle_cmd = app.add_subcommand("oracle", "Closed-form linear-Gaussian checks");
  oracle_cmd->add_option("scenario", scenario, "perfect | perturbed | assumption-violating | bounds")
      ->required();
  oracle_cmd->add_option("--out", out, "Output directory")->default_val("oracle");
  oracle_cmd->add_option("--seed", seed, "Seed (default 0)");

  auto* ingest_cmd = app.add_subcommand("ingest-check", "Validate a CSV dataset");
  ingest_cmd->add_option("path", path, "CSV file")->required();
  ingest_cmd->add_option("--K", K, "Columns per row")->capture_default_str();
  ingest_cmd->add_flag("--standardize", standardize, "Report moments after standardization");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config, seed, out, no_reg);
    if (*drift_cmd) return cmd_drift(checkpoint, config, seed, out, d, reference, L);
    if (*sweep_cmd) return cmd_sweep(config, seed, out, d, Ls);
    if (*oracle_cmd) return cmd_oracle(scenario, out, seed.value_or(0));
    if (*ingest_cmd) return cmd_ingest(path, K, standardize);
  } catch (const std::exception& e) {
    std::cerr << "driftlab: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
