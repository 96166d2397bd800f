#include "driftlab/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>

namespace driftlab {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected a number, got '" + v + "'");
  return out;
}

template <typename I>
I to_int(const std::string& v) {
  I out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw std::invalid_argument("expected an integer, got '" + v + "'");
  return out;
}

bool to_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_int<int>(trim(item)));
  if (out.empty()) throw std::invalid_argument("expected a comma-separated list");
  return out;
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> m = {
      {"T", [](TrainConfig& c, const std::string& v) { c.T = to_int<int>(v); }},
      {"K", [](TrainConfig& c, const std::string& v) { c.K = to_int<int>(v); }},
      {"batch_size", [](TrainConfig& c, const std::string& v) { c.batch_size = to_int<int>(v); }},
      {"L", [](TrainConfig& c, const std::string& v) { c.L = to_int<int>(v); }},
      {"lambda_nll", [](TrainConfig& c, const std::string& v) { c.lambda_nll = to_double(v); }},
      {"lambda_reg", [](TrainConfig& c, const std::string& v) { c.lambda_reg = to_double(v); }},
      {"rho", [](TrainConfig& c, const std::string& v) { c.rho = to_double(v); }},
      {"learning_rate", [](TrainConfig& c, const std::string& v) { c.learning_rate = to_double(v); }},
      {"optimizer", [](TrainConfig& c, const std::string& v) { c.optimizer = parse_optimizer(v); }},
      {"steps", [](TrainConfig& c, const std::string& v) { c.steps = to_int<std::int64_t>(v); }},
      {"seed", [](TrainConfig& c, const std::string& v) { c.seed = to_int<std::uint64_t>(v); }},
      {"kernel", [](TrainConfig& c, const std::string& v) { c.kernel.family = parse_kernel(v); }},
      {"kernel_gamma",
       [](TrainConfig& c, const std::string& v) {
         if (v == "median") {
           c.kernel.mode = BandwidthMode::kMedianHeuristic;
         } else {
           c.kernel.mode = BandwidthMode::kFixed;
           c.kernel.gamma = to_double(v);
         }
       }},
      {"estimator", [](TrainConfig& c, const std::string& v) { c.estimator = parse_estimator(v); }},
      {"dataset", [](TrainConfig& c, const std::string& v) { c.dataset.kind = parse_dataset_kind(v); }},
      {"csv_path", [](TrainConfig& c, const std::string& v) { c.dataset.csv_path = v; }},
      {"normalization",
       [](TrainConfig& c, const std::string& v) {
         if (v == "none") c.dataset.normalization = Normalization::kNone;
         else if (v == "standardize") c.dataset.normalization = Normalization::kStandardize;
         else throw std::invalid_argument("normalization must be none or standardize");
       }},
      {"mixture_modes", [](TrainConfig& c, const std::string& v) { c.dataset.mixture_modes = to_int<int>(v); }},
      {"mixture_radius", [](TrainConfig& c, const std::string& v) { c.dataset.mixture_radius = to_double(v); }},
      {"mixture_std", [](TrainConfig& c, const std::string& v) { c.dataset.mixture_std = to_double(v); }},
      {"regularize", [](TrainConfig& c, const std::string& v) { c.regularize = to_bool(v); }},
      {"sigma_mode",
       [](TrainConfig& c, const std::string& v) {
         if (v == "beta") c.sigma_mode = SigmaMode::kBeta;
         else if (v == "posterior") c.sigma_mode = SigmaMode::kPosterior;
         else throw std::invalid_argument("sigma_mode must be beta or posterior");
       }},
      {"record_every", [](TrainConfig& c, const std::string& v) { c.record_every = to_int<std::int64_t>(v); }},
      {"record_timing", [](TrainConfig& c, const std::string& v) { c.record_timing = to_bool(v); }},
      {"beta_start", [](TrainConfig& c, const std::string& v) { c.beta_start = to_double(v); }},
      {"beta_end", [](TrainConfig& c, const std::string& v) { c.beta_end = to_double(v); }},
      {"hidden", [](TrainConfig& c, const std::string& v) { c.hidden = to_int_list(v); }},
      {"time_embed", [](TrainConfig& c, const std::string& v) { c.time_embed = to_int<int>(v); }},
      {"noiseless_last_step", [](TrainConfig& c, const std::string& v) { c.noiseless_last_step = to_bool(v); }},
      {"warm_start", [](TrainConfig& c, const std::string& v) { c.warm_start = to_bool(v); }},
  };
  return m;
}

}  // namespace

TrainConfig parse_config(const std::string& text, const std::string& origin) {
  TrainConfig c;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(origin, line, "expected 'key = value'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(origin, line, "unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError(origin, line, "duplicate key '" + key + "'");
    if (value.empty()) throw ConfigError(origin, line, "missing value for '" + key + "'");
    try {
      it->second(c, value);
    } catch (const std::exception& e) {
      throw ConfigError(origin, line, key + ": " + e.what());
    }
  }
  c.dataset.dim = c.K;
  // regularize = false without explicit weights means the vanilla objective
  if (!c.regularize && !seen.count("lambda_reg") && !seen.count("lambda_nll")) c.disable_regularization();
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(origin, 0, e.what());
  }
  return c;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

std::string config_to_text(const TrainConfig& c) {
  std::ostringstream os;
  os << std::setprecision(17);
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "T = " << c.T << '\n'
     << "K = " << c.K << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "L = " << c.L << '\n'
     << "lambda_nll = " << c.lambda_nll << '\n'
     << "lambda_reg = " << c.lambda_reg << '\n'
     << "rho = " << c.rho << '\n'
     << "learning_rate = " << c.learning_rate << '\n'
     << "optimizer = " << optimizer_name(c.optimizer) << '\n'
     << "steps = " << c.steps << '\n'
     << "seed = " << c.seed << '\n'
     << "kernel = " << kernel_name(c.kernel.family) << '\n';
  if (c.kernel.mode == BandwidthMode::kFixed) os << "kernel_gamma = " << c.kernel.gamma << '\n';
  else os << "kernel_gamma = median\n";
  os << "estimator = " << estimator_name(c.estimator) << '\n';
  switch (c.dataset.kind) {
    case DatasetKind::kGaussianMixture: os << "dataset = gaussian-mixture\n"; break;
    case DatasetKind::kSwissRoll: os << "dataset = swiss-roll\n"; break;
    case DatasetKind::kTwoMoons: os << "dataset = two-moons\n"; break;
    case DatasetKind::kCsv: os << "dataset = csv\ncsv_path = " << c.dataset.csv_path << '\n'; break;
  }
  os << "normalization = "
     << (c.dataset.normalization == Normalization::kStandardize ? "standardize" : "none") << '\n'
     << "mixture_modes = " << c.dataset.mixture_modes << '\n'
     << "mixture_radius = " << c.dataset.mixture_radius << '\n'
     << "mixture_std = " << c.dataset.mixture_std << '\n'
     << "regularize = " << b(c.regularize) << '\n'
     << "sigma_mode = " << (c.sigma_mode == SigmaMode::kBeta ? "beta" : "posterior") << '\n'
     << "record_every = " << c.record_every << '\n'
     << "record_timing = " << b(c.record_timing) << '\n';
  if (c.beta_start) os << "beta_start = " << *c.beta_start << '\n';
  if (c.beta_end) os << "beta_end = " << *c.beta_end << '\n';
  os << "hidden = ";
  for (std::size_t i = 0; i < c.hidden.size(); ++i) os << (i ? "," : "") << c.hidden[i];
  os << '\n'
     << "time_embed = " << c.time_embed << '\n'
     << "noiseless_last_step = " << b(c.noiseless_last_step) << '\n'
     << "warm_start = " << b(c.warm_start) << '\n';
  return os.str();
}

}  // namespace driftlab
