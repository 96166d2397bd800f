#include "driftlab/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string_view>

#include "driftlab/random.hpp"

namespace driftlab {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view cell, double& out) {
  cell = trim(cell);
  if (cell.empty()) return false;
  if (cell.front() == '+') cell.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), out);
  return ec == std::errc() && ptr == cell.data() + cell.size() && std::isfinite(out);
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    cells.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return cells;
}

}  // namespace

std::string dataset_id(const DatasetSpec& spec) {
  std::ostringstream os;
  switch (spec.kind) {
    case DatasetKind::kGaussianMixture:
      os << "gaussian-mixture:" << spec.mixture_modes << ":" << spec.mixture_radius << ":"
         << spec.mixture_std;
      break;
    case DatasetKind::kSwissRoll: os << "swiss-roll"; break;
    case DatasetKind::kTwoMoons: os << "two-moons"; break;
    case DatasetKind::kCsv: os << "csv:" << spec.csv_path; break;
  }
  if (spec.normalization == Normalization::kStandardize) os << ":standardized";
  return os.str();
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "gaussian-mixture" || name == "mixture") return DatasetKind::kGaussianMixture;
  if (name == "swiss-roll") return DatasetKind::kSwissRoll;
  if (name == "two-moons") return DatasetKind::kTwoMoons;
  if (name == "csv") return DatasetKind::kCsv;
  throw std::invalid_argument("unknown dataset '" + name +
                              "' (expected gaussian-mixture, swiss-roll, two-moons or csv)");
}

BuiltinSource::BuiltinSource(DatasetSpec spec) : spec_(std::move(spec)) {
  if (spec_.kind == DatasetKind::kCsv) throw std::invalid_argument("BuiltinSource: csv spec");
  if (spec_.dim != 2) throw std::invalid_argument("built-in datasets are 2-dimensional");
  if (spec_.mixture_modes < 1) throw std::invalid_argument("mixture needs at least one mode");
}

Matrix BuiltinSource::batch(std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
                            Eigen::Index n) const {
  const SeedTree tree = SeedTree(seed).child(tags::kData).child(step).child(stream);
  Matrix out(n, 2);
  constexpr double pi = std::numbers::pi;
  for (Eigen::Index i = 0; i < n; ++i) {
    RandomStream rs = tree.stream(static_cast<std::uint64_t>(i));
    switch (spec_.kind) {
      case DatasetKind::kGaussianMixture: {
        const auto mode = rs.uniform_int(0, spec_.mixture_modes - 1);
        const double angle = 2.0 * pi * static_cast<double>(mode) / spec_.mixture_modes;
        out(i, 0) = spec_.mixture_radius * std::cos(angle) + spec_.mixture_std * rs.normal();
        out(i, 1) = spec_.mixture_radius * std::sin(angle) + spec_.mixture_std * rs.normal();
        break;
      }
      case DatasetKind::kSwissRoll: {
        const double theta = 1.5 * pi * (1.0 + 2.0 * rs.uniform());
        out(i, 0) = theta * std::cos(theta) / 5.0 + 0.05 * rs.normal();
        out(i, 1) = theta * std::sin(theta) / 5.0 + 0.05 * rs.normal();
        break;
      }
      case DatasetKind::kTwoMoons: {
        const bool upper = rs.uniform() < 0.5;
        const double a = pi * rs.uniform();
        const double x = upper ? std::cos(a) : 1.0 - std::cos(a);
        const double y = upper ? std::sin(a) : 0.5 - std::sin(a);
        out(i, 0) = 1.5 * (x - 0.5) + 0.05 * rs.normal();
        out(i, 1) = 1.5 * (y - 0.25) + 0.05 * rs.normal();
        break;
      }
      case DatasetKind::kCsv: break;
    }
  }
  return out;
}

TableSource::TableSource(Matrix rows, std::string id, Normalization norm)
    : rows_(std::move(rows)), id_(std::move(id)) {
  if (rows_.rows() < 1) throw std::invalid_argument("dataset '" + id_ + "' is empty");
  offset_ = Vector::Zero(rows_.cols());
  scale_ = Vector::Ones(rows_.cols());
  if (norm == Normalization::kStandardize) {
    const double n = static_cast<double>(rows_.rows());
    offset_ = rows_.colwise().sum().transpose() / n;
    rows_.rowwise() -= offset_.transpose();
    for (Eigen::Index j = 0; j < rows_.cols(); ++j) {
      const double sd = std::sqrt(rows_.col(j).squaredNorm() / n);
      scale_(j) = sd > 0.0 ? sd : 1.0;
      rows_.col(j) /= scale_(j);
    }
  }
}

const std::vector<Eigen::Index>& TableSource::epoch_order(std::uint64_t seed,
                                                          std::uint64_t epoch) const {
  const std::uint64_t key = mix64(seed ^ mix64(epoch + 1));
  if (key != cached_key_) {
    cached_order_.resize(static_cast<std::size_t>(rows_.rows()));
    std::iota(cached_order_.begin(), cached_order_.end(), Eigen::Index{0});
    RandomStream rs = SeedTree(seed).child(tags::kShuffle).stream(epoch);
    std::shuffle(cached_order_.begin(), cached_order_.end(), rs);
    cached_key_ = key;
  }
  return cached_order_;
}

Matrix TableSource::batch(std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
                          Eigen::Index n) const {
  // Streams 0 and 1 interleave so both see every row once per epoch pair.
  constexpr std::uint64_t kStreams = 2;
  const auto rows = static_cast<std::uint64_t>(rows_.rows());
  Matrix out(n, rows_.cols());
  std::lock_guard lock(cache_mu_);
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::uint64_t pos =
        (step * kStreams + stream) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(i);
    const auto& order = epoch_order(seed, pos / rows);
    out.row(i) = rows_.row(order[static_cast<std::size_t>(pos % rows)]);
  }
  return out;
}

Matrix read_csv_rows(const std::string& path, int k) {
  if (k < 1) throw std::invalid_argument("csv: dimension must be >= 1");
  std::ifstream in(path);
  if (!in) throw std::runtime_error("csv: cannot open '" + path + "'");
  std::vector<double> values;
  std::string line;
  std::size_t line_no = 0;
  bool seen_first = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    const auto cells = split_commas(view);
    std::vector<double> row;
    row.reserve(cells.size());
    bool numeric = true;
    for (std::string_view c : cells) {
      double v = 0.0;
      if (!parse_double(c, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!seen_first) {
      seen_first = true;
      if (!numeric) continue;  // header
    }
    if (static_cast<int>(cells.size()) != k) {
      throw std::runtime_error("csv: '" + path + "' line " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " columns, expected " +
                               std::to_string(k));
    }
    if (!numeric) {
      throw std::runtime_error("csv: '" + path + "' line " + std::to_string(line_no) +
                               " contains a non-numeric cell");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  if (values.empty()) throw std::runtime_error("csv: '" + path + "' is an empty dataset");
  const Eigen::Index n = static_cast<Eigen::Index>(values.size()) / k;
  return Eigen::Map<const Matrix>(values.data(), n, k);
}

std::unique_ptr<TableSource> ingest_csv(const std::string& path, int k, Normalization norm) {
  DatasetSpec spec;
  spec.kind = DatasetKind::kCsv;
  spec.csv_path = path;
  spec.dim = k;
  spec.normalization = norm;
  return std::make_unique<TableSource>(read_csv_rows(path, k), dataset_id(spec), norm);
}

std::unique_ptr<DataSource> make_source(const DatasetSpec& spec) {
  if (spec.kind == DatasetKind::kCsv) return ingest_csv(spec.csv_path, spec.dim, spec.normalization);
  return std::make_unique<BuiltinSource>(spec);
}

}  // namespace driftlab
