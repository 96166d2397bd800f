#pragma once

#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "driftlab/batch.hpp"

namespace driftlab {

enum class DatasetKind { kGaussianMixture, kSwissRoll, kTwoMoons, kCsv };
enum class Normalization { kNone, kStandardize };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussianMixture;
  std::string csv_path;
  int dim = 2;
  Normalization normalization = Normalization::kNone;
  int mixture_modes = 8;
  double mixture_radius = 2.0;
  double mixture_std = 0.1;
};

std::string dataset_id(const DatasetSpec& spec);
DatasetKind parse_dataset_kind(const std::string& name);

/// Deterministic batch source. A batch is keyed by (seed, step, stream)
/// so resuming at any step reproduces the same data.
class DataSource {
 public:
  virtual ~DataSource() = default;
  virtual Matrix batch(std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
                       Eigen::Index n) const = 0;
  virtual Eigen::Index dim() const = 0;
  virtual std::string id() const = 0;
};

/// Infinite sampler for the built-in 2-D toy sets.
class BuiltinSource final : public DataSource {
 public:
  explicit BuiltinSource(DatasetSpec spec);
  Matrix batch(std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
               Eigen::Index n) const override;
  Eigen::Index dim() const override { return 2; }
  std::string id() const override { return dataset_id(spec_); }

 private:
  DatasetSpec spec_;
};

/// In-memory rows cycled in seed-shuffled epochs.
class TableSource final : public DataSource {
 public:
  TableSource(Matrix rows, std::string id, Normalization norm = Normalization::kNone);

  Matrix batch(std::uint64_t seed, std::uint64_t step, std::uint64_t stream,
               Eigen::Index n) const override;
  Eigen::Index dim() const override { return rows_.cols(); }
  std::string id() const override { return id_; }

  const Matrix& rows() const noexcept { return rows_; }
  /// Per-dimension shift/scale applied at ingest (zero/one when none).
  const Vector& offset() const noexcept { return offset_; }
  const Vector& scale() const noexcept { return scale_; }

 private:
  const std::vector<Eigen::Index>& epoch_order(std::uint64_t seed, std::uint64_t epoch) const;

  Matrix rows_;
  std::string id_;
  Vector offset_;
  Vector scale_;
  mutable std::mutex cache_mu_;
  mutable std::uint64_t cached_key_ = ~std::uint64_t{0};
  mutable std::vector<Eigen::Index> cached_order_;
};

/// Parses a numeric CSV with exactly k columns per row. A first line that
/// does not parse as numbers is taken as a header. Errors name the row.
Matrix read_csv_rows(const std::string& path, int k);

std::unique_ptr<TableSource> ingest_csv(const std::string& path, int k,
                                        Normalization norm = Normalization::kNone);

std::unique_ptr<DataSource> make_source(const DatasetSpec& spec);

}  // namespace driftlab
