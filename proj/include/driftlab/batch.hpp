#pragma once

#include <Eigen/Dense>
#include <string_view>

namespace driftlab {

/// Row-major sample matrix: one sample per row, K columns.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Origin { kData, kForward, kBackward, kBootstrap };

std::string_view origin_name(Origin o) noexcept;

/// N samples of dimension K sharing one time index.
struct Batch {
  Matrix data;
  int t = 0;
  Origin origin = Origin::kData;

  Batch() = default;
  Batch(Matrix d, int time, Origin o);

  Eigen::Index size() const noexcept { return data.rows(); }
  Eigen::Index dim() const noexcept { return data.cols(); }

  static Batch from_data(Matrix d) { return Batch(std::move(d), 0, Origin::kData); }
};

}  // namespace driftlab
