#pragma once

#include <cstdint>
#include <vector>

#include "driftlab/batch.hpp"
#include "driftlab/random.hpp"
#include "driftlab/schedule.hpp"

namespace driftlab {

/// Anything that maps (x_t, t) to a noise estimate of the same shape.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  virtual Matrix predict(const Matrix& x, int t) const = 0;
  virtual Eigen::Index dim() const = 0;
};

struct EpsNetShape {
  int dim = 2;
  int time_embed = 16;
  std::vector<int> hidden = {128, 128, 128};

  bool operator==(const EpsNetShape&) const = default;
};

/// Sinusoidal embedding of the raw integer t: pairs (sin(t w_i), cos(t w_i))
/// with w_i = 10000^(-i / (E/2)), i = 0 .. E/2 - 1.
Vector time_embedding(int t, int width);

/// MLP eps predictor: input [x | emb(t)], SiLU hidden layers, linear output.
///
/// Parameters live in one flat vector. Enumeration order, layer by layer
/// from input to output: weight matrix (out x in, row-major), then bias.
class EpsNet final : public NoisePredictor {
 public:
  /// Intermediate activations kept for the backward pass.
  struct Tape {
    std::vector<Matrix> pre;   // pre-activations per hidden layer
    std::vector<Matrix> post;  // post[0] is the input [x | emb]
  };

  /// All parameters zero.
  explicit EpsNet(EpsNetShape shape);

  /// Fan-in scaled uniform init, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static EpsNet initialized(EpsNetShape shape, std::uint64_t seed);

  const EpsNetShape& shape() const noexcept { return shape_; }
  Eigen::Index dim() const override { return shape_.dim; }
  std::size_t parameter_count() const noexcept { return static_cast<std::size_t>(params_.size()); }

  const Vector& parameters() const noexcept { return params_; }
  void set_parameters(const Vector& p);
  Vector& mutable_parameters() noexcept { return params_; }

  Matrix predict(const Matrix& x, int t) const override;
  Matrix forward(const Matrix& x, int t, Tape& tape) const;

  /// Accumulates d(loss)/d(params) into grad_params and returns
  /// d(loss)/d(x) for the x part of the input.
  Matrix backward(const Tape& tape, const Matrix& grad_out, Vector& grad_params) const;

 private:
  struct Layer {
    Eigen::Index in, out, w_offset, b_offset;
  };

  EpsNetShape shape_;
  std::vector<Layer> layers_;
  Vector params_;
};

struct NllResult {
  double loss = 0.0;
  Vector grad;
  Matrix noise;
};

/// Batch-mean ||eps - eps_hat(sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, t)||^2
/// and its exact gradient. Noise comes from seeds (tag kJump).
NllResult loss_nll_t(const EpsNet& net, const Batch& x0, int t, const NoiseSchedule& sched,
                     const SeedTree& seeds);

/// Loss value only, for any predictor, with the same noise as loss_nll_t.
double nll_loss_value(const NoisePredictor& predictor, const Batch& x0, int t,
                      const NoiseSchedule& sched, const SeedTree& seeds);

}  // namespace driftlab
