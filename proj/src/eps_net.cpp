#include "driftlab/eps_net.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "driftlab/counters.hpp"
#include "driftlab/forward.hpp"

namespace driftlab {

namespace {

using ConstRowMap = Eigen::Map<const Matrix>;
using RowMap = Eigen::Map<Matrix>;

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Matrix silu(const Matrix& z) {
  return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

Matrix silu_grad(const Matrix& z) {
  return z.unaryExpr([](double v) {
    const double s = sigmoid(v);
    return s * (1.0 + v * (1.0 - s));
  });
}

}  // namespace

Vector time_embedding(int t, int width) {
  if (width < 0 || width % 2 != 0) {
    throw std::invalid_argument("time_embedding: width must be even and >= 0");
  }
  Vector e(width);
  const int half = width / 2;
  for (int i = 0; i < half; ++i) {
    const double w = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
    e(2 * i) = std::sin(t * w);
    e(2 * i + 1) = std::cos(t * w);
  }
  return e;
}

EpsNet::EpsNet(EpsNetShape shape) : shape_(std::move(shape)) {
  if (shape_.dim < 1) throw std::invalid_argument("EpsNet: dim must be >= 1");
  if (shape_.time_embed < 0 || shape_.time_embed % 2 != 0) {
    throw std::invalid_argument("EpsNet: time_embed must be even and >= 0");
  }
  Eigen::Index in = shape_.dim + shape_.time_embed;
  Eigen::Index offset = 0;
  auto add = [&](Eigen::Index out) {
    Layer l{in, out, offset, offset + in * out};
    offset = l.b_offset + out;
    layers_.push_back(l);
    in = out;
  };
  for (int h : shape_.hidden) {
    if (h < 1) throw std::invalid_argument("EpsNet: hidden widths must be >= 1");
    add(h);
  }
  add(shape_.dim);
  params_ = Vector::Zero(offset);
}

EpsNet EpsNet::initialized(EpsNetShape shape, std::uint64_t seed) {
  EpsNet net(std::move(shape));
  const SeedTree tree = SeedTree(seed).child(tags::kInit);
  for (std::size_t li = 0; li < net.layers_.size(); ++li) {
    const Layer& l = net.layers_[li];
    RandomStream rs = tree.stream(li);
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in));
    for (Eigen::Index i = 0; i < l.in * l.out + l.out; ++i) {
      net.params_(l.w_offset + i) = bound * (2.0 * rs.uniform() - 1.0);
    }
  }
  return net;
}

void EpsNet::set_parameters(const Vector& p) {
  if (p.size() != params_.size()) {
    throw std::invalid_argument("EpsNet::set_parameters: expected " +
                                std::to_string(params_.size()) + " values, got " +
                                std::to_string(p.size()));
  }
  params_ = p;
}

Matrix EpsNet::forward(const Matrix& x, int t, Tape& tape) const {
  if (x.cols() != shape_.dim) {
    throw std::invalid_argument("EpsNet: input dimension " + std::to_string(x.cols()) +
                                " does not match network dimension " + std::to_string(shape_.dim));
  }
  const Eigen::Index n = x.rows();
  tape.pre.clear();
  tape.post.clear();
  Matrix a(n, shape_.dim + shape_.time_embed);
  a.leftCols(shape_.dim) = x;
  if (shape_.time_embed > 0) {
    a.rightCols(shape_.time_embed).rowwise() = time_embedding(t, shape_.time_embed).transpose();
  }
  tape.post.push_back(std::move(a));
  Matrix out;
  for (std::size_t li = 0; li < layers_.size(); ++li) {
    const Layer& l = layers_[li];
    const ConstRowMap W(params_.data() + l.w_offset, l.out, l.in);
    const Eigen::Map<const Vector> b(params_.data() + l.b_offset, l.out);
    Matrix z = tape.post.back() * W.transpose();
    z.rowwise() += b.transpose();
    if (li + 1 == layers_.size()) {
      out = std::move(z);
    } else {
      tape.post.push_back(silu(z));
      tape.pre.push_back(std::move(z));
    }
  }
  counters().net_evals += static_cast<std::uint64_t>(n);
  return out;
}

Matrix EpsNet::predict(const Matrix& x, int t) const {
  Tape tape;
  return forward(x, t, tape);
}

Matrix EpsNet::backward(const Tape& tape, const Matrix& grad_out, Vector& grad_params) const {
  if (grad_params.size() != params_.size()) {
    throw std::invalid_argument("EpsNet::backward: gradient vector has wrong length");
  }
  Matrix g = grad_out;
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const Layer& l = layers_[li];
    const Matrix& input = tape.post[li];
    RowMap dW(grad_params.data() + l.w_offset, l.out, l.in);
    Eigen::Map<Vector> db(grad_params.data() + l.b_offset, l.out);
    dW.noalias() += g.transpose() * input;
    db += g.colwise().sum().transpose();
    const ConstRowMap W(params_.data() + l.w_offset, l.out, l.in);
    Matrix gin = g * W;
    if (li > 0) gin.array() *= silu_grad(tape.pre[li - 1]).array();
    g = std::move(gin);
  }
  return g.leftCols(shape_.dim);
}

NllResult loss_nll_t(const EpsNet& net, const Batch& x0, int t, const NoiseSchedule& sched,
                     const SeedTree& seeds) {
  if (x0.size() < 1) throw std::invalid_argument("loss_nll_t: empty batch");
  JumpResult jump = forward_jump(x0, t, sched, seeds);
  EpsNet::Tape tape;
  const Matrix eps_hat = net.forward(jump.xt.data, t, tape);
  const Matrix resid = jump.noise - eps_hat;
  const double n = static_cast<double>(x0.size());
  NllResult r;
  r.loss = resid.squaredNorm() / n;
  r.grad = Vector::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  net.backward(tape, (-2.0 / n) * resid, r.grad);
  r.noise = std::move(jump.noise);
  return r;
}

double nll_loss_value(const NoisePredictor& predictor, const Batch& x0, int t,
                      const NoiseSchedule& sched, const SeedTree& seeds) {
  if (x0.size() < 1) throw std::invalid_argument("nll_loss_value: empty batch");
  const JumpResult jump = forward_jump(x0, t, sched, seeds);
  const Matrix eps_hat = predictor.predict(jump.xt.data, t);
  return (jump.noise - eps_hat).squaredNorm() / static_cast<double>(x0.size());
}

}  // namespace driftlab
