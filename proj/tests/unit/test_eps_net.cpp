#include <doctest.h>

#include <stdexcept>

#include <cmath>

#include "driftlab/eps_net.hpp"
#include "driftlab/forward.hpp"

using namespace driftlab;

namespace {

Matrix random_matrix(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  return standard_normal(n, k, SeedTree(seed));
}

}  // namespace

TEST_CASE("zero network predicts zero") {
  const EpsNet net(EpsNetShape{2, 8, {16, 16}});
  const Matrix out = net.predict(random_matrix(5, 2, 1), 17);
  CHECK(out.rows() == 5);
  CHECK(out.cols() == 2);
  CHECK(out.isZero(0.0));
}

TEST_CASE("parameter count and layout") {
  const EpsNet net(EpsNetShape{3, 4, {5}});
  // (3 + 4) -> 5 -> 3
  CHECK(net.parameter_count() == 7 * 5 + 5 + 5 * 3 + 3);
}

TEST_CASE("prediction is deterministic and checks dimensions") {
  const EpsNet net = EpsNet::initialized(EpsNetShape{2, 16, {32, 32}}, 3);
  const Matrix x = random_matrix(7, 2, 2);
  CHECK(net.predict(x, 5) == net.predict(x, 5));
  CHECK(net.predict(x, 5) != net.predict(x, 6));
  CHECK_THROWS_AS(net.predict(random_matrix(7, 3, 2), 5), std::invalid_argument);
  const EpsNet again = EpsNet::initialized(EpsNetShape{2, 16, {32, 32}}, 3);
  CHECK(again.parameters() == net.parameters());
}

TEST_CASE("time embedding") {
  const Vector e = time_embedding(0, 6);
  for (int i = 0; i < 3; ++i) {
    CHECK(e(2 * i) == 0.0);
    CHECK(e(2 * i + 1) == 1.0);
  }
  const Vector f = time_embedding(7, 4);
  CHECK(f(0) == doctest::Approx(std::sin(7.0)));
  CHECK(f(2) == doctest::Approx(std::sin(7.0 * std::pow(10000.0, -0.5))));
}

TEST_CASE("output derivative matches finite differences per parameter") {
  EpsNet net = EpsNet::initialized(EpsNetShape{2, 4, {6, 5}}, 11);
  const Matrix x = random_matrix(3, 2, 12);
  const Matrix dir = random_matrix(3, 2, 13);  // scalar = <dir, output>
  EpsNet::Tape tape;
  net.forward(x, 9, tape);
  Vector grad = Vector::Zero(static_cast<Eigen::Index>(net.parameter_count()));
  const Matrix gx = net.backward(tape, dir, grad);
  const double h = 1e-5;
  auto f = [&](const EpsNet& n, const Matrix& in) { return (n.predict(in, 9).array() * dir.array()).sum(); };
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    EpsNet p = net, m = net;
    p.mutable_parameters()(i) += h;
    m.mutable_parameters()(i) -= h;
    const double fd = (f(p, x) - f(m, x)) / (2 * h);
    CHECK(std::abs(fd - grad(i)) <= 1e-4 * std::max(1.0, std::abs(fd)));
  }
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
      Matrix xp = x, xm = x;
      xp(r, c) += h;
      xm(r, c) -= h;
      const double fd = (f(net, xp) - f(net, xm)) / (2 * h);
      CHECK(std::abs(fd - gx(r, c)) <= 1e-4 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("nll loss") {
  const auto sched = make_linear_schedule(50, 1e-3, 0.1);
  SUBCASE("zero net gives mean squared noise") {
    const EpsNet net(EpsNetShape{2, 4, {8}});
    const Batch x0 = Batch::from_data(random_matrix(4000, 2, 1));
    const auto r = loss_nll_t(net, x0, 10, sched, SeedTree(5));
    CHECK(r.loss == doctest::Approx(r.noise.squaredNorm() / 4000.0));
    CHECK(r.loss == doctest::Approx(2.0).epsilon(0.05));
    CHECK(r.grad.size() == static_cast<Eigen::Index>(net.parameter_count()));
  }
  SUBCASE("a predictor returning the sampled noise has zero loss") {
    struct Cheat final : NoisePredictor {
      Matrix noise;
      Matrix predict(const Matrix&, int) const override { return noise; }
      Eigen::Index dim() const override { return 2; }
    } cheat;
    const Batch x0 = Batch::from_data(random_matrix(16, 2, 1));
    cheat.noise = forward_jump(x0, 7, sched, SeedTree(5)).noise;
    CHECK(nll_loss_value(cheat, x0, 7, sched, SeedTree(5)) == 0.0);
  }
  SUBCASE("value-only path agrees and loss is order invariant") {
    const EpsNet net = EpsNet::initialized(EpsNetShape{2, 4, {8}}, 2);
    const Batch x0 = Batch::from_data(random_matrix(32, 2, 3));
    const auto r = loss_nll_t(net, x0, 20, sched, SeedTree(6));
    CHECK(r.loss == nll_loss_value(net, x0, 20, sched, SeedTree(6)));
    CHECK(r.loss >= 0.0);
    // reversing rows and their noise leaves the mean unchanged
    const auto j = forward_jump(x0, 20, sched, SeedTree(6));
    const Matrix rev_x = j.xt.data.colwise().reverse();
    const Matrix rev_n = j.noise.colwise().reverse();
    const double rev = (rev_n - net.predict(rev_x, 20)).squaredNorm() / 32.0;
    CHECK(rev == doctest::Approx(r.loss).epsilon(1e-14));
  }
  SUBCASE("gradient matches finite differences on a tiny net") {
    const EpsNet net = EpsNet::initialized(EpsNetShape{1, 0, {1}}, 4);
    CHECK(net.parameter_count() == 4);
    const Batch x0 = Batch::from_data(random_matrix(8, 1, 3));
    const auto r = loss_nll_t(net, x0, 30, sched, SeedTree(6));
    for (Eigen::Index i = 0; i < 4; ++i) {
      EpsNet p = net, m = net;
      p.mutable_parameters()(i) += 1e-6;
      m.mutable_parameters()(i) -= 1e-6;
      const double fd = (nll_loss_value(p, x0, 30, sched, SeedTree(6)) -
                         nll_loss_value(m, x0, 30, sched, SeedTree(6))) / 2e-6;
      CHECK(std::abs(fd - r.grad(i)) < 1e-6);
    }
  }
  CHECK_THROWS(loss_nll_t(EpsNet(EpsNetShape{}), Batch(), 3, sched, SeedTree(1)));
}
