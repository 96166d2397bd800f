#include <doctest.h>

#include <stdexcept>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "driftlab/counters.hpp"
#include "driftlab/forward.hpp"
#include "driftlab/trainer.hpp"

using namespace driftlab;

namespace {

TrainConfig small_config() {
  TrainConfig c;
  c.T = 20;
  c.batch_size = 16;
  c.hidden = {16, 16};
  c.time_embed = 8;
  c.steps = 10;
  c.record_every = 1;
  c.record_timing = false;
  c.seed = 3;
  return c;
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("driftlab_trainer_" + name)).string();
}

}  // namespace

TEST_CASE("config invariants") {
  TrainConfig c = small_config();
  CHECK_NOTHROW(c.validate());
  auto bad = [&](auto mutate) {
    TrainConfig x = small_config();
    mutate(x);
    CHECK_THROWS_AS(x.validate(), std::invalid_argument);
  };
  bad([](TrainConfig& x) { x.lambda_nll = 0.5; });
  bad([](TrainConfig& x) { x.L = 0; });
  bad([](TrainConfig& x) { x.batch_size = 1; });
  bad([](TrainConfig& x) { x.lambda_nll = 1.0; x.lambda_reg = 0.0; });
  bad([](TrainConfig& x) { x.regularize = false; });
  TrainConfig off = small_config();
  off.disable_regularization();
  CHECK_NOTHROW(off.validate());
  CHECK(off.lambda_nll == 1.0);
  CHECK(off.lambda_reg == 0.0);
}

TEST_CASE("full-scale coefficients") {
  const TrainConfig p = full_scale_config();
  CHECK(p.lambda_nll == 0.8);
  CHECK(p.lambda_reg == 0.2);
  CHECK(p.rho == 0.003);
  CHECK(p.L == 5);
  CHECK(p.T == 1000);
  const TrainConfig d;
  CHECK(d.T == 100);
  CHECK(d.K == 2);
  CHECK(d.batch_size == 256);
}

TEST_CASE("objective decomposition and cost bound") {
  const TrainConfig cfg = small_config();
  const auto data = make_source(cfg.dataset);
  TrainState st = init_state(cfg);
  for (int i = 0; i < 8; ++i) {
    const EpsNet frozen = st.net;
    const std::uint64_t step = st.step;
    const MetricsRecord r = train_step(st, cfg, *data);
    CHECK(std::abs(r.loss_total - (cfg.lambda_nll * r.loss_nll + cfg.lambda_reg * r.weight * r.loss_reg)) <= 1e-12);
    CHECK(r.weight == cfg.weights().weight(r.t));
    CHECK(r.net_evals <= static_cast<std::uint64_t>(cfg.batch_size * (1 + cfg.L) + cfg.batch_size));
    CHECK(r.net_evals == static_cast<std::uint64_t>(cfg.batch_size * (1 + r.s - (r.t - 1))));
    // L^reg equals a standalone estimate on the same two batches
    const SeedTree seeds = SeedTree(cfg.seed).child(tags::kStep).child(step);
    const Batch s0 = Batch::from_data(data->batch(cfg.seed, step, 0, cfg.batch_size));
    const Batch s0p = Batch::from_data(data->batch(cfg.seed, step, 1, cfg.batch_size));
    const auto boot = bootstrap_backward(frozen, s0p, r.t - 1, cfg.L, cfg.schedule(),
                                         seeds.child(tags::kBootstrapStart), cfg.sampler_options());
    const Matrix ref = r.t == 1 ? s0.data
                                : forward_jump(s0, r.t - 1, cfg.schedule(), seeds.child(tags::kForward)).xt.data;
    CHECK(boot.s == r.s);
    CHECK(mmd_estimate(boot.xt.data, ref, cfg.kernel, cfg.estimator).value == r.loss_reg);
  }
}

TEST_CASE("no regularization performs no kernel work") {
  TrainConfig cfg = small_config();
  cfg.disable_regularization();
  const auto data = make_source(cfg.dataset);
  TrainState st = init_state(cfg);
  counters().reset();
  const MetricsRecord r = train_step(st, cfg, *data);
  CHECK(counters().kernel_evals == 0);
  CHECK(r.kernel_evals == 0);
  CHECK(r.net_evals == static_cast<std::uint64_t>(cfg.batch_size));
  CHECK(r.s == 0);
  CHECK(r.loss_reg == 0.0);
}

TEST_CASE("optimizer updates") {
  OptimizerState sgd{OptimizerKind::kSgd};
  Vector p = Vector::Ones(3), g(3);
  g << 1, -2, 0.5;
  optimizer_update(sgd, p, g, 0.1);
  CHECK(p(1) == doctest::Approx(1.2));
  OptimizerState adam;
  Vector q = Vector::Zero(3);
  optimizer_update(adam, q, g, 0.01);
  // first Adam step moves every coordinate by lr against the gradient sign
  CHECK(q(0) == doctest::Approx(-0.01).epsilon(1e-6));
  CHECK(q(1) == doctest::Approx(0.01).epsilon(1e-6));
  CHECK(adam.step == 1);
  CHECK_THROWS(optimizer_update(adam, q, Vector::Zero(2), 0.01));
}

TEST_CASE("training determinism, zero steps and continuation") {
  TrainConfig cfg = small_config();
  const auto data = make_source(cfg.dataset);
  SUBCASE("zero steps is the initialization") {
    TrainConfig z = cfg;
    z.steps = 0;
    const TrainResult r = train(z, *data);
    CHECK(r.state.net.parameters() == init_state(z).net.parameters());
    CHECK(r.metrics.empty());
  }
  SUBCASE("two runs agree") {
    const TrainResult a = train(cfg, *data);
    const TrainResult b = train(cfg, *data);
    CHECK(a.state.net.parameters() == b.state.net.parameters());
    REQUIRE(a.metrics.size() == b.metrics.size());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) CHECK(metrics_csv_line(a.metrics[i]) == metrics_csv_line(b.metrics[i]));
  }
  SUBCASE("10 + save/load + 10 equals 20") {
    TrainConfig twenty = cfg;
    twenty.steps = 20;
    const TrainResult full = train(twenty, *data);
    const TrainResult half = train(cfg, *data);
    const std::string path = tmp("cont.dlab");
    save_checkpoint(make_checkpoint(half.state, cfg), path);
    const TrainResult rest = train(twenty, *data, restore_state(load_checkpoint(path)));
    CHECK(rest.state.net.parameters() == full.state.net.parameters());
    CHECK(rest.state.opt.m == full.state.opt.m);
    CHECK(rest.state.step == 20);
  }
}

TEST_CASE("checkpoint format") {
  TrainConfig cfg = small_config();
  const auto data = make_source(cfg.dataset);
  const TrainResult r = train(cfg, *data);
  const Checkpoint c = make_checkpoint(r.state, cfg);
  const std::string bytes = encode_checkpoint(c);
  CHECK(bytes.substr(0, 4) == "DLAB");
  const Checkpoint d = decode_checkpoint(bytes);
  CHECK(d.params.size() == c.params.size());
  CHECK(std::memcmp(d.params.data(), c.params.data(), sizeof(double) * c.params.size()) == 0);
  CHECK(d.shape == c.shape);
  CHECK(d.T == 20);
  CHECK(d.step == c.step);
  CHECK(d.seed == c.seed);
  CHECK(d.beta_end == c.beta_end);
  CHECK(encode_checkpoint(d) == bytes);

  auto kind_of = [](const std::string& b) {
    try {
      decode_checkpoint(b);
    } catch (const CheckpointError& e) {
      return static_cast<int>(e.kind);
    }
    return -1;
  };
  CHECK(kind_of(bytes.substr(0, bytes.size() - 5)) == static_cast<int>(CheckpointErrorKind::kTruncated));
  CHECK(kind_of(bytes.substr(0, 30)) == static_cast<int>(CheckpointErrorKind::kTruncated));
  CHECK(kind_of(bytes.substr(0, 2)) == static_cast<int>(CheckpointErrorKind::kTruncated));
  std::string magic = bytes;
  magic[0] = 'X';
  CHECK(kind_of(magic) == static_cast<int>(CheckpointErrorKind::kMagic));
  std::string version = bytes;
  version[4] = 9;
  CHECK(kind_of(version) == static_cast<int>(CheckpointErrorKind::kVersion));
  CHECK(kind_of(bytes + "xx") == static_cast<int>(CheckpointErrorKind::kCorrupt));

  try {
    load_checkpoint("/nonexistent/dir/x.dlab");
    FAIL("expected an error");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointErrorKind::kIo);
    CHECK(std::string(e.what()).find("/nonexistent/dir/x.dlab") != std::string::npos);
  }
}

TEST_CASE("metrics csv") {
  TrainConfig cfg = small_config();
  const auto data = make_source(cfg.dataset);
  const TrainResult r = train(cfg, *data);
  CHECK(r.metrics.size() == 10);
  const std::string a = tmp("m1.csv"), b = tmp("m2.csv");
  write_metrics_csv(r.metrics, a);
  write_metrics_csv(train(cfg, *data).metrics, b);
  std::ifstream fa(a), fb(b);
  const std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  CHECK(sa == sb);
  CHECK(sa.rfind("# driftlab-schema: metrics/1\nstep,loss_total,loss_nll,loss_reg,t,s,wall_ms\n", 0) == 0);
  CHECK(sa.find('\r') == std::string::npos);
  CHECK_THROWS(write_metrics_csv(r.metrics, "/nonexistent/dir/m.csv"));
}

TEST_CASE("divergence is reported") {
  TrainConfig cfg = small_config();
  cfg.learning_rate = 1e300;
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.steps = 50;
  const auto data = make_source(cfg.dataset);
  try {
    train(cfg, *data);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.record.step >= 1);
    CHECK(std::string(e.what()).find("diverged") != std::string::npos);
  }
}
