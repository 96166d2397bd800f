#include "driftlab/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "driftlab/forward.hpp"

namespace driftlab {

namespace {

void check_index(int t, const NoiseSchedule& sched, const char* what) {
  if (t < 1 || t > sched.T()) {
    throw std::out_of_range(std::string(what) + ": t = " + std::to_string(t) + " outside [1, " +
                            std::to_string(sched.T()) + "]");
  }
}

double step_sigma(int t, const NoiseSchedule& sched, const SamplerOptions& opts) {
  return (t == 1 && opts.noiseless_last_step) ? 0.0 : sched.sigma(t);
}

// x_{t-1} from mu and the step noise drawn from seeds.
Matrix add_step_noise(Matrix mu, int t, const NoiseSchedule& sched, const SeedTree& seeds,
                      const SamplerOptions& opts) {
  const double sigma = step_sigma(t, sched, opts);
  if (sigma > 0.0) mu += sigma * standard_normal(mu.rows(), mu.cols(), seeds);
  return mu;
}

}  // namespace

Matrix posterior_mean_from_eps(const Matrix& xt, const Matrix& eps_hat, int t,
                               const NoiseSchedule& sched) {
  check_index(t, sched, "posterior_mean");
  if (xt.rows() != eps_hat.rows() || xt.cols() != eps_hat.cols()) {
    throw std::invalid_argument("posterior_mean: eps estimate shape mismatch");
  }
  const double c = sched.beta(t) / std::sqrt(1.0 - sched.alpha_bar(t));
  return (xt - c * eps_hat) / std::sqrt(sched.alpha(t));
}

Batch posterior_mean(const NoisePredictor& net, const Batch& xt, const NoiseSchedule& sched) {
  check_index(xt.t, sched, "posterior_mean");
  if (xt.dim() != net.dim()) throw std::invalid_argument("posterior_mean: dimension mismatch");
  return Batch(posterior_mean_from_eps(xt.data, net.predict(xt.data, xt.t), xt.t, sched), xt.t - 1,
               Origin::kBackward);
}

Batch denoise_step(const NoisePredictor& net, const Batch& xt, const NoiseSchedule& sched,
                   const SeedTree& seeds, const SamplerOptions& opts) {
  Batch mu = posterior_mean(net, xt, sched);
  mu.data = add_step_noise(std::move(mu.data), xt.t, sched, seeds, opts);
  mu.origin = xt.origin == Origin::kBootstrap ? Origin::kBootstrap : Origin::kBackward;
  return mu;
}

SeedTree chain_step_seeds(const SeedTree& seeds, int k) {
  return seeds.child(tags::kDenoise).child(static_cast<std::uint64_t>(k));
}

std::map<int, Batch> sample_chain(const NoisePredictor& net, Eigen::Index n,
                                  const NoiseSchedule& sched, const SeedTree& seeds,
                                  const std::set<int>& record_at, const SamplerOptions& opts) {
  if (n < 1) throw std::invalid_argument("sample_chain: n must be >= 1");
  const int T = sched.T();
  for (int r : record_at) {
    if (r < 0 || r > T) {
      throw std::out_of_range("sample_chain: record index " + std::to_string(r) +
                              " outside [0, " + std::to_string(T) + "]");
    }
  }
  std::map<int, Batch> out;
  Batch x(standard_normal(n, net.dim(), seeds.child(tags::kPrior)), T, Origin::kBackward);
  if (record_at.count(T)) out.emplace(T, x);
  const int lowest = record_at.empty() ? T : *record_at.begin();
  for (int k = T; k > lowest; --k) {
    x = denoise_step(net, x, sched, chain_step_seeds(seeds, k), opts);
    if (record_at.count(k - 1)) out.emplace(k - 1, x);
  }
  return out;
}

int draw_bootstrap_start(int t, int L, int T, const SeedTree& seeds) {
  if (L < 1) throw std::invalid_argument("bootstrap: span L must be >= 1");
  if (t < 0 || t >= T) {
    throw std::out_of_range("bootstrap: t = " + std::to_string(t) + " outside [0, " +
                            std::to_string(T - 1) + "]");
  }
  RandomStream rs = seeds.child(tags::kBootstrapStart).stream(0);
  return static_cast<int>(rs.uniform_int(t + 1, std::min(t + L, T)));
}

namespace {

Batch warm_start(const Batch& data_batch, int s, const NoiseSchedule& sched, const SeedTree& seeds,
                 const SamplerOptions& opts) {
  if (data_batch.size() < 1) throw std::invalid_argument("bootstrap: empty data batch");
  if (!opts.warm_start) {
    return Batch(standard_normal(data_batch.size(), data_batch.dim(), seeds.child(tags::kJump)), s,
                 Origin::kBootstrap);
  }
  Batch xs = forward_jump(data_batch, s, sched, seeds.child(tags::kJump)).xt;
  xs.origin = Origin::kBootstrap;
  return xs;
}

}  // namespace

BootstrapResult bootstrap_backward(const NoisePredictor& net, const Batch& data_batch, int t, int L,
                                   const NoiseSchedule& sched, const SeedTree& seeds,
                                   const SamplerOptions& opts) {
  const int s = draw_bootstrap_start(t, L, sched.T(), seeds);
  Batch x = warm_start(data_batch, s, sched, seeds, opts);
  for (int k = s; k > t; --k) x = denoise_step(net, x, sched, chain_step_seeds(seeds, k), opts);
  x.origin = Origin::kBootstrap;
  return {std::move(x), s};
}

BootstrapTrace bootstrap_backward_traced(const EpsNet& net, const Batch& data_batch, int t, int L,
                                         const NoiseSchedule& sched, const SeedTree& seeds,
                                         const SamplerOptions& opts) {
  BootstrapTrace trace;
  trace.s = draw_bootstrap_start(t, L, sched.T(), seeds);
  Batch x = warm_start(data_batch, trace.s, sched, seeds, opts);
  if (x.dim() != net.dim()) throw std::invalid_argument("bootstrap: dimension mismatch");
  trace.tapes.reserve(static_cast<std::size_t>(trace.s - t));
  for (int k = trace.s; k > t; --k) {
    EpsNet::Tape tape;
    const Matrix eps_hat = net.forward(x.data, k, tape);
    Matrix mu = posterior_mean_from_eps(x.data, eps_hat, k, sched);
    x = Batch(add_step_noise(std::move(mu), k, sched, chain_step_seeds(seeds, k), opts), k - 1,
              Origin::kBootstrap);
    trace.tapes.push_back(std::move(tape));
  }
  trace.xt = std::move(x);
  return trace;
}

void bootstrap_backprop(const EpsNet& net, const BootstrapTrace& trace, const Matrix& grad_xt,
                        const NoiseSchedule& sched, Vector& grad_params) {
  // x_{k-1} = (x_k - c_k eps(x_k, k)) / sqrt(alpha_k) + sigma_k z
  Matrix g = grad_xt;
  const int steps = static_cast<int>(trace.tapes.size());
  for (int j = steps - 1; j >= 0; --j) {
    const int k = trace.s - j;
    const double inv_sa = 1.0 / std::sqrt(sched.alpha(k));
    const double c = sched.beta(k) / std::sqrt(1.0 - sched.alpha_bar(k));
    const Matrix g_in = net.backward(trace.tapes[static_cast<std::size_t>(j)], (-c * inv_sa) * g,
                                     grad_params);
    g = inv_sa * g + g_in;
  }
}

}  // namespace driftlab
