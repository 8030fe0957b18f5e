#include "mbnn/samplers.hpp"

#include <algorithm>
#include <numeric>

namespace mbnn {

void SamplerConfig::validate() const {
  if (!(step_size > 0)) throw InvalidInput("step size must be positive");
  if (leapfrog_steps < 1) throw InvalidInput("leapfrog steps must be >= 1");
  if (!(temperature >= 0)) throw InvalidInput("temperature must be non-negative");
  if (total_iterations < 1) throw InvalidInput("total iterations must be >= 1");
  if (mh_interval < 1 || mh_steps < 0) throw InvalidInput("mask schedule must be positive");
  if (burn_in < 0) throw InvalidInput("burn-in must be non-negative");
  if (thinning < 1) throw InvalidInput("thinning must be >= 1");
  if (batch_size < 0) throw InvalidInput("batch size must be non-negative");
  if (!(target_accept > 0 && target_accept < 1)) throw InvalidInput("target acceptance in (0,1)");
}

long SamplerConfig::retained_count() const {
  return total_iterations > burn_in ? (total_iterations - burn_in) / thinning : 0;
}

void sgld_update(Vector& q, const Vector& grad_log_target, double eps, double temperature,
                 Rng& rng) {
  if (!(eps > 0)) throw InvalidInput("SGLD step must be positive");
  if (!grad_log_target.allFinite()) throw NumericError("non-finite SGLD gradient");
  q += 0.5 * eps * grad_log_target;
  if (temperature > 0) {
    std::normal_distribution<double> normal(0.0, std::sqrt(eps * temperature));
    for (Eigen::Index i = 0; i < q.size(); ++i) q[i] += normal(rng);
  }
}

Params initial_params(const Model& model, const Dataset& data, Rng& rng) {
  Params w;
  w.mask = MaskState(model.arch, true);
  w.theta = init_theta(model.arch, rng);
  if (model.kind.task == Task::Regression && data.y.size() > 1) {
    const double mean = data.y.mean();
    const double var = (data.y.array() - mean).square().sum() / (data.y.size() - 1);
    w.sigma2 = var > 0 ? var : 1.0;
  }
  return w;
}

ChainState make_chain(const Params& init, const SamplerConfig& cfg) {
  ChainState s;
  s.params = init;
  s.step_size = cfg.step_size;
  s.rng.seed(cfg.seed);
  return s;
}

void refresh_inactive_weights(Params& w, const Model& model, Rng& rng) {
  const SubNetwork sub = active_subnetwork(model.arch, w.mask);
  std::vector<std::uint8_t> live(model.arch.num_params(), 0);
  for (std::size_t i : sub.param_index) live[i] = 1;
  for (std::size_t i = 0; i < live.size(); ++i)
    if (!live[i]) w.theta[static_cast<Eigen::Index>(i)] = sample_weight_prior(model.prior, rng);
}

double log_posterior_sparse(const Model& model, const Params& w, const Dataset& data) {
  const MaskTarget t = mask_target(model, w, data, false, false);
  if (t.value == -std::numeric_limits<double>::infinity()) return t.value;
  double lp = t.value + log_prior_theta(w.theta, model.prior);
  if (model.kind.task == Task::Regression) lp += log_prior_sigma2(w.sigma2, model.prior);
  return lp;
}

HmcOutcome hmc_step(ChainState& state, const Model& model, const Dataset& data,
                    const SamplerConfig& cfg) {
  Params& w = state.params;
  HmcOutcome out;
  if (cfg.refresh_inactive && w.mask.total_active() < static_cast<int>(w.mask.size())) {
    refresh_inactive_weights(w, model, state.rng);
    const SubNetwork sub = active_subnetwork(model.arch, w.mask);
    Model compact = model;
    compact.arch = sub.arch;
    Params probe{MaskState(sub.arch, true), Vector(), w.sigma2};
    auto potential = [&](const Vector& theta, bool need_value) {
      probe.theta = theta;
      EvalRequest req;
      req.grad_theta = true;
      req.value = need_value;
      PosteriorTerms t = evaluate(compact, probe, data, req);
      return Potential{-t.log_post, -t.grad_theta};
    };
    Vector theta = gather(w.theta, sub.param_index);
    out = hmc_transition(theta, potential, state.step_size, cfg.leapfrog_steps, state.rng);
    if (out.accepted) scatter(theta, sub.param_index, w.theta);
  } else {
    Params probe{w.mask, Vector(), w.sigma2};
    auto potential = [&](const Vector& theta, bool need_value) {
      probe.theta = theta;
      EvalRequest req;
      req.grad_theta = true;
      req.value = need_value;
      PosteriorTerms t = evaluate(model, probe, data, req);
      return Potential{-t.log_post, -t.grad_theta};
    };
    out = hmc_transition(w.theta, potential, state.step_size, cfg.leapfrog_steps, state.rng);
  }
  ++state.weight_proposals;
  if (out.accepted) ++state.weight_accepts;
  if (out.divergent) ++state.weight_divergent;
  return out;
}

void sgld_step(ChainState& state, const Model& model, const Dataset& batch,
               const SamplerConfig& cfg, double lik_weight) {
  EvalRequest req;
  req.grad_theta = true;
  req.lik_weight = lik_weight;
  const PosteriorTerms t = evaluate(model, state.params, batch, req);
  sgld_update(state.params.theta, t.grad_theta, state.step_size, cfg.temperature, state.rng);
  ++state.weight_proposals;
  ++state.weight_accepts;
}

double gibbs_sigma2(const PriorConfig& prior, double sum_sq_residual, std::size_t n, Rng& rng) {
  const double shape = prior.sigma2_shape + 0.5 * static_cast<double>(n);
  const double rate = prior.sigma2_rate + 0.5 * sum_sq_residual;
  std::gamma_distribution<double> gamma(shape, 1.0 / rate);
  return 1.0 / gamma(rng);
}

double gibbs_sigma2(const PriorConfig& prior, const Vector& residuals, Rng& rng) {
  return gibbs_sigma2(prior, residuals.squaredNorm(), static_cast<std::size_t>(residuals.size()),
                      rng);
}

namespace {

// Dual averaging of log step size towards a target acceptance rate.
class StepSizeAdapter {
 public:
  explicit StepSizeAdapter(double eps0, double target)
      : mu_(std::log(10.0 * eps0)), target_(target), log_eps_(std::log(eps0)) {}

  double update(double accept_prob) {
    ++m_;
    const double eta = 1.0 / (m_ + kT0);
    h_bar_ = (1.0 - eta) * h_bar_ + eta * (target_ - accept_prob);
    log_eps_ = mu_ - std::sqrt(static_cast<double>(m_)) / kGamma * h_bar_;
    const double w = std::pow(static_cast<double>(m_), -kKappa);
    log_eps_bar_ = w * log_eps_ + (1.0 - w) * log_eps_bar_;
    return std::exp(log_eps_);
  }
  double final_step() const { return std::exp(log_eps_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_;
  double target_;
  double log_eps_;
  double log_eps_bar_ = 0.0;
  double h_bar_ = 0.0;
  long m_ = 0;
};

std::vector<std::size_t> draw_batch(std::size_t n, int batch_size, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  const std::size_t b = std::min<std::size_t>(n, static_cast<std::size_t>(batch_size));
  for (std::size_t i = 0; i < b; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(b);
  return idx;
}

}  // namespace

ChainResult run_chain(const Params& init, const Model& model, const Dataset& data,
                      const SamplerConfig& cfg, const ProposalKind& proposal,
                      const ChainOptions& options) {
  cfg.validate();
  validate_dataset(data, model.kind);
  ChainResult result;
  ChainState state = make_chain(init, cfg);
  if (log_posterior(model, state.params, data) == -std::numeric_limits<double>::infinity())
    throw InvalidInput("chain initialised outside prior support");

  const std::size_t n = data.size();
  const bool minibatch = cfg.batch_size > 0 && static_cast<std::size_t>(cfg.batch_size) < n;
  const bool adapt = cfg.adapt_step_size && cfg.kernel == WeightKernel::Hmc && cfg.burn_in > 0;
  StepSizeAdapter adapter(cfg.step_size, cfg.target_accept);

  for (long t = 1; t <= cfg.total_iterations; ++t) {
    state.iteration = t;
    TraceRow row;
    row.iteration = t;

    if (cfg.kernel == WeightKernel::Hmc) {
      const HmcOutcome o = hmc_step(state, model, data, cfg);
      row.weight_accept = o.accepted;
      if (adapt && t <= cfg.burn_in) {
        state.step_size = adapter.update(o.divergent ? 0.0 : o.accept_prob);
        if (t == cfg.burn_in) state.step_size = adapter.final_step();
      }
    } else if (minibatch) {
      const auto rows = draw_batch(n, cfg.batch_size, state.rng);
      sgld_step(state, model, data.subset(rows), cfg, static_cast<double>(n) / rows.size());
      row.weight_accept = true;
    } else {
      sgld_step(state, model, data, cfg);
      row.weight_accept = true;
    }

    if (model.kind.task == Task::Regression && cfg.update_sigma2) {
      state.params.sigma2 =
          gibbs_sigma2(model.prior, sum_sq_residual(model, state.params, data), n, state.rng);
    }

    if (cfg.mask_update_at(t)) {
      for (int k = 0; k < cfg.mh_steps; ++k) {
        MaskMoveResult mv;
        if (cfg.minibatch_mask_moves && minibatch) {
          const auto rows = draw_batch(n, cfg.batch_size, state.rng);
          mv = mask_mh_step(model, state.params, data.subset(rows), proposal, state.rng,
                            static_cast<double>(n) / rows.size());
        } else {
          mv = mask_mh_step(model, state.params, data, proposal, state.rng);
        }
        ++state.mask_proposals;
        ++row.mask_attempts;
        if (mv.accepted) {
          ++state.mask_accepts;
          ++row.mask_accepts;
        }
      }
    }

    if (options.keep_trace) {
      row.active = state.params.mask.counts();
      row.active_fraction = state.params.mask.active_fraction();
      row.log_posterior = log_posterior_sparse(model, state.params, data);
      result.trace.push_back(std::move(row));
    }

    if (cfg.retains(t)) {
      PosteriorDraw d{t, state.params.mask, state.params.theta, state.params.sigma2};
      if (options.on_draw) options.on_draw(d);
      if (options.keep_draws) result.draws.push_back(std::move(d));
    }
  }
  result.final_step_size = state.step_size;
  result.final_state = std::move(state);
  return result;
}

}  // namespace mbnn
