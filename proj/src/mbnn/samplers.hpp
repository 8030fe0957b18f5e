#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <type_traits>
#include <vector>

#include "mbnn/errors.hpp"
#include "mbnn/likelihood.hpp"
#include "mbnn/proposals.hpp"
#include "mbnn/rng.hpp"

namespace mbnn {

enum class WeightKernel { Hmc, Sgld };

struct SamplerConfig {
  WeightKernel kernel = WeightKernel::Hmc;
  double step_size = 1e-2;
  int leapfrog_steps = 10;
  // SGLD injected-noise temperature; the noise variance is step_size * temperature.
  double temperature = 1.0;
  // Minibatch size for SGLD gradients and minibatch mask moves; 0 = full batch.
  int batch_size = 0;
  bool minibatch_mask_moves = false;

  long total_iterations = 1000;
  long mh_interval = 1;  // mask moves run when t % mh_interval == 0
  int mh_steps = 2;
  long burn_in = 0;
  long thinning = 1;

  bool mask_moves = true;     // false: plain BNN, masks frozen
  bool update_sigma2 = true;  // conjugate Gibbs for regression noise
  bool adapt_step_size = false;  // dual averaging over the burn-in (HMC only)
  // Weights disconnected from the output by the current mask are redrawn from
  // their prior (their exact full conditional) and HMC runs on the active
  // sub-network only. false: HMC over the whole weight vector.
  bool refresh_inactive = true;
  double target_accept = 0.8;
  std::uint64_t seed = 0;

  void validate() const;
  long retained_count() const;
  bool retains(long t) const { return t > burn_in && (t - burn_in) % thinning == 0; }
  bool mask_update_at(long t) const { return mask_moves && t % mh_interval == 0; }
};

struct ChainState {
  Params params;
  long iteration = 0;
  long weight_accepts = 0;
  long weight_proposals = 0;
  long weight_divergent = 0;
  long mask_accepts = 0;
  long mask_proposals = 0;
  double step_size = 0.0;
  Rng rng;
};

struct PosteriorDraw {
  long iteration = 0;
  MaskState mask;
  Vector theta;
  double sigma2 = 1.0;
};

struct TraceRow {
  long iteration = 0;
  std::vector<int> active;
  double active_fraction = 0.0;
  double log_posterior = 0.0;
  bool weight_accept = false;
  int mask_accepts = 0;   // accepted moves at this iteration
  int mask_attempts = 0;  // 0 when no mask update was scheduled
};

// ---- generic kernels -------------------------------------------------------

struct Potential {
  double value = 0.0;
  Vector grad;
};

// `potential(q)` or `potential(q, need_value)` returns U and its gradient at
// q. The two-argument form may leave value unset when need_value is false.
template <class PotentialFn>
Potential call_potential(PotentialFn& potential, const Vector& q, bool need_value) {
  if constexpr (std::is_invocable_v<PotentialFn&, const Vector&, bool>)
    return potential(q, need_value);
  else
    return potential(q);
}

// Leapfrog integration of H(q, p) = U(q) + |p|^2 / 2. Starts and ends with
// half momentum kicks; only the final U is needed.
template <class PotentialFn>
Potential leapfrog(Vector& q, Vector& p, double eps, int steps, PotentialFn&& potential,
                   Potential start) {
  Potential cur = std::move(start);
  p -= 0.5 * eps * cur.grad;
  for (int s = 0; s < steps; ++s) {
    q += eps * p;
    cur = call_potential(potential, q, s + 1 == steps);
    if (s + 1 < steps) p -= eps * cur.grad;
  }
  p -= 0.5 * eps * cur.grad;
  return cur;
}

struct HmcOutcome {
  bool accepted = false;
  bool divergent = false;
  double accept_prob = 0.0;
};

// One HMC transition with unit mass matrix. On reject (including a
// non-finite trajectory) q is left unchanged.
template <class PotentialFn>
HmcOutcome hmc_transition(Vector& q, PotentialFn&& potential, double eps, int steps, Rng& rng) {
  HmcOutcome out;
  Potential start = call_potential(potential, q, true);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector p(q.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) p[i] = normal(rng);
  const double h0 = start.value + 0.5 * p.squaredNorm();

  Vector q_new = q;
  double h1 = std::numeric_limits<double>::infinity();
  try {
    Potential end = leapfrog(q_new, p, eps, steps, potential, std::move(start));
    h1 = end.value + 0.5 * p.squaredNorm();
  } catch (const NumericError&) {
    h1 = std::numeric_limits<double>::infinity();
  }
  if (!std::isfinite(h1) || !q_new.allFinite()) {
    out.divergent = true;
    return out;
  }
  const double log_ratio = h0 - h1;
  out.accept_prob = log_ratio >= 0 ? 1.0 : std::exp(log_ratio);
  if (uniform01(rng) < out.accept_prob) {
    q = std::move(q_new);
    out.accepted = true;
  }
  return out;
}

// theta <- theta + (eps/2) grad + N(0, eps * temperature * I)
void sgld_update(Vector& q, const Vector& grad_log_target, double eps, double temperature,
                 Rng& rng);

// ---- network posterior kernels ----------------------------------------------

Params initial_params(const Model& model, const Dataset& data, Rng& rng);
ChainState make_chain(const Params& init, const SamplerConfig& cfg);

// Replaces every weight disconnected from the output under the current mask
// with an independent prior draw.
void refresh_inactive_weights(Params& w, const Model& model, Rng& rng);

// Log posterior via the active sub-network (same value as log_posterior()).
double log_posterior_sparse(const Model& model, const Params& w, const Dataset& data);

// HMC on theta with mask and sigma2 held fixed.
HmcOutcome hmc_step(ChainState& state, const Model& model, const Dataset& data,
                    const SamplerConfig& cfg);

// SGLD on theta. When `batch` is a minibatch of a dataset with n rows,
// pass lik_weight = n / |batch|.
void sgld_step(ChainState& state, const Model& model, const Dataset& batch,
               const SamplerConfig& cfg, double lik_weight = 1.0);

// Draw sigma2 ~ InvGamma(shape + n/2, rate + ssr/2).
double gibbs_sigma2(const PriorConfig& prior, double sum_sq_residual, std::size_t n, Rng& rng);
double gibbs_sigma2(const PriorConfig& prior, const Vector& residuals, Rng& rng);

struct ChainResult {
  std::vector<PosteriorDraw> draws;
  std::vector<TraceRow> trace;
  ChainState final_state;
  double final_step_size = 0.0;
};

struct ChainOptions {
  bool keep_draws = true;
  bool keep_trace = true;
  std::function<void(const PosteriorDraw&)> on_draw;
};

// The composed kernel: per iteration one weight update (plus sigma2 Gibbs for
// regression), and mh_steps mask moves every mh_interval iterations.
ChainResult run_chain(const Params& init, const Model& model, const Dataset& data,
                      const SamplerConfig& cfg, const ProposalKind& proposal,
                      const ChainOptions& options = {});

}  // namespace mbnn
