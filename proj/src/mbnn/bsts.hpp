#pragma once

// Local-trend state-space model with a regression component:
//   y_t = mu_t + f(x_t) + eps_t,  eps_t ~ N(0, obs_var)
//   mu_{t+1} = r mu_t + eta_t,    eta_t ~ N(0, trend_var)
//   mu_0 ~ N(init_mean, init_var)
// Observations are indexed t = 1..T; trend paths are stored as mu_0..mu_T.

#include <span>
#include <string>
#include <vector>

#include "mbnn/predictive.hpp"
#include "mbnn/samplers.hpp"

namespace mbnn {

enum class RegressionComponent { Linear, Bnn, Mbnn };

std::string to_string(RegressionComponent c);
RegressionComponent regression_component_from_string(const std::string& name);

struct BstsConfig {
  double ar = 0.95;
  double trend_var = 0.1;
  double init_mean = 0.0;
  double init_var = 1.0;
  double obs_var_shape = 1.0;  // inverse-gamma prior on obs_var
  double obs_var_rate = 1.0;
  RegressionComponent component = RegressionComponent::Mbnn;

  void validate() const;
};

struct FilterResult {
  // index t-1 holds step t = 1..T
  std::vector<double> pred_mean, pred_var;
  std::vector<double> filt_mean, filt_var;
  double log_marginal = 0.0;
};

FilterResult kalman_filter(std::span<const double> z, const BstsConfig& cfg, double obs_var);

struct SmoothedMoments {
  std::vector<double> mean;  // mu_0..mu_T
  std::vector<double> var;
};
SmoothedMoments smoothed_moments(std::span<const double> z, const BstsConfig& cfg, double obs_var);

// Exact joint draw of mu_0..mu_T given z (Durbin-Koopman mean correction).
std::vector<double> simulation_smoother(std::span<const double> z, const BstsConfig& cfg,
                                        double obs_var, Rng& rng);

// Trend variance k steps past the last observed state.
double trend_forecast_variance(int k, const BstsConfig& cfg);

struct BstsState {
  std::vector<double> trend;  // mu_0..mu_T
  double obs_var = 1.0;
  Vector beta;                // linear component
  Params net;                 // network components
};

struct BstsModel {
  BstsConfig cfg;
  Model net;                   // used for Bnn/Mbnn
  SamplerConfig inner;         // network kernel per sweep (total_iterations = steps per sweep)
  ProposalKind proposal;
};

// f(x_t) for every row under the state's regression draw.
Vector regression_values(const BstsModel& model, const BstsState& state, const Matrix& x);

BstsState bsts_initial_state(const BstsModel& model, const Matrix& x, const Vector& y, Rng& rng);

// One sweep: regression | residual, obs_var | everything, trend path | rest.
void bsts_gibbs_sweep(BstsState& state, const Matrix& x, const Vector& y, const BstsModel& model,
                      Rng& rng);

// Log joint density of (y, trend, obs_var, regression parameters).
double bsts_log_joint(const BstsState& state, const Matrix& x, const Vector& y,
                      const BstsModel& model);

// Per-step predictive mixtures for the rows of `future_x` (steps 1..h).
std::vector<RegressionMixture> forecast(const std::vector<BstsState>& draws,
                                        const Matrix& future_x, const BstsModel& model);

}  // namespace mbnn
