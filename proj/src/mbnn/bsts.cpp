#include "mbnn/bsts.hpp"

#include <cmath>
#include <numbers>

#include "mbnn/errors.hpp"

namespace mbnn {

std::string to_string(RegressionComponent c) {
  switch (c) {
    case RegressionComponent::Linear: return "linear";
    case RegressionComponent::Bnn: return "bnn";
    case RegressionComponent::Mbnn: return "mbnn";
  }
  return "?";
}

RegressionComponent regression_component_from_string(const std::string& name) {
  if (name == "linear") return RegressionComponent::Linear;
  if (name == "bnn") return RegressionComponent::Bnn;
  if (name == "mbnn") return RegressionComponent::Mbnn;
  throw InvalidInput("unknown regression component '" + name + "'");
}

void BstsConfig::validate() const {
  if (!(ar > 0 && ar <= 1)) throw InvalidInput("AR coefficient must lie in (0, 1]");
  if (!(trend_var >= 0)) throw InvalidInput("trend variance must be non-negative");
  if (!(init_var > 0)) throw InvalidInput("initial trend variance must be positive");
  if (!(obs_var_shape > 0) || !(obs_var_rate > 0))
    throw InvalidInput("observation variance prior must have positive shape and rate");
}

FilterResult kalman_filter(std::span<const double> z, const BstsConfig& cfg, double obs_var) {
  if (!(obs_var > 0)) throw InvalidInput("observation variance must be positive");
  cfg.validate();
  FilterResult out;
  const std::size_t T = z.size();
  out.pred_mean.resize(T);
  out.pred_var.resize(T);
  out.filt_mean.resize(T);
  out.filt_var.resize(T);
  double m = cfg.init_mean, p = cfg.init_var;
  for (std::size_t t = 0; t < T; ++t) {
    const double a = cfg.ar * m;
    const double pp = cfg.ar * cfg.ar * p + cfg.trend_var;
    const double f = pp + obs_var;
    const double v = z[t] - a;
    const double k = pp / f;
    m = a + k * v;
    p = pp * (1.0 - k);
    out.pred_mean[t] = a;
    out.pred_var[t] = pp;
    out.filt_mean[t] = m;
    out.filt_var[t] = p;
    out.log_marginal += -0.5 * (std::log(2.0 * std::numbers::pi * f) + v * v / f);
  }
  return out;
}

SmoothedMoments smoothed_moments(std::span<const double> z, const BstsConfig& cfg, double obs_var) {
  const FilterResult fr = kalman_filter(z, cfg, obs_var);
  const std::size_t T = z.size();
  SmoothedMoments s;
  s.mean.resize(T + 1);
  s.var.resize(T + 1);
  // filtered moments including mu_0 at index 0
  auto fm = [&](std::size_t t) { return t == 0 ? cfg.init_mean : fr.filt_mean[t - 1]; };
  auto fv = [&](std::size_t t) { return t == 0 ? cfg.init_var : fr.filt_var[t - 1]; };
  s.mean[T] = fm(T);
  s.var[T] = fv(T);
  for (std::size_t t = T; t-- > 0;) {
    const double pred_var = fr.pred_var[t];  // variance of mu_{t+1} given z_1..z_t
    const double j = pred_var > 0 ? fv(t) * cfg.ar / pred_var : 0.0;
    s.mean[t] = fm(t) + j * (s.mean[t + 1] - fr.pred_mean[t]);
    s.var[t] = fv(t) + j * j * (s.var[t + 1] - pred_var);
  }
  return s;
}

std::vector<double> simulation_smoother(std::span<const double> z, const BstsConfig& cfg,
                                        double obs_var, Rng& rng) {
  if (!(obs_var > 0)) throw InvalidInput("observation variance must be positive");
  cfg.validate();
  const std::size_t T = z.size();
  std::normal_distribution<double> normal(0.0, 1.0);

  // Unconditional draw of (mu+, z+) from the model.
  std::vector<double> mu_plus(T + 1), z_plus(T);
  mu_plus[0] = cfg.init_mean + std::sqrt(cfg.init_var) * normal(rng);
  for (std::size_t t = 1; t <= T; ++t) {
    mu_plus[t] = cfg.ar * mu_plus[t - 1] + std::sqrt(cfg.trend_var) * normal(rng);
    z_plus[t - 1] = mu_plus[t] + std::sqrt(obs_var) * normal(rng);
  }
  if (T == 0) return mu_plus;

  const auto hat = smoothed_moments(z, cfg, obs_var).mean;
  const auto hat_plus = smoothed_moments(z_plus, cfg, obs_var).mean;
  std::vector<double> out(T + 1);
  for (std::size_t t = 0; t <= T; ++t) out[t] = hat[t] + mu_plus[t] - hat_plus[t];
  return out;
}

double trend_forecast_variance(int k, const BstsConfig& cfg) {
  double v = 0.0, w = 1.0;
  for (int j = 0; j < k; ++j) {
    v += w * cfg.trend_var;
    w *= cfg.ar * cfg.ar;
  }
  return v;
}

Vector regression_values(const BstsModel& model, const BstsState& state, const Matrix& x) {
  if (model.cfg.component == RegressionComponent::Linear) {
    if (state.beta.size() != x.cols()) throw InvalidInput("linear coefficients/input mismatch");
    return x * state.beta;
  }
  return forward_truncated(model.net.arch, state.net.theta, state.net.mask, x,
                           model.net.truncation)
      .col(0);
}

BstsState bsts_initial_state(const BstsModel& model, const Matrix& x, const Vector& y, Rng& rng) {
  model.cfg.validate();
  BstsState s;
  const std::size_t T = static_cast<std::size_t>(y.size());
  s.trend.assign(T + 1, model.cfg.init_mean);
  s.obs_var = 1.0;
  if (model.cfg.component == RegressionComponent::Linear) {
    s.beta = Vector::Zero(x.cols());
  } else {
    s.net.mask = MaskState(model.net.arch, true);
    s.net.theta = init_theta(model.net.arch, rng);
  }
  s.net.sigma2 = s.obs_var;
  return s;
}

namespace {

Vector draw_linear_coefficients(const Matrix& x, const Vector& resid, double obs_var, Rng& rng) {
  const Eigen::Index d = x.cols();
  Matrix precision = x.transpose() * x / obs_var;
  precision.diagonal().array() += 1.0;
  const Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) throw NumericError("linear posterior precision not SPD");
  const Vector mean = llt.solve(x.transpose() * resid / obs_var);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector e(d);
  for (Eigen::Index i = 0; i < d; ++i) e[i] = normal(rng);
  // cov = (L L^T)^{-1}; L^{-T} e has that covariance
  return mean + llt.matrixU().solve(e);
}

}  // namespace

void bsts_gibbs_sweep(BstsState& state, const Matrix& x, const Vector& y, const BstsModel& model,
                      Rng& rng) {
  const Eigen::Index T = y.size();
  if (x.rows() != T || static_cast<Eigen::Index>(state.trend.size()) != T + 1)
    throw InvalidInput("series, regressors and trend path lengths disagree");
  const Vector trend = Eigen::Map<const Vector>(state.trend.data() + 1, T);

  // (1) regression parameters given y - mu
  const Vector target = y - trend;
  if (model.cfg.component == RegressionComponent::Linear) {
    state.beta = draw_linear_coefficients(x, target, state.obs_var, rng);
  } else {
    Dataset resid;
    resid.x = x;
    resid.y = target;
    SamplerConfig inner = model.inner;
    inner.burn_in = 0;
    inner.thinning = 1;
    inner.update_sigma2 = false;
    inner.adapt_step_size = false;
    inner.mask_moves = model.cfg.component == RegressionComponent::Mbnn;
    inner.seed = rng();
    state.net.sigma2 = state.obs_var;
    ChainOptions opts;
    opts.keep_draws = false;
    opts.keep_trace = false;
    ChainResult r = run_chain(state.net, model.net, resid, inner, model.proposal, opts);
    state.net = std::move(r.final_state.params);
  }

  // (2) observation variance
  const Vector f = regression_values(model, state, x);
  const Vector resid = y - trend - f;
  PriorConfig ig;
  ig.sigma2_shape = model.cfg.obs_var_shape;
  ig.sigma2_rate = model.cfg.obs_var_rate;
  state.obs_var = gibbs_sigma2(ig, resid, rng);
  state.net.sigma2 = state.obs_var;

  // (3) trend path given y - f
  const Vector z = y - f;
  state.trend = simulation_smoother(std::span<const double>(z.data(), static_cast<std::size_t>(T)),
                                    model.cfg, state.obs_var, rng);
}

double bsts_log_joint(const BstsState& state, const Matrix& x, const Vector& y,
                      const BstsModel& model) {
  const auto& c = model.cfg;
  const Eigen::Index T = y.size();
  auto log_normal = [](double v, double mean, double var) {
    const double r = v - mean;
    return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
  };
  double lj = log_normal(state.trend[0], c.init_mean, c.init_var);
  for (Eigen::Index t = 1; t <= T; ++t) {
    if (c.trend_var > 0)
      lj += log_normal(state.trend[t], c.ar * state.trend[t - 1], c.trend_var);
  }
  const Vector f = regression_values(model, state, x);
  for (Eigen::Index t = 0; t < T; ++t) lj += log_normal(y[t], state.trend[t + 1] + f[t], state.obs_var);
  PriorConfig ig;
  ig.sigma2_shape = c.obs_var_shape;
  ig.sigma2_rate = c.obs_var_rate;
  lj += log_prior_sigma2(state.obs_var, ig);
  if (c.component == RegressionComponent::Linear) {
    for (Eigen::Index i = 0; i < state.beta.size(); ++i) lj += log_normal(state.beta[i], 0.0, 1.0);
  } else {
    lj += log_prior_mask(state.net.mask, model.net.prior) + log_prior_theta(state.net.theta, model.net.prior);
  }
  return lj;
}

std::vector<RegressionMixture> forecast(const std::vector<BstsState>& draws,
                                        const Matrix& future_x, const BstsModel& model) {
  if (draws.empty()) throw InvalidInput("forecast needs at least one draw");
  const Eigen::Index h = future_x.rows();
  if (h < 1) throw InvalidInput("forecast horizon must be >= 1");
  std::vector<RegressionMixture> out(static_cast<std::size_t>(h));
  for (const auto& d : draws) {
    const Vector f = regression_values(model, d, future_x);
    double level = d.trend.back();
    for (Eigen::Index k = 1; k <= h; ++k) {
      level *= model.cfg.ar;
      auto& mix = out[static_cast<std::size_t>(k - 1)];
      mix.means.push_back(level + f[k - 1]);
      mix.vars.push_back(trend_forecast_variance(static_cast<int>(k), model.cfg) + d.obs_var);
    }
  }
  return out;
}

}  // namespace mbnn
