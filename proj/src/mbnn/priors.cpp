#include "mbnn/priors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mbnn/errors.hpp"

namespace mbnn {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_choose(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double log_density_standard(double x, WeightFamily family, double dof) {
  switch (family) {
    case WeightFamily::Cauchy:
      return -std::log(std::numbers::pi) - std::log1p(x * x);
    case WeightFamily::StudentT:
      return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
             0.5 * std::log(dof * std::numbers::pi) -
             0.5 * (dof + 1.0) * std::log1p(x * x / dof);
    case WeightFamily::Gaussian:
      return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi);
  }
  return kNegInf;
}

}  // namespace

void PriorConfig::validate() const {
  if (!(lambda >= 0)) throw InvalidInput("lambda must be non-negative");
  if (!(weight_scale > 0)) throw InvalidInput("weight prior scale must be positive");
  if (!(sigma2_shape > 0) || !(sigma2_rate > 0))
    throw InvalidInput("inverse-gamma shape and rate must be positive");
  if (!(n >= 2)) throw InvalidInput("prior sample size must be >= 2");
  if (weight_family == WeightFamily::StudentT && !(student_dof > 0))
    throw InvalidInput("Student-t degrees of freedom must be positive");
  if (!polynomial_tail_check(weight_family, 1e6, student_dof))
    throw InvalidInput("weight prior family does not have polynomial tails");
}

double PriorConfig::sparsity_rate() const { return std::pow(lambda * std::log(n), 5); }

double log_prior_sparsity(int s, int width, const PriorConfig& cfg) {
  if (width < 1) throw InvalidInput("layer width must be >= 1");
  if (s < 1 || s > width) return kNegInf;
  const double rate = cfg.sparsity_rate();
  // log sum_{k=1}^{p} exp(-rate k^2); the k=1 term is the largest.
  double acc = 0.0;
  for (int k = 2; k <= width; ++k) acc += std::exp(-rate * (double(k) * k - 1.0));
  const double log_norm = -rate + std::log1p(acc);
  return -rate * double(s) * s - log_norm;
}

double log_prior_mask_given_sparsity(std::span<const std::uint8_t> bits, int s) {
  const int p = static_cast<int>(bits.size());
  int count = 0;
  for (auto b : bits) count += b != 0;
  if (count != s || s < 0 || s > p) return kNegInf;
  return -log_choose(p, s);
}

double log_prior_mask(const MaskState& mask, const PriorConfig& cfg) {
  double total = 0.0;
  for (int k = 0; k < mask.num_layers(); ++k) {
    const int s = mask.counts()[k];
    const int p = mask.width(k);
    const double ls = log_prior_sparsity(s, p, cfg);
    if (ls == kNegInf) return kNegInf;
    total += ls - log_choose(p, s);
  }
  return total;
}

double log_weight_density(double x, const PriorConfig& cfg) {
  return log_density_standard(x, cfg.weight_family, cfg.student_dof);
}

double log_prior_theta(const Vector& theta, const PriorConfig& cfg) {
  if (!theta.allFinite()) throw NumericError("non-finite weight in prior evaluation");
  const double inv = 1.0 / cfg.weight_scale;
  const double count = static_cast<double>(theta.size());
  const auto u2 = (theta.array() * inv).square();
  double total = 0.0;
  switch (cfg.weight_family) {
    case WeightFamily::Cauchy:
      total = -count * std::log(std::numbers::pi) - (1.0 + u2).log().sum();
      break;
    case WeightFamily::StudentT: {
      const double nu = cfg.student_dof;
      total = count * log_density_standard(0.0, cfg.weight_family, nu) -
              0.5 * (nu + 1.0) * (1.0 + u2 / nu).log().sum();
      break;
    }
    case WeightFamily::Gaussian:
      total = -0.5 * u2.sum() - 0.5 * count * std::log(2.0 * std::numbers::pi);
      break;
  }
  return total - count * std::log(cfg.weight_scale);
}

Vector grad_log_prior_theta(const Vector& theta, const PriorConfig& cfg) {
  const double s2 = cfg.weight_scale * cfg.weight_scale;
  switch (cfg.weight_family) {
    case WeightFamily::Cauchy:
      return theta.unaryExpr([s2](double t) { return -2.0 * t / (s2 + t * t); });
    case WeightFamily::StudentT: {
      const double nu = cfg.student_dof;
      return theta.unaryExpr([s2, nu](double t) { return -(nu + 1.0) * t / (nu * s2 + t * t); });
    }
    case WeightFamily::Gaussian:
      return -theta / s2;
  }
  return Vector::Zero(theta.size());
}

bool polynomial_tail_check(WeightFamily family, double probe, double student_dof) {
  if (!(probe >= std::numbers::e)) throw InvalidInput("tail probe must be >= e");
  const double bound = -std::pow(std::log(probe), 2);
  return log_density_standard(probe, family, student_dof) > bound &&
         log_density_standard(-probe, family, student_dof) > bound;
}

double log_prior_sigma2(double sigma2, const PriorConfig& cfg) {
  if (!(sigma2 > 0)) return kNegInf;
  const double a = cfg.sigma2_shape, b = cfg.sigma2_rate;
  return a * std::log(b) - std::lgamma(a) - (a + 1.0) * std::log(sigma2) - b / sigma2;
}

double sample_weight_prior(const PriorConfig& cfg, Rng& rng) {
  switch (cfg.weight_family) {
    case WeightFamily::Cauchy:
      return cfg.weight_scale * std::tan(std::numbers::pi * (uniform01(rng) - 0.5));
    case WeightFamily::StudentT:
      return cfg.weight_scale * std::student_t_distribution<double>(cfg.student_dof)(rng);
    case WeightFamily::Gaussian:
      return cfg.weight_scale * std::normal_distribution<double>(0.0, 1.0)(rng);
  }
  return 0.0;
}

}  // namespace mbnn
