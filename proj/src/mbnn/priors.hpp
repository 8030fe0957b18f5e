#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mbnn/network.hpp"
#include "mbnn/rng.hpp"

namespace mbnn {

enum class WeightFamily { Cauchy, StudentT, Gaussian };

struct PriorConfig {
  double lambda = 0.1;
  WeightFamily weight_family = WeightFamily::Cauchy;
  double student_dof = 3.0;
  double weight_scale = 1.0;
  double sigma2_shape = 1.0;
  double sigma2_rate = 1.0;
  double n = 2.0;  // training sample size; the mask prior depends on it

  // Throws InvalidInput unless every field is in range and the weight family
  // has polynomial tails.
  void validate() const;
  // (lambda * ln n)^5, the exponent coefficient of the sparsity prior.
  double sparsity_rate() const;
};

// log Pi(s) for a layer of width p; -inf outside [1, p].
double log_prior_sparsity(int s, int width, const PriorConfig& cfg);
// -log C(p, s) when the bits hold exactly s ones, -inf otherwise.
double log_prior_mask_given_sparsity(std::span<const std::uint8_t> bits, int s);
double log_prior_mask(const MaskState& mask, const PriorConfig& cfg);

// Standard (unit-scale) log density of the weight family.
double log_weight_density(double x, const PriorConfig& cfg);
double log_prior_theta(const Vector& theta, const PriorConfig& cfg);
// d/dtheta of log_prior_theta, coordinatewise.
Vector grad_log_prior_theta(const Vector& theta, const PriorConfig& cfg);

// Finite-probe surrogate for membership in the polynomial-tail class:
// log p(+-x) must exceed -(ln x)^2 on both sides. Needs probe >= e.
bool polynomial_tail_check(WeightFamily family, double probe, double student_dof = 3.0);

double log_prior_sigma2(double sigma2, const PriorConfig& cfg);

// One draw from the scaled weight prior.
double sample_weight_prior(const PriorConfig& cfg, Rng& rng);

}  // namespace mbnn
