#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "mbnn/errors.hpp"
#include "mbnn/priors.hpp"

using namespace mbnn;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

PriorConfig with(double lambda, double n) {
  PriorConfig c;
  c.lambda = lambda;
  c.n = n;
  return c;
}
}  // namespace

TEST_CASE("sparsity prior") {
  auto cfg = with(0.1, 20);
  const double rate = std::pow(0.1 * std::log(20.0), 5);
  CHECK(cfg.sparsity_rate() == doctest::Approx(rate).epsilon(1e-14));
  const double diff = log_prior_sparsity(2, 10, cfg) - log_prior_sparsity(1, 10, cfg);
  CHECK(diff == doctest::Approx(-3.0 * rate).epsilon(1e-12));
  CHECK(diff == doctest::Approx(-0.0072377).epsilon(1e-4));
  CHECK(std::exp(diff) == doctest::Approx(0.99279).epsilon(1e-5));

  auto flat = with(0.0, 20);
  CHECK(log_prior_sparsity(3, 7, flat) == doctest::Approx(-std::log(7.0)));
  CHECK(log_prior_sparsity(0, 7, cfg) == -kInf);
  CHECK(log_prior_sparsity(8, 7, cfg) == -kInf);

  // normalizes, including at rates where every term but s=1 underflows
  for (double lambda : {0.0, 0.1, 0.5, 2.0}) {
    auto c = with(lambda, 1000);
    double total = 0.0;
    for (int s = 1; s <= 50; ++s) total += std::exp(log_prior_sparsity(s, 50, c));
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::isfinite(log_prior_sparsity(1, 50, c)));
  }
}

TEST_CASE("uniform subset prior") {
  std::vector<std::uint8_t> bits{1, 0, 1, 0};
  CHECK(log_prior_mask_given_sparsity(bits, 2) == doctest::Approx(-std::log(6.0)));
  std::vector<std::uint8_t> full{1, 1, 1};
  CHECK(log_prior_mask_given_sparsity(full, 3) == 0.0);
  std::vector<std::uint8_t> one{0, 1, 0};
  CHECK(log_prior_mask_given_sparsity(one, 2) == -kInf);
}

TEST_CASE("mask prior") {
  auto cfg = with(0.0, 20);
  auto m = MaskState::from_layers({{1, 0}});
  CHECK(log_prior_mask(m, cfg) == doctest::Approx(-2.0 * std::log(2.0)));
  CHECK(log_prior_mask(MaskState::from_layers({{0, 0}}), cfg) == -kInf);
  CHECK(log_prior_mask(MaskState::from_layers({{1, 1}, {0, 0}}), cfg) == -kInf);
  auto c2 = with(0.1, 50);
  auto one = MaskState::from_layers({{1, 0, 1, 1}});
  auto two = MaskState::from_layers({{1, 0, 1, 1}, {1, 0, 1, 1}});
  CHECK(log_prior_mask(two, c2) == doctest::Approx(2.0 * log_prior_mask(one, c2)).epsilon(1e-14));
}

TEST_CASE("weight prior") {
  PriorConfig cfg;
  Vector zero = Vector::Zero(1), one = Vector::Ones(1);
  CHECK(log_prior_theta(zero, cfg) == doctest::Approx(-std::log(std::numbers::pi)));
  CHECK(log_prior_theta(one, cfg) == doctest::Approx(-std::log(2.0 * std::numbers::pi)));
  Vector bad(2);
  bad << 0.0, std::nan("");
  CHECK_THROWS_AS(log_prior_theta(bad, cfg), NumericError);

  // gradient against central differences for every family and a scale
  for (auto family : {WeightFamily::Cauchy, WeightFamily::StudentT, WeightFamily::Gaussian}) {
    PriorConfig c;
    c.weight_family = family;
    c.weight_scale = 0.7;
    Vector th(4);
    th << -2.1, -0.3, 0.4, 3.3;
    Vector g = grad_log_prior_theta(th, c);
    for (Eigen::Index i = 0; i < th.size(); ++i) {
      Vector p = th, m = th;
      p[i] += 1e-6;
      m[i] -= 1e-6;
      const double fd = (log_prior_theta(p, c) - log_prior_theta(m, c)) / 2e-6;
      CHECK(g[i] == doctest::Approx(fd).epsilon(1e-7));
    }
  }
}

TEST_CASE("student-t density normalizes") {
  PriorConfig c;
  c.weight_family = WeightFamily::StudentT;
  c.student_dof = 3.0;
  // trapezoid over a wide grid plus the analytic tail mass beyond it
  double total = 0.0;
  const double h = 1e-3, lim = 200.0;
  for (double x = -lim; x <= lim; x += h) total += std::exp(log_weight_density(x, c)) * h;
  CHECK(total == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("polynomial tail check") {
  const double x = 1e6;
  PriorConfig cauchy;
  CHECK(log_weight_density(x, cauchy) ==
        doctest::Approx(-2.0 * std::log(x) - std::log(std::numbers::pi)).epsilon(1e-10));
  CHECK(log_weight_density(x, cauchy) == doctest::Approx(-28.776).epsilon(1e-4));
  CHECK(-std::pow(std::log(x), 2) == doctest::Approx(-190.87).epsilon(1e-4));
  CHECK(polynomial_tail_check(WeightFamily::Cauchy, x));
  CHECK(polynomial_tail_check(WeightFamily::StudentT, x, 3.0));
  CHECK_FALSE(polynomial_tail_check(WeightFamily::Gaussian, x));
  CHECK_THROWS_AS(polynomial_tail_check(WeightFamily::Cauchy, 2.0), InvalidInput);

  PriorConfig gauss;
  gauss.weight_family = WeightFamily::Gaussian;
  CHECK_THROWS_AS(gauss.validate(), InvalidInput);
}

TEST_CASE("noise-variance prior") {
  PriorConfig cfg;
  CHECK(log_prior_sigma2(1.0, cfg) == doctest::Approx(-1.0));
  CHECK(log_prior_sigma2(0.0, cfg) == -kInf);
  CHECK(log_prior_sigma2(-1.0, cfg) == -kInf);
  cfg.sigma2_shape = 2.5;
  cfg.sigma2_rate = 0.3;
  const double s = 0.8;
  CHECK(log_prior_sigma2(s, cfg) ==
        doctest::Approx(2.5 * std::log(0.3) - std::lgamma(2.5) - 3.5 * std::log(s) - 0.3 / s));
}

TEST_CASE("prior sampling follows the configured family") {
  PriorConfig cfg;
  cfg.weight_scale = 2.0;
  Rng rng(3);
  const int n = 200000;
  int inside = 0;
  for (int i = 0; i < n; ++i) inside += std::abs(sample_weight_prior(cfg, rng)) < 2.0;
  // P(|X| < scale) = 1/2 for a Cauchy
  CHECK(inside / double(n) == doctest::Approx(0.5).epsilon(0.01));
}
