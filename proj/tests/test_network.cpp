#include <cmath>
#include <random>

#include "doctest.h"
#include "mbnn/errors.hpp"
#include "mbnn/network.hpp"
#include "mbnn/rng.hpp"
#include "oracles.hpp"

using namespace mbnn;

namespace {

std::vector<std::vector<std::uint8_t>> layers_of(const MaskState& m) {
  std::vector<std::vector<std::uint8_t>> out;
  for (int l = 0; l < m.num_layers(); ++l) out.push_back(m.layer_bits(l));
  return out;
}

MaskState random_mask(const Architecture& arch, Rng& rng, double keep) {
  MaskState m(arch, false);
  for (int l = 0; l < arch.depth(); ++l) {
    bool any = false;
    for (int j = 0; j < arch.hidden_width(l); ++j) {
      const bool on = uniform01(rng) < keep;
      m.set(l, j, on);
      any = any || on;
    }
    if (!any) m.set(l, 0, true);
  }
  return m;
}

}  // namespace

TEST_CASE("parameter layout") {
  Architecture arch({2, 3, 4, 1});
  CHECK(arch.depth() == 2);
  CHECK(arch.num_params() == (2 * 3 + 3) + (3 * 4 + 4) + (4 * 1 + 1));
  CHECK(arch.num_hidden() == 7);
  CHECK(arch.bias_offset(0) == 6);
  CHECK(arch.weight_offset(1) == 9);
  CHECK(arch.hidden_offset(1) == 3);
  CHECK(arch.locate(4) == std::pair{1, 1});
  CHECK_THROWS_AS(Architecture({2, 1}), InvalidInput);
  CHECK_THROWS_AS(Architecture({2, 0, 1}), InvalidInput);
}

TEST_CASE("masked node contributes nothing") {
  Architecture arch({1, 2, 1});
  Vector theta(arch.num_params());
  theta << 1, 1, 0, 0, 1, 1, 0;  // W1, b1, W2, b2
  auto mask = MaskState::from_layers({{1, 0}});
  Vector x(1);
  x << 2;
  CHECK(forward_masked(arch, theta, mask, x)[0] == doctest::Approx(2.0));
  auto ref = oracle::pruned_forward(arch.widths(), {theta.data(), theta.data() + theta.size()},
                                    layers_of(mask), {2.0});
  CHECK(ref[0] == doctest::Approx(2.0));
}

TEST_CASE("all-ones mask equals dense forward, all-zeros gives bias-only output") {
  Rng rng(5);
  Architecture arch({3, 4, 5, 2});
  Vector theta = init_theta(arch, rng);
  Matrix x = Matrix::Random(6, 3);
  MaskState ones(arch, true);
  Matrix out = forward_masked(arch, theta, ones, x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    auto ref = oracle::pruned_forward(arch.widths(), {theta.data(), theta.data() + theta.size()},
                                      layers_of(ones), {x(i, 0), x(i, 1), x(i, 2)});
    CHECK(out(i, 0) == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(out(i, 1) == doctest::Approx(ref[1]).epsilon(1e-12));
  }
  MaskState zeros(arch, false);
  CHECK(forward_masked(arch, theta, zeros, x).cwiseAbs().maxCoeff() == 0.0);
  theta[static_cast<Eigen::Index>(arch.bias_offset(2))] = 0.7;
  CHECK(forward_masked(arch, theta, zeros, x)(3, 0) == doctest::Approx(0.7));
}

TEST_CASE("random masks agree with the pruned dense network") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    Architecture arch({2, 3 + trial % 4, 4, 1});
    Vector theta = init_theta(arch, rng);
    for (Eigen::Index i = 0; i < theta.size(); ++i) theta[i] += 0.1 * (uniform01(rng) - 0.5);
    MaskState mask = random_mask(arch, rng, 0.5);
    Matrix x = Matrix::Random(4, 2);
    Matrix out = forward_masked(arch, theta, mask, x);
    Matrix pruned = forward_pruned(arch, theta, mask, x);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      auto ref = oracle::pruned_forward(arch.widths(), {theta.data(), theta.data() + theta.size()},
                                        layers_of(mask), {x(i, 0), x(i, 1)});
      CHECK(out(i, 0) == doctest::Approx(ref[0]).epsilon(1e-12));
      CHECK(pruned(i, 0) == doctest::Approx(ref[0]).epsilon(1e-12));
    }
    // a binary mask applied twice is the same mask
    Vector m = mask.multipliers();
    Matrix twice = forward_cached(arch, theta, m.cwiseProduct(m), x).output;
    CHECK((twice - out).cwiseAbs().maxCoeff() == 0.0);
    // the compact sub-network computes the same function
    SubNetwork sub = active_subnetwork(arch, mask);
    Matrix compact = forward_masked(sub.arch, gather(theta, sub.param_index),
                                    MaskState(sub.arch, true), x);
    CHECK((compact - out).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("shape errors and non-finite intermediates") {
  Architecture arch({2, 3, 1});
  Vector theta = Vector::Zero(arch.num_params());
  MaskState mask(arch);
  CHECK_THROWS_AS(forward_masked(arch, theta, mask, Matrix(Matrix::Zero(2, 3))), InvalidInput);
  CHECK_THROWS_AS(forward_masked(arch, Vector(Vector::Zero(3)), mask, Matrix(Matrix::Zero(2, 2))), InvalidInput);
  theta[static_cast<Eigen::Index>(arch.bias_offset(1))] = std::numeric_limits<double>::infinity();
  try {
    forward_masked(arch, theta, mask, Matrix(Matrix::Zero(1, 2)));
    FAIL("expected a numeric error");
  } catch (const NumericError& e) {
    CHECK(e.layer() == 1);
  }
}

TEST_CASE("output truncation") {
  Matrix raw(3, 1);
  raw << 7.3, -0.2, -9;
  Matrix c = clamp_outputs(raw, 5.0);
  CHECK(c(0, 0) == 5.0);
  CHECK(c(1, 0) == -0.2);
  CHECK(c(2, 0) == -5.0);
}

TEST_CASE("count_active") {
  auto m = MaskState::from_layers({{1, 0, 1}, {0, 0, 1}});
  CHECK(count_active(m) == std::vector<int>{2, 1});
  Architecture arch({1, 4, 4, 1});
  CHECK(count_active(MaskState(arch, true)) == std::vector<int>{4, 4});
  CHECK(count_active(MaskState(arch, false)) == std::vector<int>{0, 0});
  MaskState mm(arch, true);
  mm.flip(5);
  CHECK(mm.counts() == std::vector<int>{4, 3});
  CHECK(mm.total_active() == 7);
  CHECK(mm.active_fraction() == doctest::Approx(7.0 / 8.0));
  CHECK_FALSE(mm.any_layer_empty());
  CHECK(mm.layer_of(5) == 1);
}

TEST_CASE("backward: stationary point and clamp subgradient") {
  Architecture arch({1, 1, 1});
  Vector theta(arch.num_params());
  theta << 1, 0, 1, 0;
  Matrix x(1, 1);
  x << 0.8;
  Vector m = Vector::Ones(1);
  ForwardCache cache = forward_cached(arch, theta, m, x);
  Matrix d_out = Matrix::Constant(1, 1, 0.8 - cache.output(0, 0));  // Gaussian residual
  Gradients g = backward(arch, theta, m, x, cache, d_out, true);
  CHECK(g.theta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(g.mask.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sizing formulas") {
  CHECK(theoretical_architecture(10000).width == 100);
  CHECK(theoretical_architecture(2).depth == 1);
  // ceil(e^10) = 22027 is just above e^10, so ceil(ln n) is 11; 22026 gives 10.
  CHECK(theoretical_architecture(22026).depth == 10);
  CHECK(theoretical_architecture(std::ceil(std::exp(10.0))).depth == 11);
  CHECK(theoretical_sparsity(std::exp(1.0), 1.0, 1.0, 1) == 2);
  CHECK(theoretical_sparsity(100, 1.0, 1.0, 1) == 5);
  CHECK(theoretical_sparsity(100, 1e-12, 1.0, 1) == 1);
  CHECK_THROWS_AS(theoretical_architecture(1), InvalidInput);
}
