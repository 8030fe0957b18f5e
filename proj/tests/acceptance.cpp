// Acceptance suite: one test case per acceptance criterion. Each case prints
// a single PASS/FAIL line with the measured quantity next to its threshold.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <boost/math/distributions/normal.hpp>

#include "doctest.h"
#include "mbnn/bsts.hpp"
#include "mbnn/harness.hpp"
#include "mbnn/likelihood.hpp"
#include "mbnn/predictive.hpp"
#include "mbnn/proposals.hpp"
#include "mbnn/samplers.hpp"
#include "oracles.hpp"
#include "problems.hpp"

using namespace mbnn;

namespace {

// pinned tolerances
constexpr double kMaskTv = 0.02;
constexpr long kMaskSteps = 200000;
constexpr double kFdRelError = 1e-5;
constexpr int kFdNetworks = 50;
constexpr double kSetProbSum = 1e-10;
constexpr double kMeanTol = 0.05;
constexpr double kVarLo = 0.9, kVarHi = 1.1;
constexpr int kKnownTargetDraws = 20000;
constexpr double kKalmanTol = 1e-8;
constexpr int kSmootherDraws = 100000;
constexpr double kSmootherSe = 3.0;
constexpr double kCrpsTol = 1e-3;
constexpr int kCrpsSamples = 1000000;
constexpr double kCoverageLo = 0.90, kCoverageHi = 0.99;
constexpr double kActiveFraction = 0.2;
constexpr int kOrderingSeeds = 5, kOrderingWins = 4;

struct Timer {
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  }
};

void report(int id, const char* name, bool pass, const std::string& detail, const Timer& t) {
  std::printf("criterion %d %-34s %s  %s  (%.1f s)\n", id, name, pass ? "PASS" : "FAIL",
              detail.c_str(), t.seconds());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(MBNN_ACCEPTANCE_WORK) / name;
  std::filesystem::remove_all(dir);
  return dir;
}

ExperimentConfig config_file(const std::string& name) {
  return load_config(std::filesystem::path(MBNN_CONFIG_DIR) / name);
}

}  // namespace

TEST_CASE("mask kernel matches the enumerated conditional") {
  Timer timer;
  Rng rng(4242);
  std::normal_distribution<double> normal;
  Model model;
  model.arch = Architecture({1, 3, 1});
  model.prior.n = 8;
  model.prior.lambda = 0.05;
  Params w;
  w.mask = MaskState(model.arch, true);
  w.theta.resize(model.arch.num_params());
  for (auto& v : w.theta) v = 0.3 * normal(rng);
  w.sigma2 = 1.0;
  Dataset data;
  data.x.resize(8, 1);
  data.y.resize(8);
  for (int i = 0; i < 8; ++i) {
    data.x(i, 0) = -1.0 + 2.0 * i / 7.0;
    data.y[i] = std::sin(2.0 * data.x(i, 0)) + 0.3 * normal(rng);
  }

  auto state_of = [](const MaskState& m) { return m.at(0) + 2 * m.at(1) + 4 * m.at(2); };
  std::vector<double> target(8, 0.0);
  double mx = -1e300;
  std::vector<double> lp(8, 0.0);
  for (int s = 1; s < 8; ++s) {
    Params q = w;
    for (int j = 0; j < 3; ++j) q.mask.set(0, j, (s >> j) & 1);
    lp[s] = log_posterior(model, q, data);
    mx = std::max(mx, lp[s]);
  }
  double z = 0.0;
  for (int s = 1; s < 8; ++s) z += target[s] = std::exp(lp[s] - mx);
  for (double& v : target) v /= z;

  ProposalKind kind;
  kind.birth = SelectionRule::Uniform;
  kind.death = SelectionRule::GradMagnitude;
  kind.max_nodes = 3;
  std::vector<double> freq(8, 0.0);
  Rng chain(99);
  for (long t = 0; t < kMaskSteps; ++t) {
    mask_mh_step(model, w, data, kind, chain);
    freq[state_of(w.mask)] += 1.0;
  }
  for (double& v : freq) v /= static_cast<double>(kMaskSteps);
  const double tv = oracle::total_variation(freq, target);
  const bool pass = tv < kMaskTv && freq[0] == 0.0;
  report(1, "mask-kernel exactness", pass, fmt("TV=%.4f < %.2f", tv, kMaskTv), timer);
  CHECK(freq[0] == 0.0);
  CHECK(tv < kMaskTv);
}

TEST_CASE("gradients match central differences on random networks") {
  Timer timer;
  Rng rng(777);
  double worst_theta = 0.0, worst_mask = 0.0;
  int checked = 0;
  const ModelKind kinds[] = {ModelKind::regression(), ModelKind::binary(),
                             ModelKind::multiclass(3)};
  for (int net = 0; net < kFdNetworks; ++net) {
    const int depth = 1 + net % 3;
    std::vector<int> hidden;
    for (int l = 0; l < depth; ++l) hidden.push_back(2 + static_cast<int>(uniform01(rng) * 3));
    const int d = 1 + static_cast<int>(uniform01(rng) * 3);
    const int n = 3 + static_cast<int>(uniform01(rng) * 4);
    auto p = testing_support::random_problem(rng, kinds[net % 3], hidden, d, n);
    const Vector m = p.w.mask.multipliers();
    auto pattern = [&](const Vector& th) {
      return testing_support::activation_pattern(p.model, th, m, p.data.x);
    };
    auto f = [&](const Vector& th) {
      Params q = p.w;
      q.theta = th;
      return log_posterior(p.model, q, p.data);
    };
    auto rt = oracle::fd_check(grad_theta(p.model, p.w, p.data), f, pattern, p.w.theta, 1e-5);
    auto fm = [&](const Vector& mv) { return evaluate_relaxed(p.model, p.w, mv, p.data).log_lik; };
    auto pm = [&](const Vector& mv) {
      return testing_support::activation_pattern(p.model, p.w.theta, mv, p.data.x);
    };
    auto rm = oracle::fd_check(grad_mask(p.model, p.w, p.data), fm, pm, m, 1e-5);
    worst_theta = std::max(worst_theta, rt.max_rel_error);
    worst_mask = std::max(worst_mask, rm.max_rel_error);
    checked += rt.checked + rm.checked;
  }
  const bool pass = worst_theta < kFdRelError && worst_mask < kFdRelError && checked > 0;
  report(2, "gradient suite", pass,
         fmt("max rel err theta=%.2e mask=%.2e < %.0e", worst_theta, worst_mask, kFdRelError),
         timer);
  CHECK(checked > 0);
  CHECK(worst_theta < kFdRelError);
  CHECK(worst_mask < kFdRelError);
}

TEST_CASE("weighted sampling without replacement set probabilities") {
  Timer timer;
  Rng rng(31337);
  std::lognormal_distribution<double> spread(0.0, 2.0);
  double worst_sum = 0.0, worst_match = 0.0;
  int vectors = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const int r = 1 + static_cast<int>(uniform01(rng) * 8);
    std::vector<double> w(r);
    for (double& v : w) v = uniform01(rng) < 0.2 ? 0.0 : spread(rng);
    std::vector<std::size_t> positive;
    for (int i = 0; i < r; ++i)
      if (w[i] > 0) positive.push_back(i);
    for (int count = 1; count <= std::min<int>(3, static_cast<int>(positive.size())); ++count) {
      ++vectors;
      double total = 0.0;
      std::vector<int> pick(r, 0);
      std::fill(pick.end() - count, pick.end(), 1);
      do {
        std::vector<std::size_t> set;
        for (int i = 0; i < r; ++i)
          if (pick[i]) set.push_back(i);
        const double p = std::exp(log_set_probability(w, set));
        const double ref = oracle::enumerate_set_probability(w, set);
        worst_match = std::max(worst_match, std::abs(p - ref));
        total += p;
      } while (std::next_permutation(pick.begin(), pick.end()));
      worst_sum = std::max(worst_sum, std::abs(total - 1.0));
    }
  }
  const bool pass = worst_sum < kSetProbSum && worst_match < kSetProbSum;
  report(3, "set probabilities", pass,
         fmt("|sum-1|=%.1e, |p-enum|=%.1e < %.0e", worst_sum, worst_match, kSetProbSum) +
             " over " + std::to_string(vectors) + " cases",
         timer);
  CHECK(worst_sum < kSetProbSum);
  CHECK(worst_match < kSetProbSum);
}

TEST_CASE("samplers recover a standard normal") {
  Timer timer;
  auto moments = [](const std::vector<double>& xs) {
    const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / xs.size();
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    return std::pair{mean, ss / (xs.size() - 1)};
  };
  auto standard_normal = [](const Vector& q) { return Potential{0.5 * q.squaredNorm(), q}; };

  Rng rng(2718);
  Vector q = Vector::Constant(1, 3.0);
  std::vector<double> hmc;
  for (int t = 0; t < 1000 + kKnownTargetDraws; ++t) {
    hmc_transition(q, standard_normal, 0.25, 7, rng);
    if (t >= 1000) hmc.push_back(q[0]);
  }
  const auto [hm, hv] = moments(hmc);

  Vector s = Vector::Constant(1, 3.0);
  std::vector<double> sgld;
  const int thin = 100;
  for (int t = 0; t < (200 + kKnownTargetDraws) * thin; ++t) {
    sgld_update(s, -s, 0.05, 1.0, rng);
    if (t >= 200 * thin && t % thin == 0) sgld.push_back(s[0]);
  }
  const auto [sm, sv] = moments(sgld);

  auto ok = [](double m, double v) { return std::abs(m) < kMeanTol && v >= kVarLo && v <= kVarHi; };
  report(4, "known-target samplers", ok(hm, hv) && ok(sm, sv),
         fmt("HMC mean=%.4f var=%.4f; ", hm, hv) + fmt("SGLD mean=%.4f var=%.4f", sm, sv), timer);
  CHECK(std::abs(hm) < kMeanTol);
  CHECK(hv >= kVarLo);
  CHECK(hv <= kVarHi);
  CHECK(std::abs(sm) < kMeanTol);
  CHECK(sv >= kVarLo);
  CHECK(sv <= kVarHi);
}

TEST_CASE("kalman filter and smoother against the dense oracle") {
  Timer timer;
  Rng rng(1618);
  std::normal_distribution<double> normal;
  double worst_exact = 0.0, worst_z = 0.0;
  for (int T = 1; T <= 8; ++T) {
    BstsConfig cfg;
    cfg.ar = 0.6 + 0.4 * uniform01(rng);
    cfg.trend_var = 0.05 + uniform01(rng);
    cfg.init_mean = normal(rng);
    cfg.init_var = 0.3 + uniform01(rng);
    const double obs = 0.2 + uniform01(rng);
    Eigen::VectorXd z(T);
    for (auto& v : z) v = normal(rng);
    std::vector<double> zs(z.data(), z.data() + T);
    auto cond = oracle::condition_on_observations(
        oracle::dense_state_space(T, cfg.ar, cfg.trend_var, cfg.init_mean, cfg.init_var, obs), z);
    const auto f = kalman_filter(zs, cfg, obs);
    worst_exact = std::max(worst_exact, std::abs(f.log_marginal - cond.log_marginal));
    const auto sm = smoothed_moments(zs, cfg, obs);
    for (int t = 0; t <= T; ++t) {
      worst_exact = std::max(worst_exact, std::abs(sm.mean[t] - cond.mean[t]));
      worst_exact = std::max(worst_exact, std::abs(sm.var[t] - cond.cov(t, t)));
    }

    Eigen::MatrixXd draws(kSmootherDraws, T + 1);
    for (int i = 0; i < kSmootherDraws; ++i) {
      const auto path = simulation_smoother(zs, cfg, obs, rng);
      for (int t = 0; t <= T; ++t) draws(i, t) = path[t];
    }
    const Eigen::VectorXd mean = draws.colwise().mean();
    const Eigen::MatrixXd centered = draws.rowwise() - mean.transpose();
    const Eigen::VectorXd var = centered.cwiseAbs2().colwise().sum() / (kSmootherDraws - 1);
    for (int t = 0; t <= T; ++t) {
      const double v = cond.cov(t, t);
      worst_z = std::max(worst_z, std::abs(mean[t] - cond.mean[t]) / std::sqrt(v / kSmootherDraws));
      worst_z = std::max(worst_z, std::abs(var[t] - v) / (v * std::sqrt(2.0 / kSmootherDraws)));
    }
  }
  const bool pass = worst_exact < kKalmanTol && worst_z < kSmootherSe;
  report(5, "kalman/smoother oracle", pass,
         fmt("max abs err=%.1e < %.0e, max MC z=%.2f < 3", worst_exact, kKalmanTol, worst_z),
         timer);
  CHECK(worst_exact < kKalmanTol);
  CHECK(worst_z < kSmootherSe);
}

TEST_CASE("mixture crps matches monte carlo") {
  Timer timer;
  Rng rng(1414);
  std::normal_distribution<double> normal;
  const boost::math::normal unit;
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 1 + static_cast<int>(uniform01(rng) * 5);
    RegressionMixture mix;
    for (int c = 0; c < k; ++c) {
      mix.means.push_back(2.0 * normal(rng));
      const double sd = 0.2 + 1.8 * uniform01(rng);
      mix.vars.push_back(sd * sd);
    }
    const double y = 2.5 * normal(rng);
    // equal-weight components, stratified uniforms within each component
    const int per = kCrpsSamples / k;
    std::vector<double> xs;
    xs.reserve(static_cast<std::size_t>(per) * k);
    for (int c = 0; c < k; ++c) {
      const double sd = std::sqrt(mix.vars[c]);
      for (int i = 0; i < per; ++i) {
        const double u = (i + uniform01(rng)) / per;
        xs.push_back(mix.means[c] + sd * boost::math::quantile(unit, std::clamp(u, 1e-300, 1.0 - 1e-16)));
      }
    }
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double abs_y = 0.0, pair = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      abs_y += std::abs(xs[i] - y);
      pair += (2.0 * static_cast<double>(i) - n + 1.0) * xs[i];
    }
    // E|X - X'| over all ordered pairs of the sample
    const double mc = abs_y / n - pair / (n * (n - 1.0));
    worst = std::max(worst, std::abs(mixture_crps(mix, y) - mc));
  }
  report(6, "crps closed form", worst < kCrpsTol, fmt("max |closed-MC|=%.1e < %.0e", worst, kCrpsTol),
         timer);
  CHECK(worst < kCrpsTol);
}

TEST_CASE("polynomial experiment at desk scale") {
  Timer timer;
  ExperimentConfig cfg = config_file("polynomial.json");
  cfg.eval.baseline = true;
  REQUIRE(cfg.model.hidden == std::vector<int>{200, 200});
  REQUIRE(cfg.data.n_train == 20);
  REQUIRE(cfg.data.n_test == 1000);
  REQUIRE(cfg.sampler.retained_count() == 1000);
  const RunSummary out = run_fit(cfg, scratch("polynomial"));
  double cov = -1, width_m = -1, width_b = -1, frac = -1;
  for (const auto& run : out.metrics["runs"]) {
    if (run["label"] == "mbnn") {
      cov = run["metrics"]["coverage"].get<double>();
      width_m = run["metrics"]["interval_width"].get<double>();
      frac = run["final_active_fraction"].get<double>();
    } else if (run["label"] == "bnn") {
      width_b = run["metrics"]["interval_width"].get<double>();
    }
  }
  const bool pass = cov >= kCoverageLo && cov <= kCoverageHi && width_m < width_b &&
                    frac < kActiveFraction;
  report(7, "polynomial desk run", pass,
         fmt("mBNN coverage=%.3f width=%.2f, ", cov, width_m) +
             fmt("BNN width=%.2f, active fraction=%.4f", width_b, frac),
         timer);
  CHECK(cov >= kCoverageLo);
  CHECK(cov <= kCoverageHi);
  CHECK(width_m < width_b);
  CHECK(frac < kActiveFraction);
}

TEST_CASE("gradient-informed death proposals prune faster") {
  Timer timer;
  ExperimentConfig cfg = config_file("ablation.json");
  cfg.ablation.birth_rules = {SelectionRule::Uniform};
  cfg.ablation.death_rules = {SelectionRule::Uniform, SelectionRule::GradMagnitude};
  int wins = 0;
  std::string detail;
  for (int s = 0; s < kOrderingSeeds; ++s) {
    cfg.seed = 100 + static_cast<std::uint64_t>(s);
    const RunSummary out = run_ablation(cfg, scratch("ablation_" + std::to_string(s)));
    double uu = -1, ug = -1;
    for (const auto& run : out.metrics["runs"]) {
      if (run["label"] == "uniform/uniform") uu = run["final_active_fraction"].get<double>();
      if (run["label"] == "uniform/grad_magnitude") ug = run["final_active_fraction"].get<double>();
    }
    if (ug < uu) ++wins;
    detail += fmt("%.3f/%.3f ", ug, uu);
  }
  report(8, "ablation ordering", wins >= kOrderingWins,
         std::to_string(wins) + "/" + std::to_string(kOrderingSeeds) +
             " seeds lower (grad/uniform: " + detail + ")",
         timer);
  CHECK(wins >= kOrderingWins);
}

TEST_CASE("active node count decreases with lambda") {
  Timer timer;
  ExperimentConfig cfg = config_file("lambda_sweep.json");
  REQUIRE(cfg.lambdas == std::vector<double>{0.075, 0.1, 0.125});
  REQUIRE(cfg.data.repetitions == 5);
  const RunSummary out = run_fit(cfg, scratch("lambda"));
  std::map<double, double> median;
  for (const auto& group : out.metrics["summary"])
    if (group["label"] == "mbnn")
      median[group["lambda"].get<double>()] = group["final_active_total"]["median"].get<double>();
  REQUIRE(median.size() == 3);
  bool monotone = true;
  double prev = 1e300;
  std::string detail;
  for (const auto& [lambda, m] : median) {
    monotone = monotone && m <= prev;
    prev = m;
    detail += fmt("lambda=%.3f: %.1f  ", lambda, m);
  }
  report(9, "lambda monotonicity", monotone, "median active " + detail, timer);
  CHECK(monotone);
}
