#pragma once

#include <utility>
#include <vector>

#include "mbnn/likelihood.hpp"
#include "mbnn/samplers.hpp"

namespace mbnn {

// Equal-weight Gaussian mixture; one component per posterior draw.
struct RegressionMixture {
  std::vector<double> means;
  std::vector<double> vars;

  std::size_t size() const { return means.size(); }
  double mean() const;
  double cdf(double y) const;
  double log_density(double y) const;
  // Maps a standardized-space mixture to original units.
  RegressionMixture rescaled(double scale, double shift) const;
};

// Per-draw class-probability vectors, equal weights.
struct ClassMixture {
  std::vector<Vector> probs;
  Vector averaged() const;
};

// Components of the posterior predictive at one input (standardized units).
RegressionMixture predictive_mixture(const Model& model, const std::vector<PosteriorDraw>& draws,
                                     const Vector& x);
ClassMixture predictive_class_mixture(const Model& model, const std::vector<PosteriorDraw>& draws,
                                      const Vector& x);

// Builds mixtures for every row of `inputs` incrementally, one draw at a time,
// so draws need not be kept in memory.
class PredictiveAccumulator {
 public:
  PredictiveAccumulator(const Model& model, Matrix inputs);
  void add(const PosteriorDraw& draw);
  std::size_t draws() const { return count_; }
  // Mixture for test row i, mapped to original units with (scale, shift).
  RegressionMixture regression(std::size_t i, double scale = 1.0, double shift = 0.0) const;
  Vector class_probs(std::size_t i) const;  // averaged over draws
  std::size_t rows() const { return static_cast<std::size_t>(inputs_.rows()); }

 private:
  const Model* model_;
  Matrix inputs_;
  std::size_t count_ = 0;
  std::vector<std::vector<double>> means_;  // [row][draw]
  std::vector<double> vars_;                // [draw]
  Matrix prob_sum_;                         // classification
};

// Central interval [q((1-level)/2), q((1+level)/2)] of the exact mixture CDF.
std::pair<double, double> predictive_interval(const RegressionMixture& mix, double level);

// CRPS(F, y) = E|X - y| - E|X - X'| / 2 in closed form for a Gaussian mixture.
double mixture_crps(const RegressionMixture& mix, double y);
double gaussian_crps(double mean, double sd, double y);

struct RegressionMetrics {
  double coverage = 0.0;
  double rmse = 0.0;
  double nll = 0.0;
  double crps = 0.0;
  double mean_interval_width = 0.0;
};

struct IntervalRow {
  double y = 0.0;
  double lo = 0.0;
  double hi = 0.0;
  double mean = 0.0;
};

RegressionMetrics metrics_regression(const std::vector<RegressionMixture>& mixtures,
                                     const Vector& y, double level = 0.95,
                                     std::vector<IntervalRow>* rows = nullptr);

struct ClassificationMetrics {
  double accuracy = 0.0;
  double nll = 0.0;
  double ece = 0.0;
};

ClassificationMetrics metrics_classification(const std::vector<Vector>& averaged_probs,
                                             const Vector& labels, int bins = 15);

}  // namespace mbnn
