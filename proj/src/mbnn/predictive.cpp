#include "mbnn/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mbnn/errors.hpp"

namespace mbnn {

namespace {

double norm_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }
double norm_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

// E|Z| for Z ~ N(mu, var).
double abs_gaussian_mean(double mu, double var) {
  const double s = std::sqrt(var);
  if (s == 0.0) return std::abs(mu);
  const double z = mu / s;
  return mu * (2.0 * norm_cdf(z) - 1.0) + 2.0 * s * norm_pdf(z);
}

}  // namespace

double RegressionMixture::mean() const {
  double acc = 0.0;
  for (double m : means) acc += m;
  return acc / static_cast<double>(means.size());
}

double RegressionMixture::cdf(double y) const {
  double acc = 0.0;
  for (std::size_t i = 0; i < means.size(); ++i)
    acc += norm_cdf((y - means[i]) / std::sqrt(vars[i]));
  return acc / static_cast<double>(means.size());
}

double RegressionMixture::log_density(double y) const {
  std::vector<double> terms(means.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    const double r = y - means[i];
    terms[i] = -0.5 * std::log(2.0 * std::numbers::pi * vars[i]) - 0.5 * r * r / vars[i];
  }
  return log_sum_exp(terms) - std::log(static_cast<double>(means.size()));
}

RegressionMixture RegressionMixture::rescaled(double scale, double shift) const {
  RegressionMixture out;
  out.means.reserve(means.size());
  out.vars.reserve(vars.size());
  for (std::size_t i = 0; i < means.size(); ++i) {
    out.means.push_back(means[i] * scale + shift);
    out.vars.push_back(vars[i] * scale * scale);
  }
  return out;
}

Vector ClassMixture::averaged() const {
  Vector avg = Vector::Zero(probs.front().size());
  for (const auto& p : probs) avg += p;
  return avg / static_cast<double>(probs.size());
}

namespace {

Vector class_probabilities(const Model& model, const Vector& logits) {
  if (model.kind.task == Task::Binary) {
    Vector p(2);
    const double l = logits[0];
    p[1] = l >= 0 ? 1.0 / (1.0 + std::exp(-l)) : std::exp(l) / (1.0 + std::exp(l));
    p[0] = 1.0 - p[1];
    return p;
  }
  const double m = logits.maxCoeff();
  Vector e = (logits.array() - m).exp();
  return e / e.sum();
}

}  // namespace

RegressionMixture predictive_mixture(const Model& model, const std::vector<PosteriorDraw>& draws,
                                     const Vector& x) {
  if (draws.empty()) throw InvalidInput("predictive mixture needs at least one draw");
  RegressionMixture mix;
  for (const auto& d : draws) {
    mix.means.push_back(forward_truncated(model.arch, d.theta, d.mask, x, model.truncation)[0]);
    mix.vars.push_back(d.sigma2);
  }
  return mix;
}

ClassMixture predictive_class_mixture(const Model& model, const std::vector<PosteriorDraw>& draws,
                                      const Vector& x) {
  if (draws.empty()) throw InvalidInput("predictive mixture needs at least one draw");
  ClassMixture mix;
  for (const auto& d : draws)
    mix.probs.push_back(
        class_probabilities(model, forward_truncated(model.arch, d.theta, d.mask, x, model.truncation)));
  return mix;
}

PredictiveAccumulator::PredictiveAccumulator(const Model& model, Matrix inputs)
    : model_(&model), inputs_(std::move(inputs)) {
  if (model.kind.task == Task::Regression)
    means_.resize(static_cast<std::size_t>(inputs_.rows()));
  else
    prob_sum_ = Matrix::Zero(inputs_.rows(), model.kind.task == Task::Binary ? 2 : model.kind.num_classes);
}

void PredictiveAccumulator::add(const PosteriorDraw& draw) {
  const Matrix out =
      forward_truncated(model_->arch, draw.theta, draw.mask, inputs_, model_->truncation);
  if (model_->kind.task == Task::Regression) {
    for (Eigen::Index i = 0; i < out.rows(); ++i) means_[static_cast<std::size_t>(i)].push_back(out(i, 0));
    vars_.push_back(draw.sigma2);
  } else {
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      prob_sum_.row(i) += class_probabilities(*model_, out.row(i).transpose()).transpose();
  }
  ++count_;
}

RegressionMixture PredictiveAccumulator::regression(std::size_t i, double scale, double shift) const {
  RegressionMixture mix{means_.at(i), vars_};
  return scale == 1.0 && shift == 0.0 ? mix : mix.rescaled(scale, shift);
}

Vector PredictiveAccumulator::class_probs(std::size_t i) const {
  return prob_sum_.row(static_cast<Eigen::Index>(i)).transpose() / static_cast<double>(count_);
}

std::pair<double, double> predictive_interval(const RegressionMixture& mix, double level) {
  if (!(level > 0 && level < 1)) throw InvalidInput("interval level must be in (0, 1)");
  if (mix.size() == 0) throw InvalidInput("empty mixture");
  double lo_b = std::numeric_limits<double>::infinity(), hi_b = -lo_b, max_sd = 0.0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    lo_b = std::min(lo_b, mix.means[i]);
    hi_b = std::max(hi_b, mix.means[i]);
    max_sd = std::max(max_sd, std::sqrt(mix.vars[i]));
  }
  lo_b -= 40.0 * max_sd;
  hi_b += 40.0 * max_sd;

  auto quantile = [&](double p) {
    double a = lo_b, b = hi_b;
    for (int it = 0; it < 200; ++it) {
      const double mid = 0.5 * (a + b);
      const double c = mix.cdf(mid);
      if (c < p) a = mid; else b = mid;
      if (b - a <= 1e-13 * std::max(1.0, std::abs(mid))) break;
    }
    return 0.5 * (a + b);
  };
  return {quantile(0.5 * (1.0 - level)), quantile(0.5 * (1.0 + level))};
}

double gaussian_crps(double mean, double sd, double y) {
  if (sd <= 0) return std::abs(y - mean);
  const double z = (y - mean) / sd;
  return sd * (z * (2.0 * norm_cdf(z) - 1.0) + 2.0 * norm_pdf(z) - 1.0 / std::sqrt(std::numbers::pi));
}

double mixture_crps(const RegressionMixture& mix, double y) {
  const std::size_t t = mix.size();
  if (t == 0) throw InvalidInput("empty mixture");
  double e_xy = 0.0;
  for (std::size_t i = 0; i < t; ++i) e_xy += abs_gaussian_mean(mix.means[i] - y, mix.vars[i]);
  e_xy /= static_cast<double>(t);

  // E|X - X'| over ordered pairs; the diagonal and each symmetric pair once.
  double e_xx = 0.0;
  for (std::size_t i = 0; i < t; ++i) {
    e_xx += abs_gaussian_mean(0.0, 2.0 * mix.vars[i]);
    for (std::size_t j = i + 1; j < t; ++j)
      e_xx += 2.0 * abs_gaussian_mean(mix.means[i] - mix.means[j], mix.vars[i] + mix.vars[j]);
  }
  e_xx /= static_cast<double>(t) * static_cast<double>(t);
  return e_xy - 0.5 * e_xx;
}

RegressionMetrics metrics_regression(const std::vector<RegressionMixture>& mixtures,
                                     const Vector& y, double level,
                                     std::vector<IntervalRow>* rows) {
  if (mixtures.empty() || static_cast<Eigen::Index>(mixtures.size()) != y.size())
    throw InvalidInput("metrics need one mixture per test target");
  RegressionMetrics m;
  const double n = static_cast<double>(mixtures.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < mixtures.size(); ++i) {
    const auto& mix = mixtures[i];
    const double yi = y[static_cast<Eigen::Index>(i)];
    const auto [lo, hi] = predictive_interval(mix, level);
    const double mean = mix.mean();
    m.coverage += (yi >= lo && yi <= hi) ? 1.0 : 0.0;
    m.mean_interval_width += hi - lo;
    sq += (yi - mean) * (yi - mean);
    m.nll -= mix.log_density(yi);
    m.crps += mixture_crps(mix, yi);
    if (rows) rows->push_back({yi, lo, hi, mean});
  }
  m.coverage /= n;
  m.mean_interval_width /= n;
  m.rmse = std::sqrt(sq / n);
  m.nll /= n;
  m.crps /= n;
  return m;
}

ClassificationMetrics metrics_classification(const std::vector<Vector>& averaged_probs,
                                             const Vector& labels, int bins) {
  if (averaged_probs.empty() || static_cast<Eigen::Index>(averaged_probs.size()) != labels.size())
    throw InvalidInput("metrics need one probability vector per label");
  if (bins < 1) throw InvalidInput("ECE needs at least one bin");
  ClassificationMetrics m;
  std::vector<double> bin_conf(bins, 0.0), bin_acc(bins, 0.0), bin_n(bins, 0.0);
  const double n = static_cast<double>(averaged_probs.size());
  for (std::size_t i = 0; i < averaged_probs.size(); ++i) {
    const Vector& p = averaged_probs[i];
    const auto label = static_cast<Eigen::Index>(labels[static_cast<Eigen::Index>(i)]);
    if (label < 0 || label >= p.size()) throw InvalidInput("label out of range");
    Eigen::Index arg = 0;
    const double conf = p.maxCoeff(&arg);
    const bool correct = arg == label;
    m.accuracy += correct ? 1.0 : 0.0;
    m.nll -= std::log(std::max(p[label], std::numeric_limits<double>::min()));
    const int b = std::min(bins - 1, static_cast<int>(conf * bins));
    bin_conf[b] += conf;
    bin_acc[b] += correct ? 1.0 : 0.0;
    bin_n[b] += 1.0;
  }
  for (int b = 0; b < bins; ++b)
    if (bin_n[b] > 0) m.ece += std::abs(bin_acc[b] - bin_conf[b]) / n;
  m.accuracy /= n;
  m.nll /= n;
  return m;
}

}  // namespace mbnn
