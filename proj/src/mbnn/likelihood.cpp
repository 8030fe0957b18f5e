#include "mbnn/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "mbnn/errors.hpp"

namespace mbnn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.x.resize(static_cast<Eigen::Index>(rows.size()), x.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Eigen::Index>(i)) = x.row(static_cast<Eigen::Index>(rows[i]));
    out.y[static_cast<Eigen::Index>(i)] = y[static_cast<Eigen::Index>(rows[i])];
  }
  out.transform = transform;
  return out;
}

void validate_dataset(const Dataset& data, const ModelKind& kind) {
  if (data.x.rows() < 1) throw InvalidInput("dataset is empty");
  if (data.y.size() != data.x.rows()) throw InvalidInput("dataset x/y row counts differ");
  if (!data.x.allFinite() || !data.y.allFinite())
    throw InvalidInput("dataset contains non-finite entries");
  if (kind.task == Task::Multiclass && kind.num_classes < 2)
    throw InvalidInput("multiclass model needs K >= 2");
  if (kind.task != Task::Regression) {
    const int k = kind.task == Task::Binary ? 2 : kind.num_classes;
    for (Eigen::Index i = 0; i < data.y.size(); ++i) {
      const double v = data.y[i];
      if (v != std::floor(v) || v < 0 || v >= k)
        throw InvalidInput("label out of range at row " + std::to_string(i));
    }
  }
}

double log_sigmoid(double x) {
  // log(1/(1+e^-x)) = -softplus(-x)
  return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return kNegInf;
  const double m = *std::max_element(values.begin(), values.end());
  if (m == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - m);
  return m + std::log(acc);
}

double log_lik_regression(const Vector& outputs, const Vector& y, double sigma2) {
  if (!(sigma2 > 0)) throw InvalidInput("noise variance must be positive");
  if (outputs.size() != y.size()) throw InvalidInput("output/target length mismatch");
  const double n = static_cast<double>(y.size());
  const double ssr = (y - outputs).squaredNorm();
  return -0.5 * n * std::log(2.0 * std::numbers::pi * sigma2) - ssr / (2.0 * sigma2);
}

double log_lik_binary(const Vector& logits, const Vector& y) {
  if (logits.size() != y.size()) throw InvalidInput("logit/label length mismatch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i)
    total += y[i] > 0.5 ? log_sigmoid(logits[i]) : log_sigmoid(-logits[i]);
  return total;
}

double log_lik_multiclass(const Matrix& logits, const Vector& labels) {
  if (logits.rows() != labels.size()) throw InvalidInput("logit/label length mismatch");
  if (logits.cols() < 2) throw InvalidInput("multiclass likelihood needs K >= 2");
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    for (Eigen::Index k = 0; k < logits.cols(); ++k) row[k] = logits(i, k);
    total += logits(i, static_cast<Eigen::Index>(labels[i])) - log_sum_exp(row);
  }
  return total;
}

namespace {

// Likelihood term and its gradients; priors are not touched.
PosteriorTerms likelihood_pass(const Model& model, const Vector& theta, double sigma2,
                               const Vector& mask_values, const Dataset& data,
                               const EvalRequest& req) {
  PosteriorTerms out;
  const ForwardCache cache = forward_cached(model.arch, theta, mask_values, data.x);
  const Matrix& raw = cache.output;
  const double bound = model.truncation;
  const Matrix f = clamp_outputs(raw, bound);
  Matrix d_out;  // d log_lik / d raw output
  const bool need_grad = req.grad_theta || req.grad_mask;
  if (need_grad) d_out.resize(raw.rows(), raw.cols());

  switch (model.kind.task) {
    case Task::Regression: {
      if (raw.cols() != 1) throw InvalidInput("regression expects a single network output");
      const Vector resid = data.y - f.col(0);
      out.sum_sq_residual = resid.squaredNorm();
      out.log_lik = log_lik_regression(f.col(0), data.y, sigma2);
      if (need_grad) d_out.col(0) = resid / sigma2;
      break;
    }
    case Task::Binary: {
      if (raw.cols() != 1) throw InvalidInput("binary model expects a single logit");
      out.log_lik = log_lik_binary(f.col(0), data.y);
      if (need_grad)
        for (Eigen::Index i = 0; i < f.rows(); ++i) d_out(i, 0) = data.y[i] - sigmoid(f(i, 0));
      break;
    }
    case Task::Multiclass: {
      if (raw.cols() != model.kind.num_classes)
        throw InvalidInput("multiclass model expects K outputs");
      out.log_lik = log_lik_multiclass(f, data.y);
      if (need_grad) {
        for (Eigen::Index i = 0; i < f.rows(); ++i) {
          const double m = f.row(i).maxCoeff();
          Eigen::RowVectorXd e = (f.row(i).array() - m).exp();
          d_out.row(i) = -e / e.sum();
          d_out(i, static_cast<Eigen::Index>(data.y[i])) += 1.0;
        }
      }
      break;
    }
  }
  if (!std::isfinite(out.log_lik))
    throw NumericError("non-finite log-likelihood", model.arch.depth());
  out.log_lik *= req.lik_weight;

  if (need_grad) {
    // clamp subgradient: 1 inside [-F, F], 0 outside
    d_out = (raw.array().abs() <= bound).select(d_out, 0.0) * req.lik_weight;
    Gradients g = backward(model.arch, theta, mask_values, data.x, cache, d_out, req.grad_mask);
    if (req.grad_theta) out.grad_theta = std::move(g.theta);
    if (req.grad_mask) out.grad_mask = std::move(g.mask);
  }
  return out;
}

}  // namespace

PosteriorTerms evaluate_relaxed(const Model& model, const Params& w, const Vector& mask_values,
                                const Dataset& data, const EvalRequest& req) {
  const double lp_mask = log_prior_mask(w.mask, model.prior);
  if (lp_mask == kNegInf) {
    PosteriorTerms out;
    out.log_prior_mask = kNegInf;
    out.log_post = kNegInf;
    return out;
  }
  double lp_sigma2 = 0.0;
  if (model.kind.task == Task::Regression) {
    lp_sigma2 = log_prior_sigma2(w.sigma2, model.prior);
    if (lp_sigma2 == kNegInf) {
      PosteriorTerms out;
      out.log_prior_sigma2 = kNegInf;
      out.log_post = kNegInf;
      return out;
    }
  }
  PosteriorTerms out = likelihood_pass(model, w.theta, w.sigma2, mask_values, data, req);
  out.log_prior_mask = lp_mask;
  out.log_prior_sigma2 = lp_sigma2;
  out.log_prior_theta = req.value ? log_prior_theta(w.theta, model.prior)
                                  : std::numeric_limits<double>::quiet_NaN();
  out.log_post = out.log_prior_mask + out.log_prior_theta + out.log_prior_sigma2 + out.log_lik;
  if (req.grad_theta) out.grad_theta += grad_log_prior_theta(w.theta, model.prior);
  return out;
}

PosteriorTerms evaluate(const Model& model, const Params& w, const Dataset& data,
                        const EvalRequest& req) {
  return evaluate_relaxed(model, w, w.mask.multipliers(), data, req);
}

double log_posterior(const Model& model, const Params& w, const Dataset& data) {
  return evaluate(model, w, data).log_post;
}

Vector grad_theta(const Model& model, const Params& w, const Dataset& data) {
  EvalRequest req;
  req.grad_theta = true;
  PosteriorTerms t = likelihood_pass(model, w.theta, w.sigma2, w.mask.multipliers(), data, req);
  return t.grad_theta + grad_log_prior_theta(w.theta, model.prior);
}

Vector grad_mask(const Model& model, const Params& w, const Dataset& data) {
  EvalRequest req;
  req.grad_mask = true;
  return likelihood_pass(model, w.theta, w.sigma2, w.mask.multipliers(), data, req).grad_mask;
}

MaskTarget mask_target(const Model& model, const Params& w, const Dataset& data,
                       bool grad_active, bool grad_inactive, double lik_weight) {
  MaskTarget out;
  out.value = log_prior_mask(w.mask, model.prior);
  if (out.value == kNegInf) return out;
  EvalRequest req;
  req.lik_weight = lik_weight;
  if (grad_inactive) {
    req.grad_mask = true;
    PosteriorTerms t = likelihood_pass(model, w.theta, w.sigma2, w.mask.multipliers(), data, req);
    out.value += t.log_lik;
    out.sum_sq_residual = t.sum_sq_residual;
    out.grad_mask = std::move(t.grad_mask);
    if (!grad_active)
      for (std::size_t j = 0; j < w.mask.size(); ++j)
        if (w.mask.at(j)) out.grad_mask[static_cast<Eigen::Index>(j)] = 0.0;
    return out;
  }
  const SubNetwork sub = active_subnetwork(model.arch, w.mask);
  Model compact = model;
  compact.arch = sub.arch;
  req.grad_mask = grad_active;
  const Vector ones = Vector::Ones(static_cast<Eigen::Index>(sub.arch.num_hidden()));
  PosteriorTerms t =
      likelihood_pass(compact, gather(w.theta, sub.param_index), w.sigma2, ones, data, req);
  out.value += t.log_lik;
  out.sum_sq_residual = t.sum_sq_residual;
  if (grad_active) {
    out.grad_mask = Vector::Zero(static_cast<Eigen::Index>(model.arch.num_hidden()));
    for (std::size_t i = 0; i < sub.node_index.size(); ++i)
      out.grad_mask[static_cast<Eigen::Index>(sub.node_index[i])] = t.grad_mask[static_cast<Eigen::Index>(i)];
  }
  return out;
}

double sum_sq_residual(const Model& model, const Params& w, const Dataset& data) {
  if (model.kind.task != Task::Regression) throw InvalidInput("residuals need a regression model");
  if (w.mask.any_layer_empty())
    return likelihood_pass(model, w.theta, w.sigma2, w.mask.multipliers(), data, {}).sum_sq_residual;
  return mask_target(model, w, data, false, false).sum_sq_residual;
}

}  // namespace mbnn
