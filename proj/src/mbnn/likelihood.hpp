#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mbnn/network.hpp"
#include "mbnn/priors.hpp"

namespace mbnn {

// Affine transform applied to a dataset before modelling. Inputs and targets
// are stored standardized; `y_mean`/`y_scale` map predictions back.
struct Standardization {
  Vector x_mean;
  Vector x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;
};

struct Dataset {
  Matrix x;  // n x d
  Vector y;  // regression targets or class labels stored as doubles
  Standardization transform;

  std::size_t size() const { return static_cast<std::size_t>(x.rows()); }
  int dim() const { return static_cast<int>(x.cols()); }
  Dataset subset(std::span<const std::size_t> rows) const;
};

enum class Task { Regression, Binary, Multiclass };

struct ModelKind {
  Task task = Task::Regression;
  int num_classes = 1;

  static ModelKind regression() { return {Task::Regression, 1}; }
  static ModelKind binary() { return {Task::Binary, 2}; }
  static ModelKind multiclass(int k) { return {Task::Multiclass, k}; }
  int output_dim() const { return task == Task::Multiclass ? num_classes : 1; }
};

void validate_dataset(const Dataset& data, const ModelKind& kind);

double log_lik_regression(const Vector& outputs, const Vector& y, double sigma2);
double log_lik_binary(const Vector& logits, const Vector& y);
double log_lik_multiclass(const Matrix& logits, const Vector& labels);

double log_sigmoid(double x);
double log_sum_exp(std::span<const double> values);

struct Model {
  Architecture arch;
  ModelKind kind;
  PriorConfig prior;
  double truncation = 100.0;
};

// w = (M, theta, sigma2); sigma2 is ignored for classification.
struct Params {
  MaskState mask;
  Vector theta;
  double sigma2 = 1.0;
};

struct PosteriorTerms {
  double log_prior_mask = 0.0;
  double log_prior_theta = 0.0;
  double log_prior_sigma2 = 0.0;
  double log_lik = 0.0;
  double log_post = 0.0;
  double sum_sq_residual = 0.0;  // regression only
  Vector grad_theta;             // d log_post / d theta, if requested
  Vector grad_mask;              // d log_lik / d mask multipliers, if requested
};

struct EvalRequest {
  bool grad_theta = false;
  bool grad_mask = false;
  // false skips the weight prior density; log_prior_theta and log_post are then NaN.
  bool value = true;
  // Multiplies the likelihood term (and its gradients); n/|batch| for minibatches.
  double lik_weight = 1.0;
};

// Full log-posterior assembly. Returns log_post = -inf (and skips the network)
// when the mask is outside prior support.
PosteriorTerms evaluate(const Model& model, const Params& w, const Dataset& data,
                        const EvalRequest& req = {});

// Same, but with arbitrary real-valued mask multipliers (continuous relaxation).
// Mask prior terms are taken from `w.mask`.
PosteriorTerms evaluate_relaxed(const Model& model, const Params& w, const Vector& mask_values,
                                const Dataset& data, const EvalRequest& req = {});

double log_posterior(const Model& model, const Params& w, const Dataset& data);
Vector grad_theta(const Model& model, const Params& w, const Dataset& data);
// Gradient of the log-likelihood with respect to the relaxed mask, evaluated
// at the current binary mask. The mask and weight priors do not depend on the
// relaxed multipliers.
Vector grad_mask(const Model& model, const Params& w, const Dataset& data);

// The mask-dependent part of the log posterior at fixed (theta, sigma2):
// log prior(M) + log likelihood. The weight and noise priors cancel in mask
// moves and are omitted. Evaluated on the active sub-network unless
// gradients at inactive nodes are requested.
struct MaskTarget {
  double value = 0.0;
  double sum_sq_residual = 0.0;
  Vector grad_mask;  // full length; entries outside the requested set are 0
};
MaskTarget mask_target(const Model& model, const Params& w, const Dataset& data,
                       bool grad_active, bool grad_inactive, double lik_weight = 1.0);

// Sum of squared regression residuals under the truncated network.
double sum_sq_residual(const Model& model, const Params& w, const Dataset& data);

}  // namespace mbnn
