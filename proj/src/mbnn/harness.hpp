#pragma once
// Experiment orchestration: configuration, dataset preparation, the fit /
// lambda-sweep / ablation / time-series protocols, and the results bundle.
//
// A results bundle is a directory holding
//   metrics.json          per-run and summary metrics (deterministic bytes)
//   intervals.csv         per-test-point predictive intervals
//   trace.csv             per-iteration chain trace
//   resolved_config.json  the complete configuration that produced it
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "mbnn/bsts.hpp"
#include "mbnn/data.hpp"
#include "mbnn/priors.hpp"
#include "mbnn/proposals.hpp"
#include "mbnn/samplers.hpp"

namespace mbnn {

using Json = nlohmann::ordered_json;

struct DataSpec {
  // polynomial | friedman | csv | bsts_synthetic; bsts experiments default to bsts_synthetic
  std::string source = "polynomial";
  std::size_t n_train = 20;
  std::size_t n_test = 1000;
  int dim = 5;             // friedman and bsts_synthetic
  double noise_sd = 1.0;   // friedman
  std::string path;        // csv sources
  std::string target;      // target column
  std::string time_column;  // time-series csv
  double train_fraction = 0.9;
  int repetitions = 1;
  std::size_t length = 365;      // bsts_synthetic series length
  std::size_t train_length = 240;  // series prefix used for fitting
};

struct ModelSpec {
  std::string task = "regression";  // regression | binary | multiclass
  int num_classes = 2;
  std::vector<int> hidden{200, 200};
  double truncation = 100.0;
};

struct EvalSpec {
  double level = 0.95;
  bool baseline = false;  // also run the all-active BNN on the same data and seed
  bool write_predictive = false;  // predictive.csv with every mixture component
};

struct AblationSpec {
  std::vector<SelectionRule> birth_rules{SelectionRule::Uniform, SelectionRule::GradMagnitude,
                                         SelectionRule::LinearApprox};
  std::vector<SelectionRule> death_rules{SelectionRule::Uniform, SelectionRule::GradMagnitude,
                                         SelectionRule::LinearApprox};
  long iterations = 2000;
};

struct BstsSpec {
  BstsConfig cfg;
  std::vector<RegressionComponent> components{RegressionComponent::Linear,
                                              RegressionComponent::Bnn, RegressionComponent::Mbnn};
  long sweeps = 600;
  long burn_in = 100;
  long thinning = 1;
  long inner_iterations = 5;  // network kernel steps per sweep
};

struct ExperimentConfig {
  std::string experiment = "fit";  // fit | ablation | bsts
  std::uint64_t seed = 0;
  DataSpec data;
  ModelSpec model;
  PriorConfig prior;  // prior.n is set from the training size
  SamplerConfig sampler;
  ProposalKind proposal;
  EvalSpec eval;
  std::vector<double> lambdas;  // lambda sweep; empty = just prior.lambda
  AblationSpec ablation;
  BstsSpec bsts;

  // Throws ConfigError on inconsistent or out-of-range settings.
  void validate() const;
};

// Missing keys keep their defaults; unknown keys and wrong types raise ConfigError.
ExperimentConfig config_from_json(const Json& doc);
Json config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

// Applies "a.b.c=value" to a config document. The value is parsed as JSON
// when possible and kept as a string otherwise.
void apply_override(Json& doc, const std::string& assignment);

struct RunSummary {
  Json metrics;  // the metrics.json document
  std::filesystem::path directory;
};

// Runs cfg.experiment and writes the bundle into `out_dir` (created if needed).
RunSummary run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
RunSummary run_fit(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
RunSummary run_ablation(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);
RunSummary run_bsts(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

// Writes train.csv and test.csv (raw units, columns x,y).
void write_polynomial_data(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                           const std::filesystem::path& out_dir);

// Recomputes interval-based metrics (and, when predictive.csv is present,
// nll and crps) from an existing bundle and aggregates them per run group.
Json recompute_metrics(const std::filesystem::path& run_dir);

// Mean and standard error (sd / sqrt(k)); se is 0 for a single value.
struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};
MeanSe mean_se(const std::vector<double>& values);

}  // namespace mbnn
