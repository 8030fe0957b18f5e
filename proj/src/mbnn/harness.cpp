#include "mbnn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "mbnn/errors.hpp"
#include "mbnn/predictive.hpp"

namespace mbnn {

namespace fs = std::filesystem;

namespace {

// ---- enum <-> string ---------------------------------------------------------

std::string family_name(WeightFamily f) {
  switch (f) {
    case WeightFamily::Cauchy: return "cauchy";
    case WeightFamily::StudentT: return "student_t";
    case WeightFamily::Gaussian: return "gaussian";
  }
  return "cauchy";
}

WeightFamily family_from(const std::string& s) {
  if (s == "cauchy") return WeightFamily::Cauchy;
  if (s == "student_t") return WeightFamily::StudentT;
  if (s == "gaussian") return WeightFamily::Gaussian;
  throw ConfigError("prior.weight_family: unknown family '" + s + "'");
}

std::string kernel_name(WeightKernel k) { return k == WeightKernel::Hmc ? "hmc" : "sgld"; }

WeightKernel kernel_from(const std::string& s) {
  if (s == "hmc") return WeightKernel::Hmc;
  if (s == "sgld") return WeightKernel::Sgld;
  throw ConfigError("sampler.kernel: unknown kernel '" + s + "'");
}

SelectionRule rule_from(const std::string& s, const std::string& key) {
  try {
    return selection_rule_from_string(s);
  } catch (const InvalidInput&) {
    throw ConfigError(key + ": unknown selection rule '" + s + "'");
  }
}

// ---- strict object reader ------------------------------------------------------

class Section {
 public:
  Section(const Json& doc, std::string path) : path_(std::move(path)) {
    if (!doc.is_object()) throw ConfigError(where("") + "expected an object");
    doc_ = &doc;
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = doc_->find(key);
    if (it == doc_->end()) return;
    try {
      out = it->template get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(where(key) + "wrong type (" + std::string(it->type_name()) + ")");
    }
  }

  const Json* child(const char* key) {
    seen_.insert(key);
    auto it = doc_->find(key);
    return it == doc_->end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = doc_->begin(); it != doc_->end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError("unknown config key '" + path(it.key().c_str()) + "'");
  }

 private:
  std::string where(const char* key) const { return "config '" + path(key) + "': "; }

  const Json* doc_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

std::vector<SelectionRule> rules_from(const std::vector<std::string>& names, const std::string& key) {
  std::vector<SelectionRule> out;
  for (const auto& n : names) out.push_back(rule_from(n, key));
  return out;
}

std::vector<std::string> rule_names(const std::vector<SelectionRule>& rules) {
  std::vector<std::string> out;
  for (auto r : rules) out.push_back(to_string(r));
  return out;
}

// ---- small utilities ---------------------------------------------------------------

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestError("cannot write " + path.string());
  out << text;
}

void write_json(const fs::path& path, const Json& doc) { write_text(path, doc.dump(2) + "\n"); }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double ratio(long num, long den) { return den > 0 ? static_cast<double>(num) / den : 0.0; }

ModelKind kind_of(const ModelSpec& m) {
  if (m.task == "regression") return ModelKind::regression();
  if (m.task == "binary") return ModelKind::binary();
  return ModelKind::multiclass(m.num_classes);
}

Model build_model(const ExperimentConfig& cfg, int input_dim, std::size_t n_train) {
  Model model;
  model.kind = kind_of(cfg.model);
  std::vector<int> widths{input_dim};
  widths.insert(widths.end(), cfg.model.hidden.begin(), cfg.model.hidden.end());
  widths.push_back(model.kind.output_dim());
  model.arch = Architecture(widths);
  model.prior = cfg.prior;
  model.prior.n = static_cast<double>(std::max<std::size_t>(n_train, 2));
  model.truncation = cfg.model.truncation;
  return model;
}

// Class labels are kept in raw units.
void restore_labels(DatasetPair& pair) {
  for (Dataset* d : {&pair.train, &pair.test}) {
    d->y = destandardize_targets(d->transform, d->y).array().round().matrix();
    d->transform.y_mean = 0.0;
    d->transform.y_scale = 1.0;
  }
}

struct Streams {
  static constexpr std::uint64_t kData = 1000;
  static constexpr std::uint64_t kChain = 2000;
  static constexpr std::uint64_t kInit = 3000;
};

DatasetPair prepare_data(const ExperimentConfig& cfg, int repetition,
                         std::vector<std::string>& warnings) {
  const auto& d = cfg.data;
  const std::uint64_t seed = derive_seed(cfg.seed, Streams::kData + repetition);
  DatasetPair pair;
  if (d.source == "polynomial") {
    pair = gen_polynomial(d.n_train, d.n_test, seed);
  } else if (d.source == "friedman") {
    pair = gen_friedman(d.n_train, d.n_test, d.dim, d.noise_sd, seed);
  } else if (d.source == "csv") {
    SplitSpec spec{d.train_fraction, cfg.seed, repetition};
    pair = load_csv(d.path, d.target, spec, &warnings);
  } else {
    throw ConfigError("data.source '" + d.source + "' cannot be used for this experiment");
  }
  if (cfg.model.task != "regression") restore_labels(pair);
  return pair;
}

std::vector<std::string> trace_header(int depth) {
  std::vector<std::string> h{"run", "iteration", "active_total", "active_fraction",
                             "log_posterior", "weight_accept", "mask_accepts", "mask_attempts"};
  for (int l = 0; l < depth; ++l) h.push_back("active_" + std::to_string(l + 1));
  return h;
}

void append_trace(std::vector<std::vector<double>>& rows, int run, const std::vector<TraceRow>& trace) {
  for (const auto& t : trace) {
    std::vector<double> r{static_cast<double>(run), static_cast<double>(t.iteration), 0.0,
                          t.active_fraction, t.log_posterior, t.weight_accept ? 1.0 : 0.0,
                          static_cast<double>(t.mask_accepts), static_cast<double>(t.mask_attempts)};
    int total = 0;
    for (int c : t.active) {
      total += c;
      r.push_back(c);
    }
    r[2] = total;
    rows.push_back(std::move(r));
  }
}

Json regression_json(const RegressionMetrics& m) {
  return Json{{"coverage", m.coverage}, {"rmse", m.rmse}, {"nll", m.nll}, {"crps", m.crps},
              {"interval_width", m.mean_interval_width}};
}

Json classification_json(const ClassificationMetrics& m) {
  return Json{{"accuracy", m.accuracy}, {"nll", m.nll}, {"ece", m.ece}};
}

// Groups runs by (label, lambda) and reports mean and standard error of
// every metric plus the final active-node total.
Json summarize(const Json& runs) {
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::vector<const Json*>> groups;
  for (const auto& r : runs) {
    const std::pair<std::string, double> key{r["label"].get<std::string>(),
                                             r.contains("lambda") ? r["lambda"].get<double>() : 0.0};
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }
  Json out = Json::array();
  for (const auto& key : keys) {
    const auto& members = groups[key];
    Json g{{"label", key.first}};
    if (members.front()->contains("lambda")) g["lambda"] = key.second;
    g["repetitions"] = members.size();
    Json metrics = Json::object();
    for (const auto& [name, value] : (*members.front())["metrics"].items()) {
      (void)value;
      std::vector<double> v;
      for (const Json* m : members) v.push_back((*m)["metrics"][name].get<double>());
      const MeanSe s = mean_se(v);
      metrics[name] = Json{{"mean", s.mean}, {"se", s.se}};
    }
    g["metrics"] = metrics;
    if (members.front()->contains("final_active_total")) {
      std::vector<double> v;
      for (const Json* m : members) v.push_back((*m)["final_active_total"].get<double>());
      const MeanSe s = mean_se(v);
      std::vector<double> sorted = v;
      std::sort(sorted.begin(), sorted.end());
      const std::size_t k = sorted.size();
      const double median = k % 2 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
      g["final_active_total"] = Json{{"mean", s.mean}, {"se", s.se}, {"median", median}};
    }
    out.push_back(std::move(g));
  }
  return out;
}

struct ChainJob {
  std::string label;
  double lambda = 0.0;
  bool mask_moves = true;
};

}  // namespace

// ---- config ----------------------------------------------------------------------------

MeanSe mean_se(const std::vector<double>& values) {
  MeanSe s;
  if (values.empty()) return s;
  const double k = static_cast<double>(values.size());
  for (double v : values) s.mean += v;
  s.mean /= k;
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.se = std::sqrt(ss / (k - 1.0) / k);
  }
  return s;
}

void ExperimentConfig::validate() const {
  static const std::set<std::string> experiments{"fit", "ablation", "bsts"};
  if (!experiments.count(experiment)) throw ConfigError("experiment must be fit, ablation or bsts");
  static const std::set<std::string> sources{"polynomial", "friedman", "csv", "bsts_synthetic"};
  if (!sources.count(data.source)) throw ConfigError("data.source '" + data.source + "' is unknown");
  if (data.source == "csv" && data.path.empty()) throw ConfigError("data.path is required for csv data");
  if (data.source == "csv" && !fs::exists(data.path))
    throw ConfigError("data.path '" + data.path + "' does not exist");
  if (data.source == "csv" && data.target.empty()) throw ConfigError("data.target is required for csv data");
  if (data.n_train < 1 || data.n_test < 1) throw ConfigError("data.n_train and data.n_test must be >= 1");
  if (data.repetitions < 1) throw ConfigError("data.repetitions must be >= 1");
  if (!(data.train_fraction > 0 && data.train_fraction < 1))
    throw ConfigError("data.train_fraction must lie in (0, 1)");
  if (model.hidden.empty()) throw ConfigError("model.hidden needs at least one hidden layer");
  for (int w : model.hidden)
    if (w < 1) throw ConfigError("model.hidden widths must be >= 1");
  if (model.task != "regression" && model.task != "binary" && model.task != "multiclass")
    throw ConfigError("model.task must be regression, binary or multiclass");
  if (model.task == "multiclass" && model.num_classes < 2)
    throw ConfigError("model.num_classes must be >= 2");
  if (!(model.truncation > 0)) throw ConfigError("model.truncation must be positive");
  if (!(eval.level > 0 && eval.level < 1)) throw ConfigError("eval.level must lie in (0, 1)");
  if (proposal.max_nodes < 1) throw ConfigError("proposal.max_nodes must be >= 1");
  if (ablation.iterations < 1) throw ConfigError("ablation.iterations must be >= 1");
  if (ablation.birth_rules.empty() || ablation.death_rules.empty())
    throw ConfigError("ablation rule lists must not be empty");
  for (double l : lambdas)
    if (!(l >= 0)) throw ConfigError("lambdas must be non-negative");
  if (experiment == "bsts") {
    if (bsts.sweeps < 1 || bsts.burn_in < 0 || bsts.thinning < 1 || bsts.inner_iterations < 1)
      throw ConfigError("bsts schedule values must be positive");
    if (bsts.burn_in >= bsts.sweeps) throw ConfigError("bsts.burn_in must be below bsts.sweeps");
    if (bsts.components.empty()) throw ConfigError("bsts.components must not be empty");
    if (data.source != "bsts_synthetic" && data.source != "csv")
      throw ConfigError("bsts needs bsts_synthetic or csv data");
    if (data.source == "csv" && data.time_column.empty())
      throw ConfigError("data.time_column is required for csv time series");
    if (data.train_length < 2) throw ConfigError("data.train_length must be >= 2");
    if (data.source == "bsts_synthetic" && data.train_length >= data.length)
      throw ConfigError("data.train_length must be below data.length");
    if (model.task != "regression") throw ConfigError("bsts supports regression only");
  } else if (data.source == "bsts_synthetic") {
    throw ConfigError("bsts_synthetic data is only used by the bsts experiment");
  }
  try {
    sampler.validate();
    PriorConfig p = prior;
    p.validate();
    bsts.cfg.validate();
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
  if (sampler.retained_count() < 1 && experiment == "fit")
    throw ConfigError("sampler schedule retains no draws (check burn_in and total_iterations)");
}

ExperimentConfig config_from_json(const Json& doc) {
  ExperimentConfig cfg;
  Section root(doc, "");
  root.read("experiment", cfg.experiment);
  root.read("seed", cfg.seed);
  root.read("lambdas", cfg.lambdas);
  if (cfg.experiment == "bsts") cfg.data.source = "bsts_synthetic";

  if (const Json* d = root.child("data")) {
    Section s(*d, "data");
    s.read("source", cfg.data.source);
    s.read("n_train", cfg.data.n_train);
    s.read("n_test", cfg.data.n_test);
    s.read("dim", cfg.data.dim);
    s.read("noise_sd", cfg.data.noise_sd);
    s.read("path", cfg.data.path);
    s.read("target", cfg.data.target);
    s.read("time_column", cfg.data.time_column);
    s.read("train_fraction", cfg.data.train_fraction);
    s.read("repetitions", cfg.data.repetitions);
    s.read("length", cfg.data.length);
    s.read("train_length", cfg.data.train_length);
    s.finish();
  }
  if (const Json* m = root.child("model")) {
    Section s(*m, "model");
    s.read("task", cfg.model.task);
    s.read("num_classes", cfg.model.num_classes);
    s.read("hidden", cfg.model.hidden);
    s.read("truncation", cfg.model.truncation);
    s.finish();
  }
  if (const Json* p = root.child("prior")) {
    Section s(*p, "prior");
    std::string family = family_name(cfg.prior.weight_family);
    s.read("lambda", cfg.prior.lambda);
    s.read("weight_family", family);
    s.read("student_dof", cfg.prior.student_dof);
    s.read("weight_scale", cfg.prior.weight_scale);
    s.read("sigma2_shape", cfg.prior.sigma2_shape);
    s.read("sigma2_rate", cfg.prior.sigma2_rate);
    s.finish();
    cfg.prior.weight_family = family_from(family);
  }
  if (const Json* p = root.child("sampler")) {
    Section s(*p, "sampler");
    auto& c = cfg.sampler;
    std::string kernel = kernel_name(c.kernel);
    s.read("kernel", kernel);
    s.read("step_size", c.step_size);
    s.read("leapfrog_steps", c.leapfrog_steps);
    s.read("temperature", c.temperature);
    s.read("batch_size", c.batch_size);
    s.read("minibatch_mask_moves", c.minibatch_mask_moves);
    s.read("total_iterations", c.total_iterations);
    s.read("mh_interval", c.mh_interval);
    s.read("mh_steps", c.mh_steps);
    s.read("burn_in", c.burn_in);
    s.read("thinning", c.thinning);
    s.read("mask_moves", c.mask_moves);
    s.read("update_sigma2", c.update_sigma2);
    s.read("adapt_step_size", c.adapt_step_size);
    s.read("refresh_inactive", c.refresh_inactive);
    s.read("target_accept", c.target_accept);
    s.finish();
    c.kernel = kernel_from(kernel);
  }
  if (const Json* p = root.child("proposal")) {
    Section s(*p, "proposal");
    std::string birth = to_string(cfg.proposal.birth), death = to_string(cfg.proposal.death);
    s.read("birth", birth);
    s.read("death", death);
    s.read("max_nodes", cfg.proposal.max_nodes);
    s.finish();
    cfg.proposal.birth = rule_from(birth, "proposal.birth");
    cfg.proposal.death = rule_from(death, "proposal.death");
  }
  if (const Json* p = root.child("eval")) {
    Section s(*p, "eval");
    s.read("level", cfg.eval.level);
    s.read("baseline", cfg.eval.baseline);
    s.read("write_predictive", cfg.eval.write_predictive);
    s.finish();
  }
  if (const Json* p = root.child("ablation")) {
    Section s(*p, "ablation");
    auto births = rule_names(cfg.ablation.birth_rules), deaths = rule_names(cfg.ablation.death_rules);
    s.read("birth_rules", births);
    s.read("death_rules", deaths);
    s.read("iterations", cfg.ablation.iterations);
    s.finish();
    cfg.ablation.birth_rules = rules_from(births, "ablation.birth_rules");
    cfg.ablation.death_rules = rules_from(deaths, "ablation.death_rules");
  }
  if (const Json* p = root.child("bsts")) {
    Section s(*p, "bsts");
    auto& b = cfg.bsts;
    std::vector<std::string> comps;
    for (auto c : b.components) comps.push_back(to_string(c));
    s.read("ar", b.cfg.ar);
    s.read("trend_var", b.cfg.trend_var);
    s.read("init_mean", b.cfg.init_mean);
    s.read("init_var", b.cfg.init_var);
    s.read("obs_var_shape", b.cfg.obs_var_shape);
    s.read("obs_var_rate", b.cfg.obs_var_rate);
    s.read("components", comps);
    s.read("sweeps", b.sweeps);
    s.read("burn_in", b.burn_in);
    s.read("thinning", b.thinning);
    s.read("inner_iterations", b.inner_iterations);
    s.finish();
    b.components.clear();
    for (const auto& c : comps) {
      try {
        b.components.push_back(regression_component_from_string(c));
      } catch (const InvalidInput&) {
        throw ConfigError("bsts.components: unknown component '" + c + "'");
      }
    }
  }
  root.finish();
  cfg.validate();
  return cfg;
}

Json config_to_json(const ExperimentConfig& cfg) {
  std::vector<std::string> comps;
  for (auto c : cfg.bsts.components) comps.push_back(to_string(c));
  const auto& s = cfg.sampler;
  return Json{
      {"experiment", cfg.experiment},
      {"seed", cfg.seed},
      {"data",
       {{"source", cfg.data.source},
        {"n_train", cfg.data.n_train},
        {"n_test", cfg.data.n_test},
        {"dim", cfg.data.dim},
        {"noise_sd", cfg.data.noise_sd},
        {"path", cfg.data.path},
        {"target", cfg.data.target},
        {"time_column", cfg.data.time_column},
        {"train_fraction", cfg.data.train_fraction},
        {"repetitions", cfg.data.repetitions},
        {"length", cfg.data.length},
        {"train_length", cfg.data.train_length}}},
      {"model",
       {{"task", cfg.model.task},
        {"num_classes", cfg.model.num_classes},
        {"hidden", cfg.model.hidden},
        {"truncation", cfg.model.truncation}}},
      {"prior",
       {{"lambda", cfg.prior.lambda},
        {"weight_family", family_name(cfg.prior.weight_family)},
        {"student_dof", cfg.prior.student_dof},
        {"weight_scale", cfg.prior.weight_scale},
        {"sigma2_shape", cfg.prior.sigma2_shape},
        {"sigma2_rate", cfg.prior.sigma2_rate}}},
      {"sampler",
       {{"kernel", kernel_name(s.kernel)},
        {"step_size", s.step_size},
        {"leapfrog_steps", s.leapfrog_steps},
        {"temperature", s.temperature},
        {"batch_size", s.batch_size},
        {"minibatch_mask_moves", s.minibatch_mask_moves},
        {"total_iterations", s.total_iterations},
        {"mh_interval", s.mh_interval},
        {"mh_steps", s.mh_steps},
        {"burn_in", s.burn_in},
        {"thinning", s.thinning},
        {"mask_moves", s.mask_moves},
        {"update_sigma2", s.update_sigma2},
        {"adapt_step_size", s.adapt_step_size},
        {"refresh_inactive", s.refresh_inactive},
        {"target_accept", s.target_accept}}},
      {"proposal",
       {{"birth", to_string(cfg.proposal.birth)},
        {"death", to_string(cfg.proposal.death)},
        {"max_nodes", cfg.proposal.max_nodes}}},
      {"eval",
       {{"level", cfg.eval.level},
        {"baseline", cfg.eval.baseline},
        {"write_predictive", cfg.eval.write_predictive}}},
      {"lambdas", cfg.lambdas},
      {"ablation",
       {{"birth_rules", rule_names(cfg.ablation.birth_rules)},
        {"death_rules", rule_names(cfg.ablation.death_rules)},
        {"iterations", cfg.ablation.iterations}}},
      {"bsts",
       {{"ar", cfg.bsts.cfg.ar},
        {"trend_var", cfg.bsts.cfg.trend_var},
        {"init_mean", cfg.bsts.cfg.init_mean},
        {"init_var", cfg.bsts.cfg.init_var},
        {"obs_var_shape", cfg.bsts.cfg.obs_var_shape},
        {"obs_var_rate", cfg.bsts.cfg.obs_var_rate},
        {"components", comps},
        {"sweeps", cfg.bsts.sweeps},
        {"burn_in", cfg.bsts.burn_in},
        {"thinning", cfg.bsts.thinning},
        {"inner_iterations", cfg.bsts.inner_iterations}}}};
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return config_from_json(doc);
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  Json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    path.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->is_object()) throw ConfigError("override key '" + key + "' does not name an object");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = Json::object();
  }
  if (!node->is_object()) throw ConfigError("override key '" + key + "' does not name an object");
  (*node)[path.back()] = value;
}

// ---- fit / lambda sweep --------------------------------------------------------------------

RunSummary run_fit(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_json(out_dir / "resolved_config.json", config_to_json(cfg));

  const bool regression = cfg.model.task == "regression";
  std::vector<ChainJob> jobs;
  const std::vector<double> lambdas = cfg.lambdas.empty() ? std::vector<double>{cfg.prior.lambda}
                                                          : cfg.lambdas;
  for (double l : lambdas) jobs.push_back({cfg.sampler.mask_moves ? "mbnn" : "bnn", l, cfg.sampler.mask_moves});
  if (cfg.eval.baseline && cfg.sampler.mask_moves) jobs.push_back({"bnn", cfg.prior.lambda, false});

  Json runs = Json::array();
  std::vector<std::string> warnings;
  std::vector<std::vector<double>> trace_rows, interval_rows, predictive_rows;
  int depth = static_cast<int>(cfg.model.hidden.size());

  for (int rep = 0; rep < cfg.data.repetitions; ++rep) {
    DatasetPair pair = prepare_data(cfg, rep, warnings);
    for (const auto& job : jobs) {
      const auto t0 = std::chrono::steady_clock::now();
      const int run_id = static_cast<int>(runs.size());
      ExperimentConfig run_cfg = cfg;
      run_cfg.prior.lambda = job.lambda;
      Model model = build_model(run_cfg, pair.train.dim(), pair.train.size());
      validate_dataset(pair.train, model.kind);
      validate_dataset(pair.test, model.kind);

      SamplerConfig sc = cfg.sampler;
      sc.mask_moves = job.mask_moves;
      sc.seed = derive_seed(cfg.seed, Streams::kChain + rep);
      Rng init_rng(derive_seed(cfg.seed, Streams::kInit + rep));
      const Params init = initial_params(model, pair.train, init_rng);

      PredictiveAccumulator acc(model, pair.test.x);
      ChainOptions opts;
      opts.keep_draws = false;
      opts.on_draw = [&](const PosteriorDraw& d) { acc.add(d); };
      ChainResult chain = run_chain(init, model, pair.train, sc, cfg.proposal, opts);

      Json run{{"run", run_id}, {"label", job.label}, {"lambda", job.lambda}, {"repetition", rep},
               {"n_train", pair.train.size()}, {"n_test", pair.test.size()},
               {"retained_draws", acc.draws()}};
      if (regression) {
        const auto& tf = pair.test.transform;
        std::vector<RegressionMixture> mixes;
        mixes.reserve(acc.rows());
        for (std::size_t i = 0; i < acc.rows(); ++i) mixes.push_back(acc.regression(i, tf.y_scale, tf.y_mean));
        const Vector y = destandardize_targets(tf, pair.test.y);
        std::vector<IntervalRow> rows;
        run["metrics"] = regression_json(metrics_regression(mixes, y, cfg.eval.level, &rows));
        for (std::size_t i = 0; i < rows.size(); ++i)
          interval_rows.push_back({static_cast<double>(run_id), static_cast<double>(i), rows[i].y,
                                   rows[i].lo, rows[i].hi, rows[i].mean});
        if (cfg.eval.write_predictive)
          for (std::size_t i = 0; i < mixes.size(); ++i)
            for (std::size_t k = 0; k < mixes[i].size(); ++k)
              predictive_rows.push_back({static_cast<double>(run_id), static_cast<double>(i),
                                         static_cast<double>(k), mixes[i].means[k], mixes[i].vars[k]});
      } else {
        std::vector<Vector> probs;
        for (std::size_t i = 0; i < acc.rows(); ++i) probs.push_back(acc.class_probs(i));
        run["metrics"] = classification_json(metrics_classification(probs, pair.test.y));
        for (std::size_t i = 0; i < probs.size(); ++i) {
          Eigen::Index pred = 0;
          const double conf = probs[i].maxCoeff(&pred);
          const auto label = static_cast<Eigen::Index>(pair.test.y[static_cast<Eigen::Index>(i)]);
          interval_rows.push_back({static_cast<double>(run_id), static_cast<double>(i),
                                   static_cast<double>(label), static_cast<double>(pred), conf,
                                   probs[i][label]});
        }
      }
      const auto& fs_ = chain.final_state;
      run["final_active"] = fs_.params.mask.counts();
      run["final_active_total"] = fs_.params.mask.total_active();
      run["final_active_fraction"] = fs_.params.mask.active_fraction();
      run["weight_accept_rate"] = ratio(fs_.weight_accepts, fs_.weight_proposals);
      run["weight_divergent"] = fs_.weight_divergent;
      run["mask_accept_rate"] = ratio(fs_.mask_accepts, fs_.mask_proposals);
      run["final_step_size"] = chain.final_step_size;
      if (regression) run["final_sigma2"] = fs_.params.sigma2;
      append_trace(trace_rows, run_id, chain.trace);

      std::clog << "[fit] " << job.label << " lambda=" << job.lambda << " rep=" << rep << ": "
                << seconds_since(t0) << " s, active " << fs_.params.mask.total_active() << "/"
                << fs_.params.mask.size() << ", " << run["metrics"].dump() << "\n";
      runs.push_back(std::move(run));
    }
  }

  Json metrics{{"experiment", "fit"}, {"seed", cfg.seed}, {"task", cfg.model.task},
               {"level", cfg.eval.level}, {"runs", runs}, {"summary", summarize(runs)},
               {"warnings", warnings}};
  write_json(out_dir / "metrics.json", metrics);
  write_csv(out_dir / "trace.csv", trace_header(depth), trace_rows);
  if (regression) {
    write_csv(out_dir / "intervals.csv", {"run", "index", "y", "lo", "hi", "mean"}, interval_rows);
    if (cfg.eval.write_predictive)
      write_csv(out_dir / "predictive.csv", {"run", "index", "draw", "mean", "var"}, predictive_rows);
  } else {
    write_csv(out_dir / "intervals.csv", {"run", "index", "y", "pred", "confidence", "prob_true"},
              interval_rows);
  }
  for (const auto& w : warnings) std::clog << "warning: " << w << "\n";
  return {metrics, out_dir};
}

// ---- proposal ablation -----------------------------------------------------------------------

RunSummary run_ablation(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_json(out_dir / "resolved_config.json", config_to_json(cfg));
  std::vector<std::string> warnings;
  DatasetPair pair = prepare_data(cfg, 0, warnings);
  Model model = build_model(cfg, pair.train.dim(), pair.train.size());
  validate_dataset(pair.train, model.kind);
  Rng init_rng(derive_seed(cfg.seed, Streams::kInit));
  const Params init = initial_params(model, pair.train, init_rng);

  SamplerConfig sc = cfg.sampler;
  sc.total_iterations = cfg.ablation.iterations;
  sc.burn_in = cfg.ablation.iterations;
  sc.thinning = 1;
  sc.mask_moves = true;
  sc.seed = derive_seed(cfg.seed, Streams::kChain);

  Json runs = Json::array();
  std::vector<std::vector<double>> trace_rows;
  for (auto birth : cfg.ablation.birth_rules) {
    for (auto death : cfg.ablation.death_rules) {
      const auto t0 = std::chrono::steady_clock::now();
      const int run_id = static_cast<int>(runs.size());
      ProposalKind kind{birth, death, cfg.proposal.max_nodes};
      ChainOptions opts;
      opts.keep_draws = false;
      ChainResult chain = run_chain(init, model, pair.train, sc, kind, opts);
      const auto& st = chain.final_state;
      const std::size_t tail = std::max<std::size_t>(1, chain.trace.size() / 10);
      double tail_mean = 0.0;
      for (std::size_t i = chain.trace.size() - tail; i < chain.trace.size(); ++i)
        tail_mean += chain.trace[i].active_fraction;
      tail_mean /= static_cast<double>(tail);
      Json run{{"run", run_id},
               {"label", to_string(birth) + "/" + to_string(death)},
               {"birth", to_string(birth)},
               {"death", to_string(death)},
               {"initial_active_fraction", init.mask.active_fraction()},
               {"final_active_fraction", st.params.mask.active_fraction()},
               {"final_active", st.params.mask.counts()},
               {"final_active_total", st.params.mask.total_active()},
               {"tail_mean_active_fraction", tail_mean},
               {"mask_accept_rate", ratio(st.mask_accepts, st.mask_proposals)},
               {"weight_accept_rate", ratio(st.weight_accepts, st.weight_proposals)}};
      append_trace(trace_rows, run_id, chain.trace);
      std::clog << "[ablation] " << run["label"].get<std::string>() << ": " << seconds_since(t0)
                << " s, final active fraction " << st.params.mask.active_fraction() << "\n";
      runs.push_back(std::move(run));
    }
  }
  Json metrics{{"experiment", "ablation"}, {"seed", cfg.seed}, {"iterations", cfg.ablation.iterations},
               {"runs", runs}, {"warnings", warnings}};
  write_json(out_dir / "metrics.json", metrics);
  write_csv(out_dir / "trace.csv", trace_header(static_cast<int>(cfg.model.hidden.size())), trace_rows);
  write_csv(out_dir / "intervals.csv", {"run", "index", "y", "lo", "hi", "mean"}, {});
  return {metrics, out_dir};
}

// ---- structural time series --------------------------------------------------------------------

RunSummary run_bsts(const ExperimentConfig& cfg, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  write_json(out_dir / "resolved_config.json", config_to_json(cfg));
  TimeSeries ts = cfg.data.source == "csv"
                      ? load_time_series_csv(cfg.data.path, cfg.data.time_column, cfg.data.target)
                      : gen_bsts_series(cfg.data.length, cfg.data.dim, derive_seed(cfg.seed, Streams::kData));
  const auto T = static_cast<Eigen::Index>(cfg.data.train_length);
  const Eigen::Index total = ts.y.size();
  if (T >= total) throw ConfigError("data.train_length must leave at least one step to forecast");
  if (ts.x.cols() < 1) throw ConfigError("time series needs at least one regressor column");

  std::vector<std::string> warnings;
  const Standardization st = fit_standardization(ts.x.topRows(T), ts.y.head(T), &warnings);
  const Dataset train = standardize(st, ts.x.topRows(T), ts.y.head(T));
  const Dataset future = standardize(st, ts.x.bottomRows(total - T), ts.y.tail(total - T));
  const Vector y_future = ts.y.tail(total - T);

  Json runs = Json::array();
  std::vector<std::vector<double>> trace_rows, interval_rows;
  for (auto component : cfg.bsts.components) {
    const auto t0 = std::chrono::steady_clock::now();
    const int run_id = static_cast<int>(runs.size());
    BstsModel model;
    model.cfg = cfg.bsts.cfg;
    model.cfg.component = component;
    model.net = build_model(cfg, train.dim(), train.size());
    model.inner = cfg.sampler;
    model.inner.total_iterations = cfg.bsts.inner_iterations;
    model.proposal = cfg.proposal;
    Rng rng(derive_seed(cfg.seed, Streams::kChain + static_cast<std::uint64_t>(component)));
    BstsState state = bsts_initial_state(model, train.x, train.y, rng);
    std::vector<BstsState> draws;
    for (long s = 1; s <= cfg.bsts.sweeps; ++s) {
      bsts_gibbs_sweep(state, train.x, train.y, model, rng);
      const bool network = component != RegressionComponent::Linear;
      const double active = network ? state.net.mask.total_active() : 0.0;
      trace_rows.push_back({static_cast<double>(run_id), static_cast<double>(s), active,
                            network ? state.net.mask.active_fraction() : 0.0,
                            bsts_log_joint(state, train.x, train.y, model), state.obs_var});
      if (s > cfg.bsts.burn_in && (s - cfg.bsts.burn_in) % cfg.bsts.thinning == 0) draws.push_back(state);
    }
    std::vector<RegressionMixture> mixes = forecast(draws, future.x, model);
    for (auto& m : mixes) m = m.rescaled(st.y_scale, st.y_mean);
    std::vector<IntervalRow> rows;
    Json run{{"run", run_id}, {"label", to_string(component)}, {"retained_draws", draws.size()},
             {"train_length", T}, {"horizon", total - T}};
    run["metrics"] = regression_json(metrics_regression(mixes, y_future, cfg.eval.level, &rows));
    if (component != RegressionComponent::Linear) {
      run["final_active"] = state.net.mask.counts();
      run["final_active_total"] = state.net.mask.total_active();
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
      interval_rows.push_back({static_cast<double>(run_id), static_cast<double>(i),
                               ts.time[T + static_cast<Eigen::Index>(i)], rows[i].y, rows[i].lo,
                               rows[i].hi, rows[i].mean});
    std::clog << "[bsts] " << to_string(component) << ": " << seconds_since(t0) << " s, "
              << run["metrics"].dump() << "\n";
    runs.push_back(std::move(run));
  }
  Json metrics{{"experiment", "bsts"}, {"seed", cfg.seed}, {"level", cfg.eval.level},
               {"runs", runs}, {"summary", summarize(runs)}, {"warnings", warnings}};
  write_json(out_dir / "metrics.json", metrics);
  write_csv(out_dir / "trace.csv",
            {"run", "sweep", "active_total", "active_fraction", "log_joint", "obs_var"}, trace_rows);
  write_csv(out_dir / "intervals.csv", {"run", "index", "time", "y", "lo", "hi", "mean"}, interval_rows);
  return {metrics, out_dir};
}

RunSummary run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
  cfg.validate();
  if (cfg.experiment == "ablation") return run_ablation(cfg, out_dir);
  if (cfg.experiment == "bsts") return run_bsts(cfg, out_dir);
  return run_fit(cfg, out_dir);
}

void write_polynomial_data(std::size_t n_train, std::size_t n_test, std::uint64_t seed,
                           const fs::path& out_dir) {
  if (n_train < 1 || n_test < 1) throw ConfigError("dataset sizes must be >= 1");
  fs::create_directories(out_dir);
  auto dump = [&](const fs::path& p, std::size_t n, std::uint64_t s) {
    Matrix x;
    Vector y;
    gen_polynomial_raw(n, s, x, y);
    std::vector<std::vector<double>> rows;
    for (Eigen::Index i = 0; i < x.rows(); ++i) rows.push_back({x(i, 0), y[i]});
    write_csv(p, {"x", "y"}, rows);
  };
  // same streams as the in-process generator for repetition 0
  const std::uint64_t base = derive_seed(seed, Streams::kData);
  dump(out_dir / "train.csv", n_train, derive_seed(base, 0));
  dump(out_dir / "test.csv", n_test, derive_seed(base, 1));
}

// ---- metrics recomputation -----------------------------------------------------------------------

Json recompute_metrics(const fs::path& run_dir) {
  std::ifstream in(run_dir / "metrics.json");
  if (!in) throw ConfigError("no metrics.json in " + run_dir.string());
  Json original;
  try {
    original = Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("metrics.json is not valid JSON: " + std::string(e.what()));
  }
  const std::string experiment = original.value("experiment", "");
  if (experiment == "ablation") return original;

  const Table intervals = read_numeric_csv(run_dir / "intervals.csv");
  const bool classification = original.value("task", "regression") != "regression";
  const double level = original.value("level", 0.95);
  const int offset = experiment == "bsts" ? 1 : 0;  // bsts rows carry a time column

  std::map<int, std::vector<Eigen::Index>> by_run;
  for (Eigen::Index r = 0; r < intervals.values.rows(); ++r)
    by_run[static_cast<int>(intervals.values(r, 0))].push_back(r);

  std::map<int, std::vector<RegressionMixture>> predictive;
  if (!classification && fs::exists(run_dir / "predictive.csv")) {
    const Table p = read_numeric_csv(run_dir / "predictive.csv");
    for (Eigen::Index r = 0; r < p.values.rows(); ++r) {
      auto& mixes = predictive[static_cast<int>(p.values(r, 0))];
      const auto i = static_cast<std::size_t>(p.values(r, 1));
      if (mixes.size() <= i) mixes.resize(i + 1);
      mixes[i].means.push_back(p.values(r, 3));
      mixes[i].vars.push_back(p.values(r, 4));
    }
  }

  Json runs = Json::array();
  for (const auto& orig : original["runs"]) {
    const int id = orig["run"].get<int>();
    Json run = orig;
    const auto& rows = by_run[id];
    const auto& v = intervals.values;
    Json m = Json::object();
    if (classification) {
      double correct = 0.0, nll = 0.0;
      for (std::size_t k = 0; k < rows.size(); ++k) {
        const Eigen::Index r = rows[k];
        correct += v(r, 3) == v(r, 2);
        nll -= std::log(std::max(v(r, 5), 1e-300));
      }
      // ECE from (confidence, correctness) pairs with the same binning
      const int bins = 15;
      std::vector<double> conf_sum(bins), acc_sum(bins), count(bins);
      for (auto r : rows) {
        const double c = v(r, 4);
        const int b = std::min(bins - 1, static_cast<int>(c * bins));
        conf_sum[b] += c;
        acc_sum[b] += v(r, 3) == v(r, 2);
        count[b] += 1;
      }
      double ece = 0.0;
      for (int b = 0; b < bins; ++b)
        if (count[b] > 0) ece += std::abs(acc_sum[b] - conf_sum[b]) / static_cast<double>(rows.size());
      const double n = std::max<double>(1.0, static_cast<double>(rows.size()));
      m = Json{{"accuracy", correct / n}, {"nll", nll / n}, {"ece", ece}};
    } else {
      double covered = 0.0, sq = 0.0, width = 0.0;
      for (auto r : rows) {
        const double y = v(r, 2 + offset), lo = v(r, 3 + offset), hi = v(r, 4 + offset),
                     mean = v(r, 5 + offset);
        covered += y >= lo && y <= hi;
        sq += (y - mean) * (y - mean);
        width += hi - lo;
      }
      const double n = std::max<double>(1.0, static_cast<double>(rows.size()));
      m["coverage"] = covered / n;
      m["rmse"] = std::sqrt(sq / n);
      if (predictive.count(id)) {
        Vector y(static_cast<Eigen::Index>(rows.size()));
        for (std::size_t k = 0; k < rows.size(); ++k) y[static_cast<Eigen::Index>(k)] = v(rows[k], 2 + offset);
        const RegressionMetrics full = metrics_regression(predictive[id], y, level);
        m["nll"] = full.nll;
        m["crps"] = full.crps;
      } else if (orig.contains("metrics")) {
        m["nll"] = orig["metrics"]["nll"];
        m["crps"] = orig["metrics"]["crps"];
      }
      m["interval_width"] = width / n;
    }
    run["metrics"] = m;
    runs.push_back(std::move(run));
  }
  Json out = original;
  out["runs"] = runs;
  out["summary"] = summarize(runs);
  out["recomputed"] = true;
  return out;
}

}  // namespace mbnn
