#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mbnn/mbnn.h"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int exit_code(mbnn_status s) {
  switch (s) {
    case MBNN_OK: return 0;
    case MBNN_ERR_CONFIG:
    case MBNN_ERR_INVALID_ARGUMENT:
    case MBNN_ERR_IO: return kExitConfig;
    case MBNN_ERR_NUMERIC: return kExitNumeric;
    default: return 1;
  }
}

int report(mbnn_status s) {
  if (s != MBNN_OK) std::cerr << "error (" << mbnn_status_string(s) << "): " << mbnn_last_error() << "\n";
  return exit_code(s);
}

struct Options {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::vector<std::string> overrides;
  std::size_t n_train = 20;
  std::size_t n_test = 1000;
};

void add_common(CLI::App* cmd, Options& o) {
  cmd->add_option("--config", o.config, "experiment config (JSON)");
  cmd->add_option("--seed", o.seed, "base random seed")->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--override", o.overrides, "config override key=value (repeatable)");
}

int run(const char* kind, const Options& o) {
  std::string text;
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) {
      std::cerr << "error (configuration error): cannot open " << o.config << "\n";
      return kExitConfig;
    }
    std::stringstream ss;
    ss << in.rdbuf();
    text = ss.str();
  }
  mbnn_experiment* exp = nullptr;
  mbnn_status s = mbnn_experiment_create_as(text.c_str(), kind, &exp);
  if (s != MBNN_OK) return report(s);
  for (const auto& ov : o.overrides) {
    if ((s = mbnn_experiment_override(exp, ov.c_str())) != MBNN_OK) break;
  }
  if (s == MBNN_OK && o.seed_set) s = mbnn_experiment_set_seed(exp, o.seed);
  if (s == MBNN_OK) s = mbnn_experiment_run(exp, kind, o.out.c_str());
  if (s == MBNN_OK) std::cerr << "results written to " << o.out << "\n";
  mbnn_experiment_destroy(exp);
  return report(s);
}

int recompute(const Options& o) {
  std::size_t needed = 0;
  mbnn_status s = mbnn_recompute_metrics(o.out.c_str(), nullptr, 0, &needed);
  if (s != MBNN_ERR_BUFFER) return report(s);
  std::string buf(needed, '\0');
  s = mbnn_recompute_metrics(o.out.c_str(), buf.data(), buf.size(), &needed);
  if (s != MBNN_OK) return report(s);
  buf.pop_back();
  std::cout << buf << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Masked Bayesian neural network experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(mbnn_version()));

  Options gen, fit, ablation, bsts, metrics;
  auto* gen_cmd = app.add_subcommand("gen-poly", "write the cubic regression benchmark (train.csv, test.csv)");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--seed", gen.seed, "random seed");
  gen_cmd->add_option("--n-train", gen.n_train, "training points");
  gen_cmd->add_option("--n-test", gen.n_test, "test points");

  auto* fit_cmd = app.add_subcommand("fit", "fit and evaluate (repetitions, lambda sweeps, baseline)");
  add_common(fit_cmd, fit);
  auto* abl_cmd = app.add_subcommand("ablation", "run the birth/death proposal grid");
  add_common(abl_cmd, ablation);
  auto* bsts_cmd = app.add_subcommand("bsts", "structural time-series nowcasting");
  add_common(bsts_cmd, bsts);
  auto* met_cmd = app.add_subcommand("metrics", "recompute metrics from a results directory");
  met_cmd->add_option("--out", metrics.out, "results directory")->required()->check(CLI::ExistingDirectory);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  if (*gen_cmd) return report(mbnn_generate_polynomial(gen.n_train, gen.n_test, gen.seed, gen.out.c_str()));
  if (*fit_cmd) return run("fit", fit);
  if (*abl_cmd) return run("ablation", ablation);
  if (*bsts_cmd) return run("bsts", bsts);
  return recompute(metrics);
}
