#include "mbnn/mbnn.h"

#include <cstring>
#include <exception>
#include <filesystem>
#include <optional>
#include <string>

#include "mbnn/errors.hpp"
#include "mbnn/harness.hpp"
#include "mbnn/network.hpp"

struct mbnn_network {
  mbnn::Architecture arch;
  mbnn::Vector theta;
  mbnn::MaskState mask;
};

struct mbnn_experiment {
  mbnn::Json doc = mbnn::Json::object();
  std::optional<mbnn::Json> metrics;
};

namespace {

thread_local std::string g_last_error;

mbnn_status fail(mbnn_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <class Fn>
mbnn_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    return fn();
  } catch (const mbnn::ConfigError& e) {
    return fail(MBNN_ERR_CONFIG, e.what());
  } catch (const mbnn::NumericError& e) {
    return fail(MBNN_ERR_NUMERIC, e.what());
  } catch (const mbnn::IngestError& e) {
    return fail(MBNN_ERR_IO, e.what());
  } catch (const mbnn::InvalidInput& e) {
    return fail(MBNN_ERR_INVALID_ARGUMENT, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(MBNN_ERR_IO, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(MBNN_ERR_CONFIG, e.what());
  } catch (const std::exception& e) {
    return fail(MBNN_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MBNN_ERR_INTERNAL, "unknown error");
  }
}

mbnn_status copy_out(const std::string& text, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = text.size() + 1;
  if (!buf || cap < text.size() + 1) return fail(MBNN_ERR_BUFFER, "buffer too small");
  std::memcpy(buf, text.c_str(), text.size() + 1);
  return MBNN_OK;
}

mbnn_status null_arg(const char* what) {
  return fail(MBNN_ERR_INVALID_ARGUMENT, std::string(what) + " must not be NULL");
}

}  // namespace

extern "C" {

const char* mbnn_version(void) { return "0.1.0"; }

const char* mbnn_last_error(void) { return g_last_error.c_str(); }

const char* mbnn_status_string(mbnn_status status) {
  switch (status) {
    case MBNN_OK: return "ok";
    case MBNN_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MBNN_ERR_CONFIG: return "configuration error";
    case MBNN_ERR_NUMERIC: return "numeric failure";
    case MBNN_ERR_IO: return "input/output error";
    case MBNN_ERR_BUFFER: return "buffer too small";
    case MBNN_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

mbnn_status mbnn_network_create(const int* widths, size_t count, mbnn_network** out) {
  if (!widths || !out) return null_arg("widths and out");
  return guarded([&] {
    auto net = std::make_unique<mbnn_network>();
    net->arch = mbnn::Architecture(std::vector<int>(widths, widths + count));
    net->theta = mbnn::Vector::Zero(static_cast<Eigen::Index>(net->arch.num_params()));
    net->mask = mbnn::MaskState(net->arch, true);
    *out = net.release();
    return MBNN_OK;
  });
}

void mbnn_network_destroy(mbnn_network* net) { delete net; }

size_t mbnn_network_num_params(const mbnn_network* net) { return net ? net->arch.num_params() : 0; }

size_t mbnn_network_num_hidden(const mbnn_network* net) { return net ? net->arch.num_hidden() : 0; }

mbnn_status mbnn_network_set_params(mbnn_network* net, const double* theta, size_t count) {
  if (!net || !theta) return null_arg("net and theta");
  if (count != net->arch.num_params()) return fail(MBNN_ERR_INVALID_ARGUMENT, "parameter count mismatch");
  net->theta = Eigen::Map<const mbnn::Vector>(theta, static_cast<Eigen::Index>(count));
  return MBNN_OK;
}

mbnn_status mbnn_network_get_params(const mbnn_network* net, double* theta, size_t count) {
  if (!net || !theta) return null_arg("net and theta");
  if (count != net->arch.num_params()) return fail(MBNN_ERR_INVALID_ARGUMENT, "parameter count mismatch");
  std::memcpy(theta, net->theta.data(), count * sizeof(double));
  return MBNN_OK;
}

mbnn_status mbnn_network_set_mask(mbnn_network* net, const uint8_t* bits, size_t count) {
  if (!net || !bits) return null_arg("net and bits");
  if (count != net->arch.num_hidden()) return fail(MBNN_ERR_INVALID_ARGUMENT, "mask length mismatch");
  for (size_t i = 0; i < count; ++i) {
    if (bits[i] > 1) return fail(MBNN_ERR_INVALID_ARGUMENT, "mask entries must be 0 or 1");
  }
  for (size_t i = 0; i < count; ++i) net->mask.set_global(i, bits[i] != 0);
  return MBNN_OK;
}

mbnn_status mbnn_network_active_counts(const mbnn_network* net, int* counts, size_t layers) {
  if (!net || !counts) return null_arg("net and counts");
  if (layers != static_cast<size_t>(net->arch.depth()))
    return fail(MBNN_ERR_INVALID_ARGUMENT, "layer count mismatch");
  const auto c = mbnn::count_active(net->mask);
  std::copy(c.begin(), c.end(), counts);
  return MBNN_OK;
}

mbnn_status mbnn_network_forward(const mbnn_network* net, const double* x, size_t rows, size_t cols,
                                 double truncation, double* out, size_t out_count) {
  if (!net || !x || !out) return null_arg("net, x and out");
  if (out_count != rows * static_cast<size_t>(net->arch.output_dim()))
    return fail(MBNN_ERR_INVALID_ARGUMENT, "output buffer size mismatch");
  return guarded([&] {
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const mbnn::Matrix inputs = Eigen::Map<const RowMajor>(x, static_cast<Eigen::Index>(rows),
                                                           static_cast<Eigen::Index>(cols));
    mbnn::Matrix y = truncation > 0
                         ? mbnn::forward_truncated(net->arch, net->theta, net->mask, inputs, truncation)
                         : mbnn::forward_masked(net->arch, net->theta, net->mask, inputs);
    Eigen::Map<RowMajor>(out, y.rows(), y.cols()) = y;
    return MBNN_OK;
  });
}

mbnn_status mbnn_experiment_create_as(const char* config_json, const char* kind,
                                      mbnn_experiment** out) {
  if (!out) return null_arg("out");
  return guarded([&] {
    auto exp = std::make_unique<mbnn_experiment>();
    if (config_json && *config_json) {
      try {
        exp->doc = mbnn::Json::parse(config_json);
      } catch (const nlohmann::json::parse_error& e) {
        throw mbnn::ConfigError(std::string("config is not valid JSON: ") + e.what());
      }
      if (!exp->doc.is_object()) throw mbnn::ConfigError("config must be a JSON object");
    }
    if (kind) exp->doc["experiment"] = kind;
    mbnn::config_from_json(exp->doc);
    *out = exp.release();
    return MBNN_OK;
  });
}

mbnn_status mbnn_experiment_create(const char* config_json, mbnn_experiment** out) {
  return mbnn_experiment_create_as(config_json, nullptr, out);
}

void mbnn_experiment_destroy(mbnn_experiment* exp) { delete exp; }

mbnn_status mbnn_experiment_override(mbnn_experiment* exp, const char* assignment) {
  if (!exp || !assignment) return null_arg("exp and assignment");
  return guarded([&] {
    mbnn::apply_override(exp->doc, assignment);
    return MBNN_OK;
  });
}

mbnn_status mbnn_experiment_validate(const mbnn_experiment* exp) {
  if (!exp) return null_arg("exp");
  return guarded([&] {
    mbnn::config_from_json(exp->doc);
    return MBNN_OK;
  });
}

mbnn_status mbnn_experiment_set_seed(mbnn_experiment* exp, uint64_t seed) {
  if (!exp) return null_arg("exp");
  exp->doc["seed"] = seed;
  return MBNN_OK;
}

mbnn_status mbnn_experiment_run(mbnn_experiment* exp, const char* kind, const char* out_dir) {
  if (!exp || !out_dir) return null_arg("exp and out_dir");
  return guarded([&] {
    mbnn::Json doc = exp->doc;
    if (kind) doc["experiment"] = kind;
    const mbnn::ExperimentConfig cfg = mbnn::config_from_json(doc);
    exp->metrics = mbnn::run_experiment(cfg, out_dir).metrics;
    return MBNN_OK;
  });
}

mbnn_status mbnn_experiment_resolved_config(const mbnn_experiment* exp, char* buf, size_t cap,
                                            size_t* needed) {
  if (!exp) return null_arg("exp");
  return guarded([&] {
    return copy_out(mbnn::config_to_json(mbnn::config_from_json(exp->doc)).dump(2), buf, cap, needed);
  });
}

mbnn_status mbnn_experiment_metrics(const mbnn_experiment* exp, char* buf, size_t cap, size_t* needed) {
  if (!exp) return null_arg("exp");
  if (!exp->metrics) return fail(MBNN_ERR_INVALID_ARGUMENT, "no experiment has been run");
  return copy_out(exp->metrics->dump(2), buf, cap, needed);
}

mbnn_status mbnn_generate_polynomial(size_t n_train, size_t n_test, uint64_t seed, const char* out_dir) {
  if (!out_dir) return null_arg("out_dir");
  return guarded([&] {
    mbnn::write_polynomial_data(n_train, n_test, seed, out_dir);
    return MBNN_OK;
  });
}

mbnn_status mbnn_recompute_metrics(const char* run_dir, char* buf, size_t cap, size_t* needed) {
  if (!run_dir) return null_arg("run_dir");
  return guarded([&] { return copy_out(mbnn::recompute_metrics(run_dir).dump(2), buf, cap, needed); });
}

}  // extern "C"
