#include "mbnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "mbnn/errors.hpp"

namespace mbnn {

namespace {

using RowMajorMap =
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
using RowMajorMutMap =
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

RowMajorMap weight_map(const Architecture& arch, const Vector& theta, int l) {
  return RowMajorMap(theta.data() + arch.weight_offset(l), arch.widths()[l + 1],
                     arch.widths()[l]);
}

Eigen::Map<const Vector> bias_map(const Architecture& arch, const Vector& theta, int l) {
  return Eigen::Map<const Vector>(theta.data() + arch.bias_offset(l), arch.widths()[l + 1]);
}

void check_shapes(const Architecture& arch, const Vector& theta, const Vector& mask_values,
                  const Matrix& inputs) {
  if (static_cast<std::size_t>(theta.size()) != arch.num_params())
    throw InvalidInput("weight vector has length " + std::to_string(theta.size()) +
                       ", architecture needs " + std::to_string(arch.num_params()));
  if (static_cast<std::size_t>(mask_values.size()) != arch.num_hidden())
    throw InvalidInput("mask has " + std::to_string(mask_values.size()) +
                       " entries, architecture has " + std::to_string(arch.num_hidden()) +
                       " hidden nodes");
  if (inputs.cols() != arch.input_dim())
    throw InvalidInput("input has " + std::to_string(inputs.cols()) +
                       " columns, architecture expects " + std::to_string(arch.input_dim()));
}

}  // namespace

Architecture::Architecture(std::vector<int> widths) : widths_(std::move(widths)) {
  if (widths_.size() < 3)
    throw InvalidInput("architecture needs at least one hidden layer");
  for (int w : widths_)
    if (w < 1) throw InvalidInput("architecture widths must be >= 1");
  const int depth = static_cast<int>(widths_.size()) - 2;
  weight_offsets_.resize(depth + 1);
  std::size_t offset = 0;
  for (int l = 0; l <= depth; ++l) {
    weight_offsets_[l] = offset;
    offset += static_cast<std::size_t>(widths_[l] + 1) * widths_[l + 1];
  }
  num_params_ = offset;
  hidden_offsets_.resize(depth + 1);
  std::size_t hidden = 0;
  for (int k = 0; k < depth; ++k) {
    hidden_offsets_[k] = hidden;
    hidden += widths_[k + 1];
  }
  hidden_offsets_[depth] = hidden;
  num_hidden_ = hidden;
}

std::pair<int, int> Architecture::locate(std::size_t global) const {
  if (global >= num_hidden_) throw InvalidInput("hidden node index out of range");
  auto it = std::upper_bound(hidden_offsets_.begin(), hidden_offsets_.end(), global);
  const int layer = static_cast<int>(it - hidden_offsets_.begin()) - 1;
  return {layer, static_cast<int>(global - hidden_offsets_[layer])};
}

MaskState::MaskState(const Architecture& arch, bool active)
    : bits_(arch.num_hidden(), active ? 1 : 0) {
  offsets_.resize(arch.depth() + 1);
  counts_.resize(arch.depth());
  for (int k = 0; k <= arch.depth(); ++k) offsets_[k] = arch.hidden_offset(k);
  for (int k = 0; k < arch.depth(); ++k) counts_[k] = active ? arch.hidden_width(k) : 0;
}

MaskState MaskState::from_layers(const std::vector<std::vector<std::uint8_t>>& layers) {
  MaskState m;
  m.offsets_.push_back(0);
  for (const auto& layer : layers) {
    int count = 0;
    for (auto b : layer) {
      if (b > 1) throw InvalidInput("mask entries must be 0 or 1");
      m.bits_.push_back(b);
      count += b;
    }
    m.counts_.push_back(count);
    m.offsets_.push_back(m.bits_.size());
  }
  return m;
}

void MaskState::set(int layer, int j, bool value) { set_global(offsets_[layer] + j, value); }

void MaskState::set_global(std::size_t global, bool value) {
  const std::uint8_t v = value ? 1 : 0;
  if (bits_[global] == v) return;
  bits_[global] = v;
  counts_[layer_of(global)] += value ? 1 : -1;
}

int MaskState::layer_of(std::size_t global) const {
  auto it = std::upper_bound(offsets_.begin(), offsets_.end(), global);
  return static_cast<int>(it - offsets_.begin()) - 1;
}

int MaskState::total_active() const { return std::accumulate(counts_.begin(), counts_.end(), 0); }

double MaskState::active_fraction() const {
  return bits_.empty() ? 0.0 : static_cast<double>(total_active()) / bits_.size();
}

bool MaskState::any_layer_empty() const {
  return std::any_of(counts_.begin(), counts_.end(), [](int c) { return c == 0; });
}

std::vector<std::uint8_t> MaskState::layer_bits(int layer) const {
  return {bits_.begin() + offsets_[layer], bits_.begin() + offsets_[layer + 1]};
}

Vector MaskState::multipliers() const {
  Vector m(static_cast<Eigen::Index>(bits_.size()));
  for (std::size_t i = 0; i < bits_.size(); ++i) m[static_cast<Eigen::Index>(i)] = bits_[i];
  return m;
}

std::vector<int> count_active(const MaskState& mask) {
  std::vector<int> counts(mask.num_layers(), 0);
  for (int k = 0; k < mask.num_layers(); ++k)
    for (int j = 0; j < mask.width(k); ++j) counts[k] += mask.active(k, j) ? 1 : 0;
  return counts;
}

ForwardCache forward_cached(const Architecture& arch, const Vector& theta,
                            const Vector& mask_values, const Matrix& inputs) {
  check_shapes(arch, theta, mask_values, inputs);
  ForwardCache cache;
  const int depth = arch.depth();
  cache.pre.reserve(depth + 1);
  cache.hidden.reserve(depth);
  const Matrix* h = &inputs;
  for (int l = 0; l <= depth; ++l) {
    Matrix z = (*h) * weight_map(arch, theta, l).transpose();
    z.rowwise() += bias_map(arch, theta, l).transpose();
    if (!z.allFinite())
      throw NumericError("non-finite pre-activation in layer " + std::to_string(l), l);
    cache.pre.push_back(std::move(z));
    if (l == depth) break;
    auto m = mask_values.segment(static_cast<Eigen::Index>(arch.hidden_offset(l)),
                                 arch.hidden_width(l));
    Matrix a = cache.pre.back().cwiseMax(0.0);
    a.array().rowwise() *= m.transpose().array();
    cache.hidden.push_back(std::move(a));
    h = &cache.hidden.back();
  }
  cache.output = cache.pre.back();
  return cache;
}

Matrix forward_masked(const Architecture& arch, const Vector& theta, const MaskState& mask,
                      const Matrix& inputs) {
  return forward_cached(arch, theta, mask.multipliers(), inputs).output;
}

Vector forward_masked(const Architecture& arch, const Vector& theta, const MaskState& mask,
                      const Vector& x) {
  Matrix row = x.transpose();
  return forward_masked(arch, theta, mask, row).row(0).transpose();
}

Matrix clamp_outputs(const Matrix& raw, double bound) {
  if (!(bound > 0)) throw InvalidInput("truncation bound must be positive");
  return raw.cwiseMax(-bound).cwiseMin(bound);
}

Matrix forward_truncated(const Architecture& arch, const Vector& theta, const MaskState& mask,
                         const Matrix& inputs, double bound) {
  if (!(bound > 0)) throw InvalidInput("truncation bound must be positive");
  return clamp_outputs(forward_masked(arch, theta, mask, inputs), bound);
}

Vector forward_truncated(const Architecture& arch, const Vector& theta, const MaskState& mask,
                         const Vector& x, double bound) {
  if (!(bound > 0)) throw InvalidInput("truncation bound must be positive");
  return forward_masked(arch, theta, mask, x).cwiseMax(-bound).cwiseMin(bound);
}

Gradients backward(const Architecture& arch, const Vector& theta, const Vector& mask_values,
                   const Matrix& inputs, const ForwardCache& cache, const Matrix& d_output,
                   bool want_mask) {
  const int depth = arch.depth();
  Gradients g;
  g.theta = Vector::Zero(static_cast<Eigen::Index>(arch.num_params()));
  if (want_mask) g.mask = Vector::Zero(static_cast<Eigen::Index>(arch.num_hidden()));

  Matrix delta = d_output;  // d objective / d pre-activation of map l
  for (int l = depth; l >= 0; --l) {
    const Matrix& h_in = l == 0 ? inputs : cache.hidden[l - 1];
    RowMajorMutMap dw(g.theta.data() + arch.weight_offset(l), arch.widths()[l + 1],
                      arch.widths()[l]);
    dw.noalias() = delta.transpose() * h_in;
    g.theta.segment(static_cast<Eigen::Index>(arch.bias_offset(l)), arch.widths()[l + 1]) =
        delta.colwise().sum().transpose();
    if (l == 0) break;

    Matrix d_hidden = delta * weight_map(arch, theta, l);
    if (!d_hidden.allFinite())
      throw NumericError("non-finite gradient flowing into layer " + std::to_string(l - 1),
                         l - 1);
    const int k = l - 1;
    auto m = mask_values.segment(static_cast<Eigen::Index>(arch.hidden_offset(k)),
                                 arch.hidden_width(k));
    const Matrix& z = cache.pre[k];
    if (want_mask) {
      g.mask.segment(static_cast<Eigen::Index>(arch.hidden_offset(k)), arch.hidden_width(k)) =
          (d_hidden.array() * z.array().max(0.0)).colwise().sum().transpose();
    }
    d_hidden.array().rowwise() *= m.transpose().array();
    delta = (z.array() > 0.0).select(d_hidden, 0.0);
  }
  if (!g.theta.allFinite()) throw NumericError("non-finite weight gradient", 0);
  return g;
}

Matrix forward_pruned(const Architecture& arch, const Vector& theta, const MaskState& mask,
                      const Matrix& inputs) {
  if (inputs.cols() != arch.input_dim()) throw InvalidInput("input width mismatch");
  const int depth = arch.depth();
  Matrix h = inputs;
  std::vector<int> keep_in(arch.input_dim());
  std::iota(keep_in.begin(), keep_in.end(), 0);
  for (int l = 0; l <= depth; ++l) {
    std::vector<int> keep_out;
    if (l < depth) {
      for (int j = 0; j < arch.hidden_width(l); ++j)
        if (mask.active(l, j)) keep_out.push_back(j);
    } else {
      keep_out.resize(arch.output_dim());
      std::iota(keep_out.begin(), keep_out.end(), 0);
    }
    auto w = weight_map(arch, theta, l);
    auto b = bias_map(arch, theta, l);
    Matrix w_sub(keep_out.size(), keep_in.size());
    Vector b_sub(keep_out.size());
    for (std::size_t r = 0; r < keep_out.size(); ++r) {
      b_sub[static_cast<Eigen::Index>(r)] = b[keep_out[r]];
      for (std::size_t c = 0; c < keep_in.size(); ++c)
        w_sub(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = w(keep_out[r], keep_in[c]);
    }
    Matrix z = h * w_sub.transpose();
    z.rowwise() += b_sub.transpose();
    h = l < depth ? Matrix(z.cwiseMax(0.0)) : z;
    keep_in = std::move(keep_out);
  }
  // An empty hidden layer leaves a zero-column h; the next map then yields its bias only.
  return h;
}

SubNetwork active_subnetwork(const Architecture& arch, const MaskState& mask) {
  const int depth = arch.depth();
  if (mask.num_layers() != depth) throw InvalidInput("mask depth does not match architecture");
  std::vector<std::vector<int>> keep(depth + 2);
  keep[0].resize(arch.input_dim());
  std::iota(keep[0].begin(), keep[0].end(), 0);
  keep[depth + 1].resize(arch.output_dim());
  std::iota(keep[depth + 1].begin(), keep[depth + 1].end(), 0);
  SubNetwork sub;
  for (int k = 0; k < depth; ++k) {
    for (int j = 0; j < arch.hidden_width(k); ++j)
      if (mask.active(k, j)) {
        keep[k + 1].push_back(j);
        sub.node_index.push_back(arch.hidden_offset(k) + j);
      }
    if (keep[k + 1].empty()) throw InvalidInput("sub-network needs an active node in every layer");
  }
  std::vector<int> widths;
  for (const auto& kept : keep) widths.push_back(static_cast<int>(kept.size()));
  sub.arch = Architecture(widths);
  sub.param_index.reserve(sub.arch.num_params());
  for (int l = 0; l <= depth; ++l) {
    const std::size_t w0 = arch.weight_offset(l);
    const std::size_t cols = arch.widths()[l];
    for (int r : keep[l + 1])
      for (int c : keep[l]) sub.param_index.push_back(w0 + r * cols + c);
    for (int r : keep[l + 1]) sub.param_index.push_back(arch.bias_offset(l) + r);
  }
  return sub;
}

Vector gather(const Vector& full, const std::vector<std::size_t>& index) {
  Vector out(static_cast<Eigen::Index>(index.size()));
  for (std::size_t i = 0; i < index.size(); ++i)
    out[static_cast<Eigen::Index>(i)] = full[static_cast<Eigen::Index>(index[i])];
  return out;
}

void scatter(const Vector& compact, const std::vector<std::size_t>& index, Vector& full) {
  for (std::size_t i = 0; i < index.size(); ++i)
    full[static_cast<Eigen::Index>(index[i])] = compact[static_cast<Eigen::Index>(i)];
}

SizedArchitecture theoretical_architecture(double n, double c_depth, double c_width) {
  if (n < 2 || !(c_depth > 0) || !(c_width > 0))
    throw InvalidInput("sizing needs n >= 2 and positive constants");
  return {static_cast<int>(std::ceil(c_depth * std::log(n))),
          static_cast<int>(std::ceil(c_width * std::sqrt(n)))};
}

int theoretical_sparsity(double n, double c_width, double smoothness, int input_dim) {
  if (!(smoothness > 0) || input_dim < 1 || !(c_width > 0) || !(n > 1))
    throw InvalidInput("sparsity level needs n > 1, smoothness > 0, d >= 1, C_p > 0");
  const double d = input_dim;
  const double value =
      c_width * std::sqrt(std::pow(n, d / (2.0 * smoothness + d)) * std::log(n));
  return std::max(1, static_cast<int>(std::ceil(value)));
}

}  // namespace mbnn
