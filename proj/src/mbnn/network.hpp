#pragma once

// Node-masked multilayer perceptron.
//
// Parameter layout (the flat weight vector): for each affine map
// l = 0..L, the weight matrix W_l of shape (p[l+1], p[l]) stored row-major,
// immediately followed by the bias vector b_l of length p[l+1].
//
// Hidden nodes are addressed either as (layer, j) with layer in [0, L) or by
// a global index that enumerates layer 0 first, then layer 1, and so on.
// Mask multipliers are a flat vector in the same global order; binary masks
// are the special case of 0/1 multipliers.

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace mbnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

class Architecture {
 public:
  Architecture() = default;
  // widths = {input, hidden_1, ..., hidden_L, output}; needs L >= 1.
  explicit Architecture(std::vector<int> widths);

  int depth() const { return static_cast<int>(widths_.size()) - 2; }
  int input_dim() const { return widths_.front(); }
  int output_dim() const { return widths_.back(); }
  int hidden_width(int layer) const { return widths_[layer + 1]; }
  const std::vector<int>& widths() const { return widths_; }

  std::size_t num_params() const { return num_params_; }
  std::size_t num_hidden() const { return num_hidden_; }

  // Offsets into the flat parameter vector for affine map l in [0, L].
  std::size_t weight_offset(int l) const { return weight_offsets_[l]; }
  std::size_t bias_offset(int l) const {
    return weight_offsets_[l] +
           static_cast<std::size_t>(widths_[l]) * widths_[l + 1];
  }
  // First global node index of hidden layer `layer`.
  std::size_t hidden_offset(int layer) const { return hidden_offsets_[layer]; }
  std::pair<int, int> locate(std::size_t global) const;

  bool operator==(const Architecture&) const = default;

 private:
  std::vector<int> widths_;
  std::vector<std::size_t> weight_offsets_;
  std::vector<std::size_t> hidden_offsets_;
  std::size_t num_params_ = 0;
  std::size_t num_hidden_ = 0;
};

class MaskState {
 public:
  MaskState() = default;
  explicit MaskState(const Architecture& arch, bool active = true);
  static MaskState from_layers(const std::vector<std::vector<std::uint8_t>>& layers);

  int num_layers() const { return static_cast<int>(offsets_.size()) - 1; }
  int width(int layer) const { return static_cast<int>(offsets_[layer + 1] - offsets_[layer]); }
  std::size_t size() const { return bits_.size(); }

  bool active(int layer, int j) const { return bits_[offsets_[layer] + j] != 0; }
  bool at(std::size_t global) const { return bits_[global] != 0; }
  void set(int layer, int j, bool value);
  void set_global(std::size_t global, bool value);
  void flip(std::size_t global) { set_global(global, !at(global)); }

  int layer_of(std::size_t global) const;
  std::size_t offset(int layer) const { return offsets_[layer]; }

  // Per-layer population counts, kept in sync with the bits.
  const std::vector<int>& counts() const { return counts_; }
  int total_active() const;
  double active_fraction() const;
  bool any_layer_empty() const;

  std::span<const std::uint8_t> bits() const { return bits_; }
  std::vector<std::uint8_t> layer_bits(int layer) const;
  Vector multipliers() const;

  bool operator==(const MaskState&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
  std::vector<std::size_t> offsets_;
  std::vector<int> counts_;
};

std::vector<int> count_active(const MaskState& mask);

struct ForwardCache {
  std::vector<Matrix> pre;     // pre-activation of every affine map, n x p[l+1]
  std::vector<Matrix> hidden;  // masked post-activation of every hidden layer
  Matrix output;               // raw (unclamped) network output, n x p[L+1]
};

// Batch forward over the rows of `inputs` with real-valued mask multipliers.
// Throws InvalidInput on shape mismatch and NumericError (carrying the layer
// index) when an intermediate is non-finite.
ForwardCache forward_cached(const Architecture& arch, const Vector& theta,
                            const Vector& mask_values, const Matrix& inputs);

Matrix forward_masked(const Architecture& arch, const Vector& theta,
                      const MaskState& mask, const Matrix& inputs);
Vector forward_masked(const Architecture& arch, const Vector& theta,
                      const MaskState& mask, const Vector& x);

Matrix clamp_outputs(const Matrix& raw, double bound);
Matrix forward_truncated(const Architecture& arch, const Vector& theta,
                         const MaskState& mask, const Matrix& inputs, double bound);
Vector forward_truncated(const Architecture& arch, const Vector& theta,
                         const MaskState& mask, const Vector& x, double bound);

struct Gradients {
  Vector theta;
  Vector mask;  // empty unless requested
};

// Reverse pass given d(objective)/d(raw output). The truncation subgradient is
// expected to be folded into `d_output` by the caller.
Gradients backward(const Architecture& arch, const Vector& theta,
                   const Vector& mask_values, const Matrix& inputs,
                   const ForwardCache& cache, const Matrix& d_output, bool want_mask);

// Dense forward of the network with masked nodes deleted; used as the
// sub-network reference.
Matrix forward_pruned(const Architecture& arch, const Vector& theta,
                      const MaskState& mask, const Matrix& inputs);

// The network obtained by deleting masked nodes, with index maps back into the
// full parameter vector and node numbering. Every parameter not listed in
// `param_index` is disconnected from the output under this mask.
struct SubNetwork {
  Architecture arch;
  std::vector<std::size_t> param_index;  // compact parameter -> full parameter
  std::vector<std::size_t> node_index;   // compact hidden node -> full global node
};
// Requires every hidden layer to keep at least one active node.
SubNetwork active_subnetwork(const Architecture& arch, const MaskState& mask);
Vector gather(const Vector& full, const std::vector<std::size_t>& index);
void scatter(const Vector& compact, const std::vector<std::size_t>& index, Vector& full);

// Sizing diagnostics. Natural logarithm throughout.
struct SizedArchitecture {
  int depth;
  int width;
};
SizedArchitecture theoretical_architecture(double n, double c_depth = 1.0,
                                           double c_width = 1.0);
int theoretical_sparsity(double n, double c_width, double smoothness, int input_dim);

// Fan-in scaled Gaussian initialisation (weights ~ N(0, 1/fan_in), zero bias).
template <class Rng>
Vector init_theta(const Architecture& arch, Rng& rng);

}  // namespace mbnn

#include <random>

namespace mbnn {

template <class Rng>
Vector init_theta(const Architecture& arch, Rng& rng) {
  Vector theta = Vector::Zero(static_cast<Eigen::Index>(arch.num_params()));
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l <= arch.depth(); ++l) {
    const int fan_in = arch.widths()[l];
    const std::size_t count = static_cast<std::size_t>(fan_in) * arch.widths()[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (std::size_t i = 0; i < count; ++i)
      theta[static_cast<Eigen::Index>(arch.weight_offset(l) + i)] = scale * normal(rng);
  }
  return theta;
}

}  // namespace mbnn
