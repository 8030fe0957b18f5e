#pragma once

// Birth/death Metropolis-Hastings kernel over node masks.
//
// A move picks a direction u (0 = birth, 1 = death) and a count N, draws N
// nodes whose mask equals u by successive weighted sampling without
// replacement, flips them, and accepts with the posterior ratio times the
// ratio of reverse to forward set probabilities. The reverse selection
// vector is recomputed at the proposed mask.

#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mbnn/likelihood.hpp"
#include "mbnn/rng.hpp"

namespace mbnn {

enum class SelectionRule {
  Uniform,        // equal weight on every eligible node
  GradMagnitude,  // exp(-|dl/dm_j| / 2)
  LinearApprox,   // exp((1 - 2u) dl/dm_j / 2)
};

std::string to_string(SelectionRule rule);
SelectionRule selection_rule_from_string(const std::string& name);
bool needs_gradient(SelectionRule rule);

struct ProposalKind {
  SelectionRule birth = SelectionRule::Uniform;
  SelectionRule death = SelectionRule::GradMagnitude;
  int max_nodes = 3;

  SelectionRule rule_for(int u) const { return u == 0 ? birth : death; }
};

struct MoveProposal {
  int direction = 0;  // 0 birth, 1 death
  int count = 0;
  std::vector<std::size_t> nodes;  // global hidden-node indices, draw order
  double log_q_forward = 0.0;      // log Multi(N, Q_u)(set) at M
  double log_q_reverse = 0.0;      // log Multi(N, Q*_{1-u})(set) at M*
};

// Normalized selection vector over all hidden nodes, supported exactly on the
// nodes whose mask equals u. std::nullopt when no node is eligible.
// `mask_gradient` may be empty for the uniform rule.
std::optional<std::vector<double>> selection_probs(SelectionRule rule, int u,
                                                   const MaskState& mask,
                                                   const Vector& mask_gradient);

struct OrderedDraw {
  std::vector<std::size_t> indices;  // draw order
  double log_sequence_prob = 0.0;
};

// Successive draws without replacement, each proportional to the remaining
// weights. std::nullopt when fewer than `count` weights are positive.
std::optional<OrderedDraw> sample_without_replacement(std::span<const double> weights, int count,
                                                      Rng& rng);

// Exact probability that successive weighted draws produce `set` in any
// order: the sum over all |set|! orderings of the conditional products.
double log_set_probability(std::span<const double> weights, std::span<const std::size_t> set);

struct MaskMoveResult {
  bool accepted = false;
  bool eligible = false;  // false: self-transition because no move was possible
  double log_accept_ratio = -std::numeric_limits<double>::infinity();
  MoveProposal proposal;
};

// One step of the mask kernel with theta and sigma2 held fixed. On accept,
// `w.mask` is replaced by the proposal. `lik_weight` rescales the likelihood
// when `data` is a minibatch.
MaskMoveResult mask_mh_step(const Model& model, Params& w, const Dataset& data,
                            const ProposalKind& kind, Rng& rng, double lik_weight = 1.0);

// Log acceptance ratio of a specific proposal (flip `nodes` in direction u).
// Exposed for kernel-level checks; -inf when M* leaves prior support.
double log_acceptance_ratio(const Model& model, const Params& w, const Dataset& data,
                            const ProposalKind& kind, int u,
                            std::span<const std::size_t> nodes, double lik_weight = 1.0);

}  // namespace mbnn
