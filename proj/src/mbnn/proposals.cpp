#include "mbnn/proposals.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mbnn/errors.hpp"

namespace mbnn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

std::string to_string(SelectionRule rule) {
  switch (rule) {
    case SelectionRule::Uniform: return "uniform";
    case SelectionRule::GradMagnitude: return "grad_magnitude";
    case SelectionRule::LinearApprox: return "linear_approx";
  }
  return "?";
}

SelectionRule selection_rule_from_string(const std::string& name) {
  if (name == "uniform") return SelectionRule::Uniform;
  if (name == "grad_magnitude") return SelectionRule::GradMagnitude;
  if (name == "linear_approx") return SelectionRule::LinearApprox;
  throw InvalidInput("unknown selection rule '" + name + "'");
}

bool needs_gradient(SelectionRule rule) { return rule != SelectionRule::Uniform; }

std::optional<std::vector<double>> selection_probs(SelectionRule rule, int u,
                                                   const MaskState& mask,
                                                   const Vector& mask_gradient) {
  const std::size_t n = mask.size();
  if (needs_gradient(rule) && static_cast<std::size_t>(mask_gradient.size()) != n)
    throw InvalidInput("selection rule needs a mask gradient of matching length");

  std::vector<double> logw(n, kNegInf);
  double top = kNegInf;
  for (std::size_t j = 0; j < n; ++j) {
    if (static_cast<int>(mask.at(j)) != u) continue;
    double lw = 0.0;
    if (rule == SelectionRule::GradMagnitude)
      lw = -0.5 * std::abs(mask_gradient[static_cast<Eigen::Index>(j)]);
    else if (rule == SelectionRule::LinearApprox)
      lw = 0.5 * (1 - 2 * u) * mask_gradient[static_cast<Eigen::Index>(j)];
    logw[j] = lw;
    top = std::max(top, lw);
  }
  if (top == kNegInf) return std::nullopt;

  std::vector<double> probs(n, 0.0);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    if (logw[j] == kNegInf) continue;
    probs[j] = std::exp(logw[j] - top);
    total += probs[j];
  }
  for (double& p : probs) p /= total;
  return probs;
}

std::optional<OrderedDraw> sample_without_replacement(std::span<const double> weights, int count,
                                                      Rng& rng) {
  const auto positive = std::count_if(weights.begin(), weights.end(), [](double w) { return w > 0; });
  if (count < 1 || count > positive) return std::nullopt;

  std::vector<double> remaining(weights.begin(), weights.end());
  double total = 0.0;
  for (double w : remaining) total += std::max(w, 0.0);
  OrderedDraw draw;
  for (int k = 0; k < count; ++k) {
    const double target = uniform01(rng) * total;
    std::size_t pick = remaining.size();
    double cum = 0.0;
    std::size_t last_positive = remaining.size();
    for (std::size_t j = 0; j < remaining.size(); ++j) {
      if (!(remaining[j] > 0)) continue;
      last_positive = j;
      cum += remaining[j];
      if (target < cum) {
        pick = j;
        break;
      }
    }
    if (pick == remaining.size()) pick = last_positive;  // rounding at the top end
    draw.log_sequence_prob += std::log(remaining[pick] / total);
    draw.indices.push_back(pick);
    total -= remaining[pick];
    remaining[pick] = 0.0;
    if (k + 1 < count) {
      // Recompute to avoid cancellation drift.
      total = 0.0;
      for (double w : remaining) total += std::max(w, 0.0);
    }
  }
  return draw;
}

double log_set_probability(std::span<const double> weights, std::span<const std::size_t> set) {
  if (set.empty()) return 0.0;
  double total = 0.0;
  for (double w : weights) total += std::max(w, 0.0);
  for (std::size_t i : set) {
    if (i >= weights.size()) throw InvalidInput("set index out of range");
    if (!(weights[i] > 0)) return kNegInf;
  }
  std::vector<std::size_t> order(set.begin(), set.end());
  std::sort(order.begin(), order.end());
  if (std::adjacent_find(order.begin(), order.end()) != order.end())
    throw InvalidInput("set indices must be distinct");

  double prob = 0.0;
  do {
    double p = 1.0;
    double rest = total;
    for (std::size_t i : order) {
      p *= weights[i] / rest;
      rest -= weights[i];
    }
    prob += p;
  } while (std::next_permutation(order.begin(), order.end()));
  return std::log(prob);
}

namespace {

struct Ratio {
  double log_ratio = kNegInf;
  double log_reverse = kNegInf;
};

// Target at M with the gradient the direction-u rule needs (nodes with mask u).
MaskTarget target_for(const Model& model, const Params& w, const Dataset& data, SelectionRule rule,
                      int u, double lik_weight) {
  const bool g = needs_gradient(rule);
  return mask_target(model, w, data, g && u == 1, g && u == 0, lik_weight);
}

Ratio acceptance_from(const Model& model, const Params& w, const MaskTarget& current,
                      const std::vector<double>& q_forward, const Dataset& data,
                      const ProposalKind& kind, int u, std::span<const std::size_t> nodes,
                      double lik_weight, Params& proposed_out) {
  proposed_out = w;
  for (std::size_t j : nodes) proposed_out.mask.flip(j);
  if (proposed_out.mask.any_layer_empty()) return {};
  const SelectionRule reverse_rule = kind.rule_for(1 - u);
  const MaskTarget proposed =
      target_for(model, proposed_out, data, reverse_rule, 1 - u, lik_weight);
  if (proposed.value == kNegInf) return {};
  const auto q_reverse = selection_probs(reverse_rule, 1 - u, proposed_out.mask, proposed.grad_mask);
  Ratio r;
  r.log_reverse = log_set_probability(*q_reverse, nodes);
  r.log_ratio = proposed.value - current.value + r.log_reverse -
                log_set_probability(q_forward, nodes);
  return r;
}

}  // namespace

double log_acceptance_ratio(const Model& model, const Params& w, const Dataset& data,
                            const ProposalKind& kind, int u, std::span<const std::size_t> nodes,
                            double lik_weight) {
  for (std::size_t j : nodes)
    if (static_cast<int>(w.mask.at(j)) != u) throw InvalidInput("node does not have mask value u");
  const SelectionRule rule = kind.rule_for(u);
  const MaskTarget current = target_for(model, w, data, rule, u, lik_weight);
  if (current.value == kNegInf) throw InvalidInput("mask move started outside prior support");
  const auto q = selection_probs(rule, u, w.mask, current.grad_mask);
  if (!q) return kNegInf;
  Params proposed;
  return acceptance_from(model, w, current, *q, data, kind, u, nodes, lik_weight, proposed)
      .log_ratio;
}

MaskMoveResult mask_mh_step(const Model& model, Params& w, const Dataset& data,
                            const ProposalKind& kind, Rng& rng, double lik_weight) {
  if (kind.max_nodes < 1) throw InvalidInput("max_nodes must be >= 1");
  MaskMoveResult result;
  const int u = std::bernoulli_distribution(0.5)(rng) ? 1 : 0;
  const int count = std::uniform_int_distribution<int>(1, kind.max_nodes)(rng);
  result.proposal.direction = u;
  result.proposal.count = count;

  const SelectionRule rule = kind.rule_for(u);
  const MaskTarget current = target_for(model, w, data, rule, u, lik_weight);
  if (current.value == kNegInf) throw InvalidInput("mask move started outside prior support");

  const auto q = selection_probs(rule, u, w.mask, current.grad_mask);
  if (!q) return result;
  auto draw = sample_without_replacement(*q, count, rng);
  if (!draw) return result;
  result.eligible = true;
  result.proposal.nodes = draw->indices;
  result.proposal.log_q_forward = log_set_probability(*q, draw->indices);

  Params proposed;
  const Ratio r = acceptance_from(model, w, current, *q, data, kind, u, draw->indices, lik_weight,
                                  proposed);
  result.log_accept_ratio = r.log_ratio;
  result.proposal.log_q_reverse = r.log_reverse;
  if (r.log_ratio >= 0.0 || std::log(uniform01(rng)) < r.log_ratio) {
    w.mask = std::move(proposed.mask);
    result.accepted = true;
  }
  return result;
}

}  // namespace mbnn
