#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "secsel/common.hpp"
#include "secsel/lattice.hpp"

namespace secsel {

enum class ActionKind { AcceptCurrent, AcceptContact, Decline };

struct RewardBreakdown {
  double r_o = 0.0;
  double r_sl = 0.0;
  double r_total = 0.0;
  ActionKind action_kind = ActionKind::Decline;
};

// Sigmoid deadline decay for one operation: near 1 during the safeguard
// interval, exactly 0.5 at half the deadline, 0 once the deadline is reached.
inline double decay_value(double t, double deadline_s) {
  if (t >= deadline_s) return 0.0;
  const double x = t - deadline_s / 2.0;
  if (x > 700.0) return 0.0;  // exp would overflow; value is 0 anyway
  return 1.0 / (1.0 + std::exp(x));
}

// Per-operation decay vector g(t, τ_u). Entries for operations that are not
// required (tau_u == 0) are pinned to 0; the Hadamard product with τ_u
// annihilates them regardless.
inline std::vector<double> decay(double t, std::span<const double> deadlines,
                                 std::span<const double> tau_u) {
  if (deadlines.size() != tau_u.size()) {
    throw structural_error("decay: deadlines and tau_u length mismatch");
  }
  std::vector<double> g(tau_u.size(), 0.0);
  for (std::size_t i = 0; i < tau_u.size(); ++i) {
    if (tau_u[i] > 0.0) g[i] = decay_value(t, deadlines[i]);
  }
  return g;
}

// R_O: importance-weighted, deadline-decayed coverage of the still-required
// operations, normalized by the remaining importance mass.
inline double reward_operations(std::span<const double> tau_u, std::span<const std::uint8_t> tau_sigma,
                                double t, std::span<const double> deadlines) {
  if (tau_u.size() != tau_sigma.size() || tau_u.size() != deadlines.size()) {
    throw structural_error("reward_operations: vector length mismatch");
  }
  double norm = 0.0;
  double score = 0.0;
  for (std::size_t i = 0; i < tau_u.size(); ++i) {
    norm += tau_u[i];
    if (tau_sigma[i] != 0 && tau_u[i] > 0.0) {
      score += tau_u[i] * decay_value(t, deadlines[i]);
    }
  }
  if (!(norm > 0.0)) {
    throw contract_error("reward_operations: no required operations remain");
  }
  return score / norm;
}

// R_SL: how much security the agent keeps by accepting this service.
inline double reward_security(const SecurityClass& service_class, const SecurityClass& required_class,
                              const WeightedSecurityLattice& lattice,
                              LossMode mode = LossMode::Shortfall) {
  return 1.0 - lattice.normalized_security_loss(service_class, required_class, mode);
}

// R_A = (R_O + R_SL) / 2 for either accept action.
inline RewardBreakdown reward_accept(std::span<const double> tau_u, std::span<const std::uint8_t> tau_sigma,
                                     double t, std::span<const double> deadlines,
                                     double normalized_loss,
                                     ActionKind kind = ActionKind::AcceptCurrent) {
  RewardBreakdown r;
  r.action_kind = kind;
  r.r_o = reward_operations(tau_u, tau_sigma, t, deadlines);
  r.r_sl = 1.0 - normalized_loss;
  r.r_total = (r.r_o + r.r_sl) / 2.0;
  return r;
}

// R_N: the least normalized loss among the services the agent could have
// taken this step; 0 when nothing was on offer.
inline double reward_decline(std::span<const double> available_losses) {
  if (available_losses.empty()) return 0.0;
  return *std::min_element(available_losses.begin(), available_losses.end());
}

struct ReplacementDecision {
  enum class Kind { AddToFreeSlot, Replace, Reject };
  Kind kind = Kind::Reject;
  std::size_t slot = 0;  // meaningful for Replace
};

// Contact-list admission for a declined current provider: free slots admit
// unconditionally; a full list replaces its weakest contact (lowest R_O,
// ties to the lowest slot) only if the candidate strictly beats it.
inline ReplacementDecision contact_replacement(double candidate_r_o,
                                               std::span<const double> contact_r_o,
                                               std::size_t capacity) {
  if (contact_r_o.size() < capacity) {
    return {ReplacementDecision::Kind::AddToFreeSlot, contact_r_o.size()};
  }
  if (capacity == 0) return {ReplacementDecision::Kind::Reject, 0};
  std::size_t weakest = 0;
  for (std::size_t i = 1; i < contact_r_o.size(); ++i) {
    if (contact_r_o[i] < contact_r_o[weakest]) weakest = i;
  }
  if (candidate_r_o > contact_r_o[weakest]) {
    return {ReplacementDecision::Kind::Replace, weakest};
  }
  return {ReplacementDecision::Kind::Reject, 0};
}

// Convenience overload computing the R_O values from operation vectors.
inline ReplacementDecision contact_replacement(std::span<const std::uint8_t> candidate_tau_sigma,
                                               const std::vector<std::vector<std::uint8_t>>& contact_tau_sigma,
                                               std::span<const double> tau_u,
                                               std::span<const double> deadlines, double t,
                                               std::size_t capacity) {
  const double cand = reward_operations(tau_u, candidate_tau_sigma, t, deadlines);
  std::vector<double> contacts;
  contacts.reserve(contact_tau_sigma.size());
  for (const auto& ts : contact_tau_sigma) {
    contacts.push_back(reward_operations(tau_u, ts, t, deadlines));
  }
  return contact_replacement(cand, contacts, capacity);
}

}  // namespace secsel
