#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "secsel/environment.hpp"

namespace secsel {

// COP: fraction of the initially required operations that got completed.
// Count-based by default; the importance-weighted variant is an ablation.
inline double compute_cop(std::span<const double> initial_tau_u, std::span<const double> final_tau_u,
                          bool importance_weighted = false) {
  if (initial_tau_u.size() != final_tau_u.size()) {
    throw structural_error("compute_cop: vector length mismatch");
  }
  double required = 0.0;
  double completed = 0.0;
  for (std::size_t i = 0; i < initial_tau_u.size(); ++i) {
    if (initial_tau_u[i] <= 0.0) continue;
    const double unit = importance_weighted ? initial_tau_u[i] : 1.0;
    required += unit;
    if (final_tau_u[i] == 0.0) completed += unit;
  }
  if (!(required > 0.0)) throw contract_error("compute_cop: no required operations");
  return completed / required;
}

// TLO: total normalized security loss over the accepted services.
inline double compute_tlo(std::span<const double> accepted_losses) {
  double total = 0.0;
  for (double l : accepted_losses) total += l;
  return total;
}

// UNNO: fraction of included-but-not-required operations across all
// accepts, "required" judged at acceptance time. Undefined with no accepts.
inline std::optional<double> compute_unno(std::span<const AcceptRecord> accepts) {
  if (accepts.empty()) return std::nullopt;
  double total = 0.0;
  double unneeded = 0.0;
  for (const auto& a : accepts) {
    total += a.total_ops;
    unneeded += a.total_ops - a.needed_ops;
  }
  if (total == 0.0) return std::nullopt;
  return unneeded / total;
}

enum class StepsMetric { StepsFraction, AmpsVisited, AmpsAccepted };

inline StepsMetric steps_metric_from_string(const std::string& s) {
  if (s == "steps-fraction") return StepsMetric::StepsFraction;
  if (s == "amps-visited") return StepsMetric::AmpsVisited;
  if (s == "amps-accepted") return StepsMetric::AmpsAccepted;
  throw config_error("unknown steps metric '" + s + "'");
}

inline double compute_steps_metric(const EpisodeState& st, const Scenario& scenario,
                                   StepsMetric kind = StepsMetric::StepsFraction) {
  const auto& path = scenario.paths[static_cast<std::size_t>(st.path_index)];
  if (kind == StepsMetric::StepsFraction) {
    return static_cast<double>(st.step_index) / static_cast<double>(path.length());
  }
  int total_amps = 0;
  int visited_amps = 0;
  for (std::size_t i = 0; i < path.length(); ++i) {
    if (path.amp[i] < 0) continue;
    ++total_amps;
    if (static_cast<int>(i) < st.step_index) ++visited_amps;
  }
  if (total_amps == 0) return 0.0;  // cannot happen for valid scenarios
  if (kind == StepsMetric::AmpsVisited) {
    return static_cast<double>(visited_amps) / static_cast<double>(total_amps);
  }
  return static_cast<double>(st.accepts.size()) / static_cast<double>(total_amps);
}

struct EpisodeRecord {
  EpisodeStatus status = EpisodeStatus::Running;
  double cop = 0.0;
  double tlo = 0.0;
  std::optional<double> unno;
  double steps_frac = 0.0;
  int steps_used = 0;
  int path_index = 0;
  int accepts = 0;
  double reward_sum = 0.0;
};

inline EpisodeRecord make_episode_record(const EpisodeState& st, const EpisodeContext& ctx,
                                         bool cop_importance_weighted = false,
                                         StepsMetric steps_kind = StepsMetric::StepsFraction) {
  EpisodeRecord rec;
  rec.status = st.status;
  rec.cop = compute_cop(st.initial_tau_u, st.tau_u, cop_importance_weighted);
  std::vector<double> losses;
  losses.reserve(st.accepts.size());
  for (const auto& a : st.accepts) losses.push_back(a.loss);
  rec.tlo = compute_tlo(losses);
  rec.unno = compute_unno(st.accepts);
  rec.steps_frac = compute_steps_metric(st, *ctx.scenario, steps_kind);
  rec.steps_used = st.step_index;
  rec.path_index = st.path_index;
  rec.accepts = static_cast<int>(st.accepts.size());
  rec.reward_sum = st.reward_sum;
  return rec;
}

}  // namespace secsel
