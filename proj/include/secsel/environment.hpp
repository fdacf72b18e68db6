#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "secsel/rewards.hpp"
#include "secsel/rng.hpp"
#include "secsel/scenario.hpp"
#include "secsel/sla.hpp"

namespace secsel {

enum class EpisodeStatus { Running, Success, SecurityViolation, TimeExpired, PathExhausted };

inline const char* to_string(EpisodeStatus s) {
  switch (s) {
    case EpisodeStatus::Running: return "running";
    case EpisodeStatus::Success: return "success";
    case EpisodeStatus::SecurityViolation: return "security_violation";
    case EpisodeStatus::TimeExpired: return "time_expired";
    case EpisodeStatus::PathExhausted: return "path_exhausted";
  }
  return "?";
}

// Scenario + requirements bound together for episode execution. Holds the
// user-scaled lattices, the per-type required classes, and a precomputed
// normalized loss per service. Immutable; share freely across episodes.
struct EpisodeContext {
  const Scenario* scenario = nullptr;
  LossMode loss_mode = LossMode::Shortfall;
  double loss_budget = 1.0;                     // th_ξ
  std::vector<double> service_loss;             // ξ(λ(σ), λ(u^Φ(σ))) per service
  std::vector<double> required_importance;      // merged τ_u importances, length m
  std::vector<double> required_deadline_s;      // merged deadlines, length m (inf when not required)
  std::map<std::string, SecurityClass> required_class;  // per service type

  std::size_t op_count() const { return scenario->universe.size(); }
};

// Validates scenario/requirements consistency and resolves everything an
// episode needs: required classes per type (via the label rules), scaled
// lattices, per-service losses, and the merged required-operation vector.
inline EpisodeContext make_context(const Scenario& scenario, const UserRequirements& requirements,
                                   LossMode loss_mode = LossMode::Shortfall) {
  EpisodeContext ctx;
  ctx.scenario = &scenario;
  ctx.loss_mode = loss_mode;
  ctx.loss_budget = requirements.loss_budget();

  const auto m = scenario.universe.size();
  ctx.required_importance.assign(m, 0.0);
  ctx.required_deadline_s.assign(m, std::numeric_limits<double>::infinity());

  std::set<std::string> scenario_types;
  for (const auto& svc : scenario.services) scenario_types.insert(svc.sla.service_type);
  for (const auto& phi : scenario_types) {
    if (requirements.types.count(phi) == 0) {
      throw config_error("requirements do not cover scenario service type '" + phi + "'");
    }
  }

  std::map<std::string, WeightedSecurityLattice> scaled;
  for (const auto& [phi, tr] : requirements.types) {
    for (const auto& [prop, iota] : tr.property_importance) {
      scenario.lattice.property_index(prop);  // existence check
    }
    scaled.emplace(phi, scenario.lattice.scaled(tr.property_importance));
    ctx.required_class.emplace(phi, derive_user_class(requirements, phi, scenario.rules, scenario.lattice));
    for (const auto& [op, orq] : tr.tau_u) {
      const int idx = scenario.universe.index_of(op);
      if (idx < 0) {
        throw config_error("requirements reference unknown operation '" + op + "'");
      }
      auto i = static_cast<std::size_t>(idx);
      ctx.required_importance[i] = std::max(ctx.required_importance[i], orq.importance);
      ctx.required_deadline_s[i] = std::min(ctx.required_deadline_s[i], orq.deadline_s);
    }
  }
  if (std::all_of(ctx.required_importance.begin(), ctx.required_importance.end(),
                  [](double w) { return w == 0.0; })) {
    throw config_error("requirements declare no required operations");
  }

  ctx.service_loss.reserve(scenario.services.size());
  for (const auto& svc : scenario.services) {
    const auto& phi = svc.sla.service_type;
    const auto& lattice = scaled.at(phi);
    ctx.service_loss.push_back(
        lattice.normalized_security_loss(svc.service_class, ctx.required_class.at(phi), loss_mode));
  }
  return ctx;
}

// Contact list entry: a previously met provider kept for deferred
// acceptance, with its normalized loss precomputed at insertion.
struct ContactEntry {
  int provider = -1;
  double loss = 0.0;
};

struct AcceptRecord {
  int step = 0;
  double t = 0.0;
  int provider = -1;
  double loss = 0.0;
  int needed_ops = 0;  // included ops still required at acceptance
  int total_ops = 0;   // all included ops
  double r_o = 0.0;
  double r_sl = 0.0;
};

// Single-owner mutable episode state; advance with step().
struct EpisodeState {
  int path_index = 0;
  int step_index = 0;
  double t = 0.0;
  std::vector<double> tau_u;          // current required importances (0 = done / not required)
  std::vector<double> initial_tau_u;
  std::vector<double> deadlines;      // seconds; +inf for never-required ops
  double cumulative_loss = 0.0;
  std::vector<ContactEntry> contacts;
  int contact_capacity = 0;
  EpisodeStatus status = EpisodeStatus::Running;
  std::vector<AcceptRecord> accepts;  // audit trail for the metrics
  double reward_sum = 0.0;

  bool done() const { return status != EpisodeStatus::Running; }

  // Provider met at the current step, or -1 when the step has no AMP.
  int current_provider(const Scenario& scenario) const {
    const auto& path = scenario.paths[static_cast<std::size_t>(path_index)];
    if (step_index >= static_cast<int>(path.length())) return -1;
    return path.amp[static_cast<std::size_t>(step_index)];
  }
};

// Discrete action: 0 = accept current offer, 1..K = accept contact slot-1,
// K+1 = decline.
struct AgentAction {
  int index = 0;

  static AgentAction accept_current() { return {0}; }
  static AgentAction accept_contact(int slot) { return {slot + 1}; }
  static AgentAction decline(int capacity) { return {capacity + 1}; }

  ActionKind kind(int capacity) const {
    if (index == 0) return ActionKind::AcceptCurrent;
    if (index == capacity + 1) return ActionKind::Decline;
    return ActionKind::AcceptContact;
  }
  int contact_slot() const { return index - 1; }
};

enum class TauMode {
  Fixed,         // τ_u = every declared required operation (evaluation)
  RandomSubset,  // τ_u = random non-empty subset of the declared operations (training)
};

// Fresh episode on a uniformly drawn path. Training mode re-draws the
// required-operation subset each episode.
inline EpisodeState reset(const EpisodeContext& ctx, int contact_capacity, Rng& rng,
                          TauMode mode = TauMode::Fixed) {
  const auto& scenario = *ctx.scenario;
  if (contact_capacity < 0) throw config_error("contact capacity must be >= 0");
  EpisodeState st;
  st.path_index = static_cast<int>(rng.uniform_int(0, static_cast<std::int64_t>(scenario.paths.size()) - 1));
  st.contact_capacity = contact_capacity;
  st.tau_u = ctx.required_importance;
  st.deadlines = ctx.required_deadline_s;
  if (mode == TauMode::RandomSubset) {
    std::vector<std::size_t> declared;
    for (std::size_t i = 0; i < st.tau_u.size(); ++i) {
      if (st.tau_u[i] > 0.0) declared.push_back(i);
    }
    while (true) {
      auto drawn = st.tau_u;
      bool any = false;
      for (std::size_t i : declared) {
        if (!rng.bernoulli(0.5)) {
          drawn[i] = 0.0;
        } else {
          any = true;
        }
      }
      if (any) {
        st.tau_u = std::move(drawn);
        break;
      }
    }
  }
  st.initial_tau_u = st.tau_u;
  return st;
}

struct StepResult {
  RewardBreakdown reward;
  bool done = false;
  EpisodeStatus status = EpisodeStatus::Running;
};

namespace detail {

inline std::vector<double> available_losses(const EpisodeState& st, const EpisodeContext& ctx) {
  std::vector<double> losses;
  const int cur = st.current_provider(*ctx.scenario);
  if (cur >= 0) {
    losses.push_back(ctx.service_loss[static_cast<std::size_t>(ctx.scenario->providers[static_cast<std::size_t>(cur)].service)]);
  }
  for (const auto& c : st.contacts) losses.push_back(c.loss);
  return losses;
}

inline void apply_accept(EpisodeState& st, const EpisodeContext& ctx, int provider,
                         ActionKind kind, RewardBreakdown& reward) {
  const int svc_idx = ctx.scenario->providers[static_cast<std::size_t>(provider)].service;
  const auto& svc = ctx.scenario->services[static_cast<std::size_t>(svc_idx)];
  const double loss = ctx.service_loss[static_cast<std::size_t>(svc_idx)];
  reward = reward_accept(st.tau_u, svc.ops_onehot, st.t, st.deadlines, loss, kind);

  AcceptRecord rec;
  rec.step = st.step_index;
  rec.t = st.t;
  rec.provider = provider;
  rec.loss = loss;
  rec.r_o = reward.r_o;
  rec.r_sl = reward.r_sl;
  for (std::size_t i = 0; i < svc.ops_onehot.size(); ++i) {
    if (svc.ops_onehot[i] == 0) continue;
    ++rec.total_ops;
    if (st.tau_u[i] > 0.0) {
      ++rec.needed_ops;
      st.tau_u[i] = 0.0;  // operation completed
    }
  }
  st.accepts.push_back(rec);
  st.cumulative_loss += loss;
}

}  // namespace detail

// One environment transition. Applies the action, computes its reward,
// manages the contact list (inserts only on declines), advances the clock,
// and resolves the terminal state in priority order
// Success > SecurityViolation > TimeExpired > PathExhausted.
inline StepResult step(EpisodeState& st, AgentAction action, const EpisodeContext& ctx) {
  if (st.done()) throw contract_error("step() on a terminal episode");
  const auto& scenario = *ctx.scenario;
  const auto& path = scenario.paths[static_cast<std::size_t>(st.path_index)];
  const int K = st.contact_capacity;
  if (action.index < 0 || action.index > K + 1) throw contract_error("action index out of range");

  StepResult out;
  const int cur = st.current_provider(scenario);
  switch (action.kind(K)) {
    case ActionKind::AcceptCurrent: {
      if (cur < 0) throw contract_error("accept-current on a step without an AMP offer");
      detail::apply_accept(st, ctx, cur, ActionKind::AcceptCurrent, out.reward);
      break;
    }
    case ActionKind::AcceptContact: {
      const int slot = action.contact_slot();
      if (slot >= static_cast<int>(st.contacts.size())) {
        throw contract_error("accept-contact on an empty slot");
      }
      const int provider = st.contacts[static_cast<std::size_t>(slot)].provider;
      detail::apply_accept(st, ctx, provider, ActionKind::AcceptContact, out.reward);
      st.contacts.erase(st.contacts.begin() + slot);  // service consumed
      break;
    }
    case ActionKind::Decline: {
      out.reward.action_kind = ActionKind::Decline;
      out.reward.r_total = reward_decline(detail::available_losses(st, ctx));
      if (cur >= 0) {
        bool already_held = false;
        for (const auto& c : st.contacts) already_held = already_held || c.provider == cur;
        if (!already_held && K > 0) {
          const int svc_idx = scenario.providers[static_cast<std::size_t>(cur)].service;
          const auto& cand = scenario.services[static_cast<std::size_t>(svc_idx)];
          std::vector<double> contact_r_o;
          contact_r_o.reserve(st.contacts.size());
          for (const auto& c : st.contacts) {
            const int s = scenario.providers[static_cast<std::size_t>(c.provider)].service;
            contact_r_o.push_back(reward_operations(
                st.tau_u, scenario.services[static_cast<std::size_t>(s)].ops_onehot, st.t, st.deadlines));
          }
          const double cand_r_o = reward_operations(st.tau_u, cand.ops_onehot, st.t, st.deadlines);
          const auto decision = contact_replacement(cand_r_o, contact_r_o, static_cast<std::size_t>(K));
          const ContactEntry entry{cur, ctx.service_loss[static_cast<std::size_t>(svc_idx)]};
          if (decision.kind == ReplacementDecision::Kind::AddToFreeSlot) {
            st.contacts.push_back(entry);
          } else if (decision.kind == ReplacementDecision::Kind::Replace) {
            st.contacts[decision.slot] = entry;
          }
        }
      }
      break;
    }
  }
  st.reward_sum += out.reward.r_total;

  ++st.step_index;
  st.t = st.step_index * scenario.delta_t_s;

  const bool all_done = std::all_of(st.tau_u.begin(), st.tau_u.end(), [](double w) { return w == 0.0; });
  bool expired = false;
  for (std::size_t i = 0; i < st.tau_u.size(); ++i) {
    // an operation is dead once the clock reaches its deadline (g is 0 there)
    if (st.tau_u[i] > 0.0 && st.t >= st.deadlines[i]) expired = true;
  }
  if (all_done) {
    st.status = EpisodeStatus::Success;
  } else if (st.cumulative_loss > ctx.loss_budget) {
    st.status = EpisodeStatus::SecurityViolation;
  } else if (expired) {
    st.status = EpisodeStatus::TimeExpired;
  } else if (st.step_index >= static_cast<int>(path.length())) {
    st.status = EpisodeStatus::PathExhausted;
  }

  out.done = st.done();
  out.status = st.status;
  return out;
}

}  // namespace secsel
