#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <vector>

#include "secsel/environment.hpp"
#include "secsel/rng.hpp"

namespace secsel {

// Bumped whenever the layout below changes; stamped into checkpoints so a
// network is never fed observations it was not trained on.
inline constexpr std::uint32_t kObsLayoutVersion = 1;

// Flat observation, all entries in [0, 1]:
//   [t_norm]
//   [tau_u importances]            (m)
//   [per-op decay values g(t, ·)]  (m)
//   current offer block            (1 + m + 1: present flag, τ_σ, ξ)
//   K contact blocks               (1 + m + 1 each)
//   [budget used]
struct Observation {
  std::vector<float> values;
};

inline std::size_t observation_length(std::size_t m, int contact_capacity) {
  return 2 + 2 * m + (static_cast<std::size_t>(contact_capacity) + 1) * (m + 2);
}

inline Observation encode_observation(const EpisodeState& st, const EpisodeContext& ctx) {
  if (st.done()) throw contract_error("encode_observation on a terminal episode");
  const auto& scenario = *ctx.scenario;
  const auto m = ctx.op_count();
  const auto& path = scenario.paths[static_cast<std::size_t>(st.path_index)];

  Observation obs;
  obs.values.reserve(observation_length(m, st.contact_capacity));
  auto push = [&obs](double v) {
    obs.values.push_back(static_cast<float>(std::clamp(v, 0.0, 1.0)));
  };

  const double horizon = static_cast<double>(path.length()) * scenario.delta_t_s;
  push(st.t / horizon);
  for (double w : st.tau_u) push(w);
  const auto g = decay(st.t, st.deadlines, st.tau_u);
  for (double v : g) push(v);

  auto push_block = [&](int provider) {
    if (provider < 0) {
      push(0.0);
      for (std::size_t i = 0; i < m + 1; ++i) push(0.0);
      return;
    }
    const int svc_idx = scenario.providers[static_cast<std::size_t>(provider)].service;
    const auto& svc = scenario.services[static_cast<std::size_t>(svc_idx)];
    push(1.0);
    for (std::uint8_t bit : svc.ops_onehot) push(static_cast<double>(bit));
    push(ctx.service_loss[static_cast<std::size_t>(svc_idx)]);
  };

  push_block(st.current_provider(scenario));
  for (int k = 0; k < st.contact_capacity; ++k) {
    push_block(k < static_cast<int>(st.contacts.size()) ? st.contacts[static_cast<std::size_t>(k)].provider : -1);
  }
  push(st.cumulative_loss / ctx.loss_budget);
  return obs;
}

// Valid-action vector of length K+2: accept-current needs an AMP offer,
// accept-contact needs an occupied slot, decline is always allowed.
inline std::vector<std::uint8_t> action_mask(const EpisodeState& st, const Scenario& scenario) {
  if (st.contact_capacity < 0) throw contract_error("negative contact capacity");
  const auto K = static_cast<std::size_t>(st.contact_capacity);
  std::vector<std::uint8_t> mask(K + 2, 0);
  mask[0] = st.current_provider(scenario) >= 0 ? 1 : 0;
  for (std::size_t k = 0; k < K; ++k) {
    mask[k + 1] = k < st.contacts.size() ? 1 : 0;
  }
  mask[K + 1] = 1;
  return mask;
}

struct Policy {
  virtual ~Policy() = default;
  virtual AgentAction act(const Observation& obs, std::span<const std::uint8_t> mask) = 0;
};

// Accept the current offer when possible, else the lowest occupied contact
// slot, else decline.
inline AgentAction always_accept_action(std::span<const std::uint8_t> mask) {
  if (mask.empty()) throw contract_error("empty action mask");
  for (std::size_t i = 0; i + 1 < mask.size(); ++i) {
    if (mask[i] != 0) return AgentAction{static_cast<int>(i)};
  }
  return AgentAction{static_cast<int>(mask.size()) - 1};
}

inline AgentAction random_action(std::span<const std::uint8_t> mask, Rng& rng) {
  std::vector<int> valid;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) valid.push_back(static_cast<int>(i));
  }
  if (valid.empty()) throw contract_error("action mask admits no action");
  return AgentAction{valid[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(valid.size()) - 1))]};
}

struct AlwaysAcceptPolicy final : Policy {
  AgentAction act(const Observation&, std::span<const std::uint8_t> mask) override {
    return always_accept_action(mask);
  }
};

struct RandomPolicy final : Policy {
  explicit RandomPolicy(std::uint64_t seed) : rng(seed) {}
  Rng rng;

  AgentAction act(const Observation&, std::span<const std::uint8_t> mask) override {
    return random_action(mask, rng);
  }
};

}  // namespace secsel
