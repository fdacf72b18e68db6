#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "secsel/agent.hpp"
#include "secsel/dqn.hpp"
#include "secsel/environment.hpp"
#include "secsel/metrics.hpp"
#include "secsel/scenario.hpp"

namespace secsel {

inline constexpr const char* kMetricsEpochHeader =
    "epoch,phase,episodes,cop_mean,cop_std,tlo_mean,tlo_std,unno_mean,unno_std,"
    "steps_mean,steps_std,success,security_violation,time_expired,path_exhausted,"
    "td_loss_mean,epsilon";
inline constexpr const char* kMetricsEpisodeHeader =
    "epoch,phase,episode,path,status,cop,tlo,unno,steps_frac,steps_used,accepts,reward_sum";
inline constexpr const char* kStepsHeader =
    "epoch,phase,episode,step,t,action,action_kind,r_o,r_sl,r_total,cumulative_loss,status";

// ---------------------------------------------------------------------------
// Run configuration

struct RunConfig {
  // scenario source
  std::string scenario_source = "generate-udr";  // generate-udr | generate-skr | archive
  json scenario_config;                          // generator config when generating
  std::string scenario_path;                     // archive path otherwise
  // requirements source (inline survey JSON or file path)
  json requirements_inline;
  std::string requirements_path;

  int contact_list_size = 3;  // K
  int epochs = 50;
  int episodes_per_epoch = 50;
  int validation_episodes = 20;
  int eval_episodes = 200;
  TrainConfig train;
  double delta_t_s = 0.0;  // > 0 overrides the scenario's step duration
  std::optional<double> loss_budget;  // overrides the survey's th_ξ
  LossMode loss_mode = LossMode::Shortfall;
  std::uint64_t seed = 1;
  std::string out_dir = "run";
  int checkpoint_every = 0;  // epochs; 0 = final checkpoint only
  bool log_steps = false;
  bool cop_importance_weighted = false;
  StepsMetric steps_metric = StepsMetric::StepsFraction;

  void validate() const {
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (episodes_per_epoch < 1) throw config_error("episodes_per_epoch must be >= 1");
    if (validation_episodes < 1) throw config_error("validation_episodes must be >= 1");
    if (eval_episodes < 1) throw config_error("eval_episodes must be >= 1");
    if (contact_list_size < 0) throw config_error("contact_list_size must be >= 0");
    if (checkpoint_every < 0) throw config_error("checkpoint_every must be >= 0");
    if (loss_budget && !(*loss_budget > 0.0)) throw config_error("loss_budget must be > 0");
    train.validate();
  }
};

inline RunConfig run_config_from_json(const json& j) {
  RunConfig cfg;
  if (j.contains("scenario")) {
    const auto& sj = j.at("scenario");
    cfg.scenario_source = sj.value("source", cfg.scenario_source);
    if (sj.contains("config")) cfg.scenario_config = sj.at("config");
    cfg.scenario_path = sj.value("path", "");
  }
  if (j.contains("requirements")) {
    const auto& rj = j.at("requirements");
    if (rj.contains("inline")) cfg.requirements_inline = rj.at("inline");
    cfg.requirements_path = rj.value("path", "");
  }
  cfg.contact_list_size = j.value("contact_list_size", cfg.contact_list_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.episodes_per_epoch = j.value("episodes_per_epoch", cfg.episodes_per_epoch);
  cfg.validation_episodes = j.value("validation_episodes", cfg.validation_episodes);
  cfg.eval_episodes = j.value("eval_episodes", cfg.eval_episodes);
  if (j.contains("train")) {
    const auto& tj = j.at("train");
    cfg.train.gamma = tj.value("gamma", cfg.train.gamma);
    cfg.train.learning_rate = tj.value("learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = tj.value("batch_size", cfg.train.batch_size);
    cfg.train.buffer_capacity = tj.value("buffer_capacity", cfg.train.buffer_capacity);
    cfg.train.epsilon_start = tj.value("epsilon_start", cfg.train.epsilon_start);
    cfg.train.epsilon_end = tj.value("epsilon_end", cfg.train.epsilon_end);
    cfg.train.epsilon_decay_steps = tj.value("epsilon_decay_steps", cfg.train.epsilon_decay_steps);
    cfg.train.target_sync_period = tj.value("target_sync_period", cfg.train.target_sync_period);
    cfg.train.train_period = tj.value("train_period", cfg.train.train_period);
    cfg.train.dropout = tj.value("dropout", cfg.train.dropout);
    cfg.train.batch_norm = tj.value("batch_norm", cfg.train.batch_norm);
  }
  cfg.delta_t_s = j.value("delta_t_s", cfg.delta_t_s);
  if (j.contains("loss_budget")) cfg.loss_budget = j.at("loss_budget").get<double>();
  cfg.loss_mode = loss_mode_from_string(j.value("loss_mode", "shortfall"));
  cfg.seed = j.value("seed", cfg.seed);
  cfg.out_dir = j.value("out", cfg.out_dir);
  cfg.checkpoint_every = j.value("checkpoint_every", cfg.checkpoint_every);
  cfg.log_steps = j.value("log_steps", cfg.log_steps);
  cfg.cop_importance_weighted = j.value("cop_importance_weighted", cfg.cop_importance_weighted);
  cfg.steps_metric = steps_metric_from_string(j.value("steps_metric", "steps-fraction"));
  cfg.validate();
  return cfg;
}

inline json run_config_to_json(const RunConfig& cfg) {
  json j;
  j["scenario"]["source"] = cfg.scenario_source;
  if (!cfg.scenario_config.is_null()) j["scenario"]["config"] = cfg.scenario_config;
  if (!cfg.scenario_path.empty()) j["scenario"]["path"] = cfg.scenario_path;
  if (!cfg.requirements_inline.is_null()) j["requirements"]["inline"] = cfg.requirements_inline;
  if (!cfg.requirements_path.empty()) j["requirements"]["path"] = cfg.requirements_path;
  j["contact_list_size"] = cfg.contact_list_size;
  j["epochs"] = cfg.epochs;
  j["episodes_per_epoch"] = cfg.episodes_per_epoch;
  j["validation_episodes"] = cfg.validation_episodes;
  j["eval_episodes"] = cfg.eval_episodes;
  j["train"] = {{"gamma", cfg.train.gamma},
                {"learning_rate", cfg.train.learning_rate},
                {"batch_size", cfg.train.batch_size},
                {"buffer_capacity", cfg.train.buffer_capacity},
                {"epsilon_start", cfg.train.epsilon_start},
                {"epsilon_end", cfg.train.epsilon_end},
                {"epsilon_decay_steps", cfg.train.epsilon_decay_steps},
                {"target_sync_period", cfg.train.target_sync_period},
                {"train_period", cfg.train.train_period},
                {"dropout", cfg.train.dropout},
                {"batch_norm", cfg.train.batch_norm}};
  if (cfg.delta_t_s > 0.0) j["delta_t_s"] = cfg.delta_t_s;
  if (cfg.loss_budget) j["loss_budget"] = *cfg.loss_budget;
  j["loss_mode"] = to_string(cfg.loss_mode);
  j["seed"] = cfg.seed;
  j["out"] = cfg.out_dir;
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["log_steps"] = cfg.log_steps;
  j["cop_importance_weighted"] = cfg.cop_importance_weighted;
  j["steps_metric"] = cfg.steps_metric == StepsMetric::StepsFraction ? "steps-fraction"
                      : cfg.steps_metric == StepsMetric::AmpsVisited ? "amps-visited"
                                                                     : "amps-accepted";
  return j;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open config file '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return run_config_from_json(detail::parse_json_strict(text, "run config"));
}

inline Scenario resolve_scenario(const RunConfig& cfg) {
  Scenario scenario = [&] {
    if (cfg.scenario_source == "archive") {
      if (cfg.scenario_path.empty()) throw config_error("scenario.source=archive needs scenario.path");
      return load_scenario(cfg.scenario_path);
    }
    if (cfg.scenario_config.is_null()) {
      throw config_error("scenario.source=" + cfg.scenario_source + " needs scenario.config");
    }
    const auto gen = generator_config_from_json(cfg.scenario_config);
    if (cfg.scenario_source == "generate-udr") return generate_scenario_udr(gen, cfg.seed);
    if (cfg.scenario_source == "generate-skr") return generate_scenario_skr(gen, cfg.seed);
    throw config_error("unknown scenario source '" + cfg.scenario_source + "'");
  }();
  if (cfg.delta_t_s > 0.0) scenario.delta_t_s = cfg.delta_t_s;
  return scenario;
}

inline UserRequirements resolve_requirements(const RunConfig& cfg) {
  if (!cfg.requirements_inline.is_null()) return survey_from_json(cfg.requirements_inline);
  if (cfg.requirements_path.empty()) {
    throw config_error("run config needs requirements.inline or requirements.path");
  }
  std::ifstream in(cfg.requirements_path);
  if (!in) throw parse_error("cannot open requirements file '" + cfg.requirements_path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return survey_from_json(detail::parse_json_strict(text, "survey document"));
}

inline EpisodeContext make_run_context(const RunConfig& cfg, const Scenario& scenario,
                                       const UserRequirements& requirements) {
  auto ctx = make_context(scenario, requirements, cfg.loss_mode);
  if (cfg.loss_budget) ctx.loss_budget = *cfg.loss_budget;
  return ctx;
}

// ---------------------------------------------------------------------------
// CSV output

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_double(*v) : std::string();
}

}  // namespace detail

class CsvWriter {
 public:
  CsvWriter(const std::string& path, const std::string& version_tag, const std::string& header)
      : out_(path) {
    if (!out_) throw parse_error("cannot write CSV file '" + path + "'");
    out_ << "# " << version_tag << "\n" << header << "\n";
  }

  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << fields[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

struct EpochStats {
  int episodes = 0;
  double cop_mean = 0.0, cop_std = 0.0;
  double tlo_mean = 0.0, tlo_std = 0.0;
  std::optional<double> unno_mean, unno_std;
  double steps_mean = 0.0, steps_std = 0.0;
  int success = 0, security_violation = 0, time_expired = 0, path_exhausted = 0;
};

inline EpochStats aggregate_records(const std::vector<EpisodeRecord>& records) {
  EpochStats s;
  s.episodes = static_cast<int>(records.size());
  auto mean_std = [](const std::vector<double>& xs, double& mean, double& sd) {
    mean = 0.0;
    sd = 0.0;
    if (xs.empty()) return;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    for (double x : xs) sd += (x - mean) * (x - mean);
    sd = std::sqrt(sd / static_cast<double>(xs.size()));
  };
  std::vector<double> cop, tlo, steps, unno;
  for (const auto& r : records) {
    cop.push_back(r.cop);
    tlo.push_back(r.tlo);
    steps.push_back(r.steps_frac);
    if (r.unno) unno.push_back(*r.unno);
    switch (r.status) {
      case EpisodeStatus::Success: ++s.success; break;
      case EpisodeStatus::SecurityViolation: ++s.security_violation; break;
      case EpisodeStatus::TimeExpired: ++s.time_expired; break;
      case EpisodeStatus::PathExhausted: ++s.path_exhausted; break;
      case EpisodeStatus::Running: break;
    }
  }
  mean_std(cop, s.cop_mean, s.cop_std);
  mean_std(tlo, s.tlo_mean, s.tlo_std);
  mean_std(steps, s.steps_mean, s.steps_std);
  if (!unno.empty()) {
    double m = 0.0, sd = 0.0;
    mean_std(unno, m, sd);
    s.unno_mean = m;
    s.unno_std = sd;
  }
  return s;
}

inline void write_epoch_row(CsvWriter& w, int epoch, const std::string& phase, const EpochStats& s,
                            double td_loss_mean, double epsilon) {
  w.row({std::to_string(epoch), phase, std::to_string(s.episodes),
         detail::fmt_double(s.cop_mean), detail::fmt_double(s.cop_std),
         detail::fmt_double(s.tlo_mean), detail::fmt_double(s.tlo_std),
         detail::fmt_opt(s.unno_mean), detail::fmt_opt(s.unno_std),
         detail::fmt_double(s.steps_mean), detail::fmt_double(s.steps_std),
         std::to_string(s.success), std::to_string(s.security_violation),
         std::to_string(s.time_expired), std::to_string(s.path_exhausted),
         detail::fmt_double(td_loss_mean), detail::fmt_double(epsilon)});
}

inline void write_episode_row(CsvWriter& w, int epoch, const std::string& phase, int episode,
                              const EpisodeRecord& r) {
  w.row({std::to_string(epoch), phase, std::to_string(episode), std::to_string(r.path_index),
         to_string(r.status), detail::fmt_double(r.cop), detail::fmt_double(r.tlo),
         detail::fmt_opt(r.unno), detail::fmt_double(r.steps_frac), std::to_string(r.steps_used),
         std::to_string(r.accepts), detail::fmt_double(r.reward_sum)});
}

// ---------------------------------------------------------------------------
// Episode execution

struct StepLogContext {
  CsvWriter* writer = nullptr;
  int epoch = 0;
  std::string phase;
  int episode = 0;
};

inline const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::AcceptCurrent: return "accept_current";
    case ActionKind::AcceptContact: return "accept_contact";
    case ActionKind::Decline: return "decline";
  }
  return "?";
}

// Run one full episode under `act`; used by validation sweeps, baselines,
// and checkpoint evaluation.
template <class ActFn>
EpisodeRecord run_episode(const EpisodeContext& ctx, int contact_capacity, TauMode mode,
                          Rng& reset_rng, ActFn&& act, const RunConfig& cfg,
                          StepLogContext* log = nullptr) {
  auto st = reset(ctx, contact_capacity, reset_rng, mode);
  while (!st.done()) {
    const auto obs = encode_observation(st, ctx);
    const auto mask = action_mask(st, *ctx.scenario);
    const AgentAction a = act(obs, std::span<const std::uint8_t>(mask));
    const int step_idx = st.step_index;
    const double t = st.t;
    const auto res = step(st, a, ctx);
    if (log != nullptr && log->writer != nullptr) {
      log->writer->row({std::to_string(log->epoch), log->phase, std::to_string(log->episode),
                        std::to_string(step_idx), detail::fmt_double(t), std::to_string(a.index),
                        to_string(res.reward.action_kind), detail::fmt_double(res.reward.r_o),
                        detail::fmt_double(res.reward.r_sl), detail::fmt_double(res.reward.r_total),
                        detail::fmt_double(st.cumulative_loss), to_string(st.status)});
    }
  }
  return make_episode_record(st, ctx, cfg.cop_importance_weighted, cfg.steps_metric);
}

// ---------------------------------------------------------------------------
// Training

struct RunArtifacts {
  std::string out_dir;
  std::string scenario_archive;
  std::string checkpoint_final;
  std::string metrics_epoch_csv;
  std::string metrics_episode_csv;
  EpochStats last_validation;
};

inline void write_run_meta(const RunConfig& cfg, const std::string& scenario_archive,
                           const std::string& mode) {
  json meta;
  meta["format"] = "secsel-run-meta-v1";
  meta["mode"] = mode;
  meta["config"] = run_config_to_json(cfg);
  meta["seed"] = cfg.seed;
  meta["scenario_archive"] = scenario_archive;
  meta["versions"] = {{"library", kLibraryVersion},
                      {"checkpoint_format", kCheckpointFormatVersion},
                      {"obs_layout", kObsLayoutVersion},
                      {"metrics_csv", 1}};
  std::ofstream out(cfg.out_dir + "/run.meta");
  if (!out) throw parse_error("cannot write run.meta in '" + cfg.out_dir + "'");
  out << meta.dump(2) << "\n";
}

// Full training run: per epoch, episodes_per_epoch ε-greedy learning
// episodes followed by a greedy validation sweep on the fixed requirement
// set. Writes epoch/episode CSVs, checkpoints, scenario archive, run.meta.
inline RunArtifacts run_training(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  std::filesystem::create_directories(cfg.out_dir + "/checkpoints");

  const Scenario scenario = resolve_scenario(cfg);
  const UserRequirements requirements = resolve_requirements(cfg);
  const EpisodeContext ctx = make_run_context(cfg, scenario, requirements);

  RunArtifacts art;
  art.out_dir = cfg.out_dir;
  art.scenario_archive = cfg.out_dir + "/scenario.json";
  save_scenario(scenario, art.scenario_archive);
  write_run_meta(cfg, art.scenario_archive, "train");

  const int K = cfg.contact_list_size;
  const auto m = ctx.op_count();
  const int obs_len = static_cast<int>(observation_length(m, K));
  const int n_actions = K + 2;

  Rng init_rng(derive_seed(cfg.seed, "net-init"));
  Rng train_rng(derive_seed(cfg.seed, "train"));
  QNetwork net = make_qnetwork(obs_len, n_actions, cfg.train.dropout, cfg.train.batch_norm,
                               kObsLayoutVersion, init_rng);
  QNetwork target = net;
  auto adam = make_adam(net);
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.train.buffer_capacity));

  CsvWriter epoch_csv(cfg.out_dir + "/metrics_epoch.csv", "secsel-metrics-epoch v1", kMetricsEpochHeader);
  CsvWriter episode_csv(cfg.out_dir + "/metrics_episode.csv", "secsel-metrics-episode v1",
                        kMetricsEpisodeHeader);
  std::optional<CsvWriter> steps_csv;
  if (cfg.log_steps) {
    steps_csv.emplace(cfg.out_dir + "/steps.csv", "secsel-steps v1", kStepsHeader);
  }

  std::int64_t env_steps = 0;
  std::int64_t train_steps = 0;
  double epsilon = cfg.train.epsilon_start;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    // --- training episodes (ε-greedy, learning) ---
    std::vector<EpisodeRecord> train_records;
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;
    for (int ep = 1; ep <= cfg.episodes_per_epoch; ++ep) {
      auto st = reset(ctx, K, train_rng, TauMode::RandomSubset);
      while (!st.done()) {
        const auto obs = encode_observation(st, ctx);
        const auto mask = action_mask(st, scenario);
        epsilon = epsilon_at(cfg.train, env_steps);
        const int a = select_action<float>(net, obs.values, mask, epsilon, train_rng);

        Transition tr;
        tr.obs = obs.values;
        tr.action = a;
        const auto res = step(st, AgentAction{a}, ctx);
        tr.reward = static_cast<float>(res.reward.r_total);
        tr.done = res.done;
        if (!res.done) {
          tr.next_obs = encode_observation(st, ctx).values;
          tr.next_mask = action_mask(st, scenario);
        }
        buffer.push(std::move(tr));
        ++env_steps;

        if (buffer.size() >= static_cast<std::size_t>(cfg.train.batch_size) &&
            env_steps % cfg.train.train_period == 0) {
          loss_sum += train_step<float>(net, target, buffer, cfg.train, adam, train_rng);
          ++loss_count;
          ++train_steps;
          if (train_steps % cfg.train.target_sync_period == 0) sync_target(net, target);
        }
      }
      const auto rec = make_episode_record(st, ctx, cfg.cop_importance_weighted, cfg.steps_metric);
      write_episode_row(episode_csv, epoch, "train", ep, rec);
      train_records.push_back(rec);
    }
    const double td_loss_mean = loss_count > 0 ? loss_sum / static_cast<double>(loss_count) : 0.0;
    write_epoch_row(epoch_csv, epoch, "train", aggregate_records(train_records), td_loss_mean, epsilon);

    // --- greedy validation sweep on the fixed requirement set ---
    Rng val_rng(derive_seed(cfg.seed, "validation", static_cast<std::uint64_t>(epoch)));
    std::vector<EpisodeRecord> val_records;
    for (int ep = 1; ep <= cfg.validation_episodes; ++ep) {
      StepLogContext log{steps_csv ? &*steps_csv : nullptr, epoch, "validation", ep};
      auto greedy = [&](const Observation& obs, std::span<const std::uint8_t> mask) {
        return AgentAction{select_action<float>(net, obs.values, mask, 0.0, val_rng)};
      };
      const auto rec = run_episode(ctx, K, TauMode::Fixed, val_rng, greedy, cfg,
                                   cfg.log_steps ? &log : nullptr);
      write_episode_row(episode_csv, epoch, "validation", ep, rec);
      val_records.push_back(rec);
    }
    art.last_validation = aggregate_records(val_records);
    write_epoch_row(epoch_csv, epoch, "validation", art.last_validation, td_loss_mean, 0.0);

    if (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
      save_checkpoint(net, cfg.out_dir + "/checkpoints/epoch_" + std::to_string(epoch) + ".qnet");
    }
  }

  art.checkpoint_final = cfg.out_dir + "/checkpoint_final.qnet";
  save_checkpoint(net, art.checkpoint_final);
  art.metrics_epoch_csv = cfg.out_dir + "/metrics_epoch.csv";
  art.metrics_episode_csv = cfg.out_dir + "/metrics_episode.csv";
  return art;
}

// ---------------------------------------------------------------------------
// Baselines and checkpoint evaluation

enum class BaselineKind { AlwaysAccept, RandomAction };

inline BaselineKind baseline_from_string(const std::string& s) {
  if (s == "always-accept") return BaselineKind::AlwaysAccept;
  if (s == "random") return BaselineKind::RandomAction;
  throw config_error("unknown baseline policy '" + s + "' (expected always-accept|random)");
}

// Identical episode protocol to the validation sweeps (fixed τ_u, matched
// seed chain), with a fixed policy and no learning.
inline std::vector<EpisodeRecord> run_baseline(const RunConfig& cfg, BaselineKind kind) {
  cfg.validate();
  std::filesystem::create_directories(cfg.out_dir);
  const Scenario scenario = resolve_scenario(cfg);
  const UserRequirements requirements = resolve_requirements(cfg);
  const EpisodeContext ctx = make_run_context(cfg, scenario, requirements);
  save_scenario(scenario, cfg.out_dir + "/scenario.json");
  write_run_meta(cfg, cfg.out_dir + "/scenario.json",
                 kind == BaselineKind::AlwaysAccept ? "baseline-always-accept" : "baseline-random");

  CsvWriter epoch_csv(cfg.out_dir + "/metrics_epoch.csv", "secsel-metrics-epoch v1", kMetricsEpochHeader);
  CsvWriter episode_csv(cfg.out_dir + "/metrics_episode.csv", "secsel-metrics-episode v1",
                        kMetricsEpisodeHeader);
  const char* phase = kind == BaselineKind::AlwaysAccept ? "baseline-always-accept" : "baseline-random";

  std::vector<EpisodeRecord> all;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    Rng val_rng(derive_seed(cfg.seed, "validation", static_cast<std::uint64_t>(epoch)));
    Rng policy_rng(derive_seed(cfg.seed, "baseline-policy", static_cast<std::uint64_t>(epoch)));
    std::vector<EpisodeRecord> records;
    for (int ep = 1; ep <= cfg.validation_episodes; ++ep) {
      auto act = [&](const Observation&, std::span<const std::uint8_t> mask) {
        return kind == BaselineKind::AlwaysAccept ? always_accept_action(mask)
                                                  : random_action(mask, policy_rng);
      };
      const auto rec = run_episode(ctx, cfg.contact_list_size, TauMode::Fixed, val_rng, act, cfg);
      write_episode_row(episode_csv, epoch, phase, ep, rec);
      records.push_back(rec);
      all.push_back(rec);
    }
    write_epoch_row(epoch_csv, epoch, phase, aggregate_records(records), 0.0, 0.0);
  }
  return all;
}

// Greedy evaluation of a trained checkpoint, matched to the validation
// seed chain (epoch tag 0).
inline std::vector<EpisodeRecord> evaluate_checkpoint(const RunConfig& cfg, const QNetwork& net,
                                                      const EpisodeContext& ctx, int episodes,
                                                      CsvWriter* episode_csv = nullptr,
                                                      CsvWriter* steps_csv = nullptr) {
  const int K = cfg.contact_list_size;
  if (net.input_dim() != static_cast<int>(observation_length(ctx.op_count(), K))) {
    throw config_error("checkpoint input dim does not match scenario/contact-list observation length");
  }
  if (net.output_dim() != K + 2) {
    throw config_error("checkpoint output dim does not match contact_list_size + 2");
  }
  Rng val_rng(derive_seed(cfg.seed, "validation", 0));
  std::vector<EpisodeRecord> records;
  for (int ep = 1; ep <= episodes; ++ep) {
    StepLogContext log{steps_csv, 0, "eval", ep};
    auto greedy = [&](const Observation& obs, std::span<const std::uint8_t> mask) {
      return AgentAction{select_action<float>(net, obs.values, mask, 0.0, val_rng)};
    };
    const auto rec = run_episode(ctx, K, TauMode::Fixed, val_rng, greedy, cfg,
                                 steps_csv != nullptr ? &log : nullptr);
    if (episode_csv != nullptr) write_episode_row(*episode_csv, 0, "eval", ep, rec);
    records.push_back(rec);
  }
  return records;
}

// ---------------------------------------------------------------------------
// Inference benchmark

struct BenchResult {
  double mean_ms = 0.0;
  double p50_ms = 0.0;
  double p99_ms = 0.0;
  int repetitions = 0;
};

// Wall-clock timing of single-observation eval-mode forward passes.
inline BenchResult bench_forward(const QNetwork& net, int repetitions, std::uint64_t seed = 7) {
  if (repetitions <= 0) throw config_error("bench: repetitions must be > 0");
  Rng rng(seed);
  const auto in = static_cast<std::size_t>(net.input_dim());
  std::vector<float> obs(in);
  for (auto& v : obs) v = static_cast<float>(rng.u01());

  volatile float sink = 0.0f;  // keep the forward pass observable
  const int warmup = std::max(100, repetitions / 10);
  for (int i = 0; i < warmup; ++i) {
    sink = sink + forward<float>(net, obs)[0];
  }
  std::vector<double> samples;
  samples.reserve(static_cast<std::size_t>(repetitions));
  for (int i = 0; i < repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    sink = sink + forward<float>(net, obs)[0];
    const auto t1 = std::chrono::steady_clock::now();
    samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  std::sort(samples.begin(), samples.end());
  BenchResult res;
  res.repetitions = repetitions;
  for (double s : samples) res.mean_ms += s;
  res.mean_ms /= static_cast<double>(samples.size());
  res.p50_ms = samples[samples.size() / 2];
  res.p99_ms = samples[std::min(samples.size() - 1, samples.size() * 99 / 100)];
  return res;
}

inline BenchResult bench_inference(const std::string& checkpoint_path, int repetitions) {
  const QNetwork net = load_checkpoint(checkpoint_path, kObsLayoutVersion);
  return bench_forward(net, repetitions);
}

}  // namespace secsel
