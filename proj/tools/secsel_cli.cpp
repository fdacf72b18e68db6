// secsel — security-aware IoT service selection: scenario tooling, DQN
// training/evaluation, baselines, and inference benchmarking.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "secsel/agent.hpp"
#include "secsel/dqn.hpp"
#include "secsel/environment.hpp"
#include "secsel/harness.hpp"
#include "secsel/lattice.hpp"
#include "secsel/metrics.hpp"
#include "secsel/rewards.hpp"
#include "secsel/scenario.hpp"

namespace {

using namespace secsel;

json read_json_file(const std::string& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open " + what + " '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return detail::parse_json_strict(text, what);
}

RunConfig load_config_with_overrides(const std::string& config_path,
                                     const std::optional<std::uint64_t>& seed,
                                     const std::string& out) {
  if (config_path.empty()) throw config_error("--config <file> is required for this subcommand");
  RunConfig cfg = load_run_config(config_path);
  if (seed) cfg.seed = *seed;
  if (!out.empty()) cfg.out_dir = out;
  return cfg;
}

int cmd_scenario_generate(const std::string& config_path, const std::optional<std::uint64_t>& seed,
                          const std::string& out, bool skr) {
  if (config_path.empty()) throw config_error("--config <generator config> is required");
  const auto gen = generator_config_from_json(read_json_file(config_path, "generator config"));
  const std::uint64_t s = seed.value_or(1);
  const Scenario scenario = skr ? generate_scenario_skr(gen, s) : generate_scenario_udr(gen, s);
  const std::string path = out.empty() ? "scenario.json" : out;
  save_scenario(scenario, path);
  std::printf("wrote %s: %zu services, %zu providers, %zu paths (seed %llu)\n", path.c_str(),
              scenario.services.size(), scenario.providers.size(), scenario.paths.size(),
              static_cast<unsigned long long>(s));
  return 0;
}

int cmd_scenario_validate(const std::string& archive, const std::string& requirements_path) {
  const Scenario scenario = load_scenario(archive);  // validate_scenario runs on load
  std::printf("scenario '%s' (%s): OK\n", archive.c_str(), scenario.kind.c_str());
  std::printf("  operations: %zu, services: %zu, providers: %zu, paths: %zu\n",
              scenario.universe.size(), scenario.services.size(), scenario.providers.size(),
              scenario.paths.size());
  std::size_t amp_steps = 0;
  std::size_t total_steps = 0;
  for (const auto& p : scenario.paths) {
    total_steps += p.length();
    for (int a : p.amp) amp_steps += a >= 0 ? 1 : 0;
  }
  std::printf("  steps: %zu total, %zu with an AMP (%.1f%%)\n", total_steps, amp_steps,
              100.0 * static_cast<double>(amp_steps) / static_cast<double>(total_steps));
  if (!requirements_path.empty()) {
    const auto requirements = survey_from_json(read_json_file(requirements_path, "survey document"));
    const auto ctx = make_context(scenario, requirements);
    double mean_loss = 0.0;
    for (double l : ctx.service_loss) mean_loss += l;
    mean_loss /= static_cast<double>(ctx.service_loss.size());
    std::printf("  mean per-service normalized loss vs requirements: %.4f\n", mean_loss);
  }
  return 0;
}

int cmd_ingest_paths(const std::string& trips, const std::string& amps, double radius_m,
                     double delta_t_s, const std::string& out) {
  const auto res = ingest_paths(trips, amps, radius_m, delta_t_s);
  std::printf("read %zu trips: retained %zu, discarded %zu (no AMP within %.0f m); %zu AMP sites\n",
              res.trips_read, res.paths.size(), res.trips_discarded, radius_m, res.amps.size());
  if (!out.empty()) {
    json j;
    j["format"] = "secsel-paths-v1";
    j["radius_m"] = radius_m;
    j["delta_t_s"] = delta_t_s;
    json amps_j = json::array();
    for (const auto& a : res.amps) amps_j.push_back({{"id", a.id}, {"lat", a.lat}, {"lon", a.lon}});
    j["amps"] = std::move(amps_j);
    json paths_j = json::array();
    for (const auto& p : res.paths) paths_j.push_back({{"id", p.id}, {"steps", p.amp}});
    j["paths"] = std::move(paths_j);
    std::ofstream f(out);
    if (!f) throw parse_error("cannot write '" + out + "'");
    f << j.dump(2) << "\n";
    std::printf("wrote %s\n", out.c_str());
  }
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  const auto art = run_training(cfg);
  const auto& v = art.last_validation;
  std::printf("training done: %d epochs -> %s\n", cfg.epochs, art.out_dir.c_str());
  std::printf("final validation (%d episodes): COP %.3f, TLO %.3f, STEPS %.3f\n", v.episodes,
              v.cop_mean, v.tlo_mean, v.steps_mean);
  std::printf("checkpoint: %s\n", art.checkpoint_final.c_str());
  return 0;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, int episodes) {
  std::filesystem::create_directories(cfg.out_dir);
  const Scenario scenario = resolve_scenario(cfg);
  const UserRequirements requirements = resolve_requirements(cfg);
  const EpisodeContext ctx = make_run_context(cfg, scenario, requirements);
  const QNetwork net = load_checkpoint(checkpoint, kObsLayoutVersion);
  CsvWriter episode_csv(cfg.out_dir + "/metrics_episode.csv", "secsel-metrics-episode v1",
                        kMetricsEpisodeHeader);
  CsvWriter steps_csv(cfg.out_dir + "/steps.csv", "secsel-steps v1", kStepsHeader);
  const auto records = evaluate_checkpoint(cfg, net, ctx, episodes, &episode_csv, &steps_csv);
  const auto stats = aggregate_records(records);
  std::printf("eval (%d episodes): COP %.3f ± %.3f, TLO %.3f ± %.3f", stats.episodes,
              stats.cop_mean, stats.cop_std, stats.tlo_mean, stats.tlo_std);
  if (stats.unno_mean) std::printf(", UNNO %.3f", *stats.unno_mean);
  std::printf(", STEPS %.3f\n", stats.steps_mean);
  std::printf("terminals: success %d, security_violation %d, time_expired %d, path_exhausted %d\n",
              stats.success, stats.security_violation, stats.time_expired, stats.path_exhausted);
  return 0;
}

int cmd_baseline(const RunConfig& cfg, const std::string& policy) {
  const auto records = run_baseline(cfg, baseline_from_string(policy));
  const auto stats = aggregate_records(records);
  std::printf("baseline %s (%d episodes): COP %.3f, TLO %.3f\n", policy.c_str(), stats.episodes,
              stats.cop_mean, stats.tlo_mean);
  std::printf("terminals: success %d, security_violation %d, time_expired %d, path_exhausted %d\n",
              stats.success, stats.security_violation, stats.time_expired, stats.path_exhausted);
  return 0;
}

int cmd_bench(const std::string& checkpoint, int repetitions) {
  const auto res = bench_inference(checkpoint, repetitions);
  std::printf("forward pass over %d repetitions: mean %.4f ms, p50 %.4f ms, p99 %.4f ms\n",
              res.repetitions, res.mean_ms, res.p50_ms, res.p99_ms);
  return 0;
}

// Closed-form checks from the running example: the unit-weight CIA lattice,
// τ_u = [0.5, 0.8, 0, 0.7, 0, 0], τ_σ = [0, 0, 0, 1, 0, 1], 300 s deadlines.
int cmd_golden() {
  const auto lattice = make_cia_lattice();
  const std::vector<double> tau_u = {0.5, 0.8, 0.0, 0.7, 0.0, 0.0};
  const std::vector<std::uint8_t> tau_sigma = {0, 0, 0, 1, 0, 1};
  const std::vector<double> deadlines(6, 300.0);
  const auto service = lattice.class_of({"HC", "HI", "MA"});
  const auto required = lattice.class_of({"HC", "HI", "HA"});

  struct Check {
    const char* name;
    double got;
    double expect;
    double tol;
  };
  const double xi = lattice.normalized_security_loss(service, required);
  const Check checks[] = {
      {"rho_max", lattice.rho_max(), 9.0, 1e-12},
      {"R_O(t=0)", reward_operations(tau_u, tau_sigma, 0.0, deadlines), 0.35, 1e-3},
      {"R_O(t=150)", reward_operations(tau_u, tau_sigma, 150.0, deadlines), 0.175, 1e-3},
      {"R_SL", 1.0 - xi, 0.8889, 5e-3},
      {"R_A(t=0)",
       reward_accept(tau_u, tau_sigma, 0.0, deadlines, xi).r_total, 0.6194, 5e-3},
      {"g(0)", decay_value(0.0, 300.0), 1.0, 1e-10},
      {"g(150)", decay_value(150.0, 300.0), 0.5, 0.0},
      {"g(300)", decay_value(300.0, 300.0), 0.0, 0.0},
  };
  bool ok = true;
  for (const auto& c : checks) {
    const bool pass = std::abs(c.got - c.expect) <= c.tol;
    ok = ok && pass;
    std::printf("%-12s got %.10g  expected %.10g ± %g  [%s]\n", c.name, c.got, c.expect, c.tol,
                pass ? "PASS" : "FAIL");
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"security-aware IoT service selection suite"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  app.add_option("--config", config_path, "configuration file (JSON)");
  app.add_option("--seed", seed, "master seed override");
  app.add_option("--out", out, "output path or directory override");

  auto* scenario = app.add_subcommand("scenario", "generate or inspect scenario archives");
  scenario->require_subcommand(1);
  auto* gen_udr = scenario->add_subcommand("gen-udr", "uniformly distributed random scenario");
  auto* gen_skr = scenario->add_subcommand("gen-skr", "skewed (Zipf) scenario");
  auto* validate = scenario->add_subcommand("validate", "check a scenario archive");
  std::string archive;
  std::string requirements_path;
  validate->add_option("archive", archive, "scenario archive path")->required();
  validate->add_option("--requirements", requirements_path, "survey document for loss statistics");

  auto* ingest = app.add_subcommand("ingest-paths", "ingest trip/AMP CSV files into paths");
  std::string trips_file;
  std::string amps_file;
  double radius_m = 50.0;
  double delta_t_s = 30.0;
  ingest->add_option("--trips", trips_file, "trips CSV (trip_id,seq,lat,lon)")->required();
  ingest->add_option("--amps", amps_file, "AMP CSV (amp_id,lat,lon)")->required();
  ingest->add_option("--radius", radius_m, "AMP proximity radius in meters");
  ingest->add_option("--delta-t", delta_t_s, "step duration in seconds");

  auto* train = app.add_subcommand("train", "train the DQN agent");
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint greedily");
  std::string checkpoint;
  int eval_episodes = 0;
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", eval_episodes, "number of evaluation episodes");

  auto* baseline = app.add_subcommand("baseline", "run a fixed baseline policy");
  std::string policy;
  baseline->add_option("--policy", policy, "always-accept | random")->required();

  auto* bench = app.add_subcommand("bench", "benchmark single-observation inference");
  std::string bench_checkpoint;
  int repetitions = 10000;
  bench->add_option("--checkpoint", bench_checkpoint, "checkpoint file")->required();
  bench->add_option("--repetitions", repetitions, "number of timed forward passes");

  auto* golden = app.add_subcommand("golden", "run the worked-example value checks");
  (void)golden;

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen_udr->parsed()) return cmd_scenario_generate(config_path, seed, out, false);
    if (gen_skr->parsed()) return cmd_scenario_generate(config_path, seed, out, true);
    if (validate->parsed()) return cmd_scenario_validate(archive, requirements_path);
    if (ingest->parsed()) return cmd_ingest_paths(trips_file, amps_file, radius_m, delta_t_s, out);
    if (train->parsed()) return cmd_train(load_config_with_overrides(config_path, seed, out));
    if (eval->parsed()) {
      auto cfg = load_config_with_overrides(config_path, seed, out);
      return cmd_eval(cfg, checkpoint, eval_episodes > 0 ? eval_episodes : cfg.eval_episodes);
    }
    if (baseline->parsed()) {
      return cmd_baseline(load_config_with_overrides(config_path, seed, out), policy);
    }
    if (bench->parsed()) return cmd_bench(bench_checkpoint, repetitions);
    if (golden->parsed()) return cmd_golden();
  } catch (const secsel::error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "unexpected error: %s\n", e.what());
    return 3;
  }
  return 0;
}
