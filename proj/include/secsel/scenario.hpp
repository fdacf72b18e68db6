#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "secsel/csv.hpp"
#include "secsel/lattice.hpp"
#include "secsel/rng.hpp"
#include "secsel/sla.hpp"

namespace secsel {

// ---------------------------------------------------------------------------
// Core scenario types

// The m operation types obtainable in the environment, each with the
// minimum security class any service carrying it must dominate.
struct OperationUniverse {
  std::vector<std::string> names;
  std::vector<SecurityClass> min_classes;

  std::size_t size() const { return names.size(); }

  int index_of(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return static_cast<int>(i);
    }
    return -1;
  }
};

struct ServiceDescriptor {
  SecSLA sla;
  SecurityClass service_class;            // λ(σ)
  std::vector<std::uint8_t> ops_onehot;   // τ_σ, length m
};

// One provider per active meeting point; grants exactly one service.
struct Provider {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
  int service = -1;  // index into Scenario::services
};

struct Path {
  std::string id;
  std::vector<int> amp;  // per step: provider index, or -1 when no AMP nearby

  std::size_t length() const { return amp.size(); }
  bool has_amp() const {
    return std::any_of(amp.begin(), amp.end(), [](int a) { return a >= 0; });
  }
};

struct Scenario {
  std::string kind;  // "udr" | "skr" | "ingested"
  std::uint64_t seed = 0;
  double delta_t_s = 30.0;
  WeightedSecurityLattice lattice;
  LabelRules rules;
  OperationUniverse universe;
  std::string service_type;
  std::vector<ServiceDescriptor> services;
  std::vector<Provider> providers;
  std::vector<Path> paths;
  json generator_config;  // provenance; informational

  const ServiceDescriptor& provider_service(int provider_index) const {
    return services.at(static_cast<std::size_t>(providers.at(static_cast<std::size_t>(provider_index)).service));
  }
};

// Exhaustive structural checks: class dominance over operation minima,
// non-empty operation vectors, AMP coverage of every path, and that each
// service's SLA really classifies to its recorded class.
inline void validate_scenario(const Scenario& s) {
  if (s.paths.empty()) throw config_error("scenario has no paths");
  if (s.services.empty()) throw config_error("scenario has no services");
  if (!(s.delta_t_s > 0.0)) throw config_error("scenario delta_t_s must be > 0");
  validate_rules(s.rules, s.lattice);
  if (s.universe.size() == 0) throw config_error("scenario operation universe is empty");
  if (s.universe.min_classes.size() != s.universe.size()) {
    throw config_error("operation universe needs one minimum class per operation");
  }
  for (const auto& c : s.universe.min_classes) s.lattice.check_class(c);
  for (std::size_t i = 0; i < s.services.size(); ++i) {
    const auto& svc = s.services[i];
    if (svc.ops_onehot.size() != s.universe.size()) {
      throw config_error("service '" + svc.sla.service_id + "': ops_onehot arity mismatch");
    }
    bool any = false;
    for (std::size_t o = 0; o < svc.ops_onehot.size(); ++o) {
      if (svc.ops_onehot[o] == 0) continue;
      any = true;
      if (!s.lattice.dominates(svc.service_class, s.universe.min_classes[o])) {
        throw config_error("service '" + svc.sla.service_id + "' does not dominate the minimum class of '" +
                           s.universe.names[o] + "'");
      }
    }
    if (!any) throw config_error("service '" + svc.sla.service_id + "' carries no operations");
    const auto classified = classify_service(svc.sla, s.rules, s.lattice);
    if (!(classified == svc.service_class)) {
      throw config_error("service '" + svc.sla.service_id + "': SLA classifies to a different class than recorded");
    }
  }
  for (const auto& p : s.providers) {
    if (p.service < 0 || p.service >= static_cast<int>(s.services.size())) {
      throw config_error("provider '" + p.id + "' references an unknown service");
    }
  }
  for (const auto& path : s.paths) {
    if (path.length() == 0) throw config_error("path '" + path.id + "' has no steps");
    if (!path.has_amp()) throw config_error("path '" + path.id + "' traverses no AMP");
    for (int a : path.amp) {
      if (a < -1 || a >= static_cast<int>(s.providers.size())) {
        throw config_error("path '" + path.id + "' references an unknown provider");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Geodetic path ingestion

inline double haversine_m(double lat1, double lon1, double lat2, double lon2) {
  constexpr double kEarthRadiusM = 6371000.0;
  constexpr double kDegToRad = 3.14159265358979323846 / 180.0;
  const double phi1 = lat1 * kDegToRad;
  const double phi2 = lat2 * kDegToRad;
  const double dphi = (lat2 - lat1) * kDegToRad;
  const double dlambda = (lon2 - lon1) * kDegToRad;
  const double a = std::sin(dphi / 2) * std::sin(dphi / 2) +
                   std::cos(phi1) * std::cos(phi2) * std::sin(dlambda / 2) * std::sin(dlambda / 2);
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(a)));
}

struct AmpSite {
  std::string id;
  double lat = 0.0;
  double lon = 0.0;
};

struct GeoPoint {
  double lat = 0.0;
  double lon = 0.0;
};

struct IngestResult {
  std::vector<Path> paths;      // step amp = AMP site index, or -1
  std::vector<AmpSite> amps;
  std::size_t trips_read = 0;
  std::size_t trips_discarded = 0;
};

// Nearest AMP within radius wins the step; -1 when none is near enough.
inline std::vector<int> flag_amp_steps(const std::vector<GeoPoint>& points,
                                       const std::vector<AmpSite>& amps, double radius_m) {
  std::vector<int> out;
  out.reserve(points.size());
  for (const auto& pt : points) {
    int best = -1;
    double best_d = radius_m;
    for (std::size_t a = 0; a < amps.size(); ++a) {
      const double d = haversine_m(pt.lat, pt.lon, amps[a].lat, amps[a].lon);
      if (d <= best_d && (best < 0 || d < best_d)) {
        best = static_cast<int>(a);
        best_d = d;
      }
    }
    out.push_back(best);
  }
  return out;
}

inline std::vector<AmpSite> read_amp_csv(const std::string& path) {
  std::vector<AmpSite> amps;
  for (const auto& row : csv::read_file(path)) {
    if (row.fields.size() != 3) {
      throw parse_error(path + ":" + std::to_string(row.line_no) + ": expected amp_id,lat,lon");
    }
    if (!csv::is_numeric(row.fields[1])) continue;  // header row
    amps.push_back({row.fields[0],
                    csv::to_double(row.fields[1], path, row.line_no, "latitude"),
                    csv::to_double(row.fields[2], path, row.line_no, "longitude")});
  }
  if (amps.empty()) throw parse_error(path + ": no AMP rows found");
  return amps;
}

// Trips CSV (trip_id,seq,lat,lon) + AMP CSV (amp_id,lat,lon) -> paths whose
// steps are flagged with the nearest AMP within radius_m. Trips that never
// pass an AMP are discarded.
inline IngestResult ingest_paths(const std::string& trips_csv, const std::string& amps_csv,
                                 double radius_m, double delta_t_s) {
  if (!(radius_m > 0.0)) throw config_error("ingest_paths: radius_m must be > 0");
  if (!(delta_t_s > 0.0)) throw config_error("ingest_paths: delta_t_s must be > 0");
  IngestResult res;
  res.amps = read_amp_csv(amps_csv);

  struct TripPoint {
    double seq;
    GeoPoint pt;
  };
  std::vector<std::string> order;  // file order of trip ids
  std::map<std::string, std::vector<TripPoint>> trips;
  for (const auto& row : csv::read_file(trips_csv)) {
    if (row.fields.size() != 4) {
      throw parse_error(trips_csv + ":" + std::to_string(row.line_no) + ": expected trip_id,seq,lat,lon");
    }
    if (!csv::is_numeric(row.fields[1])) continue;  // header row
    TripPoint tp;
    tp.seq = csv::to_double(row.fields[1], trips_csv, row.line_no, "sequence number");
    tp.pt.lat = csv::to_double(row.fields[2], trips_csv, row.line_no, "latitude");
    tp.pt.lon = csv::to_double(row.fields[3], trips_csv, row.line_no, "longitude");
    auto [it, inserted] = trips.try_emplace(row.fields[0]);
    if (inserted) order.push_back(row.fields[0]);
    it->second.push_back(tp);
  }
  if (trips.empty()) throw parse_error(trips_csv + ": no trip rows found");

  for (const auto& id : order) {
    auto& pts = trips[id];
    std::stable_sort(pts.begin(), pts.end(),
                     [](const TripPoint& a, const TripPoint& b) { return a.seq < b.seq; });
    std::vector<GeoPoint> points;
    points.reserve(pts.size());
    for (const auto& tp : pts) points.push_back(tp.pt);
    Path p;
    p.id = id;
    p.amp = flag_amp_steps(points, res.amps, radius_m);
    ++res.trips_read;
    if (p.has_amp()) {
      res.paths.push_back(std::move(p));
    } else {
      ++res.trips_discarded;
    }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Synthetic paths

struct SyntheticPathsConfig {
  int n_paths = 64;
  int n_amps = 120;
  int steps_min = 30;
  int steps_max = 45;
  double area_km = 3.0;     // square side
  double radius_m = 50.0;
  double step_m = 80.0;     // walk stride per step
  double center_lat = 40.75;
  double center_lon = -73.98;
};

// Random-walk trips over a square area sprinkled with AMP sites, flagged
// through the same proximity logic as CSV ingestion.
inline IngestResult synth_paths(const SyntheticPathsConfig& cfg, Rng& rng) {
  if (cfg.n_paths <= 0 || cfg.n_amps <= 0) throw config_error("synth_paths: n_paths and n_amps must be > 0");
  if (cfg.steps_min < 2 || cfg.steps_max < cfg.steps_min) {
    throw config_error("synth_paths: need 2 <= steps_min <= steps_max");
  }
  const double m_per_deg_lat = 111320.0;
  const double m_per_deg_lon = 111320.0 * std::cos(cfg.center_lat * 3.14159265358979323846 / 180.0);
  const double half_lat = cfg.area_km * 500.0 / m_per_deg_lat;
  const double half_lon = cfg.area_km * 500.0 / m_per_deg_lon;

  IngestResult res;
  res.amps.reserve(static_cast<std::size_t>(cfg.n_amps));
  for (int a = 0; a < cfg.n_amps; ++a) {
    res.amps.push_back({"amp" + std::to_string(a),
                        cfg.center_lat + rng.uniform(-half_lat, half_lat),
                        cfg.center_lon + rng.uniform(-half_lon, half_lon)});
  }

  constexpr int kMaxRetries = 200;
  for (int p = 0; p < cfg.n_paths; ++p) {
    Path path;
    for (int attempt = 0; attempt < kMaxRetries; ++attempt) {
      const int steps = static_cast<int>(rng.uniform_int(cfg.steps_min, cfg.steps_max));
      double lat = cfg.center_lat + rng.uniform(-half_lat, half_lat);
      double lon = cfg.center_lon + rng.uniform(-half_lon, half_lon);
      double heading = rng.uniform(0.0, 2.0 * 3.14159265358979323846);
      std::vector<GeoPoint> points;
      points.reserve(static_cast<std::size_t>(steps));
      for (int i = 0; i < steps; ++i) {
        points.push_back({lat, lon});
        heading += rng.uniform(-0.6, 0.6);
        lat += cfg.step_m * std::sin(heading) / m_per_deg_lat;
        lon += cfg.step_m * std::cos(heading) / m_per_deg_lon;
        lat = std::clamp(lat, cfg.center_lat - half_lat, cfg.center_lat + half_lat);
        lon = std::clamp(lon, cfg.center_lon - half_lon, cfg.center_lon + half_lon);
      }
      path.id = "trip" + std::to_string(p);
      path.amp = flag_amp_steps(points, res.amps, cfg.radius_m);
      ++res.trips_read;
      if (path.has_amp()) break;
      ++res.trips_discarded;
      path.amp.clear();
    }
    if (path.amp.empty()) {
      throw config_error("synth_paths: could not produce a path traversing an AMP; raise n_amps or radius_m");
    }
    res.paths.push_back(std::move(path));
  }
  return res;
}

// ---------------------------------------------------------------------------
// SLA witness synthesis

namespace detail {

// Enumerate up to `cap` assignment sets satisfying a formula, trying Any
// branches in order. Ordering atoms get values nudged just past their
// thresholds so they do not overshoot into higher labels.
inline void witness_candidates(const Formula& f, std::vector<Assignments>& out, std::size_t cap) {
  auto nudge = [](const NumberValue& n, double direction) {
    const double d = std::max(std::abs(n.value) * 1e-3, 1e-3);
    return NumberValue{n.value + direction * d, n.unit};
  };
  switch (f.kind) {
    case Formula::Kind::True:
      out.push_back({});
      return;
    case Formula::Kind::Atom: {
      const auto& c = f.atom;
      Assignments a;
      switch (c.op) {
        case CmpOp::Eq:
          a[c.attribute] = c.value;
          break;
        case CmpOp::Ne:
          if (const auto* n = std::get_if<NumberValue>(&c.value)) {
            a[c.attribute] = nudge(*n, +1.0);
          } else if (const auto* b = std::get_if<bool>(&c.value)) {
            a[c.attribute] = !*b;
          } else {
            a[c.attribute] = std::get<std::string>(c.value) + "_other";
          }
          break;
        case CmpOp::Gt:
          a[c.attribute] = nudge(std::get<NumberValue>(c.value), +1.0);
          break;
        case CmpOp::Ge:
          a[c.attribute] = c.value;
          break;
        case CmpOp::Lt:
          a[c.attribute] = nudge(std::get<NumberValue>(c.value), -1.0);
          break;
        case CmpOp::Le:
          a[c.attribute] = c.value;
          break;
      }
      out.push_back(std::move(a));
      return;
    }
    case Formula::Kind::Any: {
      for (const auto& child : f.children) {
        witness_candidates(child, out, cap);
        if (out.size() >= cap) return;
      }
      return;
    }
    case Formula::Kind::All: {
      std::vector<Assignments> acc = {{}};
      for (const auto& child : f.children) {
        std::vector<Assignments> branch;
        witness_candidates(child, branch, cap);
        std::vector<Assignments> next;
        for (const auto& base : acc) {
          for (const auto& add : branch) {
            Assignments merged = base;
            bool ok = true;
            for (const auto& [k, v] : add) {
              const auto it = merged.find(k);
              if (it != merged.end() && !(it->second == v)) {
                ok = false;
                break;
              }
              merged[k] = v;
            }
            if (ok) next.push_back(std::move(merged));
            if (next.size() >= cap) break;
          }
          if (next.size() >= cap) break;
        }
        acc = std::move(next);
        if (acc.empty()) return;
      }
      for (auto& a : acc) {
        out.push_back(std::move(a));
        if (out.size() >= cap) return;
      }
      return;
    }
  }
}

}  // namespace detail

// Build an assignment set that classifies to exactly `target` under the
// given rules, by combining per-property witnesses and verifying the result.
// Throws config_error when the rule set admits no such combination.
inline Assignments synthesize_assignments(const SecurityClass& target, const LabelRules& rules,
                                          const WeightedSecurityLattice& lattice) {
  lattice.check_class(target);
  constexpr std::size_t kBranchCap = 8;
  std::vector<std::vector<Assignments>> per_property;
  for (std::size_t p = 0; p < lattice.property_count(); ++p) {
    const auto& prop = lattice.properties()[p];
    const auto& label = prop.labels[static_cast<std::size_t>(target.ranks[p])];
    std::vector<Assignments> cands;
    if (label == kBottomLabel) {
      cands.push_back({});  // bottom needs no supporting facts
    } else {
      detail::witness_candidates(find_rule(rules, prop.id, label), cands, kBranchCap);
    }
    if (cands.empty()) {
      throw config_error("no witness for property '" + prop.id + "' label '" + label + "'");
    }
    per_property.push_back(std::move(cands));
  }

  // Search combinations (bounded) until one classifies to the target.
  std::vector<std::size_t> idx(per_property.size(), 0);
  constexpr std::size_t kMaxTries = 256;
  for (std::size_t attempt = 0; attempt < kMaxTries; ++attempt) {
    Assignments merged;
    bool conflict = false;
    for (std::size_t p = 0; p < per_property.size() && !conflict; ++p) {
      for (const auto& [k, v] : per_property[p][idx[p]]) {
        const auto it = merged.find(k);
        if (it != merged.end() && !(it->second == v)) {
          conflict = true;
          break;
        }
        merged[k] = v;
      }
    }
    if (!conflict && classify_assignments(merged, rules, lattice) == target) {
      return merged;
    }
    // advance mixed-radix counter
    std::size_t p = 0;
    while (p < idx.size()) {
      if (++idx[p] < per_property[p].size()) break;
      idx[p] = 0;
      ++p;
    }
    if (p == idx.size()) break;
  }
  throw config_error("label rules admit no assignment set classifying to the requested class");
}

// ---------------------------------------------------------------------------
// Scenario generation

struct CsvPathsConfig {
  std::string trips_file;
  std::string amps_file;
  double radius_m = 50.0;
};

struct GeneratorConfig {
  WeightedSecurityLattice lattice;
  LabelRules rules;
  std::vector<std::string> op_names;
  std::string min_class_mode = "low";  // "low" | "uniform" | "fixed"
  std::map<std::string, std::vector<std::string>> min_classes;  // fixed mode, by op name
  std::string service_type = "iot";
  int n_services = 10;
  int ops_min = 1;
  int ops_max = 3;
  std::variant<SyntheticPathsConfig, CsvPathsConfig> paths = SyntheticPathsConfig{};
  double delta_t_s = 30.0;
  // SKR only:
  double skew = 1.5;
  std::vector<std::string> rare_ops;  // defaults to the last operation
  json source;                        // raw config for provenance
};

namespace detail {

inline SecurityClass sample_min_class(const GeneratorConfig& cfg, const std::string& op, Rng& rng) {
  const auto& lattice = cfg.lattice;
  if (cfg.min_class_mode == "fixed") {
    const auto it = cfg.min_classes.find(op);
    if (it != cfg.min_classes.end()) return lattice.class_of(it->second);
    return lattice.bottom();
  }
  SecurityClass c;
  c.ranks.reserve(lattice.property_count());
  for (const auto& prop : lattice.properties()) {
    const int max_rank = static_cast<int>(prop.labels.size()) - 1;
    int lo = 0;
    if (cfg.min_class_mode == "low") lo = (max_rank + 1) / 2;
    c.ranks.push_back(static_cast<int>(rng.uniform_int(lo, max_rank)));
  }
  return c;
}

// Sample a class dominating `bound`; `lower_half` restricts each component
// to the weaker half of its dominance-feasible range.
inline SecurityClass sample_dominating_class(const WeightedSecurityLattice& lattice,
                                             const SecurityClass& bound, bool lower_half, Rng& rng) {
  SecurityClass c;
  c.ranks.reserve(lattice.property_count());
  for (std::size_t p = 0; p < lattice.property_count(); ++p) {
    const int hi = bound.ranks[p];
    const int lo = lower_half ? (hi + 1) / 2 : 0;
    c.ranks.push_back(static_cast<int>(rng.uniform_int(lo, hi)));
  }
  return c;
}

inline IngestResult build_paths(const GeneratorConfig& cfg, Rng& rng) {
  if (const auto* synth = std::get_if<SyntheticPathsConfig>(&cfg.paths)) {
    return synth_paths(*synth, rng);
  }
  const auto& csvc = std::get<CsvPathsConfig>(cfg.paths);
  return ingest_paths(csvc.trips_file, csvc.amps_file, csvc.radius_m, cfg.delta_t_s);
}

inline void check_generator_config(const GeneratorConfig& cfg) {
  if (cfg.lattice.empty()) throw config_error("generator: lattice is required");
  validate_rules(cfg.rules, cfg.lattice);
  if (cfg.op_names.empty()) throw config_error("generator: at least one operation is required");
  std::set<std::string> seen(cfg.op_names.begin(), cfg.op_names.end());
  if (seen.size() != cfg.op_names.size()) throw config_error("generator: duplicate operation names");
  if (cfg.n_services < 1) throw config_error("generator: n_services must be >= 1");
  if (cfg.ops_min < 1 || cfg.ops_max < cfg.ops_min ||
      cfg.ops_max > static_cast<int>(cfg.op_names.size())) {
    throw config_error("generator: need 1 <= ops_min <= ops_max <= m");
  }
}

struct GeneratedCore {
  OperationUniverse universe;
  std::vector<ServiceDescriptor> services;
};

// Operation universe + services with coverage of every operation. `rare`
// marks operations that must appear only in services whose index lies in
// the bottom half of [0, n_services) (rank order = index order).
inline GeneratedCore build_services(const GeneratorConfig& cfg, const std::set<int>& rare,
                                    bool bias_frequent_low, Rng& rng) {
  const auto m = cfg.op_names.size();
  GeneratedCore core;
  core.universe.names = cfg.op_names;
  core.universe.min_classes.reserve(m);
  for (const auto& op : cfg.op_names) {
    core.universe.min_classes.push_back(sample_min_class(cfg, op, rng));
  }

  std::vector<int> common_ops;
  for (std::size_t o = 0; o < m; ++o) {
    if (rare.count(static_cast<int>(o)) == 0) common_ops.push_back(static_cast<int>(o));
  }
  if (common_ops.empty()) throw config_error("generator: every operation is marked rare");

  const int n = cfg.n_services;
  const int half = n / 2;
  constexpr int kMaxAttempts = 1000;
  std::vector<std::vector<int>> chosen;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    chosen.assign(static_cast<std::size_t>(n), {});
    for (int s = 0; s < n; ++s) {
      const int count = std::min<int>(static_cast<int>(rng.uniform_int(cfg.ops_min, cfg.ops_max)),
                                      static_cast<int>(common_ops.size()));
      std::vector<int> pool = common_ops;
      rng.shuffle(pool.begin(), pool.end());
      chosen[static_cast<std::size_t>(s)].assign(pool.begin(), pool.begin() + count);
    }
    for (int o : rare) {
      // one carrier drawn from the rare (low-frequency) half
      const int s = static_cast<int>(rng.uniform_int(half, n - 1));
      auto& ops = chosen[static_cast<std::size_t>(s)];
      if (std::find(ops.begin(), ops.end(), o) == ops.end()) ops.push_back(o);
    }
    std::vector<bool> covered(m, false);
    for (const auto& ops : chosen) {
      for (int o : ops) covered[static_cast<std::size_t>(o)] = true;
    }
    if (std::all_of(covered.begin(), covered.end(), [](bool b) { return b; })) break;
    if (attempt + 1 == kMaxAttempts) {
      throw config_error("generator: could not cover every operation; raise n_services or ops_max");
    }
  }

  for (int s = 0; s < n; ++s) {
    const auto& ops = chosen[static_cast<std::size_t>(s)];
    // join of the included ops' minimum classes: the strongest demand per
    // property (smallest rank) bounds how weak the service may be
    SecurityClass bound = cfg.lattice.bottom();
    for (int o : ops) {
      const auto& mc = core.universe.min_classes[static_cast<std::size_t>(o)];
      for (std::size_t p = 0; p < bound.ranks.size(); ++p) {
        bound.ranks[p] = std::min(bound.ranks[p], mc.ranks[p]);
      }
    }
    const bool frequent = bias_frequent_low && s < half;
    ServiceDescriptor svc;
    svc.service_class = sample_dominating_class(cfg.lattice, bound, frequent, rng);
    svc.ops_onehot.assign(m, 0);
    svc.sla.service_id = "svc" + std::to_string(s);
    svc.sla.service_type = cfg.service_type;
    std::vector<int> sorted_ops = ops;
    std::sort(sorted_ops.begin(), sorted_ops.end());
    for (int o : sorted_ops) {
      svc.ops_onehot[static_cast<std::size_t>(o)] = 1;
      svc.sla.operations.push_back(cfg.op_names[static_cast<std::size_t>(o)]);
    }
    svc.sla.assignments = synthesize_assignments(svc.service_class, cfg.rules, cfg.lattice);
    core.services.push_back(std::move(svc));
  }
  return core;
}

inline std::vector<Provider> assign_providers(const std::vector<AmpSite>& amps,
                                              const std::vector<double>& service_weights, Rng& rng) {
  // inverse-CDF sampling over the categorical service distribution
  std::vector<double> cdf(service_weights.size(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < service_weights.size(); ++i) {
    total += service_weights[i];
    cdf[i] = total;
  }
  std::vector<Provider> providers;
  providers.reserve(amps.size());
  for (const auto& amp : amps) {
    const double u = rng.u01() * total;
    const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    const int svc = static_cast<int>(std::min<std::size_t>(
        static_cast<std::size_t>(it - cdf.begin()), service_weights.size() - 1));
    providers.push_back({amp.id, amp.lat, amp.lon, svc});
  }
  return providers;
}

inline Scenario assemble(const GeneratorConfig& cfg, std::uint64_t seed, const std::string& kind,
                         GeneratedCore core, IngestResult ingest, std::vector<Provider> providers) {
  Scenario s;
  s.kind = kind;
  s.seed = seed;
  s.delta_t_s = cfg.delta_t_s;
  s.lattice = cfg.lattice;
  s.rules = cfg.rules;
  s.universe = std::move(core.universe);
  s.service_type = cfg.service_type;
  s.services = std::move(core.services);
  s.providers = std::move(providers);
  s.paths = std::move(ingest.paths);
  s.generator_config = cfg.source;
  validate_scenario(s);
  return s;
}

}  // namespace detail

// Uniformly distributed random scenario: operation subsets, AMP-to-service
// assignment, and dominance-feasible classes all sampled uniformly.
inline Scenario generate_scenario_udr(const GeneratorConfig& cfg, std::uint64_t seed) {
  detail::check_generator_config(cfg);
  Rng rng(derive_seed(seed, "scenario-udr"));
  auto ingest = detail::build_paths(cfg, rng);
  if (ingest.paths.empty()) throw config_error("generator: empty path set");
  auto core = detail::build_services(cfg, {}, false, rng);
  std::vector<double> weights(static_cast<std::size_t>(cfg.n_services), 1.0);
  auto providers = detail::assign_providers(ingest.amps, weights, rng);
  return detail::assemble(cfg, seed, "udr", std::move(core), std::move(ingest), std::move(providers));
}

// Skewed scenario: Zipf(s) service frequency over AMPs, rare operations
// bound to rare services, frequent services biased toward weaker classes.
inline Scenario generate_scenario_skr(const GeneratorConfig& cfg, std::uint64_t seed) {
  detail::check_generator_config(cfg);
  if (!(cfg.skew > 0.0)) throw config_error("generator: SKR skew parameter must be > 0");
  Rng rng(derive_seed(seed, "scenario-skr"));
  auto ingest = detail::build_paths(cfg, rng);
  if (ingest.paths.empty()) throw config_error("generator: empty path set");

  std::set<int> rare;
  if (cfg.rare_ops.empty()) {
    rare.insert(static_cast<int>(cfg.op_names.size()) - 1);
  } else {
    for (const auto& name : cfg.rare_ops) {
      const auto it = std::find(cfg.op_names.begin(), cfg.op_names.end(), name);
      if (it == cfg.op_names.end()) throw config_error("generator: unknown rare operation '" + name + "'");
      rare.insert(static_cast<int>(it - cfg.op_names.begin()));
    }
  }

  auto core = detail::build_services(cfg, rare, true, rng);
  std::vector<double> weights;
  weights.reserve(static_cast<std::size_t>(cfg.n_services));
  for (int k = 1; k <= cfg.n_services; ++k) {
    weights.push_back(1.0 / std::pow(static_cast<double>(k), cfg.skew));
  }
  auto providers = detail::assign_providers(ingest.amps, weights, rng);
  return detail::assemble(cfg, seed, "skr", std::move(core), std::move(ingest), std::move(providers));
}

// ---------------------------------------------------------------------------
// Scenario archive (full materialization; loading needs no regeneration)

inline constexpr const char* kScenarioFormat = "secsel-scenario-v1";

inline json scenario_to_json(const Scenario& s) {
  json j;
  j["format"] = kScenarioFormat;
  j["kind"] = s.kind;
  j["seed"] = s.seed;
  j["delta_t_s"] = s.delta_t_s;
  j["lattice"] = lattice_to_json(s.lattice);
  j["rules"] = rules_to_json(s.rules);
  json ops = json::object();
  ops["names"] = s.universe.names;
  json mins = json::array();
  for (const auto& c : s.universe.min_classes) mins.push_back(s.lattice.labels_of(c));
  ops["min_classes"] = std::move(mins);
  j["operations"] = std::move(ops);
  j["service_type"] = s.service_type;
  json services = json::array();
  for (const auto& svc : s.services) {
    services.push_back({{"sla", sla_to_json(svc.sla)},
                        {"class", s.lattice.labels_of(svc.service_class)},
                        {"ops_onehot", svc.ops_onehot}});
  }
  j["services"] = std::move(services);
  json providers = json::array();
  for (const auto& p : s.providers) {
    providers.push_back({{"id", p.id}, {"lat", p.lat}, {"lon", p.lon}, {"service", p.service}});
  }
  j["providers"] = std::move(providers);
  json paths = json::array();
  for (const auto& p : s.paths) {
    paths.push_back({{"id", p.id}, {"steps", p.amp}});
  }
  j["paths"] = std::move(paths);
  j["generator_config"] = s.generator_config;
  return j;
}

inline Scenario scenario_from_json(const json& j) {
  if (j.value("format", "") != kScenarioFormat) {
    throw parse_error("scenario archive: unknown or missing format marker");
  }
  Scenario s;
  s.kind = j.at("kind").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.delta_t_s = j.at("delta_t_s").get<double>();
  s.lattice = lattice_from_json(j.at("lattice"));
  s.rules = rules_from_json(j.at("rules"));
  s.universe.names = j.at("operations").at("names").get<std::vector<std::string>>();
  for (const auto& labels : j.at("operations").at("min_classes")) {
    s.universe.min_classes.push_back(s.lattice.class_of(labels.get<std::vector<std::string>>()));
  }
  s.service_type = j.at("service_type").get<std::string>();
  for (const auto& sj : j.at("services")) {
    ServiceDescriptor svc;
    svc.sla = sla_from_json(sj.at("sla"));
    svc.service_class = s.lattice.class_of(sj.at("class").get<std::vector<std::string>>());
    svc.ops_onehot = sj.at("ops_onehot").get<std::vector<std::uint8_t>>();
    s.services.push_back(std::move(svc));
  }
  for (const auto& pj : j.at("providers")) {
    s.providers.push_back({pj.at("id").get<std::string>(), pj.at("lat").get<double>(),
                           pj.at("lon").get<double>(), pj.at("service").get<int>()});
  }
  for (const auto& pj : j.at("paths")) {
    Path p;
    p.id = pj.at("id").get<std::string>();
    p.amp = pj.at("steps").get<std::vector<int>>();
    s.paths.push_back(std::move(p));
  }
  s.generator_config = j.value("generator_config", json::object());
  validate_scenario(s);
  return s;
}

inline void save_scenario(const Scenario& s, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw parse_error("cannot write scenario archive '" + path + "'");
  out << scenario_to_json(s).dump(2) << "\n";
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw parse_error("cannot open scenario archive '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return scenario_from_json(detail::parse_json_strict(text, "scenario archive"));
}

// Generator config from JSON (the `scenario.config` block of a run config,
// or a standalone document for the CLI generators).
inline GeneratorConfig generator_config_from_json(const json& j) {
  GeneratorConfig cfg;
  cfg.source = j;
  cfg.lattice = lattice_from_json(j.at("lattice"));
  cfg.rules = rules_from_json(j.at("rules"));
  const auto& ops = j.at("operations");
  cfg.op_names = ops.at("names").get<std::vector<std::string>>();
  cfg.min_class_mode = ops.value("min_class_mode", "low");
  if (cfg.min_class_mode != "low" && cfg.min_class_mode != "uniform" && cfg.min_class_mode != "fixed") {
    throw parse_error("generator: min_class_mode must be low|uniform|fixed");
  }
  if (ops.contains("min_classes")) {
    for (const auto& [op, labels] : ops.at("min_classes").items()) {
      cfg.min_classes[op] = labels.get<std::vector<std::string>>();
    }
  }
  cfg.service_type = j.value("service_type", "iot");
  cfg.n_services = j.value("n_services", 10);
  if (j.contains("ops_per_service")) {
    const auto range = j.at("ops_per_service").get<std::vector<int>>();
    if (range.size() != 2) throw parse_error("generator: ops_per_service must be [min, max]");
    cfg.ops_min = range[0];
    cfg.ops_max = range[1];
  }
  cfg.delta_t_s = j.value("delta_t_s", 30.0);
  const auto& pj = j.at("paths");
  const auto source = pj.at("source").get<std::string>();
  if (source == "synthetic") {
    SyntheticPathsConfig sp;
    sp.n_paths = pj.value("n_paths", sp.n_paths);
    sp.n_amps = pj.value("n_amps", sp.n_amps);
    if (pj.contains("steps")) {
      const auto range = pj.at("steps").get<std::vector<int>>();
      if (range.size() != 2) throw parse_error("generator: paths.steps must be [min, max]");
      sp.steps_min = range[0];
      sp.steps_max = range[1];
    }
    sp.area_km = pj.value("area_km", sp.area_km);
    sp.radius_m = pj.value("radius_m", sp.radius_m);
    sp.step_m = pj.value("step_m", sp.step_m);
    cfg.paths = sp;
  } else if (source == "csv") {
    CsvPathsConfig cp;
    cp.trips_file = pj.at("trips").get<std::string>();
    cp.amps_file = pj.at("amps").get<std::string>();
    cp.radius_m = pj.value("radius_m", 50.0);
    cfg.paths = cp;
  } else {
    throw parse_error("generator: paths.source must be synthetic|csv");
  }
  cfg.skew = j.value("skew", 1.5);
  if (j.contains("rare_ops")) cfg.rare_ops = j.at("rare_ops").get<std::vector<std::string>>();
  return cfg;
}

}  // namespace secsel
