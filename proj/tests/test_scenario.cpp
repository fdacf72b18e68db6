#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "fixtures.hpp"
#include "secsel/scenario.hpp"

using namespace secsel;

namespace {

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("secsel_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter()++));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  static int& counter() {
    static int c = 0;
    return c;
  }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

// Degree offsets for a given displacement in meters around latitude 40.75.
constexpr double kLat0 = 40.75;
constexpr double kLon0 = -73.98;
double lat_off(double meters) { return meters / 111320.0; }
double lon_off(double meters) { return meters / (111320.0 * std::cos(kLat0 * 3.14159265358979323846 / 180.0)); }

}  // namespace

TEST_CASE("haversine sanity") {
  CHECK(haversine_m(kLat0, kLon0, kLat0, kLon0) == 0.0);
  // one degree of latitude is about 111.2 km
  CHECK(haversine_m(40.0, -74.0, 41.0, -74.0) == Catch::Approx(111200.0).epsilon(0.01));
  // small offsets round-trip through the degree conversion helpers
  CHECK(haversine_m(kLat0, kLon0, kLat0 + lat_off(10.0), kLon0) == Catch::Approx(10.0).epsilon(0.01));
  CHECK(haversine_m(kLat0, kLon0, kLat0, kLon0 + lon_off(25.0)) == Catch::Approx(25.0).epsilon(0.01));
}

TEST_CASE("ingest_paths") {
  TempDir dir;
  const auto trips = dir.file("trips.csv");
  const auto amps = dir.file("amps.csv");

  SECTION("a step within radius is flagged with the nearest AMP") {
    write_file(amps, "amp_id,lat,lon\n"
                     "a0," + std::to_string(kLat0 + lat_off(10.0)) + "," + std::to_string(kLon0) + "\n" +
                     "a1," + std::to_string(kLat0 + lat_off(20.0)) + "," + std::to_string(kLon0) + "\n");
    write_file(trips, "trip_id,seq,lat,lon\n"
                      "t0,0," + std::to_string(kLat0) + "," + std::to_string(kLon0) + "\n" +
                      "t0,1," + std::to_string(kLat0) + "," + std::to_string(kLon0 + lon_off(500.0)) + "\n");
    const auto res = ingest_paths(trips, amps, 50.0, 30.0);
    REQUIRE(res.paths.size() == 1);
    REQUIRE(res.paths[0].amp.size() == 2);
    CHECK(res.paths[0].amp[0] == 0);  // 10 m beats 20 m
    CHECK(res.paths[0].amp[1] == -1);
  }

  SECTION("trips with no AMP step are discarded") {
    write_file(amps, "amp_id,lat,lon\na0," + std::to_string(kLat0) + "," + std::to_string(kLon0) + "\n");
    write_file(trips,
               "trip_id,seq,lat,lon\n"
               "near,0," + std::to_string(kLat0 + lat_off(5.0)) + "," + std::to_string(kLon0) + "\n" +
               "far,0," + std::to_string(kLat0 + lat_off(5000.0)) + "," + std::to_string(kLon0) + "\n");
    const auto res = ingest_paths(trips, amps, 50.0, 30.0);
    CHECK(res.trips_read == 2);
    CHECK(res.paths.size() == 1);
    CHECK(res.trips_discarded == 1);
    CHECK(res.paths[0].id == "near");
  }

  SECTION("rows are ordered by seq even when shuffled in the file") {
    write_file(amps, "amp_id,lat,lon\na0," + std::to_string(kLat0) + "," + std::to_string(kLon0) + "\n");
    write_file(trips, "trip_id,seq,lat,lon\n"
                      "t0,2," + std::to_string(kLat0 + lat_off(500.0)) + "," + std::to_string(kLon0) + "\n" +
                      "t0,0," + std::to_string(kLat0) + "," + std::to_string(kLon0) + "\n" +
                      "t0,1," + std::to_string(kLat0 + lat_off(250.0)) + "," + std::to_string(kLon0) + "\n");
    const auto res = ingest_paths(trips, amps, 50.0, 30.0);
    REQUIRE(res.paths.size() == 1);
    CHECK(res.paths[0].amp == std::vector<int>{0, -1, -1});
  }

  SECTION("ill-formed rows report the file line") {
    write_file(amps, "amp_id,lat,lon\na0,40.75,-73.98\n");
    write_file(trips, "trip_id,seq,lat,lon\nt0,0,not_a_number,-73.98\n");
    CHECK_THROWS_WITH(ingest_paths(trips, amps, 50.0, 30.0),
                      Catch::Matchers::ContainsSubstring(":2:"));
  }

  SECTION("NYC-shaped fixture: 186 of 200 trips survive the AMP filter") {
    // 20 AMP sites along an avenue; 186 trips pass one, 14 run far away.
    std::string amps_text = "amp_id,lat,lon\n";
    for (int a = 0; a < 20; ++a) {
      amps_text += "amp" + std::to_string(a) + "," + std::to_string(kLat0 + lat_off(100.0 * a)) + "," +
                   std::to_string(kLon0) + "\n";
    }
    write_file(amps, amps_text);
    Rng rng(186);
    std::string trips_text = "trip_id,seq,lat,lon\n";
    for (int t = 0; t < 200; ++t) {
      const bool near = t < 186;
      const double base_lon = near ? kLon0 + lon_off(rng.uniform(-20.0, 20.0)) : kLon0 + lon_off(5000.0);
      const double base_lat = kLat0 + lat_off(rng.uniform(0.0, 1900.0));
      const int steps = static_cast<int>(rng.uniform_int(5, 15));
      for (int s = 0; s < steps; ++s) {
        trips_text += "trip" + std::to_string(t) + "," + std::to_string(s) + "," +
                      std::to_string(base_lat + lat_off(20.0 * s)) + "," + std::to_string(base_lon) + "\n";
      }
    }
    write_file(trips, trips_text);
    const auto res = ingest_paths(trips, amps, 60.0, 30.0);
    CHECK(res.trips_read == 200);
    CHECK(res.paths.size() == 186);
    CHECK(res.trips_discarded == 14);
  }
}

TEST_CASE("synthetic paths") {
  Rng rng(11);
  SyntheticPathsConfig cfg;
  cfg.n_paths = 20;
  cfg.n_amps = 80;
  cfg.steps_min = 20;
  cfg.steps_max = 30;
  const auto res = synth_paths(cfg, rng);
  CHECK(res.paths.size() == 20);
  CHECK(res.amps.size() == 80);
  for (const auto& p : res.paths) {
    CHECK(p.length() >= 20);
    CHECK(p.length() <= 30);
    CHECK(p.has_amp());
  }

  SECTION("deterministic under the same seed") {
    Rng a(99), b(99);
    const auto ra = synth_paths(cfg, a);
    const auto rb = synth_paths(cfg, b);
    REQUIRE(ra.paths.size() == rb.paths.size());
    for (std::size_t i = 0; i < ra.paths.size(); ++i) CHECK(ra.paths[i].amp == rb.paths[i].amp);
  }
}

TEST_CASE("witness synthesis classifies to the requested class") {
  const auto lattice = make_cia_lattice();
  const auto rules = fixtures::cia_rules();
  lattice.for_each_class([&](const SecurityClass& target) {
    const auto assignments = synthesize_assignments(target, rules, lattice);
    CHECK(classify_assignments(assignments, rules, lattice) == target);
  });
}

TEST_CASE("generate_scenario_udr") {
  const auto cfg = fixtures::generator_config();

  SECTION("deterministic under seed") {
    const auto a = generate_scenario_udr(cfg, 5);
    const auto b = generate_scenario_udr(cfg, 5);
    CHECK(scenario_to_json(a) == scenario_to_json(b));
    const auto c = generate_scenario_udr(cfg, 6);
    CHECK(scenario_to_json(a) != scenario_to_json(c));
  }

  SECTION("every service has operations and dominates the op minima") {
    const auto s = generate_scenario_udr(cfg, 7);
    CHECK(s.services.size() == 10);
    for (const auto& svc : s.services) {
      int bits = 0;
      for (std::size_t o = 0; o < svc.ops_onehot.size(); ++o) {
        if (svc.ops_onehot[o] == 0) continue;
        ++bits;
        CHECK(s.lattice.dominates(svc.service_class, s.universe.min_classes[o]));
      }
      CHECK(bits >= 1);
      CHECK(bits <= 3 + 1);  // ops_per_service range (+1 slack is not used for UDR)
    }
    // validate_scenario re-checks everything, including SLA classification
    CHECK_NOTHROW(validate_scenario(s));
  }

  SECTION("every operation is offered by at least one service") {
    const auto s = generate_scenario_udr(cfg, 8);
    for (std::size_t o = 0; o < s.universe.size(); ++o) {
      bool covered = false;
      for (const auto& svc : s.services) covered = covered || svc.ops_onehot[o] != 0;
      CHECK(covered);
    }
  }

  SECTION("empty path set is a configuration error") {
    auto bad = cfg;
    bad.paths = CsvPathsConfig{"/nonexistent/trips.csv", "/nonexistent/amps.csv", 50.0};
    CHECK_THROWS_AS(generate_scenario_udr(bad, 1), parse_error);
  }
}

TEST_CASE("generate_scenario_skr") {
  auto cfg = fixtures::generator_config(24, 400);  // many AMPs for frequency statistics
  cfg.skew = 1.5;

  SECTION("skew must be positive") {
    auto bad = cfg;
    bad.skew = 0.0;
    CHECK_THROWS_AS(generate_scenario_skr(bad, 1), config_error);
  }

  SECTION("top service is far more frequent than the median at s=1.5") {
    const auto s = generate_scenario_skr(cfg, 3);
    std::vector<int> counts(s.services.size(), 0);
    for (const auto& p : s.providers) ++counts[static_cast<std::size_t>(p.service)];
    auto sorted = counts;
    std::sort(sorted.begin(), sorted.end());
    const double median = (sorted[4] + sorted[5]) / 2.0;
    const int top = *std::max_element(counts.begin(), counts.end());
    CHECK(top > 3.0 * std::max(1.0, median));
  }

  SECTION("the rare operation appears at no more than 20% of AMPs") {
    const auto s = generate_scenario_skr(cfg, 4);
    const int rare_op = static_cast<int>(s.universe.size()) - 1;  // default rare op
    int rare_amps = 0;
    for (const auto& p : s.providers) {
      if (s.services[static_cast<std::size_t>(p.service)].ops_onehot[static_cast<std::size_t>(rare_op)]) {
        ++rare_amps;
      }
    }
    CHECK(rare_amps > 0);
    CHECK(static_cast<double>(rare_amps) / static_cast<double>(s.providers.size()) <= 0.20);
  }

  SECTION("s -> 0+ degenerates toward uniform assignment (chi-square)") {
    auto uni = fixtures::generator_config(24, 400);
    uni.skew = 1e-9;
    // accumulate counts across several seeds to reach ~1e4 draws
    std::vector<int> counts(10, 0);
    int n = 0;
    for (std::uint64_t seed = 0; seed < 25; ++seed) {
      const auto s = generate_scenario_skr(uni, seed);
      for (const auto& p : s.providers) {
        ++counts[static_cast<std::size_t>(p.service)];
        ++n;
      }
    }
    const double expected = static_cast<double>(n) / 10.0;
    double chi2 = 0.0;
    for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
    CHECK(chi2 < 21.67);  // df=9 at alpha=0.01
  }

  SECTION("deterministic under seed") {
    const auto a = generate_scenario_skr(cfg, 12);
    const auto b = generate_scenario_skr(cfg, 12);
    CHECK(scenario_to_json(a) == scenario_to_json(b));
  }
}

TEST_CASE("scenario archive round-trip") {
  TempDir dir;
  const auto s = generate_scenario_udr(fixtures::generator_config(), 21);
  const auto path = dir.file("scenario.json");
  save_scenario(s, path);
  const auto loaded = load_scenario(path);
  CHECK(scenario_to_json(loaded) == scenario_to_json(s));

  SECTION("format marker is enforced") {
    json j = scenario_to_json(s);
    j["format"] = "something-else";
    CHECK_THROWS_AS(scenario_from_json(j), parse_error);
  }

  SECTION("tampered class fails the consistency audit") {
    json j = scenario_to_json(s);
    j["services"][0]["class"] = json::array({"HC", "HI", "HA"});
    bool tampered_matters = !(s.services[0].service_class == s.lattice.class_of({"HC", "HI", "HA"}));
    if (tampered_matters) {
      CHECK_THROWS_AS(scenario_from_json(j), config_error);
    }
  }
}
