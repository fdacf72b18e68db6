#pragma once

// Shared test fixtures: the running example's CIA lattice and label rules,
// a survey document, and scenario generator configs sized for fast tests.

#include <string>

#include "secsel/scenario.hpp"
#include "secsel/sla.hpp"

namespace fixtures {

using secsel::json;

// Label rules of the running example: per property, formulas over
// authentication/encryption, integrity scheme, and uptime facts.
inline secsel::LabelRules cia_rules() {
  const json j = json::parse(R"([
    {"property":"C","label":"HC","formula":{"all":[
      {"atom":{"attribute":"auth","op":"=","value":"continous"}},
      {"atom":{"attribute":"enc","op":"=","value":"AES-256"}}]}},
    {"property":"C","label":"MC","formula":{"any":[
      {"atom":{"attribute":"auth","op":"=","value":"double factor"}},
      {"atom":{"attribute":"enc","op":"=","value":"AES-256"}}]}},
    {"property":"C","label":"LC","formula":{"any":[
      {"atom":{"attribute":"auth","op":"=","value":"simple"}},
      {"atom":{"attribute":"enc","op":"=","value":"AES-128"}}]}},
    {"property":"C","label":"-","formula":true},
    {"property":"I","label":"HI","formula":{"atom":{"attribute":"integrity","op":"=","value":"Merkle Hash Tree"}}},
    {"property":"I","label":"MI","formula":{"atom":{"attribute":"integrity","op":"=","value":"Hash Chain"}}},
    {"property":"I","label":"LI","formula":{"atom":{"attribute":"integrity","op":"=","value":"Verification Object Insertion"}}},
    {"property":"I","label":"-","formula":true},
    {"property":"A","label":"HA","formula":{"atom":{"attribute":"uptime","op":">","value":"99.99%"}}},
    {"property":"A","label":"MA","formula":{"atom":{"attribute":"uptime","op":">","value":"99%"}}},
    {"property":"A","label":"LA","formula":{"atom":{"attribute":"uptime","op":">","value":"95%"}}},
    {"property":"A","label":"-","formula":true}
  ])");
  return secsel::rules_from_json(j);
}

inline json cia_lattice_json() {
  return secsel::lattice_to_json(secsel::make_cia_lattice());
}

inline json cia_rules_json() { return secsel::rules_to_json(cia_rules()); }

// Survey demanding the running example's [HC, HI, HA] class, with all six
// operations declared. Importances/deadlines are overridable per test.
inline json survey_json(double deadline_s = 300.0, double loss_budget = 1.0) {
  json tau = json::object();
  const char* ops[] = {"temperature", "humidity", "pressure", "time", "printing", "connectivity"};
  const double importance[] = {0.5, 0.8, 0.6, 0.7, 0.4, 0.9};
  for (int i = 0; i < 6; ++i) {
    json entry = json::object();
    entry["importance"] = importance[i];
    entry["deadline_s"] = deadline_s;
    tau[ops[i]] = entry;
  }
  json type = json::object();
  type["assignments"] = json::parse(R"({"auth":"continous","enc":"AES-256",
      "integrity":"Merkle Hash Tree","uptime":"99.999%"})");
  type["importance"] = json::object();
  type["tau_u"] = tau;
  type["loss_budget"] = loss_budget;
  json j = json::object();
  j["service_types"] = json::object();
  j["service_types"]["iot"] = type;
  return j;
}

inline secsel::UserRequirements survey(double deadline_s = 300.0, double loss_budget = 1.0) {
  return secsel::survey_from_json(survey_json(deadline_s, loss_budget));
}

// Generator config: m=6 operations, 10 services, synthetic paths. Small
// enough to generate in milliseconds.
inline json generator_json(int n_paths = 24, int n_amps = 60) {
  json j = json::parse(R"({
    "operations": {
      "names": ["temperature","humidity","pressure","time","printing","connectivity"],
      "min_class_mode": "low"
    },
    "service_type": "iot",
    "n_services": 10,
    "ops_per_service": [1, 3],
    "paths": {
      "source": "synthetic",
      "n_paths": 24,
      "n_amps": 60,
      "steps": [30, 45],
      "area_km": 2.0,
      "radius_m": 60.0,
      "step_m": 80.0
    },
    "delta_t_s": 30.0
  })");
  j["lattice"] = cia_lattice_json();
  j["rules"] = cia_rules_json();
  j["paths"]["n_paths"] = n_paths;
  j["paths"]["n_amps"] = n_amps;
  return j;
}

inline secsel::GeneratorConfig generator_config(int n_paths = 24, int n_amps = 60) {
  return secsel::generator_config_from_json(generator_json(n_paths, n_amps));
}

}  // namespace fixtures
