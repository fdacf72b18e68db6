#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "secsel/common.hpp"
#include "secsel/lattice.hpp"

namespace secsel {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Attribute values and constraints

struct NumberValue {
  double value = 0.0;
  std::string unit;  // empty = unitless

  friend bool operator==(const NumberValue& a, const NumberValue& b) {
    return a.value == b.value && a.unit == b.unit;
  }
};

using AttributeValue = std::variant<std::string, NumberValue, bool>;

// One fact published by a service: attribute -> value. std::map keys give
// the one-assignment-per-attribute invariant for free.
using Assignments = std::map<std::string, AttributeValue>;

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

inline CmpOp cmp_op_from_string(const std::string& s) {
  if (s == "=" || s == "==") return CmpOp::Eq;
  if (s == "!=" || s == "≠") return CmpOp::Ne;
  if (s == "<") return CmpOp::Lt;
  if (s == "<=" || s == "≤") return CmpOp::Le;
  if (s == ">") return CmpOp::Gt;
  if (s == ">=" || s == "≥") return CmpOp::Ge;
  throw parse_error("unknown comparison operator '" + s + "'");
}

inline const char* to_string(CmpOp op) {
  switch (op) {
    case CmpOp::Eq: return "=";
    case CmpOp::Ne: return "!=";
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
  }
  return "?";
}

struct Constraint {
  std::string attribute;
  CmpOp op = CmpOp::Eq;
  AttributeValue value;
};

// Negation-free boolean expression over constraints.
struct Formula {
  enum class Kind { True, Atom, All, Any };

  Kind kind = Kind::True;
  Constraint atom;                 // Kind::Atom
  std::vector<Formula> children;   // Kind::All / Kind::Any

  static Formula truth() { return Formula{}; }
  static Formula make_atom(Constraint c) {
    Formula f;
    f.kind = Kind::Atom;
    f.atom = std::move(c);
    return f;
  }
  static Formula all_of(std::vector<Formula> fs) {
    Formula f;
    f.kind = Kind::All;
    f.children = std::move(fs);
    return f;
  }
  static Formula any_of(std::vector<Formula> fs) {
    Formula f;
    f.kind = Kind::Any;
    f.children = std::move(fs);
    return f;
  }
};

struct LabelRule {
  std::string property;
  std::string label;
  Formula formula;
};

using LabelRules = std::vector<LabelRule>;

// ---------------------------------------------------------------------------
// SecSLA and user requirements

struct SecSLA {
  std::string service_id;
  std::string service_type;              // Φ
  std::vector<std::string> operations;   // non-empty
  Assignments assignments;

  friend bool operator==(const SecSLA& a, const SecSLA& b) {
    return a.service_id == b.service_id && a.service_type == b.service_type &&
           a.operations == b.operations && a.assignments == b.assignments;
  }
};

struct OperationRequirement {
  double importance = 0.0;  // in (0, 1]
  double deadline_s = 0.0;  // > 0
};

struct TypeRequirements {
  Assignments assignments;                              // survey-derived constraints as facts
  std::map<std::string, double> property_importance;    // ι_p, defaults to 1
  std::map<std::string, OperationRequirement> tau_u;    // required operations
  double loss_budget = 1.0;                             // th_ξ
};

struct UserRequirements {
  std::map<std::string, TypeRequirements> types;  // keyed by service type Φ

  const TypeRequirements& for_type(const std::string& phi) const {
    const auto it = types.find(phi);
    if (it == types.end()) throw config_error("requirements do not cover service type '" + phi + "'");
    return it->second;
  }

  // The budget bounds the episode's total loss across all accepts, so a
  // single value must hold; documents declaring several types must agree.
  double loss_budget() const {
    if (types.empty()) throw config_error("empty requirements document");
    const double b = types.begin()->second.loss_budget;
    for (const auto& [phi, tr] : types) {
      if (tr.loss_budget != b) {
        throw config_error("loss_budget differs across service types ('" + phi + "')");
      }
    }
    return b;
  }
};

// ---------------------------------------------------------------------------
// Evaluation and classification

namespace detail {

// A unitless number compares against anything; two different non-empty
// units never mix.
inline bool numeric_compatible(const NumberValue& a, const NumberValue& b) {
  return a.unit.empty() || b.unit.empty() || a.unit == b.unit;
}

inline bool compare_values(const AttributeValue& have, CmpOp op, const AttributeValue& want) {
  const bool ordering = op == CmpOp::Lt || op == CmpOp::Le || op == CmpOp::Gt || op == CmpOp::Ge;
  const auto* ln = std::get_if<NumberValue>(&have);
  const auto* rn = std::get_if<NumberValue>(&want);
  if (ordering) {
    if (ln == nullptr || rn == nullptr) {
      throw eval_error("ordering comparison on non-numeric attribute value");
    }
    if (!numeric_compatible(*ln, *rn)) {
      throw eval_error("ordering comparison across units '" + ln->unit + "' vs '" + rn->unit + "'");
    }
    switch (op) {
      case CmpOp::Lt: return ln->value < rn->value;
      case CmpOp::Le: return ln->value <= rn->value;
      case CmpOp::Gt: return ln->value > rn->value;
      case CmpOp::Ge: return ln->value >= rn->value;
      default: break;
    }
  }
  bool eq = false;
  if (ln != nullptr && rn != nullptr) {
    eq = numeric_compatible(*ln, *rn) && ln->value == rn->value;
  } else {
    eq = have == want;  // cross-type values are simply unequal
  }
  return op == CmpOp::Eq ? eq : !eq;
}

}  // namespace detail

// An atom holds iff the attribute is assigned and the comparison is true;
// unassigned attributes are unsatisfied, never errors.
inline bool eval_formula(const Assignments& assignments, const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::True:
      return true;
    case Formula::Kind::Atom: {
      const auto it = assignments.find(f.atom.attribute);
      if (it == assignments.end()) return false;
      return detail::compare_values(it->second, f.atom.op, f.atom.value);
    }
    case Formula::Kind::All:
      for (const auto& c : f.children) {
        if (!eval_formula(assignments, c)) return false;
      }
      return true;
    case Formula::Kind::Any:
      for (const auto& c : f.children) {
        if (eval_formula(assignments, c)) return true;
      }
      return false;
  }
  return false;
}

inline const Formula& find_rule(const LabelRules& rules, const std::string& property,
                                const std::string& label) {
  for (const auto& r : rules) {
    if (r.property == property && r.label == label) return r.formula;
  }
  throw config_error("no label rule for property '" + property + "', label '" + label + "'");
}

inline void validate_rules(const LabelRules& rules, const WeightedSecurityLattice& lattice) {
  for (const auto& prop : lattice.properties()) {
    for (const auto& label : prop.labels) {
      const Formula& f = find_rule(rules, prop.id, label);
      if (label == kBottomLabel && f.kind != Formula::Kind::True) {
        throw config_error("bottom label rule for property '" + prop.id + "' must be TRUE");
      }
    }
  }
}

// Per property, the highest label whose rule holds under the assignments.
// Chains make this the unique maximal satisfied class.
inline SecurityClass classify_assignments(const Assignments& assignments, const LabelRules& rules,
                                          const WeightedSecurityLattice& lattice) {
  SecurityClass c;
  c.ranks.reserve(lattice.property_count());
  for (const auto& prop : lattice.properties()) {
    int rank = static_cast<int>(prop.labels.size()) - 1;  // bottom always qualifies
    for (std::size_t i = 0; i < prop.labels.size(); ++i) {
      const Formula& f = find_rule(rules, prop.id, prop.labels[i]);
      if (eval_formula(assignments, f)) {
        rank = static_cast<int>(i);
        break;
      }
    }
    c.ranks.push_back(rank);
  }
  return c;
}

inline SecurityClass classify_service(const SecSLA& sla, const LabelRules& rules,
                                      const WeightedSecurityLattice& lattice) {
  validate_rules(rules, lattice);
  return classify_assignments(sla.assignments, rules, lattice);
}

// λ(u^Φ): same algorithm as service classification, applied to the survey's
// constraint-derived assignments for the given service type.
inline SecurityClass derive_user_class(const UserRequirements& survey, const std::string& phi,
                                       const LabelRules& rules,
                                       const WeightedSecurityLattice& lattice) {
  validate_rules(rules, lattice);
  return classify_assignments(survey.for_type(phi).assignments, rules, lattice);
}

// ---------------------------------------------------------------------------
// JSON documents

namespace detail {

// Parse rejecting duplicate object keys anywhere in the document; nlohmann
// would silently keep the last occurrence otherwise.
inline json parse_json_strict(const std::string& text, const std::string& what) {
  std::vector<std::set<std::string>> stack;
  json::parser_callback_t cb = [&](int /*depth*/, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        stack.emplace_back();
        break;
      case json::parse_event_t::key: {
        const auto key = parsed.get<std::string>();
        if (!stack.back().insert(key).second) {
          throw parse_error(what + ": duplicate key '" + key + "'");
        }
        break;
      }
      case json::parse_event_t::object_end:
        stack.pop_back();
        break;
      default:
        break;
    }
    return true;
  };
  try {
    return json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw parse_error(what + ": " + e.what());
  }
}

inline bool looks_numeric(const std::string& s, double& value, std::string& unit) {
  if (s.empty()) return false;
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  if (*begin == '+' || *begin == '-') ++begin;
  if (begin == end || *begin < '0' || *begin > '9') return false;
  const auto [ptr, ec] = std::from_chars(s.data(), end, value);
  if (ec != std::errc{}) return false;
  for (const char* c = ptr; c != end; ++c) {
    const bool unit_char = (*c >= 'a' && *c <= 'z') || (*c >= 'A' && *c <= 'Z') || *c == '%' || *c == '/';
    if (!unit_char) return false;
  }
  unit.assign(ptr, end);
  return true;
}

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// JSON scalar -> attribute value. Strings shaped like "<number><unit>"
// (e.g. "99.99%", "5ms") become numbers with units; anything else is text.
inline AttributeValue attribute_value_from_json(const json& j, const std::string& ctx) {
  if (j.is_boolean()) return j.get<bool>();
  if (j.is_number()) return NumberValue{j.get<double>(), ""};
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    double value = 0.0;
    std::string unit;
    if (detail::looks_numeric(s, value, unit)) return NumberValue{value, unit};
    return s;
  }
  throw parse_error(ctx + ": attribute value must be a scalar (text, number, or boolean)");
}

inline json attribute_value_to_json(const AttributeValue& v) {
  if (const auto* s = std::get_if<std::string>(&v)) return *s;
  if (const auto* b = std::get_if<bool>(&v)) return *b;
  const auto& n = std::get<NumberValue>(v);
  if (n.unit.empty()) return n.value;
  return detail::format_double(n.value) + n.unit;
}

inline Assignments assignments_from_json(const json& j, const std::string& ctx) {
  if (!j.is_object()) throw parse_error(ctx + ": assignments must be an object");
  Assignments out;
  for (const auto& [attr, value] : j.items()) {
    out.emplace(attr, attribute_value_from_json(value, ctx + ".assignments." + attr));
  }
  return out;
}

inline json assignments_to_json(const Assignments& a) {
  json j = json::object();
  for (const auto& [attr, value] : a) j[attr] = attribute_value_to_json(value);
  return j;
}

inline Formula formula_from_json(const json& j, const std::string& ctx) {
  if (j.is_boolean()) {
    if (!j.get<bool>()) throw parse_error(ctx + ": formula literal must be true");
    return Formula::truth();
  }
  if (!j.is_object() || j.size() != 1) {
    throw parse_error(ctx + ": formula must be true, {all:[...]}, {any:[...]}, or {atom:{...}}");
  }
  const auto& [key, body] = *j.items().begin();
  if (key == "all" || key == "any") {
    if (!body.is_array()) throw parse_error(ctx + "." + key + ": expected an array");
    std::vector<Formula> children;
    children.reserve(body.size());
    for (std::size_t i = 0; i < body.size(); ++i) {
      children.push_back(formula_from_json(body[i], ctx + "." + key + "[" + std::to_string(i) + "]"));
    }
    return key == "all" ? Formula::all_of(std::move(children)) : Formula::any_of(std::move(children));
  }
  if (key == "atom") {
    if (!body.is_object()) throw parse_error(ctx + ".atom: expected an object");
    Constraint c;
    c.attribute = body.at("attribute").get<std::string>();
    c.op = cmp_op_from_string(body.at("op").get<std::string>());
    c.value = attribute_value_from_json(body.at("value"), ctx + ".atom.value");
    return Formula::make_atom(std::move(c));
  }
  throw parse_error(ctx + ": unknown formula node '" + key + "'");
}

inline json formula_to_json(const Formula& f) {
  switch (f.kind) {
    case Formula::Kind::True:
      return true;
    case Formula::Kind::Atom:
      return json{{"atom", {{"attribute", f.atom.attribute},
                            {"op", to_string(f.atom.op)},
                            {"value", attribute_value_to_json(f.atom.value)}}}};
    case Formula::Kind::All:
    case Formula::Kind::Any: {
      json arr = json::array();
      for (const auto& c : f.children) arr.push_back(formula_to_json(c));
      return json{{f.kind == Formula::Kind::All ? "all" : "any", std::move(arr)}};
    }
  }
  return true;
}

inline WeightedSecurityLattice lattice_from_json(const json& j) {
  if (!j.is_object() || !j.contains("properties")) {
    throw parse_error("lattice: expected {properties:[...]}");
  }
  std::vector<SecurityProperty> props;
  for (const auto& pj : j.at("properties")) {
    SecurityProperty p;
    p.id = pj.at("id").get<std::string>();
    p.name = pj.value("name", p.id);
    p.labels = pj.at("labels").get<std::vector<std::string>>();
    p.step_distances = pj.at("step_distances").get<std::vector<double>>();
    props.push_back(std::move(p));
  }
  return WeightedSecurityLattice(std::move(props));
}

inline json lattice_to_json(const WeightedSecurityLattice& lattice) {
  json props = json::array();
  for (const auto& p : lattice.properties()) {
    props.push_back({{"id", p.id},
                     {"name", p.name},
                     {"labels", p.labels},
                     {"step_distances", p.step_distances}});
  }
  return json{{"properties", std::move(props)}};
}

inline LabelRules rules_from_json(const json& j) {
  if (!j.is_array()) throw parse_error("rules: expected an array of {property, label, formula}");
  LabelRules rules;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& rj = j[i];
    const std::string ctx = "rules[" + std::to_string(i) + "]";
    LabelRule r;
    r.property = rj.at("property").get<std::string>();
    r.label = rj.at("label").get<std::string>();
    r.formula = formula_from_json(rj.at("formula"), ctx + ".formula");
    rules.push_back(std::move(r));
  }
  return rules;
}

inline json rules_to_json(const LabelRules& rules) {
  json arr = json::array();
  for (const auto& r : rules) {
    arr.push_back({{"property", r.property}, {"label", r.label}, {"formula", formula_to_json(r.formula)}});
  }
  return arr;
}

// Canonical SLA document, one service per document.
inline SecSLA sla_from_json(const json& j, const std::set<std::string>* known_ops = nullptr) {
  SecSLA sla;
  sla.service_id = j.at("service_id").get<std::string>();
  sla.service_type = j.at("service_type").get<std::string>();
  if (!j.at("operations").is_array() || j.at("operations").empty()) {
    throw parse_error("sla '" + sla.service_id + "': operations must be a non-empty array");
  }
  for (const auto& op : j.at("operations")) {
    const auto name = op.get<std::string>();
    if (std::find(sla.operations.begin(), sla.operations.end(), name) != sla.operations.end()) {
      throw parse_error("sla '" + sla.service_id + "': duplicate operation '" + name + "'");
    }
    if (known_ops != nullptr && known_ops->count(name) == 0) {
      throw parse_error("sla '" + sla.service_id + "': unknown operation '" + name + "'");
    }
    sla.operations.push_back(name);
  }
  sla.assignments = assignments_from_json(j.value("assignments", json::object()), "sla '" + sla.service_id + "'");
  return sla;
}

inline SecSLA parse_sla(const std::string& text, const std::set<std::string>* known_ops = nullptr) {
  return sla_from_json(detail::parse_json_strict(text, "sla document"), known_ops);
}

inline json sla_to_json(const SecSLA& sla) {
  return json{{"service_id", sla.service_id},
              {"service_type", sla.service_type},
              {"operations", sla.operations},
              {"assignments", assignments_to_json(sla.assignments)}};
}

inline std::string serialize_sla(const SecSLA& sla) { return sla_to_json(sla).dump(2); }

// Survey document: {"service_types": {Φ: {assignments, importance, tau_u, loss_budget}}}
inline UserRequirements survey_from_json(const json& j) {
  if (!j.is_object() || !j.contains("service_types")) {
    throw parse_error("survey: expected {service_types:{...}}");
  }
  UserRequirements req;
  for (const auto& [phi, tj] : j.at("service_types").items()) {
    const std::string ctx = "survey type '" + phi + "'";
    TypeRequirements tr;
    tr.assignments = assignments_from_json(tj.value("assignments", json::object()), ctx);
    if (tj.contains("importance")) {
      for (const auto& [prop, iota] : tj.at("importance").items()) {
        const double v = iota.get<double>();
        if (!(v > 0.0) || v > 1.0) throw parse_error(ctx + ": importance for '" + prop + "' must be in (0,1]");
        tr.property_importance[prop] = v;
      }
    }
    const json tau = tj.value("tau_u", json::object());
    for (const auto& [op, oj] : tau.items()) {
      OperationRequirement orq;
      orq.importance = oj.at("importance").get<double>();
      orq.deadline_s = oj.at("deadline_s").get<double>();
      if (!(orq.importance > 0.0) || orq.importance > 1.0) {
        throw parse_error(ctx + ": operation '" + op + "' importance must be in (0,1]");
      }
      if (!(orq.deadline_s > 0.0)) {
        throw parse_error(ctx + ": operation '" + op + "' deadline must be > 0");
      }
      tr.tau_u[op] = orq;
    }
    tr.loss_budget = tj.value("loss_budget", 1.0);
    if (!(tr.loss_budget > 0.0)) throw parse_error(ctx + ": loss_budget must be > 0");
    req.types[phi] = std::move(tr);
  }
  if (req.types.empty()) throw parse_error("survey: no service types declared");
  return req;
}

inline UserRequirements parse_survey(const std::string& text) {
  return survey_from_json(detail::parse_json_strict(text, "survey document"));
}

inline json survey_to_json(const UserRequirements& req) {
  json types = json::object();
  for (const auto& [phi, tr] : req.types) {
    json tj;
    tj["assignments"] = assignments_to_json(tr.assignments);
    json imp = json::object();
    for (const auto& [prop, iota] : tr.property_importance) imp[prop] = iota;
    tj["importance"] = std::move(imp);
    json tau = json::object();
    for (const auto& [op, orq] : tr.tau_u) {
      tau[op] = {{"importance", orq.importance}, {"deadline_s", orq.deadline_s}};
    }
    tj["tau_u"] = std::move(tau);
    tj["loss_budget"] = tr.loss_budget;
    types[phi] = std::move(tj);
  }
  return json{{"service_types", std::move(types)}};
}

}  // namespace secsel
