#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "secsel/common.hpp"

namespace secsel {

// Reserved name of the lowest label of every property chain.
inline constexpr const char* kBottomLabel = "-";

// One abstract protection dimension with an ordered chain of labels
// (highest first, bottom "-" last) and a positive distance per adjacent
// label pair.
struct SecurityProperty {
  std::string id;
  std::string name;
  std::vector<std::string> labels;
  std::vector<double> step_distances;  // size labels.size() - 1
};

// One label per property, stored as rank indices into each property's chain.
// Rank 0 is the highest label; larger rank means weaker.
struct SecurityClass {
  std::vector<int> ranks;

  friend bool operator==(const SecurityClass& a, const SecurityClass& b) {
    return a.ranks == b.ranks;
  }
  friend bool operator!=(const SecurityClass& a, const SecurityClass& b) { return !(a == b); }
};

// How to charge loss when the service class is not dominated by the
// required class component-wise.
enum class LossMode {
  Shortfall,    // sum chain distances over deficient components only
  StrictPaper,  // zero unless the required class strictly dominates the service
};

inline LossMode loss_mode_from_string(const std::string& s) {
  if (s == "shortfall") return LossMode::Shortfall;
  if (s == "strict-paper") return LossMode::StrictPaper;
  throw config_error("unknown loss mode '" + s + "' (expected shortfall|strict-paper)");
}

inline const char* to_string(LossMode m) {
  return m == LossMode::Shortfall ? "shortfall" : "strict-paper";
}

// Partially ordered set of all label combinations, with class distances
// induced by the per-chain step weights. Immutable after construction.
class WeightedSecurityLattice {
 public:
  WeightedSecurityLattice() = default;

  explicit WeightedSecurityLattice(std::vector<SecurityProperty> props)
      : props_(std::move(props)) {
    if (props_.empty()) throw config_error("lattice needs at least one property");
    cum_.resize(props_.size());
    for (std::size_t p = 0; p < props_.size(); ++p) {
      const auto& prop = props_[p];
      if (prop.id.empty()) throw config_error("property with empty id");
      for (std::size_t q = 0; q < p; ++q) {
        if (props_[q].id == prop.id) throw config_error("duplicate property id '" + prop.id + "'");
      }
      if (prop.labels.size() < 2) {
        throw config_error("property '" + prop.id + "': label chain must have at least 2 labels");
      }
      if (prop.labels.back() != kBottomLabel) {
        throw config_error("property '" + prop.id + "': last label must be the bottom label '-'");
      }
      for (std::size_t i = 0; i + 1 < prop.labels.size(); ++i) {
        if (prop.labels[i] == kBottomLabel) {
          throw config_error("property '" + prop.id + "': label '-' is reserved for the chain bottom");
        }
        for (std::size_t j = i + 1; j < prop.labels.size(); ++j) {
          if (prop.labels[i] == prop.labels[j]) {
            throw config_error("property '" + prop.id + "': duplicate label '" + prop.labels[i] + "'");
          }
        }
      }
      if (prop.step_distances.size() != prop.labels.size() - 1) {
        throw config_error("property '" + prop.id + "': need one step distance per adjacent label pair");
      }
      for (double d : prop.step_distances) {
        if (!(d > 0.0)) throw config_error("property '" + prop.id + "': step distances must be > 0");
      }
      // Cumulative distance from rank 0 down to each rank.
      auto& cum = cum_[p];
      cum.resize(prop.labels.size(), 0.0);
      for (std::size_t i = 1; i < cum.size(); ++i) {
        cum[i] = cum[i - 1] + prop.step_distances[i - 1];
      }
      rho_max_ += cum.back();
    }
    if (!(rho_max_ > 0.0)) throw config_error("degenerate lattice: rho_max must be > 0");
    class_count_ = 1;
    for (const auto& prop : props_) {
      const auto n = prop.labels.size();
      if (class_count_ > std::numeric_limits<std::size_t>::max() / n) {
        class_count_ = std::numeric_limits<std::size_t>::max();  // saturate
        break;
      }
      class_count_ *= n;
    }
  }

  bool empty() const { return props_.empty(); }
  const std::vector<SecurityProperty>& properties() const { return props_; }
  std::size_t property_count() const { return props_.size(); }
  std::size_t class_count() const { return class_count_; }
  double rho_max() const { return rho_max_; }

  SecurityClass top() const {
    return SecurityClass{std::vector<int>(props_.size(), 0)};
  }

  SecurityClass bottom() const {
    SecurityClass c;
    c.ranks.reserve(props_.size());
    for (const auto& p : props_) c.ranks.push_back(static_cast<int>(p.labels.size()) - 1);
    return c;
  }

  int rank_of(std::size_t property, const std::string& label) const {
    const auto& chain = props_.at(property).labels;
    const auto it = std::find(chain.begin(), chain.end(), label);
    if (it == chain.end()) {
      throw config_error("unknown label '" + label + "' for property '" + props_[property].id + "'");
    }
    return static_cast<int>(it - chain.begin());
  }

  std::size_t property_index(const std::string& id) const {
    for (std::size_t p = 0; p < props_.size(); ++p) {
      if (props_[p].id == id) return p;
    }
    throw config_error("unknown property '" + id + "'");
  }

  SecurityClass class_of(const std::vector<std::string>& labels) const {
    if (labels.size() != props_.size()) {
      throw structural_error("class label list arity does not match lattice properties");
    }
    SecurityClass c;
    c.ranks.reserve(labels.size());
    for (std::size_t p = 0; p < labels.size(); ++p) c.ranks.push_back(rank_of(p, labels[p]));
    return c;
  }

  std::vector<std::string> labels_of(const SecurityClass& c) const {
    check_class(c);
    std::vector<std::string> out;
    out.reserve(c.ranks.size());
    for (std::size_t p = 0; p < c.ranks.size(); ++p) {
      out.push_back(props_[p].labels[static_cast<std::size_t>(c.ranks[p])]);
    }
    return out;
  }

  void check_class(const SecurityClass& c) const {
    if (c.ranks.size() != props_.size()) {
      throw structural_error("security class arity does not match lattice properties");
    }
    for (std::size_t p = 0; p < c.ranks.size(); ++p) {
      if (c.ranks[p] < 0 || c.ranks[p] >= static_cast<int>(props_[p].labels.size())) {
        throw structural_error("security class rank out of range for property '" + props_[p].id + "'");
      }
    }
  }

  // c1 >= c2 iff every component of c1 sits at or above the matching
  // component of c2 in its chain.
  bool dominates(const SecurityClass& c1, const SecurityClass& c2) const {
    check_class(c1);
    check_class(c2);
    for (std::size_t p = 0; p < props_.size(); ++p) {
      if (c1.ranks[p] > c2.ranks[p]) return false;
    }
    return true;
  }

  // Distance along one property's chain between two ranks.
  double chain_distance(std::size_t property, int r1, int r2) const {
    const auto& cum = cum_.at(property);
    return std::abs(cum[static_cast<std::size_t>(r1)] - cum[static_cast<std::size_t>(r2)]);
  }

  // Sum of per-property chain distances. Equals the shortest-path distance
  // over the lattice's Hasse diagram with step-weighted edges.
  double class_distance(const SecurityClass& c1, const SecurityClass& c2) const {
    check_class(c1);
    check_class(c2);
    double d = 0.0;
    for (std::size_t p = 0; p < props_.size(); ++p) {
      d += chain_distance(p, c1.ranks[p], c2.ranks[p]);
    }
    return d;
  }

  // Cost of lifting the service class up to the required class, accrued
  // only on properties where the service falls short.
  double security_loss(const SecurityClass& service, const SecurityClass& required,
                       LossMode mode = LossMode::Shortfall) const {
    check_class(service);
    check_class(required);
    if (mode == LossMode::StrictPaper) {
      const bool strictly_below = dominates(required, service) && !(service == required);
      if (!strictly_below) return 0.0;
      return class_distance(service, required);
    }
    double loss = 0.0;
    for (std::size_t p = 0; p < props_.size(); ++p) {
      if (service.ranks[p] > required.ranks[p]) {
        loss += chain_distance(p, service.ranks[p], required.ranks[p]);
      }
    }
    return loss;
  }

  // Loss scaled into [0, 1] by the top-to-bottom distance, clamped at 1.
  double normalized_security_loss(const SecurityClass& service, const SecurityClass& required,
                                  LossMode mode = LossMode::Shortfall) const {
    if (!(rho_max_ > 0.0)) throw config_error("normalized loss undefined: rho_max is 0");
    return std::min(security_loss(service, required, mode) / rho_max_, 1.0);
  }

  // New lattice with property p's step distances scaled by importance[p]
  // (defaults to 1). Importance values must lie in (0, 1].
  WeightedSecurityLattice scaled(const std::map<std::string, double>& importance) const {
    std::vector<SecurityProperty> props = props_;
    for (const auto& [id, iota] : importance) {
      if (!(iota > 0.0) || iota > 1.0) {
        throw config_error("property importance for '" + id + "' must be in (0, 1]");
      }
      auto& prop = props[property_index(id)];
      for (double& d : prop.step_distances) d *= iota;
    }
    return WeightedSecurityLattice(std::move(props));
  }

  // Visit every class of the lattice. Only sensible for small lattices;
  // generation walks chains per property, so the cost is class_count().
  template <class F>
  void for_each_class(F&& fn) const {
    SecurityClass c{std::vector<int>(props_.size(), 0)};
    while (true) {
      fn(static_cast<const SecurityClass&>(c));
      std::size_t p = props_.size();
      while (p > 0) {
        --p;
        if (++c.ranks[p] < static_cast<int>(props_[p].labels.size())) break;
        c.ranks[p] = 0;
        if (p == 0) return;
      }
    }
  }

 private:
  std::vector<SecurityProperty> props_;
  std::vector<std::vector<double>> cum_;  // per property: distance from rank 0 to rank i
  double rho_max_ = 0.0;
  std::size_t class_count_ = 0;
};

inline double rho_max(const WeightedSecurityLattice& lattice) { return lattice.rho_max(); }

// The CIA-triad lattice used throughout the running examples: three
// properties, four labels each, unit step weights.
inline WeightedSecurityLattice make_cia_lattice(double step = 1.0) {
  auto chain = [step](std::string id, std::string name, std::string prefix) {
    SecurityProperty p;
    p.id = std::move(id);
    p.name = std::move(name);
    p.labels = {"H" + prefix, "M" + prefix, "L" + prefix, kBottomLabel};
    p.step_distances = {step, step, step};
    return p;
  };
  return WeightedSecurityLattice({chain("C", "Confidentiality", "C"),
                                  chain("I", "Integrity", "I"),
                                  chain("A", "Availability", "A")});
}

}  // namespace secsel
