#pragma once
// Feeder, damage and crew data model plus topology helpers.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdio>
#include <map>
#include <memory>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace gridmend {

using PhaseMask = std::array<bool, 3>;
using PhaseVec = std::array<double, 3>;
using Matrix3 = std::array<std::array<double, 3>, 3>;

inline constexpr std::array<char, 3> kPhaseLetters = {'a', 'b', 'c'};

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Bus {
  std::string id;
  PhaseMask phases{true, true, true};
  PhaseVec p_demand{};  // diversified, kW
  PhaseVec q_demand{};  // kVAr
  PhaseVec p_undiversified{};
  PhaseVec q_undiversified{};
  std::vector<double> profile;  // per-step multiplier, last value held
  double priority = 1.0;
  bool critical = false;
  bool substation = false;
  PhaseVec p_dg_max{};
  PhaseVec q_dg_max{};
  double u_min = 0.9025;  // squared p.u.
  double u_max = 1.1025;

  bool has_dg() const {
    for (int p = 0; p < 3; ++p)
      if (p_dg_max[p] > 0 || q_dg_max[p] > 0) return true;
    return false;
  }
  double multiplier(int step) const {
    if (profile.empty()) return 1.0;
    const std::size_t idx = step <= 1 ? 0 : static_cast<std::size_t>(step - 1);
    return profile[std::min(idx, profile.size() - 1)];
  }
  double pd(int phase, int step) const { return p_demand[phase] * multiplier(step); }
  double qd(int phase, int step) const { return q_demand[phase] * multiplier(step); }
  double pu(int phase, int step) const { return p_undiversified[phase] * multiplier(step); }
  double qu(int phase, int step) const { return q_undiversified[phase] * multiplier(step); }
};

enum class LineKind { Plain, Switch, Regulator, Breaker };

inline const char* to_string(LineKind k) {
  switch (k) {
    case LineKind::Plain: return "plain";
    case LineKind::Switch: return "switch";
    case LineKind::Regulator: return "regulator";
    case LineKind::Breaker: return "breaker";
  }
  return "plain";
}

struct Line {
  std::string id;
  std::string from;
  std::string to;
  PhaseMask phases{true, true, true};
  Matrix3 r{};  // ohm per unit length, or p.u.
  Matrix3 x{};
  double length = 1.0;
  double p_max = 1e4;  // kW per phase, both directions
  double p_min = 1e4;
  double q_max = 1e4;
  double q_min = 1e4;
  LineKind kind = LineKind::Plain;
  PhaseVec ratio{1.0, 1.0, 1.0};

  bool operable() const { return kind == LineKind::Switch || kind == LineKind::Breaker; }
};

struct DamageRecord {
  std::string line;
  std::map<std::string, double> repair_hours;  // per line crew
  std::map<std::string, double> tree_hours;    // per tree crew; empty unless tree-blocked
  std::vector<int> resources;

  bool tree_blocked() const { return !tree_hours.empty(); }
};

enum class CrewKind { Line, Tree };

struct Crew {
  std::string id;
  CrewKind kind = CrewKind::Line;
  std::string depot;
  std::string start;
  std::string end;
  double capacity = 0.0;
};

struct Depot {
  std::string id;
  std::vector<double> stock;
};

struct TravelMatrix {
  std::vector<std::string> nodes;
  std::vector<std::vector<double>> hours;
  std::vector<std::vector<double>> km;
};

struct ScenarioParams {
  double dt_hours = 1.0;
  int horizon = 0;  // 0 = derive
  double clpu_hours = 1.0;
  double switch_cost = 8.0;
  double shed_cost = 14.0;
  double critical_priority = 10.0;
  std::vector<std::string> resource_names;
  std::vector<double> resource_weights;
  std::vector<std::string> initially_open;
  std::string impedance_unit = "ohm_per_length";
  double base_kv = 2.4017771;  // line-to-neutral
  double base_kva = 1000.0;    // per phase
  double speed_kmh = 40.0;
};

/// Validated restoration scenario. Treated as immutable once `finalize()`
/// has run; share it through `std::shared_ptr<const Scenario>`.
class Scenario {
 public:
  std::vector<Bus> buses;
  std::vector<Line> lines;
  std::vector<DamageRecord> damages;
  std::vector<Crew> crews;
  std::vector<Depot> depots;
  TravelMatrix travel;
  ScenarioParams params;

  /// Validates and builds lookup tables. Throws ScenarioError naming the
  /// offending entity.
  void finalize();

  int bus_index(const std::string& id) const { return lookup(bus_idx_, id, "bus"); }
  int line_index(const std::string& id) const { return lookup(line_idx_, id, "line"); }
  int crew_index(const std::string& id) const { return lookup(crew_idx_, id, "crew"); }
  int depot_index(const std::string& id) const { return lookup(depot_idx_, id, "depot"); }
  int node_index(const std::string& id) const { return lookup(node_idx_, id, "node"); }
  int damage_index(const std::string& line_id) const { return lookup(damage_idx_, line_id, "damage"); }
  bool has_bus(const std::string& id) const { return bus_idx_.count(id) > 0; }
  bool has_line(const std::string& id) const { return line_idx_.count(id) > 0; }
  bool is_damaged(int line) const { return line_damage_[line] >= 0; }
  int damage_of_line(int line) const { return line_damage_[line]; }

  /// N: damaged components (document order) followed by depots.
  const std::vector<std::string>& nodes() const { return nodes_; }
  bool node_is_depot(int n) const { return n >= static_cast<int>(damages.size()); }
  /// Nodes a crew may visit: damages it can work on plus every depot.
  std::vector<int> crew_nodes(int crew) const;

  double travel_hours(int n1, int n2) const { return travel_h_[n1][n2]; }
  double distance_km(int n1, int n2) const { return travel_km_[n1][n2]; }
  double repair_hours(int damage, int crew) const;

  int clpu_steps() const { return clpu_steps_; }
  int horizon() const { return horizon_; }
  int default_horizon() const;
  int resource_count() const { return static_cast<int>(params.resource_weights.size()); }
  double shed_cost(int bus) const { return params.shed_cost * buses[bus].priority; }
  bool initially_closed(int line) const { return initially_open_.count(line) == 0; }

  std::vector<int> line_crews() const { return crews_of(CrewKind::Line); }
  std::vector<int> tree_crews() const { return crews_of(CrewKind::Tree); }

  /// Replaces line-crew repair times for one damage; re-derives the horizon
  /// when it was not pinned by the document.
  Scenario with_repair_hours(const std::string& line_id, double hours) const;
  /// Same scenario with the horizon pinned to `steps`.
  Scenario with_horizon(int steps) const;
  bool horizon_pinned() const { return horizon_pinned_; }

 private:
  static int lookup(const std::unordered_map<std::string, int>& m, const std::string& id,
                    const char* what) {
    auto it = m.find(id);
    if (it == m.end()) throw ScenarioError(std::string("unknown ") + what + " '" + id + "'");
    return it->second;
  }
  std::vector<int> crews_of(CrewKind k) const {
    std::vector<int> out;
    for (int c = 0; c < static_cast<int>(crews.size()); ++c)
      if (crews[c].kind == k) out.push_back(c);
    return out;
  }

  std::unordered_map<std::string, int> bus_idx_, line_idx_, crew_idx_, depot_idx_, node_idx_,
      damage_idx_;
  std::vector<int> line_damage_;
  std::vector<std::string> nodes_;
  std::vector<std::vector<double>> travel_h_, travel_km_;
  std::set<int> initially_open_;
  int clpu_steps_ = 1;
  int horizon_ = 1;
  bool horizon_pinned_ = false;
};

// ---------------------------------------------------------------------------
// Validation

namespace detail {

inline bool valid_id(const std::string& s) {
  if (s.empty()) return false;
  return std::all_of(s.begin(), s.end(), [](char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_' || ch == '.';
  });
}

inline std::string phase_string(const PhaseMask& m) {
  std::string s;
  for (int p = 0; p < 3; ++p)
    if (m[p]) s += kPhaseLetters[p];
  return s;
}

}  // namespace detail

inline void Scenario::finalize() {
  auto fail = [](const std::string& msg) { throw ScenarioError(msg); };
  bus_idx_.clear();
  line_idx_.clear();
  crew_idx_.clear();
  depot_idx_.clear();
  node_idx_.clear();
  damage_idx_.clear();

  if (params.dt_hours <= 0) fail("params: dt_hours must be positive");
  const double lam = params.clpu_hours / params.dt_hours;
  if (std::abs(lam - std::round(lam)) > 1e-9 || std::round(lam) < 1)
    fail("params: clpu_hours must be a positive multiple of dt_hours");
  clpu_steps_ = static_cast<int>(std::round(lam));
  if (params.resource_names.size() != params.resource_weights.size())
    fail("params: resource_names and resource_weights differ in length");
  if (params.impedance_unit != "ohm_per_length" && params.impedance_unit != "pu")
    fail("params: impedance_unit must be 'ohm_per_length' or 'pu'");
  if (params.base_kv <= 0 || params.base_kva <= 0) fail("params: base_kv/base_kva must be positive");

  for (int i = 0; i < static_cast<int>(buses.size()); ++i) {
    const Bus& b = buses[i];
    if (!detail::valid_id(b.id)) fail("bus '" + b.id + "': invalid id");
    if (!bus_idx_.emplace(b.id, i).second) fail("bus '" + b.id + "': duplicate id");
    if (!(b.u_min < b.u_max)) fail("bus '" + b.id + "': u_min must be below u_max");
    if (b.u_min < 0) fail("bus '" + b.id + "': negative voltage bound");
    for (int p = 0; p < 3; ++p) {
      for (double v : {b.p_demand[p], b.q_demand[p], b.p_undiversified[p], b.q_undiversified[p],
                       b.p_dg_max[p], b.q_dg_max[p]})
        if (v < 0) fail("bus '" + b.id + "': negative demand or rating");
      if (!b.phases[p] && (b.p_demand[p] != 0 || b.q_demand[p] != 0 || b.p_undiversified[p] != 0 ||
                           b.q_undiversified[p] != 0 || b.p_dg_max[p] != 0 || b.q_dg_max[p] != 0))
        fail("bus '" + b.id + "': demand or rating on absent phase " +
             std::string(1, kPhaseLetters[p]));
    }
    for (double m : b.profile)
      if (m < 0) fail("bus '" + b.id + "': negative profile multiplier");
    if (b.priority <= 0) fail("bus '" + b.id + "': priority must be positive");
  }

  line_damage_.assign(lines.size(), -1);
  for (int k = 0; k < static_cast<int>(lines.size()); ++k) {
    const Line& l = lines[k];
    if (!detail::valid_id(l.id)) fail("line '" + l.id + "': invalid id");
    if (!line_idx_.emplace(l.id, k).second) fail("line '" + l.id + "': duplicate id");
    auto fb = bus_idx_.find(l.from);
    auto tb = bus_idx_.find(l.to);
    if (fb == bus_idx_.end()) fail("line '" + l.id + "': dangling from-bus '" + l.from + "'");
    if (tb == bus_idx_.end()) fail("line '" + l.id + "': dangling to-bus '" + l.to + "'");
    if (fb->second == tb->second) fail("line '" + l.id + "': self loop");
    bool any = false;
    for (int p = 0; p < 3; ++p) {
      if (!l.phases[p]) continue;
      any = true;
      if (!buses[fb->second].phases[p] || !buses[tb->second].phases[p])
        fail("line '" + l.id + "': phase " + std::string(1, kPhaseLetters[p]) +
             " not present on both end buses");
    }
    if (!any) fail("line '" + l.id + "': no phases");
    if (l.length <= 0) fail("line '" + l.id + "': length must be positive");
    if (l.p_max < 0 || l.p_min < 0 || l.q_max < 0 || l.q_min < 0)
      fail("line '" + l.id + "': flow limits are magnitudes and must be nonnegative");
    if (l.kind == LineKind::Regulator)
      for (int p = 0; p < 3; ++p)
        if (l.phases[p] && !(l.ratio[p] > 0)) fail("line '" + l.id + "': regulator ratio must be > 0");
  }

  for (int c = 0; c < static_cast<int>(crews.size()); ++c)
    if (!detail::valid_id(crews[c].id) || !crew_idx_.emplace(crews[c].id, c).second)
      fail("crew '" + crews[c].id + "': invalid or duplicate id");
  const int nres = resource_count();
  for (int w = 0; w < static_cast<int>(depots.size()); ++w) {
    const Depot& d = depots[w];
    if (!detail::valid_id(d.id) || !depot_idx_.emplace(d.id, w).second)
      fail("depot '" + d.id + "': invalid or duplicate id");
    if (static_cast<int>(d.stock.size()) != nres)
      fail("depot '" + d.id + "': stock must list every resource type");
    for (double s : d.stock)
      if (s < 0) fail("depot '" + d.id + "': negative stock");
  }
  if (depots.empty()) fail("scenario needs at least one depot");

  for (auto& c : crews) {
    if (c.start.empty()) c.start = c.depot;
    if (c.end.empty()) c.end = c.depot;
    for (const auto* ref : {&c.depot, &c.start, &c.end})
      if (!depot_idx_.count(*ref)) fail("crew '" + c.id + "': dangling depot '" + *ref + "'");
    if (c.capacity < 0) fail("crew '" + c.id + "': negative capacity");
  }

  for (int m = 0; m < static_cast<int>(damages.size()); ++m) {
    DamageRecord& d = damages[m];
    auto li = line_idx_.find(d.line);
    if (li == line_idx_.end()) fail("damage: dangling line '" + d.line + "'");
    if (line_damage_[li->second] >= 0) fail("damage '" + d.line + "': listed twice");
    const LineKind kind = lines[li->second].kind;
    if (kind != LineKind::Plain) fail("damage '" + d.line + "': only plain lines may be damaged");
    line_damage_[li->second] = m;
    damage_idx_.emplace(d.line, m);
    if (depot_idx_.count(d.line)) fail("damage '" + d.line + "': id collides with a depot");
    if (static_cast<int>(d.resources.size()) != nres)
      fail("damage '" + d.line + "': resources must list every resource type");
    for (int r : d.resources)
      if (r < 0) fail("damage '" + d.line + "': negative resource demand");
    for (const auto& [cid, h] : d.repair_hours) {
      auto ci = crew_idx_.find(cid);
      if (ci == crew_idx_.end()) fail("damage '" + d.line + "': dangling crew '" + cid + "'");
      if (crews[ci->second].kind != CrewKind::Line)
        fail("damage '" + d.line + "': repair time given for tree crew '" + cid + "'");
      if (!(h > 0)) fail("damage '" + d.line + "': repair time must be positive");
    }
    for (int c : line_crews())
      if (!d.repair_hours.count(crews[c].id))
        fail("damage '" + d.line + "': missing repair time for crew '" + crews[c].id + "'");
    for (const auto& [cid, h] : d.tree_hours) {
      auto ci = crew_idx_.find(cid);
      if (ci == crew_idx_.end()) fail("damage '" + d.line + "': dangling crew '" + cid + "'");
      if (crews[ci->second].kind != CrewKind::Tree)
        fail("damage '" + d.line + "': clearing time given for line crew '" + cid + "'");
      if (!(h > 0)) fail("damage '" + d.line + "': clearing time must be positive");
    }
    if (d.tree_blocked())
      for (int c : tree_crews())
        if (!d.tree_hours.count(crews[c].id))
          fail("damage '" + d.line + "': missing clearing time for crew '" + crews[c].id + "'");
  }
  if (!damages.empty() && line_crews().empty()) fail("scenario has damage but no line crews");
  for (const auto& d : damages)
    if (d.tree_blocked() && tree_crews().empty())
      fail("damage '" + d.line + "': tree-blocked but no tree crews");

  nodes_.clear();
  for (const auto& d : damages) nodes_.push_back(d.line);
  for (const auto& w : depots) nodes_.push_back(w.id);
  for (int n = 0; n < static_cast<int>(nodes_.size()); ++n) node_idx_[nodes_[n]] = n;

  // Travel data is re-indexed onto N.
  const std::size_t nn = nodes_.size();
  if (travel.nodes.size() != travel.hours.size())
    fail("travel: hours matrix does not match node list");
  std::vector<int> map(travel.nodes.size(), -1);
  for (std::size_t a = 0; a < travel.nodes.size(); ++a) {
    auto it = node_idx_.find(travel.nodes[a]);
    if (it == node_idx_.end()) fail("travel: dangling node '" + travel.nodes[a] + "'");
    map[a] = it->second;
  }
  travel_h_.assign(nn, std::vector<double>(nn, -1.0));
  travel_km_.assign(nn, std::vector<double>(nn, -1.0));
  const bool has_km = !travel.km.empty();
  if (has_km && travel.km.size() != travel.nodes.size())
    fail("travel: km matrix does not match node list");
  for (std::size_t a = 0; a < travel.nodes.size(); ++a) {
    if (travel.hours[a].size() != travel.nodes.size() ||
        (has_km && travel.km[a].size() != travel.nodes.size()))
      fail("travel: matrix row for '" + travel.nodes[a] + "' has wrong length");
    for (std::size_t b = 0; b < travel.nodes.size(); ++b) {
      travel_h_[map[a]][map[b]] = travel.hours[a][b];
      travel_km_[map[a]][map[b]] =
          has_km ? travel.km[a][b] : travel.hours[a][b] * params.speed_kmh;
    }
  }
  for (std::size_t a = 0; a < nn; ++a)
    for (std::size_t b = 0; b < nn; ++b) {
      const std::string tag = nodes_[a] + "," + nodes_[b];
      if (travel_h_[a][b] < 0 || travel_km_[a][b] < 0)
        fail("travel: missing or negative entry (" + tag + ")");
      if (a == b && (travel_h_[a][b] != 0 || travel_km_[a][b] != 0))
        fail("travel: nonzero diagonal at '" + nodes_[a] + "'");
      if (std::abs(travel_h_[a][b] - travel_h_[b][a]) > 1e-9 ||
          std::abs(travel_km_[a][b] - travel_km_[b][a]) > 1e-9)
        fail("travel: asymmetric entry (" + tag + ")");
    }

  initially_open_.clear();
  for (const auto& id : params.initially_open) {
    auto it = line_idx_.find(id);
    if (it == line_idx_.end()) fail("params.initially_open: dangling line '" + id + "'");
    if (!lines[it->second].operable()) fail("params.initially_open: line '" + id + "' is not a switch");
    initially_open_.insert(it->second);
  }

  for (auto& b : buses)
    if (b.critical && b.priority == 1.0) b.priority = params.critical_priority;

  horizon_pinned_ = params.horizon > 0;
  horizon_ = horizon_pinned_ ? params.horizon : default_horizon();
  if (horizon_ < 1) fail("params: horizon must be at least 1");

  // Each damage must be completable inside the horizon by some crew.
  const double span = horizon_ * params.dt_hours;
  for (int m = 0; m < static_cast<int>(damages.size()); ++m) {
    double best = 1e300;
    double tree_ready = 0.0;
    if (damages[m].tree_blocked()) {
      tree_ready = 1e300;
      for (int c : tree_crews())
        tree_ready = std::min(tree_ready, travel_hours(node_index(crews[c].start), m) +
                                              damages[m].tree_hours.at(crews[c].id));
    }
    for (int c : line_crews())
      best = std::min(best, std::max(travel_hours(node_index(crews[c].start), m), tree_ready) +
                                repair_hours(m, c));
    if (best > span + 1e-9)
      fail("params: horizon too short to repair '" + damages[m].line + "'");
  }
}

inline std::vector<int> Scenario::crew_nodes(int crew) const {
  std::vector<int> out;
  const bool tree = crews[crew].kind == CrewKind::Tree;
  for (int m = 0; m < static_cast<int>(damages.size()); ++m)
    if (!tree || damages[m].tree_blocked()) out.push_back(m);
  for (int w = 0; w < static_cast<int>(depots.size()); ++w)
    out.push_back(static_cast<int>(damages.size()) + w);
  return out;
}

inline double Scenario::repair_hours(int damage, int crew) const {
  const auto& d = damages[damage];
  const auto& id = crews[crew].id;
  if (crews[crew].kind == CrewKind::Line) return d.repair_hours.at(id);
  auto it = d.tree_hours.find(id);
  return it == d.tree_hours.end() ? 0.0 : it->second;
}

inline int Scenario::default_horizon() const {
  double total = 0.0;
  double max_leg = 0.0;
  for (const auto& row : travel_h_)
    for (double v : row) max_leg = std::max(max_leg, v);
  int legs = 2;
  for (const auto& d : damages) {
    double mr = 0.0;
    for (const auto& [c, h] : d.repair_hours) mr = std::max(mr, h);
    double mt = 0.0;
    for (const auto& [c, h] : d.tree_hours) mt = std::max(mt, h);
    total += mr + mt;
    legs += d.tree_blocked() ? 2 : 1;
  }
  total += legs * max_leg;
  return static_cast<int>(std::ceil(total / params.dt_hours - 1e-9)) + 2;
}

inline Scenario Scenario::with_repair_hours(const std::string& line_id, double hours) const {
  Scenario s = *this;
  auto& d = s.damages.at(damage_index(line_id));
  for (auto& [c, h] : d.repair_hours) h = hours;
  if (!horizon_pinned_) s.params.horizon = 0;
  s.finalize();
  if (!horizon_pinned_) {
    // The horizon never shrinks across updates so earlier plans stay indexable.
    s.horizon_ = std::max(s.horizon_, horizon_);
  }
  return s;
}

inline Scenario Scenario::with_horizon(int steps) const {
  Scenario s = *this;
  s.params.horizon = steps;
  s.finalize();
  return s;
}

// ---------------------------------------------------------------------------
// JSON document I/O

namespace detail {

inline PhaseMask parse_phases(const std::string& s, const std::string& where) {
  PhaseMask m{false, false, false};
  for (char ch : s) {
    const auto it = std::find(kPhaseLetters.begin(), kPhaseLetters.end(), ch);
    if (it == kPhaseLetters.end()) throw ScenarioError(where + ": bad phase letter '" + ch + "'");
    m[it - kPhaseLetters.begin()] = true;
  }
  return m;
}

inline PhaseVec phase_vec(const nlohmann::json& j, const char* key, const std::string& where,
                          PhaseVec dflt = {}) {
  if (!j.contains(key)) return dflt;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw ScenarioError(where + ": '" + key + "' needs 3 entries");
  PhaseVec out{};
  for (int p = 0; p < 3; ++p) {
    if (!v[p].is_number()) throw ScenarioError(where + ": '" + key + "' entries must be numbers");
    out[p] = v[p].get<double>();
  }
  return out;
}

inline Matrix3 matrix3(const nlohmann::json& j, const char* key, const std::string& where) {
  Matrix3 m{};
  if (!j.contains(key)) return m;
  const auto& v = j.at(key);
  if (!v.is_array() || v.size() != 3) throw ScenarioError(where + ": '" + key + "' must be 3x3");
  for (int a = 0; a < 3; ++a) {
    if (!v[a].is_array() || v[a].size() != 3)
      throw ScenarioError(where + ": '" + key + "' must be 3x3");
    for (int b = 0; b < 3; ++b) m[a][b] = v[a][b].get<double>();
  }
  return m;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T dflt) {
  return j.contains(key) ? j.at(key).get<T>() : dflt;
}

inline std::map<std::string, double> hours_map(const nlohmann::json& v, const std::vector<Crew>& crews,
                                               CrewKind kind) {
  std::map<std::string, double> out;
  if (v.is_number()) {
    for (const auto& c : crews)
      if (c.kind == kind) out[c.id] = v.get<double>();
  } else if (v.is_object()) {
    for (const auto& [k, h] : v.items()) out[k] = h.get<double>();
  } else if (!v.is_null()) {
    throw ScenarioError("damage: hours must be a number or a crew->hours object");
  }
  return out;
}

}  // namespace detail

/// Parses a scenario document. Throws ScenarioError on schema violations,
/// dangling references and phase inconsistencies.
inline Scenario parse_scenario(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("scenario is not valid JSON: ") + e.what());
  }
  Scenario s;
  try {
    for (const char* section : {"network", "damage", "crews", "depots", "travel", "params"})
      if (!doc.contains(section)) throw ScenarioError(std::string("missing section '") + section + "'");

    const auto& pj = doc.at("params");
    auto& p = s.params;
    p.dt_hours = detail::get_or(pj, "dt_hours", p.dt_hours);
    p.horizon = detail::get_or(pj, "horizon", 0);
    p.clpu_hours = detail::get_or(pj, "clpu_hours", p.clpu_hours);
    p.switch_cost = detail::get_or(pj, "switch_cost", p.switch_cost);
    p.shed_cost = detail::get_or(pj, "shed_cost", p.shed_cost);
    p.critical_priority = detail::get_or(pj, "critical_priority", p.critical_priority);
    p.resource_names = detail::get_or(pj, "resource_names", std::vector<std::string>{});
    p.resource_weights = detail::get_or(pj, "resource_weights", std::vector<double>{});
    p.initially_open = detail::get_or(pj, "initially_open", std::vector<std::string>{});
    p.impedance_unit = detail::get_or(pj, "impedance_unit", p.impedance_unit);
    p.base_kv = detail::get_or(pj, "base_kv", p.base_kv);
    p.base_kva = detail::get_or(pj, "base_kva", p.base_kva);
    p.speed_kmh = detail::get_or(pj, "speed_kmh", p.speed_kmh);

    const auto& net = doc.at("network");
    for (const auto& bj : net.at("buses")) {
      Bus b;
      b.id = bj.at("id").get<std::string>();
      const std::string where = "bus '" + b.id + "'";
      b.phases = detail::parse_phases(detail::get_or<std::string>(bj, "phases", "abc"), where);
      b.p_demand = detail::phase_vec(bj, "p_kw", where);
      b.q_demand = detail::phase_vec(bj, "q_kvar", where);
      b.p_undiversified = detail::phase_vec(bj, "p_undiv_kw", where, b.p_demand);
      b.q_undiversified = detail::phase_vec(bj, "q_undiv_kvar", where, b.q_demand);
      b.profile = detail::get_or(bj, "profile", std::vector<double>{});
      b.critical = detail::get_or(bj, "critical", false);
      b.priority = detail::get_or(bj, "priority", 1.0);
      b.substation = detail::get_or(bj, "substation", false);
      b.p_dg_max = detail::phase_vec(bj, "dg_p_kw", where);
      b.q_dg_max = detail::phase_vec(bj, "dg_q_kvar", where);
      b.u_min = detail::get_or(bj, "u_min", b.u_min);
      b.u_max = detail::get_or(bj, "u_max", b.u_max);
      s.buses.push_back(std::move(b));
    }
    for (const auto& lj : net.at("lines")) {
      Line l;
      l.from = lj.at("from").get<std::string>();
      l.to = lj.at("to").get<std::string>();
      l.id = detail::get_or<std::string>(lj, "id", l.from + "-" + l.to);
      const std::string where = "line '" + l.id + "'";
      l.phases = detail::parse_phases(detail::get_or<std::string>(lj, "phases", "abc"), where);
      l.r = detail::matrix3(lj, "r", where);
      l.x = detail::matrix3(lj, "x", where);
      l.length = detail::get_or(lj, "length", 1.0);
      l.p_max = detail::get_or(lj, "p_max_kw", l.p_max);
      l.p_min = detail::get_or(lj, "p_min_kw", l.p_max);
      l.q_max = detail::get_or(lj, "q_max_kvar", l.q_max);
      l.q_min = detail::get_or(lj, "q_min_kvar", l.q_max);
      const std::string kind = detail::get_or<std::string>(lj, "kind", "plain");
      if (kind == "plain") l.kind = LineKind::Plain;
      else if (kind == "switch") l.kind = LineKind::Switch;
      else if (kind == "regulator") l.kind = LineKind::Regulator;
      else if (kind == "breaker") l.kind = LineKind::Breaker;
      else throw ScenarioError(where + ": unknown kind '" + kind + "'");
      l.ratio = detail::phase_vec(lj, "ratio", where, l.ratio);
      s.lines.push_back(std::move(l));
    }
    for (const auto& cj : doc.at("crews")) {
      Crew c;
      c.id = cj.at("id").get<std::string>();
      const std::string kind = cj.at("kind").get<std::string>();
      if (kind == "line") c.kind = CrewKind::Line;
      else if (kind == "tree") c.kind = CrewKind::Tree;
      else throw ScenarioError("crew '" + c.id + "': unknown kind '" + kind + "'");
      c.depot = cj.at("depot").get<std::string>();
      c.start = detail::get_or<std::string>(cj, "start", c.depot);
      c.end = detail::get_or<std::string>(cj, "end", c.depot);
      c.capacity = detail::get_or(cj, "capacity", 0.0);
      s.crews.push_back(std::move(c));
    }
    for (const auto& wj : doc.at("depots")) {
      Depot w;
      w.id = wj.at("id").get<std::string>();
      w.stock = detail::get_or(wj, "stock", std::vector<double>{});
      s.depots.push_back(std::move(w));
    }
    for (const auto& dj : doc.at("damage")) {
      DamageRecord d;
      d.line = dj.at("line").get<std::string>();
      d.repair_hours = detail::hours_map(dj.at("repair_hours"), s.crews, CrewKind::Line);
      if (dj.contains("tree_hours"))
        d.tree_hours = detail::hours_map(dj.at("tree_hours"), s.crews, CrewKind::Tree);
      d.resources = detail::get_or(dj, "resources", std::vector<int>{});
      s.damages.push_back(std::move(d));
    }
    const auto& tj = doc.at("travel");
    s.travel.nodes = tj.at("nodes").get<std::vector<std::string>>();
    s.travel.hours = tj.at("hours").get<std::vector<std::vector<double>>>();
    if (tj.contains("km")) s.travel.km = tj.at("km").get<std::vector<std::vector<double>>>();
  } catch (const nlohmann::json::exception& e) {
    throw ScenarioError(std::string("schema violation: ") + e.what());
  }
  s.finalize();
  return s;
}

namespace detail {

inline void dump_canonical(const nlohmann::json& j, std::string& out) {
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      out += '{';
      bool first = true;
      for (const auto& [k, v] : j.items()) {  // std::map: keys already sorted
        if (!first) out += ',';
        first = false;
        out += nlohmann::json(k).dump();
        out += ':';
        dump_canonical(v, out);
      }
      out += '}';
      break;
    }
    case nlohmann::json::value_t::array: {
      out += '[';
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out += ',';
        dump_canonical(j[i], out);
      }
      out += ']';
      break;
    }
    case nlohmann::json::value_t::number_float: {
      char buf[64];
      double v = j.get<double>();
      if (v == 0.0) v = 0.0;  // drop negative zero
      std::snprintf(buf, sizeof buf, "%.6f", v);
      out += buf;
      break;
    }
    default:
      out += j.dump();
  }
}

inline nlohmann::json floats(const PhaseVec& v) {
  return nlohmann::json::array({static_cast<double>(v[0]), static_cast<double>(v[1]),
                                static_cast<double>(v[2])});
}

inline nlohmann::json floats(const Matrix3& m) {
  auto out = nlohmann::json::array();
  for (const auto& row : m) out.push_back(floats(PhaseVec{row[0], row[1], row[2]}));
  return out;
}

template <typename Seq>
nlohmann::json float_array(const Seq& v) {
  auto out = nlohmann::json::array();
  for (double x : v) out.push_back(static_cast<double>(x));
  return out;
}

}  // namespace detail

/// Canonical form: sorted keys, every float printed with six decimals, every
/// defaulted field written out.
inline std::string serialize_scenario(const Scenario& s) {
  using nlohmann::json;
  json doc;
  const auto& p = s.params;
  doc["params"] = {{"dt_hours", p.dt_hours},
                   {"horizon", p.horizon},
                   {"clpu_hours", p.clpu_hours},
                   {"switch_cost", p.switch_cost},
                   {"shed_cost", p.shed_cost},
                   {"critical_priority", p.critical_priority},
                   {"resource_names", p.resource_names},
                   {"resource_weights", detail::float_array(p.resource_weights)},
                   {"initially_open", p.initially_open},
                   {"impedance_unit", p.impedance_unit},
                   {"base_kv", p.base_kv},
                   {"base_kva", p.base_kva},
                   {"speed_kmh", p.speed_kmh}};
  auto buses = json::array();
  for (const auto& b : s.buses) {
    json bj = {{"id", b.id},
               {"phases", detail::phase_string(b.phases)},
               {"p_kw", detail::floats(b.p_demand)},
               {"q_kvar", detail::floats(b.q_demand)},
               {"p_undiv_kw", detail::floats(b.p_undiversified)},
               {"q_undiv_kvar", detail::floats(b.q_undiversified)},
               {"profile", detail::float_array(b.profile)},
               {"critical", b.critical},
               {"priority", b.priority},
               {"substation", b.substation},
               {"dg_p_kw", detail::floats(b.p_dg_max)},
               {"dg_q_kvar", detail::floats(b.q_dg_max)},
               {"u_min", b.u_min},
               {"u_max", b.u_max}};
    buses.push_back(std::move(bj));
  }
  auto lines = json::array();
  for (const auto& l : s.lines) {
    lines.push_back({{"id", l.id},
                     {"from", l.from},
                     {"to", l.to},
                     {"phases", detail::phase_string(l.phases)},
                     {"r", detail::floats(l.r)},
                     {"x", detail::floats(l.x)},
                     {"length", l.length},
                     {"p_max_kw", l.p_max},
                     {"p_min_kw", l.p_min},
                     {"q_max_kvar", l.q_max},
                     {"q_min_kvar", l.q_min},
                     {"kind", to_string(l.kind)},
                     {"ratio", detail::floats(l.ratio)}});
  }
  doc["network"] = {{"buses", buses}, {"lines", lines}};
  auto damage = json::array();
  for (const auto& d : s.damages) {
    json dj = {{"line", d.line}, {"resources", d.resources}};
    json rh = json::object();
    for (const auto& [c, h] : d.repair_hours) rh[c] = h;
    dj["repair_hours"] = rh;
    if (d.tree_blocked()) {
      json th = json::object();
      for (const auto& [c, h] : d.tree_hours) th[c] = h;
      dj["tree_hours"] = th;
    }
    damage.push_back(std::move(dj));
  }
  doc["damage"] = damage;
  auto crews = json::array();
  for (const auto& c : s.crews)
    crews.push_back({{"id", c.id},
                     {"kind", c.kind == CrewKind::Line ? "line" : "tree"},
                     {"depot", c.depot},
                     {"start", c.start},
                     {"end", c.end},
                     {"capacity", c.capacity}});
  doc["crews"] = crews;
  auto depots = json::array();
  for (const auto& w : s.depots) depots.push_back({{"id", w.id}, {"stock", detail::float_array(w.stock)}});
  doc["depots"] = depots;
  const auto& nodes = s.nodes();
  auto hours = json::array();
  auto km = json::array();
  for (int a = 0; a < static_cast<int>(nodes.size()); ++a) {
    auto hr = json::array();
    auto kr = json::array();
    for (int b = 0; b < static_cast<int>(nodes.size()); ++b) {
      hr.push_back(s.travel_hours(a, b));
      kr.push_back(s.distance_km(a, b));
    }
    hours.push_back(hr);
    km.push_back(kr);
  }
  doc["travel"] = {{"nodes", nodes}, {"hours", hours}, {"km", km}};
  std::string out;
  detail::dump_canonical(doc, out);
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Topology

using Loop = std::vector<int>;  // line indices

/// Fundamental cycles of the all-closed line graph (damaged lines included),
/// found by depth-first search. One loop per non-tree edge, so the count is
/// #lines - #buses + #components.
inline std::vector<Loop> enumerate_loops(const Scenario& s) {
  const int nb = static_cast<int>(s.buses.size());
  std::vector<std::vector<std::pair<int, int>>> adj(nb);  // (neighbour, line)
  for (int k = 0; k < static_cast<int>(s.lines.size()); ++k) {
    const int a = s.bus_index(s.lines[k].from);
    const int b = s.bus_index(s.lines[k].to);
    adj[a].push_back({b, k});
    adj[b].push_back({a, k});
  }
  std::vector<int> parent_line(nb, -1), parent_bus(nb, -1), depth(nb, -1);
  std::vector<bool> tree_edge(s.lines.size(), false);
  for (int root = 0; root < nb; ++root) {
    if (depth[root] >= 0) continue;
    depth[root] = 0;
    std::vector<std::pair<int, std::size_t>> stack{{root, 0}};
    while (!stack.empty()) {
      auto& [v, next] = stack.back();
      if (next == adj[v].size()) {
        stack.pop_back();
        continue;
      }
      const auto [w, k] = adj[v][next++];
      if (depth[w] >= 0) continue;
      depth[w] = depth[v] + 1;
      parent_bus[w] = v;
      parent_line[w] = k;
      tree_edge[k] = true;
      stack.push_back({w, 0});
    }
  }
  std::vector<Loop> loops;
  for (int k = 0; k < static_cast<int>(s.lines.size()); ++k) {
    if (tree_edge[k]) continue;
    int a = s.bus_index(s.lines[k].from);
    int b = s.bus_index(s.lines[k].to);
    Loop loop{k};
    while (a != b) {
      if (depth[a] >= depth[b]) {
        loop.push_back(parent_line[a]);
        a = parent_bus[a];
      } else {
        loop.push_back(parent_line[b]);
        b = parent_bus[b];
      }
    }
    std::sort(loop.begin(), loop.end());
    loops.push_back(std::move(loop));
  }
  return loops;
}

/// Connected components over lines with `closed[k]`; islands are ordered by
/// their smallest bus index and list buses ascending.
inline std::vector<std::vector<int>> energized_islands(const Scenario& s, const std::vector<bool>& closed) {
  const int nb = static_cast<int>(s.buses.size());
  std::vector<int> parent(nb);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[v] != v) v = parent[v] = parent[parent[v]];
    return v;
  };
  for (int k = 0; k < static_cast<int>(s.lines.size()); ++k) {
    if (!closed.at(k)) continue;
    const int a = find(s.bus_index(s.lines[k].from));
    const int b = find(s.bus_index(s.lines[k].to));
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
  std::map<int, std::vector<int>> groups;
  for (int v = 0; v < nb; ++v) groups[find(v)].push_back(v);
  std::vector<std::vector<int>> out;
  for (auto& [root, members] : groups) out.push_back(std::move(members));
  return out;
}

/// Line status with every damaged line open and switches at their
/// pre-outage position.
inline std::vector<bool> initial_line_status(const Scenario& s) {
  std::vector<bool> closed(s.lines.size(), true);
  for (int k = 0; k < static_cast<int>(s.lines.size()); ++k)
    closed[k] = !s.is_damaged(k) && s.initially_closed(k);
  return closed;
}

}  // namespace gridmend
