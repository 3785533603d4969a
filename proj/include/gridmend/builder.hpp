#pragma once
// Scenario -> MILP translation: the joint repair/restoration model, the crew
// assignment model, the priority routing model and route restriction helpers.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "gridmend/milp.hpp"
#include "gridmend/netmodel.hpp"

namespace gridmend {

// ---------------------------------------------------------------------------
// Variable names

namespace names {

inline std::string idx(std::string_view fam, std::initializer_list<std::string_view> parts) {
  std::string s(fam);
  s += '[';
  bool first = true;
  for (auto p : parts) {
    if (!first) s += ',';
    s += p;
    first = false;
  }
  s += ']';
  return s;
}
inline std::string ts(int t) { return std::to_string(t); }
inline std::string_view ph(int p) {
  static const char* letters[] = {"a", "b", "c"};
  return letters[p];
}

inline std::string y(const std::string& bus, int t) { return idx("y", {bus, ts(t)}); }
inline std::string X(const std::string& bus, int t) { return idx("X", {bus, ts(t)}); }
inline std::string U(const std::string& bus, int p, int t) { return idx("U", {bus, ph(p), ts(t)}); }
inline std::string u(const std::string& line, int t) { return idx("u", {line, ts(t)}); }
inline std::string gamma(const std::string& line, int t) { return idx("gamma", {line, ts(t)}); }
inline std::string PK(const std::string& line, int p, int t) { return idx("PK", {line, ph(p), ts(t)}); }
inline std::string QK(const std::string& line, int p, int t) { return idx("QK", {line, ph(p), ts(t)}); }
inline std::string PG(const std::string& bus, int p, int t) { return idx("PG", {bus, ph(p), ts(t)}); }
inline std::string QG(const std::string& bus, int p, int t) { return idx("QG", {bus, ph(p), ts(t)}); }
inline std::string PL(const std::string& bus, int p, int t) { return idx("PL", {bus, ph(p), ts(t)}); }
inline std::string QL(const std::string& bus, int p, int t) { return idx("QL", {bus, ph(p), ts(t)}); }
inline std::string x(const std::string& m, const std::string& n, const std::string& c) { return idx("x", {m, n, c}); }
inline std::string alpha(const std::string& m, const std::string& c) { return idx("alpha", {m, c}); }
inline std::string f(const std::string& m, int t) { return idx("f", {m, ts(t)}); }
inline std::string E(const std::string& c, const std::string& m, int r) { return idx("E", {c, m, std::to_string(r)}); }
inline std::string ResC(const std::string& c, const std::string& w, int r) {
  return idx("ResC", {c, w, std::to_string(r)});
}
inline std::string AL(const std::string& m, const std::string& c) { return idx("AL", {m, c}); }
inline std::string AT(const std::string& m, const std::string& c) { return idx("AT", {m, c}); }
inline std::string z(const std::string& w, const std::string& c) { return idx("z", {w, c}); }
inline std::string P(const std::string& c, const std::string& w) { return idx("P", {c, w}); }
inline std::string d(const std::string& m, const std::string& n, const std::string& c) { return idx("d", {m, n, c}); }

}  // namespace names

// ---------------------------------------------------------------------------
// Parameters

struct BigMPolicy {
  double time = 0.0;  // steps
  double volt = 0.0;  // squared p.u.
  double res = 0.0;   // resource units
  double dist = 0.0;  // km

  static BigMPolicy derive(const Scenario& s) {
    BigMPolicy m;
    const double dt = s.params.dt_hours;
    double max_leg = 0.0, max_rep = 0.0, max_km = 0.0;
    const int nn = static_cast<int>(s.nodes().size());
    for (int a = 0; a < nn; ++a)
      for (int b = 0; b < nn; ++b) {
        max_leg = std::max(max_leg, s.travel_hours(a, b));
        max_km = std::max(max_km, s.distance_km(a, b));
      }
    for (const auto& d : s.damages) {
      for (const auto& [c, h] : d.repair_hours) max_rep = std::max(max_rep, h);
      for (const auto& [c, h] : d.tree_hours) max_rep = std::max(max_rep, h);
    }
    m.time = s.horizon() + (max_leg + max_rep) / dt;
    for (const auto& b : s.buses) m.volt = std::max(m.volt, b.u_max);
    double cap = 0.0, min_w = 0.0, max_r = 0.0;
    for (const auto& c : s.crews) cap = std::max(cap, c.capacity);
    for (double w : s.params.resource_weights)
      if (w > 0) min_w = min_w == 0.0 ? w : std::min(min_w, w);
    for (const auto& d : s.damages)
      for (int r : d.resources) max_r = std::max(max_r, static_cast<double>(r));
    m.res = (min_w > 0 ? cap / min_w : cap) + max_r;
    m.dist = 2.0 * max_km;
    return m;
  }

  BigMPolicy resolved(const Scenario& s) const {
    BigMPolicy d = derive(s);
    if (time > 0) d.time = time;
    if (volt > 0) d.volt = volt;
    if (res > 0) d.res = res;
    if (dist > 0) d.dist = dist;
    return d;
  }
};

using Arc = std::tuple<int, int, int>;  // (from node, to node, crew)

/// Constant parts of a route plus the assignment restriction.
struct RouteFixings {
  std::map<Arc, int> arcs;                         // arc -> 0/1
  std::map<int, std::vector<int>> assignment;      // crew -> damaged nodes it may visit
  std::map<std::string, double> pins;              // any variable by name
};

/// Route arcs in use, x[m,n,c] = 1.
using Route = std::set<Arc>;

struct PriorityWeights {
  double w1 = 10.0, w2 = 5.0, w3 = 1.0;
};

// ---------------------------------------------------------------------------
// Line physics helpers

/// Coefficients of P_q and Q_q in the phase-p voltage drop row: the row is
/// U_j - U_i + sum_q (cp[p][q] P_q + cq[p][q] Q_q), flows in kW / kVAr.
struct DropCoefficients {
  Matrix3 cp{};
  Matrix3 cq{};
};

inline DropCoefficients drop_coefficients(const Scenario& s, const Line& l) {
  const double pi = std::numbers::pi;
  const std::complex<double> a = std::polar(1.0, -2.0 * pi / 3.0);
  double scale;
  if (s.params.impedance_unit == "pu") {
    scale = 1.0 / s.params.base_kva;
  } else {
    const double zbase = s.params.base_kv * s.params.base_kv * 1000.0 / s.params.base_kva;
    scale = l.length / (zbase * s.params.base_kva);
  }
  DropCoefficients dc;
  for (int p = 0; p < 3; ++p)
    for (int q = 0; q < 3; ++q) {
      const std::complex<double> shift = std::pow(a, p - q);
      const std::complex<double> zbar = shift * std::complex<double>(l.r[p][q], l.x[p][q]);
      dc.cp[p][q] = 2.0 * zbar.real() * scale;
      dc.cq[p][q] = 2.0 * zbar.imag() * scale;
    }
  return dc;
}

// ---------------------------------------------------------------------------
// Builder

namespace detail {

/// True when a closed line forces equal energization at its ends, i.e. on
/// some phase the drop at flow limits stays below both minimum voltages.
inline bool closed_line_bonds_ends(const Scenario& s, const Line& l) {
  const Bus& a = s.buses[s.bus_index(l.from)];
  const Bus& b = s.buses[s.bus_index(l.to)];
  if (l.kind == LineKind::Regulator) return true;
  const DropCoefficients dc = drop_coefficients(s, l);
  const double floor = std::min(a.u_min, b.u_min);
  for (int p = 0; p < 3; ++p) {
    if (!l.phases[p]) continue;
    double worst = 0.0;
    for (int q = 0; q < 3; ++q) {
      if (!l.phases[q]) continue;
      worst += std::abs(dc.cp[p][q]) * std::max(l.p_max, l.p_min) + std::abs(dc.cq[p][q]) * std::max(l.q_max, l.q_min);
    }
    if (worst < floor * (1.0 - 1e-6)) return true;
  }
  return false;
}

inline int arc_exists(const Scenario& s, int m, int n, int c) {
  const int phi0 = s.node_index(s.crews[c].start);
  const int phi1 = s.node_index(s.crews[c].end);
  if (m == n) return (m == phi0 && phi0 == phi1) ? 1 : 0;
  if (phi0 != phi1 && (n == phi0 || m == phi1)) return 0;
  return 1;
}

class ModelBuilder {
 public:
  ModelBuilder(const Scenario& s, BigMPolicy big, int horizon = 0)
      : s_(s), M_(big.resolved(s)), H_(horizon > 0 ? horizon : s.horizon()) {}

  MilpModel& model() { return m_; }

  int var(const std::string& name, VarKind k, double lb, double ub) { return m_.add_var(name, k, lb, ub); }
  void row(const std::string& name, std::vector<Term> t, Sense sense, double rhs) {
    m_.add_constraint(name, std::move(t), sense, rhs);
  }

  // --- routing (arcs, arrival, precedence, resources, repair step) ---------
  void add_routing(bool with_resources, bool with_repair_steps) {
    const auto& nodes = s_.nodes();
    const int nc = static_cast<int>(s_.crews.size());
    const double dt = s_.params.dt_hours;
    x_.assign(nc, {});
    alpha_.assign(nc, std::vector<int>(nodes.size(), -1));
    for (int c = 0; c < nc; ++c) {
      const auto& crew = s_.crews[c];
      for (int m : s_.crew_nodes(c))
        for (int n : s_.crew_nodes(c))
          if (arc_exists(s_, m, n, c)) {
            const int v = var(names::x(nodes[m], nodes[n], crew.id), VarKind::Binary, 0, 1);
            x_[c][{m, n}] = v;
            m_.branch_priority[v] = 2;
          }
      const int phi0 = s_.node_index(crew.start);
      for (int m : s_.crew_nodes(c)) {
        const bool start = m == phi0;
        alpha_[c][m] = var(names::alpha(nodes[m], crew.id), VarKind::Continuous, 0, start ? 0.0 : M_.time);
      }
    }
    compute_earliest();
    for (int c = 0; c < nc; ++c) {
      const auto& crew = s_.crews[c];
      const int phi0 = s_.node_index(crew.start);
      const int phi1 = s_.node_index(crew.end);
      const auto cn = s_.crew_nodes(c);
      // Start and end.
      std::vector<Term> out0, in1;
      for (int m : cn) {
        if (auto it = x_[c].find({phi0, m}); it != x_[c].end()) out0.push_back({it->second, 1});
        if (auto it = x_[c].find({m, phi1}); it != x_[c].end()) in1.push_back({it->second, 1});
      }
      row("start[" + crew.id + "]", out0, Sense::Eq, 1);
      row("end[" + crew.id + "]", in1, Sense::Eq, 1);
      // Flow conservation.
      for (int m : cn) {
        if (m == phi0 || m == phi1) continue;
        std::vector<Term> t;
        for (int n : cn) {
          if (n == m) continue;
          if (auto it = x_[c].find({m, n}); it != x_[c].end()) t.push_back({it->second, 1});
          if (auto it = x_[c].find({n, m}); it != x_[c].end()) t.push_back({it->second, -1});
        }
        row(names::idx("flow", {nodes[m], crew.id}), t, Sense::Eq, 0);
      }
      // Arrival times.
      for (const auto& [mn, xv] : x_[c]) {
        const auto [m, n] = mn;
        if (m == n || n == phi0) continue;
        if (m == phi1 && m != phi0) continue;
        const double lag = (task_hours(m, c) + s_.travel_hours(m, n)) / dt;
        // alpha_m + lag - (1 - x) M <= alpha_n
        row(names::idx("arrive", {nodes[m], nodes[n], crew.id}),
            {{alpha_[c][m], 1}, {alpha_[c][n], -1}, {xv, M_.time}}, Sense::Le, M_.time - lag);
      }
      for (int m : cn) {
        if (m == phi0 || m == phi1) continue;
        std::vector<Term> t{{alpha_[c][m], 1}};
        for (int n : cn)
          if (auto it = x_[c].find({n, m}); it != x_[c].end() && n != m) t.push_back({it->second, -M_.time});
        row(names::idx("visit", {nodes[m], crew.id}), t, Sense::Le, 0);
      }
      // Implied by the arrival rows on integer points, much tighter in the
      // relaxation: arrival after the earliest possible predecessor finish,
      // and no two-node cycles through a damage away from the route ends.
      for (int n : cn) {
        if (n == phi0) continue;
        std::vector<Term> t{{alpha_[c][n], 1}};
        for (int m : cn) {
          if (m == n) continue;
          auto it = x_[c].find({m, n});
          if (it == x_[c].end()) continue;
          const double lb = m == phi0 ? 0.0 : earliest_[c][m];
          const double lag = lb + (task_hours(m, c) + s_.travel_hours(m, n)) / dt;
          if (lag > 0) t.push_back({it->second, -lag});
        }
        if (t.size() > 1) row(names::idx("arrive_lb", {nodes[n], crew.id}), t, Sense::Ge, 0);
      }
      for (int m : cn)
        for (int n : cn) {
          if (n <= m || (s_.node_is_depot(m) && s_.node_is_depot(n))) continue;
          if (m == phi0 || n == phi0 || m == phi1 || n == phi1) continue;
          auto a = x_[c].find({m, n}), b = x_[c].find({n, m});
          if (a == x_[c].end() || b == x_[c].end()) continue;
          row(names::idx("no_back", {nodes[m], nodes[n], crew.id}), {{a->second, 1}, {b->second, 1}}, Sense::Le, 1);
        }
    }
    // Each damage repaired by one line crew; tree-blocked ones cleared by one tree crew.
    const int nd = static_cast<int>(s_.damages.size());
    for (int n = 0; n < nd; ++n) {
      std::vector<Term> line_in, tree_in;
      for (int c = 0; c < nc; ++c)
        for (const auto& [mn, xv] : x_[c])
          if (mn.second == n && mn.first != n)
            (s_.crews[c].kind == CrewKind::Line ? line_in : tree_in).push_back({xv, 1});
      row(names::idx("repair_once", {nodes[n]}), line_in, Sense::Eq, 1);
      if (s_.damages[n].tree_blocked()) row(names::idx("clear_once", {nodes[n]}), tree_in, Sense::Eq, 1);
    }
    // Tree clearing precedes repair.
    for (int m = 0; m < nd; ++m) {
      if (!s_.damages[m].tree_blocked()) continue;
      std::vector<Term> t;
      for (int c = 0; c < nc; ++c) {
        if (alpha_[c][m] < 0) continue;
        if (s_.crews[c].kind == CrewKind::Line) {
          t.push_back({alpha_[c][m], 1});
        } else {
          t.push_back({alpha_[c][m], -1});
          const double lag = task_hours(m, c) / dt;
          for (const auto& [mn, xv] : x_[c])
            if (mn.first == m && mn.second != m) t.push_back({xv, -lag});
        }
      }
      row(names::idx("tree_first", {nodes[m]}), t, Sense::Ge, 0);
    }
    if (with_repair_steps) add_repair_steps();
    if (with_resources && s_.resource_count() > 0) add_resources();
  }

  void add_repair_steps() {
    const auto& nodes = s_.nodes();
    const int nd = static_cast<int>(s_.damages.size());
    const double dt = s_.params.dt_hours;
    f_.assign(nd, std::vector<int>(H_ + 1, -1));
    for (int m = 0; m < nd; ++m) {
      // No line crew can finish before its shortest trip plus the work.
      double soonest = kInf;
      for (int c : s_.line_crews()) soonest = std::min(soonest, earliest_[c][m] + task_hours(m, c) / dt);
      const int first = static_cast<int>(std::ceil(soonest - 1e-9));
      std::vector<Term> once, when;
      for (int t = 1; t <= H_; ++t) {
        f_[m][t] = var(names::f(nodes[m], t), VarKind::Binary, 0, t < first ? 0 : 1);
        m_.branch_priority[f_[m][t]] = 1;
        once.push_back({f_[m][t], 1});
        when.push_back({f_[m][t], static_cast<double>(t)});
      }
      row(names::idx("repair_step", {nodes[m]}), once, Sense::Eq, 1);
      for (int c : s_.line_crews()) {
        when.push_back({alpha_[c][m], -1});
        const double lag = task_hours(m, c) / dt;
        for (const auto& [mn, xv] : x_[c])
          if (mn.first == m && mn.second != m) when.push_back({xv, -lag});
      }
      row(names::idx("repair_time", {nodes[m]}), when, Sense::Ge, 0);
    }
  }

  // earliest_[c][n]: lower bound on crew c's arrival at n (steps) from
  // shortest travel, and for line crews at tree-blocked damages, the soonest
  // clearing finish.
  void compute_earliest() {
    const int nn = static_cast<int>(s_.nodes().size());
    const int nc = static_cast<int>(s_.crews.size());
    const double dt = s_.params.dt_hours;
    earliest_.assign(nc, std::vector<double>(nn, 0.0));
    for (int c = 0; c < nc; ++c) {
      const auto cn = s_.crew_nodes(c);
      std::vector<double> dist(nn, kInf);
      const int phi0 = s_.node_index(s_.crews[c].start);
      dist[phi0] = 0.0;
      // Bellman-Ford over the crew's nodes; the sets are tiny.
      for (std::size_t it = 0; it < cn.size(); ++it)
        for (int a : cn)
          for (int b : cn)
            if (dist[a] + s_.travel_hours(a, b) < dist[b]) dist[b] = dist[a] + s_.travel_hours(a, b);
      for (int n : cn) earliest_[c][n] = dist[n] / dt;
    }
    for (int c : s_.line_crews())
      for (int m = 0; m < static_cast<int>(s_.damages.size()); ++m) {
        if (!s_.damages[m].tree_blocked()) continue;
        double cleared = kInf;
        for (int tc : s_.tree_crews()) cleared = std::min(cleared, earliest_[tc][m] + task_hours(m, tc) / dt);
        if (cleared < kInf) earliest_[c][m] = std::max(earliest_[c][m], cleared);
      }
  }

  // Repair steps without routing: damage m completes no earlier than release[m].
  void add_release_steps(const std::vector<int>& release) {
    const auto& nodes = s_.nodes();
    const int nd = static_cast<int>(s_.damages.size());
    f_.assign(nd, std::vector<int>(H_ + 1, -1));
    for (int m = 0; m < nd; ++m) {
      std::vector<Term> once, when;
      for (int t = 1; t <= H_; ++t) {
        f_[m][t] = var(names::f(nodes[m], t), VarKind::Binary, 0, t < release.at(m) ? 0 : 1);
        once.push_back({f_[m][t], 1});
        when.push_back({f_[m][t], static_cast<double>(t)});
      }
      row(names::idx("repair_step", {nodes[m]}), once, Sense::Eq, 1);
      row(names::idx("release", {nodes[m]}), when, Sense::Ge, release.at(m));
    }
  }

  void add_resources() {
    const auto& nodes = s_.nodes();
    const int nr = s_.resource_count();
    const int nd = static_cast<int>(s_.damages.size());
    const int nw = static_cast<int>(s_.depots.size());
    std::map<std::pair<int, int>, std::vector<Term>> draws;  // (w, r)
    for (int c : s_.line_crews()) {
      const auto& crew = s_.crews[c];
      const auto cn = s_.crew_nodes(c);
      const int phi0 = s_.node_index(crew.start);
      const int phi1 = s_.node_index(crew.end);
      std::map<std::pair<int, int>, int> E, RC;
      for (int m : cn)
        for (int r = 0; r < nr; ++r) E[{m, r}] = var(names::E(crew.id, nodes[m], r), VarKind::Continuous, 0, kInf);
      for (int w = 0; w < nw; ++w)
        for (int r = 0; r < nr; ++r) {
          const int node = nd + w;
          RC[{node, r}] = var(names::ResC(crew.id, nodes[node], r), VarKind::Continuous, 0, kInf);
          draws[{w, r}].push_back({RC[{node, r}], 1});
        }
      for (int m : cn) {
        std::vector<Term> t;
        for (int r = 0; r < nr; ++r) t.push_back({E[{m, r}], s_.params.resource_weights[r]});
        row(names::idx("carry", {crew.id, nodes[m]}), t, Sense::Le, crew.capacity);
      }
      for (int m = 0; m < nd; ++m)
        for (int r = 0; r < nr; ++r) {
          const double need = s_.damages[m].resources[r];
          if (need <= 0) continue;
          std::vector<Term> t{{E[{m, r}], -1}};
          for (const auto& [mn, xv] : x_[c])
            if (mn.second == m && mn.first != m) t.push_back({xv, need});
          row(names::idx("enough", {crew.id, nodes[m], std::to_string(r)}), t, Sense::Le, 0);
        }
      const double M = M_.res;
      for (const auto& [mn, xv] : x_[c]) {
        const auto [m, n] = mn;
        if (m == n || n == phi0) continue;
        const std::string tag = names::idx("", {crew.id, nodes[m], nodes[n]});
        for (int r = 0; r < nr; ++r) {
          const std::string rs = tag.substr(0, tag.size() - 1) + "," + std::to_string(r) + "]";
          if (!s_.node_is_depot(m)) {
            // E_n = E_m - R_m when the arc is used.
            const double need = s_.damages[m].resources[r];
            row("use_lo" + rs, {{E[{m, r}], 1}, {E[{n, r}], -1}, {xv, -M}}, Sense::Ge, need - M);
            row("use_hi" + rs, {{E[{m, r}], 1}, {E[{n, r}], -1}, {xv, M}}, Sense::Le, need + M);
          } else if (m == phi0) {
            row("load_lo" + rs, {{RC[{m, r}], 1}, {E[{n, r}], -1}, {xv, -M}}, Sense::Ge, -M);
            row("load_hi" + rs, {{RC[{m, r}], 1}, {E[{n, r}], -1}, {xv, M}}, Sense::Le, M);
          } else if (n != phi1) {
            row("pick_lo" + rs, {{E[{m, r}], 1}, {RC[{m, r}], 1}, {E[{n, r}], -1}, {xv, -M}}, Sense::Ge, -M);
            row("pick_hi" + rs, {{E[{m, r}], 1}, {RC[{m, r}], 1}, {E[{n, r}], -1}, {xv, M}}, Sense::Le, M);
          }
        }
      }
    }
    for (int w = 0; w < nw; ++w)
      for (int r = 0; r < nr; ++r)
        row(names::idx("stock", {s_.depots[w].id, std::to_string(r)}), draws[{w, r}], Sense::Le,
            s_.depots[w].stock[r]);
  }

  // --- network operation -----------------------------------------------------
  // `damaged_state`: -1 links damaged lines to repair steps, otherwise their
  // status is fixed to that value.
  void add_operation(int damaged_state) {
    const int nb = static_cast<int>(s_.buses.size());
    const int nl = static_cast<int>(s_.lines.size());
    const int lam = s_.clpu_steps();
    const double dt = s_.params.dt_hours;
    y_.assign(nb, std::vector<int>(H_ + 1, -1));
    std::vector<std::vector<int>> X(nb, std::vector<int>(H_ + 1, -1));
    std::vector<std::vector<std::array<int, 3>>> U(nb, std::vector<std::array<int, 3>>(H_ + 1));
    u_.assign(nl, std::vector<int>(H_ + 1, -1));
    double shed_const = 0.0;
    for (int t = 1; t <= H_; ++t) {
      for (int i = 0; i < nb; ++i) {
        const Bus& b = s_.buses[i];
        y_[i][t] = var(names::y(b.id, t), VarKind::Binary, 0, 1);
        X[i][t] = var(names::X(b.id, t), VarKind::Binary, 0, 1);
        for (int p = 0; p < 3; ++p)
          U[i][t][p] = var(names::U(b.id, p, t), VarKind::Continuous, 0, b.phases[p] ? b.u_max : 0.0);
        double pd = 0.0;
        for (int p = 0; p < 3; ++p) pd += b.pd(p, t);
        const double w = s_.shed_cost(i) * pd * dt;
        shed_const += w;
        m_.add_objective(y_[i][t], -w);
      }
      for (int k = 0; k < nl; ++k) {
        const Line& l = s_.lines[k];
        double lo = 1, hi = 1;
        if (s_.is_damaged(k)) {
          lo = damaged_state < 0 ? 0 : damaged_state;
          hi = damaged_state < 0 ? 1 : damaged_state;
        } else if (l.operable()) {
          lo = 0;
        }
        u_[k][t] = var(names::u(l.id, t), VarKind::Binary, lo, hi);
      }
    }
    m_.add_objective_constant(shed_const);

    // Switching cost.
    for (int k = 0; k < nl; ++k) {
      const Line& l = s_.lines[k];
      if (!l.operable()) continue;
      const double u0 = s_.initially_closed(k) ? 1.0 : 0.0;
      for (int t = 1; t <= H_; ++t) {
        const int g = var(names::gamma(l.id, t), VarKind::Binary, 0, 1);
        m_.add_objective(g, s_.params.switch_cost);
        const std::string tag = names::idx("", {l.id, names::ts(t)});
        if (t == 1) {
          row("sw_on" + tag, {{g, 1}, {u_[k][t], -1}}, Sense::Ge, -u0);
          row("sw_off" + tag, {{g, 1}, {u_[k][t], 1}}, Sense::Ge, u0);
        } else {
          row("sw_on" + tag, {{g, 1}, {u_[k][t], -1}, {u_[k][t - 1], 1}}, Sense::Ge, 0);
          row("sw_off" + tag, {{g, 1}, {u_[k][t], 1}, {u_[k][t - 1], -1}}, Sense::Ge, 0);
        }
      }
    }
    // Repaired lines return to service for good.
    if (damaged_state < 0 && !f_.empty()) {
      for (int k = 0; k < nl; ++k) {
        if (!s_.is_damaged(k)) continue;
        const int m = s_.damage_of_line(k);
        for (int t = 1; t <= H_; ++t) {
          std::vector<Term> tt{{u_[k][t], 1}};
          for (int tau = 1; tau <= t; ++tau) tt.push_back({f_[m][tau], -1});
          row(names::idx("in_service", {s_.lines[k].id, names::ts(t)}), tt, Sense::Eq, 0);
        }
      }
    }

    const auto loops = enumerate_loops(s_);
    bonded_.assign(nl, false);
    bool all_bonded = true;
    for (int k = 0; k < nl; ++k) {
      bonded_[k] = closed_line_bonds_ends(s_, s_.lines[k]);
      all_bonded = all_bonded && bonded_[k];
    }
    // With every line bonded and no two loops sharing a line, a dead bus sits
    // in a dead radial piece with no load, which carries no flow.
    std::vector<int> loop_uses(nl, 0);
    bool cactus = true;
    for (const auto& lp : loops)
      for (int k : lp) cactus = cactus && ++loop_uses[k] == 1;
    const bool dead_carry_nothing = all_bonded && cactus;
    for (int t = 1; t <= H_; ++t) {
      const std::string ts = names::ts(t);
      std::vector<std::array<std::vector<Term>, 3>> pbal(nb), qbal(nb);
      for (int i = 0; i < nb; ++i) {
        const Bus& b = s_.buses[i];
        for (int p = 0; p < 3; ++p) {
          if (!b.phases[p]) continue;
          const int pl = var(names::PL(b.id, p, t), VarKind::Continuous, -kInf, kInf);
          const int ql = var(names::QL(b.id, p, t), VarKind::Continuous, -kInf, kInf);
          const std::string tag = names::idx("", {b.id, names::ph(p), ts});
          std::vector<Term> rp{{pl, 1}, {y_[i][t], -(b.pd(p, t) + b.pu(p, t))}};
          std::vector<Term> rq{{ql, 1}, {y_[i][t], -(b.qd(p, t) + b.qu(p, t))}};
          if (t - lam >= 1) {
            rp.push_back({y_[i][t - lam], b.pu(p, t)});
            rq.push_back({y_[i][t - lam], b.qu(p, t)});
          }
          row("clpu_p" + tag, rp, Sense::Eq, 0);
          row("clpu_q" + tag, rq, Sense::Eq, 0);
          pbal[i][p].push_back({pl, -1});
          qbal[i][p].push_back({ql, -1});
          if (b.has_dg()) {
            const int pg = var(names::PG(b.id, p, t), VarKind::Continuous, 0, b.p_dg_max[p]);
            const int qg = var(names::QG(b.id, p, t), VarKind::Continuous, 0, b.q_dg_max[p]);
            pbal[i][p].push_back({pg, 1});
            qbal[i][p].push_back({qg, 1});
          }
          // Voltage window, zero when de-energized.
          row("vmax" + tag, {{U[i][t][p], 1}, {X[i][t], -b.u_max}}, Sense::Le, 0);
          row("vmin" + tag, {{U[i][t][p], 1}, {X[i][t], -b.u_min}}, Sense::Ge, 0);
        }
        row(names::idx("served", {b.id, ts}), {{y_[i][t], 1}, {X[i][t], -1}}, Sense::Le, 0);
        if (t < H_)
          row(names::idx("keep", {b.id, ts}), {{y_[i][t + 1], 1}, {y_[i][t], -1}}, Sense::Ge, 0);
      }
      for (int k = 0; k < nl; ++k) {
        const Line& l = s_.lines[k];
        const int i = s_.bus_index(l.from), j = s_.bus_index(l.to);
        const int uk = u_[k][t];
        std::array<int, 3> P{-1, -1, -1}, Q{-1, -1, -1};
        for (int p = 0; p < 3; ++p) {
          if (!l.phases[p]) continue;
          P[p] = var(names::PK(l.id, p, t), VarKind::Continuous, -l.p_min, l.p_max);
          Q[p] = var(names::QK(l.id, p, t), VarKind::Continuous, -l.q_min, l.q_max);
          const std::string tag = names::idx("", {l.id, names::ph(p), ts});
          row("pk_hi" + tag, {{P[p], 1}, {uk, -l.p_max}}, Sense::Le, 0);
          row("pk_lo" + tag, {{P[p], 1}, {uk, l.p_min}}, Sense::Ge, 0);
          row("qk_hi" + tag, {{Q[p], 1}, {uk, -l.q_max}}, Sense::Le, 0);
          row("qk_lo" + tag, {{Q[p], 1}, {uk, l.q_min}}, Sense::Ge, 0);
          if (dead_carry_nothing) {
            for (int e : {i, j}) {
              const std::string etag = names::idx("", {l.id, s_.buses[e].id, names::ph(p), ts});
              row("live_p_hi" + etag, {{P[p], 1}, {X[e][t], -l.p_max}}, Sense::Le, 0);
              row("live_p_lo" + etag, {{P[p], 1}, {X[e][t], l.p_min}}, Sense::Ge, 0);
              row("live_q_hi" + etag, {{Q[p], 1}, {X[e][t], -l.q_max}}, Sense::Le, 0);
              row("live_q_lo" + etag, {{Q[p], 1}, {X[e][t], l.q_min}}, Sense::Ge, 0);
            }
          }
          pbal[i][p].push_back({P[p], -1});
          qbal[i][p].push_back({Q[p], -1});
          pbal[j][p].push_back({P[p], 1});
          qbal[j][p].push_back({Q[p], 1});
        }
        if (l.kind == LineKind::Regulator) {
          for (int p = 0; p < 3; ++p) {
            if (!l.phases[p]) continue;
            const double a2 = l.ratio[p] * l.ratio[p];
            const double M = M_.volt * std::max(1.0, a2);
            const std::string tag = names::idx("", {l.id, names::ph(p), ts});
            row("reg_hi" + tag, {{U[j][t][p], a2}, {U[i][t][p], -1}, {uk, M}}, Sense::Le, M);
            row("reg_lo" + tag, {{U[j][t][p], a2}, {U[i][t][p], -1}, {uk, -M}}, Sense::Ge, -M);
          }
        } else {
          const DropCoefficients dc = drop_coefficients(s_, l);
          const double M = M_.volt;
          for (int p = 0; p < 3; ++p) {
            if (!l.phases[p]) continue;
            std::vector<Term> drop{{U[j][t][p], 1}, {U[i][t][p], -1}};
            for (int q = 0; q < 3; ++q) {
              if (!l.phases[q]) continue;
              if (dc.cp[p][q] != 0) drop.push_back({P[q], dc.cp[p][q]});
              if (dc.cq[p][q] != 0) drop.push_back({Q[q], dc.cq[p][q]});
            }
            const std::string tag = names::idx("", {l.id, names::ph(p), ts});
            auto hi = drop, lo = drop;
            hi.push_back({uk, M});
            lo.push_back({uk, -M});
            row("kvl_hi" + tag, hi, Sense::Le, M);
            row("kvl_lo" + tag, lo, Sense::Ge, -M);
          }
        }
        if (bonded_[k]) {
          // A closed line cannot join an energized and a dead bus: the largest
          // drop it can carry is below the minimum voltage.
          row(names::idx("bond_from", {l.id, ts}), {{X[i][t], 1}, {X[j][t], -1}, {uk, 1}}, Sense::Le, 1);
          row(names::idx("bond_to", {l.id, ts}), {{X[j][t], 1}, {X[i][t], -1}, {uk, 1}}, Sense::Le, 1);
        }
        if (s_.is_damaged(k)) {
          const double M = 2.0 * M_.volt;
          for (int p = 0; p < 3; ++p) {
            if (!s_.buses[i].phases[p] && !s_.buses[j].phases[p]) continue;
            row(names::idx("isolate", {l.id, names::ph(p), ts}), {{U[i][t][p], 1}, {U[j][t][p], 1}, {uk, -M}},
                Sense::Le, 0);
          }
          row(names::idx("dead_ends", {l.id, ts}), {{X[i][t], 1}, {X[j][t], 1}, {uk, -2}}, Sense::Le, 0);
          // Per-end form of the same condition; identical on integer points, tighter in the relaxation.
          row(names::idx("dead_from", {l.id, ts}), {{X[i][t], 1}, {uk, -1}}, Sense::Le, 0);
          row(names::idx("dead_to", {l.id, ts}), {{X[j][t], 1}, {uk, -1}}, Sense::Le, 0);
        }
      }
      for (int i = 0; i < nb; ++i)
        for (int p = 0; p < 3; ++p) {
          if (!s_.buses[i].phases[p]) continue;
          const std::string tag = names::idx("", {s_.buses[i].id, names::ph(p), ts});
          row("pbal" + tag, pbal[i][p], Sense::Eq, 0);
          row("qbal" + tag, qbal[i][p], Sense::Eq, 0);
        }
      for (std::size_t l = 0; l < loops.size(); ++l) {
        std::vector<Term> cyc;
        for (int k : loops[l]) cyc.push_back({u_[k][t], 1});
        row(names::idx("radial", {std::to_string(l), ts}), cyc, Sense::Le,
            static_cast<double>(loops[l].size()) - 1.0);
      }
    }
  }

  void apply(const RouteFixings& fx) {
    const auto& nodes = s_.nodes();
    for (const auto& [crew, allowed] : fx.assignment) {
      const std::set<int> ok(allowed.begin(), allowed.end());
      const auto& cid = s_.crews[crew].id;
      for (const auto& [mn, xv] : x_[crew]) {
        const auto [m, n] = mn;
        const bool bad = (!s_.node_is_depot(m) && !ok.count(m)) || (!s_.node_is_depot(n) && !ok.count(n));
        if (bad) row(names::idx("off", {nodes[m], nodes[n], cid}), {{xv, 1}}, Sense::Eq, 0);
      }
      for (int m : allowed) {
        std::vector<Term> t;
        for (const auto& [mn, xv] : x_[crew])
          if (mn.first == m && mn.second != m && (s_.node_is_depot(mn.second) || ok.count(mn.second)))
            t.push_back({xv, 1});
        row(names::idx("assigned", {nodes[m], cid}), t, Sense::Eq, 1);
      }
    }
    for (const auto& [arc, v] : fx.arcs) {
      const auto [m, n, c] = arc;
      auto it = x_[c].find({m, n});
      if (it == x_[c].end()) {
        if (v == 0) continue;
        throw ModelError("fixing references a missing arc " + nodes[m] + "->" + nodes[n]);
      }
      const std::string nm = names::idx("fix", {nodes[m], nodes[n], s_.crews[c].id});
      if (m_.has_constraint(nm)) continue;
      row(nm, {{it->second, 1}}, Sense::Eq, v);
    }
    for (const auto& [name, v] : fx.pins) {
      auto j = m_.find(name);
      if (!j) throw ModelError("pin references unknown variable '" + name + "'");
      row("pin" + name, {{*j, 1}}, Sense::Eq, v);
    }
  }

  double task_hours(int node, int crew) const {
    if (s_.node_is_depot(node)) return 0.0;
    return s_.repair_hours(node, crew);
  }

  const std::vector<std::map<std::pair<int, int>, int>>& arcs() const { return x_; }
  const std::vector<std::vector<int>>& alpha() const { return alpha_; }

 private:
  const Scenario& s_;
  BigMPolicy M_;
  int H_;
  MilpModel m_;
  std::vector<std::map<std::pair<int, int>, int>> x_;
  std::vector<std::vector<int>> alpha_;
  std::vector<std::vector<double>> earliest_;
  std::vector<std::vector<int>> f_;
  std::vector<std::vector<int>> y_;
  std::vector<std::vector<int>> u_;
  std::vector<bool> bonded_;
};

}  // namespace detail

/// Joint repair routing and restoration model over the scenario horizon.
inline MilpModel build_dsrrp(const Scenario& s, const RouteFixings& fx = {}, const BigMPolicy& big = {}) {
  detail::ModelBuilder b(s, big);
  if (!s.damages.empty()) b.add_routing(true, true);
  b.add_operation(-1);
  if (!s.damages.empty()) b.apply(fx);
  return std::move(b.model());
}

/// Operation over the horizon with each damage repaired at or after a given
/// step (no crews modeled).
inline MilpModel build_operation(const Scenario& s, const std::vector<int>& release_step) {
  if (release_step.size() != s.damages.size()) throw ModelError("one release step per damage expected");
  detail::ModelBuilder b(s, {});
  b.add_release_steps(release_step);
  b.add_operation(-1);
  return std::move(b.model());
}

/// One-step operation model before any repair: damaged lines out, no routing.
inline MilpModel build_initial_reconfiguration(const Scenario& s) {
  detail::ModelBuilder b(s, {}, 1);
  b.add_operation(0);
  return std::move(b.model());
}

/// L1: damaged lines whose loss cuts some critical bus off from every
/// source; L2: remaining three-phase damaged lines; L3: the rest.
struct PrioritySets {
  std::vector<int> l1, l2, l3;  // damage indices
};

inline PrioritySets classify_priority_sets(const Scenario& s) {
  const int nb = static_cast<int>(s.buses.size());
  std::vector<int> sources;
  for (int i = 0; i < nb; ++i)
    if (s.buses[i].has_dg()) sources.push_back(i);
  std::vector<std::vector<std::pair<int, int>>> adj(nb);
  for (int k = 0; k < static_cast<int>(s.lines.size()); ++k) {
    const int a = s.bus_index(s.lines[k].from), b = s.bus_index(s.lines[k].to);
    adj[a].push_back({b, k});
    adj[b].push_back({a, k});
  }
  auto reaches = [&](int target, int skip) {
    std::vector<char> seen(nb, 0);
    std::vector<int> stack(sources.begin(), sources.end());
    for (int v : sources) seen[v] = 1;
    while (!stack.empty()) {
      const int v = stack.back();
      stack.pop_back();
      if (v == target) return true;
      for (auto [w, k] : adj[v])
        if (k != skip && !seen[w]) {
          seen[w] = 1;
          stack.push_back(w);
        }
    }
    return false;
  };
  PrioritySets ps;
  for (int m = 0; m < static_cast<int>(s.damages.size()); ++m) {
    const int k = s.line_index(s.damages[m].line);
    bool critical_path = false;
    for (int i = 0; i < nb && !critical_path; ++i) {
      if (!s.buses[i].critical || s.buses[i].has_dg()) continue;
      if (reaches(i, -1) && !reaches(i, k)) critical_path = true;
    }
    const auto& ph = s.lines[k].phases;
    if (critical_path) ps.l1.push_back(m);
    else if (ph[0] && ph[1] && ph[2]) ps.l2.push_back(m);
    else ps.l3.push_back(m);
  }
  return ps;
}

/// Routing-only model weighting line-crew arrival by repair priority.
inline MilpModel build_priority(const Scenario& s, PriorityWeights w = {}, const RouteFixings& fx = {}) {
  if (!(w.w1 > w.w2 && w.w2 > w.w3 && w.w3 > 0)) throw ModelError("priority weights must satisfy w1 > w2 > w3 > 0");
  detail::ModelBuilder b(s, {});
  if (s.damages.empty()) return std::move(b.model());
  b.add_routing(true, true);
  const PrioritySets ps = classify_priority_sets(s);
  std::vector<double> weight(s.damages.size(), w.w3);
  for (int m : ps.l1) weight[m] = w.w1;
  for (int m : ps.l2) weight[m] = w.w2;
  for (int c : s.line_crews())
    for (int m = 0; m < static_cast<int>(s.damages.size()); ++m)
      if (b.alpha()[c][m] >= 0) b.model().add_objective(b.alpha()[c][m], weight[m]);
  b.apply(fx);
  return std::move(b.model());
}

// ---------------------------------------------------------------------------
// Assignment model

class AssignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline MilpModel build_assignment(const Scenario& s) {
  const int nd = static_cast<int>(s.damages.size());
  const int nw = static_cast<int>(s.depots.size());
  const int nr = s.resource_count();
  for (int r = 0; r < nr; ++r) {
    double need = 0, have = 0;
    for (const auto& d : s.damages) need += d.resources[r];
    for (const auto& w : s.depots) have += w.stock[r];
    if (need > have + 1e-9)
      throw AssignmentError("resource '" + (r < static_cast<int>(s.params.resource_names.size()) ? s.params.resource_names[r]
                                                                                                  : std::to_string(r)) +
                            "': damages need " + std::to_string(need) + " units, depots hold " + std::to_string(have));
  }
  const BigMPolicy M = BigMPolicy::derive(s);
  const auto& nodes = s.nodes();
  MilpModel m;
  std::map<std::pair<int, int>, int> A;  // (damage, crew)
  for (int c = 0; c < static_cast<int>(s.crews.size()); ++c) {
    const bool line = s.crews[c].kind == CrewKind::Line;
    for (int d = 0; d < nd; ++d) {
      if (!line && !s.damages[d].tree_blocked()) continue;
      A[{d, c}] = m.add_var(line ? names::AL(nodes[d], s.crews[c].id) : names::AT(nodes[d], s.crews[c].id),
                            VarKind::Binary);
    }
  }
  for (int d = 0; d < nd; ++d) {
    std::vector<Term> tl, tt;
    for (int c = 0; c < static_cast<int>(s.crews.size()); ++c) {
      auto it = A.find({d, c});
      if (it == A.end()) continue;
      (s.crews[c].kind == CrewKind::Line ? tl : tt).push_back({it->second, 1});
    }
    m.add_constraint(names::idx("assign_line", {nodes[d]}), tl, Sense::Eq, 1);
    if (s.damages[d].tree_blocked()) m.add_constraint(names::idx("assign_tree", {nodes[d]}), tt, Sense::Eq, 1);
  }
  const double objective_repeat = nd;  // the depot penalty sits inside the sum over damages
  std::map<std::pair<int, int>, std::vector<Term>> stock_rows;
  for (int c = 0; c < static_cast<int>(s.crews.size()); ++c) {
    const auto& crew = s.crews[c];
    const bool line = crew.kind == CrewKind::Line;
    const int home = s.node_index(crew.start);
    // Pairwise distances between damages given to the same crew.
    for (int a = 0; a < nd; ++a)
      for (int b = 0; b < nd; ++b) {
        if (a == b || !A.count({a, c}) || !A.count({b, c})) continue;
        const int dv = m.add_var(names::d(nodes[a], nodes[b], crew.id), VarKind::Continuous, 0, kInf);
        m.set_objective(dv, 0.5);
        m.add_constraint(names::idx("pair", {nodes[a], nodes[b], crew.id}),
                         {{dv, 1}, {A[{a, c}], -s.distance_km(a, b)}, {A[{b, c}], -s.distance_km(a, b)}}, Sense::Ge,
                         -s.distance_km(a, b));
      }
    std::vector<int> depot_d;
    for (int a = 0; a < nd; ++a) {
      if (!A.count({a, c})) continue;
      const int dv = m.add_var(names::d(nodes[home], nodes[a], crew.id), VarKind::Continuous, 0, kInf);
      m.set_objective(dv, 1.0);
      m.add_constraint(names::idx("reach", {nodes[home], nodes[a], crew.id}),
                       {{dv, 1}, {A[{a, c}], -s.distance_km(home, a)}}, Sense::Ge, 0);
      depot_d.push_back(dv);
    }
    if (!line || nr == 0) continue;
    for (int w = 0; w < nw; ++w) {
      const int wn = nd + w;
      const bool at = wn == home;
      std::vector<Term> cap;
      for (int r = 0; r < nr; ++r) {
        const int rc = m.add_var(names::ResC(crew.id, nodes[wn], r), VarKind::Continuous, 0, kInf);
        cap.push_back({rc, s.params.resource_weights[r]});
        stock_rows[{w, r}].push_back({rc, 1});
      }
      if (at) {
        const int zv = m.add_var(names::z(nodes[wn], crew.id), VarKind::Binary);
        const int pv = m.add_var(names::P(crew.id, nodes[wn]), VarKind::Continuous, 0, kInf);
        m.set_objective(pv, objective_repeat);
        cap.push_back({zv, -crew.capacity});
        m.add_constraint(names::idx("capacity", {nodes[wn], crew.id}), cap, Sense::Le, crew.capacity);
        for (int dv : depot_d)
          m.add_constraint("penalty" + m.var(dv).name.substr(1), {{pv, 1}, {dv, -2}, {zv, -M.dist}}, Sense::Ge,
                           -M.dist);
      } else {
        m.add_constraint(names::idx("capacity", {nodes[wn], crew.id}), cap, Sense::Le, 0);
      }
    }
    for (int r = 0; r < nr; ++r) {
      std::vector<Term> t;
      for (int w = 0; w < nw; ++w) t.push_back({m.at(names::ResC(crew.id, nodes[nd + w], r)), 1});
      for (int a = 0; a < nd; ++a)
        if (s.damages[a].resources[r] > 0) t.push_back({A[{a, c}], -static_cast<double>(s.damages[a].resources[r])});
      m.add_constraint(names::idx("supply", {crew.id, std::to_string(r)}), t, Sense::Ge, 0);
    }
  }
  for (auto& [wr, t] : stock_rows)
    m.add_constraint(names::idx("stock", {s.depots[wr.first].id, std::to_string(wr.second)}), t, Sense::Le,
                     s.depots[wr.first].stock[wr.second]);
  return m;
}

/// Damaged nodes per crew, from an assignment solution.
struct CrewAssignment {
  std::vector<std::vector<int>> damages_of;  // crew -> damage indices

  RouteFixings as_fixings() const {
    RouteFixings fx;
    for (int c = 0; c < static_cast<int>(damages_of.size()); ++c) fx.assignment[c] = damages_of[c];
    return fx;
  }
};

inline CrewAssignment decode_assignment(const Scenario& s, const MilpModel& m, const std::vector<double>& x) {
  CrewAssignment a;
  a.damages_of.assign(s.crews.size(), {});
  const auto& nodes = s.nodes();
  for (int c = 0; c < static_cast<int>(s.crews.size()); ++c)
    for (int d = 0; d < static_cast<int>(s.damages.size()); ++d) {
      const std::string nm = s.crews[c].kind == CrewKind::Line ? names::AL(nodes[d], s.crews[c].id)
                                                               : names::AT(nodes[d], s.crews[c].id);
      auto v = m.find(nm);
      if (v && x[*v] > 0.5) a.damages_of[c].push_back(d);
    }
  return a;
}

// ---------------------------------------------------------------------------
// Restriction operators

/// Adds the per-crew assignment restriction as equality rows.
inline MilpModel restrict_to_assignment(const Scenario& s, const CrewAssignment& a, const BigMPolicy& big = {}) {
  return build_dsrrp(s, a.as_fixings(), big);
}

/// Fixes every arc whose ends both lie outside the freed set.
inline RouteFixings route_subset_fixings(const Scenario& s, const Route& incumbent, const std::set<int>& freed,
                                         RouteFixings base = {}) {
  const int nc = static_cast<int>(s.crews.size());
  for (int c = 0; c < nc; ++c) {
    const auto cn = s.crew_nodes(c);
    for (int m : cn) {
      if (freed.count(m)) continue;
      for (int n : cn) {
        if (freed.count(n) || !detail::arc_exists(s, m, n, c)) continue;
        const Arc a{m, n, c};
        if (base.arcs.count(a)) continue;
        base.arcs[a] = incumbent.count(a) ? 1 : 0;
      }
    }
  }
  return base;
}

/// Copies values onto hints by variable name (models built from the same
/// scenario share names).
inline void set_hints_by_name(MilpModel& target, const MilpModel& source, const std::vector<double>& x) {
  target.hints.clear();
  for (int j = 0; j < source.num_vars(); ++j)
    if (auto v = target.find(source.var(j).name)) target.hints[*v] = x[j];
}

// ---------------------------------------------------------------------------
// Decoding

struct CrewItinerary {
  std::string crew;
  std::vector<std::string> stops;   // node ids, start depot first
  std::vector<double> arrival_h;    // hours, per stop
};

struct RoutingSolution {
  Route route;
  std::vector<CrewItinerary> crews;
  std::map<std::string, int> repair_step;      // damage line -> f step
  std::map<std::string, double> repair_start;  // damage line -> line-crew arrival, hours
};

inline Route decode_route(const Scenario& s, const MilpModel& m, const std::vector<double>& x) {
  Route r;
  const auto& nodes = s.nodes();
  for (int c = 0; c < static_cast<int>(s.crews.size()); ++c) {
    const auto cn = s.crew_nodes(c);
    for (int a : cn)
      for (int b : cn) {
        if (!detail::arc_exists(s, a, b, c)) continue;
        auto v = m.find(names::x(nodes[a], nodes[b], s.crews[c].id));
        if (v && x[*v] > 0.5) r.insert({a, b, c});
      }
  }
  return r;
}

inline RoutingSolution decode_routing(const Scenario& s, const MilpModel& m, const std::vector<double>& x) {
  RoutingSolution out;
  out.route = decode_route(s, m, x);
  const auto& nodes = s.nodes();
  const double dt = s.params.dt_hours;
  for (int c = 0; c < static_cast<int>(s.crews.size()); ++c) {
    CrewItinerary it;
    it.crew = s.crews[c].id;
    const int phi0 = s.node_index(s.crews[c].start);
    const int phi1 = s.node_index(s.crews[c].end);
    int cur = phi0;
    it.stops.push_back(nodes[cur]);
    it.arrival_h.push_back(0.0);
    for (std::size_t guard = 0; guard <= nodes.size(); ++guard) {
      int next = -1;
      for (const auto& [a, b, cc] : out.route)
        if (cc == c && a == cur) next = b;
      if (next < 0) break;
      it.stops.push_back(nodes[next]);
      const double leg = it.arrival_h.back() + (s.node_is_depot(cur) ? 0.0 : s.repair_hours(cur, c)) +
                         s.travel_hours(cur, next);
      double arr = leg;
      if (auto v = m.find(names::alpha(nodes[next], s.crews[c].id)); v && next != phi0) arr = x[*v] * dt;
      it.arrival_h.push_back(arr);
      cur = next;
      if (cur == phi1) break;
    }
    out.crews.push_back(std::move(it));
  }
  for (int d = 0; d < static_cast<int>(s.damages.size()); ++d) {
    for (int t = 1; t <= s.horizon(); ++t)
      if (auto v = m.find(names::f(nodes[d], t)); v && x[*v] > 0.5) out.repair_step[nodes[d]] = t;
    for (int c : s.line_crews())
      for (const auto& [a, b, cc] : out.route)
        if (cc == c && a == d)
          if (auto v = m.find(names::alpha(nodes[d], s.crews[c].id))) out.repair_start[nodes[d]] = x[*v] * dt;
  }
  return out;
}

struct OperationSolution {
  int horizon = 0;
  std::vector<std::vector<int>> y;      // bus x step (index 0 unused)
  std::vector<std::vector<int>> u;      // line x step, step 0 = initial state
  std::vector<std::vector<int>> gamma;  // line x step
  std::vector<double> served_kw;        // per step, steady-state demand of served buses
  std::vector<double> pct_served;
};

inline OperationSolution decode_operation(const Scenario& s, const MilpModel& m, const std::vector<double>& x,
                                          int horizon = 0) {
  OperationSolution o;
  const int H = horizon > 0 ? horizon : s.horizon();
  o.horizon = H;
  const int nb = static_cast<int>(s.buses.size());
  const int nl = static_cast<int>(s.lines.size());
  o.y.assign(nb, std::vector<int>(H + 1, 0));
  o.u.assign(nl, std::vector<int>(H + 1, 0));
  o.gamma.assign(nl, std::vector<int>(H + 1, 0));
  o.served_kw.assign(H + 1, 0.0);
  o.pct_served.assign(H + 1, 0.0);
  for (int k = 0; k < nl; ++k) o.u[k][0] = s.is_damaged(k) ? 0 : s.initially_closed(k) ? 1 : 0;
  for (int t = 1; t <= H; ++t) {
    double total = 0.0;
    for (int i = 0; i < nb; ++i) {
      const double v = x[m.at(names::y(s.buses[i].id, t))];
      o.y[i][t] = v > 0.5;
      double pd = 0.0;
      for (int p = 0; p < 3; ++p) pd += s.buses[i].pd(p, t);
      total += pd;
      if (o.y[i][t]) o.served_kw[t] += pd;
    }
    o.pct_served[t] = total > 0 ? 100.0 * o.served_kw[t] / total : 100.0;
    for (int k = 0; k < nl; ++k) {
      o.u[k][t] = x[m.at(names::u(s.lines[k].id, t))] > 0.5;
      if (auto g = m.find(names::gamma(s.lines[k].id, t))) o.gamma[k][t] = x[*g] > 0.5;
    }
  }
  return o;
}

}  // namespace gridmend
