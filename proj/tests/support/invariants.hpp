#pragma once
// Structural checks of a solved repair/restoration point, written against
// variable names only.

#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "gridmend/builder.hpp"

namespace invariants {

using namespace gridmend;

class Reader {
 public:
  Reader(const MilpModel& m, const std::vector<double>& x) : m_(m), x_(x) {}
  std::optional<double> get(const std::string& name) const {
    auto v = m_.find(name);
    if (!v) return std::nullopt;
    return x_[*v];
  }
  double at(const std::string& name) const { return x_[m_.at(name)]; }
  bool on(const std::string& name) const {
    auto v = get(name);
    return v && *v > 0.5;
  }

 private:
  const MilpModel& m_;
  const std::vector<double>& x_;
};

struct Report {
  std::vector<std::string> failures;
  void fail(const std::string& what) {
    if (failures.size() < 20) failures.push_back(what);
  }
  bool ok() const { return failures.empty(); }
  std::string text() const {
    std::string out;
    for (const auto& f : failures) out += f + "\n";
    return out;
  }
};

// Cycle check by union-find over closed lines.
inline bool has_cycle(const Scenario& s, const std::vector<bool>& closed) {
  std::vector<int> parent(s.buses.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int v) { return parent[v] == v ? v : parent[v] = find(parent[v]); };
  for (std::size_t k = 0; k < s.lines.size(); ++k) {
    if (!closed[k]) continue;
    const int a = find(s.bus_index(s.lines[k].from));
    const int b = find(s.bus_index(s.lines[k].to));
    if (a == b) return true;
    parent[a] = b;
  }
  return false;
}

/// Operation side: monotone service, isolation, radiality, repair coupling,
/// switching cost.
inline void check_operation(const Scenario& s, const Reader& r, int H, Report& rep, bool with_repair_steps) {
  constexpr double tol = 1e-6;
  for (const auto& b : s.buses)
    for (int t = 2; t <= H; ++t)
      if (r.at(names::y(b.id, t)) < r.at(names::y(b.id, t - 1)) - tol)
        rep.fail("service drops at bus " + b.id + " step " + std::to_string(t));

  for (int t = 1; t <= H; ++t) {
    std::vector<bool> closed(s.lines.size());
    for (std::size_t k = 0; k < s.lines.size(); ++k) {
      const Line& l = s.lines[k];
      const double u = r.at(names::u(l.id, t));
      closed[k] = u > 0.5;
      if (!l.operable() && !s.is_damaged(static_cast<int>(k)) && !closed[k])
        rep.fail("plain line " + l.id + " open at step " + std::to_string(t));
      if (s.is_damaged(static_cast<int>(k)) && !closed[k]) {
        for (const auto& bus : {l.from, l.to}) {
          for (int p = 0; p < 3; ++p)
            if (r.at(names::U(bus, p, t)) > tol)
              rep.fail("bus " + bus + " energized next to damaged " + l.id + " at step " + std::to_string(t));
          if (r.at(names::X(bus, t)) > tol || r.at(names::y(bus, t)) > tol)
            rep.fail("bus " + bus + " not isolated next to damaged " + l.id + " at step " + std::to_string(t));
        }
      }
      if (l.operable()) {
        const double prev = t == 1 ? (s.initially_closed(static_cast<int>(k)) ? 1.0 : 0.0)
                                   : r.at(names::u(l.id, t - 1));
        if (r.at(names::gamma(l.id, t)) < std::abs(u - prev) - tol)
          rep.fail("switching of " + l.id + " not counted at step " + std::to_string(t));
      }
    }
    if (has_cycle(s, closed)) rep.fail("closed loop at step " + std::to_string(t));
    for (const auto& b : s.buses)
      if (r.at(names::y(b.id, t)) > r.at(names::X(b.id, t)) + tol)
        rep.fail("bus " + b.id + " served without energization at step " + std::to_string(t));
  }

  if (!with_repair_steps) return;
  for (const auto& d : s.damages) {
    double cum = 0.0, total = 0.0;
    for (int t = 1; t <= H; ++t) {
      const double f = r.at(names::f(d.line, t));
      cum += f;
      total += f;
      if (std::abs(r.at(names::u(d.line, t)) - cum) > tol)
        rep.fail("line " + d.line + " status differs from cumulative repair at step " + std::to_string(t));
    }
    if (std::abs(total - 1.0) > tol) rep.fail("line " + d.line + " repaired " + std::to_string(total) + " times");
  }
}

/// Routing side: degrees, flow conservation, single path per crew, arrival
/// times, tree-before-line, repair step after completion, resources.
inline void check_routing(const Scenario& s, const Reader& r, Report& rep) {
  constexpr double tol = 1e-6;
  const auto& nodes = s.nodes();
  const int nd = static_cast<int>(s.damages.size());
  const int nn = static_cast<int>(nodes.size());
  const double dt = s.params.dt_hours;
  std::vector<int> line_visits(nd, 0), tree_visits(nd, 0);

  for (int c = 0; c < static_cast<int>(s.crews.size()); ++c) {
    const Crew& crew = s.crews[c];
    const bool tree = crew.kind == CrewKind::Tree;
    const int phi0 = s.node_index(crew.start);
    const int phi1 = s.node_index(crew.end);
    std::vector<std::vector<int>> succ(nn);
    std::vector<int> indeg(nn, 0), outdeg(nn, 0);
    for (int a = 0; a < nn; ++a)
      for (int b = 0; b < nn; ++b)
        if (r.on(names::x(nodes[a], nodes[b], crew.id))) {
          succ[a].push_back(b);
          ++outdeg[a];
          ++indeg[b];
        }
    if (outdeg[phi0] != 1) rep.fail(crew.id + " leaves its start " + std::to_string(outdeg[phi0]) + " times");
    if (indeg[phi1] != 1) rep.fail(crew.id + " reaches its end " + std::to_string(indeg[phi1]) + " times");
    for (int n = 0; n < nn; ++n) {
      if (n == phi0 || n == phi1) continue;
      if (indeg[n] != outdeg[n]) rep.fail(crew.id + " breaks flow conservation at " + nodes[n]);
      if (indeg[n] > 1) rep.fail(crew.id + " visits " + nodes[n] + " twice");
    }
    // Walk the path; every used arc must lie on it.
    int at = phi0, arcs = 0, used = std::accumulate(outdeg.begin(), outdeg.end(), 0);
    double alpha_prev = 0.0, work_prev = 0.0;
    for (int guard = 0; guard <= nn; ++guard) {
      if (succ[at].empty()) break;
      const int next = succ[at][0];
      ++arcs;
      if (next != phi0 || phi0 != phi1) {
        const double alpha = r.at(names::alpha(nodes[next], crew.id));
        if (alpha < alpha_prev + (work_prev + s.travel_hours(at, next)) / dt - tol)
          rep.fail(crew.id + " arrives at " + nodes[next] + " too early");
        alpha_prev = alpha;
      }
      if (next < nd) {
        (tree ? tree_visits : line_visits)[next]++;
        work_prev = s.repair_hours(next, c);
        if (!tree) {
          const auto& d = s.damages[next];
          for (int q = 0; q < s.resource_count(); ++q) {
            const double e = r.at(names::E(crew.id, nodes[next], q));
            if (e < d.resources[q] - tol) rep.fail(crew.id + " short of resource at " + nodes[next]);
          }
          double weight = 0.0;
          for (int q = 0; q < s.resource_count(); ++q)
            weight += r.at(names::E(crew.id, nodes[next], q)) * s.params.resource_weights[q];
          if (weight > crew.capacity + tol) rep.fail(crew.id + " over capacity at " + nodes[next]);
          // Resource flow along the arc leaving this damage.
          if (!succ[next].empty()) {
            const int after = succ[next][0];
            if (after != phi0)
              for (int q = 0; q < s.resource_count(); ++q) {
                const double here = r.at(names::E(crew.id, nodes[next], q));
                const double there = r.at(names::E(crew.id, nodes[after], q));
                if (after < nd && std::abs(there - (here - d.resources[q])) > 1e-5)
                  rep.fail(crew.id + " resource flow broken on " + nodes[next] + "->" + nodes[after]);
              }
          }
        }
      } else {
        work_prev = 0.0;
      }
      at = next;
      if (at == phi1) break;
    }
    if (at != phi1) rep.fail(crew.id + " route does not reach its end depot");
    if (arcs != used) rep.fail(crew.id + " has arcs off its path (subtour)");
  }
  for (int m = 0; m < nd; ++m) {
    if (line_visits[m] != 1) rep.fail(nodes[m] + " repaired by " + std::to_string(line_visits[m]) + " line crews");
    if (s.damages[m].tree_blocked() != (tree_visits[m] == 1) || tree_visits[m] > 1)
      rep.fail(nodes[m] + " cleared by " + std::to_string(tree_visits[m]) + " tree crews");
  }
  // Tree-before-line and repair completion.
  for (int m = 0; m < nd; ++m) {
    double line_alpha = 0.0, line_done = 0.0;
    for (int c : s.line_crews())
      if (auto a = r.get(names::alpha(nodes[m], s.crews[c].id)); a && line_visits[m] && *a > tol) {
        line_alpha = *a;
        line_done = *a + s.repair_hours(m, c) / dt;
      }
    for (int c : s.tree_crews())
      if (s.damages[m].tree_blocked())
        if (auto a = r.get(names::alpha(nodes[m], s.crews[c].id)); a && *a > tol)
          if (line_alpha < *a + s.repair_hours(m, c) / dt - tol)
            rep.fail(nodes[m] + " repaired before the tree crew cleared it");
    double step = 0.0;
    for (int t = 1; t <= s.horizon(); ++t) step += t * r.at(names::f(nodes[m], t));
    if (step < line_done - tol) rep.fail(nodes[m] + " marked repaired before the work completes");
  }
  // Depot stock.
  for (int w = 0; w < static_cast<int>(s.depots.size()); ++w)
    for (int q = 0; q < s.resource_count(); ++q) {
      double drawn = 0.0;
      for (int c : s.line_crews()) drawn += r.at(names::ResC(s.crews[c].id, s.depots[w].id, q));
      if (drawn > s.depots[w].stock[q] + tol) rep.fail("depot " + s.depots[w].id + " overdrawn");
    }
}

inline Report check(const Scenario& s, const MilpModel& m, const std::vector<double>& x) {
  Report rep;
  Reader r(m, x);
  const bool routed = !s.damages.empty();
  check_operation(s, r, s.horizon(), rep, routed);
  if (routed) check_routing(s, r, rep);
  return rep;
}

}  // namespace invariants
