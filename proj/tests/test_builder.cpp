#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "gridmend/builder.hpp"
#include "gridmend/solver.hpp"
#include "support/invariants.hpp"
#include "support/toys.hpp"

using namespace gridmend;

namespace {

Scenario fixture(const std::string& name) {
  std::ifstream in(std::string(GRIDMEND_FIXTURES) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

Assignment run_embedded(const MilpModel& m, double tl = 60.0) {
  EmbeddedSolver solver;
  SolveParams sp;
  sp.time_limit_s = tl;
  return solver.solve(m, sp);
}

double value(const MilpModel& m, const Assignment& a, const std::string& name) { return a.values[m.at(name)]; }

// Objective recomputed from served buses and switch operations.
double restoration_cost(const Scenario& s, const MilpModel& m, const Assignment& a) {
  double cost = 0.0;
  const double dt = s.params.dt_hours;
  for (int t = 1; t <= s.horizon(); ++t) {
    for (int i = 0; i < static_cast<int>(s.buses.size()); ++i) {
      double pd = 0.0;
      for (int p = 0; p < 3; ++p) pd += s.buses[i].pd(p, t);
      if (value(m, a, names::y(s.buses[i].id, t)) < 0.5) cost += s.shed_cost(i) * pd * dt;
    }
    for (const auto& l : s.lines)
      if (l.operable()) cost += s.params.switch_cost * std::round(value(m, a, names::gamma(l.id, t)));
  }
  return cost;
}

bool scipy_available() { return std::system("python3 -c 'import scipy.optimize' >/dev/null 2>&1") == 0; }

std::string highs_command() {
  return std::string("external:python3 ") + GRIDMEND_TOOLS + "/highs_solve.py {lp} {sol} {time_limit}";
}

}  // namespace

TEST(Dsrrp, SolvedToysSatisfyStructuralInvariants) {
  for (std::uint64_t seed = 3000; seed < 3008; ++seed) {
    const Scenario s = toys::random_toy(seed, 8);
    const MilpModel m = build_dsrrp(s);
    const Assignment a = run_embedded(m);
    if (a.status == SolveStatus::Infeasible) {
      EmbeddedSolver oracle_solver;
      EXPECT_FALSE(std::isfinite(toys::brute_force(s, oracle_solver).objective)) << "seed " << seed;
      continue;
    }
    ASSERT_EQ(a.status, SolveStatus::Optimal) << "seed " << seed;
    EXPECT_TRUE(evaluate(m, a).feasible()) << "seed " << seed;
    const auto rep = invariants::check(s, m, a.values);
    EXPECT_TRUE(rep.ok()) << "seed " << seed << "\n" << rep.text();
    EXPECT_NEAR(a.objective, restoration_cost(s, m, a), 1e-6 * std::max(1.0, a.objective)) << "seed " << seed;
  }
}

TEST(Dsrrp, MatchesRouteEnumerationOnToys) {
  EmbeddedSolver solver;
  for (std::uint64_t seed = 1000; seed < 1004; ++seed) {
    const Scenario s = toys::random_toy(seed, 8);
    const auto oracle = toys::brute_force(s, solver);
    const Assignment a = run_embedded(build_dsrrp(s));
    ASSERT_EQ(a.status, SolveStatus::Optimal) << "seed " << seed;
    EXPECT_TRUE(toys::same_objective(a.objective, oracle.objective))
        << "seed " << seed << ": model " << a.objective << " oracle " << oracle.objective;
  }
}

TEST(Dsrrp, LineStatusFollowsCumulativeRepair) {
  const Scenario s = fixture("toy5.json").with_horizon(6);
  RouteFixings fx;
  for (int t = 1; t <= 6; ++t) fx.pins[names::f("2-3", t)] = t == 3 ? 1 : 0;
  const MilpModel m = build_dsrrp(s, fx);
  const Assignment a = run_embedded(m);
  ASSERT_EQ(a.status, SolveStatus::Optimal);
  std::vector<int> u;
  for (int t = 1; t <= 6; ++t) u.push_back(static_cast<int>(std::round(value(m, a, names::u("2-3", t)))));
  EXPECT_EQ(u, (std::vector<int>{0, 0, 1, 1, 1, 1}));
  EXPECT_TRUE(invariants::check(s, m, a.values).ok());
}

TEST(Dsrrp, RepairBeforeArrivalIsInfeasible) {
  // L1 needs 1 h of travel and 2 h of work: nothing can finish 2-3 by step 2.
  const Scenario s = fixture("toy5.json");
  RouteFixings fx;
  fx.pins[names::f("2-3", 2)] = 1;
  EXPECT_EQ(run_embedded(build_dsrrp(s, fx)).status, SolveStatus::Infeasible);
}

TEST(Dsrrp, ColdLoadPickupDoublesDemandForLambdaSteps) {
  for (double clpu : {1.0, 2.0}) {
    Scenario s = fixture("toy5.json");
    s.params.clpu_hours = clpu;
    s.finalize();
    const int lam = s.clpu_steps();
    ASSERT_EQ(lam, static_cast<int>(clpu));
    const MilpModel m = build_operation(s, {3, 5});
    const Assignment a = run_embedded(m);
    ASSERT_EQ(a.status, SolveStatus::Optimal);
    int pickups = 0;
    for (int i = 0; i < static_cast<int>(s.buses.size()); ++i) {
      const Bus& b = s.buses[i];
      int on_since = 0;
      for (int t = 1; t <= s.horizon(); ++t) {
        const bool on = value(m, a, names::y(b.id, t)) > 0.5;
        if (!on) continue;
        if (on_since == 0) {
          on_since = t;
          ++pickups;
        }
        for (int p = 0; p < 3; ++p) {
          if (!b.phases[p]) continue;
          const double expect = t - on_since < lam ? 2.0 * b.pd(p, t) : b.pd(p, t);
          EXPECT_NEAR(value(m, a, names::PL(b.id, p, t)), expect, 1e-6) << b.id << " t=" << t << " clpu=" << clpu;
        }
      }
    }
    EXPECT_GT(pickups, 0);
  }
}

TEST(Dsrrp, ServedBusesStayServed) {
  for (std::uint64_t seed = 3100; seed < 3106; ++seed) {
    const Scenario s = toys::random_toy(seed, 8);
    const MilpModel m = build_dsrrp(s);
    const Assignment a = run_embedded(m);
    if (a.status == SolveStatus::Infeasible) continue;
    ASSERT_TRUE(a.has_point());
    const OperationSolution op = decode_operation(s, m, a.values);
    for (std::size_t i = 0; i < s.buses.size(); ++i)
      for (int t = 2; t <= s.horizon(); ++t) EXPECT_GE(op.y[i][t], op.y[i][t - 1]) << "seed " << seed;
    for (int t = 2; t <= s.horizon(); ++t) EXPECT_GE(op.pct_served[t] + 1e-9, op.pct_served[t - 1]);
  }
}

TEST(Dsrrp, EmbeddedAndExternalSolversAgree) {
  if (!scipy_available()) GTEST_SKIP() << "python3 with scipy not available";
  auto external = make_solver(highs_command());
  EmbeddedSolver embedded;
  SolveParams sp;
  sp.time_limit_s = 60;
  std::vector<Scenario> cases{fixture("toy5.json")};
  for (std::uint64_t seed = 3200; seed < 3203; ++seed) cases.push_back(toys::random_toy(seed, 8));
  for (const auto& s : cases) {
    const MilpModel m = build_dsrrp(s);
    const Assignment a = embedded.solve(m, sp);
    const Assignment b = external->solve(m, sp);
    ASSERT_EQ(a.status, SolveStatus::Optimal);
    ASSERT_EQ(b.status, SolveStatus::Optimal) << b.message;
    EXPECT_TRUE(toys::same_objective(a.objective, b.objective)) << a.objective << " vs " << b.objective;
    EXPECT_TRUE(evaluate(m, b).feasible());
  }
}

TEST(Dsrrp, VariableAndRowNamesAreUniqueAndRoundTrip) {
  std::vector<Scenario> cases{fixture("toy5.json")};
  for (std::uint64_t seed = 3300; seed < 3310; ++seed) cases.push_back(toys::random_toy(seed));
  for (const auto& s : cases) {
    for (const MilpModel& m : {build_dsrrp(s), build_priority(s), build_assignment(s), build_initial_reconfiguration(s)}) {
      std::set<std::string> vars, rows;
      for (const auto& v : m.vars()) EXPECT_TRUE(vars.insert(v.name).second) << v.name;
      for (const auto& c : m.constraints()) EXPECT_TRUE(rows.insert(c.name).second) << c.name;
      const std::string lp = export_lp(m);
      EXPECT_EQ(export_lp(parse_lp(lp)), lp);
    }
  }
}

TEST(Dsrrp, FeederModelHasEveryFamily) {
  const Scenario s = fixture("ieee123.json");
  const MilpModel m = build_dsrrp(s);
  std::set<std::string> fams;
  for (const auto& v : m.vars()) fams.insert(v.name.substr(0, v.name.find('[')));
  for (const char* f : {"x", "alpha", "f", "E", "ResC", "y", "X", "U", "u", "gamma", "PK", "QK", "PG", "QG", "PL", "QL"})
    EXPECT_TRUE(fams.count(f)) << f;
}

TEST(Dsrrp, UnknownPinIsRejected) {
  RouteFixings fx;
  fx.pins["y[nowhere,1]"] = 1;
  EXPECT_THROW(build_dsrrp(fixture("toy5.json"), fx), ModelError);
}

// --- initial reconfiguration -------------------------------------------------

TEST(InitialReconfiguration, FeederIslandsTheBus28Microgrid) {
  const Scenario s = fixture("ieee123.json");
  const MilpModel m = build_initial_reconfiguration(s);
  const Assignment a = run_embedded(m, 120);
  ASSERT_TRUE(a.has_point()) << to_string(a.status);
  const OperationSolution op = decode_operation(s, m, a.values, 1);
  std::vector<bool> closed(s.lines.size());
  for (std::size_t k = 0; k < s.lines.size(); ++k) closed[k] = op.u[k][1];
  EXPECT_FALSE(closed[s.line_index("28-168")]);
  const auto islands = energized_islands(s, closed);
  std::set<std::string> island;
  for (const auto& isl : islands)
    for (int b : isl)
      if (s.buses[b].id == "28")
        for (int c : isl) island.insert(s.buses[c].id);
  EXPECT_EQ(island, (std::set<std::string>{"28", "29", "30", "250"}));
  EXPECT_TRUE(op.y[s.bus_index("30")][1]);
  EXPECT_FALSE(op.y[s.bus_index("1")][1]);
  invariants::Report rep;
  invariants::check_operation(s, invariants::Reader(m, a.values), 1, rep, false);
  EXPECT_TRUE(rep.ok()) << rep.text();
}

// --- priority routing ----------------------------------------------------------

namespace {

// Best weighted arrival over every visiting order of a single line crew.
double priority_oracle(const Scenario& s, const std::vector<double>& weight) {
  const int nd = static_cast<int>(s.damages.size());
  const int c = s.line_crews().at(0);
  const double dt = s.params.dt_hours;
  std::vector<int> order(nd);
  std::iota(order.begin(), order.end(), 0);
  double best = kInf;
  for (const auto& perm : toys::detail::permutations(order))
    for (const auto& seq : toys::detail::with_depot_stops(s, c, perm)) {
      int at = s.node_index(s.crews[c].start);
      double clock = 0.0, load = 0.0, cost = 0.0;
      bool ok = true;
      for (int node : seq) {
        clock += s.travel_hours(at, node);
        at = node;
        if (s.node_is_depot(node)) {
          load = 0.0;
          continue;
        }
        cost += weight[node] * clock / dt;
        clock += s.repair_hours(node, c);
        load += s.damages[node].resources[0] * s.params.resource_weights[0];
        ok = ok && load <= s.crews[c].capacity + 1e-9 && clock / dt <= s.horizon() + 1e-9;
      }
      if (ok) best = std::min(best, cost);
    }
  return best;
}

}  // namespace

TEST(PriorityModel, MatchesOrderEnumerationForOneCrew) {
  int tried = 0;
  for (std::uint64_t seed = 4000; tried < 8 && seed < 4400; ++seed) {
    const Scenario s = toys::random_toy(seed, 10);
    if (s.line_crews().size() != 1 || !s.tree_crews().empty() || s.damages.size() < 2) continue;
    ++tried;
    const PriorityWeights w{10, 5, 1};
    const PrioritySets ps = classify_priority_sets(s);
    std::vector<double> weight(s.damages.size(), w.w3);
    for (int m : ps.l1) weight[m] = w.w1;
    for (int m : ps.l2) weight[m] = w.w2;
    const double expect = priority_oracle(s, weight);
    const Assignment a = run_embedded(build_priority(s, w));
    if (!std::isfinite(expect)) {
      EXPECT_EQ(a.status, SolveStatus::Infeasible) << "seed " << seed;
      continue;
    }
    ASSERT_EQ(a.status, SolveStatus::Optimal) << "seed " << seed;
    EXPECT_TRUE(toys::same_objective(a.objective, expect)) << "seed " << seed << ": " << a.objective << " vs " << expect;
  }
  EXPECT_EQ(tried, 8);
}

TEST(PriorityModel, RejectsUnorderedWeights) {
  EXPECT_THROW(build_priority(fixture("toy5.json"), {5, 5, 1}), ModelError);
  EXPECT_THROW(build_priority(fixture("toy5.json"), {10, 5, 0}), ModelError);
}

namespace {

// Critical path membership by union-find over the graph with one line removed.
std::set<int> critical_path_oracle(const Scenario& s) {
  const int nb = static_cast<int>(s.buses.size());
  auto comp = [&](int skip) {
    std::vector<int> p(nb);
    std::iota(p.begin(), p.end(), 0);
    std::function<int(int)> find = [&](int v) { return p[v] == v ? v : p[v] = find(p[v]); };
    for (int k = 0; k < static_cast<int>(s.lines.size()); ++k)
      if (k != skip) p[find(s.bus_index(s.lines[k].from))] = find(s.bus_index(s.lines[k].to));
    std::vector<int> out(nb);
    for (int v = 0; v < nb; ++v) out[v] = find(v);
    return out;
  };
  auto fed = [&](const std::vector<int>& c, int bus) {
    for (int g = 0; g < nb; ++g)
      if (s.buses[g].has_dg() && c[g] == c[bus]) return true;
    return false;
  };
  const auto whole = comp(-1);
  std::set<int> out;
  for (int m = 0; m < static_cast<int>(s.damages.size()); ++m) {
    const auto cut = comp(s.line_index(s.damages[m].line));
    for (int i = 0; i < nb; ++i)
      if (s.buses[i].critical && !s.buses[i].has_dg() && fed(whole, i) && !fed(cut, i)) out.insert(m);
  }
  return out;
}

}  // namespace

TEST(PriorityModel, CriticalPathSetMatchesConnectivityOracle) {
  std::vector<Scenario> cases{fixture("toy5.json"), fixture("ieee123.json")};
  for (std::uint64_t seed = 4500; seed < 4560; ++seed) cases.push_back(toys::random_toy(seed));
  for (const auto& s : cases) {
    const PrioritySets ps = classify_priority_sets(s);
    EXPECT_EQ(std::set<int>(ps.l1.begin(), ps.l1.end()), critical_path_oracle(s));
    std::vector<int> all;
    for (const auto* v : {&ps.l1, &ps.l2, &ps.l3}) all.insert(all.end(), v->begin(), v->end());
    std::sort(all.begin(), all.end());
    std::vector<int> want(s.damages.size());
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(all, want);
    for (int m : ps.l2) {
      const auto& ph = s.lines[s.line_index(s.damages[m].line)].phases;
      EXPECT_TRUE(ph[0] && ph[1] && ph[2]);
    }
    for (int m : ps.l3) {
      const auto& ph = s.lines[s.line_index(s.damages[m].line)].phases;
      EXPECT_FALSE(ph[0] && ph[1] && ph[2]);
    }
  }
}

TEST(PriorityModel, FeederSetsFollowPhasing) {
  const Scenario s = fixture("ieee123.json");
  const PrioritySets ps = classify_priority_sets(s);
  auto in = [&](const std::vector<int>& v, const std::string& line) {
    return std::count(v.begin(), v.end(), s.damage_index(line)) > 0;
  };
  // Every critical bus on this feeder keeps a DG behind a second path.
  EXPECT_TRUE(ps.l1.empty());
  EXPECT_TRUE(in(ps.l2, "7-8"));
  EXPECT_TRUE(in(ps.l2, "76-86"));
  EXPECT_TRUE(in(ps.l3, "113-114"));
  EXPECT_TRUE(in(ps.l3, "15-17"));
}

// --- assignment ----------------------------------------------------------------

namespace {

// Four damages on a chain, two line crews at different depots.
Scenario assignment_case(std::uint64_t seed, double capacity) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> h(1, 6), r(0, 3);
  nlohmann::json j = nlohmann::json::parse(R"({
    "params": {"dt_hours": 1, "horizon": 40, "impedance_unit": "pu", "resource_names": ["pole", "wire"],
               "resource_weights": [2, 1]},
    "network": {"buses": [{"id": "S", "substation": true, "dg_p_kw": [900,900,900], "dg_q_kvar": [900,900,900]},
                          {"id": "1", "p_kw": [10,10,10]}, {"id": "2", "p_kw": [10,10,10]},
                          {"id": "3", "p_kw": [10,10,10]}, {"id": "4", "p_kw": [10,10,10]},
                          {"id": "5", "p_kw": [10,10,10]}],
                "lines": [{"from": "S", "to": "1", "kind": "breaker"}, {"from": "1", "to": "2"},
                          {"from": "2", "to": "3"}, {"from": "3", "to": "4"}, {"from": "4", "to": "5"},
                          {"from": "S", "to": "5", "kind": "switch"}]},
    "crews": [], "depots": [], "damage": [], "travel": {}
  })");
  for (auto& l : j["network"]["lines"]) {
    l["r"] = {{0.01, 0, 0}, {0, 0.01, 0}, {0, 0, 0.01}};
    l["x"] = {{0.01, 0, 0}, {0, 0.01, 0}, {0, 0, 0.01}};
  }
  j["params"]["initially_open"] = {"S-5"};
  j["crews"] = {{{"id", "A"}, {"kind", "line"}, {"depot", "W1"}, {"capacity", capacity}},
                {{"id", "B"}, {"kind", "line"}, {"depot", "W2"}, {"capacity", capacity}}};
  j["depots"] = {{{"id", "W1"}, {"stock", {20, 20}}}, {{"id", "W2"}, {"stock", {20, 20}}}};
  std::vector<std::string> nodes{"W1", "W2", "1-2", "2-3", "3-4", "4-5"};
  for (int d = 2; d < 6; ++d)
    j["damage"].push_back({{"line", nodes[d]}, {"repair_hours", {{"A", 1}, {"B", 1}}}, {"resources", {r(rng), r(rng)}}});
  std::vector<std::vector<double>> hours(6, std::vector<double>(6, 0.0));
  for (int a = 0; a < 6; ++a)
    for (int b = a + 1; b < 6; ++b) hours[a][b] = hours[b][a] = 0.25 * h(rng);
  j["travel"] = {{"nodes", nodes}, {"hours", hours}};
  return parse_scenario(j.dump());
}

// Objective of one line-crew split, or +inf if a crew cannot carry its load
// even with one refill.
double assignment_cost(const Scenario& s, const std::vector<int>& owner) {
  const int nd = static_cast<int>(s.damages.size());
  double total = 0.0;
  for (int c = 0; c < static_cast<int>(s.crews.size()); ++c) {
    const int home = s.node_index(s.crews[c].start);
    double load = 0.0, far = 0.0;
    for (int a = 0; a < nd; ++a) {
      if (owner[a] != c) continue;
      total += s.distance_km(home, a);
      far = std::max(far, s.distance_km(home, a));
      for (int r = 0; r < s.resource_count(); ++r) load += s.damages[a].resources[r] * s.params.resource_weights[r];
      for (int b = 0; b < nd; ++b)
        if (b != a && owner[b] == c) total += 0.5 * s.distance_km(a, b);
    }
    const double cap = s.crews[c].capacity;
    if (load > 2 * cap + 1e-9) return kInf;
    if (load > cap + 1e-9) total += nd * 2.0 * far;
  }
  return total;
}

}  // namespace

TEST(Assignment, MatchesEnumerationOfAllSixteenSplits) {
  int with_refill = 0;
  for (std::uint64_t seed = 1; seed <= 12; ++seed)
    for (double cap : {6.0, 12.0, 40.0}) {
      const Scenario s = assignment_case(seed, cap);
      double best = kInf;
      bool refill = false;
      std::vector<int> owner(4);
      for (int mask = 0; mask < 16; ++mask) {
        for (int d = 0; d < 4; ++d) owner[d] = (mask >> d) & 1;
        const double v = assignment_cost(s, owner);
        if (v < best) {
          best = v;
          refill = false;
          double l0 = 0, l1 = 0;
          for (int d = 0; d < 4; ++d)
            for (int r = 0; r < 2; ++r)
              (owner[d] ? l1 : l0) += s.damages[d].resources[r] * s.params.resource_weights[r];
          refill = l0 > cap || l1 > cap;
        }
      }
      const MilpModel m = build_assignment(s);
      const Assignment a = run_embedded(m);
      if (!std::isfinite(best)) {
        EXPECT_EQ(a.status, SolveStatus::Infeasible) << "seed " << seed << " cap " << cap;
        continue;
      }
      with_refill += refill;
      ASSERT_EQ(a.status, SolveStatus::Optimal) << "seed " << seed << " cap " << cap;
      EXPECT_TRUE(toys::same_objective(a.objective, best)) << "seed " << seed << " cap " << cap << ": " << a.objective
                                                           << " vs " << best;
      const CrewAssignment ca = decode_assignment(s, m, a.values);
      for (int d = 0; d < 4; ++d) owner[d] = std::count(ca.damages_of[1].begin(), ca.damages_of[1].end(), d) ? 1 : 0;
      EXPECT_TRUE(toys::same_objective(assignment_cost(s, owner), best));
    }
  EXPECT_GT(with_refill, 0);
}

TEST(Assignment, ShortStockIsReportedBeforeSolving) {
  nlohmann::json j = nlohmann::json::parse(serialize_scenario(fixture("toy5.json")));
  j["depots"][0]["stock"] = {1};
  EXPECT_THROW(build_assignment(parse_scenario(j.dump())), AssignmentError);
}

TEST(Assignment, RestrictedModelKeepsEachDamageWithItsCrew) {
  for (std::uint64_t seed = 3400; seed < 3406; ++seed) {
    const Scenario s = toys::random_toy(seed, 8);
    const MilpModel am = build_assignment(s);
    const Assignment aa = run_embedded(am);
    ASSERT_EQ(aa.status, SolveStatus::Optimal);
    const CrewAssignment ca = decode_assignment(s, am, aa.values);
    const MilpModel m = restrict_to_assignment(s, ca);
    const Assignment a = run_embedded(m);
    if (!a.has_point()) continue;
    const RoutingSolution r = decode_routing(s, m, a.values);
    for (const auto& it : r.crews) {
      const int c = s.crew_index(it.crew);
      for (const auto& stop : it.stops) {
        const int n = s.node_index(stop);
        if (s.node_is_depot(n)) continue;
        EXPECT_TRUE(std::count(ca.damages_of[c].begin(), ca.damages_of[c].end(), n)) << stop << " by " << it.crew;
      }
    }
  }
}
