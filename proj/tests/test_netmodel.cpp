#include <gtest/gtest.h>

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "gridmend/netmodel.hpp"
#include "support/toys.hpp"

using namespace gridmend;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(GRIDMEND_FIXTURES) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int components(const Scenario& s) {
  std::vector<bool> all(s.lines.size(), true);
  return static_cast<int>(energized_islands(s, all).size());
}

// Every bus on a fundamental cycle has degree two within it.
bool is_cycle(const Scenario& s, const Loop& loop) {
  std::map<int, int> deg;
  for (int k : loop) {
    ++deg[s.bus_index(s.lines[k].from)];
    ++deg[s.bus_index(s.lines[k].to)];
  }
  for (const auto& [b, d] : deg)
    if (d != 2) return false;
  return deg.size() == loop.size();
}

nlohmann::json toy5_json() { return nlohmann::json::parse(read_fixture("toy5.json")); }

}  // namespace

TEST(Scenario, ParsesToyFixture) {
  const Scenario s = parse_scenario(read_fixture("toy5.json"));
  EXPECT_EQ(s.buses.size(), 7u);
  EXPECT_EQ(s.lines.size(), 7u);
  EXPECT_EQ(s.horizon(), 8);
  EXPECT_TRUE(s.horizon_pinned());
  ASSERT_EQ(s.nodes().size(), 3u);
  EXPECT_EQ(s.nodes()[0], "2-3");
  EXPECT_EQ(s.nodes()[1], "6-5");
  EXPECT_EQ(s.nodes()[2], "D");
  EXPECT_TRUE(s.node_is_depot(2));
  EXPECT_FALSE(s.node_is_depot(1));
  EXPECT_FALSE(s.initially_closed(s.line_index("4-5")));
  EXPECT_TRUE(s.is_damaged(s.line_index("6-5")));
  EXPECT_TRUE(s.damages[1].tree_blocked());
  EXPECT_DOUBLE_EQ(s.repair_hours(0, s.crew_index("L1")), 2.0);
  EXPECT_DOUBLE_EQ(s.repair_hours(0, s.crew_index("T1")), 0.0);
  EXPECT_DOUBLE_EQ(s.repair_hours(1, s.crew_index("T1")), 1.0);
  // Tree crews only see tree-blocked damages and depots.
  EXPECT_EQ(s.crew_nodes(s.crew_index("T1")), (std::vector<int>{1, 2}));
  EXPECT_EQ(s.crew_nodes(s.crew_index("L1")), (std::vector<int>{0, 1, 2}));
}

TEST(Scenario, CriticalBusesTakeCriticalPriority) {
  const Scenario s = parse_scenario(read_fixture("toy5.json"));
  EXPECT_DOUBLE_EQ(s.buses[s.bus_index("3")].priority, s.params.critical_priority);
  EXPECT_DOUBLE_EQ(s.buses[s.bus_index("2")].priority, 1.0);
}

TEST(Scenario, SerializationRoundTripsOnFixtures) {
  for (const char* f : {"toy5.json", "ieee123.json"}) {
    const Scenario a = parse_scenario(read_fixture(f));
    const std::string once = serialize_scenario(a);
    const Scenario b = parse_scenario(once);
    EXPECT_EQ(serialize_scenario(b), once) << f;
    EXPECT_EQ(b.horizon(), a.horizon()) << f;
  }
}

TEST(Scenario, SerializationRoundTripsOnRandomToys) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const Scenario a = toys::random_toy(seed);
    const std::string once = serialize_scenario(a);
    const Scenario b = parse_scenario(once);
    ASSERT_EQ(serialize_scenario(b), once) << "seed " << seed;
    ASSERT_EQ(b.nodes(), a.nodes()) << "seed " << seed;
    for (int m = 0; m < static_cast<int>(a.nodes().size()); ++m)
      for (int n = 0; n < static_cast<int>(a.nodes().size()); ++n)
        ASSERT_DOUBLE_EQ(b.travel_hours(m, n), a.travel_hours(m, n));
  }
}

TEST(Topology, LoopCountMatchesCycleRank) {
  std::vector<Scenario> cases{parse_scenario(read_fixture("toy5.json")), parse_scenario(read_fixture("ieee123.json"))};
  for (std::uint64_t seed = 100; seed < 160; ++seed) cases.push_back(toys::random_toy(seed));
  for (const auto& s : cases) {
    const auto loops = enumerate_loops(s);
    const int rank = static_cast<int>(s.lines.size()) - static_cast<int>(s.buses.size()) + components(s);
    ASSERT_EQ(static_cast<int>(loops.size()), rank);
    std::set<Loop> distinct(loops.begin(), loops.end());
    EXPECT_EQ(distinct.size(), loops.size());
    for (const auto& l : loops) EXPECT_TRUE(is_cycle(s, l));
  }
}

TEST(Topology, IslandsPartitionBusesAndRespectClosedLines) {
  for (std::uint64_t seed = 200; seed < 240; ++seed) {
    const Scenario s = toys::random_toy(seed);
    const auto closed = initial_line_status(s);
    const auto islands = energized_islands(s, closed);
    std::vector<int> where(s.buses.size(), -1);
    for (int i = 0; i < static_cast<int>(islands.size()); ++i)
      for (int b : islands[i]) {
        ASSERT_EQ(where[b], -1);
        where[b] = i;
      }
    for (int w : where) ASSERT_GE(w, 0);
    for (int k = 0; k < static_cast<int>(s.lines.size()); ++k)
      if (closed[k]) EXPECT_EQ(where[s.bus_index(s.lines[k].from)], where[s.bus_index(s.lines[k].to)]);
    for (int k = 0; k < static_cast<int>(s.lines.size()); ++k)
      if (s.is_damaged(k)) EXPECT_FALSE(closed[k]);
  }
}

TEST(Topology, ToyIslandsAfterDamage) {
  const Scenario s = parse_scenario(read_fixture("toy5.json"));
  const auto islands = energized_islands(s, initial_line_status(s));
  // 2-3 and 6-5 are out and 4-5 is open: {S,1,2,6}, {3,4}, {5}.
  ASSERT_EQ(islands.size(), 3u);
  auto ids = [&](const std::vector<int>& v) {
    std::set<std::string> out;
    for (int b : v) out.insert(s.buses[b].id);
    return out;
  };
  EXPECT_EQ(ids(islands[0]), (std::set<std::string>{"S", "1", "2", "6"}));
  EXPECT_EQ(ids(islands[1]), (std::set<std::string>{"3", "4"}));
  EXPECT_EQ(ids(islands[2]), (std::set<std::string>{"5"}));
}

struct BadCase {
  const char* what;
  std::function<void(nlohmann::json&)> edit;
  const char* message;
};

TEST(Scenario, RejectsMalformedDocuments) {
  const std::vector<BadCase> cases{
      {"no travel", [](auto& j) { j.erase("travel"); }, "missing section 'travel'"},
      {"dangling bus", [](auto& j) { j["network"]["lines"][2]["to"] = "99"; }, "dangling to-bus '99'"},
      {"duplicate bus", [](auto& j) { j["network"]["buses"][2]["id"] = "1"; }, "duplicate id"},
      {"phase mismatch", [](auto& j) { j["network"]["lines"][2]["phases"] = "ab"; }, "not present on both end buses"},
      {"damaged switch", [](auto& j) { j["damage"][0]["line"] = "1-2"; }, "only plain lines may be damaged"},
      {"unknown line", [](auto& j) { j["damage"][0]["line"] = "7-8"; }, "dangling line '7-8'"},
      {"missing crew time", [](auto& j) { j["damage"][0]["repair_hours"] = nlohmann::json::object(); },
       "missing repair time for crew 'L1'"},
      {"tree time for line crew", [](auto& j) { j["damage"][1]["tree_hours"] = {{"L1", 1}}; },
       "clearing time given for line crew"},
      {"asymmetric travel", [](auto& j) { j["travel"]["hours"][0][1] = 3; }, "asymmetric entry"},
      {"missing travel node", [](auto& j) { j["travel"]["nodes"][1] = "D2"; }, "dangling node 'D2'"},
      {"bad clpu", [](auto& j) { j["params"]["clpu_hours"] = 1.5; }, "clpu_hours"},
      {"short horizon", [](auto& j) { j["params"]["horizon"] = 1; }, "horizon too short"},
      {"open plain line", [](auto& j) { j["params"]["initially_open"] = {"2-3"}; }, "is not a switch"},
      {"stock size", [](auto& j) { j["depots"][0]["stock"] = {1, 2}; }, "stock must list every resource type"},
      {"load on absent phase", [](auto& j) { j["network"]["buses"][2]["p_kw"] = {100, 5, 0}; }, "absent phase b"},
      {"bad kind", [](auto& j) { j["network"]["lines"][1]["kind"] = "fuse"; }, "unknown kind 'fuse'"},
      {"not json", [](auto&) {}, "not valid JSON"},
  };
  for (const auto& c : cases) {
    nlohmann::json j = toy5_json();
    c.edit(j);
    const std::string text = std::string(c.what) == "not json" ? "{\"params\": " : j.dump();
    try {
      parse_scenario(text);
      ADD_FAILURE() << c.what << ": accepted";
    } catch (const ScenarioError& e) {
      EXPECT_NE(std::string(e.what()).find(c.message), std::string::npos) << c.what << ": " << e.what();
    }
  }
}

TEST(Scenario, RepairUpdatesNeverShrinkADerivedHorizon) {
  nlohmann::json j = toy5_json();
  j["params"].erase("horizon");
  const Scenario s = parse_scenario(j.dump());
  ASSERT_FALSE(s.horizon_pinned());
  const int H = s.horizon();
  const Scenario longer = s.with_repair_hours("2-3", 6.0);
  EXPECT_GT(longer.horizon(), H);
  const Scenario shorter = longer.with_repair_hours("2-3", 0.5);
  EXPECT_EQ(shorter.horizon(), longer.horizon());
  EXPECT_DOUBLE_EQ(shorter.damages[0].repair_hours.at("L1"), 0.5);
}

TEST(Scenario, PinnedHorizonRejectsUpdatesThatDoNotFit) {
  const Scenario s = parse_scenario(read_fixture("toy5.json"));
  EXPECT_THROW(s.with_repair_hours("2-3", 20.0), ScenarioError);
  const Scenario wide = s.with_horizon(30);
  EXPECT_EQ(wide.horizon(), 30);
  EXPECT_EQ(wide.with_repair_hours("2-3", 20.0).horizon(), 30);
}

TEST(Feeder123, CarriesTheRestorationCaseData) {
  const Scenario s = parse_scenario(read_fixture("ieee123.json"));
  EXPECT_EQ(s.damages.size(), 14u);
  EXPECT_EQ(s.line_crews().size(), 6u);
  EXPECT_EQ(s.tree_crews().size(), 4u);
  EXPECT_EQ(s.depots.size(), 3u);
  EXPECT_EQ(s.params.resource_weights, (std::vector<double>{3, 2.5, 2, 1, 4, 1}));
  for (int c : s.line_crews()) EXPECT_DOUBLE_EQ(s.crews[c].capacity, 30.0);

  int blocked = 0;
  for (const auto& d : s.damages) blocked += d.tree_blocked();
  EXPECT_EQ(blocked, 6);
  const int m = s.damage_index("76-86");
  EXPECT_DOUBLE_EQ(s.damages[m].tree_hours.at("T1"), 2.0);
  EXPECT_DOUBLE_EQ(s.damages[m].repair_hours.at("L1"), 6.0);
  EXPECT_EQ(s.damages[s.damage_index("18-163")].resources, (std::vector<int>{0, 2, 0, 1, 0, 2}));

  int dgs = 0;
  std::set<std::string> critical;
  for (const auto& b : s.buses) {
    if (b.critical) critical.insert(b.id);
    if (b.has_dg() && !b.substation) {
      ++dgs;
      EXPECT_NEAR(b.p_dg_max[0] + b.p_dg_max[1] + b.p_dg_max[2], 300.0, 1e-9);
      EXPECT_NEAR(b.q_dg_max[0] + b.q_dg_max[1] + b.q_dg_max[2], 250.0, 1e-3);
    }
  }
  EXPECT_EQ(dgs, 7);
  EXPECT_EQ(critical, (std::set<std::string>{"30", "48", "49", "53", "65", "76"}));

  int switches = 0;
  for (const auto& l : s.lines) switches += l.kind == LineKind::Switch;
  EXPECT_EQ(switches, 24);
  EXPECT_FALSE(s.initially_closed(s.line_index("151-300")));
  EXPECT_FALSE(s.initially_closed(s.line_index("54-94")));
  EXPECT_TRUE(s.initially_closed(s.line_index("28-168")));
  EXPECT_EQ(enumerate_loops(s).size(), 2u);
}
