#include <gtest/gtest.h>

#include <map>
#include <set>

#include "gridmend/fieldsim.hpp"
#include "gridmend/service.hpp"
#include "support/toys.hpp"

using namespace gridmend;

namespace {

SearchParams search(std::uint64_t seed = 7) {
  SearchParams p;
  p.seed = seed;
  p.reset_count_on_growth = true;
  p.time_limit_s = 1e6;
  p.solve_time_limit_s = 120;
  return p;
}

EpisodeResult episode(const Scenario& s, FieldConfig fc, std::string* log = nullptr) {
  EmbeddedSolver solver;
  ManualClock clock(1.0);
  ReoptEngine eng(s, solver, search(), &clock);
  EpisodeResult r = run_episode(eng, fc);
  if (log) *log = eng.log().jsonl();
  return r;
}

}  // namespace

TEST(Perturbation, AddsTheDrawAndClampsAtTheFloor) {
  EXPECT_DOUBLE_EQ(perturbed_hours(2.5, 0.5, 0.25), 3.0);
  EXPECT_DOUBLE_EQ(perturbed_hours(2.5, -1.0, 0.25), 1.5);
  EXPECT_DOUBLE_EQ(perturbed_hours(1.0, -2.0, 0.25), 0.25);
  EXPECT_DOUBLE_EQ(perturbed_hours(0.25, 0.0, 0.25), 0.25);
}

TEST(Perturbation, DrawsStayInsideTheSpreadAndRepeatPerSeed) {
  for (std::uint64_t seed = 1000; seed < 1010; ++seed) {
    const Scenario s = toys::random_toy(seed, 12);
    const auto a = repair_time_draws(s, 42, 2.0), b = repair_time_draws(s, 42, 2.0);
    EXPECT_EQ(a, b);
    ASSERT_EQ(a.size(), s.damages.size());
    for (const auto& [line, d] : a) {
      EXPECT_GE(d, -2.0);
      EXPECT_LE(d, 2.0);
    }
    for (const auto& [line, h] : perturb_repair_times(s, 42, 2.0)) EXPECT_GE(h, 0.25);
    for (const auto& [line, d] : repair_time_draws(s, 42, 0.0)) EXPECT_EQ(d, 0.0);
  }
}

TEST(Episode, WithoutPerturbationTheTimelineIsThePlan) {
  const Scenario s = toys::random_toy(1007, 12);
  FieldConfig fc;
  fc.spread_h = 0.0;
  const EpisodeResult r = episode(s, fc);

  EmbeddedSolver solver;
  ManualClock clock(1.0);
  ReoptEngine eng(s, solver, search(), &clock);
  eng.run();
  EpisodeResult plan;
  plan.timeline = plan_timeline(*eng.store().get());
  EXPECT_EQ(r.timeline_csv(), plan.timeline_csv());
  EXPECT_DOUBLE_EQ(r.objective, eng.store().get()->objective);
  for (const auto& rep : r.repairs) EXPECT_DOUBLE_EQ(rep.actual_h, rep.estimated_h);
}

TEST(Episode, FieldReportsCarryThePerturbedHours) {
  for (std::uint64_t seed : {1007u, 1020u}) {
    const Scenario s = toys::random_toy(seed, 12);
    FieldConfig fc;
    fc.seed = 5;
    const EpisodeResult r = episode(s, fc);
    const auto draws = repair_time_draws(s, 5, 2.0);
    std::set<std::string> seen;
    for (const auto& e : r.events) {
      EXPECT_TRUE(seen.insert(e.line).second) << e.line;
      const int m = s.damage_index(e.line);
      bool matches = false;
      for (const auto& [crew, est] : s.damages[m].repair_hours)
        matches = matches || std::abs(e.hours - perturbed_hours(est, draws.at(e.line), 0.25)) < 1e-12;
      EXPECT_TRUE(matches) << e.line;
    }
    EXPECT_EQ(seen.size(), s.damages.size());
    for (const auto& rep : r.repairs) EXPECT_NEAR(rep.done_h - rep.start_h, rep.actual_h, 1e-9);
  }
}

TEST(Episode, ServiceIsMonotoneAndEachLineIsRepairedOnce) {
  for (std::uint64_t seed : {1003u, 1007u, 1012u, 1020u}) {
    const Scenario s = toys::random_toy(seed, 12);
    FieldConfig fc;
    fc.seed = seed;
    const EpisodeResult r = episode(s, fc);
    ASSERT_FALSE(r.timeline.empty());
    std::map<std::string, int> repaired;
    double prev = -1.0;
    for (const auto& row : r.timeline) {
      EXPECT_GE(row.pct_served, prev - 1e-9) << "seed " << seed << " step " << row.step;
      EXPECT_GE(row.pct_served, 0.0);
      EXPECT_LE(row.pct_served, 100.0 + 1e-9);
      prev = row.pct_served;
      for (const auto& l : row.repaired) ++repaired[l];
    }
    EXPECT_EQ(repaired.size(), s.damages.size()) << "seed " << seed;
    for (const auto& [l, n] : repaired) EXPECT_EQ(n, 1) << l;
    EXPECT_EQ(r.repairs.size(), s.damages.size());
    double kwh = 0.0;
    for (const auto& row : r.timeline) kwh += row.served_kw * s.params.dt_hours;
    EXPECT_NEAR(r.kwh_served, kwh, 1e-6);
  }
}

TEST(Episode, SameSeedsGiveIdenticalCsvAndLogs) {
  const Scenario s = toys::random_toy(1020, 12);
  FieldConfig fc;
  fc.seed = 3;
  std::string la, lb;
  const EpisodeResult a = episode(s, fc, &la), b = episode(s, fc, &lb);
  EXPECT_EQ(a.timeline_csv(), b.timeline_csv());
  EXPECT_EQ(a.load_served_csv(1.0), b.load_served_csv(1.0));
  EXPECT_EQ(la, lb);
}

TEST(Episode, CsvHeaders) {
  EpisodeResult r;
  TimelineRow row;
  row.step = 2;
  row.opened = {"a", "b"};
  row.repaired = {"c"};
  row.pct_served = 50;
  row.served_kw = 12.5;
  r.timeline.push_back(row);
  EXPECT_EQ(r.timeline_csv(), "step,opened,closed,repaired,pct_served\n2,a;b,,c,50\n");
  EXPECT_EQ(r.load_served_csv(0.5), "step,hour,served_kw,pct_served\n2,1,12.5,50\n");
}
