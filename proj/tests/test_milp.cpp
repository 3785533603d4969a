#include <gtest/gtest.h>

#include <random>

#include "gridmend/milp.hpp"
#include "support/random_models.hpp"

using namespace gridmend;

TEST(LpFormat, NumberFormattingIsCompact) {
  EXPECT_EQ(format_number(3.0), "3");
  EXPECT_EQ(format_number(-1.5), "-1.5");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(kInf), "inf");
  EXPECT_EQ(format_number(1.0 / 3.0), "0.333333333333");
}

TEST(LpFormat, ExportShape) {
  MilpModel m;
  const int x = m.add_var("x", VarKind::Binary);
  const int y = m.add_var("y", VarKind::Continuous, 0, 4);
  m.set_objective(x, 3);
  m.set_objective(y, -1.5);
  m.set_objective_constant(10);
  m.add_constraint("c1", {{x, 1}, {y, 2}}, Sense::Le, 5);
  const std::string lp = export_lp(m);
  EXPECT_EQ(lp,
            "minimize\n obj: 3 x - 1.5 y + 10\nsubject to\n c1: 1 x + 2 y <= 5\nbounds\n 0 <= x <= 1\n"
            " 0 <= y <= 4\nbinary\n x\nend\n");
}

TEST(LpFormat, RoundTripRandomModels) {
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const MilpModel m = testmodels::random_model(rng);
    const std::string a = export_lp(m);
    const MilpModel back = parse_lp(a);
    ASSERT_EQ(export_lp(back), a) << "model " << rep;
    ASSERT_EQ(back.num_vars(), m.num_vars());
    ASSERT_EQ(back.num_constraints(), m.num_constraints());
  }
}

TEST(LpFormat, ParseErrorsCarryPosition) {
  const std::string bad =
      "minimize\n obj: 1 x\nsubject to\n c1: 1 x <== 3\nbounds\n 0 <= x <= 1\nbinary\nend\n";
  try {
    parse_lp(bad);
    FAIL() << "expected a parse error";
  } catch (const LpParseError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_GT(e.column(), 1);
  }
  EXPECT_THROW(parse_lp("minimize\n obj: 1 x\nbounds\n 0 <= y <= 1\nend\n"), LpParseError);
  EXPECT_THROW(parse_lp("subject to\n c: 1 x <= 1\nend\n"), LpParseError);
  EXPECT_THROW(parse_lp("minimize\n obj: 2 q\nsubject to\n c: 1 x <= abc\nbounds\n 0 <= x <= 1\nend\n"),
               LpParseError);
}

TEST(Solution, ParseAndWrite) {
  MilpModel m;
  m.add_var("x", VarKind::Binary);
  m.add_var("y", VarKind::Continuous, 0, 10);
  Assignment a;
  a.status = SolveStatus::Optimal;
  a.objective = 2.5;
  a.values = {1.0, 0.25};
  const std::string text = write_solution(m, a);
  const Assignment b = parse_solution(text, m);
  EXPECT_EQ(b.status, SolveStatus::Optimal);
  EXPECT_DOUBLE_EQ(b.objective, 2.5);
  EXPECT_DOUBLE_EQ(b.values[1], 0.25);
  EXPECT_THROW(parse_solution("status optimal\nobj 1\nzz 1\n", m), SolutionParseError);
  EXPECT_THROW(parse_solution("obj 1\n", m), SolutionParseError);
  EXPECT_THROW(parse_solution("status great\nobj 1\n", m), SolutionParseError);
}

TEST(Evaluate, ReportsEachKindOfViolation) {
  MilpModel m;
  const int x = m.add_var("x", VarKind::Binary);
  const int y = m.add_var("y", VarKind::Continuous, 0, 2);
  m.set_objective(y, 2);
  m.set_objective_constant(1);
  m.add_constraint("cap", {{x, 1}, {y, 1}}, Sense::Le, 2);
  auto ok = evaluate(m, std::vector<double>{1, 1});
  EXPECT_TRUE(ok.feasible());
  EXPECT_DOUBLE_EQ(ok.objective, 3.0);
  auto bad = evaluate(m, std::vector<double>{0.5, 3});
  std::vector<std::string> names;
  for (auto& v : bad.violations) names.push_back(v.name);
  EXPECT_NE(std::find(names.begin(), names.end(), "integrality:x"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "bound:y"), names.end());
  EXPECT_NE(std::find(names.begin(), names.end(), "cap"), names.end());
}

TEST(Model, RejectsDuplicates) {
  MilpModel m;
  m.add_var("x", VarKind::Binary);
  EXPECT_THROW(m.add_var("x", VarKind::Binary), ModelError);
  m.add_constraint("c", {{0, 1}}, Sense::Le, 1);
  EXPECT_THROW(m.add_constraint("c", {{0, 1}}, Sense::Le, 1), ModelError);
}
