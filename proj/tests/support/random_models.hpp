#pragma once
// Small random MILPs exercising every bound shape and row sense.

#include <random>
#include <string>
#include <vector>

#include "gridmend/milp.hpp"

namespace testmodels {

using namespace gridmend;

inline MilpModel random_model(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> nv(1, 12), nc(0, 10), pick(0, 1000);
  std::uniform_real_distribution<double> coef(-50.0, 50.0);
  MilpModel m;
  const int n = nv(rng);
  for (int j = 0; j < n; ++j) {
    const int kind = pick(rng) % 4;
    std::string name = "v[" + std::to_string(j) + "," + std::to_string(pick(rng) % 7) + "]";
    if (kind == 0) {
      m.add_var(name, VarKind::Binary);
    } else if (kind == 1) {
      m.add_var(name, VarKind::Continuous, -kInf, kInf);
    } else if (kind == 2) {
      const double v = coef(rng);
      m.add_var(name, VarKind::Continuous, v, v);
    } else {
      const double lo = coef(rng) / 3.0;
      m.add_var(name, VarKind::Continuous, lo, lo + std::abs(coef(rng)) * 1.123456789);
    }
    if (pick(rng) % 3) m.set_objective(j, coef(rng) / 7.0);
  }
  if (pick(rng) % 2) m.set_objective_constant(coef(rng) * 13.0);
  const int rows = nc(rng);
  for (int i = 0; i < rows; ++i) {
    std::vector<Term> terms;
    for (int j = 0; j < n; ++j)
      if (pick(rng) % 2) terms.push_back({j, coef(rng) / 3.0});
    const Sense s = static_cast<Sense>(pick(rng) % 3);
    m.add_constraint("row_" + std::to_string(i), terms, s, coef(rng));
  }
  return m;
}

}  // namespace testmodels
