#pragma once
// Embedded MILP solver: light root reduction plus LP-based branch and bound.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "gridmend/milp.hpp"
#include "gridmend/simplex.hpp"

namespace gridmend {

/// Result of fixing columns and folding singleton/empty rows into bounds.
struct ReducedModel {
  bool infeasible = false;
  std::string reason;
  std::shared_ptr<LpData> lp;
  std::vector<int> col_of;      // original var -> reduced column or -1
  std::vector<int> orig_of;     // reduced column -> original var
  std::vector<double> fixed;    // value of every original var (valid where col_of == -1)
  std::vector<char> binary;     // per reduced column
};

inline ReducedModel reduce_model(const MilpModel& m) {
  constexpr double tol = 1e-9;
  ReducedModel out;
  const int n = m.num_vars();
  std::vector<double> lb(n), ub(n);
  for (int j = 0; j < n; ++j) {
    lb[j] = m.var(j).lb;
    ub[j] = m.var(j).ub;
    if (m.var(j).kind == VarKind::Binary) {
      lb[j] = std::ceil(lb[j] - 1e-6);
      ub[j] = std::floor(ub[j] + 1e-6);
    }
  }
  auto is_fixed = [&](int j) { return ub[j] - lb[j] <= tol; };
  std::vector<char> row_live(m.num_constraints(), 1);
  bool changed = true;
  while (changed && !out.infeasible) {
    changed = false;
    for (int i = 0; i < m.num_constraints(); ++i) {
      if (!row_live[i]) continue;
      const Constraint& c = m.constraints()[i];
      int free_count = 0, last = -1;
      double coef = 0.0, fixed_act = 0.0;
      for (const auto& t : c.terms) {
        if (is_fixed(t.var)) {
          fixed_act += t.coef * lb[t.var];
        } else {
          ++free_count;
          last = t.var;
          coef = t.coef;
        }
      }
      if (free_count > 1) continue;
      const double rhs = c.rhs - fixed_act;
      const double slack = 1e-7 * (1.0 + std::abs(c.rhs));
      if (free_count == 0) {
        const bool ok = c.sense == Sense::Le ? 0.0 <= rhs + slack
                        : c.sense == Sense::Ge ? 0.0 >= rhs - slack
                                               : std::abs(rhs) <= slack;
        if (!ok) {
          out.infeasible = true;
          out.reason = "row " + c.name + " cannot hold with fixed variables";
          break;
        }
        row_live[i] = 0;
        continue;
      }
      const double b = rhs / coef;
      double lo = -kInf, hi = kInf;
      const Sense s = coef > 0 ? c.sense : c.sense == Sense::Le ? Sense::Ge : c.sense == Sense::Ge ? Sense::Le : Sense::Eq;
      if (s == Sense::Le || s == Sense::Eq) hi = b;
      if (s == Sense::Ge || s == Sense::Eq) lo = b;
      if (m.var(last).kind == VarKind::Binary) {
        lo = std::ceil(lo - 1e-6);
        hi = std::floor(hi + 1e-6);
      }
      lb[last] = std::max(lb[last], lo);
      ub[last] = std::min(ub[last], hi);
      if (lb[last] > ub[last] + 1e-7 * (1.0 + std::abs(lb[last]))) {
        out.infeasible = true;
        out.reason = "row " + c.name + " empties the domain of " + m.var(last).name;
        break;
      }
      if (ub[last] < lb[last]) ub[last] = lb[last];
      row_live[i] = 0;
      changed = true;
    }
  }
  out.fixed.assign(n, 0.0);
  out.col_of.assign(n, -1);
  if (out.infeasible) return out;
  auto lp = std::make_shared<LpData>();
  for (int j = 0; j < n; ++j) {
    if (is_fixed(j)) {
      out.fixed[j] = lb[j];
      lp->c0 += m.objective()[j] * lb[j];
      continue;
    }
    out.col_of[j] = lp->n++;
    out.orig_of.push_back(j);
    lp->c.push_back(m.objective()[j]);
    lp->lb.push_back(lb[j]);
    lp->ub.push_back(ub[j]);
    out.binary.push_back(m.var(j).kind == VarKind::Binary);
  }
  lp->c0 += m.objective_constant();
  for (int i = 0; i < m.num_constraints(); ++i) {
    if (!row_live[i]) continue;
    const Constraint& c = m.constraints()[i];
    std::vector<std::pair<int, double>> r;
    double fixed_act = 0.0;
    for (const auto& t : c.terms) {
      if (out.col_of[t.var] < 0) fixed_act += t.coef * out.fixed[t.var];
      else r.emplace_back(out.col_of[t.var], t.coef);
    }
    const double rhs = c.rhs - fixed_act;
    lp->rows.push_back(std::move(r));
    lp->rlb.push_back(c.sense == Sense::Le ? -kInf : rhs);
    lp->rub.push_back(c.sense == Sense::Ge ? kInf : rhs);
    ++lp->m;
  }
  out.lp = std::move(lp);
  return out;
}

struct BnbParams {
  double time_limit_s = 60.0;
  long node_limit = 10'000'000;
  double rel_gap = 0.0;
  const std::atomic<bool>* stop = nullptr;
  std::size_t memory_budget = std::size_t{1} << 30;
  double int_tol = 1e-6;
  double feas_tol = 1e-6;
};

struct BnbResult {
  SolveStatus status = SolveStatus::Error;
  std::vector<double> x;  // original variable space
  double objective = kInf;
  double bound = -kInf;
  long nodes = 0;
  long lp_iterations = 0;
  std::string message;
};

namespace detail {

struct BnbNode {
  long id;
  int depth;
  double bound;
  std::vector<std::pair<int, double>> lower;  // (column, new lb) along the path
  std::vector<std::pair<int, double>> upper;
  std::shared_ptr<const Simplex> warm;
  int branched = -1;  // column fixed last, for pseudo-cost learning
  bool up = false;
  double frac = 0.0;  // distance the branch moved that column
};

struct NodeOrder {
  bool operator()(const std::shared_ptr<BnbNode>& a, const std::shared_ptr<BnbNode>& b) const {
    if (a->bound != b->bound) return a->bound < b->bound;
    return a->id < b->id;
  }
};

}  // namespace detail

class BranchAndBound {
 public:
  BranchAndBound(const MilpModel& model, BnbParams params) : model_(model), p_(params) {}

  BnbResult run() {
    start_ = std::chrono::steady_clock::now();
    deadline_ = start_ + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                             std::chrono::duration<double>(p_.time_limit_s));
    red_ = reduce_model(model_);
    BnbResult res;
    if (red_.infeasible) {
      res.status = SolveStatus::Infeasible;
      res.message = red_.reason;
      return res;
    }
    order_.resize(red_.lp->n);
    for (int k = 0; k < red_.lp->n; ++k) order_[k] = k;
    // Ties in branching go to the lexicographically smallest name.
    std::sort(order_.begin(), order_.end(), [&](int a, int b) {
      return model_.var(red_.orig_of[a]).name < model_.var(red_.orig_of[b]).name;
    });
    rank_.resize(red_.lp->n);
    for (int r = 0; r < red_.lp->n; ++r) rank_[order_[r]] = r;
    klass_.assign(red_.lp->n, 0);
    pc_sum_[0].assign(red_.lp->n, 0.0);
    pc_sum_[1].assign(red_.lp->n, 0.0);
    pc_cnt_[0].assign(red_.lp->n, 0);
    pc_cnt_[1].assign(red_.lp->n, 0);
    for (auto [v, pr] : model_.branch_priority)
      if (red_.col_of[v] >= 0) klass_[red_.col_of[v]] = pr;

    auto root = std::make_shared<Simplex>(red_.lp);
    try_hint(*root);

    auto node0 = std::make_shared<detail::BnbNode>();
    node0->id = next_id_++;
    node0->depth = 0;
    node0->bound = -kInf;
    dive_.push_back(node0);
    root_template_ = root;

    bool limit_hit = false;
    double best_open = kInf;
    while (!dive_.empty() || !open_.empty()) {
      if (stopped()) {
        limit_hit = true;
        break;
      }
      if (nodes_ >= p_.node_limit) {
        limit_hit = true;
        break;
      }
      std::shared_ptr<detail::BnbNode> node;
      if (!dive_.empty() && !has_incumbent()) {
        node = dive_.back();
        dive_.pop_back();
      } else {
        for (auto& d : dive_) open_.insert(d);
        dive_.clear();
        node = *open_.begin();
        open_.erase(open_.begin());
      }
      if (prunable(node->bound)) continue;
      process(node);
    }
    if (limit_hit) {
      for (auto& d : dive_) best_open = std::min(best_open, d->bound);
      for (auto& d : open_) best_open = std::min(best_open, d->bound);
      best_open = std::min(best_open, incumbent_obj_);
    } else {
      best_open = incumbent_obj_;
    }
    res.nodes = nodes_;
    res.lp_iterations = lp_iters_;
    res.bound = best_open;
    if (has_incumbent()) {
      res.x = incumbent_;
      res.objective = incumbent_obj_;
      res.status = limit_hit ? SolveStatus::Feasible : SolveStatus::Optimal;
    } else {
      res.status = limit_hit ? SolveStatus::TimeLimit : SolveStatus::Infeasible;
      if (numerical_trouble_ && !limit_hit) {
        res.status = SolveStatus::Error;
        res.message = "numerical trouble in LP relaxations";
      }
    }
    return res;
  }

 private:
  const MilpModel& model_;
  BnbParams p_;
  ReducedModel red_;
  std::vector<int> order_, rank_, klass_;
  // Pseudo-costs: bound gain per unit change, [0] down, [1] up.
  std::vector<double> pc_sum_[2];
  std::vector<int> pc_cnt_[2];
  double pc_all_sum_[2] = {0.0, 0.0};
  long pc_all_cnt_[2] = {0, 0};

  double pseudo_cost(int k, int dir) const {
    if (pc_cnt_[dir][k] > 0) return pc_sum_[dir][k] / pc_cnt_[dir][k];
    if (pc_all_cnt_[dir] > 0) return pc_all_sum_[dir] / pc_all_cnt_[dir];
    return 1.0;
  }

  void learn(const detail::BnbNode& node, double bound) {
    if (node.branched < 0 || !std::isfinite(node.bound) || node.frac <= 0) return;
    const double gain = std::max(0.0, bound - node.bound) / node.frac;
    const int dir = node.up ? 1 : 0;
    pc_sum_[dir][node.branched] += gain;
    ++pc_cnt_[dir][node.branched];
    pc_all_sum_[dir] += gain;
    ++pc_all_cnt_[dir];
  }
  std::chrono::steady_clock::time_point start_, deadline_;
  std::vector<std::shared_ptr<detail::BnbNode>> dive_;
  std::set<std::shared_ptr<detail::BnbNode>, detail::NodeOrder> open_;
  std::shared_ptr<const Simplex> root_template_;
  std::vector<double> incumbent_;
  double incumbent_obj_ = kInf;
  long next_id_ = 0;
  long nodes_ = 0;
  long lp_iters_ = 0;
  bool numerical_trouble_ = false;
  std::shared_ptr<std::atomic<std::size_t>> live_bytes_ = std::make_shared<std::atomic<std::size_t>>(0);

  bool has_incumbent() const { return !incumbent_.empty(); }

  bool stopped() const {
    if (p_.stop && p_.stop->load()) return true;
    return std::chrono::steady_clock::now() > deadline_;
  }

  double prune_margin() const {
    return std::max(1e-7 * std::max(1.0, std::abs(incumbent_obj_)), p_.rel_gap * std::abs(incumbent_obj_));
  }

  bool prunable(double bound) const {
    if (!has_incumbent()) return false;
    return bound >= incumbent_obj_ - prune_margin();
  }

  SimplexLimits limits() const {
    SimplexLimits lim;
    lim.deadline = deadline_;
    lim.stop = p_.stop;
    if (has_incumbent()) lim.cutoff = incumbent_obj_ - prune_margin();
    return lim;
  }

  std::vector<double> expand(const std::vector<double>& col_values) const {
    std::vector<double> x = red_.fixed;
    for (std::size_t k = 0; k < col_values.size(); ++k) x[red_.orig_of[k]] = col_values[k];
    return x;
  }

  // Rounds binaries, re-solves the continuous part and checks the point
  // against the full original model.
  void offer(const Simplex& lp_state) {
    Simplex s = lp_state;
    const int n = red_.lp->n;
    for (int k = 0; k < n; ++k) {
      if (!red_.binary[k]) continue;
      const double v = std::round(s.value(k));
      s.set_bounds(k, v, v);
    }
    SimplexLimits lim;
    lim.deadline = deadline_;
    lim.stop = p_.stop;
    const LpStatus st = s.solve(lim);
    lp_iters_ += s.iterations() - lp_state.iterations();
    if (st != LpStatus::Optimal) return;
    std::vector<double> cols = s.primal();
    for (int k = 0; k < n; ++k)
      if (red_.binary[k]) cols[k] = std::round(cols[k]);
    std::vector<double> x = expand(cols);
    const EvalReport rep = evaluate(model_, x, p_.feas_tol);
    if (!rep.feasible()) {
      numerical_trouble_ = true;
      return;
    }
    if (rep.objective < incumbent_obj_ - 1e-12 * std::max(1.0, std::abs(rep.objective))) {
      incumbent_ = std::move(x);
      incumbent_obj_ = rep.objective;
      std::erase_if(open_, [&](const auto& nd) { return prunable(nd->bound); });
    }
  }

  void try_hint(const Simplex& root) {
    if (model_.hints.empty()) return;
    Simplex s = root;
    const int n = red_.lp->n;
    for (int k = 0; k < n; ++k) {
      if (!red_.binary[k]) continue;
      auto it = model_.hints.find(red_.orig_of[k]);
      const double v = it == model_.hints.end() ? 0.0 : std::round(it->second);
      if (v < s.lower(k) || v > s.upper(k)) return;
      s.set_bounds(k, v, v);
    }
    SimplexLimits lim;
    lim.deadline = deadline_;
    lim.stop = p_.stop;
    if (s.solve(lim) != LpStatus::Optimal) return;
    lp_iters_ += s.iterations();
    offer(s);
  }

  std::shared_ptr<const Simplex> keep(std::shared_ptr<Simplex> s) {
    const std::size_t bytes = s->tableau_bytes();
    if (live_bytes_->load() + bytes > p_.memory_budget) return nullptr;
    live_bytes_->fetch_add(bytes);
    auto counter = live_bytes_;
    Simplex* raw = new Simplex(std::move(*s));
    return std::shared_ptr<const Simplex>(raw, [counter, bytes](const Simplex* p) {
      counter->fetch_sub(bytes);
      delete p;
    });
  }

  void process(const std::shared_ptr<detail::BnbNode>& node) {
    ++nodes_;
    auto s = std::make_shared<Simplex>(node->warm ? *node->warm : *root_template_);
    node->warm.reset();
    const long before = s->iterations();
    for (auto [k, v] : node->lower) s->set_bounds(k, std::max(v, s->lower(k)), s->upper(k));
    for (auto [k, v] : node->upper) s->set_bounds(k, s->lower(k), std::min(v, s->upper(k)));
    const LpStatus st = s->solve(limits());
    lp_iters_ += s->iterations() - before;
    if (st == LpStatus::Infeasible || st == LpStatus::Cutoff) {
      if (st == LpStatus::Cutoff && has_incumbent()) learn(*node, incumbent_obj_);
      return;
    }
    if (st == LpStatus::Unbounded) {
      numerical_trouble_ = true;
      return;
    }
    if (st != LpStatus::Optimal) {
      if (st == LpStatus::Numerical) numerical_trouble_ = true;
      // Put the node back so the reported bound stays valid.
      if (st == LpStatus::Stopped || st == LpStatus::IterationLimit) open_.insert(node);
      return;
    }
    const double bound = s->objective();
    learn(*node, bound);
    if (prunable(bound)) return;

    int branch = -1;
    double best_frac = -1.0;
    const int n = red_.lp->n;
    for (int k = 0; k < n; ++k) {
      if (!red_.binary[k]) continue;
      const double v = s->value(k);
      const double frac = std::abs(v - std::round(v));
      if (frac <= p_.int_tol) continue;
      const double down = (v - std::floor(v)) * pseudo_cost(k, 0);
      const double up = (std::ceil(v) - v) * pseudo_cost(k, 1);
      const double score = std::max(down, 1e-6) * std::max(up, 1e-6);
      bool better;
      if (branch < 0) better = true;
      else if (klass_[k] != klass_[branch]) better = klass_[k] > klass_[branch];
      else if (std::abs(score - best_frac) > 1e-12) better = score > best_frac;
      else better = rank_[k] < rank_[branch];
      if (better) {
        best_frac = score;
        branch = k;
      }
    }
    if (branch < 0) {
      offer(*s);
      return;
    }
    const double v = s->value(branch);
    auto warm = keep(s);
    auto make_child = [&](bool up) {
      auto c = std::make_shared<detail::BnbNode>();
      c->id = next_id_++;
      c->depth = node->depth + 1;
      c->bound = bound;
      c->lower = node->lower;
      c->upper = node->upper;
      if (up) c->lower.emplace_back(branch, std::ceil(v));
      else c->upper.emplace_back(branch, std::floor(v));
      c->branched = branch;
      c->up = up;
      c->frac = up ? std::ceil(v) - v : v - std::floor(v);
      c->warm = warm;
      return c;
    };
    auto down = make_child(false);
    auto up = make_child(true);
    if (!has_incumbent()) {
      // Explore the nearer side first while diving.
      if (v - std::floor(v) >= 0.5) {
        dive_.push_back(down);
        dive_.push_back(up);
      } else {
        dive_.push_back(up);
        dive_.push_back(down);
      }
    } else {
      open_.insert(down);
      open_.insert(up);
    }
  }
};

/// Solves the LP relaxation of a model (integrality dropped).
inline Assignment solve_lp_relaxation(const MilpModel& model, double time_limit_s = 60.0) {
  Assignment a;
  MilpModel relaxed;
  ReducedModel red;
  {
    // Reduction must not round: copy with every variable continuous.
    for (const auto& v : model.vars()) relaxed.add_var(v.name, VarKind::Continuous, v.lb, v.ub);
    for (int j = 0; j < model.num_vars(); ++j) relaxed.set_objective(j, model.objective()[j]);
    relaxed.set_objective_constant(model.objective_constant());
    for (const auto& c : model.constraints()) relaxed.add_constraint(c.name, c.terms, c.sense, c.rhs);
    red = reduce_model(relaxed);
  }
  if (red.infeasible) {
    a.status = SolveStatus::Infeasible;
    a.message = red.reason;
    return a;
  }
  Simplex s(red.lp);
  SimplexLimits lim;
  lim.deadline = std::chrono::steady_clock::now() +
                 std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(time_limit_s));
  const LpStatus st = s.solve(lim);
  switch (st) {
    case LpStatus::Optimal: {
      a.status = SolveStatus::Optimal;
      std::vector<double> x = red.fixed;
      const auto cols = s.primal();
      for (std::size_t k = 0; k < cols.size(); ++k) x[red.orig_of[k]] = cols[k];
      a.values = std::move(x);
      a.objective = s.objective();
      break;
    }
    case LpStatus::Infeasible: a.status = SolveStatus::Infeasible; break;
    case LpStatus::Unbounded:
      a.status = SolveStatus::Error;
      a.message = "unbounded";
      break;
    case LpStatus::Stopped:
    case LpStatus::IterationLimit: a.status = SolveStatus::TimeLimit; break;
    default: a.status = SolveStatus::Error; a.message = "numerical trouble";
  }
  return a;
}

}  // namespace gridmend
