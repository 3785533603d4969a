#pragma once
// Dense bounded simplex on a condensed tableau.
//
// Every row i gets a logical variable r_i = a_i x carrying the row bounds, so
// the system is [A -I][x; r] = 0. The tableau stores B^-1 N for the n
// nonbasic columns only; values of all n+m variables are tracked explicitly.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

namespace gridmend {

struct LpData {
  int n = 0;
  int m = 0;
  std::vector<std::vector<std::pair<int, double>>> rows;  // sparse a_i
  std::vector<double> c;
  double c0 = 0.0;
  std::vector<double> lb, ub;    // structural bounds
  std::vector<double> rlb, rub;  // row bounds
};

enum class LpStatus { Optimal, Infeasible, Unbounded, IterationLimit, Stopped, Cutoff, Numerical };

struct SimplexLimits {
  long max_iterations = 1'000'000;
  std::chrono::steady_clock::time_point deadline = std::chrono::steady_clock::time_point::max();
  const std::atomic<bool>* stop = nullptr;
  double cutoff = std::numeric_limits<double>::infinity();  // stop once the dual bound reaches this
};

class Simplex {
 public:
  static constexpr double kPrimalTol = 1e-7;
  static constexpr double kDualTol = 1e-7;
  static constexpr double kPivotTol = 1e-9;
  static constexpr double kBoxBound = 1e7;

  explicit Simplex(std::shared_ptr<const LpData> lp) : lp_(std::move(lp)) {
    const LpData& d = *lp_;
    n_ = d.n;
    m_ = d.m;
    lb_.resize(n_ + m_);
    ub_.resize(n_ + m_);
    for (int j = 0; j < n_; ++j) {
      lb_[j] = d.lb[j];
      ub_[j] = d.ub[j];
    }
    for (int i = 0; i < m_; ++i) {
      lb_[n_ + i] = d.rlb[i];
      ub_[n_ + i] = d.rub[i];
    }
    cost_.assign(n_ + m_, 0.0);
    for (int j = 0; j < n_; ++j) cost_[j] = d.c[j];
    boxed_.assign(n_ + m_, 0);
    slack_basis();
  }

  int num_structural() const { return n_; }
  int num_rows() const { return m_; }
  long iterations() const { return iters_; }
  std::size_t tableau_bytes() const { return t_.size() * sizeof(double); }

  /// Changes bounds of a structural variable, keeping the basis.
  void set_bounds(int j, double lo, double hi) {
    lb_[j] = lo;
    ub_[j] = hi;
    boxed_[j] = 0;
    if (pos_[j] < 0) {
      const int k = -pos_[j] - 1;
      const double old = val_[j];
      double nv = old;
      if (lo == hi) nv = lo;
      else if (dn_[k] > kDualTol && std::isfinite(lo)) nv = lo;
      else if (dn_[k] < -kDualTol && std::isfinite(hi)) nv = hi;
      else nv = std::clamp(old, lo, hi);
      if (!std::isfinite(nv)) nv = std::isfinite(lo) ? lo : std::isfinite(hi) ? hi : 0.0;
      move_nonbasic(k, nv - old);
    }
  }

  double lower(int j) const { return lb_[j]; }
  double upper(int j) const { return ub_[j]; }

  LpStatus solve(const SimplexLimits& lim = {}) {
    limits_ = &lim;
    LpStatus st = run();
    limits_ = nullptr;
    status_ = st;
    return st;
  }

  LpStatus status() const { return status_; }

  double objective() const {
    double z = lp_->c0;
    for (int j = 0; j < n_; ++j) z += cost_[j] * val_[j];
    return z;
  }

  std::vector<double> primal() const { return {val_.begin(), val_.begin() + n_}; }
  double value(int j) const { return val_[j]; }
  bool is_basic(int j) const { return pos_[j] >= 0; }

 private:
  // --- state -------------------------------------------------------------
  std::shared_ptr<const LpData> lp_;
  int n_ = 0, m_ = 0;
  std::vector<double> t_;      // m x n row-major, B^-1 N
  std::vector<int> head_;      // basic variable of each row
  std::vector<int> nonb_;      // nonbasic variable of each column
  std::vector<int> pos_;       // >=0 basic row, <0 -(column+1)
  std::vector<double> val_;    // value of every variable
  std::vector<double> dn_;     // reduced cost per nonbasic column
  std::vector<double> lb_, ub_, cost_;
  std::vector<char> boxed_;    // 1 lower bound artificial, 2 upper bound artificial
  long iters_ = 0;
  long since_refactor_ = 0;
  LpStatus status_ = LpStatus::Numerical;
  const SimplexLimits* limits_ = nullptr;
  std::vector<int> nz_;
  std::vector<double> saved_cost_;
  bool perturbed_ = false;

  double* row(int i) { return t_.data() + static_cast<std::size_t>(i) * n_; }
  const double* row(int i) const { return t_.data() + static_cast<std::size_t>(i) * n_; }

  void slack_basis() {
    const LpData& d = *lp_;
    t_.assign(static_cast<std::size_t>(m_) * n_, 0.0);
    for (int i = 0; i < m_; ++i)
      for (auto [j, a] : d.rows[i]) row(i)[j] -= a;
    head_.resize(m_);
    nonb_.resize(n_);
    pos_.resize(n_ + m_);
    for (int j = 0; j < n_; ++j) {
      nonb_[j] = j;
      pos_[j] = -(j + 1);
    }
    for (int i = 0; i < m_; ++i) {
      head_[i] = n_ + i;
      pos_[n_ + i] = i;
    }
    recompute_duals();
    place_nonbasics();
    recompute_basics();
  }

  void recompute_duals() {
    dn_.assign(n_, 0.0);
    for (int k = 0; k < n_; ++k) dn_[k] = cost_[nonb_[k]];
    for (int i = 0; i < m_; ++i) {
      const double cb = cost_[head_[i]];
      if (cb == 0.0) continue;
      const double* r = row(i);
      for (int k = 0; k < n_; ++k) dn_[k] -= cb * r[k];
    }
  }

  // Puts each nonbasic variable on the bound its reduced cost asks for,
  // boxing infinite sides with an artificial bound where needed.
  void place_nonbasics() {
    val_.resize(n_ + m_);
    for (int k = 0; k < n_; ++k) {
      const int j = nonb_[k];
      double lo = lb_[j], hi = ub_[j];
      if (dn_[k] > kDualTol && !std::isfinite(lo)) {
        lo = (std::isfinite(hi) ? std::min(hi, 0.0) : 0.0) - kBoxBound;
        lb_[j] = lo;
        boxed_[j] |= 1;
      } else if (dn_[k] < -kDualTol && !std::isfinite(hi)) {
        hi = (std::isfinite(lo) ? std::max(lo, 0.0) : 0.0) + kBoxBound;
        ub_[j] = hi;
        boxed_[j] |= 2;
      }
      if (lo == hi) val_[j] = lo;
      else if (dn_[k] > kDualTol) val_[j] = lo;
      else if (dn_[k] < -kDualTol) val_[j] = hi;
      else if (std::isfinite(lo)) val_[j] = lo;
      else if (std::isfinite(hi)) val_[j] = hi;
      else val_[j] = 0.0;
    }
  }

  void recompute_basics() {
    for (int i = 0; i < m_; ++i) {
      const double* r = row(i);
      double v = 0.0;
      for (int k = 0; k < n_; ++k)
        if (r[k] != 0.0) v -= r[k] * val_[nonb_[k]];
      val_[head_[i]] = v;
    }
  }

  void move_nonbasic(int k, double delta) {
    if (delta == 0.0) return;
    val_[nonb_[k]] += delta;
    for (int i = 0; i < m_; ++i) {
      const double a = row(i)[k];
      if (a != 0.0) val_[head_[i]] -= a * delta;
    }
  }

  double infeasibility(int j) const {
    const double v = val_[j];
    if (v < lb_[j] - kPrimalTol) return lb_[j] - v;
    if (v > ub_[j] + kPrimalTol) return v - ub_[j];
    return 0.0;
  }

  LpStatus check_limits() const {
    if (iters_ >= limits_->max_iterations) return LpStatus::IterationLimit;
    if ((iters_ & 31) == 0) {
      if (limits_->stop && limits_->stop->load(std::memory_order_relaxed)) return LpStatus::Stopped;
      if (std::chrono::steady_clock::now() > limits_->deadline) return LpStatus::Stopped;
    }
    return LpStatus::Optimal;
  }

  // Pivot: nonbasic column q enters, basic row r leaves.
  void pivot(int r, int q) {
    double* pr = row(r);
    const double p = pr[q];
    nz_.clear();
    for (int k = 0; k < n_; ++k)
      if (k != q && std::abs(pr[k]) > 1e-14) nz_.push_back(k);
      else if (k != q) pr[k] = 0.0;
    const double inv = 1.0 / p;
    for (int k : nz_) pr[k] *= inv;
    pr[q] = inv;
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* ri = row(i);
      const double f = ri[q];
      if (f == 0.0) continue;
      for (int k : nz_) ri[k] -= f * pr[k];
      ri[q] = -f * inv;
    }
    const double dq = dn_[q];
    if (dq != 0.0) {
      for (int k : nz_) dn_[k] -= dq * pr[k];
    }
    dn_[q] = -dq * inv;
    const int enter = nonb_[q];
    const int leave = head_[r];
    head_[r] = enter;
    pos_[enter] = r;
    nonb_[q] = leave;
    pos_[leave] = -(q + 1);
    ++iters_;
    ++since_refactor_;
  }

  // Basic values drift with the tableau; compare against the original rows.
  double residual() const {
    const LpData& d = *lp_;
    double worst = 0.0;
    for (int i = 0; i < m_; ++i) {
      double act = 0.0;
      for (auto [j, a] : d.rows[i]) act += a * val_[j];
      worst = std::max(worst, std::abs(act - val_[n_ + i]) / (1.0 + std::abs(act)));
    }
    return worst;
  }

  /// Rebuilds B^-1 N from the original matrix for the current basis.
  bool reinvert() {
    const LpData& d = *lp_;
    const int w = m_ + n_;
    std::vector<double> a(static_cast<std::size_t>(m_) * w, 0.0);
    auto put_column = [&](int var, int col) {
      if (var >= n_) {
        a[static_cast<std::size_t>(var - n_) * w + col] = -1.0;
      }
    };
    std::vector<int> col_of(n_ + m_, -1);
    for (int i = 0; i < m_; ++i) col_of[head_[i]] = i;
    for (int k = 0; k < n_; ++k) col_of[nonb_[k]] = m_ + k;
    for (int i = 0; i < m_; ++i)
      for (auto [j, c] : d.rows[i]) a[static_cast<std::size_t>(i) * w + col_of[j]] += c;
    for (int v = n_; v < n_ + m_; ++v) put_column(v, col_of[v]);
    std::vector<int> nzc;
    for (int c = 0; c < m_; ++c) {
      int best = -1;
      double bv = 0.0;
      for (int i = c; i < m_; ++i) {
        const double v = std::abs(a[static_cast<std::size_t>(i) * w + c]);
        if (v > bv) {
          bv = v;
          best = i;
        }
      }
      if (best < 0 || bv < 1e-11) return false;
      if (best != c)
        std::swap_ranges(a.begin() + static_cast<std::ptrdiff_t>(best) * w,
                         a.begin() + static_cast<std::ptrdiff_t>(best + 1) * w,
                         a.begin() + static_cast<std::ptrdiff_t>(c) * w);
      double* pc = a.data() + static_cast<std::size_t>(c) * w;
      const double inv = 1.0 / pc[c];
      nzc.clear();
      for (int k = c; k < w; ++k) {
        if (pc[k] != 0.0) {
          pc[k] *= inv;
          nzc.push_back(k);
        }
      }
      for (int i = 0; i < m_; ++i) {
        if (i == c) continue;
        double* pi = a.data() + static_cast<std::size_t>(i) * w;
        const double f = pi[c];
        if (f == 0.0) continue;
        for (int k : nzc) pi[k] -= f * pc[k];
        pi[c] = 0.0;
      }
    }
    for (int i = 0; i < m_; ++i)
      std::copy_n(a.data() + static_cast<std::size_t>(i) * w + m_, n_, row(i));
    for (auto& x : t_)
      if (std::abs(x) < 1e-13) x = 0.0;
    recompute_duals();
    recompute_basics();
    since_refactor_ = 0;
    return true;
  }

  void maybe_refactor() {
    if (since_refactor_ < 100) return;
    since_refactor_ = 0;
    if (residual() > 1e-9) {
      if (!reinvert()) restart_from_slack();
    } else {
      recompute_duals();
    }
  }

  void restart_from_slack() {
    std::vector<double> keep_lb(lb_), keep_ub(ub_);
    for (int j = 0; j < n_ + m_; ++j) {
      if (boxed_[j] & 1) keep_lb[j] = -std::numeric_limits<double>::infinity();
      if (boxed_[j] & 2) keep_ub[j] = std::numeric_limits<double>::infinity();
    }
    lb_ = keep_lb;
    ub_ = keep_ub;
    boxed_.assign(n_ + m_, 0);
    slack_basis();
  }

  // --- dual simplex --------------------------------------------------------
  LpStatus dual_phase() {
    long stall = 0;
    double last_obj = -std::numeric_limits<double>::infinity();
    while (true) {
      if (auto st = check_limits(); st != LpStatus::Optimal) return st;
      const bool bland = stall > 200;
      int r = -1;
      double worst = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double inf = infeasibility(head_[i]);
        if (inf <= 0.0) continue;
        if (bland) {
          if (r < 0 || head_[i] < head_[r]) r = i;
        } else if (inf > worst) {
          worst = inf;
          r = i;
        }
      }
      if (r < 0) return LpStatus::Optimal;
      const int leave = head_[r];
      const bool below = val_[leave] < lb_[leave];
      const double target = below ? lb_[leave] : ub_[leave];
      const double* pr = row(r);
      // leaving must increase when below: delta x_l = -pr[k] * dx_k
      double bound1 = std::numeric_limits<double>::infinity();
      for (int k = 0; k < n_; ++k) {
        const double a = pr[k];
        if (std::abs(a) < kPivotTol) continue;
        const int j = nonb_[k];
        if (lb_[j] == ub_[j]) continue;
        const double gain = below ? -a : a;  // effect on x_l per unit increase of x_k, signed toward target
        const bool up = val_[j] < ub_[j] - kPrimalTol;
        const bool dn = val_[j] > lb_[j] + kPrimalTol;
        if (!((gain > 0 && up) || (gain < 0 && dn))) continue;
        bound1 = std::min(bound1, (std::abs(dn_[k]) + kDualTol) / std::abs(a));
      }
      if (!std::isfinite(bound1)) return LpStatus::Infeasible;
      int q = -1;
      double best_a = 0.0;
      for (int k = 0; k < n_; ++k) {
        const double a = pr[k];
        if (std::abs(a) < kPivotTol) continue;
        const int j = nonb_[k];
        if (lb_[j] == ub_[j]) continue;
        const double gain = below ? -a : a;
        const bool up = val_[j] < ub_[j] - kPrimalTol;
        const bool dn = val_[j] > lb_[j] + kPrimalTol;
        if (!((gain > 0 && up) || (gain < 0 && dn))) continue;
        if (std::abs(dn_[k]) / std::abs(a) > bound1) continue;
        if (bland ? (q < 0 || j < nonb_[q]) : std::abs(a) > best_a) {
          best_a = std::abs(a);
          q = k;
        }
      }
      const double theta = (target - val_[leave]) / -pr[q];
      move_nonbasic(q, theta);
      val_[leave] = target;
      pivot(r, q);
      // Clean reduced cost sign drift for the leaving variable.
      const int lq = q;
      if (below && dn_[lq] < 0.0) dn_[lq] = 0.0;
      if (!below && dn_[lq] > 0.0) dn_[lq] = 0.0;
      maybe_refactor();
      const double obj = objective();
      if (obj >= limits_->cutoff && cutoff_confirmed()) return LpStatus::Cutoff;
      if (obj > last_obj + 1e-9 * (1.0 + std::abs(obj))) {
        last_obj = obj;
        stall = 0;
      } else {
        ++stall;
      }
    }
  }

  // --- primal simplex (basis must be primal feasible) -----------------------
  LpStatus primal_phase() {
    long stall = 0;
    double last_obj = std::numeric_limits<double>::infinity();
    while (true) {
      if (auto st = check_limits(); st != LpStatus::Optimal) return st;
      const bool bland = stall > 200;
      int q = -1;
      double best = 0.0;
      int dir = 0;
      for (int k = 0; k < n_; ++k) {
        const int j = nonb_[k];
        if (lb_[j] == ub_[j]) continue;
        const double dk = dn_[k];
        int s = 0;
        if (dk < -kDualTol && val_[j] < ub_[j] - kPrimalTol) s = 1;
        else if (dk > kDualTol && val_[j] > lb_[j] + kPrimalTol) s = -1;
        if (s == 0) continue;
        if (bland) {
          if (q < 0 || j < nonb_[q]) {
            q = k;
            dir = s;
          }
        } else if (std::abs(dk) > best) {
          best = std::abs(dk);
          q = k;
          dir = s;
        }
      }
      if (q < 0) return LpStatus::Optimal;
      const int enter = nonb_[q];
      const double range = dir > 0 ? ub_[enter] - val_[enter] : val_[enter] - lb_[enter];
      double bound1 = range;
      for (int i = 0; i < m_; ++i) {
        const double a = -row(i)[q] * dir;
        if (std::abs(a) < kPivotTol) continue;
        const int j = head_[i];
        if (a > 0 && std::isfinite(ub_[j])) bound1 = std::min(bound1, (ub_[j] - val_[j] + kPrimalTol) / a);
        else if (a < 0 && std::isfinite(lb_[j])) bound1 = std::min(bound1, (lb_[j] - val_[j] - kPrimalTol) / a);
      }
      if (!std::isfinite(bound1)) return LpStatus::Unbounded;
      int r = -1;
      double best_a = 0.0;
      double theta = range;
      for (int i = 0; i < m_; ++i) {
        const double a = -row(i)[q] * dir;
        if (std::abs(a) < kPivotTol) continue;
        const int j = head_[i];
        double ratio;
        if (a > 0 && std::isfinite(ub_[j])) ratio = (ub_[j] - val_[j]) / a;
        else if (a < 0 && std::isfinite(lb_[j])) ratio = (lb_[j] - val_[j]) / a;
        else continue;
        if (ratio > bound1) continue;
        if (bland ? (r < 0 || j < head_[r]) : std::abs(a) > best_a) {
          best_a = std::abs(a);
          r = i;
          theta = std::max(ratio, 0.0);
        }
      }
      if (r < 0 || range <= theta) {
        // bound flip
        move_nonbasic(q, dir * range);
        val_[enter] = dir > 0 ? ub_[enter] : lb_[enter];
        ++iters_;
      } else {
        const int leave = head_[r];
        const double a = -row(r)[q] * dir;
        move_nonbasic(q, dir * theta);
        val_[leave] = a > 0 ? ub_[leave] : lb_[leave];
        pivot(r, q);
        maybe_refactor();
      }
      const double obj = objective();
      if (obj < last_obj - 1e-9 * (1.0 + std::abs(obj))) {
        last_obj = obj;
        stall = 0;
      } else {
        ++stall;
      }
    }
  }

  bool drop_artificial_boxes() {
    bool any = false;
    for (int j = 0; j < n_ + m_; ++j) {
      if (!boxed_[j]) continue;
      if (boxed_[j] & 1) lb_[j] = -std::numeric_limits<double>::infinity();
      if (boxed_[j] & 2) ub_[j] = std::numeric_limits<double>::infinity();
      boxed_[j] = 0;
      any = true;
    }
    return any;
  }

  bool at_artificial_box() const {
    for (int j = 0; j < n_ + m_; ++j) {
      if (!boxed_[j]) continue;
      if ((boxed_[j] & 1) && val_[j] <= lb_[j] + 1.0) return true;
      if ((boxed_[j] & 2) && val_[j] >= ub_[j] - 1.0) return true;
    }
    return false;
  }

  bool nonbasic_at_artificial_box() const {
    for (int k = 0; k < n_; ++k) {
      const int j = nonb_[k];
      if ((boxed_[j] & 1) && val_[j] <= lb_[j] + kPrimalTol) return true;
      if ((boxed_[j] & 2) && val_[j] >= ub_[j] - kPrimalTol) return true;
    }
    return false;
  }

  bool dual_feasible() const {
    for (int k = 0; k < n_; ++k) {
      const int j = nonb_[k];
      if (lb_[j] == ub_[j]) continue;
      if (dn_[k] > kDualTol && val_[j] > lb_[j] + kPrimalTol) return false;
      if (dn_[k] < -kDualTol && val_[j] < ub_[j] - kPrimalTol) return false;
    }
    return true;
  }

  // Shifts nonbasic costs away from zero in the direction their bound
  // position allows, which breaks dual degeneracy. Deterministic.
  void perturb_costs() {
    saved_cost_ = cost_;
    double scale = 0.0;
    for (int j = 0; j < n_; ++j) scale = std::max(scale, std::abs(cost_[j]));
    const double base = 1e-7 * std::max(1.0, scale);
    for (int k = 0; k < n_; ++k) {
      const int j = nonb_[k];
      if (lb_[j] == ub_[j]) continue;
      const bool at_lo = std::isfinite(lb_[j]) && val_[j] <= lb_[j] + kPrimalTol;
      const bool at_hi = std::isfinite(ub_[j]) && val_[j] >= ub_[j] - kPrimalTol;
      if (at_lo == at_hi) continue;
      const std::uint64_t h = (static_cast<std::uint64_t>(j) + 1) * 0x9E3779B97F4A7C15ull;
      const double u = 0.5 + 0.5 * static_cast<double>(h >> 11) / 9007199254740992.0;
      const double d = base * u * (at_lo ? 1.0 : -1.0);
      cost_[j] += d;
      dn_[k] += d;
    }
    perturbed_ = true;
  }

  // The dual bound only counts under the true costs and real bounds.
  bool cutoff_confirmed() {
    if (nonbasic_at_artificial_box()) return false;
    if (!perturbed_) return dual_feasible();
    const std::vector<double> pc = cost_, pd = dn_;
    cost_ = saved_cost_;
    recompute_duals();
    if (dual_feasible() && objective() >= limits_->cutoff) {
      perturbed_ = false;
      return true;
    }
    cost_ = pc;
    dn_ = pd;
    return false;
  }

  void restore_costs() {
    if (!perturbed_) return;
    cost_ = saved_cost_;
    perturbed_ = false;
    recompute_duals();
  }

  LpStatus run() {
    for (int attempt = 0; attempt < 4; ++attempt) {
      // Dual feasibility first; boxes fill in missing bounds.
      bool dual_ok = true;
      for (int k = 0; k < n_ && dual_ok; ++k) {
        const int j = nonb_[k];
        if (lb_[j] == ub_[j]) continue;
        if (dn_[k] > kDualTol && val_[j] > lb_[j] + kPrimalTol) dual_ok = false;
        if (dn_[k] < -kDualTol && val_[j] < ub_[j] - kPrimalTol) dual_ok = false;
      }
      LpStatus st = LpStatus::Optimal;
      if (dual_ok) {
        perturb_costs();
        st = dual_phase();
        restore_costs();
        if (st == LpStatus::Cutoff) return st;
        if (st == LpStatus::Infeasible) {
          if (!at_artificial_box() && verify_infeasible()) return st;
          if (attempt < 2 && reinvert()) continue;
          return st;
        }
        if (st != LpStatus::Optimal) return st;
      } else if (primal_infeasible()) {
        // Not dual feasible and not primal feasible: re-place nonbasics.
        recompute_duals();
        place_nonbasics();
        recompute_basics();
        continue;
      }
      drop_artificial_boxes();
      st = primal_phase();
      if (st != LpStatus::Optimal) return st;
      if (residual() > 1e-7) {
        if (attempt < 2 && reinvert()) continue;
        return LpStatus::Numerical;
      }
      if (primal_infeasible()) {
        if (attempt < 3) {
          recompute_duals();
          continue;
        }
        return LpStatus::Numerical;
      }
      return LpStatus::Optimal;
    }
    return LpStatus::Numerical;
  }

  bool primal_infeasible() const {
    for (int i = 0; i < m_; ++i)
      if (infeasibility(head_[i]) > 0.0) return true;
    return false;
  }

  bool verify_infeasible() {
    if (since_refactor_ == 0) return true;
    const double res = residual();
    return res < 1e-9;
  }
};

}  // namespace gridmend
