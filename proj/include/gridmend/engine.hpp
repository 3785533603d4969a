#pragma once
// Repair-and-restoration search: crew assignment, the restricted initial
// solve, sampled neighborhood search over route arcs, dispatch freezing and
// restarts when field crews report new repair times.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "gridmend/builder.hpp"
#include "gridmend/solver.hpp"

namespace gridmend {

class EngineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SearchParams {
  int ss0 = 3;
  int h1 = 3;
  int h2 = 3;
  double time_limit_s = 1800.0;       // per search session
  double solve_time_limit_s = 300.0;  // per subproblem
  std::uint64_t seed = 1;
  bool reset_count_on_growth = false;

  void validate() const {
    if (ss0 < 2) throw EngineError("ss0 must be at least 2");
    if (h1 < 1 || h2 < 1) throw EngineError("h1 and h2 must be at least 1");
    if (!(time_limit_s > 0) || !(solve_time_limit_s > 0)) throw EngineError("time limits must be positive");
  }
};

// ---------------------------------------------------------------------------
// Clocks

class Clock {
 public:
  virtual ~Clock() = default;
  virtual double now_s() = 0;
  /// False for simulated clocks: subproblem limits then ignore the session budget.
  virtual bool real() const { return true; }
};

class SteadyClock : public Clock {
 public:
  double now_s() override {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

/// Simulated clock. Every read advances it by `tick` seconds, so a search
/// with a time limit ends after a fixed number of reads.
class ManualClock : public Clock {
 public:
  explicit ManualClock(double tick = 0.0) : tick_(tick) {}
  double now_s() override {
    const double v = t_;
    t_ += tick_;
    return v;
  }
  bool real() const override { return false; }
  void advance(double s) { t_ += s; }
  void set(double s) { t_ = s; }

 private:
  double t_ = 0.0;
  double tick_;
};

// ---------------------------------------------------------------------------
// Incumbent

struct Incumbent {
  Route route;
  double objective = kInf;
  Assignment point;
  std::shared_ptr<const MilpModel> model;
  std::shared_ptr<const Scenario> scenario;
  long iteration = 0;
  double wall_s = 0.0;
};

class IncumbentStore {
 public:
  std::optional<Incumbent> get() const {
    std::shared_lock lock(mu_);
    return cur_;
  }
  long version() const {
    std::shared_lock lock(mu_);
    return version_;
  }
  /// Takes `inc` only when its objective is strictly smaller.
  bool offer(Incumbent inc) {
    std::unique_lock lock(mu_);
    if (cur_ && !(inc.objective < cur_->objective - improvement_tol(cur_->objective))) return false;
    cur_ = std::move(inc);
    ++version_;
    return true;
  }
  /// Unconditional swap, used after re-evaluation under new data.
  void replace(Incumbent inc) {
    std::unique_lock lock(mu_);
    cur_ = std::move(inc);
    ++version_;
  }

  static double improvement_tol(double ref) { return 1e-9 * std::max(1.0, std::abs(ref)); }

 private:
  mutable std::shared_mutex mu_;
  std::optional<Incumbent> cur_;
  long version_ = 0;
};

// ---------------------------------------------------------------------------
// Event log

struct SearchEvent {
  long seq = 0;
  std::string kind;
  int session = 0;
  long iteration = 0;
  int ss = 0;
  int count = 0;
  double objective = kInf;
  double wall_s = 0.0;
  std::string detail;
};

inline nlohmann::json to_json(const SearchEvent& e) {
  nlohmann::json j = {{"seq", e.seq},         {"kind", e.kind}, {"session", e.session},
                      {"iteration", e.iteration}, {"ss", e.ss},     {"count", e.count},
                      {"wall_s", e.wall_s},    {"detail", e.detail}};
  j["objective"] = std::isfinite(e.objective) ? nlohmann::json(e.objective) : nlohmann::json(nullptr);
  return j;
}

class EventLog {
 public:
  void push(SearchEvent e) {
    std::function<void(const SearchEvent&)> sink;
    {
      std::lock_guard lock(mu_);
      e.seq = static_cast<long>(events_.size());
      events_.push_back(e);
      sink = sink_;
    }
    if (sink) sink(e);
  }
  std::vector<SearchEvent> snapshot() const {
    std::lock_guard lock(mu_);
    return events_;
  }
  void on_event(std::function<void(const SearchEvent&)> f) {
    std::lock_guard lock(mu_);
    sink_ = std::move(f);
  }

  std::string jsonl() const {
    std::string out;
    for (const auto& e : snapshot()) out += to_json(e).dump() + "\n";
    return out;
  }
  std::string csv() const {
    std::string out = "seq,kind,session,iteration,ss,count,objective,wall_s\n";
    for (const auto& e : snapshot()) {
      out += std::to_string(e.seq) + "," + e.kind + "," + std::to_string(e.session) + "," +
             std::to_string(e.iteration) + "," + std::to_string(e.ss) + "," + std::to_string(e.count) + "," +
             (std::isfinite(e.objective) ? format_number(e.objective) : std::string()) + "," +
             format_number(e.wall_s) + "\n";
    }
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::vector<SearchEvent> events_;
  std::function<void(const SearchEvent&)> sink_;
};

// ---------------------------------------------------------------------------
// Dispatch state

struct RepairUpdate {
  std::string line;
  double hours = 0.0;
};

struct DispatchState {
  std::vector<std::vector<int>> path;             // per crew, committed node sequence from its start depot
  std::map<std::string, double> pins;             // variables fixed by what already happened
  std::map<std::string, double> estimated_hours;  // per damage, at scenario load
  std::map<std::string, double> actual_hours;     // per damage, once reported
  std::set<std::string> repaired;
  double next_update_s = 0.0;

  bool dispatched() const {
    for (const auto& p : path)
      if (p.size() > 1) return true;
    return false;
  }

  RouteFixings fixings() const {
    RouteFixings fx;
    for (int c = 0; c < static_cast<int>(path.size()); ++c)
      for (std::size_t i = 1; i < path[c].size(); ++i) fx.arcs[{path[c][i - 1], path[c][i], c}] = 1;
    fx.pins = pins;
    return fx;
  }
};

enum class StopReason { FullNeighborhood, StallLimit, TimeLimit, Stopped, NothingToRoute };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::FullNeighborhood: return "full-neighborhood";
    case StopReason::StallLimit: return "stall-limit";
    case StopReason::TimeLimit: return "time-limit";
    case StopReason::Stopped: return "stopped";
    case StopReason::NothingToRoute: return "nothing-to-route";
  }
  return "?";
}

struct SearchSummary {
  StopReason reason = StopReason::StallLimit;
  long iterations = 0;
  int improvements = 0;
  int final_ss = 0;
  bool proven_optimal = false;
  std::vector<int> ss_trace;     // sample size used per iteration
  std::vector<int> count_trace;  // stall counter after each iteration
};

enum class Objective { Restoration, Priority };

struct UpdateOutcome {
  int applied = 0;
  std::vector<std::string> notices;
  bool horizon_extended = false;
};

// ---------------------------------------------------------------------------
// Engine

class ReoptEngine {
 public:
  ReoptEngine(Scenario s, SolverAdapter& solver, SearchParams p = {}, Clock* clock = nullptr)
      : s_(std::move(s)), solver_(solver), p_(p), clock_(clock ? clock : &own_clock_) {
    p_.validate();
    dispatch_.path.resize(s_.crews.size());
    for (int c = 0; c < static_cast<int>(s_.crews.size()); ++c)
      dispatch_.path[c].push_back(s_.node_index(s_.crews[c].start));
    for (int m = 0; m < static_cast<int>(s_.damages.size()); ++m) {
      double h = 0.0;
      for (const auto& [cid, v] : s_.damages[m].repair_hours) h = std::max(h, v);
      dispatch_.estimated_hours[s_.damages[m].line] = h;
    }
  }

  void set_objective(Objective o, PriorityWeights w = {}) {
    objective_ = o;
    weights_ = w;
  }

  const Scenario& scenario() const { return s_; }
  const SearchParams& params() const { return p_; }
  SearchParams& params() { return p_; }
  IncumbentStore& store() { return store_; }
  const IncumbentStore& store() const { return store_; }
  EventLog& log() { return log_; }
  const DispatchState& dispatch() const { return dispatch_; }
  Clock& clock() { return *clock_; }

  /// Crew-to-damage assignment.
  CrewAssignment assign_crews() {
    if (s_.damages.empty()) {
      CrewAssignment a;
      a.damages_of.assign(s_.crews.size(), {});
      return a;
    }
    MilpModel m = build_assignment(s_);
    Assignment r = solver_.solve(m, solve_params(nullptr, p_.solve_time_limit_s));
    if (!r.has_point())
      throw EngineError(std::string("assignment stage: ") + to_string(r.status) + (r.message.empty() ? "" : ": ") +
                        r.message);
    CrewAssignment a = decode_assignment(s_, m, r.values);
    std::string detail;
    for (int c = 0; c < static_cast<int>(s_.crews.size()); ++c) {
      detail += (c ? " " : "") + s_.crews[c].id + ":";
      for (std::size_t i = 0; i < a.damages_of[c].size(); ++i)
        detail += (i ? "," : "") + s_.damages[a.damages_of[c][i]].line;
    }
    emit("assignment", 0, 0, 0, kInf, detail);
    return a;
  }

  /// Solve restricted to the assignment; the result becomes the incumbent.
  Incumbent initial_solution(const CrewAssignment& a) {
    RouteFixings fx = dispatch_.fixings();
    if (!s_.damages.empty()) fx.assignment = a.as_fixings().assignment;
    auto m = std::make_shared<MilpModel>(build_model(fx));
    Assignment r = solver_.solve(*m, solve_params(nullptr, p_.solve_time_limit_s));
    if (!r.has_point()) {
      std::string why = std::string(to_string(r.status)) + (r.message.empty() ? "" : " (" + r.message + ")");
      throw EngineError("assignment-restricted model: " + why + "; check that horizon " +
                        std::to_string(s_.horizon()) +
                        " steps covers the assigned routes and that crew capacity covers the assigned resources");
    }
    Incumbent inc = make_incumbent(std::move(m), std::move(r), 0);
    store_.replace(inc);
    emit("initial", 0, 0, 0, inc.objective, to_string(inc.point.status));
    return inc;
  }

  /// One search session from the stored incumbent.
  SearchSummary neighborhood_search(const std::atomic<bool>* stop = nullptr, double time_limit_s = -1.0) {
    SearchSummary sum;
    if (!store_.get()) throw EngineError("neighborhood search needs an incumbent");
    if (dirty_) reevaluate();
    const double limit = time_limit_s > 0 ? time_limit_s : p_.time_limit_s;
    ++session_;
    const int nN = static_cast<int>(s_.nodes().size());
    if (s_.damages.empty()) {
      sum.reason = StopReason::NothingToRoute;
      emit("session-end", 0, 0, 0, store_.get()->objective, to_string(sum.reason));
      return sum;
    }
    std::seed_seq seq{static_cast<std::uint32_t>(p_.seed), static_cast<std::uint32_t>(p_.seed >> 32),
                      static_cast<std::uint32_t>(session_)};
    std::mt19937_64 rng(seq);
    std::vector<int> pool(nN);

    int ss = p_.ss0, count = 0;
    const double t0 = clock_->now_s();
    emit("session-start", 0, ss, count, store_.get()->objective, "");
    for (;;) {
      if (stop && stop->load()) {
        sum.reason = StopReason::Stopped;
        break;
      }
      const double now = clock_->now_s();
      if (now - t0 >= limit) {
        sum.reason = StopReason::TimeLimit;
        break;
      }
      ++sum.iterations;
      const int k = std::min(ss, nN);
      std::iota(pool.begin(), pool.end(), 0);
      for (int i = 0; i < k; ++i) {
        std::uniform_int_distribution<int> pick(i, nN - 1);
        std::swap(pool[i], pool[pick(rng)]);
      }
      const std::set<int> freed(pool.begin(), pool.begin() + k);
      std::string sample;
      for (int n : freed) sample += (sample.empty() ? "" : ",") + s_.nodes()[n];

      const Incumbent cur = *store_.get();
      auto m = std::make_shared<MilpModel>(build_model(route_subset_fixings(s_, cur.route, freed, dispatch_.fixings())));
      set_hints_by_name(*m, *cur.model, cur.point.values);
      const double budget = clock_->real() ? std::min(p_.solve_time_limit_s, std::max(1e-3, limit - (now - t0)))
                                           : p_.solve_time_limit_s;
      Assignment r = solver_.solve(*m, solve_params(stop, budget));
      bool improved = false;
      std::string note = sample;
      if (r.has_point() && evaluate(*m, r.values, 1e-6).feasible()) {
        const bool proven = r.status == SolveStatus::Optimal;
        Incumbent cand = make_incumbent(m, std::move(r), sum.iterations);
        if (store_.offer(cand)) {
          improved = true;
          ++sum.improvements;
          count = 0;
        } else {
          ++count;
        }
        if (k >= nN) sum.proven_optimal = proven;
      } else {
        ++count;
        note += " " + std::string(to_string(r.status));
      }
      sum.ss_trace.push_back(k);
      sum.count_trace.push_back(count);
      emit(improved ? "improved" : "stall", sum.iterations, k, count, store_.get()->objective, note);

      if (k >= nN) {
        sum.reason = StopReason::FullNeighborhood;
        break;
      }
      if (count == p_.h1) {
        ++ss;
        emit("grow", sum.iterations, ss, count, store_.get()->objective, "");
        if (p_.reset_count_on_growth) count = 0;
      }
      if (count == p_.h1 + p_.h2) {
        sum.reason = StopReason::StallLimit;
        break;
      }
    }
    sum.final_ss = std::min(ss, nN);
    emit("session-end", sum.iterations, sum.final_ss, count, store_.get()->objective,
         std::string(to_string(sum.reason)) + (sum.proven_optimal ? " optimal" : ""));
    return sum;
  }

  /// Assignment, initial solve and one search session.
  SearchSummary run(const std::atomic<bool>* stop = nullptr, double time_limit_s = -1.0) {
    initial_solution(assign_crews());
    return neighborhood_search(stop, time_limit_s);
  }

  // -- dynamic side --------------------------------------------------------

  /// Replaces repair times, then re-evaluates the incumbent under the new data.
  UpdateOutcome apply_updates(const std::vector<RepairUpdate>& updates) {
    UpdateOutcome out;
    int extra_steps = 0;
    for (const auto& u : updates) {
      if (!(u.hours > 0) || !std::isfinite(u.hours))
        throw EngineError("update for '" + u.line + "': hours must be positive");
      if (!s_.has_line(u.line) || s_.damage_of_line(s_.line_index(u.line)) < 0)
        throw EngineError("update names '" + u.line + "', which is not a damaged line");
      if (dispatch_.repaired.count(u.line)) {
        out.notices.push_back("ignored update for '" + u.line + "': already repaired");
        emit("update-ignored", 0, 0, 0, kInf, u.line);
        continue;
      }
      const int m = s_.damage_index(u.line);
      double old = 0.0;
      bool same = true;
      for (const auto& [cid, h] : s_.damages[m].repair_hours) {
        old = std::max(old, h);
        same = same && std::abs(h - u.hours) < 1e-12;
      }
      if (same) {
        out.notices.push_back("update for '" + u.line + "' repeats the current value");
        continue;
      }
      extra_steps += static_cast<int>(std::ceil(std::max(0.0, u.hours - old) / s_.params.dt_hours - 1e-9));
      try {
        s_ = s_.with_repair_hours(u.line, u.hours);
      } catch (const ScenarioError&) {
        if (!s_.horizon_pinned()) throw;
        s_ = s_.with_horizon(s_.horizon() + extra_steps).with_repair_hours(u.line, u.hours);
        out.horizon_extended = true;
      }
      dispatch_.actual_hours[u.line] = u.hours;
      ++out.applied;
      emit("update", 0, 0, 0, kInf, u.line + "=" + format_number(u.hours));
    }
    if (out.applied && store_.get()) out.horizon_extended |= reevaluate(extra_steps);
    return out;
  }

  /// Applies updates and restarts the search from the re-evaluated incumbent.
  SearchSummary dynamic_step(const std::vector<RepairUpdate>& updates, const std::atomic<bool>* stop = nullptr,
                             double time_limit_s = -1.0, UpdateOutcome* outcome = nullptr) {
    UpdateOutcome o = apply_updates(updates);
    if (outcome) *outcome = o;
    emit("restart", 0, 0, 0, store_.get() ? store_.get()->objective : kInf, std::to_string(o.applied) + " applied");
    return neighborhood_search(stop, time_limit_s);
  }

  /// Re-solves the operation with the incumbent route held fixed. Extends a
  /// pinned horizon when the route no longer completes inside it. Returns
  /// true when the horizon grew.
  bool reevaluate(int extra_steps = 0) {
    auto cur = store_.get();
    if (!cur) throw EngineError("nothing to re-evaluate");
    bool grew = false;
    for (int attempt = 0; attempt < 2; ++attempt) {
      auto m = std::make_shared<MilpModel>(build_model(route_subset_fixings(s_, cur->route, {}, dispatch_.fixings())));
      set_hints_by_name(*m, *cur->model, cur->point.values);
      Assignment r = solver_.solve(*m, solve_params(nullptr, p_.solve_time_limit_s));
      if (r.has_point()) {
        Incumbent inc = make_incumbent(std::move(m), std::move(r), cur->iteration);
        store_.replace(inc);
        dirty_ = false;
        emit("reevaluate", 0, 0, 0, inc.objective, grew ? "horizon " + std::to_string(s_.horizon()) : "");
        return grew;
      }
      if (r.status != SolveStatus::Infeasible || attempt == 1) break;
      s_ = s_.with_horizon(s_.horizon() + std::max(1, extra_steps));
      grew = true;
    }
    throw EngineError("incumbent route cannot be re-evaluated under the reported repair times");
  }

  /// Node the crew is committed to after its last frozen arc, from the
  /// incumbent route. Commits the arc. Returns -1 when the crew is home.
  int dispatch_next(int crew) {
    auto cur = store_.get();
    if (!cur) throw EngineError("no incumbent to dispatch from");
    if (dirty_) {
      reevaluate();
      cur = store_.get();
    }
    auto& path = dispatch_.path.at(crew);
    const int at = path.back();
    if (path.size() > 1 && at == s_.node_index(s_.crews[crew].end)) return -1;
    for (const auto& [a, b, c] : cur->route)
      if (c == crew && a == at) {
        path.push_back(b);
        emit("dispatch", 0, 0, 0, cur->objective, s_.crews[crew].id + ":" + s_.nodes()[a] + "->" + s_.nodes()[b]);
        return b;
      }
    throw EngineError("incumbent route has no arc leaving " + s_.nodes()[at] + " for " + s_.crews[crew].id);
  }

  /// Fixes a variable to what happened in the field.
  void pin(const std::string& name, double value) {
    auto it = dispatch_.pins.find(name);
    if (it != dispatch_.pins.end() && it->second == value) return;
    dispatch_.pins[name] = value;
    dirty_ = true;
  }

  /// Pins service and switch states of a step that has been carried out,
  /// taken from the incumbent. Does not invalidate the incumbent.
  void execute_step(int t) {
    auto cur = store_.get();
    if (!cur) throw EngineError("no incumbent to execute");
    for (const auto& b : s_.buses) {
      const auto nm = names::y(b.id, t);
      dispatch_.pins[nm] = std::round(cur->point.values[cur->model->at(nm)]);
    }
    for (const auto& l : s_.lines) {
      const auto nm = names::u(l.id, t);
      dispatch_.pins[nm] = std::round(cur->point.values[cur->model->at(nm)]);
    }
  }

  void mark_repaired(const std::string& line) { dispatch_.repaired.insert(line); }

 private:
  Scenario s_;
  SolverAdapter& solver_;
  SearchParams p_;
  SteadyClock own_clock_;
  Clock* clock_;
  IncumbentStore store_;
  EventLog log_;
  DispatchState dispatch_;
  Objective objective_ = Objective::Restoration;
  PriorityWeights weights_;
  int session_ = 0;
  bool dirty_ = false;

  MilpModel build_model(const RouteFixings& fx) const {
    if (objective_ == Objective::Priority) {
      RouteFixings arcs_only = fx;
      arcs_only.pins.clear();
      return build_priority(s_, weights_, arcs_only);
    }
    return build_dsrrp(s_, fx);
  }

  SolveParams solve_params(const std::atomic<bool>* stop, double budget) const {
    SolveParams sp;
    sp.time_limit_s = budget;
    sp.stop = stop;
    return sp;
  }

  Incumbent make_incumbent(std::shared_ptr<MilpModel> m, Assignment r, long iteration) {
    Incumbent inc;
    inc.route = decode_route(s_, *m, r.values);
    inc.objective = r.objective;
    inc.point = std::move(r);
    inc.model = std::move(m);
    inc.scenario = std::make_shared<const Scenario>(s_);
    inc.iteration = iteration;
    inc.wall_s = clock_->now_s();
    return inc;
  }

  void emit(const std::string& kind, long it, int ss, int count, double obj, std::string detail) {
    SearchEvent e;
    e.kind = kind;
    e.session = session_;
    e.iteration = it;
    e.ss = ss;
    e.count = count;
    e.objective = obj;
    e.wall_s = clock_->now_s();
    e.detail = std::move(detail);
    log_.push(std::move(e));
  }
};

// ---------------------------------------------------------------------------
// Priority baseline

struct BaselineResult {
  Route priority_route;
  double priority_objective = kInf;
  Incumbent restoration;
  SearchSummary search;
};

/// Runs the search on the priority-weighted arrival objective, then solves the
/// restoration model with that route fixed.
inline BaselineResult priority_baseline(const Scenario& s, SolverAdapter& solver, PriorityWeights w = {},
                                        SearchParams p = {}, Clock* clock = nullptr,
                                        const std::atomic<bool>* stop = nullptr) {
  BaselineResult out;
  ReoptEngine eng(s, solver, p, clock);
  eng.set_objective(Objective::Priority, w);
  out.search = eng.run(stop);
  const Incumbent pri = *eng.store().get();
  out.priority_route = pri.route;
  out.priority_objective = pri.objective;

  MilpModel m = build_dsrrp(s, route_subset_fixings(s, pri.route, {}));
  SolveParams sp;
  sp.time_limit_s = p.solve_time_limit_s;
  sp.stop = stop;
  Assignment r = solver.solve(m, sp);
  if (!r.has_point())
    throw EngineError(std::string("restoration with the priority route fixed: ") + to_string(r.status) + " " +
                      r.message);
  out.restoration.route = decode_route(s, m, r.values);
  out.restoration.objective = r.objective;
  out.restoration.point = std::move(r);
  out.restoration.model = std::make_shared<const MilpModel>(std::move(m));
  out.restoration.scenario = std::make_shared<const Scenario>(s);
  return out;
}

}  // namespace gridmend
