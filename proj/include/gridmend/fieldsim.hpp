#pragma once
// Simulated field: actual repair times drawn around the estimates, crews
// walking the incumbent route, repair times reported on arrival and fed back
// to the engine on a fixed cadence.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "gridmend/engine.hpp"

namespace gridmend {

struct FieldConfig {
  double spread_h = 2.0;  // actual = estimate + U[-spread, spread]
  double floor_h = 0.25;
  double cadence_s = 900.0;
  double dispatch_after_s = 1800.0;  // search budget before the first dispatch
  std::uint64_t seed = 1;
};

struct FieldEvent {
  double wall_s = 0.0;
  std::string line;
  double hours = 0.0;
};

inline double perturbed_hours(double estimate, double draw, double floor_h) { return std::max(floor_h, estimate + draw); }

/// One uniform draw per damaged line, in damage order.
inline std::map<std::string, double> repair_time_draws(const Scenario& s, std::uint64_t seed, double spread_h) {
  std::map<std::string, double> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-spread_h, spread_h);
  for (const auto& d : s.damages) out[d.line] = spread_h > 0 ? u(rng) : 0.0;
  return out;
}

/// Actual repair hours per damaged line, against the largest crew estimate.
inline std::map<std::string, double> perturb_repair_times(const Scenario& s, std::uint64_t seed, double spread_h = 2.0,
                                                          double floor_h = 0.25) {
  const auto draws = repair_time_draws(s, seed, spread_h);
  std::map<std::string, double> out;
  for (const auto& d : s.damages) {
    double est = 0.0;
    for (const auto& [c, h] : d.repair_hours) est = std::max(est, h);
    out[d.line] = perturbed_hours(est, draws.at(d.line), floor_h);
  }
  return out;
}

struct TimelineRow {
  int step = 0;
  std::vector<std::string> opened, closed, repaired;
  double pct_served = 0.0;
  double served_kw = 0.0;
};

struct DispatchRecord {
  double hour = 0.0;
  std::string crew, from, to;
};

struct RepairRecord {
  std::string line, crew;
  double start_h = 0.0, done_h = 0.0, estimated_h = 0.0, actual_h = 0.0;
};

struct EpisodeResult {
  std::vector<TimelineRow> timeline;
  std::vector<FieldEvent> events;
  std::vector<DispatchRecord> dispatches;
  std::vector<RepairRecord> repairs;
  double objective = kInf;
  double kwh_served = 0.0;
  double restoration_h = 0.0;  // end of the step in which the last line came back

  std::string timeline_csv() const {
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (const auto& x : v) s += (s.empty() ? "" : ";") + x;
      return s;
    };
    std::string out = "step,opened,closed,repaired,pct_served\n";
    for (const auto& r : timeline)
      out += std::to_string(r.step) + "," + join(r.opened) + "," + join(r.closed) + "," + join(r.repaired) + "," +
             format_number(r.pct_served) + "\n";
    return out;
  }

  std::string load_served_csv(double dt) const {
    std::string out = "step,hour,served_kw,pct_served\n";
    for (const auto& r : timeline)
      out += std::to_string(r.step) + "," + format_number(r.step * dt) + "," + format_number(r.served_kw) + "," +
             format_number(r.pct_served) + "\n";
    return out;
  }
};

class FieldSimError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Drives `eng` through a whole restoration. The engine must be fresh: the
/// episode runs the assignment, initial solve and first search itself.
inline EpisodeResult run_episode(ReoptEngine& eng, const FieldConfig& cfg, const std::atomic<bool>* stop = nullptr) {
  EpisodeResult res;
  const Scenario s0 = eng.scenario();
  const double dt = s0.params.dt_hours;
  const double cadence_h = cfg.cadence_s / 3600.0;
  const auto draws = repair_time_draws(s0, cfg.seed, cfg.spread_h);
  const auto& nodes = s0.nodes();
  const int nd = static_cast<int>(s0.damages.size());
  const int nc = static_cast<int>(s0.crews.size());

  eng.run(stop, cfg.dispatch_after_s);

  enum class Phase { Travel, Wait, Work, Home };
  struct CrewSim {
    int at = -1, target = -1;
    Phase phase = Phase::Home;
    double until = 0.0, started = 0.0;
  };
  std::vector<CrewSim> crews(nc);
  std::vector<double> cleared(nd, -1.0);
  std::vector<RepairUpdate> pending;

  auto dispatch = [&](int c, double now) {
    const int next = eng.dispatch_next(c);
    if (next < 0) {
      crews[c].phase = Phase::Home;
      return;
    }
    res.dispatches.push_back({now, s0.crews[c].id, nodes[crews[c].at], nodes[next]});
    crews[c].target = next;
    crews[c].phase = Phase::Travel;
    crews[c].until = now + s0.travel_hours(crews[c].at, next);
  };
  auto start_line = [&](int c, double now) {
    const int m = crews[c].at;
    const double est = s0.repair_hours(m, c);
    crews[c].phase = Phase::Work;
    crews[c].started = now;
    crews[c].until = now + perturbed_hours(est, draws.at(nodes[m]), cfg.floor_h);
  };

  for (int c = 0; c < nc; ++c) {
    crews[c].at = s0.node_index(s0.crews[c].start);
    dispatch(c, 0.0);
  }

  std::vector<int> u_prev(s0.lines.size());
  for (int k = 0; k < static_cast<int>(s0.lines.size()); ++k)
    u_prev[k] = s0.is_damaged(k) ? 0 : s0.initially_closed(k) ? 1 : 0;
  int executed = 0;

  for (long tick = 1;; ++tick) {
    const double tau = tick * cadence_h;
    // Field events up to the end of this tick, in time order.
    for (;;) {
      int who = -1;
      for (int c = 0; c < nc; ++c)
        if ((crews[c].phase == Phase::Travel || crews[c].phase == Phase::Work) && crews[c].until <= tau + 1e-9 &&
            (who < 0 || crews[c].until < crews[who].until - 1e-12))
          who = c;
      if (who < 0) break;
      auto& cr = crews[who];
      const double now = cr.until;
      const bool tree = s0.crews[who].kind == CrewKind::Tree;
      if (cr.phase == Phase::Travel) {
        cr.at = cr.target;
        if (s0.node_is_depot(cr.at)) {
          dispatch(who, now);
          continue;
        }
        const int m = cr.at;
        if (tree) {
          cr.phase = Phase::Work;
          cr.started = now;
          cr.until = now + s0.repair_hours(m, who);
          continue;
        }
        const double actual = perturbed_hours(s0.repair_hours(m, who), draws.at(nodes[m]), cfg.floor_h);
        res.events.push_back({now * 3600.0, nodes[m], actual});
        pending.push_back({nodes[m], actual});
        if (s0.damages[m].tree_blocked() && cleared[m] < 0) {
          cr.phase = Phase::Wait;
          continue;
        }
        start_line(who, now);
      } else {
        const int m = cr.at;
        if (tree) {
          cleared[m] = now;
          for (int c = 0; c < nc; ++c)
            if (crews[c].phase == Phase::Wait && crews[c].at == m) start_line(c, now);
        } else {
          eng.mark_repaired(nodes[m]);
          res.repairs.push_back({nodes[m], s0.crews[who].id, cr.started, now, s0.repair_hours(m, who),
                                 now - cr.started});
        }
        dispatch(who, now);
      }
    }

    if (!pending.empty()) {
      eng.dynamic_step(pending, stop, cfg.cadence_s);
      pending.clear();
    }

    const int H = eng.scenario().horizon();
    while (executed < H && (executed + 1) * dt <= tau + 1e-9) {
      const int t = ++executed;
      const Incumbent inc = *eng.store().get();
      const Scenario& s = eng.scenario();
      const OperationSolution op = decode_operation(s, *inc.model, inc.point.values);
      TimelineRow row;
      row.step = t;
      for (int k = 0; k < static_cast<int>(s.lines.size()); ++k) {
        const int u = op.u[k][t];
        if (u != u_prev[k]) {
          if (s.is_damaged(k) && u == 1) row.repaired.push_back(s.lines[k].id);
          else if (s.lines[k].operable()) (u ? row.closed : row.opened).push_back(s.lines[k].id);
        }
        u_prev[k] = u;
      }
      row.pct_served = op.pct_served[t];
      row.served_kw = op.served_kw[t];
      res.kwh_served += op.served_kw[t] * dt;
      if (!row.repaired.empty()) res.restoration_h = t * dt;
      res.timeline.push_back(std::move(row));
      eng.execute_step(t);
    }

    bool all_home = true, busy = false;
    for (const auto& cr : crews) {
      all_home = all_home && cr.phase == Phase::Home;
      busy = busy || cr.phase == Phase::Travel || cr.phase == Phase::Work;
    }
    if (all_home && executed >= eng.scenario().horizon()) break;
    if (!all_home && !busy) throw FieldSimError("crews wait with nobody working: route precedence deadlock");
    if (tau > 100.0 * eng.scenario().horizon() * dt) throw FieldSimError("episode does not terminate");
  }
  res.objective = eng.store().get()->objective;
  return res;
}

}  // namespace gridmend
