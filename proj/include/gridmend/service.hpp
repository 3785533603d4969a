#pragma once
// HTTP/JSON front end: scenario upload, run control, incumbent and timeline
// queries, field updates and dispatch acknowledgements.

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>

#include "httplib.h"
#include "json.hpp"

#include "gridmend/engine.hpp"
#include "gridmend/fieldsim.hpp"

namespace gridmend {

using json = nlohmann::json;

enum class RunPhase { Assigning, Initial, Searching, Dispatched, Done, Failed };

inline const char* to_string(RunPhase p) {
  switch (p) {
    case RunPhase::Assigning: return "assigning";
    case RunPhase::Initial: return "initial";
    case RunPhase::Searching: return "searching";
    case RunPhase::Dispatched: return "dispatched";
    case RunPhase::Done: return "done";
    case RunPhase::Failed: return "failed";
  }
  return "?";
}

struct RunConfig {
  std::string scenario;
  std::string mode = "live";  // live | simulate
  std::string solver = "embedded";
  SearchParams search;
  FieldConfig field;
  bool simulated_clock = false;
  double clock_tick_s = 1.0;

  static RunConfig from_json(const json& j) {
    RunConfig c;
    if (!j.is_object()) throw std::invalid_argument("run request must be a JSON object");
    c.scenario = j.at("scenario").get<std::string>();
    c.mode = j.value("mode", c.mode);
    if (c.mode != "live" && c.mode != "simulate") throw std::invalid_argument("mode must be live or simulate");
    c.solver = j.value("solver", c.solver);
    c.search.seed = j.value("seed", c.search.seed);
    c.search.time_limit_s = j.value("time_limit_s", c.search.time_limit_s);
    c.search.solve_time_limit_s = j.value("solve_time_limit_s", c.search.solve_time_limit_s);
    c.search.ss0 = j.value("ss0", c.search.ss0);
    c.search.h1 = j.value("h1", c.search.h1);
    c.search.h2 = j.value("h2", c.search.h2);
    c.search.reset_count_on_growth = j.value("reset_count_on_growth", c.search.reset_count_on_growth);
    try {
      c.search.validate();
    } catch (const EngineError& e) {
      throw std::invalid_argument(e.what());
    }
    c.field.seed = j.value("field_seed", c.search.seed);
    c.field.spread_h = j.value("spread_h", c.field.spread_h);
    c.field.cadence_s = j.value("cadence_s", c.field.cadence_s);
    c.field.dispatch_after_s = j.value("dispatch_after_s", c.field.dispatch_after_s);
    c.simulated_clock = j.value("simulated_clock", c.mode == "simulate");
    c.clock_tick_s = j.value("clock_tick_s", c.clock_tick_s);
    if (!(c.field.cadence_s > 0) || c.field.spread_h < 0) throw std::invalid_argument("bad field settings");
    return c;
  }

  json to_json() const {
    return {{"scenario", scenario},
            {"mode", mode},
            {"solver", solver},
            {"seed", search.seed},
            {"time_limit_s", search.time_limit_s},
            {"solve_time_limit_s", search.solve_time_limit_s},
            {"ss0", search.ss0},
            {"h1", search.h1},
            {"h2", search.h2},
            {"reset_count_on_growth", search.reset_count_on_growth},
            {"field_seed", field.seed},
            {"spread_h", field.spread_h},
            {"cadence_s", field.cadence_s},
            {"simulated_clock", simulated_clock}};
  }
};

inline json itinerary_json(const RoutingSolution& r) {
  json crews = json::array();
  for (const auto& c : r.crews) crews.push_back({{"crew", c.crew}, {"stops", c.stops}, {"arrival_h", c.arrival_h}});
  return crews;
}

inline json incumbent_json(const Incumbent& inc, long version) {
  const Scenario& s = *inc.scenario;
  const RoutingSolution r = decode_routing(s, *inc.model, inc.point.values);
  const OperationSolution op = decode_operation(s, *inc.model, inc.point.values);
  json pct = json::array();
  for (int t = 1; t <= op.horizon; ++t) pct.push_back(op.pct_served[t]);
  return {{"objective", inc.objective}, {"status", to_string(inc.point.status)},
          {"iteration", inc.iteration}, {"version", version},
          {"horizon", s.horizon()},     {"crews", itinerary_json(r)},
          {"repair_step", r.repair_step}, {"pct_served", pct}};
}

/// Timeline rows read off a plan (no field execution).
inline std::vector<TimelineRow> plan_timeline(const Incumbent& inc) {
  const Scenario& s = *inc.scenario;
  const OperationSolution op = decode_operation(s, *inc.model, inc.point.values);
  std::vector<TimelineRow> rows;
  for (int t = 1; t <= op.horizon; ++t) {
    TimelineRow row;
    row.step = t;
    for (int k = 0; k < static_cast<int>(s.lines.size()); ++k) {
      if (op.u[k][t] == op.u[k][t - 1]) continue;
      if (s.is_damaged(k) && op.u[k][t]) row.repaired.push_back(s.lines[k].id);
      else if (s.lines[k].operable()) (op.u[k][t] ? row.closed : row.opened).push_back(s.lines[k].id);
    }
    row.pct_served = op.pct_served[t];
    row.served_kw = op.served_kw[t];
    rows.push_back(std::move(row));
  }
  return rows;
}

inline json timeline_json(const std::vector<TimelineRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"step", r.step},
                   {"opened", r.opened},
                   {"closed", r.closed},
                   {"repaired", r.repaired},
                   {"pct_served", r.pct_served},
                   {"served_kw", r.served_kw}});
  return out;
}

class HttpError : public std::runtime_error {
 public:
  HttpError(int status, const std::string& msg) : std::runtime_error(msg), status(status) {}
  int status;
};

/// One optimization run and the thread that owns its engine.
class Run {
 public:
  Run(std::string id, Scenario s, RunConfig cfg)
      : id_(std::move(id)), cfg_(std::move(cfg)), solver_(make_solver(cfg_.solver)) {
    if (cfg_.simulated_clock) clock_ = std::make_unique<ManualClock>(cfg_.clock_tick_s);
    else clock_ = std::make_unique<SteadyClock>();
    dt_ = s.params.dt_hours;
    engine_ = std::make_unique<ReoptEngine>(std::move(s), *solver_, cfg_.search, clock_.get());
    for (const auto& d : engine_->scenario().damages) damaged_.insert(d.line);
  }
  ~Run() { shutdown(); }

  void start() { worker_ = std::thread([this] { main(); }); }

  void shutdown() {
    {
      std::lock_guard lock(mu_);
      closing_ = true;
    }
    stop_ = true;
    cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  const std::string& id() const { return id_; }
  const RunConfig& config() const { return cfg_; }
  RunPhase phase() const { return phase_.load(); }
  IncumbentStore& store() { return engine_->store(); }
  EventLog& log() { return engine_->log(); }

  std::string error() const {
    std::lock_guard lock(mu_);
    return error_;
  }

  /// Queues repair-time updates; returns notices. Throws HttpError.
  json post_updates(const std::vector<RepairUpdate>& ups) {
    json notices = json::array();
    std::vector<RepairUpdate> fresh;
    {
      std::lock_guard lock(mu_);
      if (phase_ == RunPhase::Done || phase_ == RunPhase::Failed) throw HttpError(409, "run has finished");
      if (cfg_.mode != "live") throw HttpError(409, "updates are generated by the field simulation in this run");
      for (const auto& u : ups) {
        if (!damaged_.count(u.line)) throw HttpError(422, "'" + u.line + "' is not a damaged line");
        if (!(u.hours > 0) || !std::isfinite(u.hours)) throw HttpError(422, "hours must be positive");
        if (repaired_.count(u.line)) throw HttpError(409, "'" + u.line + "' is already repaired");
      }
      for (const auto& u : ups) {
        auto it = accepted_.find(u.line);
        if (it != accepted_.end() && it->second == u.hours) {
          notices.push_back("duplicate update for '" + u.line + "'");
          continue;
        }
        accepted_[u.line] = u.hours;
        fresh.push_back(u);
      }
    }
    if (!fresh.empty()) {
      interrupt();
      submit([fresh](ReoptEngine&, Run& self) {
        self.pending_updates_.insert(self.pending_updates_.end(), fresh.begin(), fresh.end());
      });
    }
    return {{"queued", fresh.size()}, {"notices", notices}};
  }

  /// Commits the next leg of a crew (and optionally records a finished repair).
  json post_dispatch(const std::string& crew, const std::string& repaired) {
    if (cfg_.mode != "live") throw HttpError(409, "dispatch is driven by the field simulation in this run");
    if (phase_ != RunPhase::Dispatched && phase_ != RunPhase::Searching)
      throw HttpError(409, std::string("run is ") + to_string(phase_.load()));
    if (!repaired.empty() && !damaged_.count(repaired)) throw HttpError(422, "'" + repaired + "' is not a damaged line");
    interrupt();
    auto fut = submit_wait([crew, repaired](ReoptEngine& eng, Run& self) -> json {
      int c;
      try {
        c = eng.scenario().crew_index(crew);
      } catch (const std::exception&) {
        throw HttpError(422, "unknown crew '" + crew + "'");
      }
      if (!repaired.empty()) {
        eng.mark_repaired(repaired);
        std::lock_guard lock(self.mu_);
        self.repaired_.insert(repaired);
      }
      const int from = eng.dispatch().path[c].back();
      const int to = eng.dispatch_next(c);
      const auto& nodes = eng.scenario().nodes();
      if (to < 0) return {{"crew", crew}, {"at", nodes[from]}, {"done", true}};
      return {{"crew", crew}, {"from", nodes[from]}, {"to", nodes[to]}, {"done", false}};
    });
    return fut.get();
  }

  std::vector<TimelineRow> timeline() const {
    std::lock_guard lock(mu_);
    if (episode_) return episode_->timeline;
    auto inc = engine_->store().get();
    if (!inc) return {};
    return plan_timeline(*inc);
  }

  json metrics() {
    json trace = json::array();
    for (const auto& e : engine_->log().snapshot())
      if (std::isfinite(e.objective) && (e.kind == "initial" || e.kind == "improved" || e.kind == "reevaluate"))
        trace.push_back({{"seq", e.seq}, {"wall_s", e.wall_s}, {"objective", e.objective}});
    json m = {{"objective_trace", trace}};
    std::lock_guard lock(mu_);
    if (episode_) {
      m["objective"] = episode_->objective;
      m["kwh_served"] = episode_->kwh_served;
      m["restoration_h"] = episode_->restoration_h;
      return m;
    }
    auto inc = engine_->store().get();
    if (!inc) return m;
    const double dt = inc->scenario->params.dt_hours;
    double kwh = 0.0, rest = 0.0;
    for (const auto& r : plan_timeline(*inc)) {
      kwh += r.served_kw * dt;
      if (!r.repaired.empty()) rest = r.step * dt;
    }
    m["objective"] = inc->objective;
    m["kwh_served"] = kwh;
    m["restoration_h"] = rest;
    return m;
  }

  std::string objective_csv() {
    std::string out = "seq,wall_s,objective\n";
    for (const auto& e : metrics()["objective_trace"])
      out += std::to_string(e["seq"].get<long>()) + "," + format_number(e["wall_s"].get<double>()) + "," +
             format_number(e["objective"].get<double>()) + "\n";
    return out;
  }

  std::string load_csv() const {
    EpisodeResult r;
    r.timeline = timeline();
    return r.load_served_csv(dt_);
  }

  /// Writes the run's artifacts into `dir`.
  void write_artifacts(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "events.jsonl") << engine_->log().jsonl();
    std::ofstream(dir / "events.csv") << engine_->log().csv();
    EpisodeResult r;
    r.timeline = timeline();
    std::ofstream(dir / "timeline.csv") << r.timeline_csv();
    std::ofstream(dir / "load_served.csv") << load_csv();
    std::ofstream(dir / "objective.csv") << objective_csv();
    std::ofstream(dir / "metrics.json") << metrics().dump(2) << "\n";
  }

 private:
  using Command = std::function<void(ReoptEngine&, Run&)>;

  std::string id_;
  RunConfig cfg_;
  std::unique_ptr<SolverAdapter> solver_;
  std::unique_ptr<Clock> clock_;
  std::unique_ptr<ReoptEngine> engine_;
  std::set<std::string> damaged_;
  double dt_ = 1.0;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<Command> queue_;
  bool closing_ = false;
  std::atomic<bool> stop_{false};
  std::atomic<bool> resume_{false};
  std::atomic<RunPhase> phase_{RunPhase::Assigning};
  std::string error_;
  std::set<std::string> repaired_;
  std::map<std::string, double> accepted_;
  std::vector<RepairUpdate> pending_updates_;
  std::optional<EpisodeResult> episode_;
  std::thread worker_;

  // Ends a running search session at its next iteration boundary; the
  // worker resumes searching once the queued commands are applied.
  void interrupt() {
    if (phase_ == RunPhase::Searching) resume_ = true;
    stop_ = true;
  }

  void submit(Command c) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(c));
    }
    cv_.notify_all();
  }

  std::future<json> submit_wait(std::function<json(ReoptEngine&, Run&)> f) {
    auto done = std::make_shared<std::promise<json>>();
    auto fut = done->get_future();
    submit([f = std::move(f), done](ReoptEngine& eng, Run& self) {
      try {
        done->set_value(f(eng, self));
      } catch (...) {
        done->set_exception(std::current_exception());
      }
    });
    return fut;
  }

  void drain() {
    std::deque<Command> cmds;
    {
      std::lock_guard lock(mu_);
      cmds.swap(queue_);
    }
    for (auto& c : cmds) c(*engine_, *this);
  }

  void fail(const std::string& msg) {
    std::lock_guard lock(mu_);
    error_ = msg;
    phase_ = RunPhase::Failed;
  }

  void main() {
    try {
      if (cfg_.mode == "simulate") {
        phase_ = RunPhase::Searching;
        EpisodeResult r = run_episode(*engine_, cfg_.field, &stop_);
        std::lock_guard lock(mu_);
        for (const auto& rep : r.repairs) repaired_.insert(rep.line);
        episode_ = std::move(r);
        phase_ = closing_ ? RunPhase::Failed : RunPhase::Done;
        if (closing_) error_ = "stopped";
        return;
      }
      phase_ = RunPhase::Assigning;
      const CrewAssignment a = engine_->assign_crews();
      phase_ = RunPhase::Initial;
      engine_->initial_solution(a);
      phase_ = RunPhase::Searching;
      engine_->neighborhood_search(&stop_);
      for (;;) {
        phase_ = RunPhase::Dispatched;
        {
          std::unique_lock lock(mu_);
          cv_.wait(lock, [&] { return closing_ || !queue_.empty(); });
          if (closing_) break;
        }
        stop_ = false;
        drain();
        const bool resume = resume_.exchange(false);
        if (pending_updates_.empty() && !resume) continue;
        std::vector<RepairUpdate> ups;
        ups.swap(pending_updates_);
        phase_ = RunPhase::Searching;
        try {
          if (ups.empty()) engine_->neighborhood_search(&stop_);
          else engine_->dynamic_step(ups, &stop_);
        } catch (const EngineError& e) {
          std::lock_guard lock(mu_);
          error_ = e.what();
        }
      }
      drain();
      phase_ = RunPhase::Done;
    } catch (const std::exception& e) {
      fail(e.what());
      drain();
    }
  }
};

/// The route table behind the HTTP endpoints. Usable without a socket.
class OpsService {
 public:
  explicit OpsService(std::string out_dir = {}) : out_dir_(std::move(out_dir)) {}
  ~OpsService() { shutdown(); }

  void shutdown() {
    std::map<std::string, std::shared_ptr<Run>> runs;
    {
      std::lock_guard lock(mu_);
      runs = runs_;
    }
    for (auto& [id, r] : runs) {
      r->shutdown();
      if (!out_dir_.empty()) r->write_artifacts(std::filesystem::path(out_dir_) / id);
    }
  }

  void mount(httplib::Server& srv) {
    auto wrap = [this](auto body) {
      return [this, body](const httplib::Request& req, httplib::Response& res) {
        try {
          body(req, res);
        } catch (const HttpError& e) {
          reply(res, e.status, {{"error", e.what()}});
        } catch (const json::exception& e) {
          reply(res, 422, {{"error", std::string("bad JSON: ") + e.what()}});
        } catch (const ScenarioError& e) {
          reply(res, 422, {{"error", e.what()}});
        } catch (const std::invalid_argument& e) {
          reply(res, 422, {{"error", e.what()}});
        } catch (const std::exception& e) {
          reply(res, 500, {{"error", e.what()}});
        }
      };
    };
    srv.Post("/scenario", wrap([this](const httplib::Request& req, httplib::Response& res) {
               reply(res, 201, {{"id", create_scenario(req.body)}});
             }));
    srv.Post("/runs", wrap([this](const httplib::Request& req, httplib::Response& res) {
               reply(res, 201, {{"id", start_run(json::parse(req.body))}});
             }));
    srv.Get(R"(/runs/([A-Za-z0-9_-]+))", wrap([this](const httplib::Request& req, httplib::Response& res) {
              reply(res, 200, status(req.matches[1]));
            }));
    srv.Get(R"(/runs/([A-Za-z0-9_-]+)/incumbent)", wrap([this](const httplib::Request& req, httplib::Response& res) {
              reply(res, 200, incumbent(req.matches[1]));
            }));
    srv.Get(R"(/runs/([A-Za-z0-9_-]+)/timeline)", wrap([this](const httplib::Request& req, httplib::Response& res) {
              auto r = run(req.matches[1]);
              if (req.get_param_value("format") == "csv") {
                EpisodeResult e;
                e.timeline = r->timeline();
                res.set_content(e.timeline_csv(), "text/csv");
              } else {
                reply(res, 200, timeline_json(r->timeline()));
              }
            }));
    srv.Get(R"(/runs/([A-Za-z0-9_-]+)/metrics)", wrap([this](const httplib::Request& req, httplib::Response& res) {
              auto r = run(req.matches[1]);
              const auto csv = req.get_param_value("csv");
              if (csv == "objective") res.set_content(r->objective_csv(), "text/csv");
              else if (csv == "load") res.set_content(r->load_csv(), "text/csv");
              else reply(res, 200, r->metrics());
            }));
    srv.Get(R"(/runs/([A-Za-z0-9_-]+)/events)", wrap([this](const httplib::Request& req, httplib::Response& res) {
              res.set_content(run(req.matches[1])->log().jsonl(), "application/x-ndjson");
            }));
    srv.Post(R"(/runs/([A-Za-z0-9_-]+)/updates)", wrap([this](const httplib::Request& req, httplib::Response& res) {
               reply(res, 200, post_updates(req.matches[1], json::parse(req.body)));
             }));
    srv.Post(R"(/runs/([A-Za-z0-9_-]+)/dispatch)", wrap([this](const httplib::Request& req, httplib::Response& res) {
               const json j = json::parse(req.body);
               if (!j.is_object() || !j.contains("crew")) throw HttpError(422, "dispatch needs a crew");
               reply(res, 200, run(req.matches[1])->post_dispatch(j.at("crew").get<std::string>(),
                                                                  j.value("repaired", std::string())));
             }));
    srv.Post(R"(/runs/([A-Za-z0-9_-]+)/stop)", wrap([this](const httplib::Request& req, httplib::Response& res) {
               auto r = run(req.matches[1]);
               r->shutdown();
               if (!out_dir_.empty()) r->write_artifacts(std::filesystem::path(out_dir_) / r->id());
               reply(res, 200, status(r->id()));
             }));
  }

  std::string create_scenario(const std::string& body) {
    Scenario s = parse_scenario(body);
    std::lock_guard lock(mu_);
    const std::string id = "s" + std::to_string(++scenario_seq_);
    scenarios_.emplace(id, std::move(s));
    return id;
  }

  std::string start_run(const json& j) {
    RunConfig cfg = RunConfig::from_json(j);
    std::shared_ptr<Run> r;
    {
      std::lock_guard lock(mu_);
      auto it = scenarios_.find(cfg.scenario);
      if (it == scenarios_.end()) throw HttpError(404, "unknown scenario '" + cfg.scenario + "'");
      const std::string id = "r" + std::to_string(++run_seq_);
      r = std::make_shared<Run>(id, it->second, std::move(cfg));
      runs_[id] = r;
    }
    r->start();
    return r->id();
  }

  std::shared_ptr<Run> run(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = runs_.find(id);
    if (it == runs_.end()) throw HttpError(404, "unknown run '" + id + "'");
    return it->second;
  }

  json status(const std::string& id) const {
    auto r = run(id);
    json j = {{"id", id}, {"phase", to_string(r->phase())}, {"config", r->config().to_json()}};
    if (auto inc = r->store().get()) j["objective"] = inc->objective;
    if (auto e = r->error(); !e.empty()) j["error"] = e;
    return j;
  }

  json incumbent(const std::string& id) const {
    auto r = run(id);
    auto inc = r->store().get();
    if (!inc) throw HttpError(404, "run '" + id + "' has no incumbent yet");
    return incumbent_json(*inc, r->store().version());
  }

  json post_updates(const std::string& id, const json& body) {
    auto r = run(id);
    std::vector<RepairUpdate> ups;
    auto one = [&](const json& u) {
      if (!u.is_object() || !u.contains("line") || !u.contains("hours") || !u["line"].is_string() ||
          !u["hours"].is_number())
        throw HttpError(422, "an update is {\"line\": ID, \"hours\": NUMBER}");
      ups.push_back({u["line"].get<std::string>(), u["hours"].get<double>()});
    };
    if (body.is_object() && body.contains("updates")) {
      if (!body["updates"].is_array()) throw HttpError(422, "updates must be an array");
      for (const auto& u : body["updates"]) one(u);
    } else {
      one(body);
    }
    return r->post_updates(ups);
  }

  /// Blocks until the run leaves the given phases or the timeout passes.
  bool wait_until_settled(const std::string& id, double timeout_s) const {
    auto r = run(id);
    const auto end = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
    while (std::chrono::steady_clock::now() < end) {
      const RunPhase p = r->phase();
      if (p == RunPhase::Dispatched || p == RunPhase::Done || p == RunPhase::Failed) return true;
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    return false;
  }

 private:
  mutable std::mutex mu_;
  std::map<std::string, Scenario> scenarios_;
  std::map<std::string, std::shared_ptr<Run>> runs_;
  long scenario_seq_ = 0, run_seq_ = 0;
  std::string out_dir_;

  static void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }
};

}  // namespace gridmend
