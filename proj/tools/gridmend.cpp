// gridmend command line: serve, solve, baseline, simulate, export-lp.

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "gridmend/gridmend.hpp"

namespace fs = std::filesystem;
using namespace gridmend;

namespace {

std::atomic<bool> g_stop{false};
httplib::Server* g_server = nullptr;

void on_signal(int) {
  g_stop = true;
  if (g_server) g_server->stop();
}

Scenario load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

void write(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

struct Common {
  std::string scenario;
  double time_limit = 600.0;
  double solve_time_limit = 300.0;
  std::uint64_t seed = 1;
  std::string solver = "embedded";
  std::string out = "out";
  bool reset_count = false;

  void add(CLI::App* app) {
    app->add_option("--scenario", scenario, "scenario JSON")->required()->check(CLI::ExistingFile);
    app->add_option("--time-limit", time_limit, "search budget per session, seconds");
    app->add_option("--solve-time-limit", solve_time_limit, "budget per subproblem, seconds");
    app->add_option("--seed", seed, "sampling seed");
    app->add_option("--solver", solver, "embedded or external:CMD with {lp} {sol} {time_limit}");
    app->add_option("--out", out, "output directory");
    app->add_flag("--reset-count-on-growth", reset_count, "reset the stall counter when the sample grows");
  }
  SearchParams params() const {
    SearchParams p;
    p.time_limit_s = time_limit;
    p.solve_time_limit_s = solve_time_limit;
    p.seed = seed;
    p.reset_count_on_growth = reset_count;
    return p;
  }
};

void write_incumbent(const fs::path& dir, const Incumbent& inc) {
  write(dir / "incumbent.json", incumbent_json(inc, 0).dump(2) + "\n");
  EpisodeResult r;
  r.timeline = plan_timeline(inc);
  write(dir / "timeline.csv", r.timeline_csv());
  write(dir / "load_served.csv", r.load_served_csv(inc.scenario->params.dt_hours));
}

void write_trace(const fs::path& dir, const EventLog& log) {
  write(dir / "events.jsonl", log.jsonl());
  write(dir / "events.csv", log.csv());
  std::string trace = "seq,wall_s,objective\n";
  for (const auto& e : log.snapshot())
    if (e.kind == "initial" || e.kind == "improved" || e.kind == "reevaluate")
      trace += std::to_string(e.seq) + "," + format_number(e.wall_s) + "," + format_number(e.objective) + "\n";
  write(dir / "objective.csv", trace);
}

void print_routes(const Incumbent& inc) {
  const RoutingSolution r = decode_routing(*inc.scenario, *inc.model, inc.point.values);
  for (const auto& c : r.crews) {
    std::cout << "  " << c.crew << ":";
    for (std::size_t i = 0; i < c.stops.size(); ++i)
      std::cout << (i ? " -> " : " ") << c.stops[i] << (i ? "@" + format_number(c.arrival_h[i]) + "h" : "");
    std::cout << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gridmend: repair crew routing and distribution restoration"};
  app.require_subcommand(1);

  int port = 8080;
  std::string host = "127.0.0.1", serve_out;
  auto* serve = app.add_subcommand("serve", "run the HTTP service");
  serve->add_option("--host", host);
  serve->add_option("--port", port);
  serve->add_option("--out", serve_out, "write run artifacts here when runs stop");

  Common solve_opts, base_opts, sim_opts;
  auto* solve = app.add_subcommand("solve", "assignment, initial solve and neighborhood search");
  solve_opts.add(solve);

  auto* baseline = app.add_subcommand("baseline", "priority-weighted routing, then restoration with that route");
  base_opts.add(baseline);
  double w1 = 10, w2 = 5, w3 = 1;
  baseline->add_option("--w1", w1);
  baseline->add_option("--w2", w2);
  baseline->add_option("--w3", w3);

  auto* simulate = app.add_subcommand("simulate", "field episode with perturbed repair times");
  sim_opts.add(simulate);
  double spread = 2.0, cadence = 900.0, dispatch_after = 1800.0;
  std::uint64_t field_seed = 0;
  bool sim_clock = false;
  simulate->add_option("--spread", spread, "repair-time perturbation half-width, hours");
  simulate->add_option("--cadence", cadence, "update cadence, seconds");
  simulate->add_option("--dispatch-after", dispatch_after, "search budget before the first dispatch, seconds");
  simulate->add_option("--field-seed", field_seed, "perturbation seed (default: --seed)");
  simulate->add_flag("--simulated-clock", sim_clock, "count one second per clock read instead of wall time");

  std::string lp_scenario, lp_out;
  bool lp_initial = false;
  auto* export_lp_cmd = app.add_subcommand("export-lp", "write the model in LP format");
  export_lp_cmd->add_option("--scenario", lp_scenario)->required()->check(CLI::ExistingFile);
  export_lp_cmd->add_option("--out", lp_out, "LP file (default: stdout)");
  export_lp_cmd->add_flag("--initial", lp_initial, "one-step reconfiguration model before repairs");

  CLI11_PARSE(app, argc, argv);
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (*serve) {
      OpsService svc(serve_out);
      httplib::Server srv;
      svc.mount(srv);
      g_server = &srv;
      std::cout << "listening on " << host << ":" << port << std::endl;
      if (!srv.listen(host, port)) {
        std::cerr << "cannot listen on " << host << ":" << port << "\n";
        return 1;
      }
      svc.shutdown();
      return 0;
    }
    if (*export_lp_cmd) {
      const Scenario s = load(lp_scenario);
      const std::string text = export_lp(lp_initial ? build_initial_reconfiguration(s) : build_dsrrp(s));
      if (lp_out.empty()) std::cout << text;
      else write(lp_out, text);
      return 0;
    }
    if (*solve) {
      const Scenario s = load(solve_opts.scenario);
      auto solver = make_solver(solve_opts.solver);
      ReoptEngine eng(s, *solver, solve_opts.params());
      const SearchSummary sum = eng.run(&g_stop);
      const Incumbent inc = *eng.store().get();
      fs::create_directories(solve_opts.out);
      write_incumbent(solve_opts.out, inc);
      write_trace(solve_opts.out, eng.log());
      std::cout << "objective " << format_number(inc.objective) << " after " << sum.iterations << " iterations ("
                << to_string(sum.reason) << (sum.proven_optimal ? ", proven optimal" : "") << ")\n";
      print_routes(inc);
      return 0;
    }
    if (*baseline) {
      const Scenario s = load(base_opts.scenario);
      auto solver = make_solver(base_opts.solver);
      PriorityWeights w{w1, w2, w3};
      const BaselineResult r = priority_baseline(s, *solver, w, base_opts.params(), nullptr, &g_stop);
      fs::create_directories(base_opts.out);
      write_incumbent(base_opts.out, r.restoration);
      std::cout << "priority objective " << format_number(r.priority_objective) << ", restoration objective "
                << format_number(r.restoration.objective) << "\n";
      print_routes(r.restoration);
      return 0;
    }
    if (*simulate) {
      const Scenario s = load(sim_opts.scenario);
      auto solver = make_solver(sim_opts.solver);
      ManualClock manual(1.0);
      ReoptEngine eng(s, *solver, sim_opts.params(), sim_clock ? static_cast<Clock*>(&manual) : nullptr);
      FieldConfig fc;
      fc.spread_h = spread;
      fc.cadence_s = cadence;
      fc.dispatch_after_s = dispatch_after;
      fc.seed = field_seed ? field_seed : sim_opts.seed;
      const EpisodeResult r = run_episode(eng, fc, &g_stop);
      fs::create_directories(sim_opts.out);
      write(fs::path(sim_opts.out) / "timeline.csv", r.timeline_csv());
      write(fs::path(sim_opts.out) / "load_served.csv", r.load_served_csv(s.params.dt_hours));
      write_trace(sim_opts.out, eng.log());
      std::string field = "wall_s,line,hours\n";
      for (const auto& e : r.events) field += format_number(e.wall_s) + "," + e.line + "," + format_number(e.hours) + "\n";
      write(fs::path(sim_opts.out) / "field_events.csv", field);
      std::cout << r.timeline_csv() << "objective " << format_number(r.objective) << ", served "
                << format_number(r.kwh_served) << " kWh, restored by hour " << format_number(r.restoration_h) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
