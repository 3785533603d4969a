#pragma once
// Solver adapters: the embedded branch and bound and an external process
// speaking the LP / solution text formats.

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <string>

#include "gridmend/branch_bound.hpp"
#include "gridmend/milp.hpp"

namespace gridmend {

struct SolveParams {
  double time_limit_s = 60.0;
  double rel_gap = 0.0;
  long node_limit = 10'000'000;
  const std::atomic<bool>* stop = nullptr;
};

class SolverAdapter {
 public:
  virtual ~SolverAdapter() = default;
  virtual Assignment solve(const MilpModel& model, const SolveParams& params) = 0;
  virtual std::string name() const = 0;
};

class EmbeddedSolver : public SolverAdapter {
 public:
  static constexpr int kMaxVariables = 5000;

  Assignment solve(const MilpModel& model, const SolveParams& params) override {
    Assignment a;
    if (model.num_vars() > kMaxVariables) {
      a.status = SolveStatus::Error;
      a.message = "model has " + std::to_string(model.num_vars()) + " variables; the embedded solver stops at " +
                  std::to_string(kMaxVariables) + ", use --solver external:CMD";
      return a;
    }
    BnbParams bp;
    bp.time_limit_s = params.time_limit_s;
    bp.rel_gap = params.rel_gap;
    bp.node_limit = params.node_limit;
    bp.stop = params.stop;
    BranchAndBound bnb(model, bp);
    BnbResult r = bnb.run();
    last_nodes_ = r.nodes;
    last_bound_ = r.bound;
    a.status = r.status;
    a.message = r.message;
    a.objective = r.objective;
    a.values = std::move(r.x);
    return a;
  }

  std::string name() const override { return "embedded"; }
  long last_nodes() const { return last_nodes_; }
  double last_bound() const { return last_bound_; }

 private:
  long last_nodes_ = 0;
  double last_bound_ = -kInf;
};

/// Runs a command built from a template with {lp}, {sol} and {time_limit}
/// placeholders. The process writes a solution file; every returned point is
/// re-checked against the model.
class ExternalSolver : public SolverAdapter {
 public:
  explicit ExternalSolver(std::string command_template) : tmpl_(std::move(command_template)) {}

  Assignment solve(const MilpModel& model, const SolveParams& params) override {
    namespace fs = std::filesystem;
    Assignment a;
    std::random_device rd;
    const fs::path dir = fs::temp_directory_path() / ("gridmend-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(dir);
    const fs::path lp = dir / "model.lp";
    const fs::path sol = dir / "model.sol";
    {
      std::ofstream out(lp);
      out << export_lp(model);
    }
    std::string cmd = tmpl_;
    replace_all(cmd, "{lp}", lp.string());
    replace_all(cmd, "{sol}", sol.string());
    char tl[32];
    std::snprintf(tl, sizeof tl, "%g", params.time_limit_s);
    replace_all(cmd, "{time_limit}", tl);
    const int rc = std::system(cmd.c_str());
    std::string text;
    if (fs::exists(sol)) {
      std::ifstream in(sol);
      std::stringstream ss;
      ss << in.rdbuf();
      text = ss.str();
    }
    std::error_code ec;
    fs::remove_all(dir, ec);
    if (text.empty()) {
      a.status = SolveStatus::Error;
      a.message = "external solver failed to launch or wrote no solution (exit code " + std::to_string(rc) + ")";
      return a;
    }
    try {
      a = parse_solution(text, model);
    } catch (const std::exception& e) {
      a.status = SolveStatus::Error;
      a.message = std::string("bad solution file: ") + e.what();
      a.values.clear();
      return a;
    }
    if (a.has_point()) {
      const EvalReport rep = evaluate(model, a.values, 1e-5);
      if (!rep.feasible()) {
        a.status = SolveStatus::Error;
        a.message = "external solution violates " + rep.violations.front().name;
        a.values.clear();
        return a;
      }
      a.objective = rep.objective;
    }
    return a;
  }

  std::string name() const override { return "external:" + tmpl_; }

 private:
  std::string tmpl_;

  static void replace_all(std::string& s, const std::string& from, const std::string& to) {
    for (std::size_t p = s.find(from); p != std::string::npos; p = s.find(from, p + to.size())) s.replace(p, from.size(), to);
  }
};

/// "embedded" or "external:<command template>".
inline std::unique_ptr<SolverAdapter> make_solver(const std::string& spec) {
  if (spec.empty() || spec == "embedded") return std::make_unique<EmbeddedSolver>();
  if (spec.rfind("external:", 0) == 0) return std::make_unique<ExternalSolver>(spec.substr(9));
  throw std::invalid_argument("unknown solver '" + spec + "' (expected embedded or external:CMD)");
}

inline Assignment solve(const MilpModel& model, const SolveParams& params = {}) {
  EmbeddedSolver s;
  return s.solve(model, params);
}

}  // namespace gridmend
