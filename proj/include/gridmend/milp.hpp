#pragma once
// Solver-agnostic MILP representation and its text formats.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace gridmend {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class VarKind { Continuous, Binary };
enum class Sense { Le, Eq, Ge };

struct Variable {
  std::string name;
  VarKind kind = VarKind::Continuous;
  double lb = 0.0;
  double ub = kInf;
};

struct Term {
  int var;
  double coef;
};

struct Constraint {
  std::string name;
  std::vector<Term> terms;
  Sense sense = Sense::Le;
  double rhs = 0.0;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MilpModel {
 public:
  int add_var(std::string name, VarKind kind, double lb = 0.0, double ub = kInf) {
    if (kind == VarKind::Binary) {
      lb = std::max(lb, 0.0);
      ub = std::min(ub, 1.0);
    }
    const int idx = static_cast<int>(vars_.size());
    if (!index_.emplace(name, idx).second) throw ModelError("duplicate variable '" + name + "'");
    vars_.push_back({std::move(name), kind, lb, ub});
    obj_.push_back(0.0);
    return idx;
  }

  /// Adds a row; repeated variables are merged and zero coefficients dropped.
  int add_constraint(std::string name, std::vector<Term> terms, Sense sense, double rhs) {
    if (!con_names_.emplace(name).second) throw ModelError("duplicate constraint '" + name + "'");
    std::sort(terms.begin(), terms.end(), [](const Term& a, const Term& b) { return a.var < b.var; });
    std::vector<Term> merged;
    for (const Term& t : terms) {
      if (t.var < 0 || t.var >= num_vars())
        throw ModelError("constraint '" + name + "' references a missing variable");
      if (!merged.empty() && merged.back().var == t.var) merged.back().coef += t.coef;
      else merged.push_back(t);
    }
    std::erase_if(merged, [](const Term& t) { return t.coef == 0.0; });
    cons_.push_back({std::move(name), std::move(merged), sense, rhs});
    return static_cast<int>(cons_.size()) - 1;
  }

  void set_objective(int var, double coef) { obj_.at(var) = coef; }
  void add_objective(int var, double coef) { obj_.at(var) += coef; }
  void set_objective_constant(double c) { obj_const_ = c; }
  void add_objective_constant(double c) { obj_const_ += c; }

  int num_vars() const { return static_cast<int>(vars_.size()); }
  int num_constraints() const { return static_cast<int>(cons_.size()); }
  const std::vector<Variable>& vars() const { return vars_; }
  const std::vector<Constraint>& constraints() const { return cons_; }
  const Variable& var(int i) const { return vars_[i]; }
  const std::vector<double>& objective() const { return obj_; }
  double objective_constant() const { return obj_const_; }

  std::optional<int> find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  int at(std::string_view name) const {
    auto v = find(name);
    if (!v) throw ModelError("no variable '" + std::string(name) + "'");
    return *v;
  }
  bool has_constraint(const std::string& name) const { return con_names_.count(name) > 0; }

  void set_bounds(int var, double lb, double ub) {
    vars_.at(var).lb = lb;
    vars_.at(var).ub = ub;
  }

  // Optional starting point, by variable index.
  std::map<int, double> hints;
  /// Branching class per variable; higher classes are branched on first.
  std::map<int, int> branch_priority;

 private:
  std::vector<Variable> vars_;
  std::vector<Constraint> cons_;
  std::vector<double> obj_;
  double obj_const_ = 0.0;
  std::unordered_map<std::string, int> index_;
  std::unordered_set<std::string> con_names_;
};

enum class SolveStatus { Optimal, Feasible, Infeasible, TimeLimit, Error };

inline const char* to_string(SolveStatus s) {
  switch (s) {
    case SolveStatus::Optimal: return "optimal";
    case SolveStatus::Feasible: return "feasible";
    case SolveStatus::Infeasible: return "infeasible";
    case SolveStatus::TimeLimit: return "time-limit";
    case SolveStatus::Error: return "error";
  }
  return "error";
}

inline std::optional<SolveStatus> parse_status(std::string_view s) {
  if (s == "optimal") return SolveStatus::Optimal;
  if (s == "feasible") return SolveStatus::Feasible;
  if (s == "infeasible") return SolveStatus::Infeasible;
  if (s == "time-limit") return SolveStatus::TimeLimit;
  if (s == "error") return SolveStatus::Error;
  return std::nullopt;
}

/// A (possibly empty) point for a model, indexed like `MilpModel::vars()`.
struct Assignment {
  std::vector<double> values;
  double objective = kInf;
  SolveStatus status = SolveStatus::Error;
  std::string message;

  bool has_point() const {
    return !values.empty() && (status == SolveStatus::Optimal || status == SolveStatus::Feasible);
  }
};

// ---------------------------------------------------------------------------
// Number formatting: 12 significant digits, shortest "%g" style.

inline std::string format_number(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  if (v == 0.0) return "0";
  char buf[40];
  auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

// ---------------------------------------------------------------------------
// LP text export

namespace detail {

inline void append_terms(std::string& out, const std::vector<std::pair<const std::string*, double>>& terms) {
  bool first = true;
  for (const auto& [name, coef] : terms) {
    if (first) {
      out += format_number(coef);
    } else {
      out += coef < 0 ? " - " : " + ";
      out += format_number(std::abs(coef));
    }
    out += ' ';
    out += *name;
    first = false;
  }
  if (first) out += '0';
}

}  // namespace detail

/// Canonical LP text: objective, constraints, bounds (every variable, in
/// declaration order), binaries. Byte-identical for identical models.
inline std::string export_lp(const MilpModel& m) {
  std::string out;
  out.reserve(64 * (m.num_vars() + m.num_constraints()) + 64);
  out += "minimize\n obj: ";
  std::vector<std::pair<const std::string*, double>> terms;
  for (int j = 0; j < m.num_vars(); ++j)
    if (m.objective()[j] != 0.0) terms.push_back({&m.var(j).name, m.objective()[j]});
  detail::append_terms(out, terms);
  if (m.objective_constant() != 0.0) {
    const double c = m.objective_constant();
    out += terms.empty() ? (c < 0 ? " - " : " + ") : (c < 0 ? " - " : " + ");
    out += format_number(std::abs(c));
  }
  out += "\nsubject to\n";
  for (const auto& c : m.constraints()) {
    out += ' ';
    out += c.name;
    out += ": ";
    terms.clear();
    for (const auto& t : c.terms) terms.push_back({&m.var(t.var).name, t.coef});
    detail::append_terms(out, terms);
    out += c.sense == Sense::Le ? " <= " : c.sense == Sense::Ge ? " >= " : " = ";
    out += format_number(c.rhs);
    out += '\n';
  }
  out += "bounds\n";
  for (const auto& v : m.vars()) {
    out += ' ';
    if (v.lb == v.ub) {
      out += v.name;
      out += " = ";
      out += format_number(v.lb);
    } else {
      out += format_number(v.lb);
      out += " <= ";
      out += v.name;
      out += " <= ";
      out += format_number(v.ub);
    }
    out += '\n';
  }
  out += "binary\n";
  for (const auto& v : m.vars())
    if (v.kind == VarKind::Binary) {
      out += ' ';
      out += v.name;
      out += '\n';
    }
  out += "end\n";
  return out;
}

// ---------------------------------------------------------------------------
// LP text parse

class LpParseError : public std::runtime_error {
 public:
  LpParseError(int line, int column, const std::string& msg)
      : std::runtime_error("line " + std::to_string(line) + ", column " + std::to_string(column) +
                           ": " + msg),
        line_(line),
        column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  int line_;
  int column_;
};

namespace detail {

class LpLexer {
 public:
  LpLexer(std::string_view text, int line_no) : text_(text), line_(line_no) {}

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\r')) ++pos_;
  }
  bool at_end() {
    skip_ws();
    return pos_ >= text_.size();
  }
  int column() const { return static_cast<int>(pos_) + 1; }
  [[noreturn]] void error(const std::string& msg) const { throw LpParseError(line_, column(), msg); }

  std::string_view word() {
    skip_ws();
    const std::size_t start = pos_;
    while (pos_ < text_.size() && text_[pos_] != ' ' && text_[pos_] != '\t' && text_[pos_] != '\r') ++pos_;
    if (start == pos_) error("unexpected end of line");
    return text_.substr(start, pos_ - start);
  }
  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }
  void expect(std::string_view tok) {
    skip_ws();
    if (text_.substr(pos_, tok.size()) != tok) error("expected '" + std::string(tok) + "'");
    pos_ += tok.size();
  }
  double number() {
    const std::size_t col = pos_;
    std::string_view w = word();
    if (w == "inf" || w == "+inf") return kInf;
    if (w == "-inf") return -kInf;
    double v = 0.0;
    auto res = std::from_chars(w.data(), w.data() + w.size(), v);
    if (res.ec != std::errc() || res.ptr != w.data() + w.size()) {
      pos_ = col;
      skip_ws();
      error("expected a number, got '" + std::string(w) + "'");
    }
    return v;
  }
  std::string_view label() {
    skip_ws();
    const std::size_t colon = text_.find(':', pos_);
    if (colon == std::string_view::npos) error("expected 'name:'");
    std::string_view name = text_.substr(pos_, colon - pos_);
    while (!name.empty() && name.back() == ' ') name.remove_suffix(1);
    if (name.empty()) error("empty row name");
    pos_ = colon + 1;
    return name;
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_;
};

struct ParsedRow {
  std::vector<std::pair<std::string, double>> terms;
  double constant = 0.0;
};

// Reads "c1 v1 [+|- c2 v2]..." (or "0"), stopping at a comparison operator.
inline ParsedRow parse_linear(LpLexer& lx, bool allow_constant) {
  ParsedRow row;
  double sign = 1.0;
  bool first = true;
  while (true) {
    const char ch = lx.peek();
    if (ch == '\0' || ch == '<' || ch == '>' || ch == '=') break;
    if (!first) {
      std::string_view op = lx.word();
      if (op == "+") sign = 1.0;
      else if (op == "-") sign = -1.0;
      else lx.error("expected '+' or '-'");
    }
    const double coef = lx.number();
    const char nx = lx.peek();
    if (nx == '\0' || nx == '<' || nx == '>' || nx == '=' || nx == '+' || nx == '-') {
      // A bare number is a constant ("0" stands for an empty expression).
      if (!allow_constant && !(first && coef == 0.0 && (nx == '<' || nx == '>' || nx == '=' || nx == '\0')))
        lx.error("constant term not allowed here");
      row.constant += sign * coef;
    } else {
      row.terms.emplace_back(std::string(lx.word()), sign * coef);
    }
    first = false;
  }
  return row;
}

}  // namespace detail

/// Parses the canonical LP grammar written by export_lp. Throws LpParseError
/// with line/column on malformed input.
inline MilpModel parse_lp(const std::string& text) {
  enum class Section { None, Objective, Constraints, Bounds, Binary, End };
  Section section = Section::None;
  struct PendingRow {
    std::string name;
    detail::ParsedRow row;
    Sense sense;
    double rhs;
    int line;
  };
  std::vector<PendingRow> rows;
  detail::ParsedRow objective;
  bool have_objective = false;
  struct BoundLine {
    std::string name;
    double lb, ub;
    int line;
  };
  std::vector<BoundLine> bounds;
  std::vector<std::pair<std::string, int>> binaries;

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    std::string_view line(text.data() + pos, eol - pos);
    pos = eol + 1;
    ++line_no;
    detail::LpLexer lx(line, line_no);
    if (lx.at_end()) {
      if (eol == text.size()) break;
      continue;
    }
    if (line.front() != ' ') {
      std::string_view kw = lx.word();
      if (kw == "subject") {
        if (lx.at_end() || lx.word() != "to") lx.error("expected 'subject to'");
        kw = "subject to";
      }
      if (!lx.at_end()) lx.error("unexpected text after section keyword");
      if (kw == "minimize") section = Section::Objective;
      else if (kw == "subject to") section = Section::Constraints;
      else if (kw == "bounds") section = Section::Bounds;
      else if (kw == "binary") section = Section::Binary;
      else if (kw == "end") section = Section::End;
      else lx.error("unknown section '" + std::string(kw) + "'");
      continue;
    }
    if (section == Section::End) lx.error("text after 'end'");
    switch (section) {
      case Section::None:
        lx.error("expected 'minimize'");
      case Section::Objective: {
        std::string_view name = lx.label();
        if (name != "obj") lx.error("objective row must be named 'obj'");
        objective = detail::parse_linear(lx, true);
        if (!lx.at_end()) lx.error("unexpected text in objective");
        have_objective = true;
        break;
      }
      case Section::Constraints: {
        PendingRow r;
        r.line = line_no;
        r.name = std::string(lx.label());
        r.row = detail::parse_linear(lx, false);
        std::string_view op = lx.word();
        if (op == "<=") r.sense = Sense::Le;
        else if (op == ">=") r.sense = Sense::Ge;
        else if (op == "=") r.sense = Sense::Eq;
        else lx.error("expected '<=', '>=' or '='");
        r.rhs = lx.number();
        if (!lx.at_end()) lx.error("unexpected text after right-hand side");
        rows.push_back(std::move(r));
        break;
      }
      case Section::Bounds: {
        BoundLine b;
        b.line = line_no;
        const char ch = lx.peek();
        const bool numeric_start = (ch >= '0' && ch <= '9') || ch == '-' || ch == '+' || ch == '.' ||
                                   (ch == 'i' && line.substr(line.find_first_not_of(' '), 4) == "inf ");
        if (numeric_start) {
          b.lb = lx.number();
          lx.expect("<=");
          b.name = std::string(lx.word());
          lx.expect("<=");
          b.ub = lx.number();
        } else {
          b.name = std::string(lx.word());
          lx.expect("=");
          b.lb = b.ub = lx.number();
        }
        if (!lx.at_end()) lx.error("unexpected text in bound");
        bounds.push_back(std::move(b));
        break;
      }
      case Section::Binary:
        binaries.emplace_back(std::string(lx.word()), line_no);
        if (!lx.at_end()) lx.error("one binary per line");
        break;
      default:
        break;
    }
    if (eol == text.size()) break;
  }
  if (!have_objective) throw LpParseError(line_no, 1, "missing objective");

  MilpModel m;
  std::unordered_map<std::string, bool> is_binary;
  for (const auto& [name, ln] : binaries) is_binary[name] = true;
  for (const auto& b : bounds) {
    const bool bin = is_binary.count(b.name) > 0;
    try {
      const int v = m.add_var(b.name, bin ? VarKind::Binary : VarKind::Continuous);
      m.set_bounds(v, b.lb, b.ub);
    } catch (const ModelError& e) {
      throw LpParseError(b.line, 1, e.what());
    }
  }
  for (const auto& [name, ln] : binaries)
    if (!m.find(name)) throw LpParseError(ln, 1, "binary '" + name + "' has no bound line");
  for (const auto& [name, coef] : objective.terms) {
    auto v = m.find(name);
    if (!v) throw LpParseError(1, 1, "objective references unknown variable '" + name + "'");
    m.add_objective(*v, coef);
  }
  m.set_objective_constant(objective.constant);
  for (auto& r : rows) {
    std::vector<Term> terms;
    for (const auto& [name, coef] : r.row.terms) {
      auto v = m.find(name);
      if (!v) throw LpParseError(r.line, 1, "unknown variable '" + name + "'");
      terms.push_back({*v, coef});
    }
    try {
      m.add_constraint(r.name, std::move(terms), r.sense, r.rhs);
    } catch (const ModelError& e) {
      throw LpParseError(r.line, 1, e.what());
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Solution files: "status <word>", "obj <float>", then "name value" lines.

class SolutionParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline Assignment parse_solution(const std::string& text, const MilpModel& model) {
  Assignment a;
  a.values.assign(model.num_vars(), 0.0);
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  bool have_status = false;
  bool have_obj = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream ls(line);
    std::string key, val, extra;
    ls >> key >> val;
    if (val.empty() || (ls >> extra))
      throw SolutionParseError("line " + std::to_string(line_no) + ": expected 'name value'");
    auto number = [&](const std::string& s) {
      double v = 0.0;
      if (s == "inf") return kInf;
      if (s == "-inf") return -kInf;
      auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw SolutionParseError("line " + std::to_string(line_no) + ": unparseable value '" + s + "'");
      return v;
    };
    if (!have_status) {
      if (key != "status") throw SolutionParseError("line 1: expected 'status <word>'");
      auto st = parse_status(val);
      if (!st) throw SolutionParseError("line 1: unknown status '" + val + "'");
      a.status = *st;
      have_status = true;
    } else if (!have_obj) {
      if (key != "obj") throw SolutionParseError("line 2: expected 'obj <float>'");
      a.objective = number(val);
      have_obj = true;
    } else {
      auto v = model.find(key);
      if (!v) throw SolutionParseError("line " + std::to_string(line_no) + ": unknown variable '" + key + "'");
      a.values[*v] = number(val);
    }
  }
  if (!have_status || !have_obj) throw SolutionParseError("solution needs status and obj lines");
  if (!a.has_point() && a.status != SolveStatus::Feasible && a.status != SolveStatus::Optimal)
    a.values.clear();
  return a;
}

inline std::string write_solution(const MilpModel& model, const Assignment& a) {
  std::string out = "status ";
  out += to_string(a.status);
  out += "\nobj ";
  out += format_number(a.objective);
  out += '\n';
  for (int j = 0; j < static_cast<int>(a.values.size()); ++j) {
    if (a.values[j] == 0.0) continue;
    out += model.var(j).name;
    out += ' ';
    out += format_number(a.values[j]);
    out += '\n';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

struct Violation {
  std::string name;  // constraint name, "bound:<var>" or "integrality:<var>"
  double amount;
};

struct EvalReport {
  double objective = 0.0;
  std::vector<Violation> violations;
  double max_violation = 0.0;

  bool feasible() const { return violations.empty(); }
};

inline double row_activity(const Constraint& c, const std::vector<double>& x) {
  double act = 0.0;
  for (const auto& t : c.terms) act += t.coef * x[t.var];
  return act;
}

/// Recomputes the objective and lists every constraint, bound or
/// integrality requirement violated by more than `tol`.
inline EvalReport evaluate(const MilpModel& m, const std::vector<double>& x, double tol = 1e-6) {
  if (static_cast<int>(x.size()) != m.num_vars()) throw ModelError("evaluate: point has wrong dimension");
  EvalReport rep;
  rep.objective = m.objective_constant();
  for (int j = 0; j < m.num_vars(); ++j) rep.objective += m.objective()[j] * x[j];
  auto note = [&](const std::string& name, double amount) {
    rep.max_violation = std::max(rep.max_violation, amount);
    if (amount > tol) rep.violations.push_back({name, amount});
  };
  for (int j = 0; j < m.num_vars(); ++j) {
    const auto& v = m.var(j);
    note("bound:" + v.name, std::max(v.lb - x[j], x[j] - v.ub));
    if (v.kind == VarKind::Binary) note("integrality:" + v.name, std::abs(x[j] - std::round(x[j])));
  }
  for (const auto& c : m.constraints()) {
    const double act = row_activity(c, x);
    double viol = 0.0;
    if (c.sense == Sense::Le) viol = act - c.rhs;
    else if (c.sense == Sense::Ge) viol = c.rhs - act;
    else viol = std::abs(act - c.rhs);
    note(c.name, viol);
  }
  return rep;
}

inline EvalReport evaluate(const MilpModel& m, const Assignment& a, double tol = 1e-6) {
  return evaluate(m, a.values, tol);
}

}  // namespace gridmend
