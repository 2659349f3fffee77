#pragma once

// Command-line front end. run_command parses the arguments after the
// program name, runs one subcommand and prints a JSON run report on `out`.
// Exit codes: 0 success, 2 infeasible input, 1 usage or parse error.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plqkit/analysis.hpp"
#include "plqkit/io.hpp"
#include "plqkit/projection.hpp"
#include "plqkit/simplify.hpp"

namespace plqkit {

namespace cli_detail {

using Json = nlohmann::ordered_json;
using Clock = std::chrono::steady_clock;

inline std::string fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// JSON has no infinities; they travel as the same tokens the document uses.
inline Json number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  return x;
}

inline Json number(const ExtReal& x) {
  if (x.is_neg_inf()) return "-inf";
  if (x.is_pos_inf()) return "inf";
  return x.value();
}

inline Json function_json(const PlqFunction& f) {
  Json bps = Json::array();
  for (const auto& b : f.breakpoints()) bps.push_back(number(b));
  Json pcs = Json::array();
  for (const auto& p : f.pieces()) pcs.push_back(Json::array({p.a, p.b, p.c}));
  return Json{{"breakpoints", bps}, {"coefficients", pcs}};
}

inline Json kkt_json(const KktReport& k) {
  return Json{{"stationarity", k.stationarity},
              {"primal", k.primal},
              {"dual", k.dual},
              {"complementarity", k.complementarity},
              {"max", k.max()}};
}

inline Json diagnostics_json(const FitDiagnostics& d) {
  Json j{{"iterations", d.iterations},
         {"restarts", d.restarts},
         {"best_restart", d.best_restart},
         {"qp_solves", d.qp_solves},
         {"qp_iterations", d.qp_iterations},
         {"active_constraints", d.active_constraints},
         {"kkt", kkt_json(d.kkt)},
         {"tails_extended", d.extended},
         {"padding", d.padding},
         {"nodes", d.nodes},
         {"fit_calls", d.fit_calls}};
  Json traces = Json::array();
  for (const auto& t : d.traces) traces.push_back(t);
  j["traces"] = traces;
  return j;
}

inline Json feasibility_json(const FeasibilityClass& c) {
  return Json{{"class", to_string(c.tag)}, {"detail", c.detail}};
}

inline Json error_json(const Error& e) {
  Json j{{"code", to_string(e.code())}, {"message", e.message()}};
  if (e.index()) j["index"] = *e.index();
  if (!std::isnan(e.magnitude())) j["magnitude"] = number(e.magnitude());
  if (!e.locus().empty()) j["locus"] = e.locus();
  return j;
}

/// Flags shared by every subcommand, plus each subcommand's own.
struct Options {
  std::vector<std::string> inputs;
  std::string output;
  bool allow_jumps = false;
  std::vector<double> xs;
  double lo = 0.0, hi = 1.0;
  int count = 101;
  std::optional<int> pieces;
  std::optional<double> delta;
  int restarts = ProjectionConfig{}.restarts;
  std::uint64_t seed = 0;
  std::optional<double> epsilon;
  std::string mode;
  bool smooth = false;
  double merge_tol = SimplifyConfig{}.merge_tol;
  std::uint64_t node_limit = SimplifyConfig{}.node_limit;
};

class Timer {
 public:
  Timer() : start_(Clock::now()), last_(start_) {}
  /// Milliseconds since the previous lap.
  double lap() {
    const auto now = Clock::now();
    const double ms = std::chrono::duration<double, std::milli>(now - last_).count();
    last_ = now;
    return ms;
  }
  double total() const { return std::chrono::duration<double, std::milli>(Clock::now() - start_).count(); }

 private:
  Clock::time_point start_, last_;
};

inline std::string threads_env() {
  const char* v = std::getenv("PLQKIT_THREADS");
  return v ? v : "";
}

}  // namespace cli_detail

/// Runs one subcommand. `args` excludes the program name.
inline int run_command(const std::vector<std::string>& args, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  using cli_detail::Json;
  using cli_detail::number;
  cli_detail::Options o;

  CLI::App app{"plqkit: convex projection and simplification of piecewise linear-quadratic functions", "plqkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Help for every subcommand");

  const auto input = [&](CLI::App* sub, int n) {
    sub->add_option("input", o.inputs, n == 1 ? "PLQ document" : "Two PLQ documents")
        ->required()
        ->expected(n)
        ->check(CLI::ExistingFile);
    sub->add_flag("--allow-jumps", o.allow_jumps, "Accept interior discontinuities in the input");
  };
  const auto output = [&](CLI::App* sub, const char* what) { sub->add_option("-o,--output", o.output, what); };

  auto* check = app.add_subcommand("check", "Convexity and feasibility classes of a function");
  input(check, 1);
  auto* distance = app.add_subcommand("distance", "Exact L2 distance between two functions");
  input(distance, 2);
  auto* evalc = app.add_subcommand("eval", "Evaluate a function at points");
  input(evalc, 1);
  evalc->add_option("--x", o.xs, "Evaluation points")->required();
  auto* sample = app.add_subcommand("sample", "Equally spaced samples as CSV (x,f)");
  input(sample, 1);
  sample->add_option("--lo", o.lo, "Left end of the range")->required();
  sample->add_option("--hi", o.hi, "Right end of the range")->required();
  sample->add_option("--count", o.count, "Number of samples")->capture_default_str();
  output(sample, "CSV destination (embedded in the report when absent)");
  auto* pfixed = app.add_subcommand("project-fixed", "Closest convex function on fixed breakpoints");
  input(pfixed, 1);
  pfixed->add_option("--pieces", o.pieces, "Refine the input to this many pieces first");
  output(pfixed, "Destination for the projected function");
  auto* pvar = app.add_subcommand("project-variable", "Closest convex function with movable breakpoints");
  input(pvar, 1);
  pvar->add_option("--pieces", o.pieces, "Number of output pieces (>= 2m)")->required();
  pvar->add_option("--delta", o.delta, "Minimum breakpoint gap");
  pvar->add_option("--restarts", o.restarts, "Descent restarts")->capture_default_str();
  pvar->add_option("--seed", o.seed, "Seed for restart jitter")->capture_default_str();
  output(pvar, "Destination for the projected function");
  auto* simp = app.add_subcommand("simplify", "Fewest pieces within a squared-error tolerance");
  input(simp, 1);
  simp->add_option("--epsilon", o.epsilon, "Squared-error tolerance")->required();
  simp->add_option("--delta", o.delta, "Minimum output piece width");
  simp->add_option("--mode", o.mode, "Shape of the output")->check(CLI::IsMember({"convex", "free"}));
  simp->add_flag("--smooth", o.smooth, "Require equal slopes at output breakpoints");
  simp->add_option("--merge-tol", o.merge_tol, "Relative tolerance of the merge pass")->capture_default_str();
  simp->add_option("--node-limit", o.node_limit, "Branch-and-bound node budget")->capture_default_str();
  output(simp, "Destination for the simplified function");
  auto* spline = app.add_subcommand("spline-simplify", "Fewest-piece C1 approximation of a quadratic spline");
  input(spline, 1);
  spline->add_option("--epsilon", o.epsilon, "Squared-error tolerance")->required();
  spline->add_option("--delta", o.delta, "Minimum output piece width");
  spline->add_option("--mode", o.mode, "Shape of the output")->check(CLI::IsMember({"convex", "free"}));
  spline->add_option("--merge-tol", o.merge_tol, "Relative tolerance of the merge pass")->capture_default_str();
  spline->add_option("--node-limit", o.node_limit, "Branch-and-bound node budget")->capture_default_str();
  output(spline, "Destination for the simplified function");

  Json report;
  report["command"] = nullptr;
  report["arguments"] = args;

  std::vector<std::string> argv_store{"plqkit"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n";
    report["status"] = "usage_error";
    report["error"] = Json{{"code", "Usage"}, {"message", e.what()}};
    out << report.dump(2) << "\n";
    return 1;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string cmd = sub->get_name();
  report["command"] = cmd;

  cli_detail::Timer timer;
  Json timings;
  Json config{{"allow_jumps", o.allow_jumps},
              {"output", o.output.empty() ? Json(nullptr) : Json(o.output)},
              {"PLQKIT_THREADS", cli_detail::threads_env()}};
  report["inputs"] = Json::array();
  report["config"] = config;
  std::optional<PlqFunction> first;

  const auto finish = [&](int code) {
    timings["total_ms"] = timer.total();
    report["timings_ms"] = timings;
    out << report.dump(2) << "\n";
    return code;
  };

  try {
    const double tol = o.allow_jumps ? kNoContinuityCheck : kContinuityTol;
    std::vector<PlqFunction> fs;
    for (const auto& path : o.inputs) {
      const std::string text = read_text_file(path);
      report["inputs"].push_back(Json{{"path", path}, {"fnv1a64", cli_detail::fnv1a64(text)}});
      try {
        fs.push_back(parse_plq(text, tol).function);
      } catch (const Error& e) {
        throw Error(e.code(), path + ": " + e.message(), e.index(), e.magnitude(), e.locus());
      }
    }
    first = fs.front();
    timings["parse_ms"] = timer.lap();
    const PlqFunction& f = fs.front();

    Json result;
    std::optional<PlqFunction> produced;
    Json metadata{{"generator", "plqkit " + cmd}};
    int code = 0;

    if (cmd == "check") {
      const ConvexityReport cv = is_convex(f);
      const FeasibilityClass fc = classify_feasibility(f);
      double jump = 0.0;
      for (double j : continuity_jumps(f)) jump = std::max(jump, j);
      result = Json{{"pieces", f.size()},
                    {"domain", Json::array({number(f.lower()), number(f.upper())})},
                    {"convex", cv.convex},
                    {"max_interior_jump", jump}};
      if (cv.witness) {
        result["convexity_witness"] = Json{{"kind", to_string(cv.witness->kind)},
                                           {"index", cv.witness->index},
                                           {"magnitude", cv.witness->magnitude},
                                           {"x", number(cv.witness->x)}};
      }
      report["feasibility"] = cli_detail::feasibility_json(fc);
      if (!fc.feasible()) code = 2;
    } else if (cmd == "distance") {
      const ExtReal d = l2_distance(fs[0], fs[1]);
      result = Json{{"distance", number(d)},
                    {"squared_distance", d.is_finite() ? Json(d.value() * d.value()) : Json("inf")}};
    } else if (cmd == "eval") {
      Json values = Json::array();
      for (double x : o.xs) values.push_back(Json{{"x", x}, {"f", number(eval(f, x))}});
      result = Json{{"values", values}};
    } else if (cmd == "sample") {
      report["config"]["lo"] = o.lo;
      report["config"]["hi"] = o.hi;
      report["config"]["count"] = o.count;
      const std::string csv = sample_csv(f, o.lo, o.hi, o.count);
      timings["solve_ms"] = timer.lap();
      result = Json{{"rows", o.count}};
      if (o.output.empty()) {
        result["csv"] = csv;
      } else {
        write_text_file(o.output, csv);
      }
    } else if (cmd == "project-fixed") {
      report["config"]["pieces"] = o.pieces ? Json(*o.pieces) : Json(nullptr);
      const PlqFunction src = o.pieces ? restrict_to(f, initial_refinement(f, *o.pieces)) : f;
      const FitResult r = closest_convex_fixed(src);
      timings["solve_ms"] = timer.lap();
      result = Json{{"squared_error", r.squared_error}, {"status", to_string(r.status)}, {"pieces", r.g.size()}};
      report["diagnostics"] = cli_detail::diagnostics_json(r.diagnostics);
      produced = r.g;
      metadata["squared_error"] = r.squared_error;
    } else if (cmd == "project-variable") {
      ProjectionConfig pc;
      pc.delta = o.delta;
      pc.restarts = o.restarts;
      pc.seed = o.seed;
      const FitResult r = closest_convex_variable(f, *o.pieces, pc);
      timings["solve_ms"] = timer.lap();
      report["config"].update(Json{{"pieces", *o.pieces},
                                   {"delta", o.delta ? Json(*o.delta) : Json(nullptr)},
                                   {"delta_effective", r.diagnostics.delta},
                                   {"restarts", pc.restarts},
                                   {"seed", pc.seed},
                                   {"padding", pc.padding},
                                   {"inner_tol", pc.inner_tol},
                                   {"max_outer", pc.max_outer},
                                   {"golden_iters", pc.golden_iters},
                                   {"max_doublings", pc.max_doublings},
                                   {"threads_effective", detail::worker_count(pc.threads, pc.restarts)}});
      result = Json{{"squared_error", r.squared_error}, {"status", to_string(r.status)}, {"pieces", r.g.size()}};
      report["diagnostics"] = cli_detail::diagnostics_json(r.diagnostics);
      produced = r.g;
      metadata["squared_error"] = r.squared_error;
    } else {
      const bool spline_cmd = cmd == "spline-simplify";
      const std::string mode = o.mode.empty() ? (spline_cmd ? "free" : "convex") : o.mode;
      SimplifyConfig sc;
      sc.epsilon = *o.epsilon;
      sc.delta = o.delta;
      sc.merge_tol = o.merge_tol;
      sc.node_limit = o.node_limit;
      const Shape shape = mode == "convex" ? Shape::Convex : Shape::Free;
      const MinimalFit m = spline_cmd ? simplify_spline(f, sc, shape)
                                      : minimal_pieces(f, FitMode{shape, o.smooth, false}, sc);
      timings["solve_ms"] = timer.lap();
      report["config"].update(Json{{"epsilon", sc.epsilon},
                                   {"delta", o.delta ? Json(*o.delta) : Json(nullptr)},
                                   {"delta_effective", m.fit.diagnostics.delta},
                                   {"mode", mode},
                                   {"smooth", spline_cmd || o.smooth},
                                   {"merge_tol", sc.merge_tol},
                                   {"node_limit", sc.node_limit}});
      result = Json{{"r", m.r},
                    {"input_pieces", f.size()},
                    {"merged_pieces", greedy_merge(f, sc.merge_tol).size()},
                    {"squared_error", m.fit.squared_error},
                    {"status", to_string(m.fit.status)},
                    {"cuts", m.cuts.cuts()}};
      report["diagnostics"] = cli_detail::diagnostics_json(m.fit.diagnostics);
      produced = m.fit.g;
      metadata["squared_error"] = m.fit.squared_error;
      metadata["r"] = m.r;
    }

    if (produced) {
      result["function"] = cli_detail::function_json(*produced);
      if (!o.output.empty()) {
        write_plq_file(PlqDocument{*produced, nlohmann::json(metadata)}, o.output);
      }
      timings["write_ms"] = timer.lap();
    }
    report["status"] = code == 0 ? "ok" : "infeasible";
    report["result"] = result;
    return finish(code);
  } catch (const InfeasibleInputError& e) {
    err << e.what() << "\n";
    report["status"] = "infeasible";
    report["feasibility"] = cli_detail::feasibility_json(e.feasibility());
    report["error"] = cli_detail::error_json(e);
    return finish(2);
  } catch (const Error& e) {
    err << e.what() << "\n";
    if (e.code() == ErrorCode::InfeasibleInput) {
      report["status"] = "infeasible";
      if (first) report["feasibility"] = cli_detail::feasibility_json(classify_feasibility(*first));
      report["error"] = cli_detail::error_json(e);
      return finish(2);
    }
    report["status"] = "error";
    report["error"] = cli_detail::error_json(e);
    return finish(1);
  } catch (const std::exception& e) {
    err << e.what() << "\n";
    report["status"] = "error";
    report["error"] = Json{{"code", "Internal"}, {"message", e.what()}};
    return finish(1);
  }
}

}  // namespace plqkit
