#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "plqkit/cli.hpp"
#include "simplify_support.hpp"
#include "support.hpp"

using namespace plqkit;
using Json = nlohmann::json;

namespace {

struct CliRun {
  int code;
  Json report;
  std::string text;
};

CliRun run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_command(args, out, err);
  CliRun r{code, Json(), out.str()};
  if (!r.text.empty() && r.text.front() == '{') r.report = Json::parse(r.text);
  return r;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("plqkit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }

  std::string file(const std::string& name, const PlqFunction& f) {
    const std::string p = path(name);
    write_plq_file(f, p);
    return p;
  }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }

  std::filesystem::path dir_;
};

const ExtReal kNeg = ExtReal::neg_inf();
const ExtReal kPos = ExtReal::pos_inf();

}  // namespace

TEST(CliDigest, KnownVectors) {
  EXPECT_EQ(cli_detail::fnv1a64(""), "cbf29ce484222325");
  EXPECT_EQ(cli_detail::fnv1a64("a"), "af63dc4c8601ec8c");
  EXPECT_EQ(cli_detail::fnv1a64("foobar"), "85944171f73967e8");
}

TEST_F(Cli, CheckWorkedExample) {
  const std::string f = file("eq23.plq", testsupport::eq23());
  const CliRun r = run({"check", "--allow-jumps", f});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.report["status"], "ok");
  EXPECT_FALSE(r.report["result"]["convex"].get<bool>());
  EXPECT_EQ(r.report["feasibility"]["class"], "Feasible");
  EXPECT_EQ(r.report["result"]["domain"], Json::parse(R"(["-inf", "inf"])"));
  EXPECT_EQ(r.report["inputs"][0]["fnv1a64"], cli_detail::fnv1a64(read_text_file(f)));

  const CliRun strict = run({"check", f});
  EXPECT_EQ(strict.code, 1);
  EXPECT_EQ(strict.report["error"]["code"], "DiscontinuousInterior");
  EXPECT_EQ(strict.report["error"]["locus"], "/breakpoints/3");
}

TEST_F(Cli, SimplifySplitParabola) {
  const std::string f = file("sq.plq", testsupport::split_quadratic({1, 0, 0}, 0, 5, 10));
  const std::string o = path("out.plq");
  const CliRun r = run({"simplify", "--epsilon", "0", "--mode", "convex", f, "-o", o});
  EXPECT_EQ(r.code, 0);
  EXPECT_EQ(r.report["result"]["r"], 1);
  const PlqFunction g = parse_plq_file(o).function;
  ASSERT_EQ(g.size(), 1u);
  EXPECT_NEAR(g.piece(0).a, 1.0, 1e-9);
  EXPECT_EQ(r.report["config"]["merge_tol"], 1e-6);
  EXPECT_EQ(r.report["config"]["node_limit"], 5000000);
  EXPECT_EQ(r.report["config"]["smooth"], false);
  EXPECT_TRUE(r.report["config"]["delta"].is_null());
  EXPECT_NEAR(r.report["config"]["delta_effective"].get<double>(), 5e-6, 1e-18);
}

TEST_F(Cli, ProjectFixedConcaveParabola) {
  const std::string f = file("fminus.plq", validate_plq({-1.0, 1.0}, {{-1, 0, 0}}));
  const std::string o = path("proj.plq");
  const CliRun r = run({"project-fixed", f, "-o", o});
  EXPECT_EQ(r.code, 0);
  const PlqFunction g = parse_plq_file(o).function;
  EXPECT_NEAR(g.piece(0).a, 0.0, 1e-7);
  EXPECT_NEAR(g.piece(0).b, 0.0, 1e-7);
  EXPECT_NEAR(g.piece(0).c, -1.0 / 3.0, 1e-7);
  EXPECT_NEAR(r.report["result"]["squared_error"].get<double>(), 8.0 / 45.0, 1e-8);
  EXPECT_LE(r.report["diagnostics"]["kkt"]["max"].get<double>(), 1e-8);
  // the written document is stable under another write
  const std::string text = read_text_file(o);
  EXPECT_EQ(write_plq(parse_plq(text)), text);
}

TEST_F(Cli, InfeasibleInputsExitWithTwo) {
  const std::string concave = file("concave.plq", validate_plq({kNeg, kPos}, {{-1, 0, 0}}));
  const std::string vee = file("vee.plq", validate_plq({kNeg, 0.0, kPos}, {{0, 1, 0}, {0, -1, 0}}));
  const std::pair<std::string, std::string> cases[] = {{concave, "ConcaveUnbounded"},
                                                       {vee, "SlopeGapUnbounded"}};
  for (const auto& [f, cls] : cases) {
    for (const std::vector<std::string>& args :
         {std::vector<std::string>{"project-fixed", f}, {"project-variable", "--pieces", "8", f},
          {"check", f}, {"simplify", "--epsilon", "1", "--mode", "convex", f}}) {
      const CliRun r = run(args);
      EXPECT_EQ(r.code, 2) << args[0] << " " << cls;
      EXPECT_EQ(r.report["status"], "infeasible");
      EXPECT_EQ(r.report["feasibility"]["class"], cls) << args[0];
    }
  }
}

TEST_F(Cli, UsageErrorsExitWithOne) {
  const std::string f = file("f.plq", testsupport::split_quadratic({1, 0, 0}, 0, 1, 2));
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"frobnicate", f}).code, 1);
  EXPECT_EQ(run({"simplify", f}).code, 1);  // epsilon has no default
  EXPECT_EQ(run({"simplify", "--epsilon", "1", "--mode", "concave", f}).code, 1);
  EXPECT_EQ(run({"check", path("missing.plq")}).code, 1);
  EXPECT_EQ(run({"project-variable", f}).code, 1);
  EXPECT_EQ(run({"project-variable", "--pieces", "3", f}).code, 1);  // fewer than 2m
  const CliRun r = run({"simplify", f});
  EXPECT_EQ(r.report["status"], "usage_error");

  std::ofstream(path("bad.plq")) << "{\"format_version\": \"plq/1\"";
  const CliRun bad = run({"check", path("bad.plq")});
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(bad.report["error"]["code"], "MalformedDocument");

  const CliRun help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.text.find("project-variable"), std::string::npos);
}

TEST_F(Cli, DistanceEvalSample) {
  const PlqFunction a = testsupport::split_quadratic({1, 0, 0}, 0, 1, 2);
  const PlqFunction b = validate_plq({0.0, 1.0}, {{0, 1, 0}});
  const std::string fa = file("a.plq", a), fb = file("b.plq", b);
  const CliRun d = run({"distance", fa, fb});
  EXPECT_EQ(d.code, 0);
  // integral of (x^2 - x)^2 over [0, 1] is 1/30
  EXPECT_NEAR(d.report["result"]["squared_distance"].get<double>(), 1.0 / 30.0, 1e-15);
  EXPECT_EQ(run({"distance", fa, fa}).report["result"]["distance"], 0.0);
  const std::string shifted = file("s.plq", validate_plq({0.5, 2.0}, {{0, 1, 0}}));
  EXPECT_EQ(run({"distance", fa, shifted}).report["result"]["distance"], "inf");

  const CliRun e = run({"eval", fb, "--x", "0.25", "0", "2"});
  EXPECT_EQ(e.report["result"]["values"][0]["f"], 0.25);
  EXPECT_EQ(e.report["result"]["values"][1]["f"], "inf");
  EXPECT_EQ(e.report["result"]["values"][2]["f"], "inf");

  const CliRun s = run({"sample", fb, "--lo", "0", "--hi", "1", "--count", "3"});
  EXPECT_EQ(s.report["result"]["csv"], "x,f\n0,inf\n0.5,0.5\n1,1\n");
  const std::string csv = path("s.csv");
  EXPECT_EQ(run({"sample", fb, "--lo", "-1", "--hi", "1", "--count", "5", "-o", csv}).code, 0);
  EXPECT_EQ(read_text_file(csv), "x,f\n-1,inf\n-0.5,inf\n0,inf\n0.5,0.5\n1,1\n");
  EXPECT_EQ(run({"sample", fb, "--lo", "1", "--hi", "0"}).report["error"]["code"], "BadRange");
}

TEST_F(Cli, ProjectVariableEchoesConfigAndIsDeterministic) {
  const std::string f = file("eq23.plq", testsupport::eq23());
  const CliRun a = run({"project-variable", "--allow-jumps", "--pieces", "8", "--seed", "3", "--restarts", "4", f});
  const CliRun b = run({"project-variable", "--allow-jumps", "--pieces", "8", "--seed", "3", "--restarts", "4", f});
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.report["result"]["function"], b.report["result"]["function"]);
  const Json& cfg = a.report["config"];
  for (const char* key : {"pieces", "delta", "delta_effective", "restarts", "seed", "padding", "inner_tol",
                          "max_outer", "golden_iters", "max_doublings", "threads_effective", "allow_jumps",
                          "PLQKIT_THREADS"}) {
    EXPECT_TRUE(cfg.contains(key)) << key;
  }
  EXPECT_EQ(cfg["restarts"], 4);
  EXPECT_EQ(cfg["seed"], 3);
  EXPECT_EQ(a.report["diagnostics"]["traces"].size(), 4u);
  const Json& t = a.report["timings_ms"];
  double parts = 0.0;
  for (const char* key : {"parse_ms", "solve_ms", "write_ms"}) {
    ASSERT_TRUE(t.contains(key)) << key;
    EXPECT_GE(t[key].get<double>(), 0.0);
    parts += t[key].get<double>();
  }
  EXPECT_GE(t["total_ms"].get<double>(), parts);
}

TEST_F(Cli, SplineSimplify) {
  const std::string f = file("road.plq", simplifysupport::road_spline());
  const std::string o = path("road_out.plq");
  const CliRun r = run({"spline-simplify", "--epsilon", "0.2", "--delta", "5e-6", f, "-o", o});
  ASSERT_EQ(r.code, 0);
  const PlqFunction g = parse_plq_file(o).function;
  EXPECT_LT(g.breakpoints().size(), 22u);
  EXPECT_LT(r.report["result"]["squared_error"].get<double>(), 0.2);
  EXPECT_EQ(r.report["config"]["mode"], "free");
  EXPECT_EQ(r.report["config"]["smooth"], true);

  const std::string kink = file("kink.plq", validate_plq({-1.0, 0.0, 1.0}, {{0, -1, 0}, {0, 1, 0}}));
  const CliRun bad = run({"spline-simplify", "--epsilon", "1", kink});
  EXPECT_EQ(bad.code, 1);
  EXPECT_EQ(bad.report["error"]["code"], "NotASpline");
}

TEST(ShippedData, DocumentsParseAndRoundTrip) {
  const std::filesystem::path data(PLQKIT_DATA_DIR);
  int seen = 0;
  for (const auto& entry : std::filesystem::directory_iterator(data)) {
    if (entry.path().extension() != ".plq") continue;
    const std::string text = read_text_file(entry.path().string());
    EXPECT_EQ(write_plq(parse_plq(text, kNoContinuityCheck)), text) << entry.path();
    ++seen;
  }
  EXPECT_GE(seen, 5);
  const PlqFunction road = parse_plq_file((data / "road_spline.plq").string()).function;
  EXPECT_EQ(road.breakpoints().size(), 22u);
  EXPECT_FALSE(first_spline_defect(road).has_value());
}
