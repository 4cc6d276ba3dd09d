#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rotpool/cli.hpp"

using namespace rotpool;

namespace {

const std::filesystem::path kDir = std::filesystem::temp_directory_path() / "rotpool_test_cli";

std::filesystem::path write_temp(const std::string& name, const std::string& text) {
  std::filesystem::create_directories(kDir);
  const auto path = kDir / name;
  std::ofstream(path) << text;
  return path;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int status = -1;
  std::string out;
  std::string err;
};

RunResult run_cli(const std::string& args) {
  std::filesystem::create_directories(kDir);
  const auto out = kDir / "stdout.txt";
  const auto err = kDir / "stderr.txt";
  const std::string cmd = std::string(ROTPOOL_CLI) + " " + args + " > " + out.string() + " 2> " +
                          err.string();
  const int raw = std::system(cmd.c_str());
  RunResult r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(out);
  r.err = slurp(err);
  return r;
}

std::vector<Json> error_records(const std::string& err) {
  std::vector<Json> out;
  std::istringstream in(err);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(Json::parse(line));
  }
  return out;
}

}  // namespace

TEST_CASE("pool with the mean preset") {
  const auto input = write_temp("small.txt", "1,2\n4,3\n");
  const RunResult r = run_cli("pool --solver badmm --preset mean " + input.string());
  REQUIRE(r.status == 0);
  const Json doc = Json::parse(r.out);
  const Json& pooled = doc["results"][0]["pooled"];
  CHECK(pooled[0].get<double>() == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(pooled[1].get<double>() == doctest::Approx(3.5).epsilon(1e-6));
  CHECK(doc["config"]["solver"] == "badmm");
  CHECK(doc["trace"][0]["objective"].size() == 8);
  CHECK_FALSE(doc["results"][0].contains("wall_time"));
  CHECK(r.err.empty());

  const RunResult timed = run_cli("pool --timings --preset mean " + input.string());
  REQUIRE(timed.status == 0);
  CHECK(Json::parse(timed.out)["results"][0].contains("wall_time"));
}

TEST_CASE("grid report") {
  const RunResult r = run_cli("grid --solver badmm --alpha0 0");
  REQUIRE(r.status == 0);
  const Json doc = Json::parse(r.out);
  CHECK(doc["results"]["cells"].size() == 100);
  CHECK(doc["results"]["failed_count"] == 0);
  for (const Json& cell : doc["results"]["cells"]) {
    CHECK(std::abs(cell["plan_norm"].get<double>() - 1.0) <= 1e-3);
  }
}

TEST_CASE("imitate report") {
  const RunResult r = run_cli("imitate --preset attention --solver badmm");
  REQUIRE(r.status == 0);
  const Json doc = Json::parse(r.out);
  REQUIRE(doc["results"].size() == 1);
  CHECK(doc["results"][0]["plan_error"].get<double>() < 1e-4);
  CHECK(doc["results"][0]["pooled_error"].get<double>() < 1e-4);
}

TEST_CASE("reports are reproducible and rerunnable from their config") {
  const auto input = write_temp("repro.txt", "1,2,0.5\n4,3,2\n\n0.1,0.2\n0.3,0.4\n");
  const std::string args = "pool --solver sinkhorn --alpha0 0.1 --seed 3 " + input.string();
  const RunResult a = run_cli(args);
  const RunResult b = run_cli(args);
  REQUIRE(a.status == 0);
  CHECK(a.out == b.out);

  const auto report = write_temp("report.json", a.out);
  const RunResult c = run_cli("--config " + report.string());
  REQUIRE(c.status == 0);
  CHECK(c.out == a.out);

  const auto out_path = kDir / "written.json";
  const RunResult d = run_cli(args + " --out " + out_path.string());
  REQUIRE(d.status == 0);
  CHECK(d.out.empty());
  CHECK(slurp(out_path) == a.out);
}

TEST_CASE("hierarchy and bench commands") {
  const auto groups = write_temp(
      "groups.json",
      R"([{"id": "g1", "sets": [{"data": [[1, 2, 3], [0, 0, 3]]}, {"data": [[5, 5, 5, 5, 0], [1, 2, 3, 4, 5]]}]}])");
  const RunResult h = run_cli("hierarchy --preset mean --outer-preset mean " + groups.string());
  REQUIRE(h.status == 0);
  const Json hdoc = Json::parse(h.out);
  const Json& pooled = hdoc["results"][0]["pooled"];
  CHECK(pooled[0].get<double>() == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(pooled[1].get<double>() == doctest::Approx(2.0).epsilon(1e-6));

  const RunResult b = run_cli("bench --trials 3 --sizes 10 --outer 3 --inner 3");
  REQUIRE(b.status == 0);
  const Json rows = Json::parse(b.out)["results"];
  CHECK(rows.size() == 4);
  CHECK(rows[0]["times"].size() == 3);
}

TEST_CASE("errors and exit codes") {
  const auto negative = write_temp("neg.txt", "-1,2\n4,3\n");
  RunResult r = run_cli("pool " + negative.string());
  CHECK(r.status == 2);
  auto records = error_records(r.err);
  REQUIRE(records.size() == 1);
  CHECK(records[0]["level"] == "error");
  CHECK(records[0]["kind"] == "InvalidInput");
  CHECK(records[0]["message"].get<std::string>().find("row 1, col 1") != std::string::npos);
  CHECK(run_cli("pool --allow-signed " + negative.string()).status == 0);

  const auto empty_field = write_temp("empty.txt", "1,,2\n");
  r = run_cli("pool " + empty_field.string());
  CHECK(r.status == 2);
  records = error_records(r.err);
  REQUIRE(records.size() == 1);
  CHECK(records[0]["kind"] == "ParseError");
  CHECK(records[0]["line"] == 1);
  CHECK(records[0]["column"] == 3);

  CHECK(run_cli("pool --solver nope " + negative.string()).status == 2);
  CHECK(run_cli("pool --outer 0 " + negative.string()).status == 2);
  CHECK(run_cli("pool " + (kDir / "missing.txt").string()).status == 2);
  CHECK(run_cli("pool --no-such-flag").status == 2);

  const auto huge = write_temp("huge.txt", "1e305,0\n1,2\n");
  r = run_cli("pool --solver sinkhorn --alpha1 1e-8 " + huge.string());
  CHECK(r.status == 0);
  CHECK(Json::parse(r.out)["results"][0]["failed"] == true);
  records = error_records(r.err);
  REQUIRE(records.size() == 1);
  CHECK(records[0]["kind"] == "NumericalFailure");
  CHECK(records[0]["iteration"] == 0);
  CHECK(run_cli("pool --strict --solver sinkhorn --alpha1 1e-8 " + huge.string()).status == 1);

  const auto x = write_temp("alpha0.txt", "1,2\n4,3\n");
  r = run_cli("pool --solver sinkhorn --alpha0 0.1 " + x.string());
  CHECK(r.status == 0);
  records = error_records(r.err);
  REQUIRE(records.size() == 1);
  CHECK(records[0]["level"] == "warning");
}

TEST_CASE("config serialization round trip") {
  RunConfig c;
  c.command = Command::Bench;
  c.inputs = {"a.txt", "b.txt"};
  c.solver = SolverKind::Badmm;
  c.preset = PresetName::Max;
  c.overrides.alpha0 = 0.25;
  c.overrides.rho = 3.0;
  c.overrides.outer_iters = 12;
  c.overrides.smoothness = Smoothness::Quadratic;
  c.seed = 99;
  c.strict = true;
  c.trials = 5;
  c.sizes = {10, 20};
  c.fixed_k = true;
  c.heads = {PresetName::Mean, PresetName::Max};
  const Json j = config_to_json(c);
  const RunConfig back = config_from_json(j);
  CHECK(config_to_json(back) == j);
  CHECK(back.overrides.alpha0 == 0.25);
  CHECK(back.sizes == std::vector<Index>{10, 20});

  Json report = Json::object();
  report["config"] = j;
  CHECK(config_to_json(config_from_json(report)) == j);
  Json bad = j;
  bad["solver"] = "simplex";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
}

TEST_CASE("argument parsing") {
  std::ostringstream sink;
  const char* argv[] = {"rotpool", "pool", "--solver", "badmm", "--alpha2", "5", "in.txt"};
  const auto c = parse_args(7, argv, sink);
  REQUIRE(c.has_value());
  CHECK(c->command == Command::Pool);
  CHECK(c->solver == SolverKind::Badmm);
  CHECK(c->overrides.alpha2 == 5.0);
  CHECK(c->inputs == std::vector<std::string>{"in.txt"});
  CHECK(effective_solver(*c) == SolverKind::Badmm);
  CHECK(effective_params(*c).alpha2 == 5.0);

  const char* preset_argv[] = {"rotpool", "pool", "--preset", "max", "in.txt"};
  const auto p = parse_args(5, preset_argv, sink);
  REQUIRE(p.has_value());
  CHECK(effective_solver(*p) == SolverKind::Sinkhorn);
  CHECK(effective_params(*p).alpha3 == 0.0);

  const char* help[] = {"rotpool", "--help"};
  CHECK_FALSE(parse_args(2, help, sink).has_value());
  const char* bad[] = {"rotpool", "pool", "--smoothness", "cubic"};
  CHECK_THROWS_AS(parse_args(4, bad, sink), ConfigError);
}
