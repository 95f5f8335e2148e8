#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include <sys/wait.h>
#include <unistd.h>

#include "doctest.h"
#include "selfsim/cli_io.hpp"

using namespace selfsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("selfsim_test_" + std::to_string(::getpid()));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string run_to_string(const RunConfig& c, int& code) {
  std::ostringstream out, err;
  code = run(c, out, err);
  return out.str();
}

}  // namespace

TEST_CASE("parse_args: integrate example") {
  const RunConfig c =
      parse_args({"integrate", "--a", "0.918", "--rho0", "1.885", "--zeta-max", "100", "--out", "t.csv"});
  CHECK(c.command == Command::integrate);
  CHECK(c.params.a == 0.918);
  CHECK(c.params.rho0 == 1.885);
  CHECK(c.params.dim == 3.0);
  CHECK(c.zeta_max == 100.0);
  CHECK(c.out == "t.csv");
  CHECK(c.settings.form == Form::bounded_polar);
}

TEST_CASE("parse_args: shoot example") {
  const RunConfig c = parse_args({"shoot", "--start", "1.9,0.9", "--zeta-max", "50", "--tol", "1e-8"});
  CHECK(c.command == Command::shoot);
  CHECK(c.start == std::pair{1.9, 0.9});
  CHECK(c.zeta_max == 50.0);
  CHECK(c.tol == 1e-8);
  CHECK_FALSE(c.refine);
  CHECK(parse_args({"shoot", "--start", "1.9,0.9", "--refine"}).refine);
}

TEST_CASE("parse_args: other commands and forms") {
  CHECK(parse_args({"integrate", "--form", "cartesian"}).settings.form == Form::cartesian);
  const RunConfig s = parse_args({"sweep", "--rho0-range", "0.5,3", "--a-range", "0.5,1.5",
                                  "--grid", "4,5", "--zeta-max", "100"});
  CHECK(s.grid.rho0_count == 4);
  CHECK(s.grid.a_count == 5);
  CHECK(s.grid.a_range == std::pair{0.5, 1.5});
  CHECK(parse_args({"converge", "--zeta-list", "100,200,400"}).zeta_list ==
        std::vector<double>{100, 200, 400});
  CHECK(parse_args({"ansatz-check", "--T", "2"}).T == 2.0);
  CHECK(parse_args({"branch", "--a-step", "-0.01", "--steps", "3"}).steps == 3);
}

TEST_CASE("usage errors name the offending flag") {
  CHECK_THROWS_WITH_AS(parse_args({"integrate", "--a", "-1"}), doctest::Contains("--a"), UsageError);
  CHECK_THROWS_WITH_AS(parse_args({"integrate", "--rho0", "0"}), doctest::Contains("--rho0"),
                       UsageError);
  CHECK_THROWS_WITH_AS(parse_args({"integrate", "--dim", "4.5"}), doctest::Contains("--dim"),
                       UsageError);
  CHECK_THROWS_WITH_AS(parse_args({"integrate", "--zeta-max", "abc"}),
                       doctest::Contains("--zeta-max"), UsageError);
  CHECK_THROWS_WITH_AS(parse_args({"integrate", "--form", "spherical"}), doctest::Contains("--form"),
                       UsageError);
  CHECK_THROWS_AS(parse_args({"integrate", "--bogus", "1"}), UsageError);
  CHECK_THROWS_AS(parse_args({"integrate", "--a"}), UsageError);
  CHECK_THROWS_AS(parse_args({}), UsageError);
  CHECK_THROWS_AS(parse_args({"frobnicate"}), UsageError);
  // --start fixes both unknowns; combining it with --a or --rho0 is ambiguous.
  CHECK_THROWS_AS(parse_args({"shoot", "--start", "1.9,0.9", "--a", "1"}), UsageError);
  CHECK_THROWS_AS(parse_args({"shoot", "--start", "1.9"}), UsageError);
  CHECK_THROWS_AS(parse_args({"branch", "--a-step", "0"}), UsageError);
  CHECK_THROWS_AS(parse_args({"integrate", "--zeta-max", "0.5"}), UsageError);
  CHECK_THROWS_AS(parse_args({"integrate", "--help"}), HelpRequested);
}

TEST_CASE("config text round trip") {
  RunConfig c = parse_args({"sweep", "--a", "0.123456789012345", "--rho0", "2.5", "--rtol", "3e-11",
                            "--grid", "3,7", "--out", "x.csv"});
  c.tolerances.growth_factor = 1.75;
  const std::string text = config_to_text(c);
  const RunConfig back = config_from_text(text);
  CHECK(back == c);
  CHECK(back.params.a == 0.123456789012345);
  CHECK(back.settings.rtol == 3e-11);
  CHECK(back.tolerances.growth_factor == 1.75);
  CHECK(config_to_text(back) == text);

  // Comments, blank lines, underscores in keys.
  const RunConfig d = config_from_text("# comment\n\nzeta_max = 250  # trailing\nrho0=3\n");
  CHECK(d.zeta_max == 250.0);
  CHECK(d.params.rho0 == 3.0);
  CHECK_THROWS_AS(config_from_text("nonsense=1\n"), UsageError);
  CHECK_THROWS_AS(config_from_text("a 1\n"), UsageError);
}

TEST_CASE("config file: write, read, flags override") {
  TempDir dir;
  const fs::path file = dir.path / "run.cfg";
  RunConfig base = parse_args({"verify", "--a", "0.5", "--rho0", "3", "--zeta-max", "400"});
  write_config_file(base, file);
  CHECK(read_config_file(file) == base);

  const RunConfig c = parse_args({"verify", "--config", file.string(), "--zeta-max", "200"});
  CHECK(c.command == Command::verify);
  CHECK(c.params.a == 0.5);
  CHECK(c.params.rho0 == 3.0);
  CHECK(c.zeta_max == 200.0);
  CHECK_THROWS_AS(parse_args({"verify", "--config", (dir.path / "missing").string()}), UsageError);
}

TEST_CASE("format_double round-trips every double") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint64_t> bits;
  for (int i = 0; i < 20000; ++i) {
    const std::uint64_t b = bits(rng);
    double v;
    std::memcpy(&v, &b, sizeof v);
    if (!std::isfinite(v)) continue;
    REQUIRE(parse_double(format_double(v)) == v);
  }
  for (double v : {0.0, -0.0, 1e-300, 5e-324, std::numeric_limits<double>::max(), 0.1, 1.0 / 3}) {
    CHECK(parse_double(format_double(v)) == v);
  }
  CHECK(std::isnan(parse_double(format_double(std::nan("")))));
  CHECK(parse_double(format_double(INFINITY)) == INFINITY);
  CHECK_THROWS(parse_double("1.0x"));
}

TEST_CASE("trajectory CSV layout and bit-exact re-read") {
  Trajectory t = integrate(make_params(1, 1), 3.0);
  const std::vector<Sample> all = t.samples;
  t.samples = {all[0], all[all.size() / 2], all.back()};

  std::ostringstream out;
  write_trajectory_csv(t, out);
  const std::string text = out.str();
  std::istringstream lines_in(text);
  std::vector<std::string> lines;
  for (std::string l; std::getline(lines_in, l);) lines.push_back(l);
  std::size_t non_comment = 0;
  for (const auto& l : lines) non_comment += l[0] != '#';
  CHECK(non_comment == 4);  // header + 3 rows
  CHECK(lines.back() == "# status=completed");

  std::istringstream in(text);
  const CsvTable table = read_csv(in);
  CHECK(table.header == kTrajectoryColumns);
  REQUIRE(table.rows.size() == 3);
  CHECK(table.status == "completed");
  for (std::size_t i = 0; i < 3; ++i) {
    const Sample& s = t.samples[i];
    CHECK(table.number(i, "zeta") == s.zeta());
    CHECK(table.number(i, "zrho") == s.polar.p1);
    CHECK(table.number(i, "dzrho") == s.polar.p2);
    CHECK(table.number(i, "theta") == s.polar.theta);
    CHECK(table.number(i, "q_re") == s.cartesian.q.real());
    CHECK(table.number(i, "q_im") == s.cartesian.q.imag());
    CHECK(table.number(i, "dq_re") == s.cartesian.p.real());
    CHECK(table.number(i, "dq_im") == s.cartesian.p.imag());
    CHECK(table.number(i, "E") == energy_E(s.polar));
  }
  CHECK(table.number(1, "E") < table.number(0, "E"));
  CHECK(table.number(2, "E") < table.number(1, "E"));
  CHECK_THROWS_AS(table.number(0, "nope"), std::out_of_range);
}

TEST_CASE("trajectory CSV refuses a non-decreasing E column at dim 3") {
  Trajectory t = integrate(make_params(1, 1), 3.0);
  std::swap(t.samples[5], t.samples[6]);
  TempDir dir;
  const fs::path file = dir.path / "bad.csv";
  CHECK_THROWS(write_trajectory_csv(t, file));
  CHECK_FALSE(fs::exists(file));
}

TEST_CASE("CSV write failure leaves no partial file") {
  const Trajectory t = integrate(make_params(1, 1), 2.0);
  const fs::path file = "/nonexistent-dir/t.csv";
  CHECK_THROWS(write_trajectory_csv(t, file));
  CHECK_FALSE(fs::exists(file));
}

TEST_CASE("integrate command output is re-runnable from its own header") {
  TempDir dir;
  const fs::path csv = dir.path / "t.csv";
  const RunConfig c = parse_args(
      {"integrate", "--a", "0.918", "--rho0", "1.885", "--zeta-max", "20", "--out", csv.string()});
  std::ostringstream out, err;
  REQUIRE(run(c, out, err) == 0);
  const CsvTable table = read_csv(csv);
  std::string cfg;
  for (const auto& line : table.comments) cfg += line + "\n";
  CHECK(config_from_text(cfg) == c);
  CHECK(table.number(table.rows.size() - 1, "zeta") == 20.0);
  for (std::size_t i = 1; i < table.rows.size(); ++i) {
    REQUIRE(table.number(i, "E") < table.number(i - 1, "E"));
  }
}

TEST_CASE("sweep CSV columns") {
  std::ostringstream out;
  write_sweep_csv({classify_cell(1.0, 1.0, 20.0)}, out, "a=1\n");
  std::istringstream in(out.str());
  const CsvTable t = read_csv(in);
  CHECK(t.comments == std::vector<std::string>{"a=1"});
  CHECK(t.header == std::vector<std::string>{"rho0", "a", "bump_count", "E_final", "k_plateau",
                                             "Z_final", "status"});
  REQUIRE(t.rows.size() == 1);
  CHECK(t.rows[0].back() == "completed");
}

TEST_CASE("lemma report JSON schema and determinism") {
  TempDir dir;
  RunConfig c = parse_args({"verify", "--a", "1", "--rho0", "1", "--zeta-max", "60"});
  c.out = (dir.path / "r.json").string();
  std::ostringstream sink, err;
  REQUIRE(run(c, sink, err) == 0);
  const std::string first = slurp(c.out);
  REQUIRE(run(c, sink, err) == 0);
  const std::string second = slurp(c.out);
  CHECK(first == second);

  const Json j = Json::parse(first);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  REQUIRE(keys.size() >= 5);
  CHECK(std::vector<std::string>(keys.begin(), keys.begin() + 5) ==
        std::vector<std::string>{"kind", "params", "settings", "results", "pass"});
  CHECK(j["kind"] == "lemma_report");
  CHECK(j["params"]["a"] == 1.0);
  CHECK(j["params"]["rho0"] == 1.0);
  CHECK(j["params"]["dim"] == 3.0);
  REQUIRE(j["results"].is_array());
  CHECK(j["results"].size() == 8);
  int lemmas = 0, zero_energy = 0;
  for (const auto& e : j["results"]) {
    const std::string name = e["name"];
    lemmas += name.rfind("L2.", 0) == 0;
    zero_energy += name.rfind("T1.1", 0) == 0;
    CHECK(e.contains("observed"));
    CHECK(e.contains("pass"));
    CHECK(e.contains("tolerance_used"));
    CHECK(e.contains("checkpoints"));
  }
  CHECK(lemmas == 7);
  CHECK(zero_energy == 1);
}

TEST_CASE("shooting report: pass mirrors converged, exit code mirrors pass") {
  int code = -1;
  const Json ok = Json::parse(run_to_string(parse_args({"shoot", "--start", "1.9,0.9"}), code));
  CHECK(code == 0);
  CHECK(ok["kind"] == "shooting_result");
  CHECK(ok["pass"] == true);
  CHECK(ok["results"][0]["converged"] == true);
  CHECK(ok["results"][0]["bump_count"] == 1);

  const Json bad = Json::parse(
      run_to_string(parse_args({"shoot", "--start", "1.9,0.9", "--max-iter", "0"}), code));
  CHECK(code == 1);
  CHECK(bad["pass"] == false);
  CHECK(bad["results"][0]["converged"] == false);
}

TEST_CASE("structured outputs for the other report kinds") {
  ShootingResult r;
  r.rho0 = 1;
  r.a = 2;
  r.converged = true;
  Branch b;
  b.members = {r};
  b.label = 1;
  const Json jb = to_json(b);
  CHECK(jb["label"] == 1);
  CHECK(jb["members"].size() == 1);

  ConvergenceTable t;
  t.rows = {{100, 1e-3, 2e-4, 1.4, -2}};
  const Json jt = to_json(t);
  CHECK(jt["rows"].size() == 1);

  AnsatzCheck a;
  a.normalized = 1e-5;
  CHECK(to_json(a)["normalized_residual"] == 1e-5);

  const Json rep = make_report("branch", RunConfig{}, jb, std::nullopt);
  CHECK_FALSE(rep.contains("pass"));
}

TEST_CASE("run maps failures to exit codes") {
  RunConfig c;
  c.command = Command::integrate;
  c.zeta_max = 0.5;  // bypasses parse-time validation
  std::ostringstream out, err;
  CHECK(run(c, out, err) == 1);
  CHECK(err.str().find("zeta_max") != std::string::npos);
}

TEST_CASE("binary exit codes") {
  const char* cli = std::getenv("SELFSIM_CLI");
  if (!cli) return;
  TempDir dir;
  const std::string log = (dir.path / "log").string();
  auto code = [&](const std::string& args) {
    const int status = std::system((std::string(cli) + " " + args + " >" + log + " 2>&1").c_str());
    return WEXITSTATUS(status);
  };
  CHECK(code("integrate --a -1 --rho0 1") == 2);
  CHECK(slurp(log).find("--a") != std::string::npos);
  CHECK(code("integrate --a 1 --rho0 1 --zeta-max 3") == 0);
  CHECK(slurp(log).find("# status=completed") != std::string::npos);
  CHECK(code("shoot --start 1.9,0.9 --max-iter 0") == 1);
  CHECK(code("--help") == 0);
}
