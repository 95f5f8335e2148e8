#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "selfsim/analysis.hpp"
#include "selfsim/integrator.hpp"
#include "selfsim/solver.hpp"

namespace selfsim {

using Json = nlohmann::ordered_json;

enum class Command { integrate, verify, converge, sweep, shoot, branch, ansatz_check };
std::string to_string(Command command);
Command command_from_string(const std::string& name);

/// Bad flags, bad values, conflicting options. Maps to exit code 2.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// --help; the message is the help text. Maps to exit code 0.
class HelpRequested : public UsageError {
 public:
  using UsageError::UsageError;
};

struct RunConfig {
  Command command = Command::integrate;
  Params params{1.0, 1.0, 3.0};
  IntegratorSettings settings;
  double zeta_max = 100.0;
  std::vector<double> zeta_list{100.0, 200.0, 400.0};
  SweepGrid grid{{0.5, 3.0}, {0.5, 1.5}, 10, 10};
  std::pair<double, double> start{1.9, 0.9};
  double tol = 1e-8;
  int max_iter = 30;
  bool refine = false;
  std::vector<double> refine_list{50.0, 100.0, 200.0};
  double a_step = -0.02;
  int steps = 5;
  double T = 1.0;
  double t_max = 0.99;
  std::pair<double, double> r_range{0.05, 2.0};
  std::size_t r_count = 10;
  std::size_t t_count = 10;
  double fd_scale = 1e-2;
  LemmaTolerances tolerances;
  std::string out;  // empty: standard output

  bool operator==(const RunConfig& other) const;
};

/// Throws UsageError naming the offending flag.
void validate(const RunConfig& config);

/// argv without the program name, e.g. {"shoot", "--start", "1.9,0.9"}.
RunConfig parse_args(const std::vector<std::string>& args);
std::string usage_text();

/// key=value lines; '#' starts a comment.
std::string config_to_text(const RunConfig& config);
RunConfig config_from_text(const std::string& text, RunConfig base = {});
RunConfig read_config_file(const std::filesystem::path& path, RunConfig base = {});
void write_config_file(const RunConfig& config, const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double value);
double parse_double(const std::string& text);

inline const std::vector<std::string> kTrajectoryColumns{
    "zeta", "rho",     "zrho",  "dzrho", "theta", "theta_prime",   "q_re",
    "q_im", "dq_re",   "dq_im", "E",     "budd_residual", "Z"};

/// Leading '#' comment lines, header, one row per sample, '# status=...'.
/// At dim 3 a non-decreasing E column is refused before anything is written.
void write_trajectory_csv(const Trajectory& traj, std::ostream& out,
                          const std::string& config_comment = {});
void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path,
                          const std::string& config_comment = {});

struct CsvTable {
  std::vector<std::string> comments;  // without the leading '#'
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string status;

  double number(std::size_t row, const std::string& column) const;
};
CsvTable read_csv(std::istream& in);
CsvTable read_csv(const std::filesystem::path& path);

void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out,
                     const std::string& config_comment = {});

Json params_json(const Params& params);
Json settings_json(const RunConfig& config);
Json to_json(const LemmaReport& report);
Json to_json(const ShootingResult& result);
Json to_json(const Branch& branch);
Json to_json(const ConvergenceTable& table);
Json to_json(const AnsatzCheck& check);

/// {"kind", "params", "settings", "results", "pass"} in that order.
Json make_report(const std::string& kind, const RunConfig& config, Json results,
                 std::optional<bool> pass);
void write_report_json(const Json& report, std::ostream& out);
void write_report_json(const Json& report, const std::filesystem::path& path);

/// Runs the configured command, writing to config.out or `out`. Returns the
/// process exit code (0 ok, 1 computation failure).
int run(const RunConfig& config, std::ostream& out, std::ostream& err);

}  // namespace selfsim
