#include "selfsim/cli_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "selfsim/functionals.hpp"

namespace selfsim {

// ---------------------------------------------------------------- basics

std::string to_string(Command command) {
  switch (command) {
    case Command::integrate:
      return "integrate";
    case Command::verify:
      return "verify";
    case Command::converge:
      return "converge";
    case Command::sweep:
      return "sweep";
    case Command::shoot:
      return "shoot";
    case Command::branch:
      return "branch";
    case Command::ansatz_check:
      return "ansatz-check";
  }
  return "unknown";
}

Command command_from_string(const std::string& name) {
  for (Command c : {Command::integrate, Command::verify, Command::converge, Command::sweep,
                    Command::shoot, Command::branch, Command::ansatz_check}) {
    if (to_string(c) == name) return c;
  }
  throw UsageError("unknown command '" + name + "'");
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  if (text == "nan") return std::nan("");
  if (text == "inf") return std::numeric_limits<double>::infinity();
  if (text == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const char* first = text.data();
  const char* last = first + text.size();
  if (first != last && *first == '+') ++first;
  const auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc{} || res.ptr != last || text.empty()) {
    throw std::invalid_argument("not a number: '" + text + "'");
  }
  return v;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

const char* describe(Command cmd) {
  switch (cmd) {
    case Command::integrate: return "integrate one profile and write the trajectory CSV";
    case Command::verify: return "audit the lemma claims on one profile (JSON)";
    case Command::converge: return "zero-energy residual and H defect versus horizon (JSON)";
    case Command::sweep: return "classify a (rho0, a) grid (CSV)";
    case Command::shoot: return "Newton solve for a zero-energy profile (JSON)";
    case Command::branch: return "continue a root in a (JSON)";
    case Command::ansatz_check: return "PDE residual of the self-similar ansatz (JSON)";
  }
  return "";
}

std::vector<double> parse_list(const std::string& text, const std::string& flag) {
  std::vector<double> out;
  try {
    for (const auto& item : split(text, ',')) out.push_back(parse_double(item));
  } catch (const std::invalid_argument&) {
    throw UsageError(flag + " expects comma-separated numbers, got '" + text + "'");
  }
  if (out.empty()) throw UsageError(flag + " expects at least one number");
  return out;
}

std::pair<double, double> parse_pair(const std::string& text, const std::string& flag) {
  const auto v = parse_list(text, flag);
  if (v.size() != 2) throw UsageError(flag + " expects two comma-separated numbers");
  return {v[0], v[1]};
}

std::string join(const std::vector<double>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + format_double(v[i]);
  return out;
}

std::string join(std::pair<double, double> p) { return join(std::vector<double>{p.first, p.second}); }

double number_for(const std::string& text, const std::string& flag) {
  try {
    return parse_double(trim(text));
  } catch (const std::invalid_argument&) {
    throw UsageError(flag + " expects a number, got '" + text + "'");
  }
}

long integer_for(const std::string& text, const std::string& flag) {
  const double v = number_for(text, flag);
  if (v != std::floor(v) || std::abs(v) > 1e9) throw UsageError(flag + " expects an integer");
  return static_cast<long>(v);
}

Form form_for(const std::string& text) {
  if (text == "cartesian") return Form::cartesian;
  if (text == "polar" || text == "bounded_polar") return Form::bounded_polar;
  throw UsageError("--form must be cartesian or polar, got '" + text + "'");
}

bool bool_for(const std::string& text, const std::string& key) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw UsageError(key + " expects true or false");
}

// One entry per configuration key: how to print it and how to set it.
struct Field {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    auto num = [&f](std::string key, double RunConfig::*member) {
      f.push_back({key, [member](const RunConfig& c) { return format_double(c.*member); },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.*member = number_for(v, "--" + key);
                   }});
    };
    auto setting = [&f](std::string key, double IntegratorSettings::*member) {
      f.push_back({key, [member](const RunConfig& c) { return format_double(c.settings.*member); },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.settings.*member = number_for(v, "--" + key);
                   }});
    };
    auto tol = [&f](std::string key, double LemmaTolerances::*member) {
      f.push_back({key,
                   [member](const RunConfig& c) { return format_double(c.tolerances.*member); },
                   [member, key](RunConfig& c, const std::string& v) {
                     c.tolerances.*member = number_for(v, key);
                   }});
    };
    f.push_back({"command", [](const RunConfig& c) { return to_string(c.command); },
                 [](RunConfig& c, const std::string& v) { c.command = command_from_string(v); }});
    f.push_back({"a", [](const RunConfig& c) { return format_double(c.params.a); },
                 [](RunConfig& c, const std::string& v) { c.params.a = number_for(v, "--a"); }});
    f.push_back({"rho0", [](const RunConfig& c) { return format_double(c.params.rho0); },
                 [](RunConfig& c, const std::string& v) {
                   c.params.rho0 = number_for(v, "--rho0");
                 }});
    f.push_back({"dim", [](const RunConfig& c) { return format_double(c.params.dim); },
                 [](RunConfig& c, const std::string& v) { c.params.dim = number_for(v, "--dim"); }});
    num("zeta-max", &RunConfig::zeta_max);
    setting("rtol", &IntegratorSettings::rtol);
    setting("atol", &IntegratorSettings::atol);
    setting("max-step-factor", &IntegratorSettings::max_step_factor);
    setting("sample-spacing", &IntegratorSettings::sample_spacing);
    setting("zeta0", &IntegratorSettings::zeta0);
    f.push_back({"form",
                 [](const RunConfig& c) {
                   return c.settings.form == Form::cartesian ? std::string("cartesian")
                                                             : std::string("polar");
                 },
                 [](RunConfig& c, const std::string& v) { c.settings.form = form_for(v); }});
    f.push_back({"zeta-list", [](const RunConfig& c) { return join(c.zeta_list); },
                 [](RunConfig& c, const std::string& v) {
                   c.zeta_list = parse_list(v, "--zeta-list");
                 }});
    f.push_back({"rho0-range", [](const RunConfig& c) { return join(c.grid.rho0_range); },
                 [](RunConfig& c, const std::string& v) {
                   c.grid.rho0_range = parse_pair(v, "--rho0-range");
                 }});
    f.push_back({"a-range", [](const RunConfig& c) { return join(c.grid.a_range); },
                 [](RunConfig& c, const std::string& v) {
                   c.grid.a_range = parse_pair(v, "--a-range");
                 }});
    f.push_back({"grid",
                 [](const RunConfig& c) {
                   return std::to_string(c.grid.rho0_count) + "," + std::to_string(c.grid.a_count);
                 },
                 [](RunConfig& c, const std::string& v) {
                   const auto p = parse_pair(v, "--grid");
                   if (p.first < 1 || p.second < 1 || p.first != std::floor(p.first) ||
                       p.second != std::floor(p.second)) {
                     throw UsageError("--grid expects two positive integers");
                   }
                   c.grid.rho0_count = static_cast<std::size_t>(p.first);
                   c.grid.a_count = static_cast<std::size_t>(p.second);
                 }});
    f.push_back({"start", [](const RunConfig& c) { return join(c.start); },
                 [](RunConfig& c, const std::string& v) { c.start = parse_pair(v, "--start"); }});
    num("tol", &RunConfig::tol);
    f.push_back({"max-iter", [](const RunConfig& c) { return std::to_string(c.max_iter); },
                 [](RunConfig& c, const std::string& v) {
                   c.max_iter = static_cast<int>(integer_for(v, "--max-iter"));
                 }});
    f.push_back({"refine", [](const RunConfig& c) { return std::string(c.refine ? "true" : "false"); },
                 [](RunConfig& c, const std::string& v) { c.refine = bool_for(v, "refine"); }});
    f.push_back({"refine-list", [](const RunConfig& c) { return join(c.refine_list); },
                 [](RunConfig& c, const std::string& v) {
                   c.refine_list = parse_list(v, "--refine-list");
                 }});
    num("a-step", &RunConfig::a_step);
    f.push_back({"steps", [](const RunConfig& c) { return std::to_string(c.steps); },
                 [](RunConfig& c, const std::string& v) {
                   c.steps = static_cast<int>(integer_for(v, "--steps"));
                 }});
    num("T", &RunConfig::T);
    num("t-max", &RunConfig::t_max);
    f.push_back({"r-range", [](const RunConfig& c) { return join(c.r_range); },
                 [](RunConfig& c, const std::string& v) { c.r_range = parse_pair(v, "--r-range"); }});
    f.push_back({"rt-grid",
                 [](const RunConfig& c) {
                   return std::to_string(c.r_count) + "," + std::to_string(c.t_count);
                 },
                 [](RunConfig& c, const std::string& v) {
                   const auto p = parse_pair(v, "--rt-grid");
                   if (p.first < 1 || p.second < 1 || p.first != std::floor(p.first) ||
                       p.second != std::floor(p.second)) {
                     throw UsageError("--rt-grid expects two positive integers");
                   }
                   c.r_count = static_cast<std::size_t>(p.first);
                   c.t_count = static_cast<std::size_t>(p.second);
                 }});
    num("fd-scale", &RunConfig::fd_scale);
    tol("tol-bound-limit", &LemmaTolerances::bound_limit);
    tol("tol-growth-factor", &LemmaTolerances::growth_factor);
    tol("tol-limit-small", &LemmaTolerances::limit_small);
    tol("tol-k-relative", &LemmaTolerances::k_relative);
    tol("tol-zero-energy", &LemmaTolerances::zero_energy);
    tol("tol-hamiltonian", &LemmaTolerances::hamiltonian);
    tol("tol-envelope-window", &LemmaTolerances::envelope_window);
    f.push_back({"out", [](const RunConfig& c) { return c.out; },
                 [](RunConfig& c, const std::string& v) { c.out = v; }});
    return f;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (f.key == key) return &f;
  }
  return nullptr;
}

}  // namespace

bool RunConfig::operator==(const RunConfig& other) const {
  return config_to_text(*this) == config_to_text(other);
}

// ---------------------------------------------------------------- config

std::string config_to_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(config) + "\n";
  return out;
}

RunConfig config_from_text(const std::string& text, RunConfig config) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    std::string key = trim(line.substr(0, eq));
    std::replace(key.begin(), key.end(), '_', '-');
    const Field* f = find_field(key);
    if (!f) throw UsageError("config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    f->set(config, trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig read_config_file(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw UsageError("--config: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return config_from_text(buf.str(), std::move(base));
}

void write_config_file(const RunConfig& config, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << config_to_text(config);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

void validate(const RunConfig& c) {
  auto positive = [](double v, const char* flag) {
    if (!(v > 0.0) || !std::isfinite(v)) throw UsageError(std::string(flag) + " must be positive");
  };
  positive(c.params.a, "--a");
  positive(c.params.rho0, "--rho0");
  if (!(c.params.dim > 2.0 && c.params.dim < 4.0)) throw UsageError("--dim must lie in (2,4)");
  positive(c.settings.rtol, "--rtol");
  positive(c.settings.atol, "--atol");
  positive(c.settings.max_step_factor, "--max-step-factor");
  positive(c.settings.sample_spacing, "--sample-spacing");
  if (!(c.settings.zeta0 > 0.0 && c.settings.zeta0 <= 0.01)) {
    throw UsageError("--zeta0 must lie in (0, 0.01]");
  }
  if (!(c.zeta_max > 1.0) || !std::isfinite(c.zeta_max)) {
    throw UsageError("--zeta-max must exceed 1");
  }
  switch (c.command) {
    case Command::verify:
      if (c.params.dim != 3.0) throw UsageError("--dim: the lemma audit is defined for dim 3 only");
      break;
    case Command::converge:
      if (c.params.dim != 3.0) throw UsageError("--dim: the Hamiltonian needs dim 3");
      if (c.zeta_list.size() < 3) throw UsageError("--zeta-list: need >= 3 points for trend");
      for (std::size_t i = 0; i < c.zeta_list.size(); ++i) {
        if (!(c.zeta_list[i] > 1.0) || (i && !(c.zeta_list[i] > c.zeta_list[i - 1]))) {
          throw UsageError("--zeta-list must be increasing and above 1");
        }
      }
      break;
    case Command::sweep:
      try {
        c.grid.validate();
        worker_count(1);
      } catch (const std::invalid_argument& ex) {
        throw UsageError(std::string("--rho0-range/--a-range/--grid: ") + ex.what());
      }
      break;
    case Command::shoot:
    case Command::branch:
      positive(c.start.first, "--start");
      positive(c.start.second, "--start");
      positive(c.tol, "--tol");
      if (c.max_iter < 0) throw UsageError("--max-iter must be >= 0");
      if (c.zeta_max < 50.0) throw UsageError("--zeta-max must be >= 50 for shooting");
      for (double z : c.refine_list) {
        if (!(z >= 50.0)) throw UsageError("--refine-list entries must be >= 50");
      }
      if (c.command == Command::branch) {
        if (c.a_step == 0.0 || !std::isfinite(c.a_step)) throw UsageError("--a-step must be nonzero");
        if (c.steps < 1) throw UsageError("--steps must be >= 1");
      }
      break;
    case Command::ansatz_check:
      positive(c.T, "--T");
      if (!(c.t_max < c.T)) throw UsageError("--t-max: ansatz singular at t=T");
      positive(c.r_range.first, "--r-range");
      if (!(c.r_range.second >= c.r_range.first)) throw UsageError("--r-range must be ordered");
      if (!(c.fd_scale > 0.0 && c.fd_scale < 0.5)) throw UsageError("--fd-scale must lie in (0, 0.5)");
      break;
    case Command::integrate:
      break;
  }
}

// ---------------------------------------------------------------- argv

std::string usage_text() {
  return "usage: selfsim <integrate|verify|converge|sweep|shoot|branch|ansatz-check> [options]\n"
         "run 'selfsim <command> --help' for the options of a command\n";
}

RunConfig parse_args(const std::vector<std::string>& args) {
  CLI::App app{"Self-similar profile integrator and audit", "selfsim"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  std::map<std::string, std::string> given;
  std::string config_path;

  struct Spec {
    std::string key;
    std::string help;
    std::vector<Command> commands;  // empty: all
  };
  const std::vector<Command> shooting{Command::shoot, Command::branch};
  const std::vector<Spec> specs{
      {"a", "rate parameter a > 0", {}},
      {"rho0", "initial amplitude Q(0) > 0", {}},
      {"dim", "spatial dimension in (2,4)", {}},
      {"zeta-max", "integration horizon", {}},
      {"rtol", "relative tolerance", {}},
      {"atol", "absolute tolerance", {}},
      {"form", "cartesian or polar", {}},
      {"sample-spacing", "base output node spacing", {}},
      {"max-step-factor", "step cap h <= f / (1 + a zeta)", {}},
      {"zeta0", "series handoff abscissa", {}},
      {"out", "output path (default: stdout)", {}},
      {"zeta-list", "horizons, e.g. 100,200,400", {Command::converge}},
      {"rho0-range", "lo,hi", {Command::sweep}},
      {"a-range", "lo,hi", {Command::sweep}},
      {"grid", "rho0 count,a count", {Command::sweep}},
      {"start", "rho0,a Newton start", shooting},
      {"tol", "Newton tolerance on |W|", shooting},
      {"max-iter", "Newton iteration cap", shooting},
      {"refine-list", "horizons for the root drift report", {Command::shoot}},
      {"a-step", "continuation step in a", {Command::branch}},
      {"steps", "continuation steps", {Command::branch}},
      {"T", "blow-up time", {Command::ansatz_check}},
      {"t-max", "largest sampled time", {Command::ansatz_check}},
      {"r-range", "lo,hi radii", {Command::ansatz_check}},
      {"rt-grid", "r count,t count", {Command::ansatz_check}},
      {"fd-scale", "finite-difference step relative to local scales", {Command::ansatz_check}},
  };

  std::vector<std::pair<CLI::App*, Command>> subs;
  bool refine_flag = false;
  for (Command cmd : {Command::integrate, Command::verify, Command::converge, Command::sweep,
                      Command::shoot, Command::branch, Command::ansatz_check}) {
    CLI::App* sub = app.add_subcommand(to_string(cmd), describe(cmd));
    subs.emplace_back(sub, cmd);
    sub->add_option("--config", config_path, "key=value file; flags override it");
    for (const auto& s : specs) {
      if (!s.commands.empty() &&
          std::find(s.commands.begin(), s.commands.end(), cmd) == s.commands.end()) {
        continue;
      }
      sub->add_option_function<std::string>(
          "--" + s.key, [&given, key = s.key](const std::string& v) { given[key] = v; }, s.help);
    }
    if (cmd == Command::shoot) {
      sub->add_flag("--refine", refine_flag, "also report roots at each --refine-list horizon");
    }
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    for (auto& [sub, cmd] : subs) {
      if (sub->parsed()) throw HelpRequested(sub->help());
    }
    throw HelpRequested(app.help());
  } catch (const CLI::CallForAllHelp&) {
    throw HelpRequested(app.help("", CLI::AppFormatMode::All));
  } catch (const CLI::ParseError& ex) {
    std::string help;
    for (auto& [sub, cmd] : subs) {
      if (sub->parsed()) help = sub->help();
    }
    throw UsageError(std::string(ex.what()) + "\n" + (help.empty() ? usage_text() : help));
  }

  RunConfig config;
  for (auto& [sub, cmd] : subs) {
    if (sub->parsed()) config.command = cmd;
  }
  if (!config_path.empty()) {
    config = read_config_file(config_path, config);
  }
  for (auto& [sub, cmd] : subs) {
    if (sub->parsed()) config.command = cmd;
  }
  if ((config.command == Command::shoot || config.command == Command::branch) &&
      given.count("start") && (given.count("a") || given.count("rho0"))) {
    throw UsageError("--start conflicts with --a/--rho0 for " + to_string(config.command));
  }
  for (const auto& [key, value] : given) find_field(key)->set(config, value);
  if (config.command == Command::shoot && (given.count("start") || given.count("a") || given.count("rho0"))) {
    // --a/--rho0 may also give the start point.
    if (!given.count("start")) {
      if (given.count("rho0")) config.start.first = config.params.rho0;
      if (given.count("a")) config.start.second = config.params.a;
    }
  }
  if (refine_flag) config.refine = true;
  validate(config);
  return config;
}

// ---------------------------------------------------------------- CSV

namespace {

std::string comment_block(const std::string& text) {
  std::string out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out += "# " + line + "\n";
  return out;
}

std::string trajectory_config(const Trajectory& traj) {
  RunConfig c;
  c.params = traj.params;
  c.settings = traj.settings;
  c.zeta_max = traj.zeta_max;
  return config_to_text(c);
}

}  // namespace

void write_trajectory_csv(const Trajectory& traj, std::ostream& out,
                          const std::string& config_comment) {
  const auto& s = traj.samples;
  std::vector<double> energy(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) energy[i] = energy_E(s[i].polar);
  if (traj.params.is_three_dimensional()) {
    for (std::size_t i = 1; i < s.size(); ++i) {
      if (!(energy[i] < energy[i - 1])) {
        throw std::runtime_error("E not strictly decreasing at zeta=" + format_double(s[i].zeta()));
      }
    }
  }
  const CumulativeIntegral quartic = quartic_integral(traj);
  const double r02 = traj.params.rho0 * traj.params.rho0;

  out << comment_block(config_comment.empty() ? trajectory_config(traj) : config_comment);
  for (std::size_t j = 0; j < kTrajectoryColumns.size(); ++j) {
    out << (j ? "," : "") << kTrajectoryColumns[j];
  }
  out << '\n';
  std::string row;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& p = s[i].polar;
    const auto& c = s[i].cartesian;
    const double budd = std::abs(budd_lhs(c) - (r02 - quartic.at_node(i)));
    const double values[] = {p.zeta,        p.rho(),     p.p1,         p.p2,
                             p.theta,       p.theta_prime(), c.q.real(), c.q.imag(),
                             c.p.real(),    c.p.imag(),  energy[i],    budd,
                             zero_energy_residual(c, traj.params)};
    row.clear();
    for (std::size_t j = 0; j < std::size(values); ++j) {
      if (j) row += ',';
      row += format_double(values[j]);
    }
    row += '\n';
    out << row;
  }
  out << "# status=" << to_string(traj.status) << '\n';
}

void write_trajectory_csv(const Trajectory& traj, const std::filesystem::path& path,
                          const std::string& config_comment) {
  std::ostringstream buf;
  write_trajectory_csv(traj, buf, config_comment);
  std::ofstream out(path, std::ios::binary);
  if (out) out << buf.str();
  if (!out || !out.flush()) {
    out.close();
    std::error_code ec;
    std::filesystem::remove(path, ec);
    throw std::runtime_error("cannot write " + path.string());
  }
}

double CsvTable::number(std::size_t row, const std::string& column) const {
  const auto it = std::find(header.begin(), header.end(), column);
  if (it == header.end()) throw std::out_of_range("no column " + column);
  return parse_double(rows.at(row).at(static_cast<std::size_t>(it - header.begin())));
}

CsvTable read_csv(std::istream& in) {
  CsvTable t;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::string body = trim(line.substr(1));
      if (body.rfind("status=", 0) == 0) {
        t.status = body.substr(7);
      } else {
        t.comments.push_back(body);
      }
      continue;
    }
    auto cells = split(line, ',');
    if (t.header.empty()) {
      t.header = std::move(cells);
    } else {
      if (cells.size() != t.header.size()) throw std::runtime_error("ragged CSV row");
      t.rows.push_back(std::move(cells));
    }
  }
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return read_csv(in);
}

void write_sweep_csv(const std::vector<SweepCell>& cells, std::ostream& out,
                     const std::string& config_comment) {
  out << comment_block(config_comment);
  out << "rho0,a,bump_count,E_final,k_plateau,Z_final,status\n";
  for (const auto& c : cells) {
    out << format_double(c.rho0) << ',' << format_double(c.a) << ',' << c.bump_count << ','
        << format_double(c.e_final) << ',' << format_double(c.k_plateau) << ','
        << format_double(c.z_final) << ',' << to_string(c.status) << '\n';
  }
}

// ---------------------------------------------------------------- JSON

Json params_json(const Params& p) {
  Json j;
  j["a"] = p.a;
  j["rho0"] = p.rho0;
  j["dim"] = p.dim;
  return j;
}

Json settings_json(const RunConfig& config) {
  Json j;
  for (const auto& f : fields()) {
    if (f.key == "a" || f.key == "rho0" || f.key == "dim") continue;
    j[f.key] = f.get(config);
  }
  return j;
}

Json to_json(const LemmaReport& report) {
  Json entries = Json::array();
  for (const auto& e : report.entries) {
    Json obs = Json::array();
    for (const auto& [label, value] : e.observed) obs.push_back({{"label", label}, {"value", value}});
    entries.push_back({{"name", e.name},
                       {"observed", obs},
                       {"checkpoints", e.checkpoints},
                       {"tolerance_used", e.tolerance_used},
                       {"pass", e.pass}});
  }
  return entries;
}

Json to_json(const ShootingResult& r) {
  Json j;
  j["rho0"] = r.rho0;
  j["a"] = r.a;
  j["residual_norm"] = r.residual_norm;
  j["iterations"] = r.iterations;
  j["bump_count"] = r.bump_count;
  j["zeta_max"] = r.zeta_max;
  j["converged"] = r.converged;
  j["history"] = r.history;
  return j;
}

Json to_json(const Branch& b) {
  Json j;
  j["label"] = b.label;
  Json members = Json::array();
  for (const auto& m : b.members) members.push_back(to_json(m));
  j["members"] = members;
  Json rejected = Json::array();
  for (const auto& m : b.rejected) rejected.push_back(to_json(m));
  j["rejected"] = rejected;
  return j;
}

Json to_json(const ConvergenceTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows) {
    rows.push_back({{"zeta_max", r.zeta_max},
                    {"Z", r.z_residual},
                    {"H_defect", r.h_defect},
                    {"zrho", r.zrho},
                    {"E", r.energy}});
  }
  return {{"rows", rows}, {"Z_decreasing", t.z_decreasing}, {"H_decreasing", t.h_decreasing}};
}

Json to_json(const AnsatzCheck& c) {
  return {{"normalized_residual", c.normalized},
          {"raw_residual", c.raw},
          {"max_abs_psi", c.max_psi},
          {"points", c.points}};
}

Json make_report(const std::string& kind, const RunConfig& config, Json results,
                 std::optional<bool> pass) {
  Json j;
  j["kind"] = kind;
  j["params"] = params_json(config.params);
  j["settings"] = settings_json(config);
  j["results"] = std::move(results);
  if (pass) j["pass"] = *pass;
  return j;
}

void write_report_json(const Json& report, std::ostream& out) { out << report.dump(2) << '\n'; }

void write_report_json(const Json& report, const std::filesystem::path& path) {
  const std::string text = report.dump(2) + "\n";
  std::ofstream out(path, std::ios::binary);
  if (out) out << text;
  if (!out || !out.flush()) {
    out.close();
    std::error_code ec;
    std::filesystem::remove(path, ec);
    throw std::runtime_error("cannot write " + path.string());
  }
}

// ---------------------------------------------------------------- commands

namespace {

NewtonOptions newton_options(const RunConfig& c) {
  NewtonOptions o;
  o.tol = c.tol;
  o.max_iter = c.max_iter;
  return o;
}

void emit_json(const RunConfig& c, const Json& report, std::ostream& out) {
  if (c.out.empty()) {
    write_report_json(report, out);
  } else {
    write_report_json(report, std::filesystem::path(c.out));
  }
}

int run_integrate(const RunConfig& c, std::ostream& out) {
  const Trajectory traj = integrate(c.params, c.zeta_max, c.settings);
  const std::string comment = config_to_text(c);
  if (c.out.empty()) {
    write_trajectory_csv(traj, out, comment);
  } else {
    write_trajectory_csv(traj, std::filesystem::path(c.out), comment);
  }
  return traj.completed() ? 0 : 1;
}

int run_verify(const RunConfig& c, std::ostream& out) {
  const LemmaReport r = verify_lemmas(c.params, c.zeta_max, c.tolerances, c.settings);
  Json results = to_json(r);
  Json report = make_report("lemma_report", c, results, r.pass());
  report["complete"] = r.complete;
  report["status"] = to_string(r.status);
  emit_json(c, report, out);
  return r.complete ? 0 : 1;
}

int run_converge(const RunConfig& c, std::ostream& out) {
  const ConvergenceTable t = convergence_study(c.params, c.zeta_list, c.settings);
  emit_json(c, make_report("convergence_table", c, to_json(t), t.pass()), out);
  return 0;
}

int run_sweep(const RunConfig& c, std::ostream& out) {
  const auto cells = sweep(c.grid, c.zeta_max, c.settings);
  const std::string comment = config_to_text(c);
  if (c.out.empty()) {
    write_sweep_csv(cells, out, comment);
  } else {
    std::ostringstream buf;
    write_sweep_csv(cells, buf, comment);
    std::ofstream f(c.out, std::ios::binary);
    if (f) f << buf.str();
    if (!f || !f.flush()) {
      f.close();
      std::error_code ec;
      std::filesystem::remove(c.out, ec);
      throw std::runtime_error("cannot write " + c.out);
    }
  }
  return 0;
}

int run_shoot(const RunConfig& c, std::ostream& out) {
  const ShootingResult r = newton_solve(c.start, c.zeta_max, newton_options(c), c.settings);
  Json results = Json::array({to_json(r)});
  Json report = make_report("shooting_result", c, results, r.converged);
  if (c.refine) {
    const auto start = r.converged ? std::pair{r.rho0, r.a} : c.start;
    Json drift = Json::array();
    for (const auto& m : refine_zeta_max(start, c.refine_list, newton_options(c), c.settings)) {
      drift.push_back(to_json(m));
    }
    report["zeta_max_refinement"] = drift;
  }
  emit_json(c, report, out);
  return r.converged ? 0 : 1;
}

int run_branch(const RunConfig& c, std::ostream& out) {
  const ShootingResult seed = newton_solve(c.start, c.zeta_max, newton_options(c), c.settings);
  if (!seed.converged) {
    emit_json(c, make_report("branch", c, Json::array({to_json(seed)}), false), out);
    return 1;
  }
  const Branch b = continue_branch(seed, c.a_step, c.steps, newton_options(c), c.settings);
  const bool full = b.members.size() == static_cast<std::size_t>(c.steps) + 1;
  emit_json(c, make_report("branch", c, to_json(b), full), out);
  return 0;
}

int run_ansatz(const RunConfig& c, std::ostream& out) {
  const Trajectory traj = integrate(c.params, c.zeta_max, c.settings);
  if (!traj.completed()) throw IntegrationFailure(traj.status, traj.last_zeta());
  const AnsatzCheck chk =
      ansatz_residual_check(traj, c.params, c.T, linspace(c.r_range.first, c.r_range.second, c.r_count),
                            linspace(0.0, c.t_max, c.t_count), c.fd_scale);
  Json results = to_json(chk);
  results["threshold"] = 1e-4;
  emit_json(c, make_report("ansatz_check", c, results, chk.normalized < 1e-4), out);
  return 0;
}

}  // namespace

int run(const RunConfig& c, std::ostream& out, std::ostream& err) {
  try {
    switch (c.command) {
      case Command::integrate:
        return run_integrate(c, out);
      case Command::verify:
        return run_verify(c, out);
      case Command::converge:
        return run_converge(c, out);
      case Command::sweep:
        return run_sweep(c, out);
      case Command::shoot:
        return run_shoot(c, out);
      case Command::branch:
        return run_branch(c, out);
      case Command::ansatz_check:
        return run_ansatz(c, out);
    }
  } catch (const UsageError& ex) {
    err << "error: " << ex.what() << '\n';
    return 2;
  } catch (const std::exception& ex) {
    err << "error: " << ex.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace selfsim
