#include "selfsim/analysis.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <limits>
#include <stdexcept>
#include <thread>

namespace selfsim {

namespace {

std::string fmt_label(const std::string& what, double zeta) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s@%g", what.c_str(), zeta);
  return buf;
}

bool strictly_decreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (!(v[i] < v[i - 1])) return false;
  }
  return true;
}

const char* const kEntryNames[] = {"L2.1-bounds",   "L2.2-positivity",   "L2.3-divergence",
                                   "L2.4-limits",   "L2.5-energy",       "L2.6-energy-sign",
                                   "L2.7-limits",   "T1.1-zero-energy"};

LemmaReport incomplete_report(const Trajectory& traj, const LemmaTolerances& tol,
                              const std::vector<double>& cps) {
  LemmaReport r;
  r.params = traj.params;
  r.settings = traj.settings;
  r.tolerances = tol;
  r.zeta_max = traj.zeta_max;
  r.status = traj.status;
  r.complete = false;
  double min_rho = std::numeric_limits<double>::infinity();
  for (const Sample& s : traj.samples) min_rho = std::min(min_rho, s.polar.rho());
  for (const char* name : kEntryNames) {
    LemmaEntry e;
    e.name = name;
    e.checkpoints = cps;
    e.observed = {{"last_zeta", traj.last_zeta()}, {"min_rho", min_rho}};
    r.entries.push_back(std::move(e));
  }
  return r;
}

}  // namespace

LemmaTolerances LemmaTolerances::zero() {
  LemmaTolerances t;
  t.bound_limit = 0.0;
  t.growth_factor = std::numeric_limits<double>::infinity();
  t.limit_small = 0.0;
  t.k_relative = 0.0;
  t.zero_energy = 0.0;
  t.hamiltonian = 0.0;
  return t;
}

bool LemmaReport::pass() const {
  if (!complete || entries.empty()) return false;
  return std::all_of(entries.begin(), entries.end(), [](const LemmaEntry& e) { return e.pass; });
}

const LemmaEntry& LemmaReport::entry(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw std::out_of_range("no lemma entry named " + name);
}

LemmaReport verify_lemmas(const Params& params, double zeta_max, const LemmaTolerances& tolerances,
                          const IntegratorSettings& settings) {
  if (!params.is_three_dimensional()) {
    throw std::domain_error("lemma audit requires dim = 3");
  }
  return verify_lemmas(integrate(params, zeta_max, settings), tolerances);
}

LemmaReport verify_lemmas(const Trajectory& traj, const LemmaTolerances& tol) {
  const Params& params = traj.params;
  if (!params.is_three_dimensional()) {
    throw std::domain_error("lemma audit requires dim = 3");
  }
  const double zmax = traj.zeta_max;
  const std::vector<double> cps{0.25 * zmax, 0.5 * zmax, zmax};
  if (!traj.completed()) return incomplete_report(traj, tol, cps);

  LemmaReport report;
  report.params = params;
  report.settings = traj.settings;
  report.tolerances = tol;
  report.zeta_max = zmax;
  report.status = traj.status;

  std::vector<Sample> at_cp;
  for (double c : cps) at_cp.push_back(evaluate_precise(traj, c));
  auto envelope = [&](double c, auto&& f) {
    return sup_over(traj, c * (1.0 - tol.envelope_window), c, f);
  };
  auto add = [&](LemmaEntry e) {
    e.checkpoints = cps;
    report.entries.push_back(std::move(e));
  };

  // Bounds on zeta rho, zeta rho' = p2 - rho and zeta rho theta' = p3 / p1.
  {
    double m1 = 0.0, m2 = 0.0, m3 = 0.0;
    bool finite = true;
    for (const Sample& s : traj.samples) {
      const auto& p = s.polar;
      const double v1 = p.p1, v2 = std::abs(p.p2 - p.rho()), v3 = std::abs(p.p3 / p.p1);
      finite = finite && std::isfinite(v1) && std::isfinite(v2) && std::isfinite(v3);
      m1 = std::max(m1, v1);
      m2 = std::max(m2, v2);
      m3 = std::max(m3, v3);
    }
    LemmaEntry e{"L2.1-bounds", {{"max_zrho", m1}, {"max_abs_zrho_prime", m2},
                                 {"max_abs_zrho_theta_prime", m3}}};
    e.tolerance_used = tol.bound_limit;
    e.pass = finite && m1 <= tol.bound_limit && m2 <= tol.bound_limit && m3 <= tol.bound_limit;
    add(std::move(e));
  }

  {
    double min_rho = std::numeric_limits<double>::infinity();
    for (const Sample& s : traj.samples) min_rho = std::min(min_rho, s.polar.rho());
    LemmaEntry e{"L2.2-positivity", {{"min_rho", min_rho}}};
    e.pass = min_rho > 0.0;
    add(std::move(e));
  }

  {
    const CumulativeIntegral mass = radial_mass_integral(traj);
    std::vector<double> v;
    LemmaEntry e{"L2.3-divergence", {}};
    for (double c : cps) {
      v.push_back(mass.at(c));
      e.observed.emplace_back(fmt_label("integral_trho_sq", c), v.back());
    }
    e.pass = true;
    for (std::size_t i = 1; i < v.size(); ++i) {
      const double ratio = v[i] / v[i - 1];
      e.observed.emplace_back(fmt_label("growth_ratio", cps[i]), ratio);
      e.pass = e.pass && ratio >= tol.growth_factor;
    }
    e.tolerance_used = tol.growth_factor;
    add(std::move(e));
  }

  {
    LemmaEntry e{"L2.4-limits", {}};
    std::vector<double> grow, d, dr;
    for (std::size_t i = 0; i < cps.size(); ++i) {
      const auto& p = at_cp[i].polar;
      grow.push_back(cps[i] * p.p1 * p.p1);
      d.push_back(envelope(cps[i], [](const Sample& s) { return s.polar.p2; }));
      dr.push_back(envelope(cps[i], [](const Sample& s) { return s.polar.p2 / s.polar.rho(); }));
      e.observed.emplace_back(fmt_label("zeta_zrho_sq", cps[i]), grow.back());
      e.observed.emplace_back(fmt_label("sup_abs_zrho_prime", cps[i]), d.back());
      e.observed.emplace_back(fmt_label("sup_abs_zrho_prime_over_rho", cps[i]), dr.back());
    }
    bool ok = true;
    for (std::size_t i = 1; i < grow.size(); ++i) ok = ok && grow[i] / grow[i - 1] >= tol.growth_factor;
    ok = ok && strictly_decreasing(d) && d.back() < tol.limit_small;
    ok = ok && strictly_decreasing(dr) && dr.back() < tol.limit_small;
    e.tolerance_used = tol.limit_small;
    e.pass = ok;
    add(std::move(e));
  }

  std::vector<double> energy(traj.samples.size());
  for (std::size_t i = 0; i < energy.size(); ++i) energy[i] = energy_E(traj.samples[i].polar);
  const double e_final = energy.back();
  {
    int violations = 0;
    bool finite = true;
    for (std::size_t i = 0; i < energy.size(); ++i) {
      finite = finite && std::isfinite(energy[i]);
      if (i > 0 && !(energy[i] < energy[i - 1])) ++violations;
    }
    LemmaEntry e{"L2.5-energy", {{"E_final", e_final},
                                 {"monotonicity_violations", static_cast<double>(violations)}}};
    e.pass = finite && violations == 0 && e_final <= 0.0;
    add(std::move(e));
  }

  {
    int sign_changes = 0;
    for (std::size_t i = 1; i < energy.size(); ++i) {
      if ((energy[i] < 0.0) != (energy[i - 1] < 0.0)) ++sign_changes;
    }
    LemmaEntry e{"L2.6-energy-sign",
                 {{"E_final", e_final}, {"sign_changes", static_cast<double>(sign_changes)}}};
    e.pass = e_final < 0.0 && sign_changes == 1;
    add(std::move(e));
  }

  {
    LemmaEntry e{"L2.7-limits", {}};
    std::vector<double> tp;
    for (double c : cps) {
      tp.push_back(envelope(c, [](const Sample& s) { return s.polar.theta_prime(); }));
      e.observed.emplace_back(fmt_label("sup_abs_theta_prime", c), tp.back());
    }
    const double zrho = at_cp.back().polar.p1;
    const double e_end = energy_E(at_cp.back().polar);
    const double rel = e_end < 0.0 ? std::abs(zrho - std::sqrt(-e_end)) / zrho
                                    : std::numeric_limits<double>::infinity();
    e.observed.emplace_back("zrho_vs_sqrt_minus_E", rel);
    e.tolerance_used = tol.limit_small;
    e.pass = strictly_decreasing(tp) && tp.back() < tol.limit_small && rel < tol.k_relative;
    add(std::move(e));
  }

  {
    LemmaEntry e{"T1.1-zero-energy", {}};
    std::vector<double> z, h;
    for (std::size_t i = 0; i < cps.size(); ++i) {
      z.push_back(envelope(cps[i], [&](const Sample& s) {
        return zero_energy_residual(s.cartesian, params);
      }));
      h.push_back(std::abs(hamiltonian_truncated(traj, params, cps[i]).total()));
      e.observed.emplace_back(fmt_label("sup_Z", cps[i]), z.back());
      e.observed.emplace_back(fmt_label("H_defect", cps[i]), h.back());
    }
    const double h_scale = 1.0 + params.rho0 * params.rho0;
    e.tolerance_used = tol.zero_energy;
    e.pass = strictly_decreasing(z) && z.back() < tol.zero_energy && strictly_decreasing(h) &&
             h.back() / h_scale < tol.hamiltonian;
    add(std::move(e));
  }
  return report;
}

ConvergenceTable convergence_study(const Params& params, const std::vector<double>& zeta_list,
                                   const IntegratorSettings& settings) {
  if (zeta_list.size() < 3) throw std::invalid_argument("need >= 3 points for trend");
  for (std::size_t i = 1; i < zeta_list.size(); ++i) {
    if (!(zeta_list[i] > zeta_list[i - 1])) {
      throw std::invalid_argument("zeta list must be strictly increasing");
    }
  }
  const Trajectory traj = integrate(params, zeta_list.back(), settings);
  if (!traj.completed()) throw IntegrationFailure(traj.status, traj.last_zeta());

  ConvergenceTable table;
  table.params = params;
  table.settings = settings;
  std::vector<double> z, h;
  for (double zm : zeta_list) {
    const Sample s = evaluate_precise(traj, zm);
    ConvergenceRow row;
    row.zeta_max = zm;
    row.z_residual = zero_energy_residual(s.cartesian, params);
    row.h_defect = std::abs(hamiltonian_truncated(traj, params, zm).total());
    row.zrho = s.polar.p1;
    row.energy = energy_E(s.polar);
    z.push_back(row.z_residual);
    h.push_back(row.h_defect);
    table.rows.push_back(row);
  }
  table.z_decreasing = strictly_decreasing(z);
  table.h_decreasing = strictly_decreasing(h);
  return table;
}

std::string to_string(CellStatus status) {
  switch (status) {
    case CellStatus::completed:
      return "completed";
    case CellStatus::rho_hit_zero:
      return "rho_hit_zero";
    case CellStatus::step_underflow:
      return "step_underflow";
    case CellStatus::failed:
      return "failed";
  }
  return "unknown";
}

std::vector<double> linspace(double lo, double hi, std::size_t n) {
  if (n == 0) return {};
  if (n == 1) return {lo};
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) {
    v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
  v.back() = hi;
  return v;
}

void SweepGrid::validate() const {
  for (auto [lo, hi] : {rho0_range, a_range}) {
    if (!(lo > 0.0) || !(hi >= lo) || !std::isfinite(hi)) {
      throw std::invalid_argument("sweep ranges must be positive and ordered");
    }
  }
  if (rho0_count == 0 || a_count == 0) throw std::invalid_argument("grid counts must be >= 1");
}

std::vector<double> SweepGrid::rho0_values() const {
  return linspace(rho0_range.first, rho0_range.second, rho0_count);
}

std::vector<double> SweepGrid::a_values() const {
  return linspace(a_range.first, a_range.second, a_count);
}

SweepCell classify_cell(double rho0, double a, double zeta_max,
                        const IntegratorSettings& settings) {
  SweepCell cell;
  cell.rho0 = rho0;
  cell.a = a;
  try {
    const Trajectory traj = integrate(make_params(a, rho0), zeta_max, settings);
    const Sample& last = traj.samples.back();
    switch (traj.status) {
      case TrajectoryStatus::completed:
        cell.status = CellStatus::completed;
        break;
      case TrajectoryStatus::rho_hit_zero:
        cell.status = CellStatus::rho_hit_zero;
        break;
      case TrajectoryStatus::step_underflow:
        cell.status = CellStatus::step_underflow;
        break;
    }
    cell.e_final = energy_E(last.polar);
    cell.k_plateau = last.polar.p1;
    cell.z_final = zero_energy_residual(last.cartesian, traj.params);
    if (traj.completed()) {
      cell.bump_count = count_bumps(traj);
    } else {
      cell.message = "stopped at zeta=" + std::to_string(last.zeta());
    }
  } catch (const std::exception& ex) {
    cell.status = CellStatus::failed;
    cell.message = ex.what();
  }
  return cell;
}

std::size_t worker_count(std::size_t tasks) {
  std::size_t n = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("PROFILE_THREADS")) {
    const std::string_view text(env);
    std::size_t value = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || end != text.data() + text.size() || value == 0) {
      throw std::invalid_argument("PROFILE_THREADS must be a positive integer");
    }
    n = value;
  }
  return std::max<std::size_t>(1, std::min(n, tasks));
}

std::vector<SweepCell> sweep(const SweepGrid& grid, double zeta_max,
                             const IntegratorSettings& settings) {
  grid.validate();
  settings.validate();
  const auto rhos = grid.rho0_values();
  const auto as = grid.a_values();
  std::vector<SweepCell> cells(rhos.size() * as.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      cells[i] = classify_cell(rhos[i / as.size()], as[i % as.size()], zeta_max, settings);
    }
  };
  const std::size_t n = worker_count(cells.size());
  std::vector<std::jthread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(work);
  work();
  return cells;
}

AnsatzCheck ansatz_residual_check(const Trajectory& traj, const Params& params, double T,
                                  const std::vector<double>& r_points,
                                  const std::vector<double>& t_points, double step_scale) {
  if (!(T > 0.0) || !std::isfinite(T)) throw std::invalid_argument("T must be positive");
  if (!(step_scale > 0.0) || step_scale >= 0.5) {
    throw std::invalid_argument("step scale must lie in (0, 0.5)");
  }
  for (double t : t_points) {
    if (!(t < T)) throw std::invalid_argument("ansatz singular at t=T");
  }
  for (double r : r_points) {
    if (!(r > 0.0)) throw std::invalid_argument("r points must be positive");
  }
  const double a = params.a;
  auto length = [&](double t) { return std::sqrt(2.0 * a * (T - t)); };
  auto zeta_of = [&](double r, double t) {
    const double z = r / length(t);
    if (z < traj.first_zeta() || z > traj.last_zeta()) {
      throw std::out_of_range("stencil leaves trajectory range (zeta=" + std::to_string(z) + ")");
    }
    return z;
  };
  auto psi = [&](double r, double t) {
    const double phase = std::log(T / (T - t)) / (2.0 * a);
    const ComplexPair q = evaluate_precise(traj, zeta_of(r, t)).cartesian.q;
    return q * std::polar(1.0 / length(t), phase);
  };

  constexpr ComplexPair i{0.0, 1.0};
  AnsatzCheck out;
  for (double t : t_points) {
    for (double r : r_points) {
      // Local scales of the far-field mode e^{-i a zeta^2 / 2}: its phase
      // moves by ~a zeta dzeta in r and ~a zeta^2 dt / (2 (T - t)) in t.
      const double z = r / length(t);
      const double hr = step_scale * length(t) / (1.0 + a * z);
      const double ht = step_scale * (T - t) / (1.0 + a * z * z);
      const ComplexPair c = psi(r, t);
      const ComplexPair rp = psi(r + hr, t), rm = psi(r - hr, t);
      const ComplexPair tp = psi(r, t + ht), tm = psi(r, t - ht);
      const ComplexPair psi_t = (tp - tm) / (2.0 * ht);
      const ComplexPair psi_r = (rp - rm) / (2.0 * hr);
      const ComplexPair psi_rr = (rp - 2.0 * c + rm) / (hr * hr);
      const ComplexPair res =
          i * psi_t + psi_rr + ((params.dim - 1.0) / r) * psi_r + c * std::norm(c);
      out.raw = std::max(out.raw, std::abs(res));
      out.max_psi = std::max(out.max_psi, std::abs(c));
      ++out.points;
    }
  }
  out.normalized = out.raw / std::pow(out.max_psi, 3);
  return out;
}

}  // namespace selfsim
