#include "selfsim/solver.hpp"

#include <cmath>
#include <stdexcept>

#include "selfsim/functionals.hpp"

namespace selfsim {

ComplexPair shoot_residual(double rho0, double a, double zeta_max,
                           const IntegratorSettings& settings, double initial_phase) {
  const Params params = make_params(a, rho0);
  if (!(zeta_max >= 50.0)) throw std::invalid_argument("shooting needs zeta_max >= 50");
  const EndState end = integrate_endpoint(params, zeta_max, settings, initial_phase);
  if (end.status != TrajectoryStatus::completed) {
    throw IntegrationFailure(end.status, end.state.zeta());
  }
  return zero_energy_defect(end.state.cartesian, params);
}

namespace {

bool admissible(double rho0, double a, const NewtonOptions& opt) {
  return rho0 >= opt.rho0_min && rho0 > 0.0 && a > 0.0 && a >= opt.a_bounds.first && a <= opt.a_bounds.second;
}

int bumps_at(double rho0, double a, double zeta_max, const IntegratorSettings& settings) {
  try {
    const Trajectory traj = integrate(make_params(a, rho0), zeta_max, settings);
    return traj.completed() ? count_bumps(traj) : 0;
  } catch (const std::exception&) {
    return 0;
  }
}

}  // namespace

ShootingResult newton_solve(std::pair<double, double> start, double zeta_max,
                            const NewtonOptions& opt, const IntegratorSettings& settings) {
  make_params(start.second, start.first);
  if (!(opt.tol > 0.0)) throw std::invalid_argument("tol must be positive");
  if (opt.max_iter < 0) throw std::invalid_argument("max_iter must be non-negative");

  ShootingResult out;
  out.zeta_max = zeta_max;
  double x[2] = {start.first, start.second};
  auto eval = [&](double r, double a) {
    const ComplexPair w = shoot_residual(r, a, zeta_max, settings);
    if (!opt.derotate) return w;
    return w * std::polar(1.0, 0.5 * a * zeta_max * zeta_max - std::log(zeta_max) / a);
  };

  ComplexPair w;
  try {
    w = eval(x[0], x[1]);
  } catch (const IntegrationFailure&) {
    out.rho0 = x[0];
    out.a = x[1];
    out.residual_norm = std::numeric_limits<double>::infinity();
    return out;
  }
  double norm = std::abs(w);
  out.history.push_back(norm);

  while (norm > opt.tol && out.iterations < opt.max_iter) {
    double jac[2][2];
    bool ok = true;
    for (int j = 0; j < 2 && ok; ++j) {
      const double h = opt.jacobian_step * x[j];
      double xp[2] = {x[0], x[1]}, xm[2] = {x[0], x[1]};
      xp[j] += h;
      xm[j] -= h;
      try {
        const ComplexPair d = (eval(xp[0], xp[1]) - eval(xm[0], xm[1])) / (2.0 * h);
        jac[0][j] = d.real();
        jac[1][j] = d.imag();
      } catch (const IntegrationFailure&) {
        ok = false;
      }
    }
    if (!ok) break;
    const double det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
    if (!(std::abs(det) > 0.0) || !std::isfinite(det)) break;
    const double dx0 = -(jac[1][1] * w.real() - jac[0][1] * w.imag()) / det;
    const double dx1 = -(-jac[1][0] * w.real() + jac[0][0] * w.imag()) / det;

    bool accepted = false;
    double lambda = 1.0;
    for (int k = 0; k <= opt.max_halvings && !accepted; ++k, lambda *= 0.5) {
      const double r = x[0] + lambda * dx0, a = x[1] + lambda * dx1;
      if (!admissible(r, a, opt)) continue;
      try {
        const ComplexPair wn = eval(r, a);
        if (std::abs(wn) < norm) {
          x[0] = r;
          x[1] = a;
          w = wn;
          norm = std::abs(wn);
          accepted = true;
        }
      } catch (const IntegrationFailure&) {
      }
    }
    if (!accepted) break;
    ++out.iterations;
    out.history.push_back(norm);
  }

  out.rho0 = x[0];
  out.a = x[1];
  out.residual_norm = norm;
  out.converged = norm <= opt.tol;
  out.bump_count = bumps_at(x[0], x[1], zeta_max, settings);
  return out;
}

std::pair<double, double> minimize_residual_in_rho0(double a, double lo, double hi,
                                                    double zeta_max,
                                                    const IntegratorSettings& settings,
                                                    double x_tol) {
  if (!(lo > 0.0) || !(hi > lo)) throw std::invalid_argument("rho0 bracket must be positive");
  auto f = [&](double r) {
    try {
      return std::abs(shoot_residual(r, a, zeta_max, settings));
    } catch (const IntegrationFailure&) {
      return std::numeric_limits<double>::infinity();
    }
  };
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
  double f1 = f(x1), f2 = f(x2);
  while (hi - lo > x_tol) {
    if (f1 <= f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - g * (hi - lo);
      f1 = f(x1);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + g * (hi - lo);
      f2 = f(x2);
    }
  }
  return f1 <= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

Branch continue_branch(const ShootingResult& seed, double a_step, int n_steps,
                       const NewtonOptions& options, const IntegratorSettings& settings) {
  if (!seed.converged) throw std::invalid_argument("continuation seed is not converged");
  if (a_step == 0.0 || !std::isfinite(a_step)) throw std::invalid_argument("a_step must be nonzero");
  if (n_steps < 1) throw std::invalid_argument("n_steps must be >= 1");

  Branch branch;
  branch.label = seed.bump_count;
  branch.members.push_back(seed);
  const double half = 0.5 * std::abs(a_step);
  for (int k = 0; k < n_steps; ++k) {
    const ShootingResult& prev = branch.members.back();
    const double a = prev.a + a_step;
    if (!(a > 0.0)) break;
    const auto [rho, wmin] = minimize_residual_in_rho0(a, 0.9 * prev.rho0, 1.1 * prev.rho0,
                                                       seed.zeta_max, settings);
    NewtonOptions local = options;
    local.a_bounds = {a - half, a + half};
    ShootingResult r = newton_solve({rho, a}, seed.zeta_max, local, settings);
    if (!r.converged) {
      branch.rejected.push_back(std::move(r));
      break;
    }
    branch.members.push_back(std::move(r));
  }
  return branch;
}

std::vector<ShootingResult> refine_zeta_max(std::pair<double, double> start,
                                            const std::vector<double>& zeta_list,
                                            const NewtonOptions& options,
                                            const IntegratorSettings& settings) {
  std::vector<ShootingResult> out;
  for (double zm : zeta_list) {
    out.push_back(newton_solve(start, zm, options, settings));
    if (out.back().converged) start = {out.back().rho0, out.back().a};
  }
  return out;
}

}  // namespace selfsim
