#pragma once

#include <limits>
#include <utility>
#include <vector>

#include "selfsim/integrator.hpp"

namespace selfsim {

/// W = zeta Q' + (1 + i/a) Q at zeta_max. initial_phase rotates the start
/// state; W then picks up the same factor e^{i phase}.
ComplexPair shoot_residual(double rho0, double a, double zeta_max,
                           const IntegratorSettings& settings = {}, double initial_phase = 0.0);

struct ShootingResult {
  double rho0 = 0.0;
  double a = 0.0;
  double residual_norm = 0.0;
  int iterations = 0;
  int bump_count = 0;
  double zeta_max = 0.0;
  bool converged = false;
  /// |W| at the start and after every accepted step.
  std::vector<double> history;
};

struct NewtonOptions {
  double tol = 1e-8;
  int max_iter = 30;
  /// Relative central-difference step for the Jacobian.
  double jacobian_step = 1e-6;
  int max_halvings = 8;
  /// Solve for W exp(i (a zeta^2/2 - ln(zeta)/a)) instead of W. Same roots and
  /// same |W|; removes the fast phase of the far-field mode, which otherwise
  /// turns the Newton model over a ~1/zeta^2 neighbourhood in a.
  bool derotate = true;
  /// Steps to rho0 below this are rejected: Q = 0 solves W = 0 trivially
  /// and the iteration would otherwise slide onto it.
  double rho0_min = 1e-3;
  /// Optional box on a: steps leaving [a_lo, a_hi] are halved like steps
  /// leaving the positive quadrant.
  std::pair<double, double> a_bounds{0.0, std::numeric_limits<double>::infinity()};
};

/// Damped Newton on (Re W, Im W) over (rho0, a).
ShootingResult newton_solve(std::pair<double, double> start, double zeta_max,
                            const NewtonOptions& options = {},
                            const IntegratorSettings& settings = {});

struct Branch {
  std::vector<ShootingResult> members;
  int label = 0;
  /// Present when continuation stopped early: the failed attempt.
  std::vector<ShootingResult> rejected;
};

/// Natural-parameter continuation in a. Each step minimises |W| over rho0 at
/// the shifted a, then polishes with 2-D Newton kept within |a_step|/2 of
/// the shifted a. Stops at the first member that does not converge.
Branch continue_branch(const ShootingResult& seed, double a_step, int n_steps,
                       const NewtonOptions& options = {},
                       const IntegratorSettings& settings = {});

/// 1-D golden-section minimisation of |W(rho0, a)| over rho0 in [lo, hi].
std::pair<double, double> minimize_residual_in_rho0(double a, double lo, double hi,
                                                    double zeta_max,
                                                    const IntegratorSettings& settings = {},
                                                    double x_tol = 1e-10);

/// Newton roots at successive horizons, each warm-started from the previous.
std::vector<ShootingResult> refine_zeta_max(std::pair<double, double> start,
                                            const std::vector<double>& zeta_list,
                                            const NewtonOptions& options = {},
                                            const IntegratorSettings& settings = {});

}  // namespace selfsim
