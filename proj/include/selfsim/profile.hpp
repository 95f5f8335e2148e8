#pragma once

// Core definitions for the self-similar profile equation
//
//   Q'' + (N-1)/zeta Q' - Q + i a (Q + zeta Q') + Q|Q|^2 = 0,   Q(0) = rho0, Q'(0) = 0,
//
// in two equivalent representations: Cartesian (Q, Q') and the bounded polar
// variables (zeta rho, (zeta rho)', zeta^2 rho^2 theta', theta) with Q = rho e^{i theta}.

#include <complex>
#include <optional>
#include <stdexcept>
#include <string>

namespace selfsim {

using ComplexPair = std::complex<double>;

/// Raised when a state leaves the domain where a representation is defined
/// (zeta = 0, rho <= 0).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Params {
  double a = 1.0;
  double rho0 = 1.0;
  double dim = 3.0;

  /// Lemma-level claims are only asserted in three dimensions.
  bool is_three_dimensional() const { return dim == 3.0; }
};

/// Validates and builds a parameter set. Throws std::invalid_argument naming
/// the offending field.
Params make_params(double a, double rho0, double dim = 3.0);

struct CartesianState {
  double zeta = 0.0;
  ComplexPair q;  // Q(zeta)
  ComplexPair p;  // Q'(zeta)
};

struct BoundedPolarState {
  double zeta = 0.0;
  double p1 = 0.0;     // zeta rho
  double p2 = 0.0;     // (zeta rho)'
  double p3 = 0.0;     // zeta^2 rho^2 theta'
  double theta = 0.0;  // accumulated phase, theta(0) = 0

  double rho() const { return p1 / zeta; }
  double theta_prime() const { return p3 / (p1 * p1); }
  double rho_prime() const { return (p2 - p1 / zeta) / zeta; }
};

struct CartesianDerivative {
  ComplexPair dq;
  ComplexPair dp;
};

struct PolarDerivative {
  double dp1 = 0.0;
  double dp2 = 0.0;
  double dp3 = 0.0;
  double dtheta = 0.0;
};

struct SeriesStart {
  double zeta0 = 0.0;
  CartesianState cartesian;
  BoundedPolarState polar;
};

CartesianDerivative rhs_cartesian(const CartesianState& state, const Params& params);

/// Right-hand side in bounded polar variables. In three dimensions this is
///   p1' = p2,  p2' = p1 (theta'^2 + a zeta theta' + 1 - rho^2),  p3' = -a zeta p1 p2.
/// For other dimensions the (3 - N) corrections of the radial Laplacian are kept.
PolarDerivative rhs_bounded_polar(const BoundedPolarState& state, const Params& params);

/// Q''(0), fixed by the regular singular point: N Q''(0) = Q0 - i a Q0 - Q0^3.
ComplexPair second_derivative_at_origin(const Params& params);

/// Second-order series start at 0 < zeta0 <= 0.01.
SeriesStart series_start(const Params& params, double zeta0);

CartesianState polar_to_cartesian(const BoundedPolarState& state);

/// Inverse of polar_to_cartesian. The phase is taken from arg(Q) and, when a
/// reference phase is given, shifted by the multiple of 2 pi closest to it.
BoundedPolarState cartesian_to_polar(const CartesianState& state,
                                     std::optional<double> theta_reference = std::nullopt);

}  // namespace selfsim
