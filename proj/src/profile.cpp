#include "selfsim/profile.hpp"

#include <cmath>
#include <numbers>

namespace selfsim {

Params make_params(double a, double rho0, double dim) {
  if (!std::isfinite(a) || !std::isfinite(rho0) || !std::isfinite(dim)) {
    throw std::invalid_argument("parameters must be finite");
  }
  if (a <= 0.0) throw std::invalid_argument("a must be positive");
  if (rho0 <= 0.0) throw std::invalid_argument("rho0 must be positive");
  if (dim <= 2.0 || dim >= 4.0) throw std::invalid_argument("dim must lie in (2,4)");
  return Params{a, rho0, dim};
}

CartesianDerivative rhs_cartesian(const CartesianState& state, const Params& params) {
  if (state.zeta <= 0.0) throw DomainError("singular point; use series_start");
  constexpr ComplexPair i{0.0, 1.0};
  const double z = state.zeta;
  const ComplexPair& q = state.q;
  const ComplexPair& p = state.p;
  const ComplexPair dp = -((params.dim - 1.0) / z) * p + q - i * params.a * (q + z * p) -
                         q * std::norm(q);
  return {p, dp};
}

PolarDerivative rhs_bounded_polar(const BoundedPolarState& state, const Params& params) {
  if (state.zeta <= 0.0) throw DomainError("singular point; use series_start");
  if (!(state.p1 > 0.0)) {
    throw DomainError(
        "rho reached zero (positivity violated); aborting with diagnostic state "
        "zeta=" + std::to_string(state.zeta) + " p1=" + std::to_string(state.p1));
  }
  const double z = state.zeta;
  const double rho = state.p1 / z;
  const double tp = state.p3 / (state.p1 * state.p1);
  const double dim_shift = 3.0 - params.dim;

  PolarDerivative d;
  d.dp1 = state.p2;
  d.dp2 = state.p1 * (tp * tp + params.a * z * tp + 1.0 - rho * rho);
  d.dp3 = -params.a * z * state.p1 * state.p2;
  d.dtheta = tp;
  if (dim_shift != 0.0) {
    d.dp2 += dim_shift * state.rho_prime();
    d.dp3 += dim_shift * state.p3 / z;
  }
  return d;
}

ComplexPair second_derivative_at_origin(const Params& params) {
  const double r = params.rho0;
  return ComplexPair{r * (1.0 - r * r), -params.a * r} / params.dim;
}

SeriesStart series_start(const Params& params, double zeta0) {
  if (!(zeta0 > 0.0) || zeta0 > 0.01) {
    throw std::invalid_argument("zeta0 must lie in (0, 0.01]");
  }
  const double n = params.dim;
  const double r0 = params.rho0;
  const ComplexPair q2 = second_derivative_at_origin(params);

  SeriesStart s;
  s.zeta0 = zeta0;
  s.cartesian = {zeta0, ComplexPair{r0, 0.0} + 0.5 * q2 * zeta0 * zeta0, q2 * zeta0};

  const double rho = r0 + r0 * (1.0 - r0 * r0) * zeta0 * zeta0 / (2.0 * n);
  const double rho_prime = r0 * (1.0 - r0 * r0) * zeta0 / n;
  const double theta_prime = -params.a * zeta0 / n;
  s.polar.zeta = zeta0;
  s.polar.p1 = zeta0 * rho;
  s.polar.p2 = rho + zeta0 * rho_prime;
  s.polar.p3 = s.polar.p1 * s.polar.p1 * theta_prime;
  s.polar.theta = -params.a * zeta0 * zeta0 / (2.0 * n);
  return s;
}

CartesianState polar_to_cartesian(const BoundedPolarState& state) {
  if (state.zeta <= 0.0) throw DomainError("polar state undefined at zeta = 0");
  if (!(state.p1 > 0.0)) throw DomainError("polar state requires p1 > 0");
  const double rho = state.rho();
  const double rho_prime = state.rho_prime();
  const double tp = state.theta_prime();
  const ComplexPair phase = std::polar(1.0, state.theta);
  return {state.zeta, rho * phase, ComplexPair{rho_prime, rho * tp} * phase};
}

BoundedPolarState cartesian_to_polar(const CartesianState& state,
                                     std::optional<double> theta_reference) {
  if (state.zeta <= 0.0) throw DomainError("polar state undefined at zeta = 0");
  const double rho = std::abs(state.q);
  if (!(rho > 0.0)) throw DomainError("polar state requires |Q| > 0");
  const double z = state.zeta;
  // conj(Q) Q' = rho rho' + i rho^2 theta'
  const ComplexPair w = std::conj(state.q) * state.p;
  const double rho_prime = w.real() / rho;

  BoundedPolarState s;
  s.zeta = z;
  s.p1 = z * rho;
  s.p2 = rho + z * rho_prime;
  s.p3 = z * z * w.imag();
  s.theta = std::arg(state.q);
  if (theta_reference) {
    constexpr double two_pi = 2.0 * std::numbers::pi;
    s.theta += two_pi * std::round((*theta_reference - s.theta) / two_pi);
  }
  return s;
}

}  // namespace selfsim
