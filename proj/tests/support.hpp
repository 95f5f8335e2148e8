#pragma once

// Shared oracles for the unit tests: a brute-force fixed-step integrator and
// synthetic trajectories built from closed-form profiles.

#include <cmath>
#include <functional>
#include <vector>

#include "selfsim/integrator.hpp"
#include "selfsim/profile.hpp"

namespace selfsim::testing {

/// Classical RK4 on the Cartesian system with n equal steps.
inline CartesianState rk4_cartesian(CartesianState s, double zeta_end, int n, const Params& params) {
  const double h = (zeta_end - s.zeta) / n;
  auto shift = [](const CartesianState& base, const CartesianDerivative& d, double dz) {
    return CartesianState{base.zeta + dz, base.q + dz * d.dq, base.p + dz * d.dp};
  };
  for (int i = 0; i < n; ++i) {
    const CartesianDerivative k1 = rhs_cartesian(s, params);
    const CartesianDerivative k2 = rhs_cartesian(shift(s, k1, h / 2), params);
    const CartesianDerivative k3 = rhs_cartesian(shift(s, k2, h / 2), params);
    const CartesianDerivative k4 = rhs_cartesian(shift(s, k3, h), params);
    s.q += h / 6 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
    s.p += h / 6 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
    s.zeta += h;
  }
  return s;
}

/// Same scheme with the cubic term removed: the linearisation about Q = 0.
inline CartesianState rk4_linear(CartesianState s, double zeta_end, int n, const Params& params) {
  const double h = (zeta_end - s.zeta) / n;
  const std::complex<double> I(0.0, 1.0);
  auto f = [&](double z, ComplexPair q, ComplexPair p) {
    return CartesianDerivative{p, -((params.dim - 1.0) / z) * p + q - I * params.a * (q + z * p)};
  };
  for (int i = 0; i < n; ++i) {
    const double z = s.zeta;
    const auto k1 = f(z, s.q, s.p);
    const auto k2 = f(z + h / 2, s.q + h / 2 * k1.dq, s.p + h / 2 * k1.dp);
    const auto k3 = f(z + h / 2, s.q + h / 2 * k2.dq, s.p + h / 2 * k2.dp);
    const auto k4 = f(z + h, s.q + h * k3.dq, s.p + h * k3.dp);
    s.q += h / 6 * (k1.dq + 2.0 * k2.dq + 2.0 * k3.dq + k4.dq);
    s.p += h / 6 * (k1.dp + 2.0 * k2.dp + 2.0 * k3.dp + k4.dp);
    s.zeta += h;
  }
  return s;
}

/// Trajectory whose samples are the given Cartesian states; the phase is
/// kept continuous.
inline Trajectory synthetic_trajectory(const Params& params, const std::vector<CartesianState>& states) {
  Trajectory traj;
  traj.params = params;
  traj.zeta_max = states.back().zeta;
  double theta = 0.0;
  for (const CartesianState& c : states) {
    Sample s;
    s.cartesian = c;
    s.polar = cartesian_to_polar(c, theta);
    theta = s.polar.theta;
    traj.samples.push_back(s);
  }
  return traj;
}

/// States of Q(zeta) = f(zeta) with Q' = df(zeta) on a uniform grid.
inline std::vector<CartesianState> sampled_states(double lo, double hi, std::size_t n,
                                                  const std::function<ComplexPair(double)>& f,
                                                  const std::function<ComplexPair(double)>& df) {
  std::vector<CartesianState> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double z = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    out.push_back({z, f(z), df(z)});
  }
  return out;
}

inline ComplexPair slow_mode(double z, double a) {
  return std::pow(z, ComplexPair(-1.0, -1.0 / a));
}
inline ComplexPair slow_mode_prime(double z, double a) {
  return ComplexPair(-1.0, -1.0 / a) / z * slow_mode(z, a);
}
inline ComplexPair fast_mode(double z, double a) {
  return std::pow(z, ComplexPair(-2.0, 1.0 / a)) * std::exp(ComplexPair(0.0, -a * z * z / 2));
}
inline ComplexPair fast_mode_prime(double z, double a) {
  return (ComplexPair(-2.0, 1.0 / a) / z - ComplexPair(0.0, a * z)) * fast_mode(z, a);
}

}  // namespace selfsim::testing
