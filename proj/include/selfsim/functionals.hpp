#pragma once

#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "selfsim/integrator.hpp"

namespace selfsim {

/// E = ((zeta rho)')^2 + (zeta rho)^2 (theta'^2 - 1) + zeta^2 rho^4 / 2.
/// Satisfies E(0) = rho0^2 and E' = -zeta rho^4.
double energy_E(const BoundedPolarState& state);

/// Left side of the Budd identity, |zeta Q' + Q|^2 + zeta^2|Q|^4/2 - zeta^2|Q|^2.
double budd_lhs(const CartesianState& state);
/// Same quantity from the polar variables; algebraically equal to energy_E.
double budd_lhs(const BoundedPolarState& state);

/// Running integral of a pointwise integrand along a trajectory: composite
/// Simpson on the stored samples plus the series contribution on [0, zeta0].
class CumulativeIntegral {
 public:
  using Integrand = std::function<double(const BoundedPolarState&, const CartesianState&)>;

  CumulativeIntegral(const Trajectory& traj, Integrand integrand, double series_piece);

  /// Integral from 0 to zeta; between nodes the last partial interval uses
  /// Simpson with an interpolated midpoint.
  double at(double zeta) const;
  double at_node(std::size_t i) const { return values_[i]; }
  std::span<const double> values() const { return values_; }

 private:
  const Trajectory* traj_;
  Integrand integrand_;
  std::vector<double> values_;
};

/// integral_0^zeta s rho^4 ds
CumulativeIntegral quartic_integral(const Trajectory& traj);
/// integral_0^zeta (t rho)^2 dt
CumulativeIntegral radial_mass_integral(const Trajectory& traj);

/// max over interior nodes of |centred dE/dzeta + zeta rho^4| / (1 + zeta rho^4).
double energy_derivative_residual(const Trajectory& traj);

/// |LHS - RHS| of the Budd identity at zeta, LHS from the Cartesian state.
double budd_residual(const Trajectory& traj, double zeta);
/// Same residual with the LHS from the bounded polar state.
double budd_residual_polar(const Trajectory& traj, double zeta);

/// |zeta^2 rho^2 (theta' + a zeta / 2) - (a/2) integral_0^zeta (t rho)^2 dt|.
double theta_prime_identity_residual(const Trajectory& traj, double zeta);

/// Z = |zeta Q' + (1 + i/a) Q|.
double zero_energy_residual(const CartesianState& state, const Params& params);
ComplexPair zero_energy_defect(const CartesianState& state, const Params& params);

struct TruncatedHamiltonian {
  double h_trunc = 0.0;
  double tail_estimate = 0.0;
  double total() const { return h_trunc + tail_estimate; }
};

/// H truncated at zeta_upper (default: end of trajectory) with the tail
/// modelled by Q ~ k zeta^{-1 - i/a}, |k| = zeta rho(zeta_upper). dim = 3 only.
TruncatedHamiltonian hamiltonian_truncated(const Trajectory& traj, const Params& params,
                                           std::optional<double> zeta_upper = std::nullopt);

struct TailDecomposition {
  ComplexPair c1;  // coefficient of zeta^{-1 - i/a}
  ComplexPair c2;  // coefficient of zeta^{-2 + i/a} e^{-i a zeta^2 / 2}
  std::pair<double, double> window;
  double fit_residual = 0.0;
  double condition = 0.0;
  std::size_t samples_used = 0;
};

class IllConditionedFit : public std::runtime_error {
 public:
  IllConditionedFit(double condition);
  double condition() const { return condition_; }

 private:
  double condition_;
};

ComplexPair tail_basis_slow(double zeta, double a);
ComplexPair tail_basis_fast(double zeta, double a);

/// Least-squares projection of sampled Q onto the two far-field modes.
TailDecomposition tail_fit(std::span<const double> zeta, std::span<const ComplexPair> q, double a);
TailDecomposition tail_fit(const Trajectory& traj, const Params& params,
                           std::pair<double, double> window);

struct KConsistency {
  double k_tail = 0.0;
  double k_plateau = 0.0;
  std::optional<double> k_energy;
  std::optional<double> k_integral;

  /// Largest pairwise relative spread among the defined estimators.
  double max_pairwise_relative_spread() const;
};

KConsistency k_consistency(const Trajectory& traj, const Params& params);

}  // namespace selfsim
