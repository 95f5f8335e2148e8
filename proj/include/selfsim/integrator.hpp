#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "selfsim/profile.hpp"

namespace selfsim {

enum class Form { cartesian, bounded_polar };

enum class TrajectoryStatus { completed, rho_hit_zero, step_underflow };

std::string to_string(Form form);
std::string to_string(TrajectoryStatus status);

/// Thrown by consumers that need a completed trajectory.
class IntegrationFailure : public std::runtime_error {
 public:
  IntegrationFailure(TrajectoryStatus status, double zeta);
  TrajectoryStatus status() const { return status_; }
  double zeta() const { return zeta_; }

 private:
  TrajectoryStatus status_;
  double zeta_;
};

struct IntegratorSettings {
  double rtol = 1e-10;
  double atol = 1e-12;
  /// Step cap h <= max_step_factor / (1 + a zeta).
  double max_step_factor = 0.1;
  Form form = Form::bounded_polar;
  /// Base output spacing. The node at zeta is followed by one at
  /// zeta + sample_spacing / ((1 + 3 a zeta)(1 + 9 rho^2)), which keeps a fixed
  /// number of nodes per period of the far-field oscillation e^{-i a zeta^2/2}
  /// and per nonlinear length 1/rho in the core. Dense enough that the error
  /// controller never has to cut a node interval at default tolerances.
  double sample_spacing = 0.05;
  /// Handoff abscissa of the series start.
  double zeta0 = 1e-4;

  void validate() const;
};

struct Sample {
  BoundedPolarState polar;
  CartesianState cartesian;

  double zeta() const { return polar.zeta; }
};

struct Trajectory {
  Params params;
  IntegratorSettings settings;
  double zeta_max = 0.0;
  std::vector<Sample> samples;
  TrajectoryStatus status = TrajectoryStatus::completed;

  bool completed() const { return status == TrajectoryStatus::completed; }
  double first_zeta() const { return samples.front().zeta(); }
  double last_zeta() const { return samples.back().zeta(); }
};

/// Integrates the profile equation from the series start to zeta_max with an
/// adaptive Dormand-Prince 5(4) pair and PI step control. Steps land on every
/// output node and only nodes are stored.
Trajectory integrate(const Params& params, double zeta_max,
                     const IntegratorSettings& settings = {});

/// Final state only; no samples are kept. Used by the shooting residual.
struct EndState {
  Sample state;
  TrajectoryStatus status = TrajectoryStatus::completed;
};
EndState integrate_endpoint(const Params& params, double zeta_max,
                            const IntegratorSettings& settings = {}, double initial_phase = 0.0);

/// Cubic Hermite interpolation of the bounded polar variables; exact at nodes.
std::pair<BoundedPolarState, CartesianState> sample(const Trajectory& traj, double zeta);

/// Re-integrates from the nearest stored node at or below zeta with tight
/// tolerances. Accurate to roughly the trajectory's own global error.
Sample evaluate_precise(const Trajectory& traj, double zeta);

/// Number of local maxima of rho along the trajectory (see count_maxima).
int count_bumps(const Trajectory& traj);

/// Local maxima of a sampled profile whose topographic prominence exceeds
/// min_prominence. origin_is_max counts the first sample as a maximum (the
/// profile starts with zero slope and negative curvature).
int count_maxima(std::span<const double> zeta, std::span<const double> rho,
                 double min_prominence, bool origin_is_max);

}  // namespace selfsim
