#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "selfsim/functionals.hpp"
#include "selfsim/integrator.hpp"

namespace selfsim {

struct LemmaTolerances {
  /// Upper limit for the bounded quantities zeta rho, |zeta rho'|, |zeta rho theta'|.
  double bound_limit = 1e3;
  /// Required growth ratio between successive checkpoints for divergence claims.
  double growth_factor = 1.5;
  /// Envelope at zeta_max below which a quantity counts as having reached 0.
  double limit_small = 0.05;
  /// |zeta rho - sqrt(-E)| / zeta rho at zeta_max.
  double k_relative = 0.05;
  /// Z at zeta_max.
  double zero_energy = 0.05;
  /// |h_trunc + tail_estimate| / (1 + rho0^2) at zeta_max.
  double hamiltonian = 0.01;
  /// Width of the trailing window [c (1 - w), c] used for sup envelopes.
  double envelope_window = 0.1;

  /// Strictest thresholds: limits 0, growth factor infinite. Every
  /// tolerance-governed entry fails; a negative control.
  static LemmaTolerances zero();
};

struct LemmaEntry {
  LemmaEntry() = default;
  LemmaEntry(std::string name_, std::vector<std::pair<std::string, double>> observed_)
      : name(std::move(name_)), observed(std::move(observed_)) {}

  std::string name;
  std::vector<std::pair<std::string, double>> observed;
  std::vector<double> checkpoints;
  double tolerance_used = 0.0;
  bool pass = false;
};

struct LemmaReport {
  Params params;
  IntegratorSettings settings;
  LemmaTolerances tolerances;
  double zeta_max = 0.0;
  TrajectoryStatus status = TrajectoryStatus::completed;
  /// False when the integration stopped early; the entries then fail.
  bool complete = true;
  std::vector<LemmaEntry> entries;

  bool pass() const;
  const LemmaEntry& entry(const std::string& name) const;
};

/// Integrates once and evaluates the lemma chain and the zero-energy probe at
/// checkpoints zeta_max/4, zeta_max/2, zeta_max. dim = 3 only.
LemmaReport verify_lemmas(const Params& params, double zeta_max,
                          const LemmaTolerances& tolerances = {},
                          const IntegratorSettings& settings = {});
LemmaReport verify_lemmas(const Trajectory& traj, const LemmaTolerances& tolerances = {});

/// sup |f| over samples with zeta in [lo, hi].
template <class F>
double sup_over(const Trajectory& traj, double lo, double hi, F&& f);

struct ConvergenceRow {
  double zeta_max = 0.0;
  double z_residual = 0.0;
  double h_defect = 0.0;  // |h_trunc + tail_estimate|
  double zrho = 0.0;
  double energy = 0.0;
};

struct ConvergenceTable {
  Params params;
  IntegratorSettings settings;
  std::vector<ConvergenceRow> rows;
  bool z_decreasing = false;
  bool h_decreasing = false;

  bool pass() const { return z_decreasing && h_decreasing; }
};

/// Zero-energy probe: Z and the H defect at each horizon. One integration to the
/// largest horizon; the truncations at smaller horizons read the same solution.
ConvergenceTable convergence_study(const Params& params, const std::vector<double>& zeta_list,
                                   const IntegratorSettings& settings = {});

enum class CellStatus { completed, rho_hit_zero, step_underflow, failed };
std::string to_string(CellStatus status);

struct SweepCell {
  double rho0 = 0.0;
  double a = 0.0;
  int bump_count = 0;
  double e_final = 0.0;
  double k_plateau = 0.0;
  double z_final = 0.0;
  CellStatus status = CellStatus::failed;
  std::string message;
};

struct SweepGrid {
  std::pair<double, double> rho0_range;
  std::pair<double, double> a_range;
  std::size_t rho0_count = 2;
  std::size_t a_count = 2;

  void validate() const;
  std::vector<double> rho0_values() const;
  std::vector<double> a_values() const;
};

/// One integrate+classify per grid node, ordered by (rho0, a). Cell failures
/// are recorded, never thrown. Runs on worker_count() threads.
std::vector<SweepCell> sweep(const SweepGrid& grid, double zeta_max,
                             const IntegratorSettings& settings = {});
SweepCell classify_cell(double rho0, double a, double zeta_max,
                        const IntegratorSettings& settings = {});

/// Thread count for fan-out work: PROFILE_THREADS if set, otherwise hardware
/// concurrency, never more than tasks. Throws on a malformed PROFILE_THREADS.
std::size_t worker_count(std::size_t tasks);

struct AnsatzCheck {
  /// max |i psi_t + psi_rr + (N-1)/r psi_r + psi |psi|^2| / max |psi|^3
  double normalized = 0.0;
  double raw = 0.0;
  double max_psi = 0.0;
  std::size_t points = 0;
};

/// Rebuilds psi(r, t) = L^{-1} exp(i ln(T/(T-t)) / (2a)) Q(r/L), L = sqrt(2a(T-t)),
/// from the trajectory and evaluates the PDE residual by centred differences
/// with steps h_r = step_scale L / (1 + a zeta) and
/// h_t = step_scale (T - t) / (1 + a zeta^2), zeta = r / L.
AnsatzCheck ansatz_residual_check(const Trajectory& traj, const Params& params, double T,
                                  const std::vector<double>& r_points,
                                  const std::vector<double>& t_points, double step_scale = 1e-2);

std::vector<double> linspace(double lo, double hi, std::size_t n);

template <class F>
double sup_over(const Trajectory& traj, double lo, double hi, F&& f) {
  double worst = 0.0;
  for (const Sample& s : traj.samples) {
    if (s.zeta() < lo) continue;
    if (s.zeta() > hi) break;
    worst = std::max(worst, std::abs(f(s)));
  }
  return worst;
}

}  // namespace selfsim
