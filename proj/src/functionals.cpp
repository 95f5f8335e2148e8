#include "selfsim/functionals.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace selfsim {

double energy_E(const BoundedPolarState& s) {
  if (s.zeta <= 0.0 || !(s.p1 > 0.0)) throw DomainError("energy_E requires zeta > 0 and p1 > 0");
  const double tp = s.theta_prime();
  return s.p2 * s.p2 + s.p1 * s.p1 * (tp * tp - 1.0) + 0.5 * std::pow(s.p1, 4) / (s.zeta * s.zeta);
}

double budd_lhs(const CartesianState& s) {
  const double z = s.zeta;
  const double r2 = std::norm(s.q);
  return std::norm(z * s.p + s.q) + 0.5 * z * z * r2 * r2 - z * z * r2;
}

double budd_lhs(const BoundedPolarState& s) {
  const double w = s.p3 / s.p1;  // zeta rho theta'
  return s.p2 * s.p2 + w * w + 0.5 * std::pow(s.p1, 4) / (s.zeta * s.zeta) - s.p1 * s.p1;
}

namespace {

// Integral over [x0, x1] of the quadratic through (x0, f0), (x1, f1), (x2, f2).
double first_interval(double x0, double x1, double x2, double f0, double f1, double f2) {
  const double h1 = x1 - x0;
  const double h2 = x2 - x1;
  const double H = h1 + h2;
  return f0 * (h1 / 2.0 - h1 * h1 / (6.0 * H)) + f1 * h1 * (3.0 * H - 2.0 * h1) / (6.0 * h2) -
         f2 * h1 * h1 * h1 / (6.0 * H * h2);
}

// Integral over [x1, x2] of the same quadratic.
double last_interval(double x0, double x1, double x2, double f0, double f1, double f2) {
  return first_interval(-x2, -x1, -x0, f2, f1, f0);
}

double simpson_pair(double x0, double x1, double x2, double f0, double f1, double f2) {
  const double h1 = x1 - x0;
  const double h2 = x2 - x1;
  const double H = h1 + h2;
  return H / 6.0 * ((2.0 - h2 / h1) * f0 + H * H / (h1 * h2) * f1 + (2.0 - h1 / h2) * f2);
}

}  // namespace

CumulativeIntegral::CumulativeIntegral(const Trajectory& traj, Integrand integrand,
                                       double series_piece)
    : traj_(&traj), integrand_(std::move(integrand)) {
  const auto& s = traj.samples;
  const std::size_t n = s.size();
  std::vector<double> x(n), f(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = s[i].zeta();
    f[i] = integrand_(s[i].polar, s[i].cartesian);
  }
  values_.assign(n, series_piece);
  if (n == 2) {
    values_[1] = series_piece + 0.5 * (x[1] - x[0]) * (f[0] + f[1]);
    return;
  }
  // Neumaier-compensated running sum; the uncompensated sum drifts by
  // sqrt(n) eps |I| which is visible at a million nodes.
  double sum = series_piece, comp = 0.0;
  auto add = [&](double term) {
    const double t = sum + term;
    comp += std::abs(sum) >= std::abs(term) ? (sum - t) + term : (term - t) + sum;
    sum = t;
  };
  std::size_t i = 0;
  for (; i + 2 < n; i += 2) {
    const double base = sum + comp;
    values_[i + 1] = base + first_interval(x[i], x[i + 1], x[i + 2], f[i], f[i + 1], f[i + 2]);
    add(simpson_pair(x[i], x[i + 1], x[i + 2], f[i], f[i + 1], f[i + 2]));
    values_[i + 2] = sum + comp;
  }
  if (i + 1 < n) {
    values_[i + 1] = values_[i] + last_interval(x[i - 1], x[i], x[i + 1], f[i - 1], f[i], f[i + 1]);
  }
}

double CumulativeIntegral::at(double zeta) const {
  const auto& s = traj_->samples;
  if (!(zeta >= s.front().zeta()) || !(zeta <= s.back().zeta())) {
    throw std::out_of_range("zeta " + std::to_string(zeta) + " outside trajectory range");
  }
  auto it = std::upper_bound(s.begin(), s.end(), zeta,
                             [](double z, const Sample& smp) { return z < smp.zeta(); });
  const std::size_t i = static_cast<std::size_t>(it - s.begin()) - 1;
  const double x0 = s[i].zeta();
  if (zeta == x0) return values_[i];
  const Sample mid = evaluate_precise(*traj_, 0.5 * (x0 + zeta));
  const Sample end = evaluate_precise(*traj_, zeta);
  const double partial = (zeta - x0) / 6.0 *
                         (integrand_(s[i].polar, s[i].cartesian) +
                          4.0 * integrand_(mid.polar, mid.cartesian) +
                          integrand_(end.polar, end.cartesian));
  return values_[i] + partial;
}

CumulativeIntegral quartic_integral(const Trajectory& traj) {
  const double r0 = traj.params.rho0;
  const double z0 = traj.first_zeta();
  return CumulativeIntegral(
      traj,
      [](const BoundedPolarState& p, const CartesianState&) {
        const double r = p.rho();
        return p.zeta * r * r * r * r;
      },
      std::pow(r0, 4) * z0 * z0 / 2.0);
}

CumulativeIntegral radial_mass_integral(const Trajectory& traj) {
  const double r0 = traj.params.rho0;
  const double z0 = traj.first_zeta();
  return CumulativeIntegral(
      traj, [](const BoundedPolarState& p, const CartesianState&) { return p.p1 * p.p1; },
      r0 * r0 * z0 * z0 * z0 / 3.0);
}

double energy_derivative_residual(const Trajectory& traj) {
  const auto& s = traj.samples;
  if (s.size() < 3) throw std::invalid_argument("energy_derivative_residual needs >= 3 samples");
  std::vector<double> e(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) e[i] = energy_E(s[i].polar);
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    const double h1 = s[i].zeta() - s[i - 1].zeta();
    const double h2 = s[i + 1].zeta() - s[i].zeta();
    const double de = -h2 / (h1 * (h1 + h2)) * e[i - 1] + (h2 - h1) / (h1 * h2) * e[i] +
                      h1 / (h2 * (h1 + h2)) * e[i + 1];
    const double r = s[i].polar.rho();
    const double law = s[i].zeta() * r * r * r * r;
    worst = std::max(worst, std::abs(de + law) / (1.0 + law));
  }
  return worst;
}

double budd_residual(const Trajectory& traj, double zeta) {
  const Sample s = evaluate_precise(traj, zeta);
  const double rhs = traj.params.rho0 * traj.params.rho0 - quartic_integral(traj).at(zeta);
  return std::abs(budd_lhs(s.cartesian) - rhs);
}

double budd_residual_polar(const Trajectory& traj, double zeta) {
  const Sample s = evaluate_precise(traj, zeta);
  const double rhs = traj.params.rho0 * traj.params.rho0 - quartic_integral(traj).at(zeta);
  return std::abs(budd_lhs(s.polar) - rhs);
}

double theta_prime_identity_residual(const Trajectory& traj, double zeta) {
  const BoundedPolarState p = evaluate_precise(traj, zeta).polar;
  const double a = traj.params.a;
  const double lhs = p.p3 + 0.5 * a * zeta * p.p1 * p.p1;
  return std::abs(lhs - 0.5 * a * radial_mass_integral(traj).at(zeta));
}

ComplexPair zero_energy_defect(const CartesianState& state, const Params& params) {
  return state.zeta * state.p + ComplexPair{1.0, 1.0 / params.a} * state.q;
}

double zero_energy_residual(const CartesianState& state, const Params& params) {
  return std::abs(zero_energy_defect(state, params));
}

TruncatedHamiltonian hamiltonian_truncated(const Trajectory& traj, const Params& params,
                                           std::optional<double> zeta_upper) {
  if (!params.is_three_dimensional()) {
    throw std::domain_error("hamiltonian_truncated: unsupported for dim != 3");
  }
  const double upper = zeta_upper.value_or(traj.last_zeta());
  const double z0 = traj.first_zeta();
  const double q2 = std::norm(second_derivative_at_origin(params));
  const double series =
      q2 * std::pow(z0, 5) / 5.0 - 0.5 * std::pow(params.rho0, 4) * std::pow(z0, 3) / 3.0;
  const CumulativeIntegral h(
      traj,
      [](const BoundedPolarState&, const CartesianState& c) {
        const double r2 = std::norm(c.q);
        return c.zeta * c.zeta * (std::norm(c.p) - 0.5 * r2 * r2);
      },
      series);

  const BoundedPolarState p = evaluate_precise(traj, upper).polar;
  const double k2 = p.p1 * p.p1;
  const double a = params.a;
  TruncatedHamiltonian out;
  out.h_trunc = h.at(upper);
  out.tail_estimate = (k2 * (1.0 + 1.0 / (a * a)) - 0.5 * k2 * k2) / upper;
  return out;
}

IllConditionedFit::IllConditionedFit(double condition)
    : std::runtime_error("ill-conditioned tail fit (condition " + std::to_string(condition) + ")"),
      condition_(condition) {}

ComplexPair tail_basis_slow(double zeta, double a) {
  return std::polar(1.0 / zeta, -std::log(zeta) / a);
}

ComplexPair tail_basis_fast(double zeta, double a) {
  return std::polar(1.0 / (zeta * zeta), std::log(zeta) / a - 0.5 * a * zeta * zeta);
}

TailDecomposition tail_fit(std::span<const double> zeta, std::span<const ComplexPair> q,
                           double a) {
  if (zeta.size() != q.size()) throw std::invalid_argument("tail_fit: size mismatch");
  const Eigen::Index n = static_cast<Eigen::Index>(zeta.size());
  if (n < 50) {
    throw std::invalid_argument("tail_fit: need >= 50 window samples, got " + std::to_string(n));
  }
  Eigen::MatrixXcd basis(n, 2);
  Eigen::VectorXcd rhs(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    basis(i, 0) = tail_basis_slow(zeta[i], a);
    basis(i, 1) = tail_basis_fast(zeta[i], a);
    rhs(i) = q[i];
  }
  Eigen::JacobiSVD<Eigen::MatrixXcd> svd(basis, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double condition = sv(1) > 0.0 ? sv(0) / sv(1) : std::numeric_limits<double>::infinity();
  if (!(condition <= 1e8)) throw IllConditionedFit(condition);

  const Eigen::VectorXcd coef = svd.solve(rhs);
  TailDecomposition out;
  out.c1 = coef(0);
  out.c2 = coef(1);
  out.window = {zeta.front(), zeta.back()};
  out.fit_residual = (basis * coef - rhs).norm() / std::sqrt(static_cast<double>(n));
  out.condition = condition;
  out.samples_used = static_cast<std::size_t>(n);
  return out;
}

TailDecomposition tail_fit(const Trajectory& traj, const Params& params,
                           std::pair<double, double> window) {
  const auto [lo, hi] = window;
  if (!(lo < hi)) throw std::invalid_argument("tail_fit: window must be ordered");
  if (lo < 20.0) throw std::invalid_argument("tail_fit: window must start at zeta >= 20");
  if (lo < traj.first_zeta() || hi > traj.last_zeta()) {
    throw std::out_of_range("tail_fit: window outside trajectory range");
  }
  std::vector<double> z;
  std::vector<ComplexPair> q;
  for (const Sample& s : traj.samples) {
    if (s.zeta() < lo || s.zeta() > hi) continue;
    z.push_back(s.zeta());
    q.push_back(s.cartesian.q);
  }
  TailDecomposition out = tail_fit(z, q, params.a);
  out.window = window;
  return out;
}

double KConsistency::max_pairwise_relative_spread() const {
  std::vector<double> v{k_tail, k_plateau};
  if (k_energy) v.push_back(*k_energy);
  if (k_integral) v.push_back(*k_integral);
  double worst = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    for (std::size_t j = i + 1; j < v.size(); ++j) {
      const double scale = std::max(v[i], v[j]);
      if (scale > 0.0) worst = std::max(worst, std::abs(v[i] - v[j]) / scale);
    }
  }
  return worst;
}

KConsistency k_consistency(const Trajectory& traj, const Params& params) {
  const double zmax = traj.last_zeta();
  if (zmax < 100.0) throw std::invalid_argument("k_consistency needs zeta_max >= 100");
  const Sample& last = traj.samples.back();

  KConsistency k;
  k.k_tail = std::abs(tail_fit(traj, params, {0.5 * zmax, zmax}).c1);
  k.k_plateau = last.polar.p1;
  const double e = energy_E(last.polar);
  if (e < 0.0) k.k_energy = std::sqrt(-e);
  const double radicand = quartic_integral(traj).at_node(traj.samples.size() - 1) -
                          params.rho0 * params.rho0;
  if (radicand > 0.0) k.k_integral = std::sqrt(radicand);
  return k;
}

}  // namespace selfsim
