#include "selfsim/integrator.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace selfsim {

std::string to_string(Form form) {
  return form == Form::cartesian ? "cartesian" : "polar";
}

std::string to_string(TrajectoryStatus status) {
  switch (status) {
    case TrajectoryStatus::completed:
      return "completed";
    case TrajectoryStatus::rho_hit_zero:
      return "rho_hit_zero";
    case TrajectoryStatus::step_underflow:
      return "step_underflow";
  }
  return "unknown";
}

IntegrationFailure::IntegrationFailure(TrajectoryStatus status, double zeta)
    : std::runtime_error("integration stopped (" + to_string(status) + ") at zeta=" +
                         std::to_string(zeta)),
      status_(status),
      zeta_(zeta) {}

void IntegratorSettings::validate() const {
  if (!(rtol > 0.0) || !(atol > 0.0)) throw std::invalid_argument("rtol and atol must be positive");
  if (!(sample_spacing > 0.0)) throw std::invalid_argument("sample_spacing must be positive");
  if (!(max_step_factor > 0.0)) throw std::invalid_argument("max_step_factor must be positive");
  if (!(zeta0 > 0.0) || zeta0 > 0.01) throw std::invalid_argument("zeta0 must lie in (0, 0.01]");
}

namespace {

using Vec = std::array<double, 4>;

// Dormand-Prince 5(4) tableau.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

// Both representations packed as four reals. A false return from the
// evaluator (trial stage with p1 <= 0) rejects the step instead of throwing.
struct CartesianSystem {
  Params params;
  bool operator()(double z, const Vec& y, Vec& dy) const {
    const CartesianState s{z, {y[0], y[1]}, {y[2], y[3]}};
    const auto d = rhs_cartesian(s, params);
    dy = {d.dq.real(), d.dq.imag(), d.dp.real(), d.dp.imag()};
    return true;
  }
  static Vec pack(const Sample& s) {
    return {s.cartesian.q.real(), s.cartesian.q.imag(), s.cartesian.p.real(),
            s.cartesian.p.imag()};
  }
  static bool valid(const Vec& y) { return y[0] != 0.0 || y[1] != 0.0; }
  static double rho(double, const Vec& y) { return std::hypot(y[0], y[1]); }
  static Sample unpack(double z, const Vec& y, double theta_ref) {
    Sample s;
    s.cartesian = {z, {y[0], y[1]}, {y[2], y[3]}};
    s.polar = cartesian_to_polar(s.cartesian, theta_ref);
    return s;
  }
};

struct PolarSystem {
  Params params;
  bool operator()(double z, const Vec& y, Vec& dy) const {
    if (!(y[0] > 0.0)) return false;
    const BoundedPolarState s{z, y[0], y[1], y[2], y[3]};
    const auto d = rhs_bounded_polar(s, params);
    dy = {d.dp1, d.dp2, d.dp3, d.dtheta};
    return true;
  }
  static Vec pack(const Sample& s) {
    return {s.polar.p1, s.polar.p2, s.polar.p3, s.polar.theta};
  }
  static bool valid(const Vec& y) { return y[0] > 0.0; }
  static double rho(double z, const Vec& y) { return y[0] / z; }
  static Sample unpack(double z, const Vec& y, double /*theta_ref*/) {
    Sample s;
    s.polar = {z, y[0], y[1], y[2], y[3]};
    s.cartesian = polar_to_cartesian(s.polar);
    return s;
  }
};

// Output nodes: spacing / ((1 + a zeta)(1 + 9 rho^2)). The a zeta factor
// resolves the far-field oscillation e^{-i a zeta^2 / 2}; the rho^2 factor
// resolves the nonlinear core, whose length scale is 1 / rho.
class NodeRule {
 public:
  NodeRule(double a, double zeta_end, double spacing)
      : a_(a), zeta_end_(zeta_end), spacing_(spacing) {}

  double next(double z, double rho) const {
    const double step = spacing_ / ((1.0 + 3.0 * a_ * z) * (1.0 + 9.0 * rho * rho));
    const double node = z + step;
    // Avoid a sliver interval before the end point.
    return node > zeta_end_ - 0.25 * step ? zeta_end_ : node;
  }

 private:
  double a_;
  double zeta_end_;
  double spacing_;
};

struct StepperConfig {
  double rtol;
  double atol;
  double max_step_factor;
  double a;
};

// Accepted steps are reported as observer(z, y, at_node). Returns the final
// status; the observer sees the last valid state before a failure.
template <class System, class NextTarget, class Observer>
TrajectoryStatus run_dopri(const System& sys, const StepperConfig& cfg, double z, Vec y,
                           double z_end, NextTarget&& next_target, Observer&& observer) {
  constexpr double safety = 0.9;
  constexpr double beta = 0.04;
  constexpr double expo1 = 0.2 - beta * 0.75;
  constexpr double fac_min = 0.2;
  constexpr double fac_max = 10.0;

  Vec k1, k2, k3, k4, k5, k6, k7, ytmp, ynew;
  // Compensated state update: at ~1e6 steps the plain y += dy loses
  // sqrt(n) eps |y| in the growing components (theta, p3).
  Vec comp{}, comp_new{};
  if (!sys(z, y, k1)) return TrajectoryStatus::rho_hit_zero;

  double h_ctrl = std::min(1e-3, cfg.max_step_factor);
  double err_old = 1e-4;
  double target = next_target(z, y);

  auto combine = [&](double h, std::initializer_list<std::pair<double, const Vec*>> terms) {
    for (int i = 0; i < 4; ++i) {
      double acc = 0.0;
      for (const auto& [c, k] : terms) acc += c * (*k)[i];
      ytmp[i] = y[i] + h * acc;
    }
  };

  while (z < z_end) {
    const double cap = cfg.max_step_factor / (1.0 + cfg.a * z);
    double h = std::min(h_ctrl, cap);
    bool at_node = false;
    if (z + h >= target - 1e-13 * std::max(1.0, target)) {
      h = target - z;
      at_node = true;
    }
    if (h < 1e-14 * std::max(z, 1e-300)) return TrajectoryStatus::step_underflow;

    bool ok = true;
    combine(h, {{a21, &k1}});
    ok = ok && sys(z + c2 * h, ytmp, k2);
    if (ok) {
      combine(h, {{a31, &k1}, {a32, &k2}});
      ok = sys(z + c3 * h, ytmp, k3);
    }
    if (ok) {
      combine(h, {{a41, &k1}, {a42, &k2}, {a43, &k3}});
      ok = sys(z + c4 * h, ytmp, k4);
    }
    if (ok) {
      combine(h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
      ok = sys(z + c5 * h, ytmp, k5);
    }
    if (ok) {
      combine(h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
      ok = sys(z + h, ytmp, k6);
    }
    if (ok) {
      for (int i = 0; i < 4; ++i) {
        const double dy =
            h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]) + comp[i];
        ynew[i] = y[i] + dy;
        comp_new[i] = dy - (ynew[i] - y[i]);
      }
      ok = sys(z + h, ynew, k7);
    }
    if (!ok) {
      h_ctrl = 0.5 * h;
      continue;
    }

    double err_sq = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] +
                            e7 * k7[i]);
      const double sc = cfg.atol + cfg.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
      err_sq += (e / sc) * (e / sc);
    }
    const double err = std::sqrt(err_sq / 4.0);
    if (!std::isfinite(err)) {
      h_ctrl = 0.5 * h;
      continue;
    }

    const double fac11 = std::pow(std::max(err, 1e-16), expo1);
    if (err <= 1.0) {
      double fac = fac11 / std::pow(err_old, beta);
      fac = std::clamp(fac / safety, 1.0 / fac_max, 1.0 / fac_min);
      const double proposed = h / fac;
      // A step shortened to hit a node says nothing about the controller's
      // preferred size; do not let it shrink h_ctrl.
      h_ctrl = (h < h_ctrl) ? std::max(h_ctrl, proposed) : proposed;
      err_old = std::max(err, 1e-4);

      z = at_node ? target : z + h;
      y = ynew;
      comp = comp_new;
      k1 = k7;
      if (!System::valid(y)) return TrajectoryStatus::rho_hit_zero;
      observer(z, y, at_node);
      if (at_node) target = next_target(z, y);
    } else {
      h_ctrl = h / std::min(1.0 / fac_min, fac11 / safety);
    }
  }
  return TrajectoryStatus::completed;
}

Sample start_sample(const Params& params, const IntegratorSettings& settings, double phase) {
  const SeriesStart s = series_start(params, settings.zeta0);
  Sample out{s.polar, s.cartesian};
  if (phase != 0.0) {
    const ComplexPair rot = std::polar(1.0, phase);
    out.cartesian.q *= rot;
    out.cartesian.p *= rot;
    out.polar.theta += phase;
  }
  return out;
}

template <class Fn>
auto dispatch(const Params& params, Form form, Fn&& fn) {
  if (form == Form::cartesian) return fn(CartesianSystem{params});
  return fn(PolarSystem{params});
}

void validate_run(const Params& params, double zeta_max, const IntegratorSettings& settings) {
  settings.validate();
  make_params(params.a, params.rho0, params.dim);
  if (!(zeta_max > 1.0) || !std::isfinite(zeta_max)) {
    throw std::invalid_argument("zeta_max must exceed 1");
  }
}

}  // namespace

Trajectory integrate(const Params& params, double zeta_max, const IntegratorSettings& settings) {
  validate_run(params, zeta_max, settings);

  Trajectory traj;
  traj.params = params;
  traj.settings = settings;
  traj.zeta_max = zeta_max;

  const Sample first = start_sample(params, settings, 0.0);
  traj.samples.push_back(first);
  const NodeRule grid(params.a, zeta_max, settings.sample_spacing);
  const StepperConfig cfg{settings.rtol, settings.atol, settings.max_step_factor, params.a};

  traj.status = dispatch(params, settings.form, [&](const auto& sys) {
    using System = std::decay_t<decltype(sys)>;
    auto next_target = [&](double z, const Vec& y) { return grid.next(z, System::rho(z, y)); };
    auto observer = [&](double z, const Vec& y, bool at_node) {
      if (at_node) traj.samples.push_back(System::unpack(z, y, traj.samples.back().polar.theta));
    };
    return run_dopri(sys, cfg, settings.zeta0, System::pack(first), zeta_max, next_target,
                     observer);
  });
  return traj;
}

EndState integrate_endpoint(const Params& params, double zeta_max,
                            const IntegratorSettings& settings, double initial_phase) {
  validate_run(params, zeta_max, settings);
  const Sample first = start_sample(params, settings, initial_phase);
  const NodeRule grid(params.a, zeta_max, settings.sample_spacing);
  const StepperConfig cfg{settings.rtol, settings.atol, settings.max_step_factor, params.a};

  EndState out{first, TrajectoryStatus::completed};
  out.status = dispatch(params, settings.form, [&](const auto& sys) {
    using System = std::decay_t<decltype(sys)>;
    double z_last = first.zeta();
    Vec y_last = System::pack(first);
    auto next_target = [&](double z, const Vec& y) { return grid.next(z, System::rho(z, y)); };
    auto observer = [&](double z, const Vec& y, bool) {
      z_last = z;
      y_last = y;
    };
    const auto status =
        run_dopri(sys, cfg, settings.zeta0, y_last, zeta_max, next_target, observer);
    out.state = System::unpack(z_last, y_last, first.polar.theta);
    if (settings.form == Form::cartesian) {
      // Phase unwrapping against the start is meaningless this far out;
      // report the principal value shifted by the start phase.
      out.state.polar = cartesian_to_polar(out.state.cartesian);
    }
    return status;
  });
  return out;
}

namespace {

std::size_t interval_index(const Trajectory& traj, double zeta) {
  if (traj.samples.empty()) throw std::out_of_range("empty trajectory");
  if (!(zeta >= traj.first_zeta()) || !(zeta <= traj.last_zeta())) {
    throw std::out_of_range("zeta " + std::to_string(zeta) + " outside trajectory range [" +
                            std::to_string(traj.first_zeta()) + ", " +
                            std::to_string(traj.last_zeta()) + "]");
  }
  auto it = std::upper_bound(traj.samples.begin(), traj.samples.end(), zeta,
                             [](double z, const Sample& s) { return z < s.zeta(); });
  std::size_t i = static_cast<std::size_t>(it - traj.samples.begin());
  return i == 0 ? 0 : i - 1;
}

}  // namespace

std::pair<BoundedPolarState, CartesianState> sample(const Trajectory& traj, double zeta) {
  const std::size_t i = interval_index(traj, zeta);
  const Sample& lo = traj.samples[i];
  if (zeta == lo.zeta()) return {lo.polar, lo.cartesian};
  const Sample& hi = traj.samples[i + 1];
  if (zeta == hi.zeta()) return {hi.polar, hi.cartesian};

  const double h = hi.zeta() - lo.zeta();
  const double t = (zeta - lo.zeta()) / h;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t);
  const double h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t);
  const double h11 = t * t * (t - 1);
  const PolarDerivative d0 = rhs_bounded_polar(lo.polar, traj.params);
  const PolarDerivative d1 = rhs_bounded_polar(hi.polar, traj.params);
  auto herm = [&](double y0, double y1, double m0, double m1) {
    return h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
  };
  BoundedPolarState s;
  s.zeta = zeta;
  s.p1 = herm(lo.polar.p1, hi.polar.p1, d0.dp1, d1.dp1);
  s.p2 = herm(lo.polar.p2, hi.polar.p2, d0.dp2, d1.dp2);
  s.p3 = herm(lo.polar.p3, hi.polar.p3, d0.dp3, d1.dp3);
  s.theta = herm(lo.polar.theta, hi.polar.theta, d0.dtheta, d1.dtheta);
  return {s, polar_to_cartesian(s)};
}

Sample evaluate_precise(const Trajectory& traj, double zeta) {
  const std::size_t i = interval_index(traj, zeta);
  const Sample& lo = traj.samples[i];
  if (zeta == lo.zeta()) return lo;
  const Params& params = traj.params;
  const StepperConfig cfg{1e-13, 1e-15, traj.settings.max_step_factor, params.a};

  return dispatch(params, traj.settings.form, [&](const auto& sys) {
    using System = std::decay_t<decltype(sys)>;
    Vec y_last = System::pack(lo);
    double z_last = lo.zeta();
    auto next_target = [&](double, const Vec&) { return zeta; };
    auto observer = [&](double z, const Vec& y, bool) {
      z_last = z;
      y_last = y;
    };
    const auto status = run_dopri(sys, cfg, lo.zeta(), y_last, zeta, next_target, observer);
    if (status != TrajectoryStatus::completed) {
      throw std::runtime_error("re-integration failed: " + to_string(status));
    }
    return System::unpack(z_last, y_last, lo.polar.theta);
  });
}

namespace {

// Range-minimum segment tree over the sampled profile.
class MinTree {
 public:
  explicit MinTree(std::span<const double> v) : n_(v.size()), t_(2 * v.size()) {
    for (std::size_t i = 0; i < n_; ++i) t_[n_ + i] = v[i];
    for (std::size_t i = n_ - 1; i > 0; --i) t_[i] = std::min(t_[2 * i], t_[2 * i + 1]);
  }
  // min over [lo, hi)
  double query(std::size_t lo, std::size_t hi) const {
    double m = std::numeric_limits<double>::infinity();
    for (lo += n_, hi += n_; lo < hi; lo >>= 1, hi >>= 1) {
      if (lo & 1) m = std::min(m, t_[lo++]);
      if (hi & 1) m = std::min(m, t_[--hi]);
    }
    return m;
  }

 private:
  std::size_t n_;
  std::vector<double> t_;
};

}  // namespace

int count_maxima(std::span<const double> zeta, std::span<const double> rho, double min_prominence,
                 bool origin_is_max) {
  if (zeta.size() != rho.size()) throw std::invalid_argument("zeta/rho size mismatch");
  const std::size_t n = rho.size();
  if (n < 2) return origin_is_max ? 1 : 0;

  // Nearest strictly higher sample on each side.
  constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
  std::vector<std::size_t> left_higher(n, none), right_higher(n, none);
  std::vector<std::size_t> stack;
  for (std::size_t i = 0; i < n; ++i) {
    while (!stack.empty() && rho[stack.back()] <= rho[i]) stack.pop_back();
    if (!stack.empty()) left_higher[i] = stack.back();
    stack.push_back(i);
  }
  stack.clear();
  for (std::size_t i = n; i-- > 0;) {
    while (!stack.empty() && rho[stack.back()] <= rho[i]) stack.pop_back();
    if (!stack.empty()) right_higher[i] = stack.back();
    stack.push_back(i);
  }

  const MinTree tree(rho);
  auto prominence = [&](std::size_t i) {
    const double left_base = i == 0 ? -std::numeric_limits<double>::infinity()
                                    : tree.query(left_higher[i] == none ? 0 : left_higher[i], i);
    const double right_base = tree.query(i + 1, right_higher[i] == none ? n : right_higher[i] + 1);
    return rho[i] - std::max(left_base, right_base);
  };

  int count = 0;
  if (origin_is_max && rho[0] >= rho[1] && prominence(0) > min_prominence) ++count;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!(rho[i] > rho[i - 1] && rho[i] >= rho[i + 1])) continue;
    if (prominence(i) > min_prominence) ++count;
  }
  return count;
}

int count_bumps(const Trajectory& traj) {
  std::vector<double> z, r;
  z.reserve(traj.samples.size());
  r.reserve(traj.samples.size());
  for (const Sample& s : traj.samples) {
    z.push_back(s.zeta());
    r.push_back(std::abs(s.cartesian.q));
  }
  const bool origin_max = second_derivative_at_origin(traj.params).real() < 0.0;
  return count_maxima(z, r, 1e-6 * traj.params.rho0, origin_max);
}

}  // namespace selfsim
