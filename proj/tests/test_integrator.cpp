#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "selfsim/integrator.hpp"
#include "support.hpp"

using namespace selfsim;

namespace {

const std::vector<Params>& cross_form_sets() {
  static const std::vector<Params> sets{make_params(1, 1), make_params(0.918, 1.885),
                                        make_params(0.5, 3)};
  return sets;
}

}  // namespace

TEST_CASE("settings validation") {
  IntegratorSettings s;
  CHECK_NOTHROW(s.validate());
  s.rtol = 0;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  s = {};
  s.sample_spacing = -1;
  CHECK_THROWS_AS(s.validate(), std::invalid_argument);
  CHECK_THROWS_WITH(integrate(make_params(1, 1), 0.5), "zeta_max must exceed 1");
}

TEST_CASE("single-bump parameters: bounded plateau at zeta = 100") {
  const Params p = make_params(0.918, 1.885);
  const Trajectory t = integrate(p, 100.0);
  REQUIRE(t.completed());
  const double z100 = sample(t, 100.0).first.p1;
  const double z90 = sample(t, 90.0).first.p1;
  CHECK(z100 >= 0.1);
  CHECK(z100 <= 10.0);
  CHECK(std::abs(z100 - z90) < 0.05);
  // Frozen from the reference build.
  CHECK(z100 == doctest::Approx(1.42475).epsilon(1e-4));

  // Boundedness monitor fixtures.
  double max_zrho = 0.0, max_zdq = 0.0;
  for (const Sample& s : t.samples) {
    max_zrho = std::max(max_zrho, s.polar.p1);
    max_zdq = std::max(max_zdq, s.zeta() * std::abs(s.cartesian.p));
  }
  CHECK(max_zrho == doctest::Approx(1.5364).epsilon(1e-3));
  CHECK(max_zdq == doctest::Approx(0.9818).epsilon(1e-3));
  CHECK(count_bumps(t) == 1);
}

TEST_CASE("trajectory invariants") {
  const Trajectory t = integrate(make_params(1, 1), 30.0);
  REQUIRE(t.completed());
  CHECK(t.first_zeta() == t.settings.zeta0);
  CHECK(t.last_zeta() == 30.0);
  for (std::size_t i = 1; i < t.samples.size(); ++i) {
    REQUIRE(t.samples[i].zeta() > t.samples[i - 1].zeta());
  }
  for (std::size_t i = 0; i < t.samples.size(); i += 97) {
    const Sample& s = t.samples[i];
    const CartesianState c = polar_to_cartesian(s.polar);
    CHECK(s.cartesian.zeta == s.zeta());
    CHECK(std::abs(c.q - s.cartesian.q) <= 10 * t.settings.rtol * (1 + std::abs(c.q)));
    CHECK(std::abs(c.p - s.cartesian.p) <= 10 * t.settings.rtol * (1 + std::abs(c.p)));
  }

  IntegratorSettings cart;
  cart.form = Form::cartesian;
  const Trajectory tc = integrate(make_params(1, 1), 30.0, cart);
  for (std::size_t i = 0; i < tc.samples.size(); i += 97) {
    const Sample& s = tc.samples[i];
    const CartesianState c = polar_to_cartesian(s.polar);
    CHECK(std::abs(c.q - s.cartesian.q) <= 10 * cart.rtol * (1 + std::abs(c.q)));
  }
}

TEST_CASE("small amplitude follows the linearised equation") {
  const Params p = make_params(1, 1e-6);
  const Trajectory t = integrate(p, 10.0);
  REQUIRE(t.completed());
  const SeriesStart s = series_start(p, 0.01);
  CartesianState lin = s.cartesian;
  for (double z : {1.0, 2.0, 5.0, 10.0}) {
    lin = testing::rk4_linear(lin, z, static_cast<int>((z - lin.zeta) * 4000), p);
    const double rho = sample(t, z).first.rho();
    const double want = std::abs(lin.q);
    CHECK(rho >= 0.9 * want);
    CHECK(rho <= 1.1 * want);
    CHECK(std::abs(rho - want) <= 1e-3 * want);
  }
}

TEST_CASE("brute-force RK4 oracle") {
  for (const Params& p : cross_form_sets()) {
    const Trajectory t = integrate(p, 10.0);
    const SeriesStart s = series_start(p, t.settings.zeta0);
    CartesianState c = testing::rk4_cartesian(s.cartesian, 1.0, 20000, p);
    CHECK(std::abs(sample(t, 1.0).second.q - c.q) < 1e-8);
    c = testing::rk4_cartesian(c, 10.0, 400000, p);
    CHECK(std::abs(sample(t, 10.0).second.q - c.q) < 1e-7);
  }
}

TEST_CASE("Cartesian and polar forms agree at zeta = 10") {
  IntegratorSettings cart;
  cart.form = Form::cartesian;
  for (const Params& p : cross_form_sets()) {
    const double rp = integrate_endpoint(p, 10.0).state.polar.rho();
    const double rc = std::abs(integrate_endpoint(p, 10.0, cart).state.cartesian.q);
    CHECK(std::abs(rp - rc) < 1e-8);
  }
}

TEST_CASE("integrate_endpoint matches the stored trajectory") {
  const Params p = make_params(0.918, 1.885);
  const Trajectory t = integrate(p, 40.0);
  const EndState e = integrate_endpoint(p, 40.0);
  CHECK(e.status == TrajectoryStatus::completed);
  CHECK(std::abs(e.state.polar.p1 - t.samples.back().polar.p1) < 1e-12);
}

TEST_CASE("sample: node identity, midpoint accuracy, range") {
  const Trajectory t = integrate(make_params(1, 1), 20.0);
  const Sample& node = t.samples[t.samples.size() / 3];
  const auto at = sample(t, node.zeta());
  CHECK(at.first.p1 == node.polar.p1);
  CHECK(at.first.p2 == node.polar.p2);
  CHECK(at.first.p3 == node.polar.p3);
  CHECK(at.first.theta == node.polar.theta);

  std::size_t i = 0;
  while (t.samples[i].zeta() < 2.0) ++i;
  const double lo = t.samples[i].zeta(), hi = t.samples[i + 1].zeta();
  const double mid = 0.5 * (lo + hi);
  const double dz = hi - lo;
  const Sample precise = evaluate_precise(t, mid);
  const auto interp = sample(t, mid);
  CHECK(std::abs(interp.first.p1 - precise.polar.p1) < std::pow(dz, 4));
  CHECK(std::abs(interp.second.q - precise.cartesian.q) < std::pow(dz, 4));

  CHECK_THROWS_AS(sample(t, 20.5), std::out_of_range);
  CHECK_THROWS_AS(sample(t, 0.0), std::out_of_range);
}

TEST_CASE("count_maxima on closed-form signals") {
  std::vector<double> z, decay, wave;
  for (int i = 0; i <= 4000; ++i) {
    const double x = 20.0 * i / 4000.0;
    z.push_back(x);
    // derivative e^{-x}(-1 - sin^2 x / 2 + sin(2x) / 2) < 0: strictly decreasing
    decay.push_back(std::exp(-x) * (1 + 0.5 * std::sin(x) * std::sin(x)));
    // maxima at pi/2 + 2 pi k: three inside [0, 20]
    wave.push_back(1 + 0.5 * std::sin(x));
  }
  CHECK(count_maxima(z, decay, 1e-12, true) == 1);
  CHECK(count_maxima(z, decay, 1e-12, false) == 0);
  CHECK(count_maxima(z, wave, 1e-6, false) == 3);
  CHECK(count_maxima(z, wave, 1e-6, true) == 3);  // rho[0] < rho[1]: origin is not a maximum
  // Prominence filter drops a ripple below the threshold.
  std::vector<double> ripple = decay;
  for (std::size_t k = 0; k < ripple.size(); ++k) ripple[k] = 1.0 - 1e-3 * z[k] + 1e-9 * std::sin(50 * z[k]);
  CHECK(count_maxima(z, ripple, 1e-6, true) == 1);
  CHECK_THROWS_AS(count_maxima(z, std::span<const double>(wave).first(10), 1e-6, false),
                  std::invalid_argument);
}

TEST_CASE("bump count of a small-a multi-bump profile") {
  // Shooting root at zeta_max = 50 found by the solver's start-grid scan.
  const Trajectory t = integrate(make_params(0.081388, 1.031583), 50.0);
  CHECK(count_bumps(t) == 2);
}

TEST_CASE("tightening tolerances moves the endpoint by less than 100x the loose tolerance") {
  const Params p = make_params(1, 1);
  IntegratorSettings loose;
  loose.rtol = 1e-8;
  loose.atol = 1e-10;
  IntegratorSettings tight = loose;
  tight.rtol /= 2;
  tight.atol /= 2;
  const double r1 = integrate_endpoint(p, 100.0, loose).state.polar.rho();
  const double r2 = integrate_endpoint(p, 100.0, tight).state.polar.rho();
  CHECK(std::abs(r1 - r2) < 100 * loose.rtol);
}

TEST_CASE("series regime of theta'") {
  for (const Params& p : cross_form_sets()) {
    const Trajectory t = integrate(p, 2.0);
    for (const Sample& s : t.samples) {
      if (s.zeta() > 0.1) break;
      const double z = s.zeta();
      CHECK(std::abs(s.polar.theta_prime() + p.a * z / 3) < 0.01 * p.a * z);
    }
  }
}

TEST_CASE("integration failure carries status and position") {
  const IntegrationFailure f(TrajectoryStatus::rho_hit_zero, 3.5);
  CHECK(f.status() == TrajectoryStatus::rho_hit_zero);
  CHECK(f.zeta() == 3.5);
  CHECK(std::string(f.what()).find("rho_hit_zero") != std::string::npos);
  CHECK(to_string(TrajectoryStatus::step_underflow) == "step_underflow");
  CHECK(to_string(Form::bounded_polar) == "polar");
}

TEST_CASE("other dimensions: both forms still agree") {
  IntegratorSettings cart;
  cart.form = Form::cartesian;
  for (double dim : {2.5, 3.5}) {
    const Params p = make_params(1, 1, dim);
    const double rp = integrate_endpoint(p, 10.0).state.polar.rho();
    const double rc = std::abs(integrate_endpoint(p, 10.0, cart).state.cartesian.q);
    CHECK(std::abs(rp - rc) < 1e-8);
  }
}
