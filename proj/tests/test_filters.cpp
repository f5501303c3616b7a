#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qsakit/errors.hpp"
#include "qsakit/filters.hpp"
#include "qsakit/integrator.hpp"

using namespace qsa;

namespace {

Trajectory make_traj(double dt, std::size_t n, const std::function<double(double)>& f) {
  Trajectory t;
  t.dim = 1;
  t.dt = dt;
  t.states.resize(n);
  for (std::size_t k = 0; k < n; ++k) t.states[k] = f(k * dt);
  return t;
}

double channel_amplitude_tail(const Trajectory& t, const std::string& name) {
  const Channel* c = t.channel(name);
  double amp = 0.0;
  for (std::size_t k = t.samples() / 2; k < t.samples(); ++k)
    amp = std::max(amp, std::abs(c->data[k]));
  return amp;
}

}  // namespace

TEST_SUITE_BEGIN("filters");

TEST_CASE("dc behavior") {
  SUBCASE("constant input from matching state is a fixed point") {
    for (double gamma : {0.01, 0.1, 0.5}) {
      for (double zeta : {0.3, 0.8, 1.0}) {
        FirstOrderFilter f1(gamma);
        SecondOrderFilter f2(gamma, zeta);
        f1.reset(3.0);
        f2.reset(3.0);
        for (int k = 0; k < 1000; ++k) {
          CHECK(std::abs(f1.step(3.0, 0.5) - 3.0) < 1e-9);
          CHECK(std::abs(f2.step(3.0, 0.5) - 3.0) < 1e-9);
        }
      }
    }
  }
  SUBCASE("step response settles to the input") {
    const double gamma = 0.05, zeta = 0.8, dt = 0.1, c = 2.0;
    SecondOrderFilter f(gamma, zeta);
    const double settle = 40.0 / (zeta * gamma);
    double y = 0.0;
    for (double t = 0.0; t < settle; t += dt) y = f.step(c, dt);
    CHECK(std::abs(y - c) < 1e-6 * std::abs(c));
  }
  SUBCASE("bandwidth rule gamma = eta alpha") {
    const FilterSpec spec = FilterSpec::second(5.0 * 0.01, 0.8);
    CHECK(spec.gamma == doctest::Approx(0.05));
  }
}

TEST_CASE("step too coarse guard") {
  SecondOrderFilter f(1.0, 0.8);
  CHECK_THROWS_AS(f.step(1.0, 1.0), StepTooCoarse);
}

TEST_CASE("trajectory filtering") {
  SUBCASE("zero in, zero out") {
    const Trajectory z = make_traj(0.1, 500, [](double) { return 0.0; });
    const Trajectory out = filter_trajectory(FilterSpec::second(0.1, 0.8), z, "_f2");
    const Channel* c = out.channel("theta_f2");
    REQUIRE(c != nullptr);
    for (double v : c->data) CHECK(v == 0.0);
  }
  SUBCASE("unit step overshoot obeys the second-order bound") {
    // zero-state response to a unit step
    const double zeta = 0.8, gamma = 0.1, dt = 0.05;
    const Trajectory step = make_traj(dt, 20000, [](double) { return 1.0; });
    const Trajectory out =
        filter_trajectory(FilterSpec::second(gamma, zeta, FilterSpec::Init::Zero), step, "_f2");
    const Channel* c = out.channel("theta_f2");
    double peak = 0.0;
    for (double v : c->data) peak = std::max(peak, v);
    const double bound = 1.0 + std::exp(-std::numbers::pi * zeta / std::sqrt(1.0 - zeta * zeta));
    CHECK(peak <= bound + 1e-3);
    CHECK(peak > 1.0);  // underdamped: some overshoot exists

    // critically damped: monotone, bounded by the input
    const Trajectory out1 =
        filter_trajectory(FilterSpec::second(gamma, 1.0, FilterSpec::Init::Zero), step, "_f2");
    const Channel* c1 = out1.channel("theta_f2");
    double prev = -1.0;
    for (double v : c1->data) {
      CHECK(v >= prev - 1e-12);
      CHECK(v <= 1.0 + 1e-9);
      prev = v;
    }
  }
  SUBCASE("tone attenuation matches the frequency response oracle") {
    const double gamma = 0.1, omega = 2.0, dt = 0.02;  // omega = 20 gamma
    const Trajectory tone = make_traj(dt, 60000, [&](double t) { return std::sin(omega * t); });
    const Trajectory out =
        filter_trajectory(FilterSpec::second(gamma, 0.8, FilterSpec::Init::Zero), tone, "_f2");
    const double amp = channel_amplitude_tail(out, "theta_f2");
    const double h2 = gamma * gamma /
                      std::sqrt(std::pow(gamma * gamma - omega * omega, 2) +
                                std::pow(2.0 * 0.8 * gamma * omega, 2));
    CHECK(amp <= 2.0 * h2);
    CHECK(amp >= 0.5 * h2);
    CHECK(amp >= 0.5 * (gamma / omega) * (gamma / omega) / 2.0);
  }
  SUBCASE("second order beats first order far above the bandwidth") {
    const double gamma = 0.01, omega = 1.0, dt = 0.1;  // tone at 100 gamma
    const Trajectory tone = make_traj(dt, 40000, [&](double t) { return std::sin(omega * t); });
    const Trajectory o1 =
        filter_trajectory(FilterSpec::first(gamma, FilterSpec::Init::Zero), tone, "_f1");
    const Trajectory o2 =
        filter_trajectory(FilterSpec::second(gamma, 0.8, FilterSpec::Init::Zero), tone, "_f2");
    CHECK(channel_amplitude_tail(o2, "theta_f2") < channel_amplitude_tail(o1, "theta_f1"));
  }
  SUBCASE("filtering is linear") {
    const double dt = 0.1;
    const auto u = [](double t) { return std::sin(0.3 * t) + 0.2; };
    const auto v = [](double t) { return std::cos(0.7 * t); };
    const double a = 2.0, b = -1.3;
    const Trajectory tu = make_traj(dt, 5000, u);
    const Trajectory tv = make_traj(dt, 5000, v);
    const Trajectory tw = make_traj(dt, 5000, [&](double t) { return a * u(t) + b * v(t); });
    const FilterSpec spec = FilterSpec::second(0.2, 0.8, FilterSpec::Init::Zero);
    const Trajectory fu = filter_trajectory(spec, tu, "_f");
    const Trajectory fv = filter_trajectory(spec, tv, "_f");
    const Trajectory fw = filter_trajectory(spec, tw, "_f");
    for (std::size_t k = 0; k < tw.samples(); ++k) {
      const double lin = a * fu.channel("theta_f")->data[k] + b * fv.channel("theta_f")->data[k];
      CHECK(std::abs(fw.channel("theta_f")->data[k] - lin) < 1e-10);
    }
  }
}

TEST_CASE("polyak-ruppert averaging") {
  SUBCASE("constant trajectory") {
    const Trajectory c = make_traj(0.5, 201, [](double) { return 4.2; });
    const PrAverage pr = pr_average(c, 5.0);
    CHECK(pr.value[0] == doctest::Approx(4.2));
  }
  SUBCASE("window bookkeeping: kappa = 5, T = 100 averages [80, 100]") {
    // theta_t = 1 on [80, 100], 0 before: average = 1 exactly when T0 = 80
    const Trajectory t = make_traj(0.1, 1001, [](double tt) { return tt >= 80.0 ? 1.0 : 0.0; });
    const PrAverage pr = pr_average(t, 5.0);
    CHECK(pr.value[0] == doctest::Approx(1.0).epsilon(1e-2));
  }
  SUBCASE("linear ramp, kappa = 2, T = 10") {
    const Trajectory ramp = make_traj(0.01, 1001, [](double tt) { return tt; });
    const PrAverage pr = pr_average(ramp, 2.0);
    CHECK(pr.value[0] == doctest::Approx(7.5).epsilon(1e-9));
  }
  SUBCASE("shrinkage on constant plus tone") {
    const double omega = 0.5, c = 3.0, horizon = 400.0, kappa = 5.0;
    const Trajectory t =
        make_traj(0.05, 8001, [&](double tt) { return c + std::sin(omega * tt); });
    const PrAverage pr = pr_average(t, kappa);
    const double window = horizon / kappa;
    CHECK(std::abs(pr.value[0] - c) <= 2.0 / (omega * window) + 1e-3);
  }
  SUBCASE("window errors") {
    Trajectory tiny;
    tiny.dim = 1;
    tiny.dt = 0.1;
    tiny.states = {1.0};
    CHECK_THROWS_AS(pr_average(tiny, 5.0), WindowEmpty);
    const Trajectory ok = make_traj(0.1, 100, [](double) { return 0.0; });
    CHECK_THROWS_AS(pr_average(ok, 0.5), NonPositive);
  }
}

TEST_SUITE_END();
