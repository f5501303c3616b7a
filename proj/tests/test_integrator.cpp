#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qsakit/analysis.hpp"
#include "qsakit/dynamics.hpp"
#include "qsakit/errors.hpp"
#include "qsakit/integrator.hpp"
#include "qsakit/objectives.hpp"

using namespace qsa;

namespace {

FieldPtr affine_field() {  // f = -theta + 1, no probe
  return custom_field(1, 0,
                      [](std::span<const double> th, std::span<const double>, double,
                         std::span<double> out) { out[0] = -th[0] + 1.0; });
}

}  // namespace

TEST_SUITE_BEGIN("integrator");

TEST_CASE("gain schedules") {
  const GainSchedule c = GainSchedule::constant(0.3);
  CHECK(c(0.0) == 0.3);
  CHECK(c(1e6) == 0.3);

  const GainSchedule p = GainSchedule::power_law(0.2, 0.85, 2.0);
  CHECK(p(0.0) == doctest::Approx(0.2));
  double prev = p(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double a = p(i * 7.3);
    CHECK(a > 0.0);
    CHECK(a <= prev);
    prev = a;
  }

  const GainSchedule clip = GainSchedule::clipped_power_law(0.5, 0.85);
  CHECK(clip(0.0) == doctest::Approx(0.5));  // min(0.5, 1)
  CHECK(clip(99.0) == doctest::Approx(std::pow(100.0, -0.85)));
  prev = clip(0.0);
  for (int i = 1; i <= 1000; ++i) {
    const double a = clip(i * 3.1);
    CHECK(a <= prev);
    prev = a;
  }

  CHECK_THROWS_AS(GainSchedule::constant(0.0), NonPositive);
  CHECK_THROWS_AS(GainSchedule::power_law(0.1, 1.5), NonPositive);
  CHECK_THROWS_AS(GainSchedule::power_law(0.1, 0.5, 0.2), NonPositive);
}

TEST_CASE("box projection") {
  const BoxProjection box = BoxProjection::symmetric(5.12, 2);
  Vec v = {7.0, -6.0};
  box.apply(v);
  CHECK(v[0] == 5.12);
  CHECK(v[1] == -5.12);
  Vec w = v;
  box.apply(w);  // idempotent
  CHECK(w[0] == v[0]);
  CHECK(w[1] == v[1]);
  Vec interior = {0.3, -0.4};
  box.apply(interior);
  CHECK(interior[0] == 0.3);
  CHECK(interior[1] == -0.4);
  CHECK_THROWS_AS(BoxProjection::box({1.0}, {0.0}), NonPositive);
}

TEST_CASE("euler against the exponential oracle") {
  const Trajectory traj = integrate_qsa(*affine_field(), GainSchedule::constant(1.0), ProbeSpec(),
                                        {0.0}, ClockState(), 1e-3, 20.0);
  const double expected = 1.0 - std::exp(-20.0);
  CHECK(std::abs(traj.back()[0] - expected) < 1e-3);
}

TEST_CASE("one euler step matches the definition") {
  const double dt = 0.25, alpha = 0.1;
  const FieldPtr f = linear_example_field(LinearVariant::A, 0.1);
  const Trajectory traj = integrate_qsa(*f, GainSchedule::constant(alpha), ProbeSpec(), {0.4},
                                        ClockState(), dt, dt);
  Vec f0(1);
  f->eval(Vec{0.4}, {}, 0.0, f0);
  CHECK(traj.state(1)[0] == doctest::Approx(0.4 + dt * alpha * f0[0]).epsilon(1e-15));
}

TEST_CASE("the benchmark linear run stays bounded near its root") {
  const FieldPtr f = linear_example_field(LinearVariant::A, 0.1);
  const Trajectory traj = integrate_qsa(*f, GainSchedule::constant(0.01), ProbeSpec(), {0.0},
                                        ClockState(), 0.1, 2.0e4);
  CHECK(steady_state_bias(traj, Vec{1.0}) < 0.2);
  for (std::size_t k = 0; k < traj.samples(); ++k) CHECK(std::abs(traj.state(k)[0]) < 3.0);
}

TEST_CASE("guards") {
  SUBCASE("step too coarse for the probe") {
    std::vector<ProbeTermSpec> terms = {{0, 1.0, 10.0, 0.0, ProbeConvention::RawRadianSin}};
    const ProbeSpec probe = ProbeSpec::sinusoids(1, terms, false);
    const FieldPtr f = custom_field(1, 1,
                                    [](std::span<const double>, std::span<const double> psi,
                                       double, std::span<double> out) { out[0] = psi[0]; });
    CHECK_THROWS_AS(integrate_qsa(*f, GainSchedule::constant(0.1), probe, {0.0},
                                  ClockState(probe.basis()), 1.0, 10.0),
                    StepTooCoarse);
    CHECK_FALSE(step_well_resolved(*f, probe, 0.1));
    CHECK(step_well_resolved(*f, probe, 0.05));
  }
  SUBCASE("divergence is reported, not overflowed") {
    const FieldPtr f = custom_field(1, 0,
                                    [](std::span<const double> th, std::span<const double>,
                                       double, std::span<double> out) { out[0] = th[0]; });
    CHECK_THROWS_AS(integrate_qsa(*f, GainSchedule::constant(1.0), ProbeSpec(), {1.0},
                                  ClockState(), 0.5, 200.0),
                    NonFinite);
  }
}

TEST_CASE("mean flow integration") {
  const VectorField decay = [](std::span<const double> th, std::span<double> out) {
    out[0] = -th[0];
  };
  const Trajectory traj = integrate_mean_flow(decay, {1.0}, 1e-3, 5.0);
  CHECK(std::abs(traj.back()[0] - std::exp(-5.0)) < 5e-3);

  // stationary point stays put
  const VectorField affine = [](std::span<const double> th, std::span<double> out) {
    out[0] = -th[0] + 1.0;
  };
  const Trajectory fixed = integrate_mean_flow(affine, {1.0}, 0.1, 10.0);
  for (std::size_t k = 0; k < fixed.samples(); ++k) CHECK(fixed.state(k)[0] == 1.0);

  // rastrigin gradient flow from inside the convex basin converges to 0
  const Objective obj = rastrigin2();
  const VectorField grad_flow = [&obj](std::span<const double> th, std::span<double> out) {
    Vec g(2);
    obj.gradient(th, g);
    out[0] = -g[0];
    out[1] = -g[1];
  };
  const Trajectory rast = integrate_mean_flow(grad_flow, {0.1, 0.1}, 1e-4, 5.0);
  CHECK(norm2(rast.back()) < 1e-6);
}

TEST_CASE("sensitivity integration") {
  SUBCASE("constant jacobian decays at rate alpha") {
    Mat a0(1, 1);
    a0(0, 0) = -1.0;
    const FieldPtr f = general_linear_field(a0, {});
    const double alpha = 0.1, horizon = 400.0;
    const Trajectory traj = integrate_sensitivity(*f, GainSchedule::constant(alpha), ProbeSpec(),
                                                  {1.0}, ClockState(), 0.05, horizon);
    const Channel* log_norm = traj.channel("log_S_norm");
    REQUIRE(log_norm != nullptr);
    CHECK(log_norm->data.front() == doctest::Approx(0.0));  // S_0 = I
    CHECK(std::abs(log_norm->data.back() - (-alpha * horizon)) / (alpha * horizon) < 0.02);
  }
  SUBCASE("oscillating jacobian averages out") {
    // A_t = -(1 + sin wt): exact quadrature of int A ds gives
    // log S_t = alpha (-t + (cos wt - 1)/w)
    const double w = 0.5, alpha = 0.05;
    Mat a0(1, 1);
    a0(0, 0) = -1.0;
    Mat a1(1, 1);
    a1(0, 0) = -1.0;
    std::vector<ProbeTermSpec> terms = {{0, 1.0, w, 0.0, ProbeConvention::RawRadianSin}};
    const ProbeSpec probe = ProbeSpec::sinusoids(1, terms, false);
    const FieldPtr f = general_linear_field(a0, {a1});
    const double horizon = 2000.0;
    const Trajectory traj = integrate_sensitivity(*f, GainSchedule::constant(alpha), probe,
                                                  {1.0}, ClockState(probe.basis()), 0.05, horizon);
    const double lam = lyapunov_exponent(traj);
    CHECK(std::abs(lam / alpha + 1.0) < 0.05);
  }
}

TEST_CASE("scaled fields") {
  SUBCASE("affine case") {
    const VectorField f = [](std::span<const double> th, std::span<double> out) {
      out[0] = -th[0] + 1.0;
    };
    const VectorField fr = scaled_field(f, 1e6);
    Vec out(1);
    fr(Vec{2.0}, out);
    CHECK(out[0] == doctest::Approx(-2.0 + 1e-6));
  }
  SUBCASE("radial linearity of the limit") {
    const Objective obj = rastrigin2();
    const VectorField grad_flow = [&obj](std::span<const double> th, std::span<double> out) {
      Vec g(2);
      obj.gradient(th, g);
      out[0] = -g[0];
      out[1] = -g[1];
    };
    const VectorField fr = scaled_field(grad_flow, 1e6);
    Vec a(2), b(2);
    const Vec th = {0.37, -0.61};
    fr(th, a);
    for (double c : {0.5, 2.0, 10.0}) {
      const Vec scaled_theta = {c * th[0], c * th[1]};
      fr(scaled_theta, b);
      for (int i = 0; i < 2; ++i) CHECK(std::abs(b[i] - c * a[i]) < 1e-3 * c);
    }
  }
  SUBCASE("rastrigin ripples vanish at scale") {
    const Objective obj = rastrigin2();
    const VectorField grad_flow = [&obj](std::span<const double> th, std::span<double> out) {
      Vec g(2);
      obj.gradient(th, g);
      out[0] = -g[0];
      out[1] = -g[1];
    };
    const Vec th = {0.317, 0.713};
    double prev_gap = 1e18;
    for (double r : {1e2, 1e4, 1e6}) {
      Vec out(2);
      scaled_field(grad_flow, r)(th, out);
      const double gap = std::hypot(out[0] + 2.0 * th[0], out[1] + 2.0 * th[1]);
      CHECK(gap < prev_gap);
      prev_gap = gap;
      if (r == 1e6) CHECK(gap < 1e-3);
    }
  }
}

TEST_CASE("euler order: halving dt roughly halves the terminal error") {
  // reference at dt/16, smooth field
  const FieldPtr f = affine_field();
  auto terminal = [&](double dt) {
    return integrate_qsa(*f, GainSchedule::constant(1.0), ProbeSpec(), {0.0}, ClockState(), dt,
                         2.0)
        .back()[0];
  };
  const double ref = terminal(0.1 / 16.0);
  const double e1 = std::abs(terminal(0.1) - ref);
  const double e2 = std::abs(terminal(0.05) - ref);
  CHECK(e1 / e2 >= 1.7);
  CHECK(e1 / e2 <= 2.3);
}

TEST_CASE("determinism: identical configs give bit-identical trajectories") {
  const FieldPtr f = qsgd1_field(rastrigin2(), ProbingGainPolicy::constant(0.25));
  std::vector<ProbeTermSpec> terms = {{0, 2.0, 0.25, 0.3, ProbeConvention::RawRadianSin},
                                      {1, 2.0, std::exp(-2.0), 0.3, ProbeConvention::RawRadianSin}};
  const ProbeSpec probe = ProbeSpec::sinusoids(2, terms);
  auto run = [&] {
    return integrate_qsa(*f, GainSchedule::clipped_power_law(0.5, 0.85), probe, {1.0, -1.0},
                         ClockState(probe.basis()), 1.0, 5000.0,
                         BoxProjection::symmetric(5.12, 2));
  };
  const Trajectory a = run();
  const Trajectory b = run();
  REQUIRE(a.states.size() == b.states.size());
  for (std::size_t i = 0; i < a.states.size(); ++i) CHECK(a.states[i] == b.states[i]);
}

TEST_CASE("ultimate boundedness from small and huge initial conditions") {
  // enters the ball and never leaves again: the last sample outside must
  // come well before the end of the run
  const auto enters_and_stays = [](const Trajectory& traj, auto inside) {
    std::ptrdiff_t last_outside = -1;
    for (std::size_t k = 0; k < traj.samples(); ++k)
      if (!inside(traj.state(k))) last_outside = static_cast<std::ptrdiff_t>(k);
    return last_outside + 1 < static_cast<std::ptrdiff_t>(traj.samples() / 2);
  };
  SUBCASE("linear example") {
    const FieldPtr f = linear_example_field(LinearVariant::A, 0.1);
    for (double th0 : {1.0, 1e2, 1e10}) {
      const Trajectory traj = integrate_qsa(*f, GainSchedule::constant(0.01), ProbeSpec(), {th0},
                                            ClockState(), 0.1, 12000.0);
      CHECK(enters_and_stays(
          traj, [](std::span<const double> th) { return std::abs(th[0] - 1.0) <= 2.0; }));
    }
  }
  SUBCASE("Lipschitz qSGD on rastrigin") {
    const FieldPtr f =
        qsgd1_field(rastrigin2(), ProbingGainPolicy::prior_scaled(0.6, Vec{0.0, 0.0}));
    std::vector<ProbeTermSpec> terms = {{0, 2.0, 0.25, 0.0, ProbeConvention::RawRadianSin},
                                        {1, 2.0, std::exp(-2.0), 0.0,
                                         ProbeConvention::RawRadianSin}};
    const ProbeSpec probe = ProbeSpec::sinusoids(2, terms);
    for (double scale : {1.0, 1e2, 1e10}) {
      IntegrateOptions opt;
      opt.divergence_norm = 1e13;
      const Trajectory traj =
          integrate_qsa(*f, GainSchedule::constant(7e-4), probe, {scale, scale * 0.5},
                        ClockState(probe.basis()), 1.0, 4.0e4, BoxProjection::none(), opt);
      CHECK(enters_and_stays(traj,
                             [](std::span<const double> th) { return norm_inf(th) <= 10.0; }));
    }
  }
}

TEST_CASE("solidarity between the time-scaled run and the mean flow") {
  const FieldPtr f = linear_example_field(LinearVariant::A, 2.0);
  const VectorField fbar = [](std::span<const double> th, std::span<double> out) {
    out[0] = -th[0] + 1.0;
  };
  SUBCASE("gap shrinks with alpha") {
    const SolidarityResult res =
        solidarity_gap(*f, ProbeSpec(), fbar, {0.0}, 10.0, {1.0, 1e-2, 1e-4}, 1e-3);
    REQUIRE(res.gaps.size() == 3);
    CHECK(res.gaps[1] < res.gaps[0]);
    CHECK(res.gaps[2] < res.gaps[1]);
    CHECK(res.gaps[1] <= 0.1 * res.gaps[0]);
  }
  SUBCASE("probe-independent fields have no gap on the shared grid") {
    const SolidarityResult res =
        solidarity_gap(*affine_field(), ProbeSpec(), fbar, {0.3}, 5.0, {0.5, 0.01}, 1e-2);
    for (double g : res.gaps) CHECK(g < 1e-12);
  }
}

TEST_CASE("trajectory csv export") {
  const Trajectory traj = integrate_qsa(*affine_field(), GainSchedule::constant(1.0), ProbeSpec(),
                                        {0.0}, ClockState(), 0.5, 1.0);
  std::ostringstream os;
  traj.write_csv(os);
  const std::string csv = os.str();
  CHECK(csv.rfind("t,theta_0\n", 0) == 0);
  CHECK(csv.find("0.5") != std::string::npos);
}

TEST_CASE("opt-in channels record the probe, field and gain") {
  std::vector<ProbeTermSpec> terms = {{0, 2.0, 0.3, 0.0, ProbeConvention::RawRadianSin}};
  const ProbeSpec probe = ProbeSpec::sinusoids(1, terms, false);
  const FieldPtr f = custom_field(1, 1,
                                  [](std::span<const double> th, std::span<const double> psi,
                                     double, std::span<double> out) {
                                    out[0] = -th[0] + psi[0];
                                  });
  IntegrateOptions opt;
  opt.record_probe = true;
  opt.record_field = true;
  opt.record_gain = true;
  opt.record_stride = 2;
  const GainSchedule gain = GainSchedule::power_law(0.5, 0.6);
  const Trajectory traj =
      integrate_qsa(*f, gain, probe, {0.2}, ClockState(probe.basis()), 0.25, 10.0,
                    BoxProjection::none(), opt);
  const Channel* cp = traj.channel("psi");
  const Channel* cf = traj.channel("field");
  const Channel* cg = traj.channel("gain");
  REQUIRE(cp != nullptr);
  REQUIRE(cf != nullptr);
  REQUIRE(cg != nullptr);
  CHECK(traj.dt == doctest::Approx(0.5));  // stride doubles the recorded step
  CHECK(cp->data.size() == traj.samples());
  for (std::size_t k = 0; k < traj.samples(); ++k) {
    const double t = traj.time(k);
    CHECK(cp->data[k] == doctest::Approx(2.0 * std::sin(0.3 * t)).epsilon(1e-9));
    CHECK(cf->data[k] ==
          doctest::Approx(-traj.state(k)[0] + cp->data[k]).epsilon(1e-12));
    CHECK(cg->data[k] == doctest::Approx(gain(t)).epsilon(1e-12));
  }

  // channels appear in the CSV next to the state
  std::ostringstream os;
  traj.write_csv(os);
  CHECK(os.str().rfind("t,theta_0,psi,field,gain\n", 0) == 0);
}

TEST_SUITE_END();
