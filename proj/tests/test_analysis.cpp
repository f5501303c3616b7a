#include <doctest.h>

#include <cmath>
#include <numbers>

#include "qsakit/analysis.hpp"
#include "qsakit/errors.hpp"
#include "qsakit/rng.hpp"

using namespace qsa;

namespace {

Trajectory scalar_traj(double dt, std::size_t n, const std::function<double(double)>& f) {
  Trajectory t;
  t.dim = 1;
  t.dt = dt;
  t.states.resize(n);
  for (std::size_t k = 0; k < n; ++k) t.states[k] = f(k * dt);
  return t;
}

MarkovChainSpec sticky_chain(bool multiplicative) {
  MarkovChainSpec s;
  s.p = Mat(2, 2);
  s.p(0, 0) = 0.9;
  s.p(0, 1) = 0.1;
  s.p(1, 0) = 0.1;
  s.p(1, 1) = 0.9;
  s.g = {-1.0, 1.0};
  if (multiplicative) s.m = {-1.0, 1.0};
  return s;
}

}  // namespace

TEST_SUITE_BEGIN("analysis");

TEST_CASE("steady state bias") {
  SUBCASE("constant error") {
    const Trajectory t = scalar_traj(0.1, 1000, [](double) { return 2.5; });
    CHECK(steady_state_bias(t, Vec{1.0}) == doctest::Approx(1.5));
  }
  SUBCASE("sinusoidal error averages to 2/pi") {
    // window [0.8 T, T] covers whole periods: T = 40 pi, omega = 1
    const double horizon = 40.0 * std::numbers::pi;
    const std::size_t n = 125664;  // dt = T/(n-1) close to 1e-3
    const double dt = horizon / static_cast<double>(n - 1);
    const Trajectory t = scalar_traj(dt, n, [](double tt) { return std::sin(tt); });
    CHECK(std::abs(steady_state_bias(t, Vec{0.0}) - 2.0 / std::numbers::pi) < 1e-3);
  }
  SUBCASE("zero trajectory at the root") {
    const Trajectory t = scalar_traj(0.1, 100, [](double) { return 0.0; });
    CHECK(steady_state_bias(t, Vec{0.0}) == doctest::Approx(0.0));
  }
  SUBCASE("window errors") {
    const Trajectory t = scalar_traj(0.1, 100, [](double) { return 0.0; });
    CHECK_THROWS_AS(steady_state_bias(t, Vec{0.0}, 0.0), WindowEmpty);
    Trajectory tiny;
    tiny.dim = 1;
    tiny.dt = 1.0;
    tiny.states = {0.0};
    CHECK_THROWS_AS(steady_state_bias(tiny, Vec{0.0}), WindowEmpty);
  }
}

TEST_CASE("empirical covariance") {
  SUBCASE("identical samples") {
    const Covariance c = empirical_covariance({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}});
    CHECK(c.sigma_hat == doctest::Approx(0.0));
  }
  SUBCASE("two scalar samples 0 and 2") {
    const Covariance c = empirical_covariance({{0.0}, {2.0}});
    CHECK(c.sigma(0, 0) == doctest::Approx(1.0));
    CHECK(c.sigma_hat == doctest::Approx(1.0));
  }
  SUBCASE("matches a two-pass oracle on a random cloud") {
    SplitMix64 rng(4);
    std::vector<Vec> cloud;
    for (int i = 0; i < 200; ++i)
      cloud.push_back({rng.uniform(-1.0, 3.0), rng.uniform(0.0, 10.0)});
    const Covariance c = empirical_covariance(cloud);
    // two-pass: subtract the mean first, then average outer products
    Vec mean(2, 0.0);
    for (const Vec& x : cloud)
      for (int i = 0; i < 2; ++i) mean[i] += x[i] / cloud.size();
    Mat ref(2, 2);
    for (const Vec& x : cloud)
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) ref(i, j) += (x[i] - mean[i]) * (x[j] - mean[j]) / cloud.size();
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(std::abs(c.sigma(i, j) - ref(i, j)) < 1e-10);
    // positive semidefinite
    const auto [l1, l2] = eig2(c.sigma);
    CHECK(l1.real() >= -1e-10);
    CHECK(l2.real() >= -1e-10);
  }
  SUBCASE("too few samples") {
    CHECK_THROWS_AS(empirical_covariance({{1.0}}), TooFewSamples);
  }
}

TEST_CASE("bias on a filtered channel") {
  Trajectory t = scalar_traj(0.1, 2000, [](double) { return 2.0; });
  Channel c;
  c.name = "theta_f2";
  c.width = 1;
  c.data.assign(t.samples(), 1.5);
  t.channels.push_back(c);
  CHECK(steady_state_bias_channel(t, "theta_f2", Vec{1.0}) == doctest::Approx(0.5));
  CHECK_THROWS_AS(steady_state_bias_channel(t, "nope", Vec{1.0}), WindowEmpty);
}

TEST_CASE("mean target bias basics") {
  const VectorField fbar = [](std::span<const double> th, std::span<double> out) {
    out[0] = -th[0] + 1.0;
  };
  const Trajectory frozen = scalar_traj(0.1, 1000, [](double) { return 1.0; });
  const MeanTargetBias mtb = mean_target_bias(frozen, fbar);
  CHECK(mtb.value[0] == doctest::Approx(0.0));
}

TEST_CASE("lyapunov exponent fit") {
  Trajectory t = scalar_traj(0.1, 20000, [](double) { return 0.0; });
  Channel c;
  c.name = "log_S_norm";
  c.width = 1;
  for (std::size_t k = 0; k < t.samples(); ++k) {
    const double tt = k * t.dt;
    c.data.push_back(-0.1 * tt + 0.01 * std::sin(tt));
  }
  t.channels.push_back(c);
  CHECK(std::abs(lyapunov_exponent(t) + 0.1) / 0.1 < 0.02);

  const Trajectory bare = scalar_traj(0.1, 100, [](double) { return 0.0; });
  CHECK_THROWS_AS(lyapunov_exponent(bare), DegenerateFit);
}

TEST_CASE("2qSGD couples trajectories near the optimum: negative exponent") {
  // Lyapunov exponent of the sensitivity flow is negative for the
  // two-measurement algorithm at small gain and probing amplitude.
  std::vector<ProbeTermSpec> terms = {
      {0, 1.0, std::log(2.0), 0.0, ProbeConvention::RawRadianSin},
      {1, 1.0, std::log(3.0), 0.0, ProbeConvention::RawRadianSin}};
  const ProbeSpec probe = ProbeSpec::sinusoids(2, terms, false);
  Mat p(2, 2);
  p(0, 0) = 2.0;
  p(0, 1) = 0.5;
  p(1, 0) = 0.5;
  p(1, 1) = 1.0;
  const std::vector<Objective> objectives = {quadratic(p, Vec{0.0, 0.0}), camel3()};
  for (const Objective& obj : objectives) {
    const FieldPtr f2 = qsgd2_field(obj, ProbingGainPolicy::constant(0.2));
    const Trajectory traj = integrate_sensitivity(*f2, GainSchedule::constant(0.05), probe,
                                                  {0.05, -0.05}, ClockState(probe.basis()), 0.05,
                                                  4000.0);
    CHECK(lyapunov_exponent(traj) < 0.0);
  }
}

TEST_CASE("pmf residual is pure discretization") {
  const double omega = 0.1, horizon = 1000.0;
  for (const LinearVariant variant : {LinearVariant::A, LinearVariant::B}) {
    const FieldPtr field = linear_example_field(variant, omega);
    const LinearClosedForms cf = linear_example_closed_forms(variant, omega);
    for (double alpha : {0.1, 0.01}) {
      const Trajectory coarse = integrate_qsa(*field, GainSchedule::constant(alpha), ProbeSpec(),
                                              {0.0}, ClockState(), 0.1, horizon);
      const Trajectory fine = integrate_qsa(*field, GainSchedule::constant(alpha), ProbeSpec(),
                                            {0.0}, ClockState(), 0.05, horizon);
      const double sup_coarse = pmf_residual(coarse, *field, cf, alpha).sup_norm;
      const double sup_fine = pmf_residual(fine, *field, cf, alpha).sup_norm;
      const double ratio = sup_coarse / sup_fine;
      CHECK(ratio >= 1.7);
      CHECK(ratio <= 2.3);
    }
  }
  // alpha = 0 degenerates to the Poisson identity check: trajectory frozen,
  // residual is only the central-difference truncation error.
  const FieldPtr field = linear_example_field(LinearVariant::A, omega);
  const LinearClosedForms cf = linear_example_closed_forms(LinearVariant::A, omega);
  const Trajectory frozen = scalar_traj(0.1, 10001, [](double) { return 0.0; });
  CHECK(pmf_residual(frozen, *field, cf, 0.0).sup_norm < 1e-4);

  Trajectory wide;
  wide.dim = 2;
  wide.dt = 0.1;
  wide.states.assign(20, 0.0);
  CHECK_THROWS_AS(pmf_residual(wide, *field, cf, 0.1), NoClosedForm);
}

TEST_CASE("slope fits") {
  std::vector<double> alphas = {1e-3, 1e-2, 1e-1, 1.0};
  SUBCASE("bias = 3 alpha") {
    std::vector<double> bias;
    for (double a : alphas) bias.push_back(3.0 * a);
    const SlopeFit f = slope_fit(alphas, bias);
    CHECK(f.slope == doctest::Approx(1.0));
    CHECK(f.r2 == doctest::Approx(1.0));
  }
  SUBCASE("bias = 0.2 alpha^2") {
    std::vector<double> bias;
    for (double a : alphas) bias.push_back(0.2 * a * a);
    CHECK(slope_fit(alphas, bias).slope == doctest::Approx(2.0));
  }
  SUBCASE("noisy slope 1.5 comes back within 0.1") {
    SplitMix64 rng(9);
    std::vector<double> a, b;
    for (int i = 0; i < 30; ++i) {
      const double alpha = std::pow(10.0, rng.uniform(-3.0, -0.5));
      a.push_back(alpha);
      b.push_back(0.7 * std::pow(alpha, 1.5) * std::exp(rng.uniform(-0.05, 0.05)));
    }
    CHECK(std::abs(slope_fit(a, b).slope - 1.5) < 0.1);
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(slope_fit(std::vector<double>{1.0, 2.0, 3.0},
                              std::vector<double>{1.0, 2.0, 3.0}),
                    NonPositive);
    CHECK_THROWS_AS(slope_fit(std::vector<double>{1.0, 2.0, 3.0, -4.0},
                              std::vector<double>{1.0, 2.0, 3.0, 4.0}),
                    NonPositive);
  }
}

TEST_CASE("markov chain spec validation") {
  MarkovChainSpec bad = sticky_chain(false);
  bad.p(0, 0) = 0.8;  // row no longer sums to one
  CHECK_THROWS_AS(bad.validate(), Reducible);

  MarkovChainSpec reducible = sticky_chain(false);
  reducible.p(0, 0) = 1.0;
  reducible.p(0, 1) = 0.0;
  reducible.p(1, 0) = 0.0;
  reducible.p(1, 1) = 1.0;
  CHECK_THROWS_AS(reducible.validate(), Reducible);

  CHECK_NOTHROW(sticky_chain(true).validate());
}

TEST_CASE("markov sa bias identity and closed form") {
  SUBCASE("closed-form stationary mean for the multiplicative sticky chain") {
    // Hand derivation for m = g = (-1, +1), flip probability 0.1:
    // E[theta] = -4 alpha exactly, so the tracking bias E[fbar] = +4 alpha.
    const MarkovChainSpec spec = sticky_chain(true);
    for (double alpha : {0.2, 0.1, 0.05, 0.02}) {
      CHECK(spec.stationary_mean_theta(alpha) == doctest::Approx(-4.0 * alpha).epsilon(1e-12));
    }
  }
  SUBCASE("monte carlo matches the identity and the oracle") {
    const MarkovChainSpec spec = sticky_chain(true);
    const MarkovBias b = markov_sa_bias(spec, 0.1, 400000, 77);
    CHECK(b.identity_gap <= 3.0 * b.se_gap);
    CHECK(std::abs(b.mean_fbar - b.closed_form_bias) <= 3.0 * b.se_fbar);
    CHECK(std::abs(b.mean_fbar - 0.4) < 0.05);
    // telescoping twin: E[fbar] = -E[Xi] up to boundary terms
    CHECK(std::abs(b.mean_fbar - b.mean_neg_xi) < 5.0 * b.se_fbar + 1e-3);
  }
  SUBCASE("additive noise has zero Upsilon and zero bias") {
    const MarkovChainSpec spec = sticky_chain(false);
    const MarkovBias b = markov_sa_bias(spec, 0.1, 200000, 5);
    CHECK(b.alpha_mean_upsilon == doctest::Approx(0.0));
    CHECK(std::abs(b.mean_fbar) <= 3.0 * b.se_fbar);
  }
  SUBCASE("iid chain is unbiased") {
    MarkovChainSpec iid = sticky_chain(true);
    iid.p(0, 0) = iid.p(0, 1) = iid.p(1, 0) = iid.p(1, 1) = 0.5;
    const MarkovBias b = markov_sa_bias(iid, 0.1, 200000, 6);
    CHECK(std::abs(b.mean_fbar) <= 3.0 * b.se_fbar);
    CHECK(b.identity_gap <= 3.0 * b.se_gap);
  }
  SUBCASE("an unstable gain is reported as divergence") {
    CHECK_THROWS_AS(markov_sa_bias(sticky_chain(true), 1.6, 5000, 1), Diverged);
  }
}

TEST_CASE("scaled-flow stability probe") {
  SUBCASE("affine flow decays for every radius") {
    const VectorField fbar = [](std::span<const double> th, std::span<double> out) {
      out[0] = -th[0] + 1.0;
    };
    const std::vector<double> radii = {10.0, 1e3, 1e6};
    const std::vector<double> norms =
        ode_at_infinity_stability(fbar, radii, 5.0, 1e-3, Vec{1.0});
    for (std::size_t i = 0; i < radii.size(); ++i)
      CHECK(norms[i] <= std::exp(-5.0) + 1.5 / radii[i]);
  }
  SUBCASE("unstable flow grows: the negative control") {
    const VectorField fbar = [](std::span<const double> th, std::span<double> out) {
      out[0] = th[0];
    };
    const std::vector<double> norms =
        ode_at_infinity_stability(fbar, {10.0, 100.0}, 5.0, 1e-3, Vec{1.0});
    for (double n : norms) CHECK(n > 10.0);
  }
  SUBCASE("radii must increase") {
    const VectorField fbar = [](std::span<const double> th, std::span<double> out) {
      out[0] = -th[0];
    };
    CHECK_THROWS_AS(ode_at_infinity_stability(fbar, {100.0, 10.0}, 1.0, 0.01, Vec{1.0}),
                    NonPositive);
  }
}

TEST_SUITE_END();
