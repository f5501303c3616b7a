#include "qsakit/objectives.hpp"

#include <cmath>
#include <numbers>

#include "qsakit/errors.hpp"
#include "qsakit/rng.hpp"

namespace qsa {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

Objective rastrigin2() {
  Objective obj;
  obj.dim = 2;
  obj.name = "rastrigin2d";
  obj.value = [](std::span<const double> th) {
    double s = 20.0;
    for (int i = 0; i < 2; ++i) s += th[i] * th[i] - 10.0 * std::cos(kTwoPi * th[i]);
    return s;
  };
  obj.gradient = [](std::span<const double> th, std::span<double> g) {
    for (int i = 0; i < 2; ++i) g[i] = 2.0 * th[i] + 10.0 * kTwoPi * std::sin(kTwoPi * th[i]);
  };
  obj.hessian = [](std::span<const double> th, Mat& h) {
    h = Mat(2, 2);
    for (int i = 0; i < 2; ++i) h(i, i) = 2.0 + 10.0 * kTwoPi * kTwoPi * std::cos(kTwoPi * th[i]);
  };
  obj.optimizer = Vec{0.0, 0.0};
  obj.optimum = 0.0;
  obj.domain_lo = {-5.12, -5.12};
  obj.domain_hi = {5.12, 5.12};
  return obj;
}

Objective camel3() {
  Objective obj;
  obj.dim = 2;
  obj.name = "camel3";
  obj.value = [](std::span<const double> th) {
    const double x = th[0], y = th[1];
    const double x2 = x * x;
    return 2.0 * x2 + x * y + y * y + x2 * x2 * x2 / 6.0 - 1.05 * x2 * x2;
  };
  obj.gradient = [](std::span<const double> th, std::span<double> g) {
    const double x = th[0], y = th[1];
    g[0] = 4.0 * x + y + std::pow(x, 5) - 4.2 * std::pow(x, 3);
    g[1] = x + 2.0 * y;
  };
  obj.hessian = [](std::span<const double> th, Mat& h) {
    const double x = th[0];
    h = Mat(2, 2);
    h(0, 0) = 4.0 + 5.0 * std::pow(x, 4) - 12.6 * x * x;
    h(0, 1) = 1.0;
    h(1, 0) = 1.0;
    h(1, 1) = 2.0;
  };
  obj.optimizer = Vec{0.0, 0.0};
  obj.optimum = 0.0;
  obj.domain_lo = {-5.0, -5.0};
  obj.domain_hi = {5.0, 5.0};
  return obj;
}

Objective quadratic(Mat p, Vec theta_opt) {
  const int d = p.rows();
  if (p.cols() != d || static_cast<int>(theta_opt.size()) != d)
    throw DimensionMismatch("quadratic: shape mismatch");
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < i; ++j)
      if (std::abs(p(i, j) - p(j, i)) > 1e-12 * (1.0 + std::abs(p(i, j))))
        throw NotSpd("quadratic: P is not symmetric");
  if (!cholesky(p)) throw NotSpd("quadratic: P is not positive definite");

  Objective obj;
  obj.dim = d;
  obj.name = "quadratic";
  obj.value = [p, theta_opt, d](std::span<const double> th) {
    double s = 0.0;
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) s += (th[i] - theta_opt[i]) * p(i, j) * (th[j] - theta_opt[j]);
    return 0.5 * s;
  };
  obj.gradient = [p, theta_opt, d](std::span<const double> th, std::span<double> g) {
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) s += p(i, j) * (th[j] - theta_opt[j]);
      g[i] = s;
    }
  };
  obj.hessian = [p](std::span<const double>, Mat& h) { h = p; };
  obj.optimizer = theta_opt;
  obj.optimum = 0.0;
  obj.domain_lo.assign(d, -10.0);
  obj.domain_hi.assign(d, 10.0);
  return obj;
}

double MovingTarget::period() const {
  return period_literal ? wave_c / wave_b : 1.0 / (wave_c * wave_b);
}

namespace {

// Unit triangle wave: 0 at x=0, peak 1 at x=0.5, period 1, range [0, 1].
double triangle01(double x) {
  const double f = x - std::floor(x);
  return f < 0.5 ? 2.0 * f : 2.0 * (1.0 - f);
}

// Unit square wave: 1 on [0, 0.5), 0 on [0.5, 1), period 1.
double square01(double x) {
  const double f = x - std::floor(x);
  return f < 0.5 ? 1.0 : 0.0;
}

}  // namespace

Vec MovingTarget::position(double t) const {
  if (kind == Kind::Lotus) {
    const double a = omega0 * t;
    const double b = m * omega0 * t / b0;
    return {m * std::cos(a) - h * std::cos(b), m * std::sin(a) - h * std::sin(b)};
  }
  const double t0 = period();
  const double g = (switch_time > 0.0 && t > switch_time) ? square01(t / t0) : triangle01(t / t0);
  Vec out(direction.size());
  for (std::size_t i = 0; i < direction.size(); ++i) out[i] = direction[i] * g;
  return out;
}

Vec target_position(const MovingTarget& target, double t) { return target.position(t); }

double TimeVaryingObjective::value(std::span<const double> theta, double t) const {
  const Vec opt = target.position(t);
  Vec shifted(theta.size());
  for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] = theta[i] - opt[i];
  return base.value(shifted);
}

Objective objective_by_name(const std::string& name) {
  if (name == "rastrigin2d") return rastrigin2();
  if (name == "camel3") return camel3();
  if (name == "quadratic") return quadratic(Mat::identity(2), Vec{0.0, 0.0});
  throw Error("unknown objective: " + name);
}

double gradient_check(const Objective& obj, std::uint64_t seed, int points, double step) {
  if (!obj.has_gradient()) return 0.0;
  SplitMix64 rng(seed);
  double worst = 0.0;
  Vec th(obj.dim), g(obj.dim), probe(obj.dim);
  for (int p = 0; p < points; ++p) {
    for (int i = 0; i < obj.dim; ++i) {
      const double lo = obj.domain_lo.empty() ? -1.0 : obj.domain_lo[i];
      const double hi = obj.domain_hi.empty() ? 1.0 : obj.domain_hi[i];
      th[i] = rng.uniform(lo, hi);
    }
    obj.gradient(th, g);
    for (int i = 0; i < obj.dim; ++i) {
      probe = th;
      probe[i] = th[i] + step;
      const double up = obj.value(probe);
      probe[i] = th[i] - step;
      const double dn = obj.value(probe);
      const double fd = (up - dn) / (2.0 * step);
      const double rel = std::abs(fd - g[i]) / (1.0 + std::abs(g[i]));
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

}  // namespace qsa
