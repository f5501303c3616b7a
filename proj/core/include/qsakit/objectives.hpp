#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>

#include "qsakit/linalg.hpp"

namespace qsa {

/// A scalar objective with optional analytic derivatives and a declared
/// evaluation box. The box feeds projection defaults in experiments.
struct Objective {
  int dim = 0;
  std::string name;
  std::function<double(std::span<const double>)> value;
  std::function<void(std::span<const double>, std::span<double>)> gradient;  // may be null
  std::function<void(std::span<const double>, Mat&)> hessian;                // may be null
  std::optional<Vec> optimizer;
  double optimum = 0.0;
  Vec domain_lo, domain_hi;

  bool has_gradient() const { return static_cast<bool>(gradient); }
  bool has_hessian() const { return static_cast<bool>(hessian); }
};

/// 20 + sum_i [theta_i^2 - 10 cos(2 pi theta_i)] on R^2, box [-5.12, 5.12]^2.
Objective rastrigin2();

/// 2 t1^2 + t1 t2 + t2^2 + t1^6/6 - 1.05 t1^4 on R^2, box [-5, 5]^2.
Objective camel3();

/// 0.5 (theta - opt)^T P (theta - opt). Throws NotSpd unless P is symmetric
/// positive definite.
Objective quadratic(Mat p, Vec theta_opt);

/// Time-varying optimizer trajectories for tracking experiments.
struct MovingTarget {
  enum class Kind { Lotus, Wave } kind = Kind::Lotus;

  // Lotus curve parameters.
  double m = 1.6;
  double h = 0.6;
  double omega0 = 2e-3;  // rad/s
  double b0 = 0.6;

  // Wave parameters: direction * g(t), g a unit triangle wave for
  // t <= switch_time and a unit square wave after.
  Vec direction = {1.0, 1.0};
  double wave_b = 3.0;
  double wave_c = 5e-3;
  /// Period convention: false (default) reads c*b as a frequency in cycles/s
  /// so the period is 1/(c*b); true takes the period literally as c/b seconds.
  bool period_literal = false;
  double switch_time = 0.0;

  double period() const;
  Vec position(double t) const;
};

Vec target_position(const MovingTarget& target, double t);

/// Obj_t(theta) = Obj(theta - theta_opt(t)); the minimizer rides the target.
struct TimeVaryingObjective {
  Objective base;
  MovingTarget target;

  double value(std::span<const double> theta, double t) const;
  Vec minimizer(double t) const { return target.position(t); }
};

/// Central-difference check of the declared gradient (and Hessian diagonal)
/// at `points` uniform samples of the domain box. Returns the worst relative
/// mismatch of the gradient.
double gradient_check(const Objective& obj, std::uint64_t seed, int points = 20,
                      double step = 1e-5);

/// Config-facing registry: "rastrigin2d", "camel3", "quadratic" (identity
/// Hessian at the origin). Throws NotSpd-unrelated Error for unknown names.
Objective objective_by_name(const std::string& name);

}  // namespace qsa
