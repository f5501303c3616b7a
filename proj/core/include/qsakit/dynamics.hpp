#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>

#include "qsakit/linalg.hpp"
#include "qsakit/objectives.hpp"
#include "qsakit/probing.hpp"
#include "qsakit/rng.hpp"

namespace qsa {

/// State-dependent probing amplitude eps(theta).
///   Constant:        eps
///   ObjectiveScaled: eps * sqrt(1 + Obj(theta) - obj_floor)
///   PriorScaled:     eps * sqrt(1 + ||theta - center||^2 / sigma_p^2)
/// All variants evaluate to >= eps; PriorScaled equals eps exactly at the
/// center.
struct ProbingGainPolicy {
  enum class Kind { Constant, ObjectiveScaled, PriorScaled };
  Kind kind = Kind::Constant;
  double eps = 1.0;
  double obj_floor = 0.0;
  Vec center;
  double sigma_p = 1.0;

  static ProbingGainPolicy constant(double eps);
  static ProbingGainPolicy objective_scaled(double eps, double obj_floor);
  static ProbingGainPolicy prior_scaled(double eps, Vec center, double sigma_p = 1.0);
};

/// Evaluates the policy. Throws NegativeUnderRoot when the objective-scaled
/// variant sees Obj(theta) below the declared floor.
double probing_gain(const ProbingGainPolicy& policy, const Objective& obj,
                    std::span<const double> theta);

/// A QSA vector field f(theta, psi, t). `t` is probe time: fields with
/// direct time dependence (the linear benchmark examples, filtered probes in
/// ESC) read it; probe-driven fields ignore it.
class Field {
 public:
  virtual ~Field() = default;
  virtual int dim() const = 0;
  virtual int probe_dim() const = 0;
  virtual void eval(std::span<const double> theta, std::span<const double> psi, double t,
                    std::span<double> out) const = 0;
  virtual bool has_jacobian() const { return false; }
  virtual void jacobian(std::span<const double> theta, std::span<const double> psi, double t,
                        Mat& out) const;
  /// Fastest direct time dependence (rad/s); used for step-size checks.
  virtual double intrinsic_max_omega() const { return 0.0; }
};

using FieldPtr = std::shared_ptr<const Field>;

/// One-measurement quasi-stochastic gradient descent:
///   f = -(1/eps(theta)) * psi * Obj(theta + eps(theta) psi).
/// With `target` set, Obj is evaluated at theta - theta_opt(t).
FieldPtr qsgd1_field(Objective obj, ProbingGainPolicy policy,
                     std::optional<MovingTarget> target = std::nullopt);

/// Two-measurement variant:
///   f = -(1/(2 eps)) * psi * [Obj(theta + eps psi) - Obj(theta - eps psi)].
FieldPtr qsgd2_field(Objective obj, ProbingGainPolicy policy,
                     std::optional<MovingTarget> target = std::nullopt);

enum class LinearVariant { A, B };

/// Scalar benchmark ODE fields (the gain stays in the integrator):
///   A: -(1 + sin wt) theta + 2 sin wt + 1
///   B: -(1 + sin wt) theta + 2 cos wt + 1
/// Both share the mean field -theta + 1.
FieldPtr linear_example_field(LinearVariant variant, double omega);

/// Everything about the linear examples that is known in closed form:
/// f_hat(theta, t) = fhat_const(t) + theta * fhat_slope(t), the steady-state
/// multiplicative-noise mean Upsilon_bar, and Ybar* = [A*]^{-1} Upsilon_bar.
struct LinearClosedForms {
  LinearVariant variant = LinearVariant::A;
  double omega = 0.0;
  TrigPolynomial fhat_const;
  TrigPolynomial fhat_slope;  // d f_hat / d theta, equal for both variants
  double upsilon_bar = 0.0;
  double ybar_star = 0.0;
  // Mean field f_bar(theta) = mean_slope * theta + mean_const.
  double mean_slope = -1.0;
  double mean_const = 1.0;

  double fhat(double theta, double t) const { return fhat_const(t) + theta * fhat_slope(t); }
  double fbar(double theta) const { return mean_slope * theta + mean_const; }
};

LinearClosedForms linear_example_closed_forms(LinearVariant variant, double omega);

/// Linear QSA field f = (A0 + sum_k psi_k * Ak) theta, for quasi-periodic
/// linear systems and Lyapunov-exponent studies.
FieldPtr general_linear_field(Mat a0, std::vector<Mat> a_probe);

/// A field from a plain callable (theta, psi, t) -> out.
FieldPtr custom_field(int dim, int probe_dim,
                      std::function<void(std::span<const double>, std::span<const double>, double,
                                         std::span<double>)> fn,
                      double intrinsic_max_omega = 0.0);

/// Extremum-seeking control pieces: first-order low pass on theta with rate
/// sigma around theta_ctr, order-q high pass (F, G, H, J) applied to both the
/// normalized observations and the probe, and the loop gain alpha baked into
/// the assembled field (integrate it with unit gain).
struct EscSpec {
  double sigma = 0.0;
  double alpha = 1.0;
  Vec theta_ctr;  // empty = origin
  Mat f;          // q x q, Hurwitz when q >= 1
  Vec g, h;       // q
  double j = 1.0;
  Objective objective;
  ProbingGainPolicy policy;
  ProbeSpec probe;
};

/// Builds the augmented-state ESC field over X = (theta, Z), dim d + q.
/// The filtered probe is the zero-initial-state response of (F,G,H,J) to each
/// probe coordinate, evaluated in closed form. Throws DimensionMismatch and
/// NonPositive (invariant violations).
FieldPtr esc_assemble(const EscSpec& spec);

/// The demodulation signal of the assembled loop: each probe coordinate
/// passed through the (F,G,H,J) high pass from zero initial filter state
/// (steady sinusoidal response plus the e^{Ft} transient), evaluated at t.
Vec esc_filtered_probe(const EscSpec& spec, double t);

/// Normalized observation Y^n(theta, psi) = Obj(theta + eps(theta) psi) / eps(theta).
double normalized_observation(const Objective& obj, const ProbingGainPolicy& policy,
                              std::span<const double> theta, std::span<const double> psi);

/// Spall's simultaneous-perturbation algorithms (the stochastic baseline).
struct SpsaSpec {
  Objective objective;
  double eps = 1.0;
  int order = 1;         // 1 -> 1SPSA, 2 -> 2SPSA
  double support = 1.0;  // perturbations are +-support per coordinate
};

/// theta_{n+1} = theta_n + alpha * f(theta_n, xi) with xi ~ two-point
/// symmetric, drawn from `rng`.
Vec spsa_step(const SpsaSpec& spec, std::span<const double> theta, double alpha, SplitMix64& rng);

/// Trapezoidal estimate of the mean vector field (1/T) int_0^T f(theta, psi_t) dt
/// plus the half-horizon convergence diagnostic |est_T - est_{T/2}|.
struct MeanFieldEstimate {
  Vec value;
  double half_horizon_gap = 0.0;
};

MeanFieldEstimate mean_field_oracle(const Field& field, const ProbeSpec& probe,
                                    std::span<const double> theta, double t_horizon, double dt);

/// Jacobian A(theta, psi) = d f / d theta: analytic when the field provides
/// one, central differences (step 1e-6) otherwise. With `box` given, throws
/// NonDifferentiable if theta sits on the projection boundary.
Mat field_jacobian(const Field& field, std::span<const double> theta, std::span<const double> psi,
                   double t, const Vec* box_lo = nullptr, const Vec* box_hi = nullptr);

}  // namespace qsa
