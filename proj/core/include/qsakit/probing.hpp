#pragma once

#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsakit/linalg.hpp"

namespace qsa {

/// Integer pair (a, b) with a > b >= 1; the frequency it generates is ln(a/b).
struct LogRatio {
  long long a = 2;
  long long b = 1;
};

/// A set of strictly positive, pairwise distinct angular frequencies (rad/s)
/// driving the probing signal. Frequencies built from integer log-ratios are
/// rationally independent by construction; raw frequencies go through a
/// brute-force small-integer-combination screen instead.
class FrequencyBasis {
 public:
  FrequencyBasis() = default;

  /// omega_i = ln(a_i / b_i). Throws NonPositive, DuplicateRatio,
  /// DependentFrequencies.
  static FrequencyBasis log_ratios(const std::vector<LogRatio>& pairs);

  /// omega_i = n_i * omega1 with n strictly increasing integers > 1
  /// (the leading multiplier 1 is implied). Throws NonPositive,
  /// NonIncreasingMultipliers. No independence screen: harmonics are the
  /// point of this construction.
  static FrequencyBasis periodic(double omega1, const std::vector<long long>& multipliers);

  /// Arbitrary positive distinct frequencies; `screen` applies the
  /// integer-combination check.
  static FrequencyBasis raw(std::vector<double> omegas, bool screen = true);

  std::size_t size() const { return omegas_.size(); }
  double omega(std::size_t i) const { return omegas_[i]; }
  const std::vector<double>& omegas() const { return omegas_; }
  const std::optional<LogRatio>& provenance(std::size_t i) const { return provenance_[i]; }

  double min_omega() const;
  double max_omega() const;

  bool operator==(const FrequencyBasis& o) const { return omegas_ == o.omegas_; }

  /// Depth of the rational-independence screen: integer combinations with
  /// 0 < max|n_i| <= depth must not vanish within `tolerance`.
  static constexpr int kScreenDepth = 6;
  static constexpr double kScreenTolerance = 1e-9;

 private:
  std::vector<double> omegas_;
  std::vector<std::optional<LogRatio>> provenance_;
};

/// Phases of the K unit phasors Phi_i = exp(2*pi*j*phase_i), stored as real
/// residues in [0, 1) cycles so the unit circle is never left, no matter how
/// many steps are taken.
class ClockState {
 public:
  ClockState() = default;
  explicit ClockState(FrequencyBasis basis);
  ClockState(FrequencyBasis basis, std::vector<double> phases_cycles);

  /// phase_i <- (phase_i + omega_i * dt / (2*pi)) mod 1. Requires dt >= 0.
  void advance(double dt);

  std::size_t size() const { return phases_.size(); }
  double phase(std::size_t i) const { return phases_[i]; }
  std::complex<double> phasor(std::size_t i) const;
  const FrequencyBasis& basis() const { return basis_; }

 private:
  FrequencyBasis basis_;
  std::vector<double> phases_;
};

/// Pure-function variant of ClockState::advance.
ClockState advance_clock(ClockState state, double dt);

/// One sinusoid amplitude*cos(omega*t + phase) in canonical form:
/// omega >= 0 rad/s, phase in [0, pi) (sign folded into the amplitude),
/// and omega == 0 terms reduced to plain constants.
struct TrigTerm {
  double amplitude = 0.0;
  double omega = 0.0;
  double phase = 0.0;
};

/// A finite sum of sinusoids. This is the function class every closed-form
/// object in the library lives in: probing signals, Poisson solutions,
/// steady-state covariances of probes, and their products.
class TrigPolynomial {
 public:
  TrigPolynomial() = default;
  explicit TrigPolynomial(std::vector<TrigTerm> terms);

  static TrigPolynomial constant(double c);
  /// amp*cos(omega*t + phase), radians.
  static TrigPolynomial cosine(double amp, double omega, double phase = 0.0);
  /// amp*sin(omega*t + phase), radians.
  static TrigPolynomial sine(double amp, double omega, double phase = 0.0);
  /// amp*cos(2*pi*(omega*t + phase)): the cycles/s convention.
  static TrigPolynomial cycles(double amp, double omega_cycles, double phase_cycles = 0.0);

  double operator()(double t) const;

  /// Steady-state mean: the zero-frequency content.
  double mean() const;
  /// Sum of |amplitudes|; cheap upper bound for the sup norm.
  double sup_norm_bound() const;
  double max_omega() const;
  bool empty() const { return terms_.empty(); }
  const std::vector<TrigTerm>& terms() const { return terms_; }

  TrigPolynomial& operator+=(const TrigPolynomial& o);
  TrigPolynomial operator*(double s) const;
  TrigPolynomial derivative() const;

  /// Product-to-sum expansion; the result is again a finite trig polynomial.
  static TrigPolynomial product(const TrigPolynomial& p, const TrigPolynomial& q);

 private:
  void push_term(TrigTerm t);
  void canonicalize();
  std::vector<TrigTerm> terms_;
};

TrigPolynomial operator+(TrigPolynomial a, const TrigPolynomial& b);

/// Solution of d/dt h_hat(Phi_t) = -(h(Phi_t) - h_bar) for a trig-polynomial
/// forcing h. Zero-frequency forcing routes into `mean`; the solution itself
/// has zero mean.
struct PoissonSolution {
  double mean = 0.0;
  TrigPolynomial solution;
};

PoissonSolution poisson_solve(const TrigPolynomial& forcing);

/// Input conventions for probe construction.
///   TwoPiCycles: amp*cos(2*pi*(omega*t + phase)), omega in cycles/s.
///   RawRadianSin: amp*sin(omega*t + phase), omega in rad/s.
enum class ProbeConvention { TwoPiCycles, RawRadianSin };

/// One probe term in the experiment-config serialization.
struct ProbeTermSpec {
  int dim = 0;
  double amplitude = 0.0;
  double omega = 0.0;
  double phase = 0.0;
  ProbeConvention convention = ProbeConvention::TwoPiCycles;
};

/// The m-dimensional deterministic probing signal: per coordinate, a sum of
/// sinusoids whose frequencies all live in one shared FrequencyBasis, so the
/// signal can be evaluated either from absolute time or from the clock
/// phases alone.
class ProbeSpec {
 public:
  ProbeSpec() = default;
  ProbeSpec(FrequencyBasis basis, int dimension);

  /// Builds basis and terms from serialized sinusoids. Distinct frequencies
  /// (after conversion to rad/s) become the basis; `screen` forwards to
  /// FrequencyBasis::raw.
  static ProbeSpec sinusoids(int dimension, const std::vector<ProbeTermSpec>& terms,
                             bool screen = true);

  /// Adds amp*cos(omega_k t + phase) to a coordinate, omega_k = basis frequency k.
  void add_term(int coordinate, double amplitude, std::size_t basis_index, double phase_rad);
  /// Adds a constant offset to a coordinate.
  void add_constant(int coordinate, double value);

  int dimension() const { return dimension_; }
  const FrequencyBasis& basis() const { return basis_; }

  void value(double t, std::span<double> out) const;
  void value(const ClockState& clock, std::span<double> out) const;
  Vec value(double t) const;
  Vec value(const ClockState& clock) const;

  /// Coordinate materialized as a TrigPolynomial (for closed-form work).
  TrigPolynomial coordinate(int i) const;

  double max_omega() const;
  bool has_zero_frequency_terms() const;

  /// Serialization atoms, canonical radian/cos form.
  std::vector<ProbeTermSpec> terms() const;

 private:
  struct Term {
    double amplitude;
    int freq_index;  // -1 marks a constant
    double phase;
  };
  FrequencyBasis basis_;
  int dimension_ = 0;
  std::vector<std::vector<Term>> coords_;
};

/// probe value psi_t from a spec and absolute time (free-function form).
Vec probe_value(const ProbeSpec& spec, double t);
Vec probe_value(const ProbeSpec& spec, const ClockState& clock);

/// First- and second-order Poisson machinery of a probe:
///   psi_hat solves Poisson's equation with forcing psi_t, coordinate-wise;
///   sigma = E[psi psi^T] in closed form;
///   sigma_hat solves Poisson's equation with forcing psi psi^T - sigma.
/// Requires the probe to carry each frequency with a single phase; otherwise
/// throws SharedFrequency and the caller must expand the products manually
/// through TrigPolynomial::product + poisson_solve.
struct ProbePoisson {
  ProbeSpec psi_hat;
  Mat sigma;
  std::vector<TrigPolynomial> sigma_hat;  // row-major d*d

  const TrigPolynomial& sigma_hat_at(int i, int j) const;
};

ProbePoisson probe_poisson(const ProbeSpec& spec);

}  // namespace qsa
