#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qsakit/dynamics.hpp"
#include "qsakit/integrator.hpp"
#include "qsakit/linalg.hpp"

namespace qsa {

/// Windowed L1 time-average of the Euclidean error over the final fraction
/// of the run: (1/(T-T0)) int_{T0}^T ||theta_t - theta*|| dt, T0 = (1-window) T.
double steady_state_bias(const Trajectory& traj, std::span<const double> theta_star,
                         double window = 0.2);

/// Same statistic on an arbitrary channel of the trajectory (e.g. "theta_f2").
double steady_state_bias_channel(const Trajectory& traj, std::string_view channel,
                                 std::span<const double> theta_star, double window = 0.2);

struct Covariance {
  Mat sigma;         // (1/M) sum x x^T - xbar xbar^T
  double sigma_hat;  // sqrt(trace)
};

/// Empirical covariance of terminal estimates across replicates.
/// Throws TooFewSamples for fewer than two rows.
Covariance empirical_covariance(const std::vector<Vec>& finals);

struct MeanTargetBias {
  Vec value;                      // (1/T) int_0^T fbar(theta_t) dt
  double half_horizon_gap = 0.0;  // ||value - same average over [0, T/2]||
};

MeanTargetBias mean_target_bias(const Trajectory& traj, const VectorField& fbar);

/// Least-squares slope of log ||S_t|| versus t over the final half of a
/// sensitivity run (channel "log_S_norm"). Throws DegenerateFit.
double lyapunov_exponent(const Trajectory& traj);

/// Residual of the first perturbative-mean-flow transformation along a
/// recorded trajectory of a linear benchmark run:
///   r_t = Xi_t + D f_hat(theta_t, t) + alpha Upsilon_t,
/// with Xi the apparent noise, D f_hat a central difference along the path,
/// and Upsilon = -d_theta f_hat * f. The identity is exact in continuous
/// time, so what survives is pure discretization, O(dt).
struct PmfResidual {
  std::vector<double> t;
  std::vector<double> r;
  double sup_norm = 0.0;
};

PmfResidual pmf_residual(const Trajectory& traj, const Field& field, const LinearClosedForms& cf,
                         double alpha);

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Log-log least squares of bias against alpha. All inputs must be strictly
/// positive (NonPositive) and at least four points are required.
SlopeFit slope_fit(std::span<const double> alphas, std::span<const double> biases);

/// Finite-state Markov chain driving a scalar linear SA recursion
///   theta_{n+1} = theta_n + alpha [-(1 + m(x_{n+1})) theta_n + g(x_{n+1})].
/// m identically zero gives the additive-noise case.
struct MarkovChainSpec {
  Mat p;  // row-stochastic transition matrix
  Vec g;  // observation per state
  Vec m;  // multiplicative modulation per state (empty = zeros)

  void validate() const;  // rows sum to 1 within 1e-12, irreducible
  Vec stationary() const;
  /// f_bar(theta) = -(1 + mean_m) theta + mean_g under the stationary law.
  std::pair<double, double> mean_field_coeffs() const;  // (slope, intercept)
  /// Closed-form stationary mean of theta by linear algebra (exists for
  /// alpha small enough that the modulated contraction holds).
  double stationary_mean_theta(double alpha) const;
};

/// Monte-Carlo check of the tracking-bias identity E[fbar(theta_n)] =
/// alpha E[Upsilon_n] with Upsilon built from the chain's Poisson equation
/// (I - P) h = f_tilde, pi-mean-zero, solved densely once per coefficient.
struct MarkovBias {
  double mean_fbar = 0.0;          // empirical E[fbar(theta_n)]
  double se_fbar = 0.0;            // batch-means standard error (20 batches)
  double mean_neg_xi = 0.0;        // empirical -E[Xi_n]; telescoping twin of mean_fbar
  double alpha_mean_upsilon = 0.0; // alpha * empirical E[Upsilon_n]
  double se_upsilon = 0.0;
  double identity_gap = 0.0;       // |mean_fbar - alpha_mean_upsilon|
  double se_gap = 0.0;             // batch-means s.e. of fbar_n - alpha Upsilon_n
  double closed_form_bias = 0.0;   // from stationary_mean_theta
};

MarkovBias markov_sa_bias(const MarkovChainSpec& spec, double alpha, std::size_t n_steps,
                          std::uint64_t seed);

/// Integrates the scaled flow d theta = fbar^r(theta) dt from a unit-norm
/// start for each radius and reports the terminal norms.
std::vector<double> ode_at_infinity_stability(const VectorField& fbar,
                                              const std::vector<double>& radii, double t_horizon,
                                              double dt, Vec unit_start);

}  // namespace qsa
