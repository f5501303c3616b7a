#pragma once

#include "qsakit/integrator.hpp"
#include "qsakit/linalg.hpp"

namespace qsa {

/// Unity-DC-gain low pass gamma/(s+gamma), discretized with the exact
/// exponential blend (preserves the DC fixed point for any step).
class FirstOrderFilter {
 public:
  explicit FirstOrderFilter(double gamma);

  double step(double input, double dt);
  void reset(double y0 = 0.0) { y_ = y0; }
  double output() const { return y_; }
  double gamma() const { return gamma_; }

 private:
  double gamma_;
  double y_ = 0.0;
};

/// Unity-DC-gain second-order low pass gamma^2/(s^2 + 2 zeta gamma s + gamma^2),
/// semi-implicit Euler (velocity first). Requires gamma*dt <= 0.5, else
/// throws StepTooCoarse.
class SecondOrderFilter {
 public:
  SecondOrderFilter(double gamma, double zeta);

  double step(double input, double dt);
  void reset(double y0 = 0.0, double v0 = 0.0) {
    y_ = y0;
    v_ = v0;
  }
  double output() const { return y_; }
  double gamma() const { return gamma_; }
  double zeta() const { return zeta_; }

 private:
  double gamma_, zeta_;
  double y_ = 0.0, v_ = 0.0;
};

struct FilterSpec {
  enum class Order { First, Second };
  enum class Init { MatchFirstSample, Zero };

  Order order = Order::Second;
  double gamma = 0.1;
  double zeta = 0.8;
  Init init = Init::MatchFirstSample;

  static FilterSpec first(double gamma, Init init = Init::MatchFirstSample);
  static FilterSpec second(double gamma, double zeta = 0.8, Init init = Init::MatchFirstSample);
};

/// Runs the filter causally along every state coordinate of the trajectory
/// and returns a copy with the filtered channel appended (named by `suffix`,
/// e.g. "_f2" gives channel "theta_f2" of width dim).
Trajectory filter_trajectory(const FilterSpec& spec, const Trajectory& traj,
                             const std::string& suffix);

/// Polyak-Ruppert trailing average over the final T/kappa of the run:
/// value = 1/(T - T0) * int_{T0}^{T} theta_t dt with T0 = T (1 - 1/kappa).
/// `running` holds the same average computed at every grid time (width dim).
struct PrAverage {
  Vec value;
  Channel running;
};

PrAverage pr_average(const Trajectory& traj, double kappa = 5.0);

/// Streaming windowed trapezoid average of a vector signal over [t_begin, T];
/// used by experiments that never materialize a trajectory.
class WindowedAverage {
 public:
  WindowedAverage(double t_begin, int dim) : t_begin_(t_begin), acc_(dim, 0.0) {}

  void add(double t, std::span<const double> value);
  /// Integral divided by the accumulated span; throws WindowEmpty.
  Vec value() const;
  double span() const { return have_last_ ? last_t_ - first_t_ : 0.0; }

 private:
  double t_begin_;
  Vec acc_;
  Vec last_;
  double first_t_ = 0.0, last_t_ = 0.0;
  bool have_last_ = false;
};

}  // namespace qsa
