#include "qsakit/filters.hpp"

#include <cmath>

#include "qsakit/errors.hpp"

namespace qsa {

FirstOrderFilter::FirstOrderFilter(double gamma) : gamma_(gamma) {
  if (!(gamma > 0.0)) throw NonPositive("filter: gamma must be positive");
}

double FirstOrderFilter::step(double input, double dt) {
  if (!(dt > 0.0)) throw NonPositive("filter: dt must be positive");
  const double blend = -std::expm1(-gamma_ * dt);  // 1 - e^{-gamma dt}
  y_ += blend * (input - y_);
  return y_;
}

SecondOrderFilter::SecondOrderFilter(double gamma, double zeta) : gamma_(gamma), zeta_(zeta) {
  if (!(gamma > 0.0)) throw NonPositive("filter: gamma must be positive");
  if (!(zeta > 0.0) || zeta > 1.0) throw NonPositive("filter: zeta must lie in (0, 1]");
}

double SecondOrderFilter::step(double input, double dt) {
  if (!(dt > 0.0)) throw NonPositive("filter: dt must be positive");
  if (gamma_ * dt > 0.5) throw StepTooCoarse("filter: gamma*dt must stay <= 0.5");
  // Velocity first, then position with the new velocity.
  v_ += dt * (gamma_ * gamma_ * (input - y_) - 2.0 * zeta_ * gamma_ * v_);
  y_ += dt * v_;
  return y_;
}

FilterSpec FilterSpec::first(double gamma, Init init) {
  FilterSpec s;
  s.order = Order::First;
  s.gamma = gamma;
  s.init = init;
  return s;
}

FilterSpec FilterSpec::second(double gamma, double zeta, Init init) {
  FilterSpec s;
  s.order = Order::Second;
  s.gamma = gamma;
  s.zeta = zeta;
  s.init = init;
  return s;
}

Trajectory filter_trajectory(const FilterSpec& spec, const Trajectory& traj,
                             const std::string& suffix) {
  Trajectory out = traj;
  Channel ch;
  ch.name = "theta" + suffix;
  ch.width = traj.dim;
  ch.data.assign(traj.states.size(), 0.0);

  for (int i = 0; i < traj.dim; ++i) {
    // One causal pass per coordinate.
    const double first = traj.samples() ? traj.state(0)[i] : 0.0;
    const double y0 = spec.init == FilterSpec::Init::MatchFirstSample ? first : 0.0;
    FirstOrderFilter f1(spec.gamma);
    SecondOrderFilter f2(spec.gamma, spec.zeta);
    f1.reset(y0);
    f2.reset(y0);
    for (std::size_t k = 0; k < traj.samples(); ++k) {
      double y = y0;
      if (k > 0) {
        y = spec.order == FilterSpec::Order::First ? f1.step(traj.state(k)[i], traj.dt)
                                                   : f2.step(traj.state(k)[i], traj.dt);
      }
      ch.data[k * traj.dim + i] = y;
    }
  }
  out.channels.push_back(std::move(ch));
  return out;
}

PrAverage pr_average(const Trajectory& traj, double kappa) {
  if (!(kappa > 1.0)) throw NonPositive("pr_average: kappa must exceed 1");
  const std::size_t n = traj.samples();
  if (n < 2) throw WindowEmpty("pr_average: trajectory too short");
  const int d = traj.dim;

  PrAverage out;
  out.running.name = "theta_pr";
  out.running.width = d;
  out.running.data.assign(n * d, 0.0);

  // Prefix trapezoid integrals per coordinate.
  std::vector<double> prefix(n * d, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    for (int i = 0; i < d; ++i) {
      prefix[k * d + i] = prefix[(k - 1) * d + i] +
                          0.5 * traj.dt * (traj.state(k)[i] + traj.state(k - 1)[i]);
    }
  }

  const double t_begin = traj.time(0);
  auto window_average = [&](std::size_t k, int i) {
    const double t = traj.time(k) - t_begin;
    const double t0 = t * (1.0 - 1.0 / kappa);
    // Integral over [t0, t] by interpolating the prefix at t0.
    const double pos = t0 / traj.dt;
    const std::size_t lo = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(lo);
    double at_t0 = prefix[lo * d + i];
    if (lo + 1 < n) {
      // linear interpolation of the integral is exact for the trapezoid rule
      const double seg = prefix[(lo + 1) * d + i] - prefix[lo * d + i];
      at_t0 += frac * seg;
    }
    return (prefix[k * d + i] - at_t0) / (t - t0);
  };

  for (int i = 0; i < d; ++i) out.running.data[i] = traj.state(0)[i];
  for (std::size_t k = 1; k < n; ++k)
    for (int i = 0; i < d; ++i) out.running.data[k * d + i] = window_average(k, i);

  out.value.resize(d);
  const double total = traj.time(n - 1) - t_begin;
  if (!(total > 0.0)) throw WindowEmpty("pr_average: zero-length window");
  for (int i = 0; i < d; ++i) out.value[i] = window_average(n - 1, i);
  return out;
}

void WindowedAverage::add(double t, std::span<const double> value) {
  if (t < t_begin_) return;
  if (!have_last_) {
    last_.assign(value.begin(), value.end());
    first_t_ = last_t_ = t;
    have_last_ = true;
    return;
  }
  const double h = t - last_t_;
  for (std::size_t i = 0; i < acc_.size(); ++i) acc_[i] += 0.5 * h * (last_[i] + value[i]);
  last_.assign(value.begin(), value.end());
  last_t_ = t;
}

Vec WindowedAverage::value() const {
  if (!have_last_ || !(last_t_ > first_t_)) throw WindowEmpty("windowed average: no samples");
  Vec v(acc_.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = acc_[i] / (last_t_ - first_t_);
  return v;
}

}  // namespace qsa
