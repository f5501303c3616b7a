#include "qsakit/integrator.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "qsakit/csv.hpp"
#include "qsakit/errors.hpp"

namespace qsa {

GainSchedule GainSchedule::constant(double alpha) {
  if (!(alpha > 0.0)) throw NonPositive("gain: alpha must be positive");
  GainSchedule g;
  g.kind = Kind::Constant;
  g.alpha = alpha;
  return g;
}

GainSchedule GainSchedule::power_law(double alpha, double rho, double t_e) {
  if (!(alpha > 0.0)) throw NonPositive("gain: alpha must be positive");
  if (rho < 0.0 || rho > 1.0) throw NonPositive("gain: rho must lie in [0, 1]");
  if (t_e < 1.0) throw NonPositive("gain: t_e must be >= 1");
  GainSchedule g;
  g.kind = Kind::PowerLaw;
  g.alpha = alpha;
  g.rho = rho;
  g.t_e = t_e;
  return g;
}

GainSchedule GainSchedule::clipped_power_law(double clip, double rho) {
  if (!(clip > 0.0)) throw NonPositive("gain: clip must be positive");
  if (rho < 0.0 || rho > 1.0) throw NonPositive("gain: rho must lie in [0, 1]");
  GainSchedule g;
  g.kind = Kind::ClippedPowerLaw;
  g.clip = clip;
  g.rho = rho;
  return g;
}

double GainSchedule::operator()(double t) const {
  switch (kind) {
    case Kind::Constant:
      return alpha;
    case Kind::PowerLaw:
      return alpha / std::pow(1.0 + t / t_e, rho);
    case Kind::ClippedPowerLaw:
      return std::min(clip, std::pow(t + 1.0, -rho));
  }
  return alpha;
}

BoxProjection BoxProjection::box(Vec lo, Vec hi) {
  if (lo.size() != hi.size()) throw DimensionMismatch("box: lo/hi size mismatch");
  for (std::size_t i = 0; i < lo.size(); ++i)
    if (!(lo[i] < hi[i])) throw NonPositive("box: need lo < hi per coordinate");
  BoxProjection p;
  p.lo = std::move(lo);
  p.hi = std::move(hi);
  return p;
}

BoxProjection BoxProjection::symmetric(double bound, int dim) {
  return box(Vec(dim, -bound), Vec(dim, bound));
}

void BoxProjection::apply(std::span<double> theta) const {
  if (!enabled()) return;
  for (std::size_t i = 0; i < theta.size(); ++i) theta[i] = std::clamp(theta[i], lo[i], hi[i]);
}

const Channel* Trajectory::channel(std::string_view name) const {
  for (const Channel& c : channels)
    if (c.name == name) return &c;
  return nullptr;
}

Channel* Trajectory::channel(std::string_view name) {
  for (Channel& c : channels)
    if (c.name == name) return &c;
  return nullptr;
}

void Trajectory::write_csv(std::ostream& os) const {
  CsvWriter w(os);
  w.field("t");
  for (int i = 0; i < dim; ++i) w.field("theta_" + std::to_string(i));
  for (const Channel& c : channels) {
    if (c.width == 1) {
      w.field(c.name);
    } else {
      for (int i = 0; i < c.width; ++i) w.field(c.name + "_" + std::to_string(i));
    }
  }
  w.end_row();
  for (std::size_t k = 0; k < samples(); ++k) {
    w.field(time(k));
    for (double v : state(k)) w.field(v);
    for (const Channel& c : channels)
      for (int i = 0; i < c.width; ++i) w.field(c.data[k * c.width + i]);
    w.end_row();
  }
}

namespace {

void check_step(const Field& field, const ProbeSpec& probe, double dt, double scale) {
  if (!(dt > 0.0)) throw NonPositive("integrate: dt must be positive");
  const double max_omega = std::max(probe.max_omega(), field.intrinsic_max_omega()) * scale;
  if (dt * max_omega > std::numbers::pi)
    throw StepTooCoarse("integrate: dt does not resolve the fastest probe frequency");
}

}  // namespace

bool step_well_resolved(const Field& field, const ProbeSpec& probe, double dt) {
  return dt * std::max(probe.max_omega(), field.intrinsic_max_omega()) <= 0.5;
}

void integrate_qsa_stream(
    const Field& field, const GainSchedule& gain, const ProbeSpec& probe, Vec theta0,
    ClockState clock0, double dt, double t_horizon, const BoxProjection& projection,
    const IntegrateOptions& options,
    const std::function<void(std::size_t, double, std::span<const double>, std::span<const double>)>&
        observer) {
  check_step(field, probe, dt, options.probe_time_scale);
  if (t_horizon < dt) throw NonPositive("integrate: horizon shorter than one step");
  const int d = field.dim();
  if (static_cast<int>(theta0.size()) != d) throw DimensionMismatch("integrate: theta0 dimension");
  if (probe.dimension() < field.probe_dim())
    throw DimensionMismatch("integrate: probe narrower than the field expects");

  const std::size_t n_steps = static_cast<std::size_t>(std::llround(t_horizon / dt));
  const bool scaled = options.probe_time_scale != 1.0;
  Vec theta = std::move(theta0);
  Vec psi(probe.dimension());
  Vec f(d);
  ClockState clock = std::move(clock0);
  const std::vector<double> phase0 = [&] {
    std::vector<double> p(clock.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = clock.phase(i);
    return p;
  }();

  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const double probe_t = t * options.probe_time_scale;
    if (scaled) {
      // Phases recomputed from scratch so the sped-up clock stays exact.
      std::vector<double> p(phase0);
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double cycles = p[i] + clock.basis().omega(i) * probe_t / (2.0 * std::numbers::pi);
        p[i] = cycles - std::floor(cycles);
      }
      clock = ClockState(clock.basis(), std::move(p));
    }
    probe.value(clock, psi);
    observer(k, t, theta, psi);
    if (k == n_steps) break;

    field.eval(theta, psi, probe_t, f);
    const double a = gain(t);
    for (int i = 0; i < d; ++i) theta[i] += dt * a * f[i];
    projection.apply(theta);
    if (!scaled) clock.advance(dt);

    double norm = 0.0;
    bool finite = true;
    for (double x : theta) {
      norm = std::max(norm, std::abs(x));
      finite = finite && std::isfinite(x);
    }
    if (!finite || norm > options.divergence_norm)
      throw NonFinite("integrate: trajectory diverged at t=" + std::to_string(t));
  }
}

Trajectory integrate_qsa(const Field& field, const GainSchedule& gain, const ProbeSpec& probe,
                         Vec theta0, ClockState clock0, double dt, double t_horizon,
                         const BoxProjection& projection, const IntegrateOptions& options) {
  const int d = field.dim();
  const int m = probe.dimension();
  Trajectory traj;
  traj.dim = d;
  traj.dt = dt * static_cast<double>(options.record_stride);
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(t_horizon / dt));
  const std::size_t recorded = n_steps / options.record_stride + 1;
  traj.states.reserve(recorded * d);
  if (options.record_probe) traj.channels.push_back({"psi", m, {}});
  if (options.record_field) traj.channels.push_back({"field", d, {}});
  if (options.record_gain) traj.channels.push_back({"gain", 1, {}});

  Vec f(d);
  integrate_qsa_stream(
      field, gain, probe, std::move(theta0), std::move(clock0), dt, t_horizon, projection, options,
      [&](std::size_t k, double t, std::span<const double> theta, std::span<const double> psi) {
        if (k % options.record_stride != 0) return;
        traj.states.insert(traj.states.end(), theta.begin(), theta.end());
        if (options.record_probe) {
          Channel* c = traj.channel("psi");
          c->data.insert(c->data.end(), psi.begin(), psi.end());
        }
        if (options.record_field) {
          field.eval(theta, psi, t * options.probe_time_scale, f);
          Channel* c = traj.channel("field");
          c->data.insert(c->data.end(), f.begin(), f.end());
        }
        if (options.record_gain) traj.channel("gain")->data.push_back(gain(t));
      });
  return traj;
}

Trajectory integrate_mean_flow(const VectorField& fbar, Vec theta0, double dt, double t_horizon) {
  if (!(dt > 0.0)) throw NonPositive("integrate: dt must be positive");
  const int d = static_cast<int>(theta0.size());
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(t_horizon / dt));
  Trajectory traj;
  traj.dim = d;
  traj.dt = dt;
  traj.states.reserve((n_steps + 1) * d);
  Vec theta = std::move(theta0);
  Vec f(d);
  for (std::size_t k = 0; k <= n_steps; ++k) {
    traj.states.insert(traj.states.end(), theta.begin(), theta.end());
    if (k == n_steps) break;
    fbar(theta, f);
    for (int i = 0; i < d; ++i) theta[i] += dt * f[i];
    for (double x : theta)
      if (!std::isfinite(x) || std::abs(x) > 1e12) throw NonFinite("mean flow diverged");
  }
  return traj;
}

Trajectory integrate_sensitivity(const Field& field, const GainSchedule& gain,
                                 const ProbeSpec& probe, Vec theta0, ClockState clock0, double dt,
                                 double t_horizon, const IntegrateOptions& options) {
  check_step(field, probe, dt, 1.0);
  const int d = field.dim();
  const std::size_t n_steps = static_cast<std::size_t>(std::llround(t_horizon / dt));
  Trajectory traj;
  traj.dim = d;
  traj.dt = dt * static_cast<double>(options.record_stride);
  traj.channels.push_back({"log_S_norm", 1, {}});

  Vec theta = std::move(theta0);
  Vec psi(probe.dimension());
  Vec f(d);
  ClockState clock = std::move(clock0);
  Mat s = Mat::identity(d);
  double log_scale = 0.0;  // accumulated log norm from renormalizations
  Mat a(d, d);

  for (std::size_t k = 0; k <= n_steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    probe.value(clock, psi);
    if (k % options.record_stride == 0) {
      traj.states.insert(traj.states.end(), theta.begin(), theta.end());
      traj.channels[0].data.push_back(log_scale + std::log(spectral_norm(s)));
    }
    if (k == n_steps) break;

    a = field_jacobian(field, theta, psi, t);
    const double at = gain(t);
    // S <- S + dt a A S
    Mat ds = a * s;
    ds *= dt * at;
    s += ds;
    const double norm = spectral_norm(s);
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw NonFinite("sensitivity integration collapsed");
    s *= 1.0 / norm;
    log_scale += std::log(norm);

    field.eval(theta, psi, t, f);
    for (int i = 0; i < d; ++i) theta[i] += dt * at * f[i];
    clock.advance(dt);
    for (double x : theta)
      if (!std::isfinite(x) || std::abs(x) > 1e12) throw NonFinite("sensitivity run diverged");
  }
  return traj;
}

VectorField scaled_field(VectorField fbar, double r) {
  if (!(r > 0.0)) throw NonPositive("scaled_field: r must be positive");
  return [fbar = std::move(fbar), r](std::span<const double> theta, std::span<double> out) {
    Vec scaled(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) scaled[i] = r * theta[i];
    fbar(scaled, out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= r;
  };
}

SolidarityResult solidarity_gap(const Field& field, const ProbeSpec& probe,
                                const VectorField& fbar, Vec theta0, double t_horizon,
                                std::vector<double> alphas, double dt) {
  SolidarityResult res;
  const int d = field.dim();
  const double max_omega = std::max(probe.max_omega(), field.intrinsic_max_omega());
  for (double alpha : alphas) {
    if (!(alpha > 0.0)) throw NonPositive("solidarity: alpha must be positive");
    // The time-scaled run sees frequencies omega/alpha.
    double step = dt;
    if (max_omega > 0.0) step = std::min(step, 0.4 * alpha / max_omega);
    const std::size_t n = static_cast<std::size_t>(std::ceil(t_horizon / step));
    step = t_horizon / static_cast<double>(n);

    IntegrateOptions opt;
    opt.probe_time_scale = 1.0 / alpha;
    Vec terminal(d);
    integrate_qsa_stream(field, GainSchedule::constant(1.0), probe, theta0,
                         ClockState(probe.basis()), step, t_horizon, BoxProjection::none(), opt,
                         [&](std::size_t, double, std::span<const double> th,
                             std::span<const double>) {
                           std::copy(th.begin(), th.end(), terminal.begin());
                         });

    // Mean flow on the same grid so the Euler bias cancels in the gap.
    Vec mean = theta0;
    Vec f(d);
    for (std::size_t k = 0; k < n; ++k) {
      fbar(mean, f);
      for (int i = 0; i < d; ++i) mean[i] += step * f[i];
    }
    double gap = 0.0;
    for (int i = 0; i < d; ++i) gap += (terminal[i] - mean[i]) * (terminal[i] - mean[i]);
    res.alphas.push_back(alpha);
    res.gaps.push_back(std::sqrt(gap));
  }
  return res;
}

}  // namespace qsa
