#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>

#include "qsakit/dynamics.hpp"
#include "qsakit/linalg.hpp"
#include "qsakit/probing.hpp"

namespace qsa {

/// Step-size schedule a_t. Non-increasing and positive for all variants.
struct GainSchedule {
  enum class Kind { Constant, PowerLaw, ClippedPowerLaw };
  Kind kind = Kind::Constant;
  double alpha = 1.0;  // constant value; power-law prefactor
  double rho = 0.0;
  double t_e = 1.0;
  double clip = 1.0;

  /// a_t = alpha
  static GainSchedule constant(double alpha);
  /// a_t = alpha / (1 + t/t_e)^rho
  static GainSchedule power_law(double alpha, double rho, double t_e = 1.0);
  /// a_t = min(clip, (t+1)^-rho)
  static GainSchedule clipped_power_law(double clip, double rho);

  double operator()(double t) const;
};

/// Per-coordinate box constraint applied after every Euler step.
struct BoxProjection {
  Vec lo, hi;

  static BoxProjection none() { return {}; }
  static BoxProjection box(Vec lo, Vec hi);
  static BoxProjection symmetric(double bound, int dim);

  bool enabled() const { return !lo.empty(); }
  void apply(std::span<double> theta) const;
};

struct Channel {
  std::string name;
  int width = 1;
  std::vector<double> data;
};

/// A uniformly sampled run: states plus any recorded side channels, all on
/// the same grid.
struct Trajectory {
  double t0 = 0.0;
  double dt = 0.0;  // recorded grid step (integration dt times stride)
  int dim = 0;
  std::vector<double> states;  // samples * dim, row-major
  std::vector<Channel> channels;

  std::size_t samples() const { return dim == 0 ? 0 : states.size() / dim; }
  double time(std::size_t i) const { return t0 + static_cast<double>(i) * dt; }
  std::span<const double> state(std::size_t i) const {
    return {states.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
  }
  std::span<const double> back() const { return state(samples() - 1); }
  const Channel* channel(std::string_view name) const;
  Channel* channel(std::string_view name);

  /// CSV export: header `t,theta_0..theta_{d-1}[,channels]`, 17 significant
  /// digits per value.
  void write_csv(std::ostream& os) const;
};

struct IntegrateOptions {
  std::size_t record_stride = 1;
  bool record_probe = false;
  bool record_field = false;
  bool record_gain = false;
  double divergence_norm = 1e12;
  /// Probe (and direct field time dependence) evaluated at t * probe_time_scale;
  /// used by the time-scaled solidarity runs with scale = 1/alpha.
  double probe_time_scale = 1.0;
};

/// dt * max_omega <= 0.5: the step comfortably resolves the fastest probe
/// frequency. Integration only hard-fails beyond pi; this is the advisory
/// threshold callers can check up front.
bool step_well_resolved(const Field& field, const ProbeSpec& probe, double dt);

/// Forward Euler on d theta = a_t f(theta, psi_t, t) dt with the clock
/// advanced alongside. Throws StepTooCoarse when dt * max_omega > pi and
/// NonFinite when the state norm passes the divergence guard.
Trajectory integrate_qsa(const Field& field, const GainSchedule& gain, const ProbeSpec& probe,
                         Vec theta0, ClockState clock0, double dt, double t_horizon,
                         const BoxProjection& projection = BoxProjection::none(),
                         const IntegrateOptions& options = {});

/// Streaming variant: `observer(step_index, t, theta, psi)` is called after
/// every step (including step 0 with the initial state); nothing is stored.
void integrate_qsa_stream(
    const Field& field, const GainSchedule& gain, const ProbeSpec& probe, Vec theta0,
    ClockState clock0, double dt, double t_horizon, const BoxProjection& projection,
    const IntegrateOptions& options,
    const std::function<void(std::size_t, double, std::span<const double>, std::span<const double>)>&
        observer);

using VectorField = std::function<void(std::span<const double>, std::span<double>)>;

/// Euler on the mean flow d theta = fbar(theta) dt.
Trajectory integrate_mean_flow(const VectorField& fbar, Vec theta0, double dt, double t_horizon);

/// Co-integrates the sensitivity system dS = a_t A(theta_t, psi_t) S dt with
/// S_0 = I next to the state. Records the channel "log_S_norm" (log of the
/// largest singular value, accumulated through per-step renormalization so
/// long contractions do not underflow).
Trajectory integrate_sensitivity(const Field& field, const GainSchedule& gain,
                                 const ProbeSpec& probe, Vec theta0, ClockState clock0, double dt,
                                 double t_horizon, const IntegrateOptions& options = {});

/// theta -> fbar(r theta) / r.
VectorField scaled_field(VectorField fbar, double r);

/// Gap between the time-scaled QSA run (probe at t/alpha, unit gain) and the
/// mean flow at horizon T, per gain value. dt is adapted per alpha so the
/// sped-up probe stays resolved.
struct SolidarityResult {
  std::vector<double> alphas;
  std::vector<double> gaps;
};

SolidarityResult solidarity_gap(const Field& field, const ProbeSpec& probe,
                                const VectorField& fbar, Vec theta0, double t_horizon,
                                std::vector<double> alphas, double dt);

}  // namespace qsa
