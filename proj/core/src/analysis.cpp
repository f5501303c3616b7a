#include "qsakit/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "qsakit/errors.hpp"
#include "qsakit/rng.hpp"

namespace qsa {

namespace {

double windowed_error_average(const Trajectory& traj, std::span<const double> values, int width,
                              std::span<const double> theta_star, double window) {
  const std::size_t n = values.size() / width;
  if (!(window > 0.0) || window >= 1.0) throw WindowEmpty("bias: window fraction in (0,1)");
  if (n < 2) throw WindowEmpty("bias: trajectory too short");
  const double t_end = traj.time(n - 1);
  const double t0 = traj.time(0) + (1.0 - window) * (t_end - traj.time(0));
  std::size_t k0 = static_cast<std::size_t>(std::ceil((t0 - traj.time(0)) / traj.dt));
  if (k0 >= n - 1) throw WindowEmpty("bias: window holds fewer than two samples");

  double acc = 0.0;
  double prev = 0.0;
  bool first = true;
  double span = 0.0;
  for (std::size_t k = k0; k < n; ++k) {
    double err = 0.0;
    for (int i = 0; i < width; ++i) {
      const double d = values[k * width + i] - theta_star[i];
      err += d * d;
    }
    err = std::sqrt(err);
    if (!first) {
      acc += 0.5 * traj.dt * (prev + err);
      span += traj.dt;
    }
    prev = err;
    first = false;
  }
  return acc / span;
}

}  // namespace

double steady_state_bias(const Trajectory& traj, std::span<const double> theta_star,
                         double window) {
  return windowed_error_average(traj, traj.states, traj.dim, theta_star, window);
}

double steady_state_bias_channel(const Trajectory& traj, std::string_view channel,
                                 std::span<const double> theta_star, double window) {
  const Channel* c = traj.channel(channel);
  if (!c) throw WindowEmpty("bias: no such channel");
  return windowed_error_average(traj, c->data, c->width, theta_star, window);
}

Covariance empirical_covariance(const std::vector<Vec>& finals) {
  if (finals.size() < 2) throw TooFewSamples("covariance: need at least two samples");
  const int d = static_cast<int>(finals.front().size());
  const double m = static_cast<double>(finals.size());
  Vec mean(d, 0.0);
  for (const Vec& x : finals)
    for (int i = 0; i < d; ++i) mean[i] += x[i] / m;
  Covariance cov;
  cov.sigma = Mat(d, d);
  for (const Vec& x : finals)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) cov.sigma(i, j) += x[i] * x[j] / m;
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) cov.sigma(i, j) -= mean[i] * mean[j];
  double tr = 0.0;
  for (int i = 0; i < d; ++i) tr += cov.sigma(i, i);
  cov.sigma_hat = std::sqrt(std::max(0.0, tr));
  return cov;
}

MeanTargetBias mean_target_bias(const Trajectory& traj, const VectorField& fbar) {
  const std::size_t n = traj.samples();
  if (n < 2) throw WindowEmpty("mean_target_bias: trajectory too short");
  const int d = traj.dim;
  Vec acc(d, 0.0), acc_half(d, 0.0), f(d);
  const std::size_t half = (n - 1) / 2;
  for (std::size_t k = 0; k < n; ++k) {
    fbar(traj.state(k), f);
    const double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
    for (int i = 0; i < d; ++i) acc[i] += w * f[i];
    if (k <= half) {
      const double wh = (k == 0 || k == half) ? 0.5 : 1.0;
      for (int i = 0; i < d; ++i) acc_half[i] += wh * f[i];
    }
  }
  MeanTargetBias out;
  out.value.resize(d);
  double gap = 0.0;
  for (int i = 0; i < d; ++i) {
    out.value[i] = acc[i] / static_cast<double>(n - 1);
    const double h = acc_half[i] / static_cast<double>(half);
    gap += (out.value[i] - h) * (out.value[i] - h);
  }
  out.half_horizon_gap = std::sqrt(gap);
  return out;
}

double lyapunov_exponent(const Trajectory& traj) {
  const Channel* c = traj.channel("log_S_norm");
  if (!c) throw DegenerateFit("lyapunov_exponent: no sensitivity channel recorded");
  const std::size_t n = c->data.size();
  if (n < 4) throw DegenerateFit("lyapunov_exponent: too few samples");
  const std::size_t k0 = n / 2;
  std::vector<double> t, y;
  t.reserve(n - k0);
  y.reserve(n - k0);
  for (std::size_t k = k0; k < n; ++k) {
    t.push_back(traj.time(k));
    y.push_back(c->data[k]);
  }
  return fit_line(t, y).slope;
}

PmfResidual pmf_residual(const Trajectory& traj, const Field& field, const LinearClosedForms& cf,
                         double alpha) {
  if (traj.dim != 1) throw NoClosedForm("pmf_residual: closed forms cover the scalar examples");
  const std::size_t n = traj.samples();
  if (n < 3) throw WindowEmpty("pmf_residual: need at least three samples");
  PmfResidual out;
  out.t.reserve(n - 2);
  out.r.reserve(n - 2);
  Vec fv(1);
  const Vec empty;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double t = traj.time(k);
    const double theta = traj.state(k)[0];
    field.eval(traj.state(k), empty, t, fv);
    const double xi = fv[0] - cf.fbar(theta);
    // total derivative of f_hat along the realized path, central difference
    const double fhat_next = cf.fhat(traj.state(k + 1)[0], traj.time(k + 1));
    const double fhat_prev = cf.fhat(traj.state(k - 1)[0], traj.time(k - 1));
    const double dfhat = (fhat_next - fhat_prev) / (2.0 * traj.dt);
    const double upsilon = -cf.fhat_slope(t) * fv[0];
    const double r = xi + dfhat + alpha * upsilon;
    out.t.push_back(t);
    out.r.push_back(r);
    out.sup_norm = std::max(out.sup_norm, std::abs(r));
  }
  return out;
}

SlopeFit slope_fit(std::span<const double> alphas, std::span<const double> biases) {
  if (alphas.size() < 4 || alphas.size() != biases.size())
    throw NonPositive("slope_fit: need at least four (alpha, bias) pairs");
  std::vector<double> x, y;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] > 0.0) || !(biases[i] > 0.0))
      throw NonPositive("slope_fit: inputs must be strictly positive");
    x.push_back(std::log(alphas[i]));
    y.push_back(std::log(biases[i]));
  }
  const LineFit f = fit_line(x, y);
  return SlopeFit{f.slope, f.intercept, f.r2};
}

// ---------------------------------------------------------------------------
// Markov SA bias

void MarkovChainSpec::validate() const {
  const int n = p.rows();
  if (p.cols() != n || static_cast<int>(g.size()) != n)
    throw DimensionMismatch("markov: shapes disagree");
  if (!m.empty() && static_cast<int>(m.size()) != n)
    throw DimensionMismatch("markov: modulation size");
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int j = 0; j < n; ++j) {
      if (p(i, j) < 0.0) throw Reducible("markov: negative transition probability");
      s += p(i, j);
    }
    if (std::abs(s - 1.0) > 1e-12) throw Reducible("markov: row does not sum to one");
  }
  // Irreducibility: every state reaches every other through positive entries.
  std::vector<std::vector<bool>> reach(n, std::vector<bool>(n, false));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) reach[i][j] = (i == j) || p(i, j) > 0.0;
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) reach[i][j] = reach[i][j] || (reach[i][k] && reach[k][j]);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!reach[i][j]) throw Reducible("markov: chain is not irreducible");
}

Vec MarkovChainSpec::stationary() const {
  const int n = p.rows();
  // Solve pi (I - P) = 0 with sum(pi) = 1: replace the last column of
  // (I - P^T) with ones.
  Mat a(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) a(i, j) = (i == j ? 1.0 : 0.0) - p(j, i);
  for (int j = 0; j < n; ++j) a(n - 1, j) = 1.0;
  Vec rhs(n, 0.0);
  rhs[n - 1] = 1.0;
  return lu_solve(a, rhs);
}

std::pair<double, double> MarkovChainSpec::mean_field_coeffs() const {
  const Vec pi = stationary();
  double mbar = 0.0, gbar = 0.0;
  for (std::size_t i = 0; i < pi.size(); ++i) {
    mbar += pi[i] * (m.empty() ? 0.0 : m[i]);
    gbar += pi[i] * g[i];
  }
  return {-(1.0 + mbar), gbar};
}

double MarkovChainSpec::stationary_mean_theta(double alpha) const {
  // u_j = E[theta_n 1{x_n = j}] solves u_j = B_j sum_i u_i P(i,j) + alpha g_j pi_j
  // with B_j = 1 - alpha (1 + m_j).
  const int n = p.rows();
  const Vec pi = stationary();
  Mat a(n, n);
  Vec rhs(n);
  for (int j = 0; j < n; ++j) {
    const double bj = 1.0 - alpha * (1.0 + (m.empty() ? 0.0 : m[j]));
    for (int i = 0; i < n; ++i) a(j, i) = (i == j ? 1.0 : 0.0) - bj * p(i, j);
    rhs[j] = alpha * g[j] * pi[j];
  }
  const Vec u = lu_solve(a, rhs);
  double s = 0.0;
  for (double x : u) s += x;
  return s;
}

MarkovBias markov_sa_bias(const MarkovChainSpec& spec, double alpha, std::size_t n_steps,
                          std::uint64_t seed) {
  spec.validate();
  const int ns = spec.p.rows();
  const Vec pi = spec.stationary();
  const auto [slope, intercept] = spec.mean_field_coeffs();

  // Poisson equation (I - P) h = f_tilde with pi-mean-zero normalization,
  // via the fundamental-matrix system (I - P + 1 pi^T) h = f_tilde. The field
  // is linear in theta, so solve once for each coefficient:
  //   f(theta, x) = -(1 + m(x)) theta + g(x)
  //   f_tilde(theta, x) = -m_tilde(x) theta + g_tilde(x)
  Mat fund(ns, ns);
  for (int i = 0; i < ns; ++i)
    for (int j = 0; j < ns; ++j) fund(i, j) = (i == j ? 1.0 : 0.0) - spec.p(i, j) + pi[j];
  double mbar = 0.0, gbar = 0.0;
  for (int i = 0; i < ns; ++i) {
    mbar += pi[i] * (spec.m.empty() ? 0.0 : spec.m[i]);
    gbar += pi[i] * spec.g[i];
  }
  // Only the theta coefficient of h enters Upsilon: the constant part cancels
  // in the difference h(theta_{n+1}, x) - h(theta_n, x).
  Vec mt(ns);
  for (int i = 0; i < ns; ++i) mt[i] = -((spec.m.empty() ? 0.0 : spec.m[i]) - mbar);
  const Vec mhat = lu_solve(fund, mt);
  (void)gbar;

  SplitMix64 rng(seed);
  // Start from a stationary-ish state: sample x0 from pi.
  int x = 0;
  {
    double u = rng.next_double(), acc = 0.0;
    for (int i = 0; i < ns; ++i) {
      acc += pi[i];
      if (u <= acc) {
        x = i;
        break;
      }
    }
  }
  auto next_state = [&](int from) {
    const double u = rng.next_double();
    double acc = 0.0;
    for (int j = 0; j < ns; ++j) {
      acc += spec.p(from, j);
      if (u <= acc) return j;
    }
    return ns - 1;
  };

  const std::size_t burn = n_steps / 5;
  const std::size_t kept = n_steps - burn;
  const int n_batches = 20;
  std::vector<double> batch_fbar(n_batches, 0.0), batch_ups(n_batches, 0.0),
      batch_gap(n_batches, 0.0);
  std::vector<std::size_t> batch_count(n_batches, 0);
  double sum_fbar = 0.0, sum_xi = 0.0, sum_ups = 0.0;

  double theta = 0.0;
  int x_next = next_state(x);       // x_{n+1}
  int x_next2 = next_state(x_next); // x_{n+2}
  for (std::size_t n = 0; n < n_steps; ++n) {
    const double mval = spec.m.empty() ? 0.0 : spec.m[x_next];
    const double f = -(1.0 + mval) * theta + spec.g[x_next];
    const double theta_next = theta + alpha * f;
    if (!std::isfinite(theta_next) || std::abs(theta_next) > 1e12)
      throw Diverged("markov_sa_bias: recursion diverged");

    if (n >= burn) {
      const double fbar = slope * theta + intercept;
      const double xi = f - fbar;
      // Upsilon_n = -(1/alpha) [h(theta_{n+1}, x_{n+2}) - h(theta_n, x_{n+2})]
      const double ups = -mhat[x_next2] * (theta_next - theta) / alpha;
      sum_fbar += fbar;
      sum_xi += xi;
      sum_ups += ups;
      const std::size_t b = std::min<std::size_t>((n - burn) * n_batches / kept, n_batches - 1);
      batch_fbar[b] += fbar;
      batch_ups[b] += ups;
      batch_gap[b] += fbar - alpha * ups;
      batch_count[b] += 1;
    }
    theta = theta_next;
    x = x_next;
    x_next = x_next2;
    x_next2 = next_state(x_next);
  }

  MarkovBias out;
  const double kd = static_cast<double>(kept);
  out.mean_fbar = sum_fbar / kd;
  out.mean_neg_xi = -sum_xi / kd;
  out.alpha_mean_upsilon = alpha * sum_ups / kd;

  auto batch_se = [&](const std::vector<double>& sums) {
    double mean = 0.0;
    std::vector<double> means(n_batches);
    for (int b = 0; b < n_batches; ++b) {
      means[b] = sums[b] / static_cast<double>(batch_count[b]);
      mean += means[b] / n_batches;
    }
    double var = 0.0;
    for (int b = 0; b < n_batches; ++b) var += (means[b] - mean) * (means[b] - mean);
    var /= (n_batches - 1);
    return std::sqrt(var / n_batches);
  };
  out.se_fbar = batch_se(batch_fbar);
  out.se_upsilon = alpha * batch_se(batch_ups);
  out.se_gap = batch_se(batch_gap);
  out.identity_gap = std::abs(out.mean_fbar - out.alpha_mean_upsilon);
  out.closed_form_bias = slope * spec.stationary_mean_theta(alpha) + intercept;
  return out;
}

std::vector<double> ode_at_infinity_stability(const VectorField& fbar,
                                              const std::vector<double>& radii, double t_horizon,
                                              double dt, Vec unit_start) {
  std::vector<double> norms;
  double prev = 0.0;
  for (double r : radii) {
    if (!(r > prev)) throw NonPositive("ode_at_infinity: radii must increase");
    prev = r;
    const VectorField fr = scaled_field(fbar, r);
    const Trajectory traj = integrate_mean_flow(fr, unit_start, dt, t_horizon);
    norms.push_back(norm2(traj.back()));
  }
  return norms;
}

}  // namespace qsa
