#include "qsakit/dynamics.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "qsakit/errors.hpp"

namespace qsa {

// ---------------------------------------------------------------------------
// Probing gain

ProbingGainPolicy ProbingGainPolicy::constant(double eps) {
  if (!(eps > 0.0)) throw NonPositive("probing gain: eps must be positive");
  ProbingGainPolicy p;
  p.kind = Kind::Constant;
  p.eps = eps;
  return p;
}

ProbingGainPolicy ProbingGainPolicy::objective_scaled(double eps, double obj_floor) {
  if (!(eps > 0.0)) throw NonPositive("probing gain: eps must be positive");
  ProbingGainPolicy p;
  p.kind = Kind::ObjectiveScaled;
  p.eps = eps;
  p.obj_floor = obj_floor;
  return p;
}

ProbingGainPolicy ProbingGainPolicy::prior_scaled(double eps, Vec center, double sigma_p) {
  if (!(eps > 0.0) || !(sigma_p > 0.0)) throw NonPositive("probing gain: eps, sigma_p > 0");
  ProbingGainPolicy p;
  p.kind = Kind::PriorScaled;
  p.eps = eps;
  p.center = std::move(center);
  p.sigma_p = sigma_p;
  return p;
}

double probing_gain(const ProbingGainPolicy& policy, const Objective& obj,
                    std::span<const double> theta) {
  switch (policy.kind) {
    case ProbingGainPolicy::Kind::Constant:
      return policy.eps;
    case ProbingGainPolicy::Kind::ObjectiveScaled: {
      const double v = obj.value(theta);
      if (v < policy.obj_floor)
        throw NegativeUnderRoot("probing gain: objective below declared floor");
      return policy.eps * std::sqrt(1.0 + v - policy.obj_floor);
    }
    case ProbingGainPolicy::Kind::PriorScaled: {
      double s = 0.0;
      for (std::size_t i = 0; i < theta.size(); ++i) {
        const double c = policy.center.empty() ? 0.0 : policy.center[i];
        s += (theta[i] - c) * (theta[i] - c);
      }
      return policy.eps * std::sqrt(1.0 + s / (policy.sigma_p * policy.sigma_p));
    }
  }
  return policy.eps;
}

// ---------------------------------------------------------------------------
// Field base

void Field::jacobian(std::span<const double>, std::span<const double>, double, Mat&) const {
  throw NonDifferentiable("field has no analytic jacobian");
}

namespace {

// Shifts theta by the moving optimizer when tracking.
void shift_by_target(const std::optional<MovingTarget>& target, std::span<const double> theta,
                     double t, Vec& out) {
  out.assign(theta.begin(), theta.end());
  if (!target) return;
  const Vec opt = target->position(t);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= opt[i];
}

class Qsgd1Field final : public Field {
 public:
  Qsgd1Field(Objective obj, ProbingGainPolicy policy, std::optional<MovingTarget> target)
      : obj_(std::move(obj)), policy_(std::move(policy)), target_(std::move(target)) {}

  int dim() const override { return obj_.dim; }
  int probe_dim() const override { return obj_.dim; }

  void eval(std::span<const double> theta, std::span<const double> psi, double t,
            std::span<double> out) const override {
    const double eps = probing_gain(policy_, obj_, theta);
    thread_local Vec probe_point, shifted;
    shift_by_target(target_, theta, t, shifted);
    probe_point.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) probe_point[i] = shifted[i] + eps * psi[i];
    const double y = obj_.value(probe_point) / eps;
    for (std::size_t i = 0; i < theta.size(); ++i) out[i] = -psi[i] * y;
  }

 private:
  Objective obj_;
  ProbingGainPolicy policy_;
  std::optional<MovingTarget> target_;
};

class Qsgd2Field final : public Field {
 public:
  Qsgd2Field(Objective obj, ProbingGainPolicy policy, std::optional<MovingTarget> target)
      : obj_(std::move(obj)), policy_(std::move(policy)), target_(std::move(target)) {}

  int dim() const override { return obj_.dim; }
  int probe_dim() const override { return obj_.dim; }

  void eval(std::span<const double> theta, std::span<const double> psi, double t,
            std::span<double> out) const override {
    const double eps = probing_gain(policy_, obj_, theta);
    thread_local Vec plus, minus, shifted;
    shift_by_target(target_, theta, t, shifted);
    plus.resize(theta.size());
    minus.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
      plus[i] = shifted[i] + eps * psi[i];
      minus[i] = shifted[i] - eps * psi[i];
    }
    const double y = (obj_.value(plus) - obj_.value(minus)) / (2.0 * eps);
    for (std::size_t i = 0; i < theta.size(); ++i) out[i] = -psi[i] * y;
  }

 private:
  Objective obj_;
  ProbingGainPolicy policy_;
  std::optional<MovingTarget> target_;
};

class LinearExampleField final : public Field {
 public:
  LinearExampleField(LinearVariant variant, double omega) : variant_(variant), omega_(omega) {
    if (!(omega > 0.0)) throw NonPositive("linear example: omega must be positive");
  }

  int dim() const override { return 1; }
  int probe_dim() const override { return 0; }

  void eval(std::span<const double> theta, std::span<const double>, double t,
            std::span<double> out) const override {
    const double s = std::sin(omega_ * t);
    const double forcing =
        variant_ == LinearVariant::A ? 2.0 * s + 1.0 : 2.0 * std::cos(omega_ * t) + 1.0;
    out[0] = -(1.0 + s) * theta[0] + forcing;
  }

  bool has_jacobian() const override { return true; }
  void jacobian(std::span<const double>, std::span<const double>, double t,
                Mat& out) const override {
    out = Mat(1, 1);
    out(0, 0) = -(1.0 + std::sin(omega_ * t));
  }

  double intrinsic_max_omega() const override { return omega_; }

 private:
  LinearVariant variant_;
  double omega_;
};

class GeneralLinearField final : public Field {
 public:
  GeneralLinearField(Mat a0, std::vector<Mat> a_probe)
      : a0_(std::move(a0)), a_probe_(std::move(a_probe)) {
    const int d = a0_.rows();
    if (a0_.cols() != d) throw DimensionMismatch("general linear: A0 must be square");
    for (const Mat& a : a_probe_)
      if (a.rows() != d || a.cols() != d)
        throw DimensionMismatch("general linear: probe matrices must match A0");
  }

  int dim() const override { return a0_.rows(); }
  int probe_dim() const override { return static_cast<int>(a_probe_.size()); }

  void eval(std::span<const double> theta, std::span<const double> psi, double,
            std::span<double> out) const override {
    const int d = a0_.rows();
    for (int i = 0; i < d; ++i) {
      double s = 0.0;
      for (int j = 0; j < d; ++j) {
        double aij = a0_(i, j);
        for (std::size_t k = 0; k < a_probe_.size(); ++k) aij += psi[k] * a_probe_[k](i, j);
        s += aij * theta[j];
      }
      out[i] = s;
    }
  }

  bool has_jacobian() const override { return true; }
  void jacobian(std::span<const double>, std::span<const double> psi, double,
                Mat& out) const override {
    out = a0_;
    for (std::size_t k = 0; k < a_probe_.size(); ++k) {
      for (int i = 0; i < a0_.rows(); ++i)
        for (int j = 0; j < a0_.cols(); ++j) out(i, j) += psi[k] * a_probe_[k](i, j);
    }
  }

 private:
  Mat a0_;
  std::vector<Mat> a_probe_;
};

class CustomField final : public Field {
 public:
  CustomField(int dim, int probe_dim,
              std::function<void(std::span<const double>, std::span<const double>, double,
                                 std::span<double>)> fn,
              double max_omega)
      : dim_(dim), probe_dim_(probe_dim), fn_(std::move(fn)), max_omega_(max_omega) {}

  int dim() const override { return dim_; }
  int probe_dim() const override { return probe_dim_; }
  void eval(std::span<const double> theta, std::span<const double> psi, double t,
            std::span<double> out) const override {
    fn_(theta, psi, t, out);
  }
  double intrinsic_max_omega() const override { return max_omega_; }

 private:
  int dim_, probe_dim_;
  std::function<void(std::span<const double>, std::span<const double>, double, std::span<double>)>
      fn_;
  double max_omega_;
};

// Zero-initial-state response of the (F,G,H,J) filter to each probe
// coordinate, evaluated in closed form: steady sinusoidal response plus the
// e^{Ft} transient that cancels the state at t = 0.
class FilteredProbe {
 public:
  FilteredProbe() = default;

  FilteredProbe(const Mat& f, const Vec& g, const Vec& h, double j, const ProbeSpec& probe)
      : q_(f.rows()), m_(probe.dimension()), f_(f), h_(h), j_(j), probe_(probe) {
    using cd = std::complex<double>;
    for (int i = 0; i < m_; ++i) {
      Coord coord;
      const TrigPolynomial poly = probe.coordinate(i);
      std::vector<cd> z0(q_, 0.0);
      for (const TrigTerm& term : poly.terms()) {
        // (j*omega*I - F) x = G, scaled by the term amplitude.
        std::vector<cd> mat(static_cast<std::size_t>(q_) * q_);
        for (int r = 0; r < q_; ++r)
          for (int c = 0; c < q_; ++c)
            mat[static_cast<std::size_t>(r) * q_ + c] =
                (r == c ? cd(0.0, term.omega) : cd(0.0, 0.0)) - cd(f(r, c), 0.0);
        std::vector<cd> rhs(q_);
        for (int r = 0; r < q_; ++r) rhs[r] = cd(g[r], 0.0);
        std::vector<cd> x = solve_complex(std::move(mat), std::move(rhs), q_);
        const cd ephase(std::cos(term.phase), std::sin(term.phase));
        for (int r = 0; r < q_; ++r) {
          x[r] *= term.amplitude * ephase;
          z0[r] += x[r];  // e^{j*0} = 1 at t = 0
        }
        coord.terms.push_back({term.omega, std::move(x)});
      }
      coord.z0 = std::move(z0);
      coords_.push_back(std::move(coord));
    }
  }

  // psi_check_i(t) = H^T z_i(t) + J psi_i(t)
  void eval(double t, std::span<const double> psi, std::span<double> out) const {
    const Mat eft = expm(f_ * t);
    for (int i = 0; i < m_; ++i) {
      double y = j_ * psi[i];
      const Coord& coord = coords_[i];
      for (const auto& term : coord.terms) {
        const std::complex<double> rot(std::cos(term.omega * t), std::sin(term.omega * t));
        for (int r = 0; r < q_; ++r) y += h_[r] * (term.x[r] * rot).real();
      }
      // transient: -H^T e^{Ft} Re(z0)
      for (int r = 0; r < q_; ++r) {
        double s = 0.0;
        for (int c = 0; c < q_; ++c) s += eft(r, c) * coord.z0[c].real();
        y -= h_[r] * s;
      }
      out[i] = y;
    }
  }

 private:
  struct TermResponse {
    double omega;
    std::vector<std::complex<double>> x;
  };
  struct Coord {
    std::vector<TermResponse> terms;
    std::vector<std::complex<double>> z0;
  };
  int q_ = 0, m_ = 0;
  Mat f_;
  Vec h_;
  double j_ = 1.0;
  ProbeSpec probe_;
  std::vector<Coord> coords_;
};

class EscField final : public Field {
 public:
  explicit EscField(EscSpec spec) : spec_(std::move(spec)) {
    d_ = spec_.objective.dim;
    q_ = spec_.f.rows();
    if (spec_.probe.dimension() != d_) throw DimensionMismatch("esc: probe dimension != d");
    if (q_ > 0) {
      if (spec_.f.cols() != q_ || static_cast<int>(spec_.g.size()) != q_ ||
          static_cast<int>(spec_.h.size()) != q_)
        throw DimensionMismatch("esc: high-pass realization shapes disagree");
      if (!is_hurwitz(spec_.f)) throw NonPositive("esc: F must be Hurwitz");
      filtered_ = FilteredProbe(spec_.f, spec_.g, spec_.h, spec_.j, spec_.probe);
    }
    if (!spec_.theta_ctr.empty() && static_cast<int>(spec_.theta_ctr.size()) != d_)
      throw DimensionMismatch("esc: theta_ctr dimension");
    if (!(spec_.alpha > 0.0)) throw NonPositive("esc: alpha must be positive");
    if (spec_.sigma > 0.0 && !(spec_.sigma < spec_.alpha))
      throw NonPositive("esc: need 0 < sigma < alpha");
  }

  int dim() const override { return d_ + q_; }
  int probe_dim() const override { return d_; }

  void eval(std::span<const double> x, std::span<const double> psi, double t,
            std::span<double> out) const override {
    const auto theta = x.first(d_);
    const auto z = x.subspan(d_);
    const double yn = normalized_observation(spec_.objective, spec_.policy, theta, psi);

    thread_local Vec psicheck;
    psicheck.resize(d_);
    if (q_ == 0) {
      for (int i = 0; i < d_; ++i) psicheck[i] = spec_.j * psi[i];
    } else {
      filtered_.eval(t, psi, psicheck);
    }

    double hz = 0.0;
    for (int r = 0; r < q_; ++r) hz += spec_.h[r] * z[r];
    const double demod = hz + spec_.j * yn;
    for (int i = 0; i < d_; ++i) {
      const double ctr = spec_.theta_ctr.empty() ? 0.0 : spec_.theta_ctr[i];
      out[i] = -spec_.sigma * (theta[i] - ctr) - spec_.alpha * psicheck[i] * demod;
    }
    for (int r = 0; r < q_; ++r) {
      double s = spec_.g[r] * yn;
      for (int c = 0; c < q_; ++c) s += spec_.f(r, c) * z[c];
      out[d_ + r] = s;
    }
  }

  double intrinsic_max_omega() const override { return spec_.probe.max_omega(); }

 private:
  EscSpec spec_;
  int d_ = 0, q_ = 0;
  FilteredProbe filtered_;
};

}  // namespace

FieldPtr qsgd1_field(Objective obj, ProbingGainPolicy policy, std::optional<MovingTarget> target) {
  return std::make_shared<Qsgd1Field>(std::move(obj), std::move(policy), std::move(target));
}

FieldPtr qsgd2_field(Objective obj, ProbingGainPolicy policy, std::optional<MovingTarget> target) {
  return std::make_shared<Qsgd2Field>(std::move(obj), std::move(policy), std::move(target));
}

FieldPtr linear_example_field(LinearVariant variant, double omega) {
  return std::make_shared<LinearExampleField>(variant, omega);
}

FieldPtr general_linear_field(Mat a0, std::vector<Mat> a_probe) {
  return std::make_shared<GeneralLinearField>(std::move(a0), std::move(a_probe));
}

FieldPtr custom_field(int dim, int probe_dim,
                      std::function<void(std::span<const double>, std::span<const double>, double,
                                         std::span<double>)> fn,
                      double intrinsic_max_omega) {
  return std::make_shared<CustomField>(dim, probe_dim, std::move(fn), intrinsic_max_omega);
}

FieldPtr esc_assemble(const EscSpec& spec) { return std::make_shared<EscField>(spec); }

Vec esc_filtered_probe(const EscSpec& spec, double t) {
  const int m = spec.probe.dimension();
  Vec psi(m), out(m);
  spec.probe.value(t, psi);
  if (spec.f.rows() == 0) {
    for (int i = 0; i < m; ++i) out[i] = spec.j * psi[i];
    return out;
  }
  const FilteredProbe filtered(spec.f, spec.g, spec.h, spec.j, spec.probe);
  filtered.eval(t, psi, out);
  return out;
}

double normalized_observation(const Objective& obj, const ProbingGainPolicy& policy,
                              std::span<const double> theta, std::span<const double> psi) {
  const double eps = probing_gain(policy, obj, theta);
  Vec point(theta.size());
  for (std::size_t i = 0; i < theta.size(); ++i) point[i] = theta[i] + eps * psi[i];
  return obj.value(point) / eps;
}

LinearClosedForms linear_example_closed_forms(LinearVariant variant, double omega) {
  if (!(omega > 0.0)) throw NonPositive("closed forms: omega must be positive");
  LinearClosedForms cf;
  cf.variant = variant;
  cf.omega = omega;
  // Both variants: d f_hat / d theta = -cos(wt)/w.
  cf.fhat_slope = TrigPolynomial::cosine(-1.0 / omega, omega);
  if (variant == LinearVariant::A) {
    // f_hat(theta, t) = -(theta - 2) cos(wt)/w
    cf.fhat_const = TrigPolynomial::cosine(2.0 / omega, omega);
    cf.upsilon_bar = 0.0;
    cf.ybar_star = 0.0;
  } else {
    // f_hat(theta, t) = -(theta cos(wt) + 2 sin(wt))/w
    cf.fhat_const = TrigPolynomial::sine(-2.0 / omega, omega);
    cf.upsilon_bar = 1.0 / omega;
    cf.ybar_star = -1.0 / omega;  // A* = -1
  }
  return cf;
}

Vec spsa_step(const SpsaSpec& spec, std::span<const double> theta, double alpha, SplitMix64& rng) {
  const int d = spec.objective.dim;
  Vec xi(d);
  for (int i = 0; i < d; ++i) xi[i] = spec.support * rng.sign();
  Vec out(theta.begin(), theta.end());
  if (alpha == 0.0) return out;

  Vec plus(d), minus(d);
  for (int i = 0; i < d; ++i) {
    plus[i] = theta[i] + spec.eps * xi[i];
    minus[i] = theta[i] - spec.eps * xi[i];
  }
  double y;
  if (spec.order == 1) {
    y = spec.objective.value(plus) / spec.eps;
  } else {
    y = (spec.objective.value(plus) - spec.objective.value(minus)) / (2.0 * spec.eps);
  }
  for (int i = 0; i < d; ++i) out[i] -= alpha * xi[i] * y;
  return out;
}

MeanFieldEstimate mean_field_oracle(const Field& field, const ProbeSpec& probe,
                                    std::span<const double> theta, double t_horizon, double dt) {
  const int d = field.dim();
  const std::size_t n = static_cast<std::size_t>(std::llround(t_horizon / dt));
  const std::size_t half = n / 2;
  Vec acc(d, 0.0), acc_half(d, 0.0), f(d), psi(probe.dimension());
  for (std::size_t k = 0; k <= n; ++k) {
    const double t = static_cast<double>(k) * dt;
    probe.value(t, psi);
    field.eval(theta, psi, t, f);
    const double w = (k == 0 || k == n) ? 0.5 : 1.0;
    for (int i = 0; i < d; ++i) acc[i] += w * f[i];
    if (k <= half) {
      const double wh = (k == 0 || k == half) ? 0.5 : 1.0;
      for (int i = 0; i < d; ++i) acc_half[i] += wh * f[i];
    }
  }
  MeanFieldEstimate est;
  est.value.resize(d);
  double gap = 0.0;
  for (int i = 0; i < d; ++i) {
    est.value[i] = acc[i] * dt / (static_cast<double>(n) * dt);
    const double half_val = acc_half[i] * dt / (static_cast<double>(half) * dt);
    gap += (est.value[i] - half_val) * (est.value[i] - half_val);
  }
  est.half_horizon_gap = std::sqrt(gap);
  return est;
}

Mat field_jacobian(const Field& field, std::span<const double> theta, std::span<const double> psi,
                   double t, const Vec* box_lo, const Vec* box_hi) {
  const int d = field.dim();
  if (box_lo && box_hi) {
    for (int i = 0; i < d; ++i) {
      if (std::abs(theta[i] - (*box_lo)[i]) < 1e-12 || std::abs(theta[i] - (*box_hi)[i]) < 1e-12)
        throw NonDifferentiable("field_jacobian: theta on projection boundary");
    }
  }
  Mat out(d, d);
  if (field.has_jacobian()) {
    field.jacobian(theta, psi, t, out);
    return out;
  }
  const double step = 1e-6;
  Vec probe(theta.begin(), theta.end());
  Vec fp(d), fm(d);
  for (int j = 0; j < d; ++j) {
    const double save = probe[j];
    probe[j] = save + step;
    field.eval(probe, psi, t, fp);
    probe[j] = save - step;
    field.eval(probe, psi, t, fm);
    probe[j] = save;
    for (int i = 0; i < d; ++i) out(i, j) = (fp[i] - fm[i]) / (2.0 * step);
  }
  return out;
}

}  // namespace qsa
