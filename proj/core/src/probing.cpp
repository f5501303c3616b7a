#include "qsakit/probing.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>

#include "qsakit/errors.hpp"

namespace qsa {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Screens integer combinations sum n_i * omega_i, 0 < max|n_i| <= depth,
// for near-cancellation. Exhaustive over (2*depth+1)^K - 1 combinations.
void screen_independence(const std::vector<double>& omegas) {
  const int k = static_cast<int>(omegas.size());
  if (k <= 1) return;
  const int depth = FrequencyBasis::kScreenDepth;
  const int radix = 2 * depth + 1;
  double combos = 1.0;
  for (int i = 0; i < k; ++i) combos *= radix;
  if (combos > 1e8)
    throw DependentFrequencies("independence screen: too many frequencies to verify");

  std::vector<int> n(k, -depth);
  while (true) {
    bool all_zero = true;
    double s = 0.0;
    for (int i = 0; i < k; ++i) {
      if (n[i] != 0) all_zero = false;
      s += n[i] * omegas[i];
    }
    if (!all_zero && std::abs(s) <= FrequencyBasis::kScreenTolerance)
      throw DependentFrequencies("independence screen: integer combination vanishes");
    int i = 0;
    for (; i < k; ++i) {
      if (n[i] < depth) {
        ++n[i];
        break;
      }
      n[i] = -depth;
    }
    if (i == k) break;
  }
}

double wrap_cycles(double x) {
  double f = x - std::floor(x);
  if (f >= 1.0) f -= 1.0;  // guard against floor rounding at the boundary
  return f;
}

// Canonical (omega, phase) form: omega >= 0, phase in [0, pi) with the sign
// folded into the amplitude, constants reduced to phase 0.
TrigTerm canonical(TrigTerm t) {
  if (t.omega < 0.0) {
    t.omega = -t.omega;
    t.phase = -t.phase;
  }
  if (t.omega == 0.0) {
    t.amplitude *= std::cos(t.phase);
    t.phase = 0.0;
    return t;
  }
  const double pi = std::numbers::pi;
  t.phase = std::fmod(t.phase, kTwoPi);
  if (t.phase < 0.0) t.phase += kTwoPi;
  if (t.phase >= pi) {
    t.phase -= pi;
    t.amplitude = -t.amplitude;
  }
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// FrequencyBasis

FrequencyBasis FrequencyBasis::log_ratios(const std::vector<LogRatio>& pairs) {
  FrequencyBasis basis;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto [a, b] = pairs[i];
    if (b < 1 || a <= b) throw NonPositive("log_ratios: need a > b >= 1");
    for (std::size_t j = 0; j < i; ++j) {
      // ln(a_i/b_i) == ln(a_j/b_j)  <=>  a_i*b_j == a_j*b_i, checked exactly.
      if (pairs[i].a * pairs[j].b == pairs[j].a * pairs[i].b)
        throw DuplicateRatio("log_ratios: two pairs give the same frequency");
    }
    basis.omegas_.push_back(std::log(static_cast<double>(a) / static_cast<double>(b)));
    basis.provenance_.push_back(pairs[i]);
  }
  screen_independence(basis.omegas_);
  return basis;
}

FrequencyBasis FrequencyBasis::periodic(double omega1, const std::vector<long long>& multipliers) {
  if (!(omega1 > 0.0)) throw NonPositive("periodic: omega1 must be positive");
  FrequencyBasis basis;
  basis.omegas_.push_back(omega1);
  basis.provenance_.push_back(std::nullopt);
  long long prev = 1;
  for (long long n : multipliers) {
    if (n <= prev) throw NonIncreasingMultipliers("periodic: multipliers must increase from 1");
    prev = n;
    basis.omegas_.push_back(static_cast<double>(n) * omega1);
    basis.provenance_.push_back(std::nullopt);
  }
  return basis;
}

FrequencyBasis FrequencyBasis::raw(std::vector<double> omegas, bool screen) {
  FrequencyBasis basis;
  for (std::size_t i = 0; i < omegas.size(); ++i) {
    if (!(omegas[i] > 0.0)) throw NonPositive("raw: frequencies must be positive");
    for (std::size_t j = 0; j < i; ++j)
      if (omegas[i] == omegas[j]) throw DuplicateRatio("raw: duplicate frequency");
  }
  basis.omegas_ = std::move(omegas);
  basis.provenance_.assign(basis.omegas_.size(), std::nullopt);
  if (screen) screen_independence(basis.omegas_);
  return basis;
}

double FrequencyBasis::min_omega() const {
  double m = 0.0;
  for (double w : omegas_) m = (m == 0.0) ? w : std::min(m, w);
  return m;
}

double FrequencyBasis::max_omega() const {
  double m = 0.0;
  for (double w : omegas_) m = std::max(m, w);
  return m;
}

// ---------------------------------------------------------------------------
// ClockState

ClockState::ClockState(FrequencyBasis basis)
    : basis_(std::move(basis)), phases_(basis_.size(), 0.0) {}

ClockState::ClockState(FrequencyBasis basis, std::vector<double> phases_cycles)
    : basis_(std::move(basis)), phases_(std::move(phases_cycles)) {
  if (phases_.size() != basis_.size())
    throw DimensionMismatch("ClockState: one phase per basis frequency");
  for (double& p : phases_) p = wrap_cycles(p);
}

void ClockState::advance(double dt) {
  assert(dt >= 0.0);
  for (std::size_t i = 0; i < phases_.size(); ++i)
    phases_[i] = wrap_cycles(phases_[i] + basis_.omega(i) * dt / kTwoPi);
}

std::complex<double> ClockState::phasor(std::size_t i) const {
  const double a = kTwoPi * phases_[i];
  return {std::cos(a), std::sin(a)};
}

ClockState advance_clock(ClockState state, double dt) {
  state.advance(dt);
  return state;
}

// ---------------------------------------------------------------------------
// TrigPolynomial

TrigPolynomial::TrigPolynomial(std::vector<TrigTerm> terms) : terms_(std::move(terms)) {
  for (TrigTerm& t : terms_) t = canonical(t);
  canonicalize();
}

TrigPolynomial TrigPolynomial::constant(double c) {
  return TrigPolynomial({TrigTerm{c, 0.0, 0.0}});
}

TrigPolynomial TrigPolynomial::cosine(double amp, double omega, double phase) {
  return TrigPolynomial({TrigTerm{amp, omega, phase}});
}

TrigPolynomial TrigPolynomial::sine(double amp, double omega, double phase) {
  // sin(x) = cos(x - pi/2)
  return TrigPolynomial({TrigTerm{amp, omega, phase - std::numbers::pi / 2.0}});
}

TrigPolynomial TrigPolynomial::cycles(double amp, double omega_cycles, double phase_cycles) {
  return TrigPolynomial({TrigTerm{amp, kTwoPi * omega_cycles, kTwoPi * phase_cycles}});
}

double TrigPolynomial::operator()(double t) const {
  double s = 0.0;
  for (const TrigTerm& term : terms_) s += term.amplitude * std::cos(term.omega * t + term.phase);
  return s;
}

double TrigPolynomial::mean() const {
  double s = 0.0;
  for (const TrigTerm& term : terms_)
    if (term.omega == 0.0) s += term.amplitude;
  return s;
}

double TrigPolynomial::sup_norm_bound() const {
  double s = 0.0;
  for (const TrigTerm& term : terms_) s += std::abs(term.amplitude);
  return s;
}

double TrigPolynomial::max_omega() const {
  double m = 0.0;
  for (const TrigTerm& term : terms_) m = std::max(m, term.omega);
  return m;
}

void TrigPolynomial::push_term(TrigTerm t) { terms_.push_back(canonical(t)); }

void TrigPolynomial::canonicalize() {
  std::sort(terms_.begin(), terms_.end(), [](const TrigTerm& a, const TrigTerm& b) {
    if (a.omega != b.omega) return a.omega < b.omega;
    return a.phase < b.phase;
  });
  std::vector<TrigTerm> merged;
  for (const TrigTerm& t : terms_) {
    if (!merged.empty() && merged.back().omega == t.omega && merged.back().phase == t.phase)
      merged.back().amplitude += t.amplitude;
    else
      merged.push_back(t);
  }
  std::erase_if(merged, [](const TrigTerm& t) { return t.amplitude == 0.0; });
  terms_ = std::move(merged);
}

TrigPolynomial& TrigPolynomial::operator+=(const TrigPolynomial& o) {
  for (const TrigTerm& t : o.terms_) terms_.push_back(t);
  canonicalize();
  return *this;
}

TrigPolynomial TrigPolynomial::operator*(double s) const {
  std::vector<TrigTerm> terms = terms_;
  for (TrigTerm& t : terms) t.amplitude *= s;
  return TrigPolynomial(std::move(terms));
}

TrigPolynomial TrigPolynomial::derivative() const {
  std::vector<TrigTerm> terms;
  for (const TrigTerm& t : terms_) {
    if (t.omega == 0.0) continue;
    // d/dt amp*cos(wt+p) = -amp*w*sin(wt+p) = amp*w*cos(wt+p+pi/2)
    terms.push_back(TrigTerm{t.amplitude * t.omega, t.omega, t.phase + std::numbers::pi / 2.0});
  }
  return TrigPolynomial(std::move(terms));
}

TrigPolynomial TrigPolynomial::product(const TrigPolynomial& p, const TrigPolynomial& q) {
  // cos(x)cos(y) = (cos(x-y) + cos(x+y)) / 2
  TrigPolynomial out;
  for (const TrigTerm& a : p.terms_) {
    for (const TrigTerm& b : q.terms_) {
      const double c = 0.5 * a.amplitude * b.amplitude;
      if (a.omega == 0.0 && b.omega == 0.0) {
        out.push_term(TrigTerm{2.0 * c, 0.0, 0.0});
        continue;
      }
      out.push_term(TrigTerm{c, a.omega - b.omega, a.phase - b.phase});
      out.push_term(TrigTerm{c, a.omega + b.omega, a.phase + b.phase});
    }
  }
  out.canonicalize();
  return out;
}

TrigPolynomial operator+(TrigPolynomial a, const TrigPolynomial& b) {
  a += b;
  return a;
}

PoissonSolution poisson_solve(const TrigPolynomial& forcing) {
  PoissonSolution out;
  std::vector<TrigTerm> terms;
  for (const TrigTerm& t : forcing.terms()) {
    if (t.omega == 0.0) {
      out.mean += t.amplitude;
      continue;
    }
    // d/dt h_hat = -(h - h_bar):  c*cos(wt+p) forces -(c/w)*sin(wt+p).
    terms.push_back(TrigTerm{-t.amplitude / t.omega, t.omega, t.phase - std::numbers::pi / 2.0});
  }
  out.solution = TrigPolynomial(std::move(terms));
  return out;
}

// ---------------------------------------------------------------------------
// ProbeSpec

ProbeSpec::ProbeSpec(FrequencyBasis basis, int dimension)
    : basis_(std::move(basis)), dimension_(dimension), coords_(dimension) {
  if (dimension < 0) throw DimensionMismatch("ProbeSpec: negative dimension");
}

ProbeSpec ProbeSpec::sinusoids(int dimension, const std::vector<ProbeTermSpec>& terms,
                               bool screen) {
  // Convert to canonical radian/cos form, collect distinct frequencies.
  struct Canon {
    int dim;
    double amp, omega, phase;
  };
  std::vector<Canon> canon;
  std::vector<double> freqs;
  for (const ProbeTermSpec& ts : terms) {
    if (ts.dim < 0 || ts.dim >= dimension) throw DimensionMismatch("probe term: bad coordinate");
    double omega, phase;
    if (ts.convention == ProbeConvention::TwoPiCycles) {
      omega = kTwoPi * ts.omega;
      phase = kTwoPi * ts.phase;
    } else {
      omega = ts.omega;
      phase = ts.phase - std::numbers::pi / 2.0;  // sin -> cos
    }
    if (omega < 0.0) {
      omega = -omega;
      phase = -phase;
    }
    canon.push_back({ts.dim, ts.amplitude, omega, phase});
    if (omega > 0.0 && std::find(freqs.begin(), freqs.end(), omega) == freqs.end())
      freqs.push_back(omega);
  }
  std::sort(freqs.begin(), freqs.end());
  ProbeSpec spec(FrequencyBasis::raw(freqs, screen), dimension);
  for (const Canon& c : canon) {
    if (c.omega == 0.0) {
      spec.add_constant(c.dim, c.amp * std::cos(c.phase));
    } else {
      const auto it = std::find(freqs.begin(), freqs.end(), c.omega);
      spec.add_term(c.dim, c.amp, static_cast<std::size_t>(it - freqs.begin()), c.phase);
    }
  }
  return spec;
}

void ProbeSpec::add_term(int coordinate, double amplitude, std::size_t basis_index,
                         double phase_rad) {
  if (coordinate < 0 || coordinate >= dimension_)
    throw DimensionMismatch("add_term: coordinate out of range");
  if (basis_index >= basis_.size()) throw DimensionMismatch("add_term: bad basis index");
  coords_[coordinate].push_back(Term{amplitude, static_cast<int>(basis_index), phase_rad});
}

void ProbeSpec::add_constant(int coordinate, double value) {
  if (coordinate < 0 || coordinate >= dimension_)
    throw DimensionMismatch("add_constant: coordinate out of range");
  coords_[coordinate].push_back(Term{value, -1, 0.0});
}

void ProbeSpec::value(double t, std::span<double> out) const {
  for (int i = 0; i < dimension_; ++i) {
    double s = 0.0;
    for (const Term& term : coords_[i]) {
      if (term.freq_index < 0)
        s += term.amplitude;
      else
        s += term.amplitude * std::cos(basis_.omega(term.freq_index) * t + term.phase);
    }
    out[i] = s;
  }
}

void ProbeSpec::value(const ClockState& clock, std::span<double> out) const {
  if (clock.size() != basis_.size())
    throw DimensionMismatch("probe_value: clock does not match probe basis");
  for (int i = 0; i < dimension_; ++i) {
    double s = 0.0;
    for (const Term& term : coords_[i]) {
      if (term.freq_index < 0)
        s += term.amplitude;
      else
        s += term.amplitude * std::cos(kTwoPi * clock.phase(term.freq_index) + term.phase);
    }
    out[i] = s;
  }
}

Vec ProbeSpec::value(double t) const {
  Vec out(dimension_);
  value(t, out);
  return out;
}

Vec ProbeSpec::value(const ClockState& clock) const {
  Vec out(dimension_);
  value(clock, out);
  return out;
}

TrigPolynomial ProbeSpec::coordinate(int i) const {
  std::vector<TrigTerm> terms;
  for (const Term& term : coords_[i]) {
    if (term.freq_index < 0)
      terms.push_back(TrigTerm{term.amplitude, 0.0, 0.0});
    else
      terms.push_back(TrigTerm{term.amplitude, basis_.omega(term.freq_index), term.phase});
  }
  return TrigPolynomial(std::move(terms));
}

double ProbeSpec::max_omega() const { return basis_.max_omega(); }

bool ProbeSpec::has_zero_frequency_terms() const {
  for (const auto& coord : coords_)
    for (const Term& term : coord)
      if (term.freq_index < 0 && term.amplitude != 0.0) return true;
  return false;
}

std::vector<ProbeTermSpec> ProbeSpec::terms() const {
  std::vector<ProbeTermSpec> out;
  for (int i = 0; i < dimension_; ++i) {
    for (const Term& term : coords_[i]) {
      ProbeTermSpec ts;
      ts.dim = i;
      ts.amplitude = term.amplitude;
      ts.omega = term.freq_index < 0 ? 0.0 : basis_.omega(term.freq_index) / kTwoPi;
      ts.phase = term.phase / kTwoPi;
      ts.convention = ProbeConvention::TwoPiCycles;
      out.push_back(ts);
    }
  }
  return out;
}

Vec probe_value(const ProbeSpec& spec, double t) { return spec.value(t); }
Vec probe_value(const ProbeSpec& spec, const ClockState& clock) { return spec.value(clock); }

// ---------------------------------------------------------------------------
// probe_poisson

const TrigPolynomial& ProbePoisson::sigma_hat_at(int i, int j) const {
  return sigma_hat[static_cast<std::size_t>(i) * psi_hat.dimension() + j];
}

ProbePoisson probe_poisson(const ProbeSpec& spec) {
  const int d = spec.dimension();
  if (spec.has_zero_frequency_terms())
    throw Error("probe_poisson: zero-frequency probe terms are not supported");

  // Every frequency must come with a single phase; otherwise the probe has
  // no realization over distinct-frequency phasors and the closed forms here
  // do not apply (expand the products through poisson_solve instead).
  std::vector<TrigPolynomial> coords(d);
  std::vector<std::pair<double, double>> seen;  // (omega, phase)
  for (int i = 0; i < d; ++i) {
    coords[i] = spec.coordinate(i);
    for (const TrigTerm& t : coords[i].terms()) {
      for (const auto& [w, p] : seen) {
        if (w == t.omega && std::abs(p - t.phase) > 1e-12)
          throw SharedFrequency(
              "probe_poisson: frequency appears with two phases; cross-term means do not vanish");
      }
      seen.emplace_back(t.omega, t.phase);
    }
  }

  ProbePoisson out;
  out.psi_hat = ProbeSpec(spec.basis(), d);
  for (int i = 0; i < d; ++i) {
    const PoissonSolution sol = poisson_solve(coords[i]);
    for (const TrigTerm& t : sol.solution.terms()) {
      // Map the solution frequency back onto the basis (same frequencies).
      for (std::size_t k = 0; k < spec.basis().size(); ++k) {
        if (spec.basis().omega(k) == t.omega) {
          out.psi_hat.add_term(i, t.amplitude, k, t.phase);
          break;
        }
      }
    }
  }

  out.sigma = Mat(d, d);
  out.sigma_hat.assign(static_cast<std::size_t>(d) * d, TrigPolynomial());
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const TrigPolynomial prod = TrigPolynomial::product(coords[i], coords[j]);
      const PoissonSolution sol = poisson_solve(prod);
      out.sigma(i, j) = sol.mean;
      out.sigma(j, i) = sol.mean;
      out.sigma_hat[static_cast<std::size_t>(i) * d + j] = sol.solution;
      out.sigma_hat[static_cast<std::size_t>(j) * d + i] = sol.solution;
    }
  }
  return out;
}

}  // namespace qsa
