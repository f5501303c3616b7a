#include "qsakit/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "qsakit/errors.hpp"

namespace qsa {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double norm_inf(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s = std::max(s, std::abs(x));
  return s;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Mat Mat::identity(int n) {
  Mat m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Mat& Mat::operator+=(const Mat& o) {
  for (std::size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
  return *this;
}

Mat& Mat::operator*=(double s) {
  for (double& x : a_) x *= s;
  return *this;
}

Mat operator*(const Mat& a, const Mat& b) {
  Mat c(a.rows(), b.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

Mat operator+(Mat a, const Mat& b) {
  a += b;
  return a;
}

Mat operator*(Mat a, double s) {
  a *= s;
  return a;
}

Vec mat_vec(const Mat& a, std::span<const double> x) {
  Vec y(a.rows(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Vec lu_solve(Mat a, Vec b) {
  const int n = a.rows();
  if (a.cols() != n || static_cast<int>(b.size()) != n)
    throw DimensionMismatch("lu_solve: shape mismatch");
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;

  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(a(k, k));
    for (int i = k + 1; i < n; ++i) {
      if (std::abs(a(i, k)) > best) {
        best = std::abs(a(i, k));
        piv = i;
      }
    }
    if (best < 1e-300) throw SingularMatrix("lu_solve: singular matrix");
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      a(i, k) = 0.0;
      if (f == 0.0) continue;
      for (int j = k + 1; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  Vec x(n, 0.0);
  for (int i = n - 1; i >= 0; --i) {
    double s = b[i];
    for (int j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

bool cholesky(const Mat& a, Mat* lower) {
  const int n = a.rows();
  if (a.cols() != n) return false;
  Mat l(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      if (i == j) {
        if (s <= 0.0) return false;
        l(i, i) = std::sqrt(s);
      } else {
        l(i, j) = s / l(j, j);
      }
    }
  }
  if (lower) *lower = l;
  return true;
}

double spectral_norm(const Mat& a, int iterations) {
  const int n = a.cols();
  if (n == 0) return 0.0;
  // Power method on A^T A with a fixed deterministic start.
  Vec v(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double lambda = 0.0;
  for (int it = 0; it < iterations; ++it) {
    Vec av = mat_vec(a, v);
    Vec atav(n, 0.0);
    for (int j = 0; j < n; ++j) {
      double s = 0.0;
      for (int i = 0; i < a.rows(); ++i) s += a(i, j) * av[i];
      atav[j] = s;
    }
    lambda = norm2(atav);
    if (lambda == 0.0) return 0.0;
    for (int j = 0; j < n; ++j) v[j] = atav[j] / lambda;
  }
  return std::sqrt(lambda);
}

Mat expm(const Mat& a) {
  const int n = a.rows();
  double norm = 0.0;
  for (int i = 0; i < n; ++i) {
    double row = 0.0;
    for (int j = 0; j < n; ++j) row += std::abs(a(i, j));
    norm = std::max(norm, row);
  }
  int squarings = 0;
  if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  const double scale = std::ldexp(1.0, -squarings);

  Mat as = a;
  as *= scale;

  // Pade(6,6): N = sum c_k A^k, D = sum (-1)^k c_k A^k.
  static const double c[7] = {1.0, 0.5, 5.0 / 44.0, 1.0 / 66.0, 1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};
  Mat power = Mat::identity(n);
  Mat num(n, n), den(n, n);
  for (int k = 0; k <= 6; ++k) {
    if (k > 0) power = power * as;
    Mat term = power * c[k];
    num += term;
    if (k % 2 == 0)
      den += term;
    else
      den += term * -1.0;
  }
  // Solve den * X = num column by column.
  Mat x(n, n);
  for (int j = 0; j < n; ++j) {
    Vec b(n);
    for (int i = 0; i < n; ++i) b[i] = num(i, j);
    Vec col = lu_solve(den, std::move(b));
    for (int i = 0; i < n; ++i) x(i, j) = col[i];
  }
  for (int s = 0; s < squarings; ++s) x = x * x;
  return x;
}

bool is_hurwitz(const Mat& a) {
  const int n = a.rows();
  if (n == 0) return true;
  // Vectorized Lyapunov equation: (I (x) A^T + A^T (x) I) vec(P) = -vec(I).
  const int nn = n * n;
  Mat big(nn, nn);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) {
        big(i * n + j, k * n + j) += a(k, i);  // (A^T P)_{ij} contribution
        big(i * n + j, i * n + k) += a(k, j);  // (P A)_{ij} contribution
      }
  Vec rhs(nn, 0.0);
  for (int i = 0; i < n; ++i) rhs[i * n + i] = -1.0;
  Vec p;
  try {
    p = lu_solve(big, std::move(rhs));
  } catch (const SingularMatrix&) {
    return false;  // eigenvalue pair summing to zero: not Hurwitz
  }
  Mat pm(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) pm(i, j) = 0.5 * (p[i * n + j] + p[j * n + i]);
  return cholesky(pm);
}

std::pair<std::complex<double>, std::complex<double>> eig2(const Mat& a) {
  const double tr = a(0, 0) + a(1, 1);
  const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
  const std::complex<double> disc = std::sqrt(std::complex<double>(tr * tr - 4.0 * det, 0.0));
  return {(tr + disc) / 2.0, (tr - disc) / 2.0};
}

std::vector<std::complex<double>> solve_complex(std::vector<std::complex<double>> m,
                                                std::vector<std::complex<double>> b, int n) {
  for (int k = 0; k < n; ++k) {
    int piv = k;
    double best = std::abs(m[k * n + k]);
    for (int i = k + 1; i < n; ++i) {
      if (std::abs(m[i * n + k]) > best) {
        best = std::abs(m[i * n + k]);
        piv = i;
      }
    }
    if (best < 1e-300) throw SingularMatrix("solve_complex: singular matrix");
    if (piv != k) {
      for (int j = 0; j < n; ++j) std::swap(m[k * n + j], m[piv * n + j]);
      std::swap(b[k], b[piv]);
    }
    for (int i = k + 1; i < n; ++i) {
      const std::complex<double> f = m[i * n + k] / m[k * n + k];
      m[i * n + k] = 0.0;
      for (int j = k + 1; j < n; ++j) m[i * n + j] -= f * m[k * n + j];
      b[i] -= f * b[k];
    }
  }
  std::vector<std::complex<double>> x(n);
  for (int i = n - 1; i >= 0; --i) {
    std::complex<double> s = b[i];
    for (int j = i + 1; j < n; ++j) s -= m[i * n + j] * x[j];
    x[i] = s / m[i * n + i];
  }
  return x;
}

LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw DegenerateFit("fit_line: need at least two points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0) throw DegenerateFit("fit_line: x values are all equal");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
  return f;
}

}  // namespace qsa
