#pragma once

#include <complex>
#include <span>
#include <vector>

namespace qsa {

using Vec = std::vector<double>;

double norm2(std::span<const double> v);
double norm_inf(std::span<const double> v);
double dot(std::span<const double> a, std::span<const double> b);

/// Dense row-major matrix. Everything in this project is tiny (d <= ~50),
/// so no attempt is made at blocking or views.
class Mat {
 public:
  Mat() = default;
  Mat(int rows, int cols, double fill = 0.0)
      : rows_(rows), cols_(cols), a_(static_cast<std::size_t>(rows) * cols, fill) {}

  static Mat identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<std::size_t>(i) * cols_ + j]; }
  const std::vector<double>& data() const { return a_; }
  std::vector<double>& data() { return a_; }

  Mat transposed() const;
  Mat& operator+=(const Mat& o);
  Mat& operator*=(double s);

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

Mat operator*(const Mat& a, const Mat& b);
Mat operator+(Mat a, const Mat& b);
Mat operator*(Mat a, double s);
Vec mat_vec(const Mat& a, std::span<const double> x);

/// Solves A x = b by LU with partial pivoting. Throws SingularMatrix.
Vec lu_solve(Mat a, Vec b);

/// Cholesky factor of a symmetric matrix; returns false when not positive
/// definite (within a small diagonal tolerance).
bool cholesky(const Mat& a, Mat* lower = nullptr);

/// Largest singular value estimated by power iteration on A^T A.
double spectral_norm(const Mat& a, int iterations = 50);

/// e^A by scaling-and-squaring with a diagonal Pade(6) approximant.
Mat expm(const Mat& a);

/// True when all eigenvalues of A have negative real part, decided through
/// the Lyapunov equation A^T P + P A = -I (P must come out positive definite).
bool is_hurwitz(const Mat& a);

/// Eigenvalues of a 2x2 matrix.
std::pair<std::complex<double>, std::complex<double>> eig2(const Mat& a);

/// Solves the complex system M x = b by Gaussian elimination (tiny systems).
std::vector<std::complex<double>> solve_complex(
    std::vector<std::complex<double>> m, std::vector<std::complex<double>> b, int n);

/// Least squares line y = slope*x + intercept plus R^2.
struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};
LineFit fit_line(std::span<const double> x, std::span<const double> y);

}  // namespace qsa
