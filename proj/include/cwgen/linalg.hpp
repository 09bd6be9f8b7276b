#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace cwgen::linalg {

/// Dense row-major real matrix. Used for the small d x d and d x T blocks that
/// appear throughout the library; not intended for large problems.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);
  static Matrix diagonal(std::span<const double> values);
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }

  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  Matrix transpose() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator*(const Matrix& a, const Matrix& b);
Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double s, const Matrix& a);
std::vector<double> operator*(const Matrix& a, std::span<const double> x);

/// Eigen-decomposition of a symmetric matrix. Values are sorted in descending
/// order and column i of `vectors` is the unit eigenvector for values[i].
struct EigenPair {
  std::vector<double> values;
  Matrix vectors;
};

/// Signed square-root powers used by conditional whitening.
enum class RootPower { kInverseSqrt, kSqrt };

inline constexpr double kSymmetryTolerance = 1e-12;
inline constexpr double kJacobiTolerance = 1e-12;
inline constexpr int kJacobiMaxSweeps = 100;
inline constexpr double kEigenClamp = 1e-12;

bool is_symmetric(const Matrix& a, double rel_tol = kSymmetryTolerance);
bool all_finite(const Matrix& a);

/// (a + a^T) / 2; removes round-off asymmetry from products such as A B A.
Matrix symmetrize(const Matrix& a);

/// Cyclic Jacobi eigensolver.
/// Throws ContractViolation for non-square, non-symmetric or non-finite input
/// and NumericError if the off-diagonal mass does not fall below
/// kJacobiTolerance * ||a||_F within kJacobiMaxSweeps sweeps.
EigenPair sym_eigen(const Matrix& a);

/// a^{+1/2} or a^{-1/2} through the eigen-decomposition.
/// For kSqrt, eigenvalues in [-kEigenClamp, 0] are clamped to zero and anything
/// more negative is a ContractViolation. For kInverseSqrt, a minimum eigenvalue
/// <= kEigenClamp raises SingularityError.
Matrix sym_power(const Matrix& a, RootPower k);
Matrix sym_power(const EigenPair& eig, RootPower k);

/// V f(Lambda) V^T for an arbitrary spectral map.
template <class F>
Matrix spectral_map(const EigenPair& eig, F&& f) {
  const std::size_t n = eig.values.size();
  std::vector<double> fv(n);
  for (std::size_t k = 0; k < n; ++k) fv[k] = f(eig.values[k]);
  Matrix out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += eig.vectors(i, k) * fv[k] * eig.vectors(j, k);
      out(i, j) = s;
      out(j, i) = s;
    }
  }
  return out;
}

/// Sum of singular values. Symmetric input uses sum |eigenvalue|; other square
/// input falls back to the square roots of the eigenvalues of a^T a.
double nuclear_norm(const Matrix& a);
double frobenius_norm(const Matrix& a);

double trace(const Matrix& a);
double min_eigenvalue(const Matrix& a);

/// Lower Cholesky factor of an SPD matrix; SingularityError otherwise.
Matrix cholesky(const Matrix& a);

}  // namespace cwgen::linalg
