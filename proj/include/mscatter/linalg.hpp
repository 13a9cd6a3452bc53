#ifndef MSCATTER_LINALG_HPP
#define MSCATTER_LINALG_HPP

#include <cmath>
#include <initializer_list>
#include <string>
#include <vector>

#include "mscatter/errors.hpp"

// Small dense linear algebra core.  Everything is double precision and
// row-major.  Symmetric eigendecomposition is done with cyclic Jacobi
// sweeps, which is accurate and plenty fast for the matrix orders this
// library works with (p up to ~100).

namespace mscatter {

class Vector {
 public:
  Vector() = default;
  explicit Vector(int n, double value = 0.0) : v_(check_size(n), value) {}
  Vector(std::initializer_list<double> xs) : v_(xs) {}

  int size() const { return static_cast<int>(v_.size()); }
  double& operator[](int i) { return v_[static_cast<size_t>(i)]; }
  double operator[](int i) const { return v_[static_cast<size_t>(i)]; }
  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }

  Vector& operator+=(const Vector& o);
  Vector& operator-=(const Vector& o);
  Vector& operator*=(double s);

 private:
  static int check_size(int n) {
    if (n < 0) throw std::invalid_argument("Vector: negative size");
    return n;
  }
  std::vector<double> v_;
};

Vector operator+(Vector a, const Vector& b);
Vector operator-(Vector a, const Vector& b);
Vector operator*(double s, Vector a);
double dot(const Vector& a, const Vector& b);
double norm(const Vector& a);

class Matrix {
 public:
  Matrix() = default;
  Matrix(int rows, int cols, double value = 0.0);

  static Matrix identity(int n);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double& operator()(int i, int j) { return a_[static_cast<size_t>(i) * cols_ + j]; }
  double operator()(int i, int j) const { return a_[static_cast<size_t>(i) * cols_ + j]; }

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double s);

  Matrix transpose() const;
  double trace() const;
  double frob_norm() const;
  double max_abs() const;

 private:
  int rows_ = 0, cols_ = 0;
  std::vector<double> a_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);
Matrix operator*(const Matrix& a, const Matrix& b);
Vector operator*(const Matrix& a, const Vector& x);

// a += w * x x'
void add_outer(Matrix& a, const Vector& x, double w);
// x' M x for square M
double quad_form(const Matrix& m, const Vector& x);
// max_ij |a_ij - b_ij| relative to max_ij |a_ij| (0 when both are zero)
double rel_max_diff(const Matrix& a, const Matrix& b);
bool is_symmetric(const Matrix& a, double rel_tol = 1e-12);
// (a + a')/2
Matrix symmetrize(const Matrix& a);

struct EigenDecomposition {
  Vector values;   // descending
  Matrix vectors;  // orthonormal columns, vectors.col(i) pairs with values[i]
};

// Symmetric eigendecomposition via cyclic Jacobi.  The input must be
// symmetric to rel_tol; it is symmetrized exactly before the sweeps.
// Throws numerical_error if the off-diagonal mass fails to vanish.
EigenDecomposition sym_eig(const Matrix& a, double rel_tol = 1e-12);

// Cholesky factor L (lower, A = L L').  Pivots below rel_floor times the
// largest diagonal entry are treated as a singular iterate.
Matrix cholesky(const Matrix& a, double rel_floor = 1e-14);
Matrix spd_inverse(const Matrix& a);        // via Cholesky, exactly symmetric result
double spd_logdet(const Matrix& a);         // 2 sum log L_ii
Vector spd_solve(const Matrix& a, const Vector& b);

// inverse and log-determinant from a single factorization
struct SpdFactor {
  Matrix inverse;
  double logdet;
};
SpdFactor spd_factor(const Matrix& a);

// Symmetric matrix with validated symmetry.  Thin value type: the payload
// is an ordinary Matrix, symmetrized on construction.
class SymMatrix {
 public:
  explicit SymMatrix(const Matrix& a, double rel_tol = 1e-12);

  int dim() const { return m_.rows(); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }
  double trace() const { return m_.trace(); }
  double frob_norm() const { return m_.frob_norm(); }

 private:
  Matrix m_;
};

// Symmetric positive definite matrix.  Construction runs the Jacobi
// eigendecomposition once and keeps it, so spectral functions (inverse,
// fractional powers, log, log-det) are cheap afterwards.  Instances are
// immutable and safe to share across threads.
//
// Positive definiteness certificate: min eigenvalue > 1e-12 * max
// eigenvalue.  Anything flatter is rejected with a diagnostic rather than
// silently regularized.
class PDSMatrix {
 public:
  explicit PDSMatrix(const Matrix& a, double sym_tol = 1e-12);
  explicit PDSMatrix(const SymMatrix& a);

  int dim() const { return m_.rows(); }
  double operator()(int i, int j) const { return m_(i, j); }
  const Matrix& matrix() const { return m_; }
  const Vector& eigenvalues() const { return eig_.values; }
  const Matrix& eigenvectors() const { return eig_.vectors; }

  double trace() const { return m_.trace(); }
  double logdet() const;
  double condition() const;

  PDSMatrix inverse() const;
  // A^t for real t, through the eigendecomposition
  PDSMatrix power(double t) const;
  SymMatrix log() const;
  Matrix inverse_matrix() const;
  // x' A^{-1} x
  double mahalanobis(const Vector& x) const;

 private:
  struct raw_tag {};
  PDSMatrix(raw_tag, Matrix m, EigenDecomposition eig);
  void certify() const;

  Matrix m_;
  EigenDecomposition eig_;
};

PDSMatrix matrix_power(const PDSMatrix& a, double t);
SymMatrix matrix_log(const PDSMatrix& a);

// Point at parameter t on the geodesic from a to b:
//   a^{1/2} (a^{-1/2} b a^{-1/2})^t a^{1/2}
PDSMatrix geodesic_point(const PDSMatrix& a, const PDSMatrix& b, double t);

}  // namespace mscatter

#endif
