#include "mscatter/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mscatter {

namespace {

void require_same_size(int a, int b, const char* op) {
  if (a != b) {
    std::ostringstream os;
    os << op << ": size mismatch " << a << " vs " << b;
    throw std::invalid_argument(os.str());
  }
}

void require_square(const Matrix& a, const char* op) {
  if (a.rows() != a.cols()) {
    std::ostringstream os;
    os << op << ": matrix is " << a.rows() << "x" << a.cols() << ", expected square";
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

Vector& Vector::operator+=(const Vector& o) {
  require_same_size(size(), o.size(), "Vector::operator+=");
  for (int i = 0; i < size(); ++i) v_[static_cast<size_t>(i)] += o[i];
  return *this;
}

Vector& Vector::operator-=(const Vector& o) {
  require_same_size(size(), o.size(), "Vector::operator-=");
  for (int i = 0; i < size(); ++i) v_[static_cast<size_t>(i)] -= o[i];
  return *this;
}

Vector& Vector::operator*=(double s) {
  for (auto& x : v_) x *= s;
  return *this;
}

Vector operator+(Vector a, const Vector& b) { return a += b; }
Vector operator-(Vector a, const Vector& b) { return a -= b; }
Vector operator*(double s, Vector a) { return a *= s; }

double dot(const Vector& a, const Vector& b) {
  require_same_size(a.size(), b.size(), "dot");
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

Matrix::Matrix(int rows, int cols, double value) : rows_(rows), cols_(cols) {
  if (rows < 0 || cols < 0) throw std::invalid_argument("Matrix: negative dimension");
  a_.assign(static_cast<size_t>(rows) * static_cast<size_t>(cols), value);
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n, 0.0);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix& Matrix::operator+=(const Matrix& o) {
  require_same_size(rows_, o.rows_, "Matrix::operator+=");
  require_same_size(cols_, o.cols_, "Matrix::operator+=");
  for (size_t i = 0; i < a_.size(); ++i) a_[i] += o.a_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  require_same_size(rows_, o.rows_, "Matrix::operator-=");
  require_same_size(cols_, o.cols_, "Matrix::operator-=");
  for (size_t i = 0; i < a_.size(); ++i) a_[i] -= o.a_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& x : a_) x *= s;
  return *this;
}

Matrix Matrix::transpose() const {
  Matrix t(cols_, rows_);
  for (int i = 0; i < rows_; ++i)
    for (int j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::trace() const {
  require_square(*this, "trace");
  double s = 0.0;
  for (int i = 0; i < rows_; ++i) s += (*this)(i, i);
  return s;
}

double Matrix::frob_norm() const {
  double s = 0.0;
  for (double x : a_) s += x * x;
  return std::sqrt(s);
}

double Matrix::max_abs() const {
  double m = 0.0;
  for (double x : a_) m = std::max(m, std::fabs(x));
  return m;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(double s, Matrix a) { return a *= s; }

Matrix operator*(const Matrix& a, const Matrix& b) {
  require_same_size(a.cols(), b.rows(), "Matrix::operator*");
  Matrix c(a.rows(), b.cols(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    for (int k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

Vector operator*(const Matrix& a, const Vector& x) {
  require_same_size(a.cols(), x.size(), "Matrix*Vector");
  Vector y(a.rows(), 0.0);
  for (int i = 0; i < a.rows(); ++i) {
    double s = 0.0;
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

void add_outer(Matrix& a, const Vector& x, double w) {
  require_square(a, "add_outer");
  require_same_size(a.rows(), x.size(), "add_outer");
  const int n = x.size();
  for (int i = 0; i < n; ++i) {
    const double wxi = w * x[i];
    for (int j = 0; j < n; ++j) a(i, j) += wxi * x[j];
  }
}

double quad_form(const Matrix& m, const Vector& x) {
  require_square(m, "quad_form");
  require_same_size(m.rows(), x.size(), "quad_form");
  double s = 0.0;
  for (int i = 0; i < m.rows(); ++i) {
    double row = 0.0;
    for (int j = 0; j < m.cols(); ++j) row += m(i, j) * x[j];
    s += x[i] * row;
  }
  return s;
}

double rel_max_diff(const Matrix& a, const Matrix& b) {
  require_same_size(a.rows(), b.rows(), "rel_max_diff");
  require_same_size(a.cols(), b.cols(), "rel_max_diff");
  const double scale = std::max(a.max_abs(), b.max_abs());
  if (scale == 0.0) return 0.0;
  double d = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) d = std::max(d, std::fabs(a(i, j) - b(i, j)));
  return d / scale;
}

bool is_symmetric(const Matrix& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(a.max_abs(), 1e-300);
  for (int i = 0; i < a.rows(); ++i)
    for (int j = i + 1; j < a.cols(); ++j)
      if (std::fabs(a(i, j) - a(j, i)) > rel_tol * scale) return false;
  return true;
}

Matrix symmetrize(const Matrix& a) {
  require_square(a, "symmetrize");
  Matrix s(a.rows(), a.cols());
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) s(i, j) = 0.5 * (a(i, j) + a(j, i));
  return s;
}

EigenDecomposition sym_eig(const Matrix& a_in, double rel_tol) {
  require_square(a_in, "sym_eig");
  if (!is_symmetric(a_in, rel_tol)) throw std::invalid_argument("sym_eig: matrix is not symmetric");
  const int n = a_in.rows();
  Matrix a = symmetrize(a_in);
  Matrix v = Matrix::identity(n);

  const double scale = std::max(a.frob_norm(), 1e-300);
  const int max_sweeps = 64;
  bool converged = false;
  for (int sweep = 0; sweep < max_sweeps && !converged; ++sweep) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (std::sqrt(off) <= 1e-14 * scale) {
      converged = true;
      break;
    }
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (std::fabs(apq) <= 1e-18 * scale) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double sign = theta >= 0.0 ? 1.0 : -1.0;
        const double t = sign / (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;

        for (int i = 0; i < n; ++i) {
          const double aip = a(i, p), aiq = a(i, q);
          a(i, p) = c * aip - s * aiq;
          a(i, q) = s * aip + c * aiq;
        }
        for (int j = 0; j < n; ++j) {
          const double apj = a(p, j), aqj = a(q, j);
          a(p, j) = c * apj - s * aqj;
          a(q, j) = s * apj + c * aqj;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = v(i, p), viq = v(i, q);
          v(i, p) = c * vip - s * viq;
          v(i, q) = s * vip + c * viq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) off += 2.0 * a(i, j) * a(i, j);
    if (std::sqrt(off) > 1e-12 * scale) {
      std::ostringstream os;
      os << "sym_eig: Jacobi sweeps did not converge (off-diagonal " << std::sqrt(off)
         << " after " << max_sweeps << " sweeps)";
      throw numerical_error(os.str());
    }
  }

  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) { return a(i, i) > a(j, j); });

  EigenDecomposition e;
  e.values = Vector(n);
  e.vectors = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    e.values[j] = a(order[static_cast<size_t>(j)], order[static_cast<size_t>(j)]);
    for (int i = 0; i < n; ++i) e.vectors(i, j) = v(i, order[static_cast<size_t>(j)]);
  }
  return e;
}

Matrix cholesky(const Matrix& a, double rel_floor) {
  require_square(a, "cholesky");
  const int n = a.rows();
  double max_diag = 0.0;
  for (int i = 0; i < n; ++i) max_diag = std::max(max_diag, std::fabs(a(i, i)));
  if (max_diag == 0.0) throw numerical_error("cholesky: zero matrix");

  Matrix l(n, n, 0.0);
  for (int j = 0; j < n; ++j) {
    double d = a(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > rel_floor * max_diag)) {
      std::ostringstream os;
      os << "cholesky: pivot " << d << " at column " << j
         << " below positive definiteness floor (matrix is singular or indefinite)";
      throw numerical_error(os.str());
    }
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double s = a(i, j);
      for (int k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / l(j, j);
    }
  }
  return l;
}

SpdFactor spd_factor(const Matrix& a) {
  const Matrix l = cholesky(a);
  const int n = a.rows();
  // forward-substitute columns of I through L, then back through L'
  Matrix inv(n, n, 0.0);
  std::vector<double> y(static_cast<size_t>(n));
  for (int col = 0; col < n; ++col) {
    for (int i = 0; i < n; ++i) {
      double s = (i == col) ? 1.0 : 0.0;
      for (int k = 0; k < i; ++k) s -= l(i, k) * y[static_cast<size_t>(k)];
      y[static_cast<size_t>(i)] = s / l(i, i);
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = y[static_cast<size_t>(i)];
      for (int k = i + 1; k < n; ++k) s -= l(k, i) * inv(k, col);
      inv(i, col) = s / l(i, i);
    }
  }
  double ld = 0.0;
  for (int i = 0; i < n; ++i) ld += std::log(l(i, i));
  return SpdFactor{symmetrize(inv), 2.0 * ld};
}

Matrix spd_inverse(const Matrix& a) { return spd_factor(a).inverse; }

double spd_logdet(const Matrix& a) {
  const Matrix l = cholesky(a);
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i) s += std::log(l(i, i));
  return 2.0 * s;
}

Vector spd_solve(const Matrix& a, const Vector& b) {
  const Matrix l = cholesky(a);
  const int n = a.rows();
  require_same_size(n, b.size(), "spd_solve");
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    double s = b[i];
    for (int k = 0; k < i; ++k) s -= l(i, k) * y[k];
    y[i] = s / l(i, i);
  }
  Vector x(n);
  for (int i = n - 1; i >= 0; --i) {
    double s = y[i];
    for (int k = i + 1; k < n; ++k) s -= l(k, i) * x[k];
    x[i] = s / l(i, i);
  }
  return x;
}

SymMatrix::SymMatrix(const Matrix& a, double rel_tol) {
  require_square(a, "SymMatrix");
  if (!is_symmetric(a, rel_tol)) throw std::invalid_argument("SymMatrix: matrix is not symmetric");
  m_ = symmetrize(a);
}

PDSMatrix::PDSMatrix(const Matrix& a, double sym_tol) : m_(symmetrize(a)) {
  require_square(a, "PDSMatrix");
  if (!is_symmetric(a, sym_tol)) throw std::domain_error("PDSMatrix: matrix is not symmetric");
  eig_ = sym_eig(m_);
  certify();
}

PDSMatrix::PDSMatrix(const SymMatrix& a) : m_(a.matrix()) {
  eig_ = sym_eig(m_);
  certify();
}

PDSMatrix::PDSMatrix(raw_tag, Matrix m, EigenDecomposition eig)
    : m_(std::move(m)), eig_(std::move(eig)) {
  certify();
}

void PDSMatrix::certify() const {
  const int n = m_.rows();
  if (n == 0) throw std::domain_error("PDSMatrix: empty matrix");
  const double max_eig = eig_.values[0];
  const double min_eig = eig_.values[n - 1];
  if (!(max_eig > 0.0) || !(min_eig > 1e-12 * max_eig)) {
    std::ostringstream os;
    os << "PDSMatrix: matrix is not positive definite (min eigenvalue " << min_eig
       << ", max eigenvalue " << max_eig << ")";
    throw std::domain_error(os.str());
  }
}

double PDSMatrix::logdet() const {
  double s = 0.0;
  for (int i = 0; i < dim(); ++i) s += std::log(eig_.values[i]);
  return s;
}

double PDSMatrix::condition() const { return eig_.values[0] / eig_.values[dim() - 1]; }

namespace {

// U f(d) U' for the cached decomposition
Matrix spectral_map(const EigenDecomposition& e, double (*f)(double)) {
  const int n = e.values.size();
  Matrix out(n, n, 0.0);
  for (int k = 0; k < n; ++k) {
    const double fk = f(e.values[k]);
    for (int i = 0; i < n; ++i) {
      const double uik = e.vectors(i, k) * fk;
      if (uik == 0.0) continue;
      for (int j = 0; j <= i; ++j) out(i, j) += uik * e.vectors(j, k);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) out(i, j) = out(j, i);
  return out;
}

}  // namespace

PDSMatrix PDSMatrix::inverse() const { return power(-1.0); }

PDSMatrix PDSMatrix::power(double t) const {
  const int n = dim();
  EigenDecomposition e;
  e.values = Vector(n);
  e.vectors = eig_.vectors;
  for (int i = 0; i < n; ++i) e.values[i] = std::pow(eig_.values[i], t);
  // powers of eigenvalues preserve or reverse the ordering
  Matrix m(n, n, 0.0);
  for (int k = 0; k < n; ++k) {
    for (int i = 0; i < n; ++i) {
      const double uik = e.vectors(i, k) * e.values[k];
      for (int j = 0; j <= i; ++j) m(i, j) += uik * e.vectors(j, k);
    }
  }
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) m(i, j) = m(j, i);
  if (t < 0.0) {
    // re-sort eigenpairs descending
    EigenDecomposition r;
    r.values = Vector(n);
    r.vectors = Matrix(n, n);
    for (int j = 0; j < n; ++j) {
      r.values[j] = e.values[n - 1 - j];
      for (int i = 0; i < n; ++i) r.vectors(i, j) = e.vectors(i, n - 1 - j);
    }
    return PDSMatrix(raw_tag{}, std::move(m), std::move(r));
  }
  return PDSMatrix(raw_tag{}, std::move(m), std::move(e));
}

SymMatrix PDSMatrix::log() const {
  return SymMatrix(spectral_map(eig_, [](double x) { return std::log(x); }));
}

Matrix PDSMatrix::inverse_matrix() const {
  return spectral_map(eig_, [](double x) { return 1.0 / x; });
}

double PDSMatrix::mahalanobis(const Vector& x) const {
  require_same_size(dim(), x.size(), "PDSMatrix::mahalanobis");
  // x' U diag(1/d) U' x
  double s = 0.0;
  for (int k = 0; k < dim(); ++k) {
    double proj = 0.0;
    for (int i = 0; i < dim(); ++i) proj += eig_.vectors(i, k) * x[i];
    s += proj * proj / eig_.values[k];
  }
  return s;
}

PDSMatrix matrix_power(const PDSMatrix& a, double t) { return a.power(t); }

SymMatrix matrix_log(const PDSMatrix& a) { return a.log(); }

PDSMatrix geodesic_point(const PDSMatrix& a, const PDSMatrix& b, double t) {
  if (a.dim() != b.dim()) throw std::invalid_argument("geodesic_point: dimension mismatch");
  if (!(t >= 0.0 && t <= 1.0)) throw std::domain_error("geodesic_point: t outside [0,1]");
  const PDSMatrix a_half = a.power(0.5);
  const PDSMatrix a_ihalf = a.power(-0.5);
  const PDSMatrix inner(symmetrize(a_ihalf.matrix() * b.matrix() * a_ihalf.matrix()));
  const PDSMatrix inner_t = inner.power(t);
  return PDSMatrix(symmetrize(a_half.matrix() * inner_t.matrix() * a_half.matrix()));
}

}  // namespace mscatter
