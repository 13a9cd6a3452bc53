#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mscatter/errors.hpp"
#include "mscatter/linalg.hpp"
#include "test_support.hpp"

using namespace mscatter;
using test_support::random_nonsingular;
using test_support::random_pds;
using test_support::random_square;
using test_support::random_vector;
using test_support::rel_frob;

namespace {

Matrix diag2(double a, double b) {
  Matrix m(2, 2);
  m(0, 0) = a;
  m(1, 1) = b;
  return m;
}

}  // namespace

TEST_CASE("vector and matrix arithmetic") {
  Vector x{1.0, 2.0, 3.0};
  Vector y{0.5, -1.0, 2.0};
  CHECK(dot(x, y) == doctest::Approx(4.5));
  CHECK(norm(Vector{3.0, 4.0}) == doctest::Approx(5.0));
  Vector z = x - y;
  CHECK(z[0] == doctest::Approx(0.5));
  CHECK(z[2] == doctest::Approx(1.0));

  Matrix a(2, 2);
  a(0, 0) = 1.0;
  a(0, 1) = 2.0;
  a(1, 0) = 3.0;
  a(1, 1) = 4.0;
  const Matrix at = a.transpose();
  CHECK(at(0, 1) == 3.0);
  CHECK(a.trace() == doctest::Approx(5.0));
  CHECK(a.frob_norm() == doctest::Approx(std::sqrt(30.0)));
  const Matrix prod = a * Matrix::identity(2);
  CHECK(rel_frob(prod, a) == 0.0);

  Vector ax = a * Vector{1.0, 1.0};
  CHECK(ax[0] == doctest::Approx(3.0));
  CHECK(ax[1] == doctest::Approx(7.0));

  Matrix outer(2, 2);
  add_outer(outer, Vector{1.0, 2.0}, 0.5);
  CHECK(outer(0, 0) == doctest::Approx(0.5));
  CHECK(outer(0, 1) == doctest::Approx(1.0));
  CHECK(outer(1, 1) == doctest::Approx(2.0));

  CHECK(quad_form(a, Vector{1.0, 1.0}) == doctest::Approx(10.0));
}

TEST_CASE("sym_eig diagonal and hand-solved 2x2") {
  const auto d = sym_eig(diag2(3.0, 1.0));
  CHECK(d.values[0] == doctest::Approx(3.0));
  CHECK(d.values[1] == doctest::Approx(1.0));

  // [[2,1],[1,2]] has eigenpairs (3, (1,1)/sqrt 2) and (1, (1,-1)/sqrt 2)
  Matrix a(2, 2);
  a(0, 0) = 2.0;
  a(0, 1) = 1.0;
  a(1, 0) = 1.0;
  a(1, 1) = 2.0;
  const auto e = sym_eig(a);
  CHECK(e.values[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(e.values[1] == doctest::Approx(1.0).epsilon(1e-12));
  const double s = 1.0 / std::sqrt(2.0);
  CHECK(std::fabs(e.vectors(0, 0) * e.vectors(1, 0)) == doctest::Approx(s * s).epsilon(1e-10));
  CHECK(e.vectors(0, 1) * e.vectors(1, 1) == doctest::Approx(-s * s).epsilon(1e-10));

  const auto id = sym_eig(Matrix::identity(5));
  for (int i = 0; i < 5; ++i) CHECK(id.values[i] == doctest::Approx(1.0));
}

TEST_CASE("sym_eig reconstruction, orthonormality and ordering on random input") {
  SubstreamRng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 2 + rng.below(6);
    const Matrix a = symmetrize(random_square(rng, p));
    const auto e = sym_eig(a);
    for (int i = 1; i < p; ++i) CHECK(e.values[i - 1] >= e.values[i]);
    // U' U = I
    const Matrix gram = e.vectors.transpose() * e.vectors;
    CHECK(rel_frob(gram, Matrix::identity(p)) < 1e-10);
    // A = U diag(d) U'
    Matrix ud(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) ud(i, j) = e.vectors(i, j) * e.values[j];
    CHECK(rel_frob(ud * e.vectors.transpose(), a) < 1e-10);
  }
}

TEST_CASE("cholesky factor and derived solvers") {
  Matrix a(2, 2);
  a(0, 0) = 4.0;
  a(0, 1) = 2.0;
  a(1, 0) = 2.0;
  a(1, 1) = 3.0;
  const Matrix l = cholesky(a);
  CHECK(l(0, 0) == doctest::Approx(2.0));
  CHECK(l(1, 0) == doctest::Approx(1.0));
  CHECK(l(1, 1) == doctest::Approx(std::sqrt(2.0)));
  CHECK(l(0, 1) == 0.0);
  CHECK(rel_frob(l * l.transpose(), a) < 1e-14);

  CHECK(spd_logdet(a) == doctest::Approx(std::log(8.0)));
  const Matrix inv = spd_inverse(a);
  CHECK(rel_frob(inv * a, Matrix::identity(2)) < 1e-14);
  CHECK(inv(0, 1) == inv(1, 0));

  const Vector x = spd_solve(a, Vector{8.0, 7.0});
  CHECK(x[0] == doctest::Approx(1.25));
  CHECK(x[1] == doctest::Approx(1.5));

  const SpdFactor f = spd_factor(a);
  CHECK(rel_frob(f.inverse, inv) < 1e-14);
  CHECK(f.logdet == doctest::Approx(std::log(8.0)));

  // indefinite input trips the pivot floor
  Matrix bad(2, 2);
  bad(0, 0) = 1.0;
  bad(0, 1) = 2.0;
  bad(1, 0) = 2.0;
  bad(1, 1) = 1.0;
  CHECK_THROWS_AS((void)cholesky(bad), numerical_error);
}

TEST_CASE("pds construction rejects non positive definite input") {
  CHECK_THROWS((void)PDSMatrix(diag2(1.0, -1.0)));
  CHECK_THROWS((void)PDSMatrix(diag2(1.0, 0.0)));
  // eigenvalue ratio below the certificate floor
  CHECK_THROWS((void)PDSMatrix(diag2(1.0, 1e-14)));
  Matrix asym(2, 2);
  asym(0, 0) = 1.0;
  asym(0, 1) = 0.5;
  asym(1, 0) = -0.5;
  asym(1, 1) = 1.0;
  CHECK_THROWS((void)PDSMatrix(asym));
}

TEST_CASE("pds spectral functions on hand cases") {
  const PDSMatrix a(diag2(4.0, 9.0));
  const Matrix root = a.power(0.5).matrix();
  CHECK(root(0, 0) == doctest::Approx(2.0));
  CHECK(root(1, 1) == doctest::Approx(3.0));

  const PDSMatrix e1(diag2(std::exp(1.0), 1.0));
  const Matrix sq = e1.power(2.0).matrix();
  CHECK(sq(0, 0) == doctest::Approx(std::exp(2.0)));
  CHECK(sq(1, 1) == doctest::Approx(1.0));

  CHECK(rel_frob(matrix_power(a, 1.0).matrix(), a.matrix()) < 1e-12);
  CHECK(rel_frob(matrix_power(a, 0.0).matrix(), Matrix::identity(2)) < 1e-12);

  CHECK(matrix_log(PDSMatrix(Matrix::identity(3))).frob_norm() == doctest::Approx(0.0));
  const Matrix lg = matrix_log(PDSMatrix(diag2(std::exp(2.0), 1.0))).matrix();
  CHECK(lg(0, 0) == doctest::Approx(2.0));
  CHECK(lg(1, 1) == doctest::Approx(0.0));
  CHECK(a.logdet() == doctest::Approx(std::log(36.0)));
}

TEST_CASE("pds inverse, power laws and mahalanobis on random input") {
  SubstreamRng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 2 + rng.below(5);
    const PDSMatrix a = random_pds(rng, p);
    CHECK(rel_frob(a.inverse().matrix() * a.matrix(), Matrix::identity(p)) < 1e-10);

    // A^s A^t = A^{s+t} for powers of one matrix
    const double s = 2.0 * rng.uniform() - 1.0;
    const double t = 2.0 * rng.uniform() - 1.0;
    const Matrix lhs = a.power(s).matrix() * a.power(t).matrix();
    CHECK(rel_frob(lhs, a.power(s + t).matrix()) < 1e-9);

    // log A^2 = 2 log A
    CHECK(rel_frob(matrix_log(a.power(2.0)).matrix(), 2.0 * a.log().matrix()) < 1e-9);

    const Vector x = random_vector(rng, p);
    CHECK(a.mahalanobis(x) ==
          doctest::Approx(quad_form(a.inverse_matrix(), x)).epsilon(1e-10));
    CHECK(a.mahalanobis(x) >= 0.0);
  }
}

TEST_CASE("geodesic endpoints and the commuting midpoint") {
  SubstreamRng rng(13);
  const PDSMatrix a = random_pds(rng, 3);
  const PDSMatrix b = random_pds(rng, 3);
  CHECK(rel_frob(geodesic_point(a, b, 0.0).matrix(), a.matrix()) < 1e-10);
  CHECK(rel_frob(geodesic_point(a, b, 1.0).matrix(), b.matrix()) < 1e-10);

  // commuting case reduces to entrywise a^{1-t} b^t
  const PDSMatrix i2(Matrix::identity(2));
  const PDSMatrix d(diag2(4.0, 9.0));
  const Matrix mid = geodesic_point(i2, d, 0.5).matrix();
  CHECK(mid(0, 0) == doctest::Approx(2.0));
  CHECK(mid(1, 1) == doctest::Approx(3.0));

  CHECK_THROWS_AS((void)geodesic_point(a, b, -0.1), std::domain_error);
  CHECK_THROWS_AS((void)geodesic_point(a, b, 1.1), std::domain_error);
}

TEST_CASE("geodesic points stay on the cone") {
  SubstreamRng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const int p = 2 + rng.below(4);
    const PDSMatrix a = random_pds(rng, p);
    const PDSMatrix b = random_pds(rng, p);
    const double t = rng.uniform();
    const PDSMatrix mid = geodesic_point(a, b, t);  // construction certifies positivity
    CHECK(mid.eigenvalues()[p - 1] > 0.0);
    // congruence invariance: C mid(A,B) C' = mid(CAC', CBC')
    const Matrix c = random_nonsingular(rng, p);
    const PDSMatrix ca(symmetrize(test_support::conjugate(c, a.matrix())));
    const PDSMatrix cb(symmetrize(test_support::conjugate(c, b.matrix())));
    CHECK(rel_frob(test_support::conjugate(c, mid.matrix()),
                   geodesic_point(ca, cb, t).matrix()) < 1e-8);
  }
}

TEST_CASE("symmetry helpers") {
  Matrix a(2, 2);
  a(0, 0) = 1.0;
  a(0, 1) = 2.0;
  a(1, 0) = 4.0;
  a(1, 1) = 1.0;
  CHECK_FALSE(is_symmetric(a));
  const Matrix s = symmetrize(a);
  CHECK(s(0, 1) == doctest::Approx(3.0));
  CHECK(is_symmetric(s));
  CHECK_THROWS((void)SymMatrix(a));
  CHECK(SymMatrix(s).frob_norm() == doctest::Approx(s.frob_norm()));

  CHECK(rel_max_diff(a, a) == 0.0);
  Matrix b = a;
  b(0, 0) += 0.4;
  CHECK(rel_max_diff(a, b) == doctest::Approx(0.1));
}
