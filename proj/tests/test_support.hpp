#ifndef MSCATTER_TEST_SUPPORT_HPP
#define MSCATTER_TEST_SUPPORT_HPP

#include <vector>

#include "mscatter/linalg.hpp"
#include "mscatter/rng.hpp"

namespace test_support {

using mscatter::Matrix;
using mscatter::PDSMatrix;
using mscatter::SubstreamRng;
using mscatter::Vector;

inline Vector random_vector(SubstreamRng& rng, int p) {
  Vector x(p);
  for (int i = 0; i < p; ++i) x[i] = rng.normal();
  return x;
}

inline Matrix random_square(SubstreamRng& rng, int p) {
  Matrix a(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) a(i, j) = rng.normal();
  return a;
}

// G G' + eps I is positive definite for any square G
inline PDSMatrix random_pds(SubstreamRng& rng, int p, double ridge = 0.5) {
  const Matrix g = random_square(rng, p);
  Matrix a = g * g.transpose();
  for (int i = 0; i < p; ++i) a(i, i) += ridge;
  return PDSMatrix(mscatter::symmetrize(a));
}

// invertible with overwhelming probability; retries on near-singular draws
inline Matrix random_nonsingular(SubstreamRng& rng, int p) {
  for (;;) {
    Matrix c = random_square(rng, p);
    Matrix gram = c * c.transpose();
    for (int i = 0; i < p; ++i) gram(i, i) += 1e-8;
    const auto eig = mscatter::sym_eig(gram);
    if (eig.values[p - 1] > 1e-6 * eig.values[0]) return c;
  }
}

inline std::vector<Vector> random_points(SubstreamRng& rng, int n, int p) {
  std::vector<Vector> out;
  out.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) out.push_back(random_vector(rng, p));
  return out;
}

inline double rel_frob(const Matrix& a, const Matrix& b) {
  const double scale = a.frob_norm();
  return scale == 0.0 ? (a - b).frob_norm() : (a - b).frob_norm() / scale;
}

inline Matrix conjugate(const Matrix& c, const Matrix& a) { return c * a * c.transpose(); }

}  // namespace test_support

#endif
