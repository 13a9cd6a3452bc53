#include "mscatter/distance.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace mscatter {

namespace {

double trace_product(const Matrix& a, const Matrix& b) {
  double s = 0.0;
  for (int i = 0; i < a.rows(); ++i)
    for (int j = 0; j < a.cols(); ++j) s += a(i, j) * b(j, i);
  return s;
}

void require_same_dim(const PDSMatrix& a, const PDSMatrix& b, const char* who) {
  if (a.dim() != b.dim()) {
    std::ostringstream os;
    os << who << ": dimension mismatch " << a.dim() << " vs " << b.dim();
    throw std::invalid_argument(os.str());
  }
}

}  // namespace

double distance(DistanceKind kind, const PDSMatrix& a, const PDSMatrix& b) {
  require_same_dim(a, b, "distance");
  const int p = a.dim();
  switch (kind) {
    case DistanceKind::Frobenius: {
      const Matrix d = a.matrix() - b.matrix();
      const double f = d.frob_norm();
      return f * f;
    }
    case DistanceKind::Riemannian: {
      const PDSMatrix a_ihalf = a.power(-0.5);
      const Matrix c = symmetrize(a_ihalf.matrix() * b.matrix() * a_ihalf.matrix());
      const EigenDecomposition e = sym_eig(c);
      double s = 0.0;
      for (int i = 0; i < p; ++i) {
        const double l = std::log(e.values[i]);
        s += l * l;
      }
      return s;
    }
    case DistanceKind::Ellipticity: {
      const double tr = trace_product(a.inverse_matrix(), b.matrix());
      return p * std::log(tr / p) - (b.logdet() - a.logdet());
    }
    case DistanceKind::KL: {
      const double tr = trace_product(a.inverse_matrix(), b.matrix());
      return tr - (b.logdet() - a.logdet()) - p;
    }
  }
  throw std::logic_error("distance: unknown kind");
}

const char* distance_name(DistanceKind kind) {
  switch (kind) {
    case DistanceKind::Frobenius:
      return "frobenius";
    case DistanceKind::Riemannian:
      return "riemannian";
    case DistanceKind::Ellipticity:
      return "ellipticity";
    case DistanceKind::KL:
      return "kl";
  }
  return "?";
}

Weights::Weights(std::vector<double> w) : w_(std::move(w)) {
  if (w_.empty()) throw std::invalid_argument("Weights: empty");
  double sum = 0.0;
  for (double x : w_) {
    if (!(x > 0.0)) throw std::invalid_argument("Weights: entries must be strictly positive");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > 1e-12) {
    std::ostringstream os;
    os << "Weights: entries sum to " << sum << ", expected 1";
    throw std::invalid_argument(os.str());
  }
}

Weights Weights::from_counts(const std::vector<int>& counts) {
  if (counts.empty()) throw std::invalid_argument("Weights::from_counts: empty");
  long long total = 0;
  for (int c : counts) {
    if (c <= 0) throw std::invalid_argument("Weights::from_counts: counts must be positive");
    total += c;
  }
  std::vector<double> w(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) w[i] = static_cast<double>(counts[i]) / total;
  // make the sum exactly one in floating point
  double sum = std::accumulate(w.begin(), w.end(), 0.0);
  for (auto& x : w) x /= sum;
  return Weights(std::move(w));
}

namespace {

void require_matching(const std::vector<PDSMatrix>& sigmas, const Weights& w, const char* who) {
  if (sigmas.empty()) throw std::invalid_argument(std::string(who) + ": no matrices");
  if (static_cast<int>(sigmas.size()) != w.size())
    throw std::invalid_argument(std::string(who) + ": weights/matrices count mismatch");
  for (const auto& s : sigmas)
    if (s.dim() != sigmas.front().dim())
      throw std::invalid_argument(std::string(who) + ": dimension mismatch");
}

}  // namespace

PDSMatrix arithmetic_mean(const std::vector<PDSMatrix>& sigmas, const Weights& w) {
  require_matching(sigmas, w, "arithmetic_mean");
  const int p = sigmas.front().dim();
  Matrix acc(p, p, 0.0);
  for (size_t k = 0; k < sigmas.size(); ++k)
    acc += w[static_cast<int>(k)] * sigmas[k].matrix();
  return PDSMatrix(acc);
}

PDSMatrix kl_mean(const std::vector<PDSMatrix>& sigmas, const Weights& w) {
  require_matching(sigmas, w, "kl_mean");
  const int p = sigmas.front().dim();
  Matrix acc(p, p, 0.0);
  for (size_t k = 0; k < sigmas.size(); ++k)
    acc += w[static_cast<int>(k)] * sigmas[k].inverse_matrix();
  return PDSMatrix(spd_inverse(acc));
}

PDSMatrix ellipticity_mean(const std::vector<PDSMatrix>& sigmas, const Weights& w, double tol,
                           int max_iter) {
  require_matching(sigmas, w, "ellipticity_mean");
  const int p = sigmas.front().dim();
  if (p < 2)
    throw std::invalid_argument(
        "ellipticity_mean: the ellipticity distance is identically zero at dimension 1");
  const int k_count = static_cast<int>(sigmas.size());

  std::vector<Matrix> inv(sigmas.size());
  for (size_t k = 0; k < sigmas.size(); ++k) inv[k] = sigmas[k].inverse_matrix();

  // start from the arithmetic mean, normalized to trace p
  Matrix cur(p, p, 0.0);
  for (int k = 0; k < k_count; ++k) cur += w[k] * sigmas[static_cast<size_t>(k)].matrix();
  cur *= static_cast<double>(p) / cur.trace();

  for (int it = 0; it < max_iter; ++it) {
    Matrix acc(p, p, 0.0);
    for (int k = 0; k < k_count; ++k) {
      double tr = 0.0;
      for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j) tr += inv[static_cast<size_t>(k)](i, j) * cur(j, i);
      acc += (w[k] * p / tr) * inv[static_cast<size_t>(k)];
    }
    Matrix next = spd_inverse(acc);
    next *= static_cast<double>(p) / next.trace();
    const double change = rel_max_diff(next, cur);
    cur = std::move(next);
    if (change < tol) return PDSMatrix(cur);
  }
  throw numerical_error("ellipticity_mean: fixed point iteration did not converge");
}

}  // namespace mscatter
