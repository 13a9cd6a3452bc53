#ifndef MSCATTER_DISTANCE_HPP
#define MSCATTER_DISTANCE_HPP

#include <vector>

#include "mscatter/linalg.hpp"

namespace mscatter {

// Dissimilarities between positive definite matrices used as penalty terms.
// Frobenius and Riemannian are provided for reporting only; Ellipticity and
// KL are the ones with closed-form or fixed-point barycenters that the
// penalized solvers use.
enum class DistanceKind { Frobenius, Riemannian, Ellipticity, KL };

//   Frobenius    ||A - B||_F^2
//   Riemannian   || log(A^{-1/2} B A^{-1/2}) ||_F^2
//   Ellipticity  p log(tr(A^{-1}B)/p) - log det(A^{-1}B)   (scale invariant)
//   KL           tr(A^{-1}B) - log det(A^{-1}B) - p
double distance(DistanceKind kind, const PDSMatrix& a, const PDSMatrix& b);

const char* distance_name(DistanceKind kind);

// Convex combination weights: strictly positive, sum to one within 1e-12.
class Weights {
 public:
  explicit Weights(std::vector<double> w);
  static Weights from_counts(const std::vector<int>& counts);

  int size() const { return static_cast<int>(w_.size()); }
  double operator[](int i) const { return w_[static_cast<size_t>(i)]; }
  const std::vector<double>& values() const { return w_; }

 private:
  std::vector<double> w_;
};

// Weighted barycenters induced by the penalties.
PDSMatrix arithmetic_mean(const std::vector<PDSMatrix>& sigmas, const Weights& w);
// argmin over S of sum w_k KL(Sigma_k, S) has the closed form (sum w_k Sigma_k^{-1})^{-1}
PDSMatrix kl_mean(const std::vector<PDSMatrix>& sigmas, const Weights& w);
// Fixed point of  Sigma = ( sum_k w_k p Sigma_k^{-1} / tr(Sigma_k^{-1} Sigma) )^{-1},
// unique up to scale; the returned matrix is normalized to trace p.
PDSMatrix ellipticity_mean(const std::vector<PDSMatrix>& sigmas, const Weights& w,
                           double tol = 1e-12, int max_iter = 5000);

}  // namespace mscatter

#endif
