#ifndef MSCATTER_LOSS_HPP
#define MSCATTER_LOSS_HPP

#include <string>

namespace mscatter {

enum class LossKind { Gaussian, Huber, TDist, Tyler };

// Huber consistency factor for threshold c in dimension p:
//   b = F_{chi2,p+2}(c^2) + c^2 (1 - F_{chi2,p}(c^2)) / p
double huber_b(double c, int p);

// t-loss consistency factor
//   b = ((nu+p)/p) E[ Z/(nu+Z) ],  Z ~ chi2_p
// computed by adaptive quadrature to ~1e-10 relative accuracy.
double tdist_b(double nu, int p);

// Loss function rho applied to squared Mahalanobis distances, together with
// its derivative u(t) = rho'(t) ("weight").  All families are scaled so that
// E[t u(t)] over t ~ chi2_p equals p, which makes the implied scatter
// functional consistent for the covariance matrix under Gaussian sampling
// (Tyler's loss is scale-free and fixes only the shape).
class LossSpec {
 public:
  static LossSpec gaussian(int p);
  // threshold from a chi2_p quantile level (default 0.9)
  static LossSpec huber(int p, double quantile_level = 0.9);
  static LossSpec huber_with_threshold(int p, double c);
  static LossSpec tdist(int p, double nu);
  static LossSpec tyler(int p);

  LossKind kind() const { return kind_; }
  int dim() const { return p_; }
  double nu() const { return nu_; }
  double threshold() const { return c_; }
  double scale_factor() const { return b_; }

  double rho(double t) const;
  double weight(double t) const;
  double psi(double t) const { return t * weight(t); }

  // true when rho is unbounded below as t -> 0+ (Tyler), in which case the
  // minimization is over shapes only
  bool scale_free() const { return kind_ == LossKind::Tyler; }

  std::string name() const;

 private:
  LossSpec(LossKind kind, int p, double nu, double c, double b);

  LossKind kind_;
  int p_;
  double nu_ = 0.0;  // t-loss degrees of freedom
  double c_ = 0.0;   // Huber threshold
  double b_ = 1.0;   // consistency scaling
};

}  // namespace mscatter

#endif
