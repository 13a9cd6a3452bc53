#include "mscatter/loss.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "mscatter/chi2.hpp"
#include "mscatter/errors.hpp"

namespace mscatter {

namespace {

double adaptive_simpson_step(const std::function<double(double)>& f, double a, double b,
                             double fa, double fm, double fb, double whole, double eps,
                             int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (std::fabs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
  if (depth <= 0) throw numerical_error("adaptive_simpson: recursion depth exhausted");
  return adaptive_simpson_step(f, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
         adaptive_simpson_step(f, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return adaptive_simpson_step(f, a, b, fa, fm, fb, whole, eps, 60);
}

void check_t(double t, bool strictly_positive, const char* who) {
  if (std::isnan(t) || t < 0.0) {
    std::ostringstream os;
    os << who << ": argument " << t << " outside [0, inf)";
    throw std::domain_error(os.str());
  }
  if (strictly_positive && t == 0.0) {
    std::ostringstream os;
    os << who << ": argument must be strictly positive for Tyler's loss";
    throw std::domain_error(os.str());
  }
}

}  // namespace

double huber_b(double c, int p) {
  if (p < 1) throw std::domain_error("huber_b: dimension must be >= 1");
  if (!(c > 0.0)) throw std::domain_error("huber_b: threshold must be positive");
  const double c2 = c * c;
  return chi2_cdf(c2, static_cast<double>(p + 2)) +
         c2 * (1.0 - chi2_cdf(c2, static_cast<double>(p))) / static_cast<double>(p);
}

double tdist_b(double nu, int p) {
  if (p < 1) throw std::domain_error("tdist_b: dimension must be >= 1");
  if (!(nu > 0.0)) throw std::domain_error("tdist_b: nu must be positive");
  const double pd = static_cast<double>(p);
  // integrand x/(nu+x) * chi2 pdf; the x -> 0 limit is 0 for every p >= 1
  auto integrand = [nu, pd](double x) {
    if (x <= 0.0) return 0.0;
    return x / (nu + x) * chi2_pdf(x, pd);
  };
  const double upper = pd + 60.0 * std::sqrt(2.0 * pd) + 250.0;  // tail mass < 1e-15
  // integrate piecewise: on one span the first probe points of the adaptive
  // rule can all miss the density bulk and accept ~0 as converged
  const double cuts[] = {0.0, 0.5 * pd, pd, 2.0 * pd, 4.0 * pd, upper};
  double integral = 0.0;
  for (size_t i = 0; i + 1 < sizeof(cuts) / sizeof(cuts[0]); ++i) {
    const double lo = std::min(cuts[i], upper);
    const double hi = std::min(cuts[i + 1], upper);
    if (hi > lo) integral += adaptive_simpson(integrand, lo, hi, 1e-13);
  }
  return (nu + pd) / pd * integral;
}

LossSpec::LossSpec(LossKind kind, int p, double nu, double c, double b)
    : kind_(kind), p_(p), nu_(nu), c_(c), b_(b) {
  if (p < 1) throw std::domain_error("LossSpec: dimension must be >= 1");
}

LossSpec LossSpec::gaussian(int p) { return LossSpec(LossKind::Gaussian, p, 0.0, 0.0, 1.0); }

LossSpec LossSpec::huber(int p, double quantile_level) {
  if (!(quantile_level > 0.0 && quantile_level < 1.0))
    throw std::domain_error("LossSpec::huber: quantile level outside (0,1)");
  const double c = std::sqrt(chi2_quantile(quantile_level, static_cast<double>(p)));
  return huber_with_threshold(p, c);
}

LossSpec LossSpec::huber_with_threshold(int p, double c) {
  return LossSpec(LossKind::Huber, p, 0.0, c, huber_b(c, p));
}

LossSpec LossSpec::tdist(int p, double nu) {
  return LossSpec(LossKind::TDist, p, nu, 0.0, tdist_b(nu, p));
}

LossSpec LossSpec::tyler(int p) { return LossSpec(LossKind::Tyler, p, 0.0, 0.0, 1.0); }

double LossSpec::rho(double t) const {
  check_t(t, kind_ == LossKind::Tyler, "LossSpec::rho");
  switch (kind_) {
    case LossKind::Gaussian:
      return t;
    case LossKind::Huber: {
      const double c2 = c_ * c_;
      if (t <= c2) return t / b_;
      return c2 / b_ * (std::log(t / c2) + 1.0);
    }
    case LossKind::TDist:
      return (nu_ + p_) / b_ * std::log(nu_ + t);
    case LossKind::Tyler:
      return static_cast<double>(p_) * std::log(t);
  }
  throw std::logic_error("LossSpec::rho: unknown kind");
}

double LossSpec::weight(double t) const {
  check_t(t, kind_ == LossKind::Tyler, "LossSpec::weight");
  switch (kind_) {
    case LossKind::Gaussian:
      return 1.0;
    case LossKind::Huber: {
      const double c2 = c_ * c_;
      if (t <= c2) return 1.0 / b_;
      return c2 / (t * b_);
    }
    case LossKind::TDist:
      return (nu_ + p_) / ((nu_ + t) * b_);
    case LossKind::Tyler:
      return static_cast<double>(p_) / t;
  }
  throw std::logic_error("LossSpec::weight: unknown kind");
}

std::string LossSpec::name() const {
  std::ostringstream os;
  switch (kind_) {
    case LossKind::Gaussian:
      return "gaussian";
    case LossKind::Huber:
      os << "huber(c=" << c_ << ")";
      return os.str();
    case LossKind::TDist:
      os << "t(nu=" << nu_ << ")";
      return os.str();
    case LossKind::Tyler:
      return "tyler";
  }
  return "?";
}

}  // namespace mscatter
