#include "mscatter/chi2.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mscatter/errors.hpp"

namespace mscatter {

namespace {

// series representation of P(a,x), valid and fast for x < a + 1
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double del = sum;
  for (int i = 0; i < 10000; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * 1e-16)
      return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw numerical_error("gamma_p: series failed to converge");
}

// continued fraction for Q(a,x) = 1 - P(a,x), valid for x >= a + 1
double gamma_q_cf(double a, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - a;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 10000; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16)
      return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw numerical_error("gamma_p: continued fraction failed to converge");
}

}  // namespace

double gamma_p(double a, double x) {
  if (!(a > 0.0)) throw std::domain_error("gamma_p: shape must be positive");
  if (x < 0.0) throw std::domain_error("gamma_p: negative argument");
  if (x == 0.0) return 0.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chi2_cdf(double x, double dof) {
  if (!(dof > 0.0)) throw std::domain_error("chi2_cdf: dof must be positive");
  if (x < 0.0) throw std::domain_error("chi2_cdf: negative argument");
  if (x == 0.0) return 0.0;
  return gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_pdf(double x, double dof) {
  if (!(dof > 0.0)) throw std::domain_error("chi2_pdf: dof must be positive");
  if (x < 0.0) return 0.0;
  const double half = 0.5 * dof;
  if (x == 0.0) {
    if (dof > 2.0) return 0.0;
    if (dof == 2.0) return 0.5;
    return std::numeric_limits<double>::infinity();
  }
  return std::exp((half - 1.0) * std::log(x) - 0.5 * x - std::lgamma(half) - half * std::log(2.0));
}

double chi2_quantile(double prob, double dof) {
  if (!(dof > 0.0)) throw std::domain_error("chi2_quantile: dof must be positive");
  if (!(prob > 0.0 && prob < 1.0))
    throw std::domain_error("chi2_quantile: probability outside (0,1)");

  // bracket, then bisection with Newton acceleration
  double lo = 0.0;
  double hi = dof + 10.0 * std::sqrt(2.0 * dof) + 10.0;
  while (chi2_cdf(hi, dof) < prob) {
    hi *= 2.0;
    if (hi > 1e300) throw numerical_error("chi2_quantile: failed to bracket");
  }
  double x = dof;  // mean as a starting point
  if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    const double f = chi2_cdf(x, dof) - prob;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    const double pdf = chi2_pdf(x, dof);
    double next = (pdf > 0.0) ? x - f / pdf : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::fabs(next - x) <= 1e-12 * (1.0 + std::fabs(x))) return next;
    x = next;
  }
  return x;
}

}  // namespace mscatter
