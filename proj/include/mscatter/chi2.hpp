#ifndef MSCATTER_CHI2_HPP
#define MSCATTER_CHI2_HPP

namespace mscatter {

// Regularized lower incomplete gamma P(a, x).  Series expansion for
// x < a + 1, continued fraction otherwise.
double gamma_p(double a, double x);

// Chi-square distribution with dof degrees of freedom (dof > 0, may be
// fractional).  cdf is accurate to ~1e-14 absolute; quantile inverts it to
// 1e-10 in the argument via bracketed Newton.
double chi2_cdf(double x, double dof);
double chi2_pdf(double x, double dof);
double chi2_quantile(double prob, double dof);

}  // namespace mscatter

#endif
