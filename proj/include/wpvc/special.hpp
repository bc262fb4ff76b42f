// Scalar special functions used by the copula catalog, the autodiff tape and
// the backtesting statistics. Everything is double precision and self-contained.
#pragma once

namespace wpvc::special {

// Standard normal density.
double normal_pdf(double x);

// Standard normal CDF via erfc; absolute error well below 1e-12.
double normal_cdf(double x);

// Inverse standard normal CDF (Wichura AS241), relative error ~1e-15.
double normal_quantile(double p);

// log Gamma and its derivative.
double log_gamma(double x);
double digamma(double x);

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

// Regularized lower/upper incomplete gamma P(a, x) / Q(a, x).
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Student-t distribution with nu degrees of freedom.
double student_t_pdf(double x, double nu);
double student_t_cdf(double x, double nu);
double student_t_quantile(double p, double nu);

// Survival function of the chi-square distribution (p-value of a test statistic).
double chi_square_sf(double x, double df);

// First Debye function D1(x) = (1/x) * int_0^x t/(e^t - 1) dt, x != 0.
double debye1(double x);

} // namespace wpvc::special
