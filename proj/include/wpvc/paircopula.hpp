// Bivariate copula catalog: densities, h-functions (conditional CDFs), their
// inverses, tau-inversion fitting, tape-based MLE refinement and AIC family
// selection. These are the building blocks placed on every vine edge.
#pragma once

#include <span>
#include <string>
#include <vector>

#include "wpvc/diffcore.hpp"

namespace wpvc::copula {

enum class CopulaFamily { Independence, Gaussian, StudentT, Clayton, Gumbel, Frank };

const char* family_name(CopulaFamily f);
CopulaFamily family_from_name(const std::string& name);
int param_count(CopulaFamily f);

// Throws DomainError when params fall outside the family's admissible domain
// (Gaussian/StudentT rho in (-1,1), StudentT nu > 2, Clayton theta > 0,
// Gumbel theta >= 1, Frank theta != 0, Independence empty).
void check_params(CopulaFamily f, std::span<const double> params);

struct PairCopula {
    CopulaFamily family = CopulaFamily::Independence;
    std::vector<double> params;
    double fitted_tau = 0.0;
};

// Closed-form Kendall tau implied by the parameters.
double tau_from_params(CopulaFamily f, std::span<const double> params);

// Whether the family can represent the given tau (Clayton/Gumbel need
// tau >= 0; rotated variants are deliberately out of catalog).
bool tau_attainable(CopulaFamily f, double tau);

// Moment-style fit: invert the family's tau relation. Throws RangeError when
// tau is unattainable. tau == 0 maps Clayton/Frank to Independence.
PairCopula fit_tau_inversion(CopulaFamily f, double tau);

// Scalar evaluations. u, v must lie strictly inside (0,1).
double log_density(const PairCopula& cop, double u, double v);
double density(const PairCopula& cop, double u, double v);
double h_function(const PairCopula& cop, double u, double v); // h(u | v)
double h_inverse(const PairCopula& cop, double w, double v);  // u : h(u|v) = w

// Tape evaluations with the copula parameters supplied as graph variables, so
// gradients flow to both the arguments and the parameters.
ad::Var log_density_graph(CopulaFamily f, std::span<const ad::Var> params, ad::Var u, ad::Var v);
ad::Var h_function_graph(CopulaFamily f, std::span<const ad::Var> params, ad::Var u, ad::Var v);

struct FitResult {
    PairCopula copula;
    double loglik = 0.0;
    bool converged = true;
    int iterations = 0;
};

// Maximum likelihood from `init` via gradient ascent on the diffcore tape
// (Student-t nu is profiled over a fixed grid). The returned log-likelihood
// never falls below that of init. Requires at least 10 observation pairs.
FitResult fit_mle(CopulaFamily f, std::span<const double> u, std::span<const double> v,
                  const PairCopula& init);

struct Selection {
    PairCopula copula;
    double loglik = 0.0;
    double aic = 0.0;
};

// Fits every candidate by tau inversion + MLE and returns the minimum-AIC
// fit (AIC = 2k - 2 loglik). Throws SelectionError when every candidate
// fails, listing the per-family failures.
Selection select_family(std::span<const double> u, std::span<const double> v,
                        std::span<const CopulaFamily> candidates);

// The default candidate set.
std::span<const CopulaFamily> default_candidates();

} // namespace wpvc::copula
