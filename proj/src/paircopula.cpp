#include "wpvc/paircopula.hpp"

#include <algorithm>
#include <cmath>

#include "wpvc/depstats.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/special.hpp"

namespace wpvc::copula {

using ad::Tape;
using ad::Var;

const char* family_name(CopulaFamily f) {
    switch (f) {
        case CopulaFamily::Independence: return "independence";
        case CopulaFamily::Gaussian: return "gaussian";
        case CopulaFamily::StudentT: return "student_t";
        case CopulaFamily::Clayton: return "clayton";
        case CopulaFamily::Gumbel: return "gumbel";
        case CopulaFamily::Frank: return "frank";
    }
    return "?";
}

CopulaFamily family_from_name(const std::string& name) {
    for (CopulaFamily f : {CopulaFamily::Independence, CopulaFamily::Gaussian,
                           CopulaFamily::StudentT, CopulaFamily::Clayton, CopulaFamily::Gumbel,
                           CopulaFamily::Frank})
        if (name == family_name(f)) return f;
    throw DomainError("unknown copula family: " + name);
}

int param_count(CopulaFamily f) {
    switch (f) {
        case CopulaFamily::Independence: return 0;
        case CopulaFamily::StudentT: return 2;
        default: return 1;
    }
}

void check_params(CopulaFamily f, std::span<const double> p) {
    if (static_cast<int>(p.size()) != param_count(f))
        throw DomainError(std::string(family_name(f)) + ": wrong parameter count");
    switch (f) {
        case CopulaFamily::Independence:
            break;
        case CopulaFamily::Gaussian:
            if (!(p[0] > -1.0 && p[0] < 1.0)) throw DomainError("gaussian: rho must be in (-1,1)");
            break;
        case CopulaFamily::StudentT:
            if (!(p[0] > -1.0 && p[0] < 1.0)) throw DomainError("student_t: rho must be in (-1,1)");
            if (!(p[1] > 2.0)) throw DomainError("student_t: nu must exceed 2");
            break;
        case CopulaFamily::Clayton:
            if (!(p[0] > 0.0)) throw DomainError("clayton: theta must be positive");
            break;
        case CopulaFamily::Gumbel:
            if (!(p[0] >= 1.0)) throw DomainError("gumbel: theta must be >= 1");
            break;
        case CopulaFamily::Frank:
            if (p[0] == 0.0) throw DomainError("frank: theta must be nonzero");
            break;
    }
}

// ---------------------------------------------------------------------------
// Shared formula layer. The same expressions serve double and tape variables;
// the shims below dispatch the special functions to the right implementation.
namespace detail {

inline double d_exp(double x) { return std::exp(x); }
inline Var d_exp(Var x) { return ad::exp(x); }
inline double d_log(double x) { return std::log(x); }
inline Var d_log(Var x) { return ad::log(x); }
inline double d_sqrt(double x) { return std::sqrt(x); }
inline Var d_sqrt(Var x) { return ad::sqrt(x); }
inline double d_pow(double a, double b) { return std::pow(a, b); }
inline Var d_pow(Var a, Var b) { return ad::pow(a, b); }
inline Var d_pow(Var a, double b) { return ad::pow(a, b); }
inline Var d_pow(double a, Var b) { return ad::exp(b * std::log(a)); }
inline double d_ncdf(double x) { return special::normal_cdf(x); }
inline Var d_ncdf(Var x) { return ad::normal_cdf(x); }
inline double d_nq(double p) { return special::normal_quantile(p); }
inline Var d_nq(Var p) { return ad::normal_quantile(p); }
inline double d_lgamma(double x) { return special::log_gamma(x); }
inline Var d_lgamma(Var x) { return ad::log_gamma(x); }
inline double d_tq(double p, double nu) { return special::student_t_quantile(p, nu); }
inline Var d_tq(Var p, Var nu) { return ad::student_t_quantile(p, nu); }
inline Var d_tq(Var p, double nu) { return ad::student_t_quantile(p, p.tape->constant(nu)); }
inline double d_tcdf(double x, double nu) { return special::student_t_cdf(x, nu); }
inline Var d_tcdf(Var x, Var nu) { return ad::student_t_cdf(x, nu); }
inline Var d_tcdf(Var x, double nu) { return ad::student_t_cdf(x, x.tape->constant(nu)); }

template <class P, class U>
auto gaussian_log_density(P rho, U u, U v) {
    auto x = d_nq(u);
    auto y = d_nq(v);
    auto om = 1.0 - rho * rho;
    return -0.5 * d_log(om) - (rho * rho * (x * x + y * y) - 2.0 * rho * (x * y)) / (2.0 * om);
}

template <class P, class U>
auto student_t_log_density(P rho, P nu, U u, U v) {
    auto x = d_tq(u, nu);
    auto y = d_tq(v, nu);
    auto om = 1.0 - rho * rho;
    auto lg = d_lgamma((nu + 2.0) / 2.0) + d_lgamma(nu / 2.0) - 2.0 * d_lgamma((nu + 1.0) / 2.0);
    auto q = (x * x + y * y - 2.0 * rho * (x * y)) / (nu * om);
    return lg - 0.5 * d_log(om) - ((nu + 2.0) / 2.0) * d_log(1.0 + q) +
           ((nu + 1.0) / 2.0) * (d_log(1.0 + x * x / nu) + d_log(1.0 + y * y / nu));
}

template <class P, class U>
auto clayton_log_density(P theta, U u, U v) {
    auto s = d_pow(u, -theta) + d_pow(v, -theta) - 1.0;
    return d_log(1.0 + theta) - (1.0 + theta) * (d_log(u) + d_log(v)) -
           (2.0 + 1.0 / theta) * d_log(s);
}

template <class P, class U>
auto gumbel_log_density(P theta, U u, U v) {
    auto lu = -d_log(u); // positive
    auto lv = -d_log(v);
    auto s = d_pow(lu, theta) + d_pow(lv, theta);
    auto s1t = d_pow(s, 1.0 / theta);
    return -s1t + (theta - 1.0) * (d_log(lu) + d_log(lv)) + lu + lv +
           (1.0 / theta - 2.0) * d_log(s) + d_log(theta - 1.0 + s1t);
}

template <class P, class U>
auto frank_log_density(P theta, U u, U v) {
    auto em = d_exp(-theta);
    auto gu = d_exp(-theta * u);
    auto gv = d_exp(-theta * v);
    auto den = (1.0 - em) - (1.0 - gu) * (1.0 - gv);
    return d_log(theta * (1.0 - em)) - theta * (u + v) - d_log(den * den);
}

template <class P, class U>
auto gaussian_h(P rho, U u, U v) {
    return d_ncdf((d_nq(u) - rho * d_nq(v)) / d_sqrt(1.0 - rho * rho));
}

template <class P, class U>
auto student_t_h(P rho, P nu, U u, U v) {
    auto x = d_tq(u, nu);
    auto y = d_tq(v, nu);
    auto scale = d_sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0));
    return d_tcdf((x - rho * y) / scale, nu + 1.0);
}

template <class P, class U>
auto clayton_h(P theta, U u, U v) {
    auto s = d_pow(u, -theta) + d_pow(v, -theta) - 1.0;
    return d_pow(v, -theta - 1.0) * d_pow(s, -1.0 - 1.0 / theta);
}

template <class P, class U>
auto gumbel_h(P theta, U u, U v) {
    auto lu = -d_log(u);
    auto lv = -d_log(v);
    auto s = d_pow(lu, theta) + d_pow(lv, theta);
    auto s1t = d_pow(s, 1.0 / theta);
    return d_exp(-s1t + (theta - 1.0) * d_log(lv) + (1.0 / theta - 1.0) * d_log(s) + lv);
}

template <class P, class U>
auto frank_h(P theta, U u, U v) {
    auto gu = d_exp(-theta * u) - 1.0;
    auto gv = d_exp(-theta * v) - 1.0;
    auto em = d_exp(-theta) - 1.0;
    return d_exp(-theta * v) * gu / (em + gu * gv);
}

void require_interior(double u, const char* what) {
    if (!(u > 0.0 && u < 1.0))
        throw DomainError(std::string(what) + ": argument must lie strictly inside (0,1)");
}

} // namespace detail

double log_density(const PairCopula& cop, double u, double v) {
    check_params(cop.family, cop.params);
    detail::require_interior(u, "density");
    detail::require_interior(v, "density");
    switch (cop.family) {
        case CopulaFamily::Independence: return 0.0;
        case CopulaFamily::Gaussian: return detail::gaussian_log_density(cop.params[0], u, v);
        case CopulaFamily::StudentT:
            return detail::student_t_log_density(cop.params[0], cop.params[1], u, v);
        case CopulaFamily::Clayton: return detail::clayton_log_density(cop.params[0], u, v);
        case CopulaFamily::Gumbel: return detail::gumbel_log_density(cop.params[0], u, v);
        case CopulaFamily::Frank: return detail::frank_log_density(cop.params[0], u, v);
    }
    return 0.0;
}

double density(const PairCopula& cop, double u, double v) {
    return std::exp(log_density(cop, u, v));
}

double h_function(const PairCopula& cop, double u, double v) {
    check_params(cop.family, cop.params);
    detail::require_interior(u, "h_function");
    detail::require_interior(v, "h_function");
    double h = 0.0;
    switch (cop.family) {
        case CopulaFamily::Independence: h = u; break;
        case CopulaFamily::Gaussian: h = detail::gaussian_h(cop.params[0], u, v); break;
        case CopulaFamily::StudentT: h = detail::student_t_h(cop.params[0], cop.params[1], u, v); break;
        case CopulaFamily::Clayton: h = detail::clayton_h(cop.params[0], u, v); break;
        case CopulaFamily::Gumbel: h = detail::gumbel_h(cop.params[0], u, v); break;
        case CopulaFamily::Frank: h = detail::frank_h(cop.params[0], u, v); break;
    }
    return std::clamp(h, 0.0, 1.0);
}

double h_inverse(const PairCopula& cop, double w, double v) {
    check_params(cop.family, cop.params);
    detail::require_interior(w, "h_inverse");
    detail::require_interior(v, "h_inverse");
    switch (cop.family) {
        case CopulaFamily::Independence:
            return w;
        case CopulaFamily::Gaussian: {
            const double rho = cop.params[0];
            return special::normal_cdf(special::normal_quantile(w) * std::sqrt(1.0 - rho * rho) +
                                       rho * special::normal_quantile(v));
        }
        case CopulaFamily::StudentT: {
            const double rho = cop.params[0];
            const double nu = cop.params[1];
            const double y = special::student_t_quantile(v, nu);
            const double scale =
                std::sqrt((nu + y * y) * (1.0 - rho * rho) / (nu + 1.0));
            return special::student_t_cdf(
                special::student_t_quantile(w, nu + 1.0) * scale + rho * y, nu);
        }
        case CopulaFamily::Clayton: {
            const double theta = cop.params[0];
            const double a = std::pow(w * std::pow(v, theta + 1.0), -theta / (1.0 + theta));
            const double s = a + 1.0 - std::pow(v, -theta);
            return std::pow(std::max(s, 1e-300), -1.0 / theta);
        }
        case CopulaFamily::Frank: {
            const double theta = cop.params[0];
            const double e = std::expm1(-theta);
            const double b = std::expm1(-theta * v);
            const double a = w * e / (1.0 + b * (1.0 - w));
            return std::clamp(-std::log1p(a) / theta, 1e-12, 1.0 - 1e-12);
        }
        case CopulaFamily::Gumbel: {
            // No closed form; h is nondecreasing in u so bisection is safe.
            double lo = 1e-12, hi = 1.0 - 1e-12;
            for (int it = 0; it < 80; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (h_function(cop, mid, v) < w) lo = mid;
                else hi = mid;
            }
            return 0.5 * (lo + hi);
        }
    }
    return w;
}

Var log_density_graph(CopulaFamily f, std::span<const Var> params, Var u, Var v) {
    if (static_cast<int>(params.size()) != param_count(f))
        throw DomainError("log_density_graph: wrong parameter count");
    switch (f) {
        case CopulaFamily::Independence: return u.tape->constant(0.0);
        case CopulaFamily::Gaussian: return detail::gaussian_log_density(params[0], u, v);
        case CopulaFamily::StudentT:
            return detail::student_t_log_density(params[0], params[1], u, v);
        case CopulaFamily::Clayton: return detail::clayton_log_density(params[0], u, v);
        case CopulaFamily::Gumbel: return detail::gumbel_log_density(params[0], u, v);
        case CopulaFamily::Frank: return detail::frank_log_density(params[0], u, v);
    }
    return u.tape->constant(0.0);
}

Var h_function_graph(CopulaFamily f, std::span<const Var> params, Var u, Var v) {
    if (static_cast<int>(params.size()) != param_count(f))
        throw DomainError("h_function_graph: wrong parameter count");
    switch (f) {
        case CopulaFamily::Independence: return u;
        case CopulaFamily::Gaussian: return detail::gaussian_h(params[0], u, v);
        case CopulaFamily::StudentT: return detail::student_t_h(params[0], params[1], u, v);
        case CopulaFamily::Clayton: return detail::clayton_h(params[0], u, v);
        case CopulaFamily::Gumbel: return detail::gumbel_h(params[0], u, v);
        case CopulaFamily::Frank: return detail::frank_h(params[0], u, v);
    }
    return u;
}

// ---------------------------------------------------------------------------
// Fitting.

double tau_from_params(CopulaFamily f, std::span<const double> p) {
    check_params(f, p);
    switch (f) {
        case CopulaFamily::Independence: return 0.0;
        case CopulaFamily::Gaussian:
        case CopulaFamily::StudentT: return 2.0 * std::asin(p[0]) / M_PI;
        case CopulaFamily::Clayton: return p[0] / (p[0] + 2.0);
        case CopulaFamily::Gumbel: return 1.0 - 1.0 / p[0];
        case CopulaFamily::Frank: return 1.0 - (4.0 / p[0]) * (1.0 - special::debye1(p[0]));
    }
    return 0.0;
}

bool tau_attainable(CopulaFamily f, double tau) {
    switch (f) {
        case CopulaFamily::Independence: return std::fabs(tau) < 1e-12;
        case CopulaFamily::Gaussian:
        case CopulaFamily::StudentT:
        case CopulaFamily::Frank: return std::fabs(tau) < 1.0;
        case CopulaFamily::Clayton:
        case CopulaFamily::Gumbel: return tau >= 0.0 && tau < 1.0;
    }
    return false;
}

namespace {

constexpr double kFrankThetaMax = 100.0;

double frank_theta_from_tau(double tau) {
    // tau(theta) is odd and increasing; bisection on the positive branch.
    const double target = std::fabs(tau);
    double lo = 1e-6, hi = kFrankThetaMax;
    if (tau_from_params(CopulaFamily::Frank, std::vector<double>{hi}) < target)
        throw RangeError("frank: tau outside the numerically supported range");
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        const double t = tau_from_params(CopulaFamily::Frank, std::vector<double>{mid});
        if (std::fabs(t - target) < 1e-10) { lo = hi = mid; break; }
        if (t < target) lo = mid;
        else hi = mid;
    }
    const double theta = 0.5 * (lo + hi);
    return tau >= 0.0 ? theta : -theta;
}

} // namespace

PairCopula fit_tau_inversion(CopulaFamily f, double tau) {
    PairCopula out;
    out.fitted_tau = tau;
    if (!tau_attainable(f, tau) && !(f == CopulaFamily::Clayton && tau == 0.0) &&
        !(f == CopulaFamily::Frank && tau == 0.0))
        throw RangeError(std::string(family_name(f)) + ": tau " + std::to_string(tau) +
                         " not attainable");
    switch (f) {
        case CopulaFamily::Independence:
            out.family = CopulaFamily::Independence;
            break;
        case CopulaFamily::Gaussian:
            out.family = CopulaFamily::Gaussian;
            out.params = {std::sin(M_PI * tau / 2.0)};
            break;
        case CopulaFamily::StudentT:
            out.family = CopulaFamily::StudentT;
            out.params = {std::sin(M_PI * tau / 2.0), 5.0};
            break;
        case CopulaFamily::Clayton:
            if (tau == 0.0) { out.family = CopulaFamily::Independence; break; }
            out.family = CopulaFamily::Clayton;
            out.params = {2.0 * tau / (1.0 - tau)};
            break;
        case CopulaFamily::Gumbel:
            out.family = CopulaFamily::Gumbel;
            out.params = {1.0 / (1.0 - tau)};
            break;
        case CopulaFamily::Frank:
            if (tau == 0.0) { out.family = CopulaFamily::Independence; break; }
            out.family = CopulaFamily::Frank;
            out.params = {frank_theta_from_tau(tau)};
            break;
    }
    return out;
}

namespace {

struct Transform {
    // Unconstrained w <-> admissible parameter.
    double to_param(double w) const {
        switch (family) {
            case CopulaFamily::Gaussian:
            case CopulaFamily::StudentT: return 0.9999 * std::tanh(w);
            case CopulaFamily::Clayton: return std::clamp(std::exp(w), 1e-4, 28.0);
            case CopulaFamily::Gumbel: return std::clamp(1.0 + std::exp(w), 1.0 + 1e-8, 17.0);
            case CopulaFamily::Frank: {
                double t = std::clamp(w, -100.0, 100.0);
                if (std::fabs(t) < 1e-3) t = t < 0.0 ? -1e-3 : 1e-3;
                return t;
            }
            default: return w;
        }
    }
    double to_w(double p) const {
        switch (family) {
            case CopulaFamily::Gaussian:
            case CopulaFamily::StudentT: return std::atanh(std::clamp(p / 0.9999, -0.999999, 0.999999));
            case CopulaFamily::Clayton: return std::log(std::clamp(p, 1e-4, 28.0));
            case CopulaFamily::Gumbel: return std::log(std::clamp(p - 1.0, 1e-8, 16.0));
            case CopulaFamily::Frank: return p;
            default: return p;
        }
    }
    CopulaFamily family;
};

double loglik_at(const PairCopula& cop, std::span<const double> u, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += log_density(cop, u[i], v[i]);
    return s;
}

// Log-likelihood and its w-gradient on a fresh tape. For the elliptical
// families the data quantiles are precomputed; only the parameter is a leaf.
struct LikelihoodEval {
    double loglik = 0.0;
    double grad = 0.0;
};

LikelihoodEval eval_loglik(CopulaFamily f, double w, std::span<const double> u,
                           std::span<const double> v, std::span<const double> xq,
                           std::span<const double> yq, double fixed_nu) {
    Tape tape;
    tape.reserve(64 + 32 * u.size());
    Var wv = tape.leaf(w);
    LikelihoodEval out;

    Var theta = wv; // placeholder, reassigned per family
    switch (f) {
        case CopulaFamily::Gaussian:
        case CopulaFamily::StudentT: theta = 0.9999 * ad::tanh(wv); break;
        case CopulaFamily::Clayton: theta = ad::exp(wv); break;
        case CopulaFamily::Gumbel: theta = 1.0 + ad::exp(wv); break;
        case CopulaFamily::Frank: theta = wv; break;
        default: break;
    }

    Var ll = tape.constant(0.0);
    if (f == CopulaFamily::Gaussian || f == CopulaFamily::StudentT) {
        if (f == CopulaFamily::Gaussian) {
            // Sufficient statistics: the Gaussian copula log-likelihood only
            // needs sums of x^2+y^2 and x*y.
            double s2 = 0.0, sp = 0.0;
            for (std::size_t i = 0; i < xq.size(); ++i) {
                s2 += xq[i] * xq[i] + yq[i] * yq[i];
                sp += xq[i] * yq[i];
            }
            const double n = static_cast<double>(xq.size());
            Var om = 1.0 - theta * theta;
            ll = -0.5 * n * ad::log(om) - (theta * theta * s2 - 2.0 * theta * sp) / (2.0 * om);
        } else {
            const double nu = fixed_nu;
            Var om = 1.0 - theta * theta;
            const double n = static_cast<double>(xq.size());
            const double lg = special::log_gamma(0.5 * (nu + 2.0)) + special::log_gamma(0.5 * nu) -
                              2.0 * special::log_gamma(0.5 * (nu + 1.0));
            Var acc = tape.constant(0.0);
            for (std::size_t i = 0; i < xq.size(); ++i) {
                const double x = xq[i], y = yq[i];
                Var q = (x * x + y * y - 2.0 * (x * y) * theta) / (nu * om);
                // marginal terms do not depend on theta, fold them as constants
                const double marg = 0.5 * (nu + 1.0) *
                                    (std::log1p(x * x / nu) + std::log1p(y * y / nu));
                acc = acc + (-(0.5 * (nu + 2.0)) * ad::log(1.0 + q) + marg);
            }
            ll = lg * n - 0.5 * n * ad::log(om) + acc;
        }
    } else {
        for (std::size_t i = 0; i < u.size(); ++i) {
            Var term = tape.constant(0.0);
            switch (f) {
                case CopulaFamily::Clayton:
                    term = detail::clayton_log_density(theta, u[i], v[i]);
                    break;
                case CopulaFamily::Gumbel:
                    term = detail::gumbel_log_density(theta, u[i], v[i]);
                    break;
                case CopulaFamily::Frank:
                    term = detail::frank_log_density(theta, u[i], v[i]);
                    break;
                default:
                    break;
            }
            ll = ll + term;
        }
    }

    out.loglik = ll.value();
    std::vector<double> adj = ad::backward(tape, ll);
    out.grad = adj[wv.idx];
    return out;
}

FitResult ascend(CopulaFamily f, std::span<const double> u, std::span<const double> v,
                 double w0, double fixed_nu) {
    const Transform tf{f};
    std::vector<double> xq, yq;
    if (f == CopulaFamily::Gaussian) {
        xq.resize(u.size());
        yq.resize(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
            xq[i] = special::normal_quantile(u[i]);
            yq[i] = special::normal_quantile(v[i]);
        }
    } else if (f == CopulaFamily::StudentT) {
        xq.resize(u.size());
        yq.resize(u.size());
        for (std::size_t i = 0; i < u.size(); ++i) {
            xq[i] = special::student_t_quantile(u[i], fixed_nu);
            yq[i] = special::student_t_quantile(v[i], fixed_nu);
        }
    }

    double w = w0;
    LikelihoodEval cur = eval_loglik(f, w, u, v, xq, yq, fixed_nu);
    double step = 0.1;
    bool converged = false;
    int it = 0;
    constexpr int kMaxIter = 200;
    for (; it < kMaxIter; ++it) {
        if (std::fabs(cur.grad) < 1e-8 * (1.0 + std::fabs(cur.loglik))) {
            converged = true;
            break;
        }
        bool moved = false;
        for (int bt = 0; bt < 40; ++bt) {
            const double cand = w + step * cur.grad;
            LikelihoodEval next = eval_loglik(f, cand, u, v, xq, yq, fixed_nu);
            if (next.loglik > cur.loglik) {
                const bool tiny = std::fabs(cand - w) < 1e-10 * (1.0 + std::fabs(w));
                w = cand;
                cur = next;
                step *= 1.5;
                moved = !tiny;
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            // No ascent direction at working precision: a local maximum.
            converged = true;
            break;
        }
    }

    FitResult out;
    out.iterations = it;
    out.converged = converged;
    out.copula.family = f;
    if (f == CopulaFamily::StudentT)
        out.copula.params = {tf.to_param(w), fixed_nu};
    else
        out.copula.params = {tf.to_param(w)};
    out.copula.fitted_tau = tau_from_params(f, out.copula.params);
    // Recompute on the reported (possibly clamped) parameters so the returned
    // pair (params, loglik) is always consistent.
    out.loglik = loglik_at(out.copula, u, v);
    return out;
}

} // namespace

FitResult fit_mle(CopulaFamily f, std::span<const double> u, std::span<const double> v,
                  const PairCopula& init) {
    if (u.size() != v.size() || u.size() < 10)
        throw UndefinedStatisticError("fit_mle: need at least 10 observation pairs");
    if (f == CopulaFamily::Independence) {
        FitResult out;
        out.copula.family = CopulaFamily::Independence;
        return out;
    }
    if (init.family != f) throw DomainError("fit_mle: init family does not match");
    check_params(f, init.params);

    const Transform tf{f};
    if (f == CopulaFamily::StudentT) {
        static const double kNuGrid[] = {2.5, 3.0, 4.0, 5.0, 7.0, 10.0, 15.0, 25.0, 50.0, 100.0};
        FitResult best;
        best.loglik = -1e300;
        const double w0 = tf.to_w(init.params[0]);
        for (double nu : kNuGrid) {
            FitResult r = ascend(f, u, v, w0, nu);
            if (r.loglik > best.loglik) best = r;
        }
        // Monotonicity guarantee against the caller's initial point.
        const double init_ll = loglik_at(init, u, v);
        if (best.loglik < init_ll) {
            best.copula = init;
            best.loglik = init_ll;
        }
        return best;
    }

    FitResult r = ascend(f, u, v, tf.to_w(init.params[0]), 0.0);
    const double init_ll = loglik_at(init, u, v);
    if (r.loglik < init_ll) {
        r.copula = init;
        r.loglik = init_ll;
    }
    return r;
}

std::span<const CopulaFamily> default_candidates() {
    static const CopulaFamily kAll[] = {CopulaFamily::Independence, CopulaFamily::Gaussian,
                                        CopulaFamily::StudentT,     CopulaFamily::Clayton,
                                        CopulaFamily::Gumbel,       CopulaFamily::Frank};
    return kAll;
}

Selection select_family(std::span<const double> u, std::span<const double> v,
                        std::span<const CopulaFamily> candidates) {
    if (candidates.empty()) throw SelectionError("select_family: empty candidate set");
    const double tau = stats::kendall_tau(u, v);

    Selection best;
    bool have = false;
    std::string failures;
    for (CopulaFamily f : candidates) {
        try {
            Selection s;
            if (f == CopulaFamily::Independence) {
                s.copula.family = CopulaFamily::Independence;
                s.copula.fitted_tau = tau;
                s.loglik = 0.0;
                s.aic = 0.0;
            } else {
                if (!tau_attainable(f, tau) && tau != 0.0)
                    throw RangeError(std::string(family_name(f)) + ": tau not attainable");
                PairCopula init = fit_tau_inversion(f, tau);
                if (init.family == CopulaFamily::Independence) {
                    // tau == 0 degenerated; treat as an independence vote.
                    s.copula = init;
                    s.loglik = 0.0;
                    s.aic = 0.0;
                } else {
                    FitResult r = fit_mle(f, u, v, init);
                    s.copula = r.copula;
                    s.copula.fitted_tau = tau;
                    s.loglik = r.loglik;
                    s.aic = 2.0 * param_count(f) - 2.0 * r.loglik;
                }
            }
            if (!have || s.aic < best.aic) {
                best = s;
                have = true;
            }
        } catch (const std::exception& e) {
            failures += std::string(family_name(f)) + ": " + e.what() + "; ";
        }
    }
    if (!have) throw SelectionError("select_family: all candidates failed: " + failures);
    return best;
}

} // namespace wpvc::copula
