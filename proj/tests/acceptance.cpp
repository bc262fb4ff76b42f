// Acceptance suite: every criterion is exercised at its stated tolerance and
// prints exactly one [PASS]/[FAIL] line. The process exits nonzero when any
// criterion fails.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "wpvc/depstats.hpp"
#include "wpvc/paircopula.hpp"
#include "wpvc/riskeval.hpp"
#include "wpvc/rng.hpp"
#include "wpvc/special.hpp"
#include "wpvc/vine.hpp"
#include "wpvc/vlstm.hpp"

using namespace wpvc;
using copula::CopulaFamily;
using copula::PairCopula;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

PairCopula make(CopulaFamily f, std::vector<double> p) {
    PairCopula c;
    c.family = f;
    c.params = std::move(p);
    return c;
}

stats::CorrelationMatrix random_psd_corr(int n, Rng& rng) {
    Matrix b(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) b.at(i, j) = rng.normal();
    stats::CorrelationMatrix corr(n);
    Matrix a(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int k = 0; k < n; ++k) s += b.at(i, k) * b.at(j, k);
            a.at(i, j) = s + (i == j ? 0.4 * n : 0.0);
        }
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            corr.rho[static_cast<std::size_t>(i) * n + j] =
                i == j ? 1.0 : a.at(i, j) / std::sqrt(a.at(i, i) * a.at(j, j));
    return corr;
}

vine::VineStructure single_gaussian_edge(double rho) {
    vine::VineStructure v;
    v.n = 2;
    v.trees.resize(1);
    v.trees[0].level = 1;
    vine::VineEdge e;
    e.a = 0;
    e.b = 1;
    e.partial_rho = rho;
    e.pair_copula = make(CopulaFamily::Gaussian, {rho});
    e.child_a = 0;
    e.child_b = 1;
    v.trees[0].edges = {e};
    return v;
}

// ---------------------------------------------------------------------------

Outcome criterion_gradients() {
    vlstm::Dimensions d{2, 3, 2, 4};
    vlstm::Model m(d, vlstm::Ablation::Wpvc, 2024);
    m.latent_vine = single_gaussian_edge(0.4);
    m.has_vine = true;

    Rng rng(31);
    Matrix x(4, 2), eps(4, 2);
    for (int t = 0; t < 4; ++t) {
        for (int i = 0; i < 2; ++i) x.at(t, i) = 0.01 * rng.normal();
        for (int k = 0; k < 2; ++k) eps.at(t, k) = rng.normal();
    }

    std::vector<double> pg, eg;
    vlstm::window_loss_gradient(m, x, eps, pg, eg);

    double worst = 0.0;
    int bad = 0;
    auto check = [&](double analytic, double fd) {
        const double scale = std::max({std::fabs(analytic), std::fabs(fd), 1e-4});
        const double rel = std::fabs(analytic - fd) / scale;
        worst = std::max(worst, rel);
        if (rel > 1e-4) ++bad;
    };
    for (std::size_t k = 0; k < m.params.values.size(); ++k) {
        vlstm::Model pert = m;
        const double h = 1e-5 * (1.0 + std::fabs(m.params.values[k]));
        pert.params.values[k] = m.params.values[k] + h;
        const double up = vlstm::window_loss(pert, x, eps).total;
        pert.params.values[k] = m.params.values[k] - h;
        const double dn = vlstm::window_loss(pert, x, eps).total;
        check(pg[k], (up - dn) / (2.0 * h));
    }
    {
        vlstm::Model pert = m;
        const double h = 1e-6;
        pert.latent_vine.trees[0].edges[0].pair_copula.params[0] = 0.4 + h;
        const double up = vlstm::window_loss(pert, x, eps).total;
        pert.latent_vine.trees[0].edges[0].pair_copula.params[0] = 0.4 - h;
        const double dn = vlstm::window_loss(pert, x, eps).total;
        check(eg[0], (up - dn) / (2.0 * h));
    }

    std::ostringstream os;
    os << m.params.values.size() + 1 << " parameters, max relative error " << worst;
    return {bad == 0, os.str()};
}

Outcome criterion_partial_correlation() {
    Rng rng(40902);
    double worst = 0.0;
    for (int rep = 0; rep < 200; ++rep) {
        const int n = 3 + static_cast<int>(rng.below(6)); // 3..8
        auto corr = random_psd_corr(n, rng);
        Matrix m(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) m.at(i, j) = corr.at(i, j);

        const int i = static_cast<int>(rng.below(n));
        int j = static_cast<int>(rng.below(n));
        if (j == i) j = (j + 1) % n;
        std::vector<int> cond;
        for (int k = 0; k < n; ++k)
            if (k != i && k != j && rng.uniform() < 0.7) cond.push_back(k);
        const double mine = stats::partial_correlation(corr, i, j, cond);
        const double ref = oracle::partial_corr_precision(m, i, j, cond);
        worst = std::max(worst, std::fabs(mine - ref));
    }
    std::ostringstream os;
    os << "200 matrices, max |error| = " << worst;
    return {worst <= 1e-10, os.str()};
}

Outcome criterion_copula_normalization() {
    Rng rng(777);
    std::vector<PairCopula> draws;
    for (double rho : {-0.8, -0.35, 0.45, 0.8}) draws.push_back(make(CopulaFamily::Gaussian, {rho}));
    for (double rho : {-0.5, 0.4})
        for (double nu : {4.0, 10.0}) draws.push_back(make(CopulaFamily::StudentT, {rho, nu}));
    for (double th : {0.6, 1.5, 2.4}) draws.push_back(make(CopulaFamily::Clayton, {th}));
    for (double th : {1.3, 2.0, 2.8}) draws.push_back(make(CopulaFamily::Gumbel, {th}));
    for (double th : {-7.0, -2.0, 3.0, 8.0}) draws.push_back(make(CopulaFamily::Frank, {th}));
    draws.push_back(make(CopulaFamily::Independence, {}));

    const int n = 512;
    double worst_mass = 0.0;
    for (const auto& cop : draws) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            const double u = (i + 0.5) / n;
            for (int j = 0; j < n; ++j) sum += copula::density(cop, u, (j + 0.5) / n);
        }
        worst_mass = std::max(worst_mass, std::fabs(sum / (static_cast<double>(n) * n) - 1.0));
    }
    if (worst_mass > 1e-3) {
        std::ostringstream os;
        os << "normalization off by " << worst_mass;
        return {false, os.str()};
    }

    // h-functions against numerical dC/dv (closed-form C for the Archimedean
    // families, density quadrature for the elliptical ones).
    auto cdf_clayton = [](double u, double v, double th) {
        return std::pow(std::pow(u, -th) + std::pow(v, -th) - 1.0, -1.0 / th);
    };
    auto cdf_gumbel = [](double u, double v, double th) {
        return std::exp(
            -std::pow(std::pow(-std::log(u), th) + std::pow(-std::log(v), th), 1.0 / th));
    };
    auto cdf_frank = [](double u, double v, double th) {
        return -std::log(1.0 + std::expm1(-th * u) * std::expm1(-th * v) / std::expm1(-th)) / th;
    };
    double worst_h = 0.0;
    for (int rep = 0; rep < 25; ++rep) {
        const double u = rng.uniform(0.08, 0.92);
        const double v = rng.uniform(0.08, 0.92);
        {
            const double th = rng.uniform(0.5, 4.0);
            const double fd =
                oracle::central_diff([&](double vv) { return cdf_clayton(u, vv, th); }, v, 1e-6);
            worst_h = std::max(
                worst_h, std::fabs(copula::h_function(make(CopulaFamily::Clayton, {th}), u, v) - fd));
        }
        {
            const double th = rng.uniform(1.15, 3.5);
            const double fd =
                oracle::central_diff([&](double vv) { return cdf_gumbel(u, vv, th); }, v, 1e-6);
            worst_h = std::max(
                worst_h, std::fabs(copula::h_function(make(CopulaFamily::Gumbel, {th}), u, v) - fd));
        }
        {
            const double th = rng.uniform(0.5, 7.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
            const double fd =
                oracle::central_diff([&](double vv) { return cdf_frank(u, vv, th); }, v, 1e-6);
            worst_h = std::max(
                worst_h, std::fabs(copula::h_function(make(CopulaFamily::Frank, {th}), u, v) - fd));
        }
        {
            const double rho = rng.uniform(-0.8, 0.8);
            auto cop = make(CopulaFamily::Gaussian, {rho});
            const double hq = oracle::integrate(
                [&](double uu) { return uu <= 0.0 ? 0.0 : copula::density(cop, uu, v); }, 1e-9, u,
                1e-10);
            worst_h = std::max(worst_h, std::fabs(copula::h_function(cop, u, v) - hq));
        }
        {
            auto cop = make(CopulaFamily::StudentT, {rng.uniform(-0.7, 0.7), 7.0});
            const double hq = oracle::integrate(
                [&](double uu) { return uu <= 0.0 ? 0.0 : copula::density(cop, uu, v); }, 1e-9, u,
                1e-10);
            worst_h = std::max(worst_h, std::fabs(copula::h_function(cop, u, v) - hq));
        }
    }
    std::ostringstream os;
    os << "max |mass - 1| = " << worst_mass << ", max h error = " << worst_h;
    return {worst_h <= 1e-5, os.str()};
}

Outcome criterion_vine_structure() {
    Rng rng(2025);
    for (int n = 2; n <= 8; ++n) {
        for (int rep = 0; rep < 4; ++rep) {
            auto corr = random_psd_corr(n, rng);
            for (int l = (n + 1) / 2; l <= n - 1; ++l) {
                auto v = vine::build_candidate_vine(corr, l, vine::EdgeWeightMatrix::uniform(n));
                vine::validate_structure(v); // trees, proximity, unique pairs
                if (static_cast<int>(v.trees.size()) != n - 1) return {false, "tree count"};
                if (v.edge_count() != n * (n - 1) / 2) return {false, "edge count"};
            }
        }
    }
    auto corr6 = random_psd_corr(6, rng);
    vine::SelectionDiagnostics diag;
    auto v6 = vine::select_structure(corr6, vine::EdgeWeightMatrix::uniform(6), &diag);
    if (v6.trees.size() != 5) return {false, "n=6 must give 5 trees"};
    if (diag.candidate_scores.size() != 3) return {false, "n=6 must evaluate 3 candidates"};
    int nodes = 0;
    for (int j = 1; j <= 5; ++j) nodes += 6 - j + 1;
    if (nodes != 20) return {false, "n=6 node count"};
    return {true, "n in {2..8} all l; n=6: 5 trees, 20 nodes, 3 candidates"};
}

Outcome criterion_vine_density() {
    stats::CorrelationMatrix corr(3);
    corr.set(0, 1, 0.65);
    corr.set(1, 2, 0.4);
    corr.set(0, 2, 0.5);
    std::vector<int> cond = {1};
    const double r02_1 = stats::partial_correlation(corr, 0, 2, cond);

    vine::VineStructure v;
    v.n = 3;
    v.trees.resize(2);
    v.trees[0].level = 1;
    vine::VineEdge e01, e12, e02;
    e01.a = 0; e01.b = 1; e01.pair_copula = make(CopulaFamily::Gaussian, {0.65});
    e01.partial_rho = 0.65; e01.child_a = 0; e01.child_b = 1;
    e12.a = 1; e12.b = 2; e12.pair_copula = make(CopulaFamily::Gaussian, {0.4});
    e12.partial_rho = 0.4; e12.child_a = 1; e12.child_b = 2;
    v.trees[0].edges = {e01, e12};
    v.trees[1].level = 2;
    e02.a = 0; e02.b = 2; e02.conditioning = {1};
    e02.pair_copula = make(CopulaFamily::Gaussian, {r02_1});
    e02.partial_rho = r02_1; e02.child_a = 0; e02.child_b = 1;
    v.trees[1].edges = {e02};

    Matrix m(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m.at(i, j) = corr.at(i, j);
    Matrix pinv = oracle::invert(m);
    const double det = m.at(0, 0) * (m.at(1, 1) * m.at(2, 2) - m.at(1, 2) * m.at(2, 1)) -
                       m.at(0, 1) * (m.at(1, 0) * m.at(2, 2) - m.at(1, 2) * m.at(2, 0)) +
                       m.at(0, 2) * (m.at(1, 0) * m.at(2, 1) - m.at(1, 1) * m.at(2, 0));

    Rng rng(31337);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        std::vector<double> u = {rng.uniform(0.02, 0.98), rng.uniform(0.02, 0.98),
                                 rng.uniform(0.02, 0.98)};
        double x[3];
        for (int k = 0; k < 3; ++k) x[k] = special::normal_quantile(u[k]);
        double quad = 0.0;
        for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
                quad += x[a] * (pinv.at(a, b) - (a == b ? 1.0 : 0.0)) * x[b];
        const double ref = -0.5 * std::log(det) - 0.5 * quad;
        const double got = vine::vine_log_density(v, u);
        worst = std::max(worst, std::fabs(got - ref) / std::max(1.0, std::fabs(ref)));
    }
    std::ostringstream os;
    os << "100 points, max relative error " << worst;
    return {worst <= 1e-6, os.str()};
}

Matrix clayton_chain_ar1(int T, int n, double phi, double theta, double scale, Rng& rng) {
    Matrix x(T, n);
    std::vector<double> prev(n, 0.0);
    auto clayton = make(CopulaFamily::Clayton, {theta});
    for (int t = 0; t < T; ++t) {
        std::vector<double> u(n);
        u[0] = rng.uniform();
        for (int k = 1; k < n; ++k) u[k] = copula::h_inverse(clayton, rng.uniform(), u[k - 1]);
        for (int k = 0; k < n; ++k) {
            const double e = special::normal_quantile(std::clamp(u[k], 1e-12, 1.0 - 1e-12));
            x.at(t, k) = phi * prev[k] + scale * e;
            prev[k] = x.at(t, k);
        }
    }
    return x;
}

Outcome criterion_mean_field_reduction() {
    Rng rng(515);
    Matrix data = clayton_chain_ar1(160, 2, 0.5, 2.0, 0.01, rng);
    vlstm::TrainingConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.seed = 99;
    cfg.checkpoint_every = 0;
    cfg.refresh_interval = 3;
    cfg.window = 12;
    cfg.dims = vlstm::Dimensions{0, 8, 2, 6};
    cfg.max_windows_per_epoch = 40;
    cfg.rho_trun = 1.0;
    cfg.ablation = vlstm::Ablation::Wpvc;
    auto a = vlstm::train(data, cfg);

    cfg.ablation = vlstm::Ablation::MeanField;
    cfg.rho_trun = 0.05;
    auto b = vlstm::train(data, cfg);

    if (a.trace.size() != b.trace.size()) return {false, "trace lengths differ"};
    for (std::size_t i = 0; i < a.trace.size(); ++i)
        if (a.trace[i].pred_loss != b.trace[i].pred_loss ||
            a.trace[i].neg_elbo != b.trace[i].neg_elbo || a.trace[i].total != b.trace[i].total)
            return {false, "trace row " + std::to_string(i) + " differs"};
    if (a.model.params.values != b.model.params.values) return {false, "parameters differ"};
    return {true, std::to_string(a.trace.size()) + " epochs bit-identical"};
}

Outcome criterion_truncation_effect() {
    Rng rng(606060);
    const int n = 10, T = 2400;
    Matrix data(T, n);
    for (int t = 0; t < T; ++t) {
        data.at(t, 0) = rng.normal();
        for (int c = 1; c < n; ++c)
            data.at(t, c) = 0.75 * data.at(t, c - 1) + 0.66 * rng.normal();
    }
    const int half = T / 2;
    Matrix train(half, n), held(T - half, n);
    for (int t = 0; t < half; ++t)
        for (int c = 0; c < n; ++c) train.at(t, c) = data.at(t, c);
    for (int t = half; t < T; ++t)
        for (int c = 0; c < n; ++c) held.at(t - half, c) = data.at(t, c);

    auto pobs = stats::pit_transform(train);
    auto corr = stats::estimate_pairwise(pobs);
    auto weights = vine::EdgeWeightMatrix::uniform(n);
    auto held_pobs = stats::pit_transform(held);

    auto fit_and_time = [&](double rho_trun, double& seconds) {
        const double t0 = now_seconds();
        auto v = vine::select_structure(corr, weights, nullptr);
        v = vine::truncate(std::move(v), rho_trun);
        v = vine::assign_copulas(std::move(v), pobs, copula::default_candidates());
        seconds = now_seconds() - t0;
        return v;
    };

    double time_full = 0.0, time_trunc = 0.0;
    auto v_full = fit_and_time(0.0, time_full);
    auto v_trunc = fit_and_time(0.05, time_trunc);

    auto held_loglik = [&](const vine::VineStructure& v) {
        double ll = 0.0;
        std::vector<double> row(n);
        for (int t = 0; t < held_pobs.T; ++t) {
            for (int c = 0; c < n; ++c) row[c] = held_pobs.at(t, c);
            ll += vine::vine_log_density(v, row);
        }
        return ll;
    };
    const double ll_full = held_loglik(v_full);
    const double ll_trunc = held_loglik(v_trunc);

    const double speedup = (time_full - time_trunc) / time_full;
    const double ll_change = std::fabs(ll_trunc - ll_full) / std::fabs(ll_full);

    std::ostringstream os;
    os << "wall time -" << static_cast<int>(100.0 * speedup) << "%, held-out log-likelihood change "
       << 100.0 * ll_change << "% (" << v_full.active_edge_count() << " -> "
       << v_trunc.active_edge_count() << " active edges)";
    return {speedup >= 0.20 && ll_change <= 0.02, os.str()};
}

Outcome criterion_forecasting_benchmark() {
    Rng rng(424243);
    const int T = 2000, n = 4, valid = 500;
    Matrix data = clayton_chain_ar1(T, n, 0.65, 2.0, 1.0, rng);
    Matrix train(T - valid, n);
    for (int t = 0; t < T - valid; ++t)
        for (int c = 0; c < n; ++c) train.at(t, c) = data.at(t, c);

    vlstm::TrainingConfig cfg;
    cfg.epochs = 100;
    cfg.batch_size = 8;
    cfg.learning_rate = 5e-3;
    cfg.seed = 4242;
    cfg.checkpoint_every = 0;
    cfg.refresh_interval = 10;
    cfg.window = 25;
    cfg.dims = vlstm::Dimensions{0, 16, 4, 8};
    cfg.max_windows_per_epoch = 96;
    cfg.copula_candidates = {CopulaFamily::Independence, CopulaFamily::Gaussian,
                             CopulaFamily::Clayton};
    cfg.ablation = vlstm::Ablation::Wpvc;
    auto wpvc_run = vlstm::train(train, cfg);
    cfg.ablation = vlstm::Ablation::MeanField;
    auto mf_run = vlstm::train(train, cfg);
    if (wpvc_run.diverged || mf_run.diverged) return {false, "training diverged"};

    auto evaluate = [&](const vlstm::Model& m, double& rae, double& rse, double& acc) {
        auto steps = vlstm::forecast(m, data, T - valid, T, cfg.window);
        std::vector<double> actual, predicted;
        std::vector<int> a_up, p_up;
        for (int k = 0; k < valid; ++k)
            for (int c = 0; c < n; ++c) {
                actual.push_back(data.at(T - valid + k, c));
                predicted.push_back(steps[k].mu[c]);
                a_up.push_back(data.at(T - valid + k, c) > 0.0 ? 1 : 0);
                p_up.push_back(steps[k].up_prob[c] > 0.5 ? 1 : 0);
            }
        auto reg = risk::regression_metrics(actual, predicted);
        auto cls = risk::classification_metrics(a_up, p_up);
        rae = reg.rae;
        rse = reg.rse;
        acc = cls.accuracy;
    };
    double rae_w, rse_w, acc_w, rae_m, rse_m, acc_m;
    evaluate(wpvc_run.model, rae_w, rse_w, acc_w);
    evaluate(mf_run.model, rae_m, rse_m, acc_m);

    std::ostringstream os;
    os << "wpvc RAE " << rae_w << " vs mean_field " << rae_m << "; RRSE " << rse_w << " vs "
       << rse_m << "; accuracy " << acc_w << " (coin flip 0.5)";
    const bool pass = rae_w <= rae_m && rse_w <= rse_m && acc_w > 0.55;
    return {pass, os.str()};
}

Outcome criterion_backtest_statistics() {
    // 12 exceedances in 246 observations report as 4.88%.
    std::vector<int> ind(246, 0);
    for (int i = 0; i < 12; ++i) ind[3 + i * 19] = 1;
    auto cov = risk::coverage_tests(ind, 0.95);
    char rate[16];
    std::snprintf(rate, sizeof rate, "%.2f%%", 100.0 * cov.rate);
    if (std::string(rate) != "4.88%") return {false, "rate printed as " + std::string(rate)};
    if (cov.lr_uc < 0.0 || !cov.lr_it || *cov.lr_it < 0.0) return {false, "negative LR"};
    if (*cov.lr_cc != cov.lr_uc + *cov.lr_it) return {false, "LR_CC not the exact sum"};

    Rng rng(5511);
    double worst_p = 0.0;
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(0.02, 11.0);
        const double df = (i % 2 == 0) ? 1.0 : 2.0;
        worst_p = std::max(worst_p, std::fabs(special::chi_square_sf(x, df) -
                                              oracle::chi2_sf_quadrature(x, df)));
    }
    if (worst_p > 1e-8) {
        std::ostringstream os;
        os << "chi-square p-value error " << worst_p;
        return {false, os.str()};
    }

    // Calibrated simulated VaR hits the nominal rate.
    const int T = 100000;
    std::vector<double> mu(T, 0.0), sigma(T), ret(T);
    for (int t = 0; t < T; ++t) {
        sigma[t] = 0.5 + rng.uniform();
        ret[t] = sigma[t] * rng.normal();
    }
    std::ostringstream os;
    os << "p-value error " << worst_p;
    for (double level : {0.90, 0.95, 0.99}) {
        auto var = risk::var_forecast(mu, sigma, level);
        auto exc = risk::exceedances(ret, var);
        const double alpha = 1.0 - level;
        const double se = std::sqrt(alpha * (1.0 - alpha) / T);
        os << "; " << level << ": rate " << exc.rate;
        if (std::fabs(exc.rate - alpha) > 3.0 * se) return {false, os.str() + " outside 3 SE"};
    }
    return {true, os.str()};
}

Outcome criterion_determinism() {
    Rng rng(808);
    Matrix data = clayton_chain_ar1(140, 2, 0.5, 2.0, 0.01, rng);
    vlstm::TrainingConfig cfg;
    cfg.epochs = 8;
    cfg.batch_size = 8;
    cfg.learning_rate = 1e-3;
    cfg.seed = 31337;
    cfg.checkpoint_every = 0;
    cfg.refresh_interval = 3;
    cfg.window = 12;
    cfg.dims = vlstm::Dimensions{0, 8, 2, 6};
    cfg.max_windows_per_epoch = 40;
    auto a = vlstm::train(data, cfg);
    auto b = vlstm::train(data, cfg);
    for (std::size_t i = 0; i < a.trace.size(); ++i)
        if (a.trace[i].total != b.trace[i].total) return {false, "repeated run differs"};
    if (a.model.params.values != b.model.params.values) return {false, "parameters differ"};

    // Checkpoint round trip is bit-exact.
    const std::string path = "acceptance_ckpt.bin";
    vlstm::save_checkpoint(path, a.model, cfg, a.epochs_run);
    auto loaded = vlstm::load_checkpoint(path);
    std::remove(path.c_str());
    if (loaded.model.params.values != a.model.params.values)
        return {false, "checkpoint parameters not bit-exact"};
    if (loaded.model.has_vine != a.model.has_vine) return {false, "checkpoint vine flag differs"};
    if (a.model.has_vine &&
        vine::to_text(loaded.model.latent_vine) != vine::to_text(a.model.latent_vine))
        return {false, "checkpoint vine differs"};

    // Vine text round trip is lossless.
    if (a.model.has_vine) {
        auto back = vine::from_text(vine::to_text(a.model.latent_vine));
        auto p1 = vine::collect_edge_params(a.model.latent_vine);
        auto p2 = vine::collect_edge_params(back);
        if (p1 != p2) return {false, "vine file round trip lost precision"};
    }
    return {true, "seeded reruns and round-trips bit-identical"};
}

struct Criterion {
    int id;
    const char* name;
    double limit_seconds; // 0 = no stated limit
    std::function<Outcome()> run;
};

} // namespace

int main() {
    std::vector<Criterion> criteria = {
        {1, "end-to-end gradient suite", 60.0, criterion_gradients},
        {2, "partial-correlation oracle", 10.0, criterion_partial_correlation},
        {3, "copula normalization and h-functions", 120.0, criterion_copula_normalization},
        {4, "vine structural suite", 30.0, criterion_vine_structure},
        {5, "vine density oracle", 0.0, criterion_vine_density},
        {6, "mean-field reduction", 0.0, criterion_mean_field_reduction},
        {7, "truncation effect", 0.0, criterion_truncation_effect},
        {8, "synthetic forecasting benchmark", 900.0, criterion_forecasting_benchmark},
        {9, "backtest statistics", 0.0, criterion_backtest_statistics},
        {10, "determinism and round-trips", 0.0, criterion_determinism},
    };

    int failures = 0;
    for (auto& c : criteria) {
        const double t0 = now_seconds();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out = {false, std::string("exception: ") + e.what()};
        }
        const double dt = now_seconds() - t0;
        bool pass = out.pass;
        std::string note = out.detail;
        if (c.limit_seconds > 0.0 && dt > c.limit_seconds) {
            pass = false;
            note += " [exceeded " + std::to_string(c.limit_seconds) + " s budget]";
        }
        std::printf("[%s] criterion %2d: %s (%.1f s) %s\n", pass ? "PASS" : "FAIL", c.id, c.name,
                    dt, note.c_str());
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    if (failures > 0) std::printf("%d criterion(s) failed\n", failures);
    else std::printf("all criteria passed\n");
    return failures == 0 ? 0 : 1;
}
