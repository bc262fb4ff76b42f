#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/riskeval.hpp"
#include "wpvc/rng.hpp"
#include "wpvc/special.hpp"

using namespace wpvc;
using namespace wpvc::risk;

TEST_CASE("regression metrics documented examples") {
    std::vector<double> a = {1.0, 2.0, 3.0};
    auto perfect = regression_metrics(a, a);
    CHECK(perfect.mape == 0.0);
    CHECK(perfect.rae == 0.0);
    CHECK(perfect.rse == 0.0);

    std::vector<double> mean_pred = {2.0, 2.0, 2.0};
    auto base = regression_metrics(a, mean_pred);
    CHECK(base.rae == doctest::Approx(1.0));
    CHECK(base.rse == doctest::Approx(1.0));

    std::vector<double> p = {1.1, 1.9, 3.3};
    auto m = regression_metrics(a, p);
    CHECK(m.mape == doctest::Approx((0.1 / 1 + 0.1 / 2 + 0.3 / 3) / 3.0));

    std::vector<double> constant = {5.0, 5.0, 5.0};
    CHECK_THROWS_AS(regression_metrics(constant, p), UndefinedStatisticError);
}

TEST_CASE("regression metrics are scale invariant and flag zero actuals") {
    Rng rng(5150);
    std::vector<double> a(40), p(40);
    for (int i = 0; i < 40; ++i) {
        a[i] = rng.normal();
        p[i] = a[i] + 0.3 * rng.normal();
    }
    auto m1 = regression_metrics(a, p);
    std::vector<double> a2 = a, p2 = p;
    for (int i = 0; i < 40; ++i) {
        a2[i] *= 7.5;
        p2[i] *= 7.5;
    }
    auto m2 = regression_metrics(a2, p2);
    CHECK(m1.mape == doctest::Approx(m2.mape).epsilon(1e-12));
    CHECK(m1.rae == doctest::Approx(m2.rae).epsilon(1e-12));
    CHECK(m1.rse == doctest::Approx(m2.rse).epsilon(1e-12));

    a[7] = 0.0;
    auto m3 = regression_metrics(a, p);
    CHECK(m3.mape_excluded == 1);
}

TEST_CASE("classification metrics documented examples") {
    std::vector<int> all = {1, 0, 1, 0};
    auto perfect = classification_metrics(all, all);
    CHECK(*perfect.precision == 1.0);
    CHECK(*perfect.recall == 1.0);
    CHECK(perfect.accuracy == 1.0);

    std::vector<int> actual = {1, 1, 0, 0};
    std::vector<int> always_up = {1, 1, 1, 1};
    auto degen = classification_metrics(actual, always_up);
    CHECK(*degen.precision == doctest::Approx(0.5));
    CHECK(*degen.recall == doctest::Approx(1.0));
    CHECK(degen.accuracy == doctest::Approx(0.5));

    // TP=3, FP=1, FN=2, TN=4.
    std::vector<int> act = {1, 1, 1, 1, 1, 0, 0, 0, 0, 0};
    std::vector<int> pre = {1, 1, 1, 0, 0, 1, 0, 0, 0, 0};
    auto m = classification_metrics(act, pre);
    CHECK(*m.precision == doctest::Approx(0.75));
    CHECK(*m.recall == doctest::Approx(0.6));
    CHECK(m.accuracy == doctest::Approx(0.7));

    std::vector<int> never_up = {0, 0, 0, 0};
    auto none = classification_metrics(actual, never_up);
    CHECK_FALSE(none.precision.has_value());
    CHECK(none.diagnostics.find("precision undefined") != std::string::npos);
}

TEST_CASE("portfolio return documented examples") {
    std::vector<std::vector<double>> two = {{0.02}, {-0.02}};
    std::vector<double> eq = {0.5, 0.5};
    CHECK(portfolio_return(two, eq)[0] == doctest::Approx(0.0));

    std::vector<std::vector<double>> one = {{0.013, -0.004}};
    std::vector<double> w1 = {1.0};
    auto r = portfolio_return(one, w1);
    CHECK(r[0] == doctest::Approx(0.013));
    CHECK(r[1] == doctest::Approx(-0.004));

    std::vector<std::vector<double>> four = {{0.01}, {0.02}, {0.03}, {0.04}};
    std::vector<double> w4 = {0.25, 0.25, 0.25, 0.25};
    CHECK(portfolio_return(four, w4)[0] == doctest::Approx(0.025));

    std::vector<double> bad = {0.6, 0.6};
    CHECK_THROWS_AS(portfolio_return(two, bad), ConfigError);
}

TEST_CASE("arr documented examples") {
    std::vector<double> zeros(10, 0.0);
    CHECK(arr(zeros, 2.0) == 0.0);

    std::vector<double> daily(246, 0.001);
    CHECK(arr(daily, 1.0) == doctest::Approx(0.246));

    std::vector<double> doubled(246, 0.002);
    CHECK(arr(doubled, 1.0) == doctest::Approx(2.0 * arr(daily, 1.0)));
}

TEST_CASE("var_forecast documented examples") {
    std::vector<double> mu = {0.0}, sigma = {1.0};
    auto v95 = var_forecast(mu, sigma, 0.95);
    CHECK(v95.values[0] == doctest::Approx(-1.64485).epsilon(1e-5));
    auto v90 = var_forecast(mu, sigma, 0.90);
    CHECK(v90.values[0] == doctest::Approx(-1.28155).epsilon(1e-5));
    auto v99 = var_forecast(mu, sigma, 0.99);
    CHECK(v99.values[0] == doctest::Approx(-2.32635).epsilon(1e-5));

    std::vector<double> mu2 = {0.004}, tiny = {1e-12};
    CHECK(var_forecast(mu2, tiny, 0.95).values[0] == doctest::Approx(0.004));

    // Raising the level strictly lowers the threshold.
    std::vector<double> s = {0.02};
    CHECK(var_forecast(mu2, s, 0.99).values[0] < var_forecast(mu2, s, 0.95).values[0]);

    CHECK_THROWS_AS(var_forecast(mu, sigma, 1.5), ConfigError);
}

TEST_CASE("exceedances documented examples") {
    VarSeries var;
    var.level = 0.95;
    var.values.assign(5, -0.1);
    std::vector<double> above = {0.0, 0.01, -0.05, 0.0, 0.02};
    auto e = exceedances(above, var);
    CHECK(e.count == 0);
    CHECK(e.rate == 0.0);

    // 12 exceedances in 246 observations report 4.88%.
    std::vector<double> r(246, 1.0);
    for (int i = 0; i < 12; ++i) r[i * 20] = -1.0;
    VarSeries var2;
    var2.level = 0.95;
    var2.values.assign(246, 0.0);
    auto e2 = exceedances(r, var2);
    CHECK(e2.count == 12);
    CHECK(e2.rate == doctest::Approx(12.0 / 246.0));
    char buf[16];
    std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * e2.rate);
    CHECK(std::string(buf) == "4.88%");

    VarSeries high;
    high.level = 0.95;
    high.values.assign(5, 1e9);
    auto e3 = exceedances(above, high);
    CHECK(e3.count == 5);
}

TEST_CASE("coverage tests documented examples") {
    // Exactly the expected number of exceedances: LR_UC = 0.
    {
        std::vector<int> ind(200, 0);
        for (int i = 0; i < 10; ++i) ind[i * 19 + 3] = 1;
        auto c = coverage_tests(ind, 0.95);
        CHECK(c.count == 10);
        CHECK(c.lr_uc == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(c.pass_uc);
    }

    // T=246, x=12: the standard Kupiec statistic for these counts is
    // about 0.00778.
    {
        std::vector<int> ind(246, 0);
        for (int i = 0; i < 12; ++i) ind[2 + i * 20] = 1;
        auto c = coverage_tests(ind, 0.95);
        CHECK(c.lr_uc == doctest::Approx(0.00778).epsilon(2e-3));
        // Direct Bernoulli evaluation as the oracle.
        const double q = 0.05, pi = 12.0 / 246.0;
        const double ref = -2.0 * (234.0 * std::log((1 - q) / (1 - pi)) + 12.0 * std::log(q / pi));
        CHECK(c.lr_uc == doctest::Approx(ref).epsilon(1e-12));
    }

    // Equal empirical transition probabilities: LR_IT = 0 exactly. The
    // 0,0,1,1 cycle has n00 = n01 = n10 = n11, so pi01 = pi11 = 0.5.
    {
        std::vector<int> ind = {0, 0, 1, 1, 0, 0, 1, 1, 0, 0, 1, 1, 0};
        auto c = coverage_tests(ind, 0.95);
        REQUIRE(c.lr_it.has_value());
        CHECK(*c.lr_it == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(*c.lr_cc == doctest::Approx(c.lr_uc));
    }

    // Zero exceedances: UC uses the 0 log 0 convention, IT reported absent.
    {
        std::vector<int> ind(100, 0);
        auto c = coverage_tests(ind, 0.95);
        CHECK(c.lr_uc == doctest::Approx(-2.0 * 100.0 * std::log(0.95)));
        CHECK_FALSE(c.lr_it.has_value());
        CHECK(!c.diagnostics.empty());
    }
}

TEST_CASE("LR statistics are nonnegative and LR_CC = LR_UC + LR_IT exactly") {
    Rng rng(8899);
    for (int rep = 0; rep < 200; ++rep) {
        const int T = 50 + static_cast<int>(rng.below(400));
        const double p = rng.uniform(0.02, 0.3);
        std::vector<int> ind(T);
        for (int t = 0; t < T; ++t) ind[t] = rng.uniform() < p ? 1 : 0;
        auto c = coverage_tests(ind, 0.95);
        CHECK(c.lr_uc >= 0.0);
        if (c.lr_it) {
            CHECK(*c.lr_it >= 0.0);
            CHECK(*c.lr_cc == c.lr_uc + *c.lr_it); // bit-exact
        }
    }
}

TEST_CASE("chi-square p-values match numerical integration of the density") {
    Rng rng(424242);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(0.01, 12.0);
        const double df = (i % 2 == 0) ? 1.0 : 2.0;
        const double mine = special::chi_square_sf(x, df);
        const double ref = oracle::chi2_sf_quadrature(x, df);
        CHECK(std::fabs(mine - ref) <= 1e-8);
    }
}

TEST_CASE("exceedance rate converges to alpha against true quantiles") {
    Rng rng(13579);
    const int T = 100000;
    std::vector<double> mu(T, 0.0), sigma(T), ret(T);
    for (int t = 0; t < T; ++t) {
        sigma[t] = 0.5 + rng.uniform();
        ret[t] = sigma[t] * rng.normal();
    }
    for (double level : {0.90, 0.95, 0.99}) {
        auto var = var_forecast(mu, sigma, level);
        auto e = exceedances(ret, var);
        const double alpha = 1.0 - level;
        const double se = std::sqrt(alpha * (1.0 - alpha) / T);
        CHECK(std::fabs(e.rate - alpha) <= 3.0 * se);
    }
}

TEST_CASE("report serialization carries the fixed fields") {
    BacktestReport rep;
    CoverageResult cv;
    cv.level = 0.95;
    cv.count = 12;
    cv.rate = 12.0 / 246.0;
    cv.lr_uc = 0.00778;
    cv.p_uc = 0.93;
    cv.lr_it = 0.188;
    cv.p_it = 0.665;
    cv.lr_cc = 0.196;
    cv.p_cc = 0.906;
    rep.levels.push_back(cv);
    rep.metrics.mape = 0.015;
    rep.metrics.precision = 0.84;
    rep.metrics.recall = 0.83;
    rep.metrics.accuracy = 0.82;
    rep.arr = 0.2436;
    const std::string json = report_to_json(rep);
    for (const char* key : {"\"count\"", "\"rate\"", "\"lr_uc\"", "\"p_uc\"", "\"lr_it\"",
                            "\"p_it\"", "\"lr_cc\"", "\"p_cc\"", "\"pass\"", "\"mape\"", "\"arr\""})
        CHECK(json.find(key) != std::string::npos);
    const std::string table = report_to_table(rep);
    CHECK(table.find("4.88%") != std::string::npos);
    CHECK(table.find("LR_CC") != std::string::npos);
}
