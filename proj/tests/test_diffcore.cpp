#include <cmath>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "wpvc/diffcore.hpp"
#include "wpvc/errors.hpp"
#include "wpvc/rng.hpp"
#include "wpvc/special.hpp"

using namespace wpvc;
using ad::Tape;
using ad::Var;

TEST_CASE("forward primitives produce the documented values and locals") {
    Tape t;
    Var a = t.leaf(2.0), b = t.leaf(3.0);

    Var s = a + b;
    CHECK(s.value() == 5.0);
    CHECK(t.node(s.idx).da == 1.0);
    CHECK(t.node(s.idx).db == 1.0);

    Var m = a * b;
    CHECK(m.value() == 6.0);
    CHECK(t.node(m.idx).da == 3.0);
    CHECK(t.node(m.idx).db == 2.0);

    Var z = t.leaf(0.0);
    Var sg = ad::sigmoid(z);
    CHECK(sg.value() == doctest::Approx(0.5));
    CHECK(t.node(sg.idx).da == doctest::Approx(0.25));
}

TEST_CASE("backward on simple graphs") {
    {
        Tape t;
        Var x = t.leaf(3.0);
        Var y = x * x;
        auto g = ad::backward(t, y);
        CHECK(g[x.idx] == doctest::Approx(6.0));
    }
    {
        Tape t;
        Var x = t.leaf(1.7);
        auto g = ad::backward(t, x);
        CHECK(g[x.idx] == 1.0);
    }
    {
        Tape t;
        Var x = t.leaf(0.3), y = t.leaf(0.7);
        Var f = ad::tanh(x * y);
        auto g = ad::backward(t, f);
        auto fd_x = oracle::central_diff([](double v) { return std::tanh(v * 0.7); }, 0.3);
        auto fd_y = oracle::central_diff([](double v) { return std::tanh(0.3 * v); }, 0.7);
        CHECK(oracle::grad_close(g[x.idx], fd_x));
        CHECK(oracle::grad_close(g[y.idx], fd_y));
    }
}

namespace {

struct UnaryCase {
    const char* name;
    double lo, hi;
    std::function<Var(Var)> build;
    std::function<double(double)> eval;
};

} // namespace

TEST_CASE("every unary primitive matches central finite differences at 100 random points") {
    std::vector<UnaryCase> cases = {
        {"exp", -3.0, 3.0, [](Var v) { return ad::exp(v); }, [](double x) { return std::exp(x); }},
        {"log", 0.05, 5.0, [](Var v) { return ad::log(v); }, [](double x) { return std::log(x); }},
        {"tanh", -3.0, 3.0, [](Var v) { return ad::tanh(v); }, [](double x) { return std::tanh(x); }},
        {"sigmoid", -4.0, 4.0, [](Var v) { return ad::sigmoid(v); },
         [](double x) { return 1.0 / (1.0 + std::exp(-x)); }},
        {"sqrt", 0.05, 9.0, [](Var v) { return ad::sqrt(v); }, [](double x) { return std::sqrt(x); }},
        {"neg", -2.0, 2.0, [](Var v) { return -v; }, [](double x) { return -x; }},
        {"pow2.7", 0.1, 4.0, [](Var v) { return ad::pow(v, 2.7); },
         [](double x) { return std::pow(x, 2.7); }},
        {"normal_cdf", -3.0, 3.0, [](Var v) { return ad::normal_cdf(v); },
         [](double x) { return special::normal_cdf(x); }},
        {"normal_pdf", -3.0, 3.0, [](Var v) { return ad::normal_pdf(v); },
         [](double x) { return special::normal_pdf(x); }},
        {"normal_quantile", 0.02, 0.98, [](Var v) { return ad::normal_quantile(v); },
         [](double x) { return special::normal_quantile(x); }},
        {"log_gamma", 0.3, 8.0, [](Var v) { return ad::log_gamma(v); },
         [](double x) { return special::log_gamma(x); }},
    };

    Rng rng(20240801);
    for (const auto& c : cases) {
        CAPTURE(c.name);
        for (int i = 0; i < 100; ++i) {
            const double x = rng.uniform(c.lo, c.hi);
            Tape t;
            Var v = t.leaf(x);
            Var out = c.build(v);
            auto g = ad::backward(t, out);
            const double fd = oracle::central_diff(c.eval, x);
            CAPTURE(x);
            CHECK(oracle::grad_close(g[v.idx], fd));
        }
    }
}

TEST_CASE("binary primitives match finite differences in both slots") {
    Rng rng(77);
    for (int i = 0; i < 100; ++i) {
        const double x = rng.uniform(0.2, 2.0);
        const double y = rng.uniform(0.2, 2.0);

        auto check2 = [&](auto build, auto eval) {
            Tape t;
            Var a = t.leaf(x), b = t.leaf(y);
            Var out = build(a, b);
            auto g = ad::backward(t, out);
            const double fdx = oracle::central_diff([&](double v) { return eval(v, y); }, x);
            const double fdy = oracle::central_diff([&](double v) { return eval(x, v); }, y);
            CHECK(oracle::grad_close(g[a.idx], fdx));
            CHECK(oracle::grad_close(g[b.idx], fdy));
        };

        check2([](Var a, Var b) { return a + b; }, [](double a, double b) { return a + b; });
        check2([](Var a, Var b) { return a - b; }, [](double a, double b) { return a - b; });
        check2([](Var a, Var b) { return a * b; }, [](double a, double b) { return a * b; });
        check2([](Var a, Var b) { return a / b; }, [](double a, double b) { return a / b; });
        check2([](Var a, Var b) { return ad::pow(a, b); },
               [](double a, double b) { return std::pow(a, b); });
    }
}

TEST_CASE("student-t primitives match finite differences") {
    Rng rng(99);
    for (int i = 0; i < 50; ++i) {
        const double x = rng.uniform(-2.5, 2.5);
        const double p = rng.uniform(0.05, 0.95);
        const double nu = rng.uniform(2.5, 30.0);

        {
            Tape t;
            Var xv = t.leaf(x), nv = t.leaf(nu);
            Var out = ad::student_t_cdf(xv, nv);
            auto g = ad::backward(t, out);
            const double fdx = oracle::central_diff(
                [&](double v) { return special::student_t_cdf(v, nu); }, x);
            const double fdn = oracle::central_diff(
                [&](double v) { return special::student_t_cdf(x, v); }, nu, 1e-4 * (1.0 + nu));
            CHECK(oracle::grad_close(g[xv.idx], fdx, 1e-5, 1e-7));
            CHECK(oracle::grad_close(g[nv.idx], fdn, 1e-4, 1e-7));
        }
        {
            Tape t;
            Var pv = t.leaf(p), nv = t.leaf(nu);
            Var out = ad::student_t_quantile(pv, nv);
            auto g = ad::backward(t, out);
            const double fdp = oracle::central_diff(
                [&](double v) { return special::student_t_quantile(v, nu); }, p, 1e-7);
            const double fdn = oracle::central_diff(
                [&](double v) { return special::student_t_quantile(p, v); }, nu, 1e-4 * (1.0 + nu));
            CHECK(oracle::grad_close(g[pv.idx], fdp, 1e-5, 1e-7));
            CHECK(oracle::grad_close(g[nv.idx], fdn, 1e-4, 1e-6));
        }
    }
}

TEST_CASE("gradient is additive over independent subgraphs") {
    Rng rng(5);
    for (int i = 0; i < 20; ++i) {
        const double x = rng.uniform(0.2, 2.0);
        Tape t;
        Var v = t.leaf(x);
        Var f1 = ad::exp(v) * ad::tanh(v);
        Var f2 = ad::log(v) + v * v;
        Var sum = f1 + f2;
        auto g_sum = ad::backward(t, sum);
        auto g1 = ad::backward(t, f1);
        auto g2 = ad::backward(t, f2);
        CHECK(g_sum[v.idx] == doctest::Approx(g1[v.idx] + g2[v.idx]).epsilon(1e-12));
    }
}

TEST_CASE("constants carry exactly zero gradient") {
    Tape t;
    Var x = t.leaf(2.0);
    Var c = t.constant(3.0);
    Var f = x * c + c;
    auto g = ad::backward(t, f);
    CHECK(g[c.idx] == 0.0);
    CHECK(g[x.idx] == doctest::Approx(3.0));
}

TEST_CASE("forward_op validates arity and tape membership") {
    Tape t, other;
    Var a = t.leaf(1.0), b = t.leaf(2.0);
    Var foreign = other.leaf(1.0);

    std::vector<Var> two = {a, b};
    std::vector<double> one_local = {1.0};
    CHECK_THROWS_AS(ad::forward_op(t, ad::Op::Add, two, one_local), StructuralError);

    std::vector<Var> mixed = {a, foreign};
    std::vector<double> two_locals = {1.0, 1.0};
    CHECK_THROWS_AS(ad::forward_op(t, ad::Op::Add, mixed, two_locals), StructuralError);

    Var s = ad::forward_op(t, ad::Op::Add, two, two_locals);
    CHECK(s.value() == 3.0);

    std::vector<Var> one = {a};
    CHECK_THROWS_AS(ad::forward_op(t, ad::Op::AddConst, one, one_local), StructuralError);
}

TEST_CASE("log and div clamp near-zero arguments and record diagnostics") {
    Tape t;
    Var x = t.leaf(0.0);
    Var l = ad::log(x);
    CHECK(l.value() == doctest::Approx(std::log(1e-12)));
    CHECK(t.diagnostics().log_clamps == 1);

    Var y = t.leaf(1.0), z = t.leaf(0.0);
    Var d = y / z;
    CHECK(std::isfinite(d.value()));
    CHECK(t.diagnostics().div_clamps == 1);
}

TEST_CASE("tape node count never decreases and leaves are tracked") {
    Tape t;
    Var a = t.leaf(1.0);
    const auto n0 = t.size();
    Var b = ad::exp(a);
    CHECK(t.size() == n0 + 1);
    CHECK(t.is_leaf(a.idx));
    CHECK_FALSE(t.is_leaf(b.idx));
}
