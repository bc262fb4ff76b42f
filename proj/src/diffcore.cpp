#include "wpvc/diffcore.hpp"

#include <cmath>

#include "wpvc/errors.hpp"
#include "wpvc/special.hpp"

namespace wpvc::ad {

double Var::value() const { return tape->value(idx); }

Var Tape::leaf(double value) {
    Node n;
    n.op = Op::Leaf;
    nodes_.push_back(n);
    values_.push_back(value);
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::constant(double value) {
    Node n;
    n.op = Op::Constant;
    nodes_.push_back(n);
    values_.push_back(value);
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

void Tape::clear() {
    nodes_.clear();
    values_.clear();
    diag_ = Diagnostics{};
}

void Tape::reserve(std::size_t n) {
    nodes_.reserve(n);
    values_.reserve(n);
}

Var Tape::append1(Op op, Var a, double da, double value) {
    if (a.tape != this) throw StructuralError("diffcore: input from a different tape");
    Node n;
    n.op = op;
    n.a = a.idx;
    n.da = da;
    nodes_.push_back(n);
    values_.push_back(value);
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

Var Tape::append2(Op op, Var a, Var b, double da, double db, double value) {
    if (a.tape != this || b.tape != this)
        throw StructuralError("diffcore: input from a different tape");
    Node n;
    n.op = op;
    n.a = a.idx;
    n.b = b.idx;
    n.da = da;
    n.db = db;
    nodes_.push_back(n);
    values_.push_back(value);
    return Var{this, static_cast<std::int32_t>(nodes_.size() - 1)};
}

namespace {

int arity(Op op) {
    switch (op) {
        case Op::Constant:
        case Op::Leaf:
            return 0;
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
        case Op::Pow:
        case Op::StudentTCdf:
        case Op::StudentTQuantile:
            return 2;
        case Op::AddConst:
        case Op::MulConst:
        case Op::PowConst:
            return -1; // needs a bound constant, not constructible via forward_op
        default:
            return 1;
    }
}

double clamp_log_arg(Tape& t, double x) {
    if (x < Tape::kEps) {
        ++t.diagnostics().log_clamps;
        return Tape::kEps;
    }
    return x;
}

double clamp_den(Tape& t, double x) {
    if (std::fabs(x) < Tape::kEps) {
        ++t.diagnostics().div_clamps;
        return x < 0.0 ? -Tape::kEps : Tape::kEps;
    }
    return x;
}

double clamp_unit_open(Tape& t, double p) {
    if (p < Tape::kEps) {
        ++t.diagnostics().other_clamps;
        return Tape::kEps;
    }
    if (p > 1.0 - Tape::kEps) {
        ++t.diagnostics().other_clamps;
        return 1.0 - Tape::kEps;
    }
    return p;
}

// Central difference of the t CDF in nu, used as the local partial of the
// t-CDF and t-quantile primitives (no closed form exists).
double t_cdf_dnu(double x, double nu) {
    const double h = 1e-5 * (1.0 + std::fabs(nu));
    return (special::student_t_cdf(x, nu + h) - special::student_t_cdf(x, nu - h)) / (2.0 * h);
}

} // namespace

Var forward_op(Tape& tape, Op op, std::span<const Var> inputs, std::span<const double> locals) {
    const int k = arity(op);
    if (k < 0) throw StructuralError("diffcore: op requires a bound constant; use its builder");
    if (static_cast<int>(inputs.size()) != k || static_cast<int>(locals.size()) != k)
        throw StructuralError("diffcore: input/local count does not match op arity");
    for (const Var& v : inputs)
        if (v.tape != &tape) throw StructuralError("diffcore: input from a different tape");

    auto val = [&](int i) { return inputs[i].value(); };
    double value = 0.0;
    switch (op) {
        case Op::Add: value = val(0) + val(1); break;
        case Op::Sub: value = val(0) - val(1); break;
        case Op::Mul: value = val(0) * val(1); break;
        case Op::Div: value = val(0) / clamp_den(tape, val(1)); break;
        case Op::Neg: value = -val(0); break;
        case Op::Exp: value = std::exp(val(0)); break;
        case Op::Log: value = std::log(clamp_log_arg(tape, val(0))); break;
        case Op::Tanh: value = std::tanh(val(0)); break;
        case Op::Sigmoid: value = 1.0 / (1.0 + std::exp(-val(0))); break;
        case Op::Sqrt: value = std::sqrt(val(0)); break;
        case Op::Pow: value = std::pow(val(0), val(1)); break;
        case Op::NormalCdf: value = special::normal_cdf(val(0)); break;
        case Op::NormalPdf: value = special::normal_pdf(val(0)); break;
        case Op::NormalQuantile: value = special::normal_quantile(val(0)); break;
        case Op::LogGamma: value = special::log_gamma(val(0)); break;
        case Op::StudentTCdf: value = special::student_t_cdf(val(0), val(1)); break;
        case Op::StudentTQuantile: value = special::student_t_quantile(val(0), val(1)); break;
        case Op::Constant:
        case Op::Leaf:
            throw StructuralError("diffcore: leaves are created via Tape::leaf/constant");
        default:
            throw StructuralError("diffcore: unknown op");
    }
    if (k == 1) return tape.append1(op, inputs[0], locals[0], value);
    return tape.append2(op, inputs[0], inputs[1], locals[0], locals[1], value);
}

std::vector<double> backward(const Tape& tape, Var output) {
    if (output.tape != &tape || output.idx < 0 ||
        output.idx >= static_cast<std::int32_t>(tape.size()))
        throw StructuralError("diffcore: output does not belong to the tape");
    std::vector<double> adj(tape.size(), 0.0);
    adj[output.idx] = 1.0;
    for (std::int32_t i = output.idx; i >= 0; --i) {
        const double a = adj[i];
        if (a == 0.0) continue;
        const Tape::Node& n = tape.node(i);
        if (n.a >= 0) adj[n.a] += n.da * a;
        if (n.b >= 0) adj[n.b] += n.db * a;
    }
    // Constants are not differentiable inputs; their gradient is 0 by definition.
    for (std::size_t i = 0; i < tape.size(); ++i)
        if (tape.node(static_cast<std::int32_t>(i)).op == Op::Constant) adj[i] = 0.0;
    return adj;
}

Var operator+(Var a, Var b) { return a.tape->append2(Op::Add, a, b, 1.0, 1.0, a.value() + b.value()); }
Var operator-(Var a, Var b) { return a.tape->append2(Op::Sub, a, b, 1.0, -1.0, a.value() - b.value()); }
Var operator*(Var a, Var b) {
    return a.tape->append2(Op::Mul, a, b, b.value(), a.value(), a.value() * b.value());
}
Var operator/(Var a, Var b) {
    const double den = clamp_den(*a.tape, b.value());
    const double v = a.value() / den;
    return a.tape->append2(Op::Div, a, b, 1.0 / den, -v / den, v);
}
Var operator-(Var a) { return a.tape->append1(Op::Neg, a, -1.0, -a.value()); }

Var operator+(Var a, double c) { return a.tape->append1(Op::AddConst, a, 1.0, a.value() + c); }
Var operator+(double c, Var a) { return a + c; }
Var operator-(Var a, double c) { return a + (-c); }
Var operator-(double c, Var a) { return a.tape->append1(Op::AddConst, a, -1.0, c - a.value()); }
Var operator*(Var a, double c) { return a.tape->append1(Op::MulConst, a, c, a.value() * c); }
Var operator*(double c, Var a) { return a * c; }
Var operator/(Var a, double c) { return a * (1.0 / c); }
Var operator/(double c, Var a) {
    const double den = clamp_den(*a.tape, a.value());
    return a.tape->append1(Op::MulConst, a, -c / (den * den), c / den);
}

Var exp(Var x) {
    const double v = std::exp(x.value());
    return x.tape->append1(Op::Exp, x, v, v);
}
Var log(Var x) {
    const double arg = clamp_log_arg(*x.tape, x.value());
    return x.tape->append1(Op::Log, x, 1.0 / arg, std::log(arg));
}
Var tanh(Var x) {
    const double v = std::tanh(x.value());
    return x.tape->append1(Op::Tanh, x, 1.0 - v * v, v);
}
Var sigmoid(Var x) {
    const double v = 1.0 / (1.0 + std::exp(-x.value()));
    return x.tape->append1(Op::Sigmoid, x, v * (1.0 - v), v);
}
Var sqrt(Var x) {
    double arg = x.value();
    if (arg < Tape::kEps) {
        ++x.tape->diagnostics().other_clamps;
        arg = Tape::kEps;
    }
    const double v = std::sqrt(arg);
    return x.tape->append1(Op::Sqrt, x, 0.5 / v, v);
}
Var pow(Var x, Var y) {
    double base = x.value();
    if (base < Tape::kEps) {
        ++x.tape->diagnostics().other_clamps;
        base = Tape::kEps;
    }
    const double v = std::pow(base, y.value());
    return x.tape->append2(Op::Pow, x, y, y.value() * v / base, v * std::log(base), v);
}
Var pow(Var x, double c) {
    double base = x.value();
    if (base < Tape::kEps && c < 1.0) {
        ++x.tape->diagnostics().other_clamps;
        base = Tape::kEps;
    }
    const double v = std::pow(base, c);
    return x.tape->append1(Op::PowConst, x, c * std::pow(base, c - 1.0), v);
}
Var normal_cdf(Var x) {
    return x.tape->append1(Op::NormalCdf, x, special::normal_pdf(x.value()),
                           special::normal_cdf(x.value()));
}
Var normal_pdf(Var x) {
    const double v = special::normal_pdf(x.value());
    return x.tape->append1(Op::NormalPdf, x, -x.value() * v, v);
}
Var normal_quantile(Var p) {
    const double arg = clamp_unit_open(*p.tape, p.value());
    const double v = special::normal_quantile(arg);
    return p.tape->append1(Op::NormalQuantile, p, 1.0 / special::normal_pdf(v), v);
}
Var log_gamma(Var x) {
    return x.tape->append1(Op::LogGamma, x, special::digamma(x.value()),
                           special::log_gamma(x.value()));
}
Var student_t_cdf(Var x, Var nu) {
    const double v = special::student_t_cdf(x.value(), nu.value());
    return x.tape->append2(Op::StudentTCdf, x, nu, special::student_t_pdf(x.value(), nu.value()),
                           t_cdf_dnu(x.value(), nu.value()), v);
}
Var student_t_quantile(Var p, Var nu) {
    const double arg = clamp_unit_open(*p.tape, p.value());
    const double x = special::student_t_quantile(arg, nu.value());
    const double f = special::student_t_pdf(x, nu.value());
    // Implicit differentiation of F(x(p, nu), nu) = p.
    return p.tape->append2(Op::StudentTQuantile, p, nu, 1.0 / f, -t_cdf_dnu(x, nu.value()) / f, x);
}

} // namespace wpvc::ad
