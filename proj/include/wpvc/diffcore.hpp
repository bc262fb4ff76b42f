// Scalar reverse-mode differentiation on an append-only tape. Every gradient
// in the project (copula MLE, vine log-density, the full VLSTM loss) flows
// through this engine and is checked against finite differences in the tests.
//
// A Tape is single-threaded while nodes are being appended; once a forward
// pass is complete it is immutable and safe to read from any thread.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace wpvc::ad {

enum class Op : std::uint8_t {
    Constant,
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Sqrt,
    Pow,        // x^y, both variable
    PowConst,   // x^c
    AddConst,   // x + c
    MulConst,   // x * c
    NormalCdf,
    NormalPdf,
    NormalQuantile,
    LogGamma,
    StudentTCdf,      // (x, nu)
    StudentTQuantile, // (p, nu)
};

class Tape;

// Handle to a tape node. Copyable; valid as long as the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::int32_t idx = -1;
    double value() const;
};

struct Diagnostics {
    std::uint64_t log_clamps = 0;
    std::uint64_t div_clamps = 0;
    std::uint64_t other_clamps = 0;
    std::uint64_t total() const { return log_clamps + div_clamps + other_clamps; }
};

class Tape {
  public:
    // Arguments of log/div (and other singular spots) are clamped this far
    // from zero; every clamp is counted in diagnostics().
    static constexpr double kEps = 1e-12;

    Var leaf(double value);
    Var constant(double value);

    std::size_t size() const { return nodes_.size(); }
    double value(std::int32_t idx) const { return values_[idx]; }
    bool is_leaf(std::int32_t idx) const { return nodes_[idx].op == Op::Leaf; }

    // Drops all nodes but keeps capacity; diagnostics are reset too.
    void clear();
    void reserve(std::size_t n);

    Diagnostics& diagnostics() { return diag_; }
    const Diagnostics& diagnostics() const { return diag_; }

    Var append1(Op op, Var a, double da, double value);
    Var append2(Op op, Var a, Var b, double da, double db, double value);

    struct Node {
        double da = 0.0;
        double db = 0.0;
        std::int32_t a = -1;
        std::int32_t b = -1;
        Op op = Op::Constant;
    };
    const Node& node(std::int32_t idx) const { return nodes_[idx]; }

  private:
    std::vector<Node> nodes_;
    std::vector<double> values_;
    Diagnostics diag_;
};

// Appends one primitive with caller-supplied local partials; the forward
// value is computed from the op itself. Throws StructuralError when the
// input/local counts do not match the op's arity or the inputs belong to a
// different tape.
Var forward_op(Tape& tape, Op op, std::span<const Var> inputs, std::span<const double> locals);

// One reverse sweep from `output`. Returns the adjoint of every node
// (d output / d node); entries of Constant nodes are exactly 0. The tape is
// not modified.
std::vector<double> backward(const Tape& tape, Var output);

// Primitive builders. Locals are evaluated at the forward point.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double c);
Var operator+(double c, Var a);
Var operator-(Var a, double c);
Var operator-(double c, Var a);
Var operator*(Var a, double c);
Var operator*(double c, Var a);
Var operator/(Var a, double c);
Var operator/(double c, Var a);

Var exp(Var x);
Var log(Var x);
Var tanh(Var x);
Var sigmoid(Var x);
Var sqrt(Var x);
Var pow(Var x, Var y);
Var pow(Var x, double c);
Var normal_cdf(Var x);
Var normal_pdf(Var x);
Var normal_quantile(Var p);
Var log_gamma(Var x);
Var student_t_cdf(Var x, Var nu);
Var student_t_quantile(Var p, Var nu);

} // namespace wpvc::ad
