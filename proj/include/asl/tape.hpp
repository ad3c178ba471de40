#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "asl/errors.hpp"

namespace asl::ad {

using Mat = Eigen::MatrixXd;

/// Handle to a node on a Tape. Only valid for the tape that created it.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

/// Reverse-mode automatic differentiation over a record of matrix-valued
/// operations. The graph is recorded once; forward() re-evaluates it in
/// place after leaf values change and backward() accumulates adjoints,
/// so a training loop performs no allocation after the first pass.
///
/// Elementwise binary ops broadcast a 1x1 operand against any shape
/// (the adjoint of the scalar side is the sum of elementwise adjoints).
/// Subgraphs that depend only on constants carry no adjoint storage and
/// are skipped by backward().
class Tape {
public:
    /// Trainable leaf; participates in gradients.
    Var leaf(const Mat& value);
    Var leaf(double value);

    /// Non-trainable input; grad() on it is always zero.
    Var constant(const Mat& value);
    Var constant(double value);

    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b); // elementwise
    Var div(Var a, Var b); // elementwise
    Var matmul(Var a, Var b);
    Var add_col(Var m, Var col); // column vector broadcast across columns
    Var tanh(Var a);
    Var exp(Var a);
    Var neg(Var a);
    Var square(Var a);
    Var scale(Var a, double c); // a * c
    Var shift(Var a, double c); // a + c
    Var sum_all(Var a);         // -> 1x1
    Var mean_all(Var a);        // -> 1x1

    /// Fused (1 + tanh(k a)) / 2, evaluated as a logistic.
    Var sig_gate(Var a, double k);
    /// Fused 1 - a^2 (tanh tangent factor).
    Var one_minus_square(Var a);
    /// Column gather: out(:, j) = a(:, indices[j]).
    Var gather_cols(Var a, const std::vector<int>& indices);

    /// Overwrite a leaf/constant value. Shape must be unchanged.
    void set_value(Var v, const Mat& value);
    /// Mutable access to a leaf value (for in-place optimizer updates).
    Mat& value_mut(Var v);

    const Mat& value(Var v) const;
    double scalar(Var v) const;

    /// Adjoint of v from the most recent backward() pass.
    const Mat& grad(Var v) const;

    /// Recomputes every recorded operation in insertion order.
    void forward();

    /// Accumulates d(root)/d(node) into every gradient-carrying node.
    /// root must be a 1x1 node on this tape.
    void backward(Var root);

    int size() const { return static_cast<int>(nodes_.size()); }

private:
    enum class Op : std::uint8_t {
        Leaf,
        Const,
        Add,
        Sub,
        Mul,
        Div,
        MatMul,
        AddCol,
        Tanh,
        Exp,
        Neg,
        Square,
        Scale,
        Shift,
        SumAll,
        MeanAll,
        SigGate,
        OneMinusSquare,
        GatherCols,
    };

    struct Node {
        Op op;
        int a = -1;
        int b = -1;
        double c = 0.0;
        bool needs_grad = false;
        std::uint32_t epoch = 0; // last backward pass that wrote grad
        Mat value;
        Mat grad;
    };

    Var push(Node n);
    const Node& at(Var v) const;
    Node& at(Var v);
    void check_elementwise(const Mat& a, const Mat& b, const char* what) const;

    // First accumulation in an epoch assigns; later ones add.
    template <typename Expr> void accum(int id, const Expr& e);
    // Adjoint contribution to one operand of an elementwise binary op,
    // honouring 1x1 broadcast (scalar side receives the sum).
    template <typename Expr> void accum_bcast(int id, const Expr& e);
    Mat& grad_buf(int id); // zeroed on demand for the current epoch

    std::vector<Node> nodes_;
    std::vector<std::vector<int>> gather_indices_; // Node::c indexes here
    std::uint32_t epoch_ = 0;
    mutable Mat zero_scratch_;
};

/// Vectorised hyperbolic tangent via exp (Eigen's double-precision tanh
/// falls back to scalar libm; the exp path stays in SIMD). Used by both
/// the tape and the standalone network forward so values agree exactly.
void fast_tanh(const Mat& x, Mat& out);

} // namespace asl::ad
