#include "asl/tape.hpp"

namespace asl::ad {

void fast_tanh(const Mat& x, Mat& out) {
    // tanh(x) = (1 - e) / (1 + e) with e = exp(-2x). Inputs are clamped
    // to [-19, 19], which keeps exp in range and is exact: |tanh| differs
    // from 1 by < 1e-16 beyond that. Stays in Eigen's vectorised exp
    // (libm tanh on doubles is scalar and ~7x slower here).
    out = (-2.0 * x.array().min(19.0).max(-19.0)).exp();
    out = (1.0 - out.array()) / (1.0 + out.array());
}

Var Tape::push(Node n) {
    // Derived nodes get their value storage allocated at record time so
    // later shape checks (and the first forward()) see correct extents.
    if (n.op != Op::Leaf && n.op != Op::Const) {
        const Mat& a = nodes_[n.a].value;
        Eigen::Index rows = a.rows(), cols = a.cols();
        switch (n.op) {
        case Op::Add:
        case Op::Sub:
        case Op::Mul:
        case Op::Div:
            if (a.size() == 1) {
                rows = nodes_[n.b].value.rows();
                cols = nodes_[n.b].value.cols();
            }
            break;
        case Op::MatMul:
            rows = a.rows();
            cols = nodes_[n.b].value.cols();
            break;
        case Op::SumAll:
        case Op::MeanAll:
            rows = cols = 1;
            break;
        case Op::GatherCols:
            cols = static_cast<Eigen::Index>(
                gather_indices_[static_cast<int>(n.c)].size());
            break;
        default:
            break;
        }
        n.value.setZero(rows, cols);
        n.needs_grad = nodes_[n.a].needs_grad ||
                       (n.b >= 0 && nodes_[n.b].needs_grad);
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

const Tape::Node& Tape::at(Var v) const {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw UsageError("Tape: variable is not on this tape");
    return nodes_[v.id];
}

Tape::Node& Tape::at(Var v) {
    if (v.id < 0 || v.id >= static_cast<int>(nodes_.size()))
        throw UsageError("Tape: variable is not on this tape");
    return nodes_[v.id];
}

void Tape::check_elementwise(const Mat& a, const Mat& b, const char* what) const {
    const bool same = a.rows() == b.rows() && a.cols() == b.cols();
    const bool bs = a.size() == 1 || b.size() == 1;
    if (!same && !bs)
        throw UsageError(std::string("Tape: shape mismatch in ") + what);
}

Var Tape::leaf(const Mat& value) {
    Node n{Op::Leaf, -1, -1, 0.0, true, 0, value, {}};
    return push(std::move(n));
}
Var Tape::leaf(double value) { return leaf(Mat::Constant(1, 1, value)); }
Var Tape::constant(const Mat& value) {
    Node n{Op::Const, -1, -1, 0.0, false, 0, value, {}};
    return push(std::move(n));
}
Var Tape::constant(double value) { return constant(Mat::Constant(1, 1, value)); }

Var Tape::add(Var a, Var b) {
    check_elementwise(at(a).value, at(b).value, "add");
    return push({Op::Add, a.id, b.id});
}
Var Tape::sub(Var a, Var b) {
    check_elementwise(at(a).value, at(b).value, "sub");
    return push({Op::Sub, a.id, b.id});
}
Var Tape::mul(Var a, Var b) {
    check_elementwise(at(a).value, at(b).value, "mul");
    return push({Op::Mul, a.id, b.id});
}
Var Tape::div(Var a, Var b) {
    check_elementwise(at(a).value, at(b).value, "div");
    return push({Op::Div, a.id, b.id});
}
Var Tape::matmul(Var a, Var b) {
    if (at(a).value.cols() != at(b).value.rows())
        throw UsageError("Tape: inner dimension mismatch in matmul");
    return push({Op::MatMul, a.id, b.id});
}
Var Tape::add_col(Var m, Var col) {
    if (at(col).value.cols() != 1 || at(m).value.rows() != at(col).value.rows())
        throw UsageError("Tape: add_col expects a column vector matching rows");
    return push({Op::AddCol, m.id, col.id});
}
Var Tape::tanh(Var a) { return push({Op::Tanh, a.id, -1}); }
Var Tape::exp(Var a) { return push({Op::Exp, a.id, -1}); }
Var Tape::neg(Var a) { return push({Op::Neg, a.id, -1}); }
Var Tape::square(Var a) { return push({Op::Square, a.id, -1}); }
Var Tape::scale(Var a, double c) { return push({Op::Scale, a.id, -1, c}); }
Var Tape::shift(Var a, double c) { return push({Op::Shift, a.id, -1, c}); }
Var Tape::sum_all(Var a) { return push({Op::SumAll, a.id, -1}); }
Var Tape::mean_all(Var a) { return push({Op::MeanAll, a.id, -1}); }

Var Tape::sig_gate(Var a, double k) { return push({Op::SigGate, a.id, -1, k}); }
Var Tape::one_minus_square(Var a) { return push({Op::OneMinusSquare, a.id, -1}); }

Var Tape::gather_cols(Var a, const std::vector<int>& indices) {
    const auto cols = at(a).value.cols();
    for (int i : indices)
        if (i < 0 || i >= cols)
            throw UsageError("Tape: gather_cols index out of range");
    gather_indices_.push_back(indices);
    return push({Op::GatherCols, a.id, -1,
                 static_cast<double>(gather_indices_.size() - 1)});
}

void Tape::set_value(Var v, const Mat& value) {
    Node& n = at(v);
    if (n.op != Op::Leaf && n.op != Op::Const)
        throw UsageError("Tape: set_value on a derived node");
    if (n.value.rows() != value.rows() || n.value.cols() != value.cols())
        throw UsageError("Tape: set_value shape change");
    n.value = value;
}

Mat& Tape::value_mut(Var v) {
    Node& n = at(v);
    if (n.op != Op::Leaf && n.op != Op::Const)
        throw UsageError("Tape: value_mut on a derived node");
    return n.value;
}

const Mat& Tape::value(Var v) const { return at(v).value; }

double Tape::scalar(Var v) const {
    const Mat& m = at(v).value;
    if (m.size() != 1)
        throw UsageError("Tape: scalar() on a non-scalar node");
    return m(0, 0);
}

const Mat& Tape::grad(Var v) const {
    const Node& n = at(v);
    if (epoch_ == 0)
        throw UsageError("Tape: no gradient recorded; run backward() first");
    if (!n.needs_grad || n.epoch != epoch_) {
        // Not reached by the root's adjoint flow this pass: gradient is zero.
        zero_scratch_.setZero(n.value.rows(), n.value.cols());
        return zero_scratch_;
    }
    return n.grad;
}

void Tape::forward() {
    for (Node& n : nodes_) {
        const Mat* pa = n.a >= 0 ? &nodes_[n.a].value : nullptr;
        const Mat* pb = n.b >= 0 ? &nodes_[n.b].value : nullptr;
        switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            break;
        case Op::Add:
            if (pa->size() == 1 && pb->size() != 1)
                n.value = (*pa)(0, 0) + pb->array();
            else if (pb->size() == 1 && pa->size() != 1)
                n.value = pa->array() + (*pb)(0, 0);
            else
                n.value = *pa + *pb;
            break;
        case Op::Sub:
            if (pa->size() == 1 && pb->size() != 1)
                n.value = (*pa)(0, 0) - pb->array();
            else if (pb->size() == 1 && pa->size() != 1)
                n.value = pa->array() - (*pb)(0, 0);
            else
                n.value = *pa - *pb;
            break;
        case Op::Mul:
            if (pa->size() == 1 && pb->size() != 1)
                n.value = (*pa)(0, 0) * pb->array();
            else if (pb->size() == 1 && pa->size() != 1)
                n.value = pa->array() * (*pb)(0, 0);
            else
                n.value = pa->cwiseProduct(*pb);
            break;
        case Op::Div:
            if (pa->size() == 1 && pb->size() != 1)
                n.value = (*pa)(0, 0) / pb->array();
            else if (pb->size() == 1 && pa->size() != 1)
                n.value = pa->array() / (*pb)(0, 0);
            else
                n.value = pa->cwiseQuotient(*pb);
            break;
        case Op::MatMul:
            n.value.noalias() = (*pa) * (*pb);
            break;
        case Op::AddCol:
            n.value = *pa;
            n.value.colwise() += pb->col(0);
            break;
        case Op::Tanh:
            fast_tanh(*pa, n.value);
            break;
        case Op::Exp:
            n.value = pa->array().exp();
            break;
        case Op::Neg:
            n.value = -(*pa);
            break;
        case Op::Square:
            n.value = pa->array().square();
            break;
        case Op::Scale:
            n.value = n.c * (*pa);
            break;
        case Op::Shift:
            n.value = pa->array() + n.c;
            break;
        case Op::SumAll:
            n.value(0, 0) = pa->sum();
            break;
        case Op::MeanAll:
            n.value(0, 0) = pa->mean();
            break;
        case Op::SigGate:
            // (1 + tanh(k x)) / 2 == logistic(2 k x); IEEE limits give the
            // correct saturation for extreme arguments.
            n.value = 1.0 / (1.0 + (-2.0 * n.c * pa->array()).exp());
            break;
        case Op::OneMinusSquare:
            n.value = 1.0 - pa->array().square();
            break;
        case Op::GatherCols: {
            const auto& idx = gather_indices_[static_cast<int>(n.c)];
            for (size_t j = 0; j < idx.size(); ++j)
                n.value.col(j) = pa->col(idx[j]);
            break;
        }
        }
    }
}

template <typename Expr> void Tape::accum(int id, const Expr& e) {
    Node& t = nodes_[id];
    if (!t.needs_grad)
        return;
    if (t.epoch != epoch_) {
        t.grad.resize(t.value.rows(), t.value.cols());
        t.grad = e;
        t.epoch = epoch_;
    } else {
        t.grad += e;
    }
}

template <typename Expr> void Tape::accum_bcast(int id, const Expr& e) {
    Node& t = nodes_[id];
    if (!t.needs_grad)
        return;
    if (t.value.size() == 1 &&
        !(e.rows() == 1 && e.cols() == 1)) {
        if (t.epoch != epoch_) {
            t.grad.resize(1, 1);
            t.grad(0, 0) = e.sum();
            t.epoch = epoch_;
        } else {
            t.grad(0, 0) += e.sum();
        }
        return;
    }
    accum(id, e.matrix());
}

void Tape::backward(Var root) {
    const Node& r = at(root);
    if (r.value.size() != 1)
        throw UsageError("Tape: backward root must be scalar");
    if (!r.needs_grad)
        throw UsageError("Tape: backward root does not depend on any leaf");

    ++epoch_;
    Node& rn = nodes_[root.id];
    rn.grad.resize(1, 1);
    rn.grad(0, 0) = 1.0;
    rn.epoch = epoch_;

    for (int i = root.id; i >= 0; --i) {
        Node& n = nodes_[i];
        if (!n.needs_grad || n.epoch != epoch_)
            continue; // no adjoint reached this node
        const Mat& g = n.grad;
        const Mat* va = n.a >= 0 ? &nodes_[n.a].value : nullptr;
        const Mat* vb = n.b >= 0 ? &nodes_[n.b].value : nullptr;
        switch (n.op) {
        case Op::Leaf:
        case Op::Const:
            break;
        case Op::Add:
            accum_bcast(n.a, g.array());
            accum_bcast(n.b, g.array());
            break;
        case Op::Sub:
            accum_bcast(n.a, g.array());
            accum_bcast(n.b, (-g).array());
            break;
        case Op::Mul:
            if (va->size() == 1 && vb->size() != 1) {
                accum_bcast(n.a, (g.array() * vb->array()));
                accum(n.b, ((*va)(0, 0) * g.array()).matrix());
            } else if (vb->size() == 1 && va->size() != 1) {
                accum(n.a, ((*vb)(0, 0) * g.array()).matrix());
                accum_bcast(n.b, (g.array() * va->array()));
            } else {
                accum(n.a, g.cwiseProduct(*vb));
                accum(n.b, g.cwiseProduct(*va));
            }
            break;
        case Op::Div:
            // out = a / b; d/da = 1/b, d/db = -out/b.
            if (va->size() == 1 && vb->size() != 1) {
                accum_bcast(n.a, (g.array() / vb->array()));
                accum(n.b, (-(g.array() * n.value.array() / vb->array())).matrix());
            } else if (vb->size() == 1 && va->size() != 1) {
                accum(n.a, (g.array() / (*vb)(0, 0)).matrix());
                accum_bcast(n.b, (-(g.array() * n.value.array() / (*vb)(0, 0))));
            } else {
                accum(n.a, g.cwiseQuotient(*vb));
                accum(n.b, (-(g.array() * n.value.array() / vb->array())).matrix());
            }
            break;
        case Op::MatMul: {
            // Products accumulate straight into the adjoint buffers
            // (noalias GEMM), no temporaries.
            Node& ta = nodes_[n.a];
            if (ta.needs_grad) {
                if (ta.epoch != epoch_) {
                    ta.grad.resize(ta.value.rows(), ta.value.cols());
                    ta.grad.noalias() = g * vb->transpose();
                    ta.epoch = epoch_;
                } else {
                    ta.grad.noalias() += g * vb->transpose();
                }
            }
            Node& tb = nodes_[n.b];
            if (tb.needs_grad) {
                if (tb.epoch != epoch_) {
                    tb.grad.resize(tb.value.rows(), tb.value.cols());
                    tb.grad.noalias() = va->transpose() * g;
                    tb.epoch = epoch_;
                } else {
                    tb.grad.noalias() += va->transpose() * g;
                }
            }
            break;
        }
        case Op::AddCol:
            accum(n.a, g);
            accum(n.b, g.rowwise().sum());
            break;
        case Op::Tanh:
            accum(n.a, (g.array() * (1.0 - n.value.array().square())).matrix());
            break;
        case Op::Exp:
            accum(n.a, (g.array() * n.value.array()).matrix());
            break;
        case Op::Neg:
            accum(n.a, -g);
            break;
        case Op::Square:
            accum(n.a, (2.0 * g.array() * va->array()).matrix());
            break;
        case Op::Scale:
            accum(n.a, n.c * g);
            break;
        case Op::Shift:
            accum(n.a, g);
            break;
        case Op::SumAll: {
            Node& t = nodes_[n.a];
            if (t.needs_grad) {
                if (t.epoch != epoch_) {
                    t.grad.resize(t.value.rows(), t.value.cols());
                    t.grad.setConstant(g(0, 0));
                    t.epoch = epoch_;
                } else {
                    t.grad.array() += g(0, 0);
                }
            }
            break;
        }
        case Op::MeanAll: {
            Node& t = nodes_[n.a];
            if (t.needs_grad) {
                const double contrib = g(0, 0) / t.value.size();
                if (t.epoch != epoch_) {
                    t.grad.resize(t.value.rows(), t.value.cols());
                    t.grad.setConstant(contrib);
                    t.epoch = epoch_;
                } else {
                    t.grad.array() += contrib;
                }
            }
            break;
        }
        case Op::SigGate:
            accum(n.a, (2.0 * n.c * g.array() * n.value.array() *
                        (1.0 - n.value.array()))
                           .matrix());
            break;
        case Op::OneMinusSquare:
            accum(n.a, (-2.0 * g.array() * va->array()).matrix());
            break;
        case Op::GatherCols: {
            Node& t = nodes_[n.a];
            if (t.needs_grad) {
                if (t.epoch != epoch_) {
                    t.grad.setZero(t.value.rows(), t.value.cols());
                    t.epoch = epoch_;
                }
                const auto& idx = gather_indices_[static_cast<int>(n.c)];
                for (size_t j = 0; j < idx.size(); ++j)
                    t.grad.col(idx[j]) += g.col(j);
            }
            break;
        }
        }
    }
}

} // namespace asl::ad
