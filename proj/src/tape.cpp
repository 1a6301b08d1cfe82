#include "ncf/tape.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace ncf {

const Tensor& Var::value() const { return tape_->node(id_).value; }

Tensor Var::grad() const {
    const Tape::Node& n = tape_->node(id_);
    if (n.has_grad) return n.grad;
    return Tensor::zeros(n.value.shape());
}

Var Tape::leaf(Tensor value, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

int Tape::add_node(Tensor value, int p0, int p1, const char* op, BackwardFn backward) {
    if (!value.all_finite())
        throw NumericError(std::string("forward pass: primitive '") + op + "' produced a non-finite value");
    Node n;
    n.value = std::move(value);
    n.parent0 = p0;
    n.parent1 = p1;
    n.op = op;
    const bool rg = (p0 >= 0 && node(p0).requires_grad) || (p1 >= 0 && node(p1).requires_grad);
    n.requires_grad = rg;
    if (rg) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int id) {
    Node& n = node(id);
    if (!n.has_grad) {
        n.grad = Tensor::zeros(n.value.shape());
        n.has_grad = true;
    }
    return n.grad;
}

void Tape::accum(int id, const Tensor& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    acc_add(grad_buf(id), g);
}

void Tape::backward_from(int root) {
    Node& r = node(root);
    if (r.value.size() != 1)
        throw ValidationError("grad: output must be scalar, got shape " + shape_str(r.value.shape()));
    if (r.requires_grad) {
        grad_buf(root).fill(1.0);
    }
    for (int i = root; i >= 0; --i) {
        Node& n = node(i);
        if (n.has_grad && n.backward) n.backward(*this, i);
        // Interior buffers are dead once their backward has run; leaves keep
        // both value (caller input) and grad (caller output).
        if (n.backward || n.parent0 >= 0 || n.parent1 >= 0) {
            n.value = Tensor();
            n.grad = Tensor();
            n.has_grad = false;
        }
    }
}

namespace {

Tape* join(const Var& a, const Var& b, const char* op) {
    if (!a.valid() || !b.valid() || a.tape() != b.tape())
        throw ValidationError(std::string(op) + ": operands must live on the same tape");
    return a.tape();
}

Tensor* target(Tape& t, int id) {
    if (id < 0 || !t.node(id).requires_grad) return nullptr;
    return &t.grad_buf(id);
}

template <class F>
void ew_acc(Tensor& into, const Tensor& g, const Tensor& x, F dfdx) {
    double* p = into.data();
    const double* pg = g.data();
    const double* px = x.data();
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) p[i] += pg[i] * dfdx(px[i]);
}

}  // namespace

Var add(const Var& a, const Var& b) {
    Tape* t = join(a, b, "add");
    int id = t->add_node(add(a.value(), b.value()), a.id(), b.id(), "add", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) acc_add(*ga, n.grad);
        if (Tensor* gb = target(t, n.parent1)) acc_add(*gb, n.grad);
    });
    return Var(t, id);
}

Var sub(const Var& a, const Var& b) {
    Tape* t = join(a, b, "sub");
    int id = t->add_node(sub(a.value(), b.value()), a.id(), b.id(), "sub", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) acc_add(*ga, n.grad);
        if (Tensor* gb = target(t, n.parent1)) acc_sub(*gb, n.grad);
    });
    return Var(t, id);
}

Var mul(const Var& a, const Var& b) {
    Tape* t = join(a, b, "mul");
    int id = t->add_node(mul(a.value(), b.value()), a.id(), b.id(), "mul", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) acc_mul(*ga, n.grad, t.node(n.parent1).value);
        if (Tensor* gb = target(t, n.parent1)) acc_mul(*gb, n.grad, t.node(n.parent0).value);
    });
    return Var(t, id);
}

Var div(const Var& a, const Var& b) {
    Tape* t = join(a, b, "div");
    int id = t->add_node(div(a.value(), b.value()), a.id(), b.id(), "div", [](Tape& t, int self) {
        auto& n = t.node(self);
        const Tensor& g = n.grad;
        const Tensor& bv = t.node(n.parent1).value;
        const Tensor& out = n.value;
        if (Tensor* ga = target(t, n.parent0)) {
            double* p = ga->data();
            for (std::size_t i = 0; i < g.size(); ++i) p[i] += g[i] / bv[i];
        }
        if (Tensor* gb = target(t, n.parent1)) {
            double* p = gb->data();
            for (std::size_t i = 0; i < g.size(); ++i) p[i] -= g[i] * out[i] / bv[i];
        }
    });
    return Var(t, id);
}

Var neg(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(neg(a.value()), a.id(), -1, "neg", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) acc_sub(*ga, n.grad);
    });
    return Var(t, id);
}

Var smul(const Var& a, double c) {
    Tape* t = a.tape();
    int id = t->add_node(smul(a.value(), c), a.id(), -1, "smul", [c](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) acc_scaled(*ga, n.grad, c);
    });
    return Var(t, id);
}

Var sadd(const Var& a, double c) {
    Tape* t = a.tape();
    int id = t->add_node(sadd(a.value(), c), a.id(), -1, "sadd", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) acc_add(*ga, n.grad);
    });
    return Var(t, id);
}

Var matmul(const Var& a, const Var& b) {
    Tape* t = join(a, b, "matmul");
    int id = t->add_node(matmul(a.value(), b.value()), a.id(), b.id(), "matmul", [](Tape& t, int self) {
        auto& n = t.node(self);
        const Tensor& g = n.grad;
        const Tensor& av = t.node(n.parent0).value;
        const Tensor& bv = t.node(n.parent1).value;
        // rows()/cols() view rank-1 operands as single rows, which makes the
        // vec-mat case fall out of the same kernels.
        if (Tensor* ga = target(t, n.parent0)) mm_nt_acc(g, bv, *ga);
        if (Tensor* gb = target(t, n.parent1)) mm_tn_acc(av, g, *gb);
    });
    return Var(t, id);
}

Var add_rowvec(const Var& x, const Var& v) {
    Tape* t = join(x, v, "add_rowvec");
    int id = t->add_node(add_rowvec(x.value(), v.value()), x.id(), v.id(), "add_rowvec", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* gx = target(t, n.parent0)) acc_add(*gx, n.grad);
        if (Tensor* gv = target(t, n.parent1)) acc_colsum(*gv, n.grad);
    });
    return Var(t, id);
}

Var concat_cols(const Var& a, const Var& b) {
    Tape* t = join(a, b, "concat_cols");
    const std::size_t wa = a.value().shape().back();
    int id = t->add_node(concat_cols(a.value(), b.value()), a.id(), b.id(), "concat_cols",
                         [wa](Tape& t, int self) {
                             auto& n = t.node(self);
                             const Tensor& g = n.grad;
                             const std::size_t w = g.shape().back();
                             if (Tensor* ga = target(t, n.parent0)) acc_add(*ga, slice_cols(g, 0, wa));
                             if (Tensor* gb = target(t, n.parent1)) acc_add(*gb, slice_cols(g, wa, w));
                         });
    return Var(t, id);
}

Var gather_rows(const Var& x, const std::vector<std::size_t>& idx) {
    Tape* t = x.tape();
    int id = t->add_node(gather_rows(x.value(), idx), x.id(), -1, "gather_rows", [idx](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* gx = target(t, n.parent0)) {
            const Tensor& g = n.grad;
            const std::size_t w = g.size() / std::max<std::size_t>(idx.size(), 1);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                double* p = gx->data() + idx[r] * w;
                const double* q = g.data() + r * w;
                for (std::size_t j = 0; j < w; ++j) p[j] += q[j];
            }
        }
    });
    return Var(t, id);
}

Var slice_cols(const Var& x, std::size_t lo, std::size_t hi) {
    Tape* t = x.tape();
    const std::size_t w = x.value().shape().back();
    int id = t->add_node(slice_cols(x.value(), lo, hi), x.id(), -1, "slice_cols", [lo, hi, w](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* gx = target(t, n.parent0)) {
            const Tensor& g = n.grad;
            const std::size_t ww = hi - lo;
            const std::size_t rows = g.size() / ww;
            for (std::size_t r = 0; r < rows; ++r) {
                double* p = gx->data() + r * w + lo;
                const double* q = g.data() + r * ww;
                for (std::size_t j = 0; j < ww; ++j) p[j] += q[j];
            }
        }
    });
    return Var(t, id);
}

Var reshape(const Var& x, Shape shape) {
    Tape* t = x.tape();
    Shape orig = x.value().shape();
    int id = t->add_node(reshape(x.value(), std::move(shape)), x.id(), -1, "reshape",
                         [orig](Tape& t, int self) {
                             auto& n = t.node(self);
                             if (Tensor* gx = target(t, n.parent0)) acc_add(*gx, reshape(n.grad, orig));
                         });
    return Var(t, id);
}

Var sum(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(sum(a.value()), a.id(), -1, "sum", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) {
            const double g = n.grad[0];
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g;
        }
    });
    return Var(t, id);
}

Var mean(const Var& a) {
    Tape* t = a.tape();
    const double inv = 1.0 / static_cast<double>(a.value().size());
    int id = t->add_node(mean(a.value()), a.id(), -1, "mean", [inv](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) {
            const double g = n.grad[0] * inv;
            for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += g;
        }
    });
    return Var(t, id);
}

Var abs(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(abs(a.value()), a.id(), -1, "abs", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0))
            ew_acc(*ga, n.grad, t.node(n.parent0).value,
                   [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
    });
    return Var(t, id);
}

Var square(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(square(a.value()), a.id(), -1, "square", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0))
            ew_acc(*ga, n.grad, t.node(n.parent0).value, [](double x) { return 2.0 * x; });
    });
    return Var(t, id);
}

Var sin(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(sin(a.value()), a.id(), -1, "sin", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0))
            ew_acc(*ga, n.grad, t.node(n.parent0).value, [](double x) { return std::cos(x); });
    });
    return Var(t, id);
}

Var cos(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(cos(a.value()), a.id(), -1, "cos", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0))
            ew_acc(*ga, n.grad, t.node(n.parent0).value, [](double x) { return -std::sin(x); });
    });
    return Var(t, id);
}

Var exp(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(exp(a.value()), a.id(), -1, "exp", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) acc_mul(*ga, n.grad, n.value);
    });
    return Var(t, id);
}

Var tanh(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(tanh(a.value()), a.id(), -1, "tanh", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0)) {
            const Tensor& g = n.grad;
            const Tensor& out = n.value;
            double* p = ga->data();
            for (std::size_t i = 0; i < g.size(); ++i) p[i] += g[i] * (1.0 - out[i] * out[i]);
        }
    });
    return Var(t, id);
}

Var swish(const Var& a) {
    Tape* t = a.tape();
    int id = t->add_node(swish(a.value()), a.id(), -1, "swish", [](Tape& t, int self) {
        auto& n = t.node(self);
        if (Tensor* ga = target(t, n.parent0))
            ew_acc(*ga, n.grad, t.node(n.parent0).value, [](double x) {
                const double s = 1.0 / (1.0 + std::exp(-x));
                return s * (1.0 + x * (1.0 - s));
            });
    });
    return Var(t, id);
}

Var sigmoid(const Var& a) {
    Var ones = a.tape()->constant(Tensor::full(a.value().shape(), 1.0));
    return div(ones, sadd(exp(neg(a)), 1.0));
}

}  // namespace ncf
