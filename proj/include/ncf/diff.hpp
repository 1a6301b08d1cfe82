#pragma once

#include <tuple>
#include <utility>
#include <vector>

#include "ncf/dual.hpp"
#include "ncf/tape.hpp"

namespace ncf {

struct GradResult {
    Tensor value;                 // scalar output
    std::vector<Tensor> grads;    // one per input, matching shapes
};

// Reverse mode: f maps a vector of Vars to a scalar Var.
template <class F>
GradResult value_and_grad(F&& f, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(inputs.size());
    for (const Tensor& x : inputs) vars.push_back(tape.leaf(x));
    Var out = f(vars);
    if (out.value().size() != 1)
        throw ValidationError("grad: function output must be scalar, got shape " +
                              shape_str(out.value().shape()));
    GradResult res;
    res.value = out.value();
    tape.backward_from(out.id());
    res.grads.reserve(vars.size());
    for (const Var& v : vars) res.grads.push_back(v.grad());
    return res;
}

template <class F>
std::vector<Tensor> grad(F&& f, const std::vector<Tensor>& inputs) {
    return value_and_grad(std::forward<F>(f), inputs).grads;
}

// Forward mode: f maps Dual<Tensor> to Dual<Tensor>. Returns (f(at), Jf(at)·tangent)
// without materializing the Jacobian.
template <class F>
std::pair<Tensor, Tensor> jvp(F&& f, const Tensor& at, const Tensor& tangent) {
    if (at.shape() != tangent.shape())
        throw ValidationError("jvp: tangent shape " + shape_str(tangent.shape()) +
                              " does not match input shape " + shape_str(at.shape()));
    Dual<Tensor> out = f(Dual<Tensor>(at, tangent));
    Tensor t = out.tangent ? *out.tangent : Tensor::zeros(out.primal.shape());
    return {out.primal, t};
}

// Second forward level: f must be generic in its carrier so it can run on
// Dual<Dual<Tensor>>. Returns (f(at), Jf(at)·t1, d/de[Jf(at + e·t2)·t1]|_0).
template <class F>
std::tuple<Tensor, Tensor, Tensor> jvp_nested(F&& f, const Tensor& at, const Tensor& t1,
                                              const Tensor& t2) {
    if (at.shape() != t1.shape() || at.shape() != t2.shape())
        throw ValidationError("jvp_nested: tangent shapes must match the input shape");
    using D = Dual<Tensor>;
    Dual<D> x(D(at, t1), D(t2));
    Dual<D> out = f(x);
    const Tensor& val = out.primal.primal;
    Tensor jt1 = out.primal.tangent ? *out.primal.tangent : Tensor::zeros(val.shape());
    Tensor mixed = (out.tangent && out.tangent->tangent) ? *out.tangent->tangent
                                                         : Tensor::zeros(val.shape());
    return {val, jt1, mixed};
}

}  // namespace ncf
