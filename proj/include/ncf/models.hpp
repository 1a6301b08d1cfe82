#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncf/dual.hpp"
#include "ncf/tape.hpp"
#include "ncf/tensor.hpp"

namespace ncf {

enum class Activation { swish, tanh, identity };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

template <class T>
T apply_activation(const T& x, Activation a) {
    switch (a) {
        case Activation::swish: return swish(x);
        case Activation::tanh: return tanh(x);
        case Activation::identity: return x;
    }
    throw ValidationError("unknown activation");
}

// Fully connected stack. weights[l] is [in,out] row-major, biases[l] is [out].
// When activate_last is set the output layer is activated too (used by the
// state/context encoders so they interact nonlinearly inside the main net).
template <class T>
struct Mlp {
    std::vector<T> weights;
    std::vector<T> biases;
    Activation act = Activation::swish;
    bool activate_last = false;

    std::size_t in_dim() const { return primal_of(weights.front()).shape()[0]; }
    std::size_t out_dim() const { return primal_of(weights.back()).shape()[1]; }
};

using MlpParams = Mlp<Tensor>;

template <class T>
T mlp_apply(const Mlp<T>& m, const T& x) {
    T h = x;
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        h = add_rowvec(matmul(h, m.weights[l]), m.biases[l]);
        if (l + 1 < m.weights.size() || m.activate_last) h = apply_activation(h, m.act);
    }
    return h;
}

// Contextual vector field: state and context are encoded separately, then the
// concatenation drives the main net. Works on single samples ([d], [d_xi])
// and on row batches ([B,d], [B,d_xi]) alike.
template <class T>
struct ThreeNet {
    Mlp<T> state_net;    // R^d -> R^h_state
    Mlp<T> context_net;  // R^d_xi -> R^h_ctx
    Mlp<T> main_net;     // R^(h_state+h_ctx) -> R^d
    std::size_t d = 0;
    std::size_t d_xi = 0;
};

using ThreeNetParams = ThreeNet<Tensor>;

// Context-free baseline: the state encoder chained into the (widened) main net.
template <class T>
struct BaselineNet {
    Mlp<T> state_net;
    Mlp<T> main_net;
    std::size_t d = 0;
};

using BaselineParams = BaselineNet<Tensor>;

template <class T>
T vf_eval(const ThreeNet<T>& net, const T& x, const T& xi) {
    T hx = mlp_apply(net.state_net, x);
    T hc = mlp_apply(net.context_net, xi);
    return mlp_apply(net.main_net, concat_cols(hx, hc));
}

template <class T>
T vf_eval(const BaselineNet<T>& net, const T& x) {
    return mlp_apply(net.main_net, mlp_apply(net.state_net, x));
}

// ---- parameter traversal (canonical order: state, context, main; per layer
// weight then bias). Checkpoints, Adam state and flattening all follow it. ----

template <class T, class F>
void for_each_param(Mlp<T>& m, F&& f) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        f(m.weights[l]);
        f(m.biases[l]);
    }
}

template <class T, class F>
void for_each_param(const Mlp<T>& m, F&& f) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
        f(m.weights[l]);
        f(m.biases[l]);
    }
}

template <class T, class F>
void for_each_param(ThreeNet<T>& net, F&& f) {
    for_each_param(net.state_net, f);
    for_each_param(net.context_net, f);
    for_each_param(net.main_net, f);
}

template <class T, class F>
void for_each_param(const ThreeNet<T>& net, F&& f) {
    for_each_param(net.state_net, f);
    for_each_param(net.context_net, f);
    for_each_param(net.main_net, f);
}

template <class T, class F>
void for_each_param(BaselineNet<T>& net, F&& f) {
    for_each_param(net.state_net, f);
    for_each_param(net.main_net, f);
}

template <class T, class F>
void for_each_param(const BaselineNet<T>& net, F&& f) {
    for_each_param(net.state_net, f);
    for_each_param(net.main_net, f);
}

template <class Net>
std::size_t param_count(const Net& net) {
    std::size_t n = 0;
    for_each_param(net, [&](const Tensor& t) { n += t.size(); });
    return n;
}

// ---- carrier lifting ----

template <class T>
Mlp<Dual<T>> lift_dual(const Mlp<T>& m) {
    Mlp<Dual<T>> out;
    out.act = m.act;
    out.activate_last = m.activate_last;
    out.weights.reserve(m.weights.size());
    out.biases.reserve(m.biases.size());
    for (const T& w : m.weights) out.weights.emplace_back(w);
    for (const T& b : m.biases) out.biases.emplace_back(b);
    return out;
}

template <class T>
ThreeNet<Dual<T>> lift_dual(const ThreeNet<T>& net) {
    return {lift_dual(net.state_net), lift_dual(net.context_net), lift_dual(net.main_net), net.d, net.d_xi};
}

Mlp<Var> lift_to_tape(Tape& tape, const MlpParams& m, bool requires_grad = true);
ThreeNet<Var> lift_to_tape(Tape& tape, const ThreeNetParams& net, bool requires_grad = true);
BaselineNet<Var> lift_to_tape(Tape& tape, const BaselineParams& net, bool requires_grad = true);

// ---- Taylor-expanded evaluation ----

// Pieces of the second-order expansion around xi_j, obtained from one nested
// forward-mode pass: f = f(xi_j), g = grad f(xi_j)(xi_e - xi_j), and
// dg = grad g(xi_j)(xi_e - xi_j), where g(s) = grad f(s)(xi_e - s). Neither
// the Jacobian nor the Hessian is materialized. The callable must be generic
// in its carrier (it runs on Dual<Dual<T>>), lifting captured constants with
// const_of.
template <class T>
struct TaylorPieces {
    T f, g, dg;
};

template <class T, class F>
TaylorPieces<T> taylor_pieces_fn(F&& f, const T& xi_e, const T& xi_j) {
    using D = Dual<T>;
    using DD = Dual<D>;
    T v = sub(xi_e, xi_j);
    // Inner tangent is (xi_e - s), which itself moves as s sweeps along v.
    DD out = f(DD{D(xi_j, v), D(v, neg(v))});
    TaylorPieces<T> pieces;
    pieces.f = out.primal.primal;
    pieces.g = out.primal.tangent ? *out.primal.tangent : zeros_of(pieces.f);
    pieces.dg = (out.tangent && out.tangent->tangent) ? *out.tangent->tangent : zeros_of(pieces.f);
    return pieces;
}

// Truncated expansion of an arbitrary context-to-output map. Order 0 is
// f(xi_e); order 1 adds one JVP around xi_j; order 2 is f + 3/2 g + 1/2 dg.
template <class T, class F>
T taylor_eval_fn(F&& f, const T& xi_e, const T& xi_j, int order) {
    if (order == 0) return f(xi_e);
    if (order == 1) {
        using D = Dual<T>;
        D out = f(D(xi_j, sub(xi_e, xi_j)));
        if (!out.tangent) return out.primal;
        return add(out.primal, *out.tangent);
    }
    if (order == 2) {
        TaylorPieces<T> pieces = taylor_pieces_fn(std::forward<F>(f), xi_e, xi_j);
        return add(pieces.f, add(smul(pieces.g, 1.5), smul(pieces.dg, 0.5)));
    }
    throw ValidationError("taylor order must be 0, 1, or 2, got " + std::to_string(order));
}

template <class T>
TaylorPieces<T> taylor_pieces(const ThreeNet<T>& net, const T& x, const T& xi_e, const T& xi_j) {
    using D = Dual<T>;
    using DD = Dual<D>;
    ThreeNet<DD> ddnet = lift_dual(lift_dual(net));
    DD ddx{D(x)};
    return taylor_pieces_fn([&](const DD& xi) { return vf_eval(ddnet, ddx, xi); }, xi_e, xi_j);
}

template <class T>
T taylor_eval(const ThreeNet<T>& net, const T& x, const T& xi_e, const T& xi_j, int order) {
    if (order == 0) return vf_eval(net, x, xi_e);
    if (order == 1) {
        using D = Dual<T>;
        ThreeNet<D> dnet = lift_dual(net);
        D dx(x);
        D dxi(xi_j, sub(xi_e, xi_j));
        D out = vf_eval(dnet, dx, dxi);
        if (!out.tangent) return out.primal;
        return add(out.primal, *out.tangent);
    }
    if (order == 2) {
        TaylorPieces<T> pieces = taylor_pieces(net, x, xi_e, xi_j);
        return add(pieces.f, add(smul(pieces.g, 1.5), smul(pieces.dg, 0.5)));
    }
    throw ValidationError("taylor order must be 0, 1, or 2, got " + std::to_string(order));
}

// ---- construction and persistence ----

struct ThreeNetConfig {
    std::size_t d = 0;
    std::size_t d_xi = 0;
    std::vector<std::size_t> state_widths;    // hidden sizes; last entry is h_state
    std::vector<std::size_t> context_widths;  // hidden sizes; last entry is h_ctx
    std::vector<std::size_t> main_widths;     // hidden sizes (output d is implied)
    Activation act = Activation::swish;
};

ThreeNetParams init_three_net(const ThreeNetConfig& cfg, std::uint64_t seed);
BaselineParams init_baseline(std::size_t d, const std::vector<std::size_t>& widths, std::uint64_t seed,
                             Activation act = Activation::swish);

// Checkpoint: directory with manifest.json plus weights.bin (and contexts.bin
// when a context set is provided). Blob is the flat little-endian float64
// parameter vector in canonical traversal order.
void save_checkpoint(const std::string& dir, const ThreeNetParams& net, const Tensor* contexts);
ThreeNetParams load_checkpoint(const std::string& dir, Tensor* contexts_out = nullptr);

std::vector<double> flatten_params(const ThreeNetParams& net);
std::uint64_t params_hash(const ThreeNetParams& net);

}  // namespace ncf
