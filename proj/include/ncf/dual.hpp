#pragma once

#include <optional>
#include <type_traits>
#include <utility>

#include "ncf/tape.hpp"
#include "ncf/tensor.hpp"

namespace ncf {

// Forward-mode value: primal plus optional tangent. An absent tangent is a
// structural zero, so constant subtrees cost nothing extra. The carrier T is
// Tensor (pure evaluation), Var (reverse-over-forward), or another Dual
// (second-order forward). All tangent rules are expressed through the
// primitive ops of T, which is what makes the nesting compose.
template <class T>
struct Dual;

template <class T>
struct dual_depth : std::integral_constant<int, 0> {};
template <class T>
struct dual_depth<Dual<T>> : std::integral_constant<int, dual_depth<T>::value + 1> {};

template <class T>
struct Dual {
    static_assert(dual_depth<T>::value < 2, "forward-mode nesting is capped at two levels");

    T primal;
    std::optional<T> tangent;

    Dual() = default;
    explicit Dual(T p) : primal(std::move(p)) {}
    Dual(T p, T t) : primal(std::move(p)), tangent(std::move(t)) {}

    bool has_tangent() const { return tangent.has_value(); }
};

// ---- carrier utilities ----

inline const Tensor& primal_of(const Tensor& x) { return x; }
inline const Tensor& primal_of(const Var& x) { return x.value(); }
template <class T>
const Tensor& primal_of(const Dual<T>& x) {
    return primal_of(x.primal);
}

// Builds a constant (non-differentiated) carrier shaped like `v`, attached to
// the same tape as `like` when the carrier is tape-backed.
inline Tensor const_of(const Tensor& /*like*/, Tensor v) { return v; }
inline Var const_of(const Var& like, Tensor v) { return like.tape()->constant(std::move(v)); }
template <class T>
Dual<T> const_of(const Dual<T>& like, Tensor v) {
    return Dual<T>(const_of(like.primal, std::move(v)));
}

template <class T>
T zeros_of(const T& like) {
    return const_of(like, Tensor::zeros(primal_of(like).shape()));
}

// ---- tangent rules ----

template <class T>
Dual<T> add(const Dual<T>& a, const Dual<T>& b) {
    Dual<T> out(add(a.primal, b.primal));
    if (a.tangent && b.tangent)
        out.tangent = add(*a.tangent, *b.tangent);
    else if (a.tangent)
        out.tangent = *a.tangent;
    else if (b.tangent)
        out.tangent = *b.tangent;
    return out;
}

template <class T>
Dual<T> sub(const Dual<T>& a, const Dual<T>& b) {
    Dual<T> out(sub(a.primal, b.primal));
    if (a.tangent && b.tangent)
        out.tangent = sub(*a.tangent, *b.tangent);
    else if (a.tangent)
        out.tangent = *a.tangent;
    else if (b.tangent)
        out.tangent = neg(*b.tangent);
    return out;
}

template <class T>
Dual<T> mul(const Dual<T>& a, const Dual<T>& b) {
    Dual<T> out(mul(a.primal, b.primal));
    if (a.tangent && b.tangent)
        out.tangent = add(mul(*a.tangent, b.primal), mul(a.primal, *b.tangent));
    else if (a.tangent)
        out.tangent = mul(*a.tangent, b.primal);
    else if (b.tangent)
        out.tangent = mul(a.primal, *b.tangent);
    return out;
}

template <class T>
Dual<T> div(const Dual<T>& a, const Dual<T>& b) {
    Dual<T> out(div(a.primal, b.primal));
    if (a.tangent && b.tangent)
        out.tangent = div(sub(*a.tangent, mul(out.primal, *b.tangent)), b.primal);
    else if (a.tangent)
        out.tangent = div(*a.tangent, b.primal);
    else if (b.tangent)
        out.tangent = neg(div(mul(out.primal, *b.tangent), b.primal));
    return out;
}

template <class T>
Dual<T> neg(const Dual<T>& a) {
    Dual<T> out(neg(a.primal));
    if (a.tangent) out.tangent = neg(*a.tangent);
    return out;
}

template <class T>
Dual<T> smul(const Dual<T>& a, double c) {
    Dual<T> out(smul(a.primal, c));
    if (a.tangent) out.tangent = smul(*a.tangent, c);
    return out;
}

template <class T>
Dual<T> sadd(const Dual<T>& a, double c) {
    Dual<T> out(sadd(a.primal, c));
    if (a.tangent) out.tangent = *a.tangent;
    return out;
}

template <class T>
Dual<T> matmul(const Dual<T>& a, const Dual<T>& b) {
    Dual<T> out(matmul(a.primal, b.primal));
    if (a.tangent && b.tangent)
        out.tangent = add(matmul(*a.tangent, b.primal), matmul(a.primal, *b.tangent));
    else if (a.tangent)
        out.tangent = matmul(*a.tangent, b.primal);
    else if (b.tangent)
        out.tangent = matmul(a.primal, *b.tangent);
    return out;
}

template <class T>
Dual<T> add_rowvec(const Dual<T>& x, const Dual<T>& v) {
    Dual<T> out(add_rowvec(x.primal, v.primal));
    if (x.tangent && v.tangent)
        out.tangent = add_rowvec(*x.tangent, *v.tangent);
    else if (x.tangent)
        out.tangent = *x.tangent;
    else if (v.tangent)
        out.tangent = add_rowvec(zeros_of(x.primal), *v.tangent);
    return out;
}

template <class T>
Dual<T> concat_cols(const Dual<T>& a, const Dual<T>& b) {
    Dual<T> out(concat_cols(a.primal, b.primal));
    if (a.tangent || b.tangent) {
        T ta = a.tangent ? *a.tangent : zeros_of(a.primal);
        T tb = b.tangent ? *b.tangent : zeros_of(b.primal);
        out.tangent = concat_cols(ta, tb);
    }
    return out;
}

template <class T>
Dual<T> gather_rows(const Dual<T>& x, const std::vector<std::size_t>& idx) {
    Dual<T> out(gather_rows(x.primal, idx));
    if (x.tangent) out.tangent = gather_rows(*x.tangent, idx);
    return out;
}

template <class T>
Dual<T> slice_cols(const Dual<T>& x, std::size_t lo, std::size_t hi) {
    Dual<T> out(slice_cols(x.primal, lo, hi));
    if (x.tangent) out.tangent = slice_cols(*x.tangent, lo, hi);
    return out;
}

template <class T>
Dual<T> reshape(const Dual<T>& x, const Shape& shape) {
    Dual<T> out(reshape(x.primal, shape));
    if (x.tangent) out.tangent = reshape(*x.tangent, shape);
    return out;
}

template <class T>
Dual<T> sum(const Dual<T>& a) {
    Dual<T> out(sum(a.primal));
    if (a.tangent) out.tangent = sum(*a.tangent);
    return out;
}

template <class T>
Dual<T> mean(const Dual<T>& a) {
    Dual<T> out(mean(a.primal));
    if (a.tangent) out.tangent = mean(*a.tangent);
    return out;
}

template <class T>
Dual<T> abs(const Dual<T>& a) {
    Dual<T> out(abs(a.primal));
    // d|x| = sign(x) dx; the sign factor is detached (piecewise constant).
    if (a.tangent) out.tangent = mul(const_of(a.primal, sign(primal_of(a.primal))), *a.tangent);
    return out;
}

template <class T>
Dual<T> square(const Dual<T>& a) {
    Dual<T> out(square(a.primal));
    if (a.tangent) out.tangent = smul(mul(a.primal, *a.tangent), 2.0);
    return out;
}

template <class T>
Dual<T> sin(const Dual<T>& a) {
    Dual<T> out(sin(a.primal));
    if (a.tangent) out.tangent = mul(cos(a.primal), *a.tangent);
    return out;
}

template <class T>
Dual<T> cos(const Dual<T>& a) {
    Dual<T> out(cos(a.primal));
    if (a.tangent) out.tangent = neg(mul(sin(a.primal), *a.tangent));
    return out;
}

template <class T>
Dual<T> exp(const Dual<T>& a) {
    Dual<T> out(exp(a.primal));
    if (a.tangent) out.tangent = mul(out.primal, *a.tangent);
    return out;
}

template <class T>
Dual<T> tanh(const Dual<T>& a) {
    Dual<T> out(tanh(a.primal));
    if (a.tangent) out.tangent = mul(sadd(neg(square(out.primal)), 1.0), *a.tangent);
    return out;
}

template <class T>
Dual<T> sigmoid(const Dual<T>& a) {
    T s = sigmoid(a.primal);
    Dual<T> out(s);
    if (a.tangent) out.tangent = mul(mul(s, sadd(neg(s), 1.0)), *a.tangent);
    return out;
}

template <class T>
Dual<T> swish(const Dual<T>& a) {
    T s = sigmoid(a.primal);
    Dual<T> out(mul(a.primal, s));
    if (a.tangent) {
        // swish'(x) = s(x) * (1 + x * (1 - s(x)))
        T deriv = mul(s, sadd(mul(a.primal, sadd(neg(s), 1.0)), 1.0));
        out.tangent = mul(deriv, *a.tangent);
    }
    return out;
}

template <class T>
Dual<T> operator+(const Dual<T>& a, const Dual<T>& b) {
    return add(a, b);
}
template <class T>
Dual<T> operator-(const Dual<T>& a, const Dual<T>& b) {
    return sub(a, b);
}
template <class T>
Dual<T> operator*(const Dual<T>& a, const Dual<T>& b) {
    return mul(a, b);
}
template <class T>
Dual<T> operator-(const Dual<T>& a) {
    return neg(a);
}

}  // namespace ncf
