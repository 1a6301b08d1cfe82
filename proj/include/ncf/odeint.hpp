#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ncf/dual.hpp"
#include "ncf/tensor.hpp"

namespace ncf {

enum class Method { euler, rk4, dopri5 };

Method method_from_name(const std::string& name);
std::string method_name(Method m);

struct IntegratorSpec {
    Method method = Method::rk4;
    double dt = 0.0;        // fixed-step methods
    double rtol = 1e-3;     // dopri5
    double atol = 1e-6;     // dopri5
    int max_steps = 100000;

    static IntegratorSpec euler(double dt, int max_steps = 100000) {
        return {Method::euler, dt, 0.0, 0.0, max_steps};
    }
    static IntegratorSpec rk4(double dt, int max_steps = 100000) {
        return {Method::rk4, dt, 0.0, 0.0, max_steps};
    }
    static IntegratorSpec dopri5(double rtol = 1e-3, double atol = 1e-6, int max_steps = 100000) {
        return {Method::dopri5, 0.0, rtol, atol, max_steps};
    }

    void validate(std::size_t n_eval) const {
        if (method != Method::dopri5 && !(dt > 0.0)) throw ValidationError("integrator: dt must be > 0");
        if (method == Method::dopri5 && (!(rtol > 0.0) || !(atol > 0.0)))
            throw ValidationError("integrator: rtol and atol must be > 0");
        if (max_steps < static_cast<int>(n_eval)) throw ValidationError("integrator: max_steps below output count");
    }
};

namespace detail {

inline void check_grid(std::span<const double> t_eval) {
    if (t_eval.empty()) throw ValidationError("integrate: empty time grid");
    for (std::size_t i = 1; i < t_eval.size(); ++i)
        if (!(t_eval[i] > t_eval[i - 1])) throw ValidationError("integrate: time grid must be strictly increasing");
}

template <class T, class Field>
T rk4_step(Field&& field, const T& x, double h) {
    T k1 = field(x);
    T k2 = field(add(x, smul(k1, 0.5 * h)));
    T k3 = field(add(x, smul(k2, 0.5 * h)));
    T k4 = field(add(x, smul(k3, h)));
    T incr = add(add(k1, k4), smul(add(k2, k3), 2.0));
    return add(x, smul(incr, h / 6.0));
}

template <class T, class Field>
T euler_step(Field&& field, const T& x, double h) {
    return add(x, smul(field(x), h));
}

// Error norm for step control: RMS of componentwise errors scaled by
// atol + rtol*max(|y0|,|y1|). Reads primal values only.
inline double error_norm(const Tensor& err, const Tensor& y0, const Tensor& y1, double rtol, double atol) {
    double acc = 0.0;
    const std::size_t n = err.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double scale = atol + rtol * std::max(std::fabs(y0[i]), std::fabs(y1[i]));
        const double r = err[i] / scale;
        acc += r * r;
    }
    return std::sqrt(acc / static_cast<double>(n));
}

}  // namespace detail

// Integrates dx/dt = field(x) over a strictly increasing time grid. Row 0 of
// the result is x0 exactly. The carrier T may be Tensor, Var, or Dual<...>,
// so gradients flow through the unrolled step sequence. Step-size decisions
// in dopri5 are made from primal values and are treated as constants of the
// forward pass.
template <class T, class Field>
std::vector<T> integrate(Field&& field, const T& x0, std::span<const double> t_eval,
                         const IntegratorSpec& spec) {
    detail::check_grid(t_eval);
    spec.validate(t_eval.size());

    std::vector<T> out;
    out.reserve(t_eval.size());
    out.push_back(x0);

    if (spec.method == Method::euler || spec.method == Method::rk4) {
        T x = x0;
        long long steps = 0;
        for (std::size_t n = 1; n < t_eval.size(); ++n) {
            double t = t_eval[n - 1];
            const double t_end = t_eval[n];
            // Whole steps of dt, then one partial step to land on t_end.
            while (t < t_end - 1e-12 * std::max(1.0, std::fabs(t_end))) {
                const double h = std::min(spec.dt, t_end - t);
                x = spec.method == Method::rk4 ? detail::rk4_step(field, x, h) : detail::euler_step(field, x, h);
                t += h;
                if (++steps > spec.max_steps)
                    throw NumericError("integrate: step cap exceeded at t=" + std::to_string(t));
                if (!primal_of(x).all_finite())
                    throw NumericError("integrate: non-finite state at t=" + std::to_string(t));
            }
            out.push_back(x);
        }
        return out;
    }

    // Dormand-Prince 5(4), 7 stages with FSAL, cubic Hermite dense output,
    // PI step control (safety 0.9, growth clamp [0.2, 10]).
    static constexpr double a21 = 1.0 / 5;
    static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                            a54 = -212.0 / 729;
    static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                            a64 = 49.0 / 176, a65 = -5103.0 / 18656;
    static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                            b6 = 11.0 / 84;
    // Difference between the 5th and embedded 4th order weights.
    static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                            e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

    const double t0 = t_eval.front();
    const double t_final = t_eval.back();

    T x = x0;
    T f = field(x);
    double t = t0;

    // Starting step: conservative variant of the classic heuristic.
    double h;
    {
        const Tensor& xv = primal_of(x);
        const Tensor& fv = primal_of(f);
        double d0 = 0.0, d1 = 0.0;
        for (std::size_t i = 0; i < xv.size(); ++i) {
            const double sc = spec.atol + spec.rtol * std::fabs(xv[i]);
            d0 += (xv[i] / sc) * (xv[i] / sc);
            d1 += (fv[i] / sc) * (fv[i] / sc);
        }
        d0 = std::sqrt(d0 / xv.size());
        d1 = std::sqrt(d1 / xv.size());
        h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
        h = std::min(h, (t_final - t0) / 10.0);
    }

    std::size_t next_out = 1;
    double err_prev = 1.0;
    long long steps = 0;

    while (next_out < t_eval.size()) {
        if (++steps > spec.max_steps)
            throw NumericError("integrate: dopri5 step cap exceeded, last accepted t=" + std::to_string(t));
        h = std::min(h, t_final - t);

        bool rejected_by_exception = false;
        double err = 0.0;
        T x_new, f_new;
        try {
            T k2 = field(add(x, smul(f, a21 * h)));
            T k3 = field(add(x, add(smul(f, a31 * h), smul(k2, a32 * h))));
            T k4 = field(add(x, add(smul(f, a41 * h), add(smul(k2, a42 * h), smul(k3, a43 * h)))));
            T k5 = field(add(
                x, add(smul(f, a51 * h), add(smul(k2, a52 * h), add(smul(k3, a53 * h), smul(k4, a54 * h))))));
            T k6 = field(
                add(x, add(smul(f, a61 * h),
                           add(smul(k2, a62 * h),
                               add(smul(k3, a63 * h), add(smul(k4, a64 * h), smul(k5, a65 * h)))))));
            T incr = add(smul(f, b1), add(smul(k3, b3), add(smul(k4, b4), add(smul(k5, b5), smul(k6, b6)))));
            x_new = add(x, smul(incr, h));
            f_new = field(x_new);  // FSAL stage, also the error stage k7

            Tensor err_vec = add(
                smul(primal_of(f), e1 * h),
                add(smul(primal_of(k3), e3 * h),
                    add(smul(primal_of(k4), e4 * h),
                        add(smul(primal_of(k5), e5 * h),
                            add(smul(primal_of(k6), e6 * h), smul(primal_of(f_new), e7 * h))))));
            err = detail::error_norm(err_vec, primal_of(x), primal_of(x_new), spec.rtol, spec.atol);
            if (!std::isfinite(err) || !primal_of(x_new).all_finite()) rejected_by_exception = true;
        } catch (const NumericError&) {
            // A wild trial step can overflow inside the field; shrink and retry.
            rejected_by_exception = true;
        }

        if (rejected_by_exception) {
            h *= 0.2;
            if (!(h > 0.0) || !std::isfinite(h)) throw NumericError("integrate: dopri5 step size underflow");
            continue;
        }

        if (err <= 1.0) {
            const double t_new = t + h;
            // Emit requested outputs inside the accepted interval via cubic
            // Hermite interpolation on (x, f) and (x_new, f_new).
            while (next_out < t_eval.size() && t_eval[next_out] <= t_new + 1e-12 * std::max(1.0, std::fabs(t_new))) {
                const double s = (t_eval[next_out] - t) / h;
                const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
                const double h10 = s * (1 - s) * (1 - s);
                const double h01 = s * s * (3 - 2 * s);
                const double h11 = s * s * (s - 1);
                T y = add(add(smul(x, h00), smul(f, h10 * h)), add(smul(x_new, h01), smul(f_new, h11 * h)));
                out.push_back(std::move(y));
                ++next_out;
            }
            x = std::move(x_new);
            f = std::move(f_new);
            t = t_new;
            const double e_clamped = std::max(err, 1e-10);
            double factor = 0.9 * std::pow(e_clamped, -0.7 / 5.0) * std::pow(err_prev, 0.4 / 5.0);
            h *= std::clamp(factor, 0.2, 10.0);
            err_prev = e_clamped;
        } else {
            h *= std::clamp(0.9 * std::pow(err, -0.2), 0.2, 1.0);
        }
    }
    return out;
}

// Empirical convergence order by Richardson refinement on a problem with a
// known solution: log2 of the error ratio when dt is halved.
struct OrderCheck {
    std::vector<double> errors;  // per refinement level
    std::vector<double> orders;  // log2(err[i]/err[i+1])
};

template <class Field, class Exact>
OrderCheck order_check(Method method, Field&& field, const Tensor& x0, double t_end, const Exact& exact,
                       double dt0, int levels) {
    if (method == Method::dopri5) throw ValidationError("order_check: needs a fixed-step method");
    OrderCheck res;
    for (int l = 0; l < levels; ++l) {
        const double dt = dt0 / std::pow(2.0, l);
        IntegratorSpec spec = method == Method::euler ? IntegratorSpec::euler(dt) : IntegratorSpec::rk4(dt);
        spec.max_steps = 1 << 28;
        const std::vector<double> grid{0.0, t_end};
        auto traj = integrate(field, x0, grid, spec);
        Tensor diff = sub(traj.back(), exact);
        res.errors.push_back(diff.max_abs());
    }
    for (std::size_t i = 0; i + 1 < res.errors.size(); ++i)
        res.orders.push_back(std::log2(res.errors[i] / res.errors[i + 1]));
    return res;
}

}  // namespace ncf
