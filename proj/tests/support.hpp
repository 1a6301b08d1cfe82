#pragma once

// Shared test utilities: finite-difference oracles and random tensors. The
// oracles are deliberately independent of the tape/dual machinery they check.

#include <cmath>
#include <functional>
#include <vector>

#include "ncf/rng.hpp"
#include "ncf/tensor.hpp"

namespace ncf::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// max |a-b| relative to the largest reference entry
inline double rel_err(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) return 1e300;
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::fabs(a[i] - b[i]));
        den = std::max(den, std::fabs(b[i]));
    }
    return num / (den + 1e-12);
}

// Central finite differences of a scalar function, one input vector at a time.
inline std::vector<Tensor> fd_grad(const std::function<double(const std::vector<Tensor>&)>& f,
                                   std::vector<Tensor> at, double h = 1e-6) {
    std::vector<Tensor> grads;
    for (std::size_t k = 0; k < at.size(); ++k) {
        Tensor g(at[k].shape());
        for (std::size_t i = 0; i < at[k].size(); ++i) {
            const double orig = at[k][i];
            at[k][i] = orig + h;
            const double fp = f(at);
            at[k][i] = orig - h;
            const double fm = f(at);
            at[k][i] = orig;
            g[i] = (fp - fm) / (2.0 * h);
        }
        grads.push_back(std::move(g));
    }
    return grads;
}

// Central finite-difference directional derivative of a tensor-valued map.
inline Tensor fd_jvp(const std::function<Tensor(const Tensor&)>& f, const Tensor& at,
                     const Tensor& tangent, double h = 1e-6) {
    Tensor xp = at, xm = at;
    for (std::size_t i = 0; i < at.size(); ++i) {
        xp[i] += h * tangent[i];
        xm[i] -= h * tangent[i];
    }
    return smul(sub(f(xp), f(xm)), 1.0 / (2.0 * h));
}

}  // namespace ncf::testing
