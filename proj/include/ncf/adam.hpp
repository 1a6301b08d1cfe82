#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ncf/tensor.hpp"

namespace ncf {

// Bias-corrected Adam over a fixed list of parameter tensors. Moment buffers
// are allocated on the first step and persist for the optimizer's lifetime.
class Adam {
  public:
    Adam(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<Tensor*>& params, const std::vector<Tensor>& grads, double lr) {
        if (params.size() != grads.size()) throw ValidationError("adam: param/grad count mismatch");
        if (m_.empty()) {
            for (const Tensor& g : grads) {
                m_.push_back(Tensor::zeros(g.shape()));
                v_.push_back(Tensor::zeros(g.shape()));
            }
        }
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (std::size_t k = 0; k < params.size(); ++k) {
            Tensor& p = *params[k];
            const Tensor& g = grads[k];
            if (!p.same_shape(g) || !p.same_shape(m_[k])) throw ValidationError("adam: shape mismatch");
            double* pm = m_[k].data();
            double* pv = v_[k].data();
            double* pp = p.data();
            const double* pg = g.data();
            for (std::size_t i = 0; i < p.size(); ++i) {
                pm[i] = beta1_ * pm[i] + (1.0 - beta1_) * pg[i];
                pv[i] = beta2_ * pv[i] + (1.0 - beta2_) * pg[i] * pg[i];
                const double mhat = pm[i] / c1;
                const double vhat = pv[i] / c2;
                pp[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    std::int64_t steps_taken() const { return t_; }

  private:
    double beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace ncf
