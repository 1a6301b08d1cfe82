#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncf/dataset.hpp"
#include "ncf/models.hpp"
#include "ncf/odeint.hpp"

namespace ncf {

// ---- few-shot adaptation (network weights frozen throughout) ----

struct AdaptConfig {
    double lr = 1e-3;
    int iterations = 1500;
    double rel_tol = 1e-6;
    double lambda1 = 1e-3;
    double lambda2 = 0.0;
    IntegratorSpec solver = IntegratorSpec::rk4(0.1);
};

struct AdaptReport {
    Tensor contexts;  // [n_envs, d_xi], one adapted context per environment
    std::vector<std::vector<double>> loss_curves;
    std::vector<std::string> env_errors;  // empty string when the env succeeded
    double wall_seconds = 0.0;
};

// Per environment independently: context starts at zero and minimizes the
// plain per-environment loss (no cross-environment expansion, so the Taylor
// order is irrelevant by the collapse identity).
AdaptReport adapt_sequential(const ThreeNetParams& net, const Split& adapt_split, const AdaptConfig& cfg);

// All contexts updated jointly; pool pinned to the environment itself and the
// expansion disabled. The objective is the sum of the per-environment losses,
// which keeps it separable: with matched seeds and a fixed-step solver the
// iterates coincide with sequential adaptation exactly.
AdaptReport adapt_bulk(const ThreeNetParams& net, const Split& adapt_split, const AdaptConfig& cfg);

// ---- forecast metrics (predictions use the plain field, j = e) ----

struct EnvMetrics {
    double mse = 0.0;
    double mape = 0.0;       // percent; NaN when undefined
    bool mape_defined = true;
};

// MAPE denominators with |x| <= 1e-3 are filtered out; a series with every
// denominator filtered reports MAPE undefined.
std::vector<EnvMetrics> metrics(const ThreeNetParams& net, const Tensor& contexts, const Split& split,
                                const IntegratorSpec& solver);

// Same metrics for one forecast series against its truth ([n, d] each).
EnvMetrics series_metrics(const Tensor& truth, const Tensor& pred);

// ---- uncertainty from candidate-trajectory spread ----

struct UqSummary {
    double rel_mse = 0.0;  // percent
    double mape = 0.0;     // percent
    double cl = 0.0;       // percent of scalar points inside mu +- 3 sigma
    bool rel_mse_defined = true;
    bool mape_defined = true;
    Tensor mu;     // [n_envs, n_trajs, n_steps, d]
    Tensor sigma;  // same shape; population std over candidates (divisor p)
};

// Candidate x_hat^{e,j} expands env e's forecast around expansion context j.
// target_contexts has one row per environment of the split; expansion_contexts
// is the whole expansion set (p >= 2 rows).
UqSummary uq_metrics(const ThreeNetParams& net, const Tensor& target_contexts,
                     const Tensor& expansion_contexts, const Split& split, int taylor_order,
                     const IntegratorSpec& solver);

// Statistics of one candidate set: candidates arranged [p, n, d], truth [n, d].
struct UqSeries {
    Tensor mu, sigma;  // [n, d]
};
UqSeries uq_series(const Tensor& candidates);

// Degenerate-interval convention: sigma == 0 counts as covered iff
// |x - mu| <= 1e-12.
bool ci_covers(double truth, double mu, double sigma);

// ---- affine-system identification ----

struct IdentifyResult {
    Tensor Q;  // [d_c, d_xi]
    Tensor q;  // [d_c]
    double train_mse = 0.0;    // mean squared residual over (env, dim)
    double heldout_mse = 0.0;  // NaN when no held-out set was given
    Tensor heldout_pred;       // [m_heldout, d_c]
};

// Ordinary least squares for c ~ Q xi + q via normal equations with a 1e-10
// ridge jitter on the Gram matrix (contexts may outnumber their span).
IdentifyResult identify_linear(const Tensor& contexts, const Tensor& observed,
                               const Tensor* heldout_contexts = nullptr,
                               const Tensor* heldout_observed = nullptr);

// Max second-order action norm max |grad g (xi_e - xi_j)|_2 over sampled
// context pairs from the convex hull of `contexts` inflated by `radius`,
// evaluated at the given probe states. Near zero certifies near-affineness
// of the field over that region.
double affine_probe(const ThreeNetParams& net, const Tensor& contexts, double radius,
                    const Tensor& probe_states, std::uint64_t seed, int n_samples);

// ---- report files ----

void save_adapt_report(const std::string& dir, const AdaptReport& report);
void save_eval_report(const std::string& dir, const std::vector<EnvMetrics>& env_metrics,
                      const std::vector<ParamMap>& env_params, const std::string& split_name);
void save_uq_report(const std::string& dir, const UqSummary& summary, const Split& split);
void save_identify_report(const std::string& dir, const IdentifyResult& result);

}  // namespace ncf
