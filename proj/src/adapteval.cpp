#include "ncf/adapteval.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "json.hpp"
#include "ncf/adam.hpp"
#include "ncf/blob_io.hpp"
#include "ncf/forecast.hpp"
#include "ncf/linalg.hpp"
#include "ncf/rng.hpp"

namespace ncf {

using json = nlohmann::json;

namespace {

constexpr double kMapeFloor = 1e-3;

// One adaptation objective evaluation for a contiguous block of environments.
// contexts is a [n_envs_block, d_xi] leaf; rows of the batch are (env, traj).
struct AdaptLoss {
    double total;
    std::vector<double> per_env;  // per-environment loss values
    Tensor grads;                 // [n_envs_block, d_xi]
};

AdaptLoss adapt_loss(const ThreeNetParams& net, const Tensor& contexts, const Split& split,
                     const std::vector<std::size_t>& envs, const AdaptConfig& cfg, double theta_l2,
                     bool want_grads) {
    const std::size_t S = split.n_trajs(), N = split.n_steps(), d = split.state_size();
    const std::size_t d_xi = contexts.shape()[1];
    const std::size_t B = envs.size() * S;

    Tensor x0(Shape{B, d});
    std::vector<Tensor> targets(N, Tensor(Shape{B, d}));
    std::vector<std::size_t> ctx_row;
    ctx_row.reserve(B);
    std::size_t r = 0;
    for (std::size_t k = 0; k < envs.size(); ++k)
        for (std::size_t i = 0; i < S; ++i, ++r) {
            const double* traj = split.X.data() + ((envs[k] * S) + i) * N * d;
            std::copy(traj, traj + d, x0.data() + r * d);
            for (std::size_t n = 0; n < N; ++n)
                std::copy(traj + n * d, traj + (n + 1) * d, targets[n].data() + r * d);
            ctx_row.push_back(k);
        }

    Tape tape;
    ThreeNet<Var> netv = lift_to_tape(tape, net, /*requires_grad=*/false);
    Var ctxv = tape.leaf(contexts);
    Var xi = gather_rows(ctxv, ctx_row);
    Var x0v = tape.constant(x0);
    auto field = [&](const Var& x) { return vf_eval(netv, x, xi); };
    std::vector<Var> traj = integrate(field, x0v, split.t, cfg.solver);

    // Per-environment mean squared error, then the L1 context term; the
    // objective is the *sum* over environments so gradients stay separable.
    AdaptLoss out;
    Var total = tape.constant(Tensor::scalar(0.0));
    for (std::size_t k = 0; k < envs.size(); ++k) {
        std::vector<std::size_t> rows(S);
        for (std::size_t i = 0; i < S; ++i) rows[i] = k * S + i;
        Var sq_acc = tape.constant(Tensor::scalar(0.0));
        for (std::size_t n = 1; n < N; ++n) {
            Var pred = gather_rows(traj[n], rows);
            Var truth = tape.constant(gather_rows(targets[n], rows));
            sq_acc = add(sq_acc, sum(square(sub(pred, truth))));
        }
        Var env_loss = smul(sq_acc, 1.0 / static_cast<double>(S * N * d));
        env_loss = add(env_loss, smul(sum(abs(gather_rows(ctxv, {k}))),
                                      cfg.lambda1 / static_cast<double>(d_xi)));
        out.per_env.push_back(env_loss.value().item() + theta_l2);
        total = add(total, env_loss);
    }
    out.total = total.value().item() + theta_l2 * static_cast<double>(envs.size());
    if (!std::isfinite(out.total)) throw NumericError("adaptation loss non-finite");
    if (want_grads) {
        tape.backward_from(total.id());
        out.grads = ctxv.grad();
    }
    return out;
}

double theta_l2_term(const ThreeNetParams& net, double lambda2) {
    if (lambda2 == 0.0) return 0.0;
    double ss = 0.0;
    for_each_param(net, [&](const Tensor& w) {
        for (std::size_t i = 0; i < w.size(); ++i) ss += w[i] * w[i];
    });
    return lambda2 * ss / static_cast<double>(param_count(net));
}

}  // namespace

AdaptReport adapt_sequential(const ThreeNetParams& net, const Split& adapt_split, const AdaptConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t m = adapt_split.n_envs();
    AdaptReport report;
    report.contexts = Tensor::zeros(Shape{m, net.d_xi});
    report.loss_curves.resize(m);
    report.env_errors.assign(m, "");
    const double l2 = theta_l2_term(net, cfg.lambda2);

    for (std::size_t e = 0; e < m; ++e) {
        Tensor xi = Tensor::zeros(Shape{1, net.d_xi});
        Adam adam;
        double prev = std::numeric_limits<double>::quiet_NaN();
        try {
            for (int it = 0; it < cfg.iterations; ++it) {
                AdaptLoss res = adapt_loss(net, xi, adapt_split, {e}, cfg, l2, true);
                adam.step({&xi}, {res.grads}, cfg.lr);
                report.loss_curves[e].push_back(res.total);
                if (cfg.rel_tol > 0.0 && std::isfinite(prev) &&
                    std::fabs(res.total - prev) < cfg.rel_tol * std::max(1.0, std::fabs(prev)))
                    break;
                prev = res.total;
            }
        } catch (const NumericError& err) {
            report.env_errors[e] = err.what();
        }
        for (std::size_t k = 0; k < net.d_xi; ++k) report.contexts.at(e, k) = xi[k];
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

AdaptReport adapt_bulk(const ThreeNetParams& net, const Split& adapt_split, const AdaptConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t m = adapt_split.n_envs();
    AdaptReport report;
    report.loss_curves.resize(m);
    report.env_errors.assign(m, "");
    const double l2 = theta_l2_term(net, cfg.lambda2);

    Tensor xi = Tensor::zeros(Shape{m, net.d_xi});
    std::vector<std::size_t> envs(m);
    for (std::size_t e = 0; e < m; ++e) envs[e] = e;
    Adam adam;
    double prev = std::numeric_limits<double>::quiet_NaN();
    try {
        for (int it = 0; it < cfg.iterations; ++it) {
            AdaptLoss res = adapt_loss(net, xi, adapt_split, envs, cfg, l2, true);
            adam.step({&xi}, {res.grads}, cfg.lr);
            for (std::size_t e = 0; e < m; ++e) report.loss_curves[e].push_back(res.per_env[e]);
            if (cfg.rel_tol > 0.0 && std::isfinite(prev) &&
                std::fabs(res.total - prev) < cfg.rel_tol * std::max(1.0, std::fabs(prev)))
                break;
            prev = res.total;
        }
    } catch (const NumericError& err) {
        for (std::size_t e = 0; e < m; ++e)
            if (report.env_errors[e].empty()) report.env_errors[e] = err.what();
    }
    report.contexts = xi;
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

namespace {

struct MetricAcc {
    double sq = 0.0;
    std::size_t n_sq = 0;
    double ape = 0.0;
    std::size_t n_ape = 0;

    void add(double truth, double hat) {
        const double diff = truth - hat;
        sq += diff * diff;
        ++n_sq;
        if (std::fabs(truth) > kMapeFloor) {
            ape += std::fabs(diff / truth);
            ++n_ape;
        }
    }

    EnvMetrics finish() const {
        EnvMetrics m;
        m.mse = n_sq ? sq / static_cast<double>(n_sq) : 0.0;
        if (n_ape == 0) {
            m.mape = std::numeric_limits<double>::quiet_NaN();
            m.mape_defined = false;
        } else {
            m.mape = 100.0 * ape / static_cast<double>(n_ape);
        }
        return m;
    }
};

}  // namespace

EnvMetrics series_metrics(const Tensor& truth, const Tensor& pred) {
    if (!truth.same_shape(pred))
        throw ValidationError("series_metrics: shapes " + shape_str(truth.shape()) + " vs " +
                              shape_str(pred.shape()));
    MetricAcc acc;
    for (std::size_t i = 0; i < truth.size(); ++i) acc.add(truth[i], pred[i]);
    return acc.finish();
}

std::vector<EnvMetrics> metrics(const ThreeNetParams& net, const Tensor& contexts, const Split& split,
                                const IntegratorSpec& solver) {
    const std::size_t m = split.n_envs(), S = split.n_trajs(), N = split.n_steps(), d = split.state_size();
    if (contexts.rank() != 2 || contexts.shape()[0] != m)
        throw ValidationError("metrics: contexts must cover the split's environments");
    std::vector<Tensor> pred = forecast_split(net, contexts, split, solver);
    std::vector<EnvMetrics> out(m);
    for (std::size_t e = 0; e < m; ++e) {
        MetricAcc acc;
        for (std::size_t i = 0; i < S; ++i)
            for (std::size_t n = 0; n < N; ++n) {
                const double* truth = split.X.data() + (((e * S) + i) * N + n) * d;
                const double* hat = pred[n].data() + (e * S + i) * d;
                for (std::size_t k = 0; k < d; ++k) acc.add(truth[k], hat[k]);
            }
        out[e] = acc.finish();
    }
    return out;
}

bool ci_covers(double truth, double mu, double sigma) {
    if (sigma == 0.0) return std::fabs(truth - mu) <= 1e-12;
    return truth >= mu - 3.0 * sigma && truth <= mu + 3.0 * sigma;
}

UqSeries uq_series(const Tensor& candidates) {
    if (candidates.rank() != 3) throw ValidationError("uq_series: candidates must be [p, n, d]");
    const std::size_t p = candidates.shape()[0], n = candidates.shape()[1], d = candidates.shape()[2];
    if (p < 2) throw ValidationError("uq_series: need at least 2 candidates for a spread");
    UqSeries s{Tensor(Shape{n, d}), Tensor(Shape{n, d})};
    for (std::size_t i = 0; i < n * d; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < p; ++j) mu += candidates[j * n * d + i];
        mu /= static_cast<double>(p);
        double var = 0.0;
        for (std::size_t j = 0; j < p; ++j) {
            const double dev = candidates[j * n * d + i] - mu;
            var += dev * dev;
        }
        s.mu[i] = mu;
        s.sigma[i] = std::sqrt(var / static_cast<double>(p));
    }
    return s;
}

UqSummary uq_metrics(const ThreeNetParams& net, const Tensor& target_contexts,
                     const Tensor& expansion_contexts, const Split& split, int taylor_order,
                     const IntegratorSpec& solver) {
    const std::size_t m = split.n_envs(), S = split.n_trajs(), N = split.n_steps(), d = split.state_size();
    if (target_contexts.rank() != 2 || target_contexts.shape()[0] != m)
        throw ValidationError("uq_metrics: target contexts must be [n_envs, d_xi]");
    if (expansion_contexts.rank() != 2 || expansion_contexts.shape()[0] < 2)
        throw ValidationError("uq_metrics: need at least 2 expansion contexts for a spread");
    const std::size_t p = expansion_contexts.shape()[0];
    const std::size_t d_xi = expansion_contexts.shape()[1];

    // Batch rows (e, i, j): integrate every candidate at once.
    const std::size_t B = m * S * p;
    Tensor x0(Shape{B, d});
    Tensor xi_e(Shape{B, d_xi});
    Tensor xi_j(Shape{B, d_xi});
    std::size_t r = 0;
    for (std::size_t e = 0; e < m; ++e)
        for (std::size_t i = 0; i < S; ++i) {
            const double* traj = split.X.data() + ((e * S) + i) * N * d;
            for (std::size_t j = 0; j < p; ++j, ++r) {
                std::copy(traj, traj + d, x0.data() + r * d);
                std::copy(target_contexts.data() + e * d_xi, target_contexts.data() + (e + 1) * d_xi,
                          xi_e.data() + r * d_xi);
                std::copy(expansion_contexts.data() + j * d_xi, expansion_contexts.data() + (j + 1) * d_xi,
                          xi_j.data() + r * d_xi);
            }
        }
    auto field = [&](const Tensor& x) { return taylor_eval(net, x, xi_e, xi_j, taylor_order); };
    std::vector<Tensor> pred = integrate(field, x0, split.t, solver);

    UqSummary out;
    out.mu = Tensor(Shape{m, S, N, d});
    out.sigma = Tensor(Shape{m, S, N, d});

    double rel_acc = 0.0;
    std::size_t rel_count = 0;
    double ape_acc = 0.0;
    std::size_t ape_count = 0;
    std::size_t covered = 0;

    for (std::size_t e = 0; e < m; ++e)
        for (std::size_t i = 0; i < S; ++i) {
            const std::size_t row0 = (e * S + i) * p;
            for (std::size_t n = 0; n < N; ++n) {
                const double* truth = split.X.data() + (((e * S) + i) * N + n) * d;
                double* mu_out = out.mu.data() + (((e * S) + i) * N + n) * d;
                double* sg_out = out.sigma.data() + (((e * S) + i) * N + n) * d;
                double err2 = 0.0, truth2 = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    double mu = 0.0;
                    for (std::size_t j = 0; j < p; ++j) mu += pred[n][(row0 + j) * d + k];
                    mu /= static_cast<double>(p);
                    double var = 0.0;
                    for (std::size_t j = 0; j < p; ++j) {
                        const double dev = pred[n][(row0 + j) * d + k] - mu;
                        var += dev * dev;
                    }
                    const double sigma = std::sqrt(var / static_cast<double>(p));
                    mu_out[k] = mu;
                    sg_out[k] = sigma;
                    const double diff = truth[k] - mu;
                    err2 += diff * diff;
                    truth2 += truth[k] * truth[k];
                    if (std::fabs(truth[k]) > kMapeFloor) {
                        ape_acc += std::fabs(diff / truth[k]);
                        ++ape_count;
                    }
                    if (ci_covers(truth[k], mu, sigma)) ++covered;
                }
                if (std::sqrt(truth2) > kMapeFloor) {
                    rel_acc += err2 / truth2;
                    ++rel_count;
                }
            }
        }

    if (rel_count == 0) {
        out.rel_mse = std::numeric_limits<double>::quiet_NaN();
        out.rel_mse_defined = false;
    } else {
        out.rel_mse = 100.0 * rel_acc / (static_cast<double>(rel_count) * static_cast<double>(d));
    }
    if (ape_count == 0) {
        out.mape = std::numeric_limits<double>::quiet_NaN();
        out.mape_defined = false;
    } else {
        out.mape = 100.0 * ape_acc / static_cast<double>(ape_count);
    }
    out.cl = 100.0 * static_cast<double>(covered) / static_cast<double>(m * S * N * d);
    return out;
}

IdentifyResult identify_linear(const Tensor& contexts, const Tensor& observed,
                               const Tensor* heldout_contexts, const Tensor* heldout_observed) {
    if (contexts.rank() != 2 || observed.rank() != 2 || contexts.shape()[0] != observed.shape()[0])
        throw ValidationError("identify_linear: contexts [m,d_xi] and observed [m,d_c] must align");
    const std::size_t mm = contexts.shape()[0], d_xi = contexts.shape()[1], d_c = observed.shape()[1];
    if (mm < 2) throw ValidationError("identify_linear: need at least 2 environments");

    // Augmented normal equations with ridge jitter on the Gram matrix.
    const std::size_t g = d_xi + 1;
    Tensor gram(Shape{g, g});
    Tensor rhs(Shape{g, d_c});
    for (std::size_t e = 0; e < mm; ++e) {
        std::vector<double> row(g, 1.0);
        for (std::size_t a = 0; a < d_xi; ++a) row[a] = contexts.at(e, a);
        for (std::size_t a = 0; a < g; ++a) {
            for (std::size_t b = 0; b < g; ++b) gram.at(a, b) += row[a] * row[b];
            for (std::size_t c = 0; c < d_c; ++c) rhs.at(a, c) += row[a] * observed.at(e, c);
        }
    }
    for (std::size_t a = 0; a < g; ++a) gram.at(a, a) += 1e-10;
    Tensor w = solve_linear(gram, rhs);  // [g, d_c]

    IdentifyResult res;
    res.Q = Tensor(Shape{d_c, d_xi});
    res.q = Tensor(Shape{d_c});
    for (std::size_t c = 0; c < d_c; ++c) {
        for (std::size_t a = 0; a < d_xi; ++a) res.Q.at(c, a) = w.at(a, c);
        res.q[c] = w.at(d_xi, c);
    }

    auto predict = [&](const Tensor& xi, std::size_t e, std::size_t c) {
        double acc = res.q[c];
        for (std::size_t a = 0; a < d_xi; ++a) acc += res.Q.at(c, a) * xi.at(e, a);
        return acc;
    };
    double sq = 0.0;
    for (std::size_t e = 0; e < mm; ++e)
        for (std::size_t c = 0; c < d_c; ++c) {
            const double diff = predict(contexts, e, c) - observed.at(e, c);
            sq += diff * diff;
        }
    res.train_mse = sq / static_cast<double>(mm * d_c);

    if (heldout_contexts && heldout_observed) {
        const std::size_t h = heldout_contexts->shape()[0];
        res.heldout_pred = Tensor(Shape{h, d_c});
        double hsq = 0.0;
        for (std::size_t e = 0; e < h; ++e)
            for (std::size_t c = 0; c < d_c; ++c) {
                const double pred = predict(*heldout_contexts, e, c);
                res.heldout_pred.at(e, c) = pred;
                const double diff = pred - heldout_observed->at(e, c);
                hsq += diff * diff;
            }
        res.heldout_mse = hsq / static_cast<double>(h * d_c);
    } else {
        res.heldout_mse = std::numeric_limits<double>::quiet_NaN();
    }
    return res;
}

double affine_probe(const ThreeNetParams& net, const Tensor& contexts, double radius,
                    const Tensor& probe_states, std::uint64_t seed, int n_samples) {
    if (contexts.rank() != 2 || contexts.shape()[0] < 1)
        throw ValidationError("affine_probe: contexts must be [m, d_xi]");
    const std::size_t m = contexts.shape()[0], d_xi = contexts.shape()[1];
    const std::size_t K = probe_states.rank() == 2 ? probe_states.shape()[0] : 1;
    Rng rng(mix_seed(seed, 0xAFF1));

    auto hull_sample = [&]() {
        std::vector<double> w(m);
        double acc = 0.0;
        for (std::size_t e = 0; e < m; ++e) {
            w[e] = rng.next_double() + 1e-12;
            acc += w[e];
        }
        Tensor xi(Shape{1, d_xi});
        for (std::size_t e = 0; e < m; ++e)
            for (std::size_t k = 0; k < d_xi; ++k) xi.at(0, k) += (w[e] / acc) * contexts.at(e, k);
        for (std::size_t k = 0; k < d_xi; ++k) xi.at(0, k) += rng.uniform(-radius, radius);
        return xi;
    };

    double worst = 0.0;
    for (int s = 0; s < n_samples; ++s) {
        const Tensor a = hull_sample();
        const Tensor b = hull_sample();
        // Broadcast the pair across all probe states.
        Tensor xi_e(Shape{K, d_xi}), xi_j(Shape{K, d_xi});
        for (std::size_t r = 0; r < K; ++r)
            for (std::size_t k = 0; k < d_xi; ++k) {
                xi_e.at(r, k) = a.at(0, k);
                xi_j.at(r, k) = b.at(0, k);
            }
        TaylorPieces<Tensor> pieces = taylor_pieces(net, probe_states, xi_e, xi_j);
        for (std::size_t r = 0; r < K; ++r) {
            double norm = 0.0;
            for (std::size_t k = 0; k < net.d; ++k) {
                const double v = pieces.dg.at(r, k);
                norm += v * v;
            }
            worst = std::max(worst, std::sqrt(norm));
        }
    }
    return worst;
}

// ---- report files ----

void save_adapt_report(const std::string& dir, const AdaptReport& report) {
    std::filesystem::create_directories(dir);
    json j;
    j["n_envs"] = report.contexts.rank() == 2 ? report.contexts.shape()[0] : 0;
    j["wall_seconds"] = report.wall_seconds;
    j["env_errors"] = report.env_errors;
    j["contexts_shape"] = report.contexts.shape();
    write_text_file(dir + "/adapt_report.json", j.dump(2) + "\n");
    write_f64_blob(dir + "/adapted_contexts.bin", report.contexts.data(), report.contexts.size());

    std::ofstream csv(dir + "/adapt_loss.csv", std::ios::trunc);
    csv << "env,iteration,loss\n";
    char buf[64];
    for (std::size_t e = 0; e < report.loss_curves.size(); ++e)
        for (std::size_t it = 0; it < report.loss_curves[e].size(); ++it) {
            std::snprintf(buf, sizeof buf, "%zu,%zu,%.17g\n", e, it, report.loss_curves[e][it]);
            csv << buf;
        }
}

void save_eval_report(const std::string& dir, const std::vector<EnvMetrics>& env_metrics,
                      const std::vector<ParamMap>& env_params, const std::string& split_name) {
    std::filesystem::create_directories(dir);
    json j;
    j["split"] = split_name;
    json envs = json::array();
    double mse_acc = 0.0;
    for (std::size_t e = 0; e < env_metrics.size(); ++e) {
        json je;
        je["env"] = e;
        je["mse"] = env_metrics[e].mse;
        if (env_metrics[e].mape_defined) je["mape"] = env_metrics[e].mape;
        je["mape_defined"] = env_metrics[e].mape_defined;
        if (e < env_params.size()) je["params"] = env_params[e];
        envs.push_back(je);
        mse_acc += env_metrics[e].mse;
    }
    j["envs"] = envs;
    j["mean_mse"] = env_metrics.empty() ? 0.0 : mse_acc / static_cast<double>(env_metrics.size());
    write_text_file(dir + "/eval_report.json", j.dump(2) + "\n");

    std::ofstream csv(dir + "/per_env_metrics.csv", std::ios::trunc);
    // Parameter columns come from the first environment's sorted keys.
    csv << "env";
    std::vector<std::string> keys;
    if (!env_params.empty())
        for (const auto& kv : env_params.front()) {
            keys.push_back(kv.first);
            csv << ',' << kv.first;
        }
    csv << ",mse,mape\n";
    char buf[64];
    for (std::size_t e = 0; e < env_metrics.size(); ++e) {
        csv << e;
        for (const std::string& k : keys) {
            std::snprintf(buf, sizeof buf, ",%.17g", env_params[e].at(k));
            csv << buf;
        }
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", env_metrics[e].mse, env_metrics[e].mape);
        csv << buf;
    }
}

void save_uq_report(const std::string& dir, const UqSummary& summary, const Split& split) {
    std::filesystem::create_directories(dir);
    json j;
    j["rel_mse_percent"] = summary.rel_mse;
    j["mape_percent"] = summary.mape;
    j["cl_percent"] = summary.cl;
    j["rel_mse_defined"] = summary.rel_mse_defined;
    j["mape_defined"] = summary.mape_defined;
    write_text_file(dir + "/uq_report.json", j.dump(2) + "\n");

    std::ofstream csv(dir + "/uq_points.csv", std::ios::trunc);
    csv << "env,traj,step,t,dim,truth,mu,sigma\n";
    const std::size_t m = split.n_envs(), S = split.n_trajs(), N = split.n_steps(), d = split.state_size();
    char buf[160];
    for (std::size_t e = 0; e < m; ++e)
        for (std::size_t i = 0; i < S; ++i)
            for (std::size_t n = 0; n < N; ++n)
                for (std::size_t k = 0; k < d; ++k) {
                    const std::size_t off = (((e * S) + i) * N + n) * d + k;
                    std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.17g,%zu,%.17g,%.17g,%.17g\n", e, i, n,
                                  split.t[n], k, split.X[off], summary.mu[off], summary.sigma[off]);
                    csv << buf;
                }
}

void save_identify_report(const std::string& dir, const IdentifyResult& result) {
    std::filesystem::create_directories(dir);
    json j;
    j["Q_shape"] = result.Q.shape();
    j["Q"] = result.Q.vec();
    j["q"] = result.q.vec();
    j["train_mse"] = result.train_mse;
    if (std::isfinite(result.heldout_mse)) {
        j["heldout_mse"] = result.heldout_mse;
        j["heldout_pred"] = result.heldout_pred.vec();
    }
    write_text_file(dir + "/identify_report.json", j.dump(2) + "\n");
}

}  // namespace ncf
