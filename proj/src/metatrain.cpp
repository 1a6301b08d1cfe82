#include "ncf/metatrain.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "ncf/adam.hpp"
#include "ncf/blob_io.hpp"
#include "ncf/forecast.hpp"

namespace ncf {

using json = nlohmann::json;

PoolStrategy pool_strategy_from_name(const std::string& name) {
    if (name == "random_all") return PoolStrategy::random_all;
    if (name == "nearest_first") return PoolStrategy::nearest_first;
    if (name == "smallest_first") return PoolStrategy::smallest_first;
    throw ValidationError("unknown pool strategy '" + name + "'");
}

std::string pool_strategy_name(PoolStrategy s) {
    switch (s) {
        case PoolStrategy::random_all: return "random_all";
        case PoolStrategy::nearest_first: return "nearest_first";
        case PoolStrategy::smallest_first: return "smallest_first";
    }
    return "?";
}

std::vector<std::size_t> build_pool(PoolStrategy strategy, std::size_t e, const Tensor& contexts,
                                    std::size_t p, Rng& rng) {
    if (contexts.rank() != 2) throw ValidationError("build_pool: contexts must be [m, d_xi]");
    const std::size_t m = contexts.shape()[0], d_xi = contexts.shape()[1];
    if (e >= m) throw ValidationError("build_pool: environment index out of range");
    if (p < 1 || p > m)
        throw ValidationError("build_pool: pool size " + std::to_string(p) + " not in [1," + std::to_string(m) + "]");

    if (strategy == PoolStrategy::random_all) {
        std::vector<std::size_t> idx(m);
        std::iota(idx.begin(), idx.end(), 0);
        for (std::size_t k = 0; k < p; ++k) {
            const std::size_t pick = k + static_cast<std::size_t>(rng.next_below(m - k));
            std::swap(idx[k], idx[pick]);
        }
        idx.resize(p);
        return idx;
    }

    // Ties break self-first (nearest_first only), then toward the lowest
    // index, so p=1 under identical contexts selects the environment itself.
    std::vector<std::tuple<double, int, std::size_t>> keyed(m);
    for (std::size_t j = 0; j < m; ++j) {
        double key = 0.0;
        int self_rank = 0;
        if (strategy == PoolStrategy::nearest_first) {
            for (std::size_t k = 0; k < d_xi; ++k) {
                const double diff = contexts.at(j, k) - contexts.at(e, k);
                key += diff * diff;
            }
            self_rank = j == e ? 0 : 1;
        } else {
            for (std::size_t k = 0; k < d_xi; ++k) key += std::fabs(contexts.at(j, k));
        }
        keyed[j] = {key, self_rank, j};
    }
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::size_t> out(p);
    for (std::size_t k = 0; k < p; ++k) out[k] = std::get<2>(keyed[k]);
    return out;
}

double inner_loss(const ThreeNetParams& net, const Tensor& xi_e, const Tensor& predicted,
                  const Tensor& truth, double lambda1, double lambda2) {
    if (!predicted.same_shape(truth))
        throw ValidationError("inner_loss: trajectory shapes " + shape_str(predicted.shape()) + " vs " +
                              shape_str(truth.shape()));
    const double data = mean(square(sub(predicted, truth))).item();
    double l1 = 0.0;
    for (std::size_t i = 0; i < xi_e.size(); ++i) l1 += std::fabs(xi_e[i]);
    l1 *= lambda1 / static_cast<double>(xi_e.size());
    double l2 = 0.0;
    if (lambda2 != 0.0) {
        double ss = 0.0;
        for_each_param(net, [&](const Tensor& w) {
            for (std::size_t i = 0; i < w.size(); ++i) ss += w[i] * w[i];
        });
        l2 = lambda2 * ss / static_cast<double>(param_count(net));
    }
    return data + l1 + l2;
}

LossResult total_loss(const LossRequest& req) {
    const Split& split = *req.split;
    const Tensor& ctx = *req.contexts;
    const std::size_t m = split.n_envs(), S = split.n_trajs(), N = split.n_steps(), d = split.state_size();
    if (ctx.rank() != 2 || ctx.shape()[0] != m)
        throw ValidationError("total_loss: contexts must be [n_envs, d_xi], got " + shape_str(ctx.shape()));
    if (m == 0 || S == 0) throw ValidationError("total_loss: empty split");

    Rng pool_rng(req.pool_seed);
    std::vector<std::vector<std::size_t>> pools(m);
    for (std::size_t e = 0; e < m; ++e)
        pools[e] = build_pool(req.strategy, e, ctx, req.pool_size, pool_rng);
    const std::size_t p = req.pool_size;
    const std::size_t B = m * S * p;

    Tensor x0(Shape{B, d});
    std::vector<Tensor> targets(N, Tensor(Shape{B, d}));
    std::vector<std::size_t> idx_e, idx_j;
    idx_e.reserve(B);
    idx_j.reserve(B);
    std::size_t r = 0;
    for (std::size_t e = 0; e < m; ++e)
        for (std::size_t i = 0; i < S; ++i) {
            const double* traj = split.X.data() + ((e * S) + i) * N * d;
            for (std::size_t j : pools[e]) {
                std::copy(traj, traj + d, x0.data() + r * d);
                for (std::size_t n = 0; n < N; ++n)
                    std::copy(traj + n * d, traj + (n + 1) * d, targets[n].data() + r * d);
                idx_e.push_back(e);
                idx_j.push_back(j);
                ++r;
            }
        }

    Tape tape;
    ThreeNet<Var> netv = lift_to_tape(tape, *req.net);
    Var ctxv = tape.leaf(ctx);
    Var xi_e = gather_rows(ctxv, idx_e);
    Var xi_j = gather_rows(ctxv, idx_j);
    Var x0v = tape.constant(x0);
    auto field = [&](const Var& x) { return taylor_eval(netv, x, xi_e, xi_j, req.taylor_order); };

    std::vector<Var> traj;
    try {
        traj = integrate(field, x0v, split.t, req.solver);
    } catch (const NumericError& err) {
        throw NumericError(std::string("total_loss: candidate integration failed: ") + err.what());
    }

    Var sq_acc = sum(square(sub(traj[0], x0v)));
    for (std::size_t n = 1; n < N; ++n)
        sq_acc = add(sq_acc, sum(square(sub(traj[n], tape.constant(targets[n])))));
    Var data = smul(sq_acc, 1.0 / static_cast<double>(B * N * d));

    LossResult res;
    res.value.data = data.value().item();
    Var total = data;

    if (req.lambda1 != 0.0) {
        Var l1 = smul(sum(abs(ctxv)), req.lambda1 / static_cast<double>(m * ctx.shape()[1]));
        res.value.l1 = l1.value().item();
        total = add(total, l1);
    }
    if (req.lambda2 != 0.0) {
        Var ss = tape.constant(Tensor::scalar(0.0));
        for_each_param(netv, [&](const Var& w) { ss = add(ss, sum(square(w))); });
        Var l2 = smul(ss, req.lambda2 / static_cast<double>(param_count(*req.net)));
        res.value.l2 = l2.value().item();
        total = add(total, l2);
    }
    if (req.beta != 0.0 && (req.theta_anchor || req.xi_anchor)) {
        Var pacc = tape.constant(Tensor::scalar(0.0));
        if (req.theta_anchor) {
            std::vector<const Tensor*> anchors;
            for_each_param(*req.theta_anchor, [&](const Tensor& w) { anchors.push_back(&w); });
            std::size_t k = 0;
            for_each_param(netv, [&](const Var& w) {
                pacc = add(pacc, sum(square(sub(w, tape.constant(*anchors[k++])))));
            });
        }
        if (req.xi_anchor) pacc = add(pacc, sum(square(sub(ctxv, tape.constant(*req.xi_anchor)))));
        Var prox = smul(pacc, req.beta / 2.0);
        res.value.prox = prox.value().item();
        total = add(total, prox);
    }

    res.value.total = total.value().item();
    if (!std::isfinite(res.value.total)) throw NumericError("total_loss: non-finite loss value");

    if (req.want_grads) {
        tape.backward_from(total.id());
        for_each_param(netv, [&](const Var& w) { res.theta_grads.push_back(w.grad()); });
        res.context_grads = ctxv.grad();
    }
    return res;
}

// ---- config (de)serialization ----

namespace {

json solver_to_json(const IntegratorSpec& s) {
    return json{{"method", method_name(s.method)},
                {"dt", s.dt},
                {"rtol", s.rtol},
                {"atol", s.atol},
                {"max_steps", s.max_steps}};
}

IntegratorSpec solver_from_json(const json& j, const IntegratorSpec& dflt) {
    IntegratorSpec s = dflt;
    if (j.contains("method")) s.method = method_from_name(j.at("method").get<std::string>());
    s.dt = j.value("dt", s.dt);
    s.rtol = j.value("rtol", s.rtol);
    s.atol = j.value("atol", s.atol);
    s.max_steps = j.value("max_steps", s.max_steps);
    return s;
}

}  // namespace

TrainConfig train_config_from_json_text(const std::string& text) {
    const json j = json::parse(text);
    TrainConfig c;
    c.taylor_order = j.value("taylor_order", c.taylor_order);
    if (j.contains("pool_strategy")) c.pool_strategy = pool_strategy_from_name(j.at("pool_strategy"));
    c.pool_size = j.value("pool_size", c.pool_size);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.lr_theta = j.value("lr_theta", c.lr_theta);
    c.lr_xi = j.value("lr_xi", c.lr_xi);
    c.proximal_beta = j.value("proximal_beta", c.proximal_beta);
    c.epochs = j.value("epochs", c.epochs);
    c.outer_iterations = j.value("outer_iterations", c.outer_iterations);
    c.inner_iterations_theta = j.value("inner_iterations_theta", c.inner_iterations_theta);
    c.inner_iterations_xi = j.value("inner_iterations_xi", c.inner_iterations_xi);
    c.rel_tol = j.value("rel_tol", c.rel_tol);
    c.d_xi = j.value("d_xi", c.d_xi);
    c.state_widths = j.value("state_widths", c.state_widths);
    c.context_widths = j.value("context_widths", c.context_widths);
    c.main_widths = j.value("main_widths", c.main_widths);
    c.baseline_widths = j.value("baseline_widths", c.baseline_widths);
    if (j.contains("activation")) c.activation = activation_from_name(j.at("activation"));
    if (j.contains("solver")) c.solver = solver_from_json(j.at("solver"), c.solver);
    c.validate_every = j.value("validate_every", c.validate_every);
    c.seed = j.value("seed", c.seed);
    c.algorithm = j.value("algorithm", c.algorithm);
    return c;
}

std::string train_config_to_json_text(const TrainConfig& c) {
    json j;
    j["taylor_order"] = c.taylor_order;
    j["pool_strategy"] = pool_strategy_name(c.pool_strategy);
    j["pool_size"] = c.pool_size;
    j["lambda1"] = c.lambda1;
    j["lambda2"] = c.lambda2;
    j["lr_theta"] = c.lr_theta;
    j["lr_xi"] = c.lr_xi;
    j["proximal_beta"] = c.proximal_beta;
    j["epochs"] = c.epochs;
    j["outer_iterations"] = c.outer_iterations;
    j["inner_iterations_theta"] = c.inner_iterations_theta;
    j["inner_iterations_xi"] = c.inner_iterations_xi;
    j["rel_tol"] = c.rel_tol;
    j["d_xi"] = c.d_xi;
    j["state_widths"] = c.state_widths;
    j["context_widths"] = c.context_widths;
    j["main_widths"] = c.main_widths;
    j["baseline_widths"] = c.baseline_widths;
    j["activation"] = activation_name(c.activation);
    j["solver"] = solver_to_json(c.solver);
    j["validate_every"] = c.validate_every;
    j["seed"] = c.seed;
    j["algorithm"] = c.algorithm;
    return j.dump(2) + "\n";
}

// ---- training drivers ----

namespace {

constexpr std::uint64_t kPoolStream = 0x700157;

struct TrainState {
    ThreeNetParams net;
    Tensor contexts;
    Adam adam_theta;
    Adam adam_xi;
    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    ThreeNetParams best_net;
    Tensor best_contexts;
    bool warned_nonmonotone = false;

    std::vector<Tensor*> theta_ptrs() {
        std::vector<Tensor*> ptrs;
        for_each_param(net, [&](Tensor& w) { ptrs.push_back(&w); });
        return ptrs;
    }
};

TrainState init_state(const TrajectoryDataset& ds, const TrainConfig& cfg) {
    TrainState st;
    ThreeNetConfig arch{ds.train.state_size(), cfg.d_xi, cfg.state_widths, cfg.context_widths,
                        cfg.main_widths, cfg.activation};
    st.net = init_three_net(arch, mix_seed(cfg.seed, 0x11));
    st.contexts = Tensor::zeros(Shape{ds.train.n_envs(), cfg.d_xi});
    st.best_net = st.net;
    st.best_contexts = st.contexts;
    return st;
}

LossRequest base_request(const TrainState& st, const TrajectoryDataset& ds, const TrainConfig& cfg) {
    LossRequest req;
    req.net = &st.net;
    req.contexts = &st.contexts;
    req.split = &ds.train;
    req.taylor_order = cfg.taylor_order;
    req.strategy = cfg.pool_strategy;
    req.pool_size = cfg.pool_size;
    req.lambda1 = cfg.lambda1;
    req.lambda2 = cfg.lambda2;
    req.solver = cfg.solver;
    return req;
}

void validate_and_checkpoint(TrainState& st, const TrajectoryDataset& ds, const TrainConfig& cfg,
                             int epoch) {
    const double v = mean_of(per_env_mse(st.net, st.contexts, ds.test, cfg.solver));
    st.report.val_epochs.push_back(epoch);
    st.report.val_mse.push_back(v);
    if (v < st.best_val) {
        st.best_val = v;
        st.best_net = st.net;
        st.best_contexts = st.contexts;
        st.report.best_epoch = epoch;
    }
}

void finish(TrainState& st, const TrainConfig& cfg, const TrajectoryDataset& ds, int executed,
            std::chrono::steady_clock::time_point t0) {
    if (!st.report.aborted) validate_and_checkpoint(st, ds, cfg, executed - 1);
    st.report.executed_epochs = executed;
    st.report.best_val = st.best_val;
    st.report.net = st.best_net;
    st.report.contexts = st.best_contexts;
    st.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool should_validate(const TrainConfig& cfg, int epoch) {
    return cfg.validate_every > 0 && (epoch + 1) % cfg.validate_every == 0;
}

}  // namespace

TrainReport train_ordinary(const TrajectoryDataset& ds, const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainState st = init_state(ds, cfg);
    double prev_total = std::numeric_limits<double>::quiet_NaN();
    int epoch = 0;
    for (; epoch < cfg.epochs; ++epoch) {
        try {
            LossRequest req = base_request(st, ds, cfg);
            req.pool_seed = mix_seed(mix_seed(cfg.seed, kPoolStream), epoch, 0, 0);
            LossResult res_theta = total_loss(req);
            st.adam_theta.step(st.theta_ptrs(), res_theta.theta_grads, cfg.lr_theta);

            req.pool_seed = mix_seed(mix_seed(cfg.seed, kPoolStream), epoch, 1, 0);
            LossResult res_xi = total_loss(req);
            st.adam_xi.step({&st.contexts}, {res_xi.context_grads}, cfg.lr_xi);

            st.report.epoch_loss.push_back(res_theta.value);
            if (should_validate(cfg, epoch)) validate_and_checkpoint(st, ds, cfg, epoch);
            const double cur = res_theta.value.total;
            if (cfg.rel_tol > 0.0 && std::isfinite(prev_total) &&
                std::fabs(cur - prev_total) < cfg.rel_tol * std::max(1.0, std::fabs(prev_total))) {
                ++epoch;
                break;
            }
            prev_total = cur;
        } catch (const NumericError& err) {
            st.report.aborted = true;
            st.report.abort_reason = err.what();
            break;
        }
    }
    finish(st, cfg, ds, epoch, t0);
    return st.report;
}

TrainReport train_proximal(const TrajectoryDataset& ds, const TrainConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    TrainState st = init_state(ds, cfg);
    int outer = 0;
    for (; outer < cfg.outer_iterations; ++outer) {
        try {
            LossBreakdown last{};
            // theta subproblem around the previous iterate
            {
                const ThreeNetParams anchor = st.net;
                double prev = std::numeric_limits<double>::quiet_NaN();
                for (int it = 0; it < cfg.inner_iterations_theta; ++it) {
                    LossRequest req = base_request(st, ds, cfg);
                    req.pool_seed = mix_seed(mix_seed(cfg.seed, kPoolStream), outer, 0, it);
                    if (cfg.proximal_beta != 0.0) {
                        req.theta_anchor = &anchor;
                        req.beta = cfg.proximal_beta;
                    }
                    LossResult res = total_loss(req);
                    st.adam_theta.step(st.theta_ptrs(), res.theta_grads, cfg.lr_theta);
                    if (std::isfinite(prev) && res.value.total > prev && !st.warned_nonmonotone) {
                        std::fprintf(stderr,
                                     "warning: proximal theta subproblem increased (%.3e -> %.3e); "
                                     "consider a smaller lr_theta\n",
                                     prev, res.value.total);
                        st.warned_nonmonotone = true;
                    }
                    if (cfg.rel_tol > 0.0 && std::isfinite(prev) &&
                        std::fabs(res.value.total - prev) < cfg.rel_tol * std::max(1.0, std::fabs(prev)))
                        break;
                    prev = res.value.total;
                }
            }
            // context subproblem around the previous contexts
            {
                const Tensor anchor = st.contexts;
                double prev = std::numeric_limits<double>::quiet_NaN();
                for (int it = 0; it < cfg.inner_iterations_xi; ++it) {
                    LossRequest req = base_request(st, ds, cfg);
                    req.pool_seed = mix_seed(mix_seed(cfg.seed, kPoolStream), outer, 1, it);
                    if (cfg.proximal_beta != 0.0) {
                        req.xi_anchor = &anchor;
                        req.beta = cfg.proximal_beta;
                    }
                    LossResult res = total_loss(req);
                    st.adam_xi.step({&st.contexts}, {res.context_grads}, cfg.lr_xi);
                    last = res.value;
                    if (cfg.rel_tol > 0.0 && std::isfinite(prev) &&
                        std::fabs(res.value.total - prev) < cfg.rel_tol * std::max(1.0, std::fabs(prev)))
                        break;
                    prev = res.value.total;
                }
            }
            st.report.epoch_loss.push_back(last);
            if (should_validate(cfg, outer)) validate_and_checkpoint(st, ds, cfg, outer);
        } catch (const NumericError& err) {
            st.report.aborted = true;
            st.report.abort_reason = err.what();
            break;
        }
    }
    finish(st, cfg, ds, outer, t0);
    return st.report;
}

// ---- context-free baselines ----

namespace {

struct BaselineLossResult {
    double data = 0.0;
    double total = 0.0;
    std::vector<Tensor> grads;
};

BaselineLossResult baseline_loss(const BaselineParams& net, const Tensor& x0,
                                 const std::vector<Tensor>& targets, std::span<const double> t,
                                 const IntegratorSpec& solver, double lambda2, bool want_grads) {
    Tape tape;
    BaselineNet<Var> netv = lift_to_tape(tape, net);
    Var x0v = tape.constant(x0);
    auto field = [&](const Var& x) { return vf_eval(netv, x); };
    std::vector<Var> traj = integrate(field, x0v, t, solver);
    Var sq_acc = sum(square(sub(traj[0], x0v)));
    for (std::size_t n = 1; n < traj.size(); ++n)
        sq_acc = add(sq_acc, sum(square(sub(traj[n], tape.constant(targets[n])))));
    const std::size_t total_count = x0.shape()[0] * targets.size() * x0.shape()[1];
    Var data = smul(sq_acc, 1.0 / static_cast<double>(total_count));
    BaselineLossResult res;
    res.data = data.value().item();
    Var total = data;
    if (lambda2 != 0.0) {
        Var ss = tape.constant(Tensor::scalar(0.0));
        for_each_param(netv, [&](const Var& w) { ss = add(ss, sum(square(w))); });
        total = add(total, smul(ss, lambda2 / static_cast<double>(param_count(net))));
    }
    res.total = total.value().item();
    if (!std::isfinite(res.total)) throw NumericError("baseline loss: non-finite value");
    if (want_grads) {
        tape.backward_from(total.id());
        for_each_param(netv, [&](const Var& w) { res.grads.push_back(w.grad()); });
    }
    return res;
}

// Rows (env,traj) restricted to one environment, or all of them.
void split_rows(const Split& split, long env, Tensor& x0, std::vector<Tensor>& targets) {
    const std::size_t m = split.n_envs(), S = split.n_trajs(), N = split.n_steps(), d = split.state_size();
    const std::size_t e_lo = env < 0 ? 0 : static_cast<std::size_t>(env);
    const std::size_t e_hi = env < 0 ? m : static_cast<std::size_t>(env) + 1;
    const std::size_t B = (e_hi - e_lo) * S;
    x0 = Tensor(Shape{B, d});
    targets.assign(N, Tensor(Shape{B, d}));
    std::size_t r = 0;
    for (std::size_t e = e_lo; e < e_hi; ++e)
        for (std::size_t i = 0; i < S; ++i, ++r) {
            const double* traj = split.X.data() + ((e * S) + i) * N * d;
            std::copy(traj, traj + d, x0.data() + r * d);
            for (std::size_t n = 0; n < N; ++n)
                std::copy(traj + n * d, traj + (n + 1) * d, targets[n].data() + r * d);
        }
}

}  // namespace

BaselineReport train_baseline(const TrajectoryDataset& ds, BaselineMode mode, const TrainConfig& cfg,
                              bool on_adapt_split) {
    const auto t0 = std::chrono::steady_clock::now();
    const Split& tr = on_adapt_split ? ds.ood_train : ds.train;
    const Split& te = on_adapt_split ? ds.ood_test : ds.test;
    BaselineReport report;
    const std::size_t n_models = mode == BaselineMode::ofa ? 1 : tr.n_envs();
    std::vector<std::vector<double>> curves(n_models);

    for (std::size_t k = 0; k < n_models; ++k) {
        BaselineParams net =
            init_baseline(tr.state_size(), cfg.baseline_widths, mix_seed(cfg.seed, 0xBA5E, k));
        Tensor x0;
        std::vector<Tensor> targets;
        split_rows(tr, mode == BaselineMode::ofa ? -1 : static_cast<long>(k), x0, targets);
        Adam adam;
        for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
            BaselineLossResult res = baseline_loss(net, x0, targets, tr.t, cfg.solver, cfg.lambda2, true);
            std::vector<Tensor*> ptrs;
            for_each_param(net, [&](Tensor& w) { ptrs.push_back(&w); });
            adam.step(ptrs, res.grads, cfg.lr_theta);
            curves[k].push_back(res.total);
        }
        report.nets.push_back(std::move(net));
    }

    report.executed_epochs = cfg.epochs;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        LossBreakdown b;
        double acc = 0.0;
        for (const auto& c : curves) acc += c[static_cast<std::size_t>(epoch)];
        b.total = b.data = acc / static_cast<double>(n_models);
        report.epoch_loss.push_back(b);
    }

    // Per-environment forecast MSEs with the trained nets.
    const std::size_t m = tr.n_envs();
    report.per_env_train_mse.resize(m);
    report.per_env_test_mse.resize(m);
    for (std::size_t e = 0; e < m; ++e) {
        const BaselineParams& net = report.nets[mode == BaselineMode::ofa ? 0 : e];
        // Evaluate each env against the right net; reuse the batched helper
        // by slicing single-env views.
        Split tr_e;
        tr_e.t = tr.t;
        tr_e.X = gather_rows(tr.X, {e});
        tr_e.env_params = {tr.env_params[e]};
        Split te_e;
        te_e.t = te.t;
        te_e.X = gather_rows(te.X, {e});
        te_e.env_params = {te.env_params[e]};
        report.per_env_train_mse[e] = per_env_mse(net, tr_e, cfg.solver)[0];
        report.per_env_test_mse[e] = per_env_mse(net, te_e, cfg.solver)[0];
    }
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

void save_train_report(const std::string& dir, const TrainReport& report, const TrainConfig& cfg) {
    std::filesystem::create_directories(dir);
    json j;
    j["config"] = json::parse(train_config_to_json_text(cfg));
    j["executed_epochs"] = report.executed_epochs;
    j["best_val_mse"] = report.best_val;
    j["best_epoch"] = report.best_epoch;
    j["wall_seconds"] = report.wall_seconds;
    j["aborted"] = report.aborted;
    if (report.aborted) j["abort_reason"] = report.abort_reason;
    j["val_epochs"] = report.val_epochs;
    j["val_mse"] = report.val_mse;
    write_text_file(dir + "/train_report.json", j.dump(2) + "\n");

    std::ofstream csv(dir + "/loss_curve.csv", std::ios::trunc);
    csv << "epoch,total,data,l1,l2,prox\n";
    char buf[160];
    for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
        const LossBreakdown& b = report.epoch_loss[i];
        std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", i, b.total, b.data, b.l1,
                      b.l2, b.prox);
        csv << buf;
    }
}

}  // namespace ncf
