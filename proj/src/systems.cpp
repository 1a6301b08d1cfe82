#include "ncf/systems.hpp"

#include <cmath>
#include <mutex>
#include <thread>

#include "ncf/odeint.hpp"

namespace ncf {

SystemId system_from_name(const std::string& name) {
    if (name == "sp") return SystemId::sp;
    if (name == "lv") return SystemId::lv;
    if (name == "go") return SystemId::go;
    if (name == "sm") return SystemId::sm;
    if (name == "bt") return SystemId::bt;
    throw ValidationError("unknown system '" + name + "' (expected sp|lv|go|sm|bt)");
}

std::string system_name(SystemId id) {
    switch (id) {
        case SystemId::sp: return "sp";
        case SystemId::lv: return "lv";
        case SystemId::go: return "go";
        case SystemId::sm: return "sm";
        case SystemId::bt: return "bt";
    }
    return "?";
}

const SystemSpec& system_spec(SystemId id) {
    static const SystemSpec sp{SystemId::sp, 2, {"g", "L"}, {"g"}};
    static const SystemSpec lv{SystemId::lv, 2, {"alpha", "beta", "gamma", "delta"}, {"beta", "delta"}};
    static const SystemSpec go{
        SystemId::go, 7, {"J0", "k1", "k2", "k3", "k4", "k5", "k6", "K1", "q", "N", "A", "kappa", "psi", "k"},
        {"k1", "K1"}};
    static const SystemSpec sm{SystemId::sm, 2, {"a", "b"}, {"b"}};
    static const SystemSpec bt{SystemId::bt, 128, {"A", "B", "Du", "Dv"}, {"A", "B"}};
    switch (id) {
        case SystemId::sp: return sp;
        case SystemId::lv: return lv;
        case SystemId::go: return go;
        case SystemId::sm: return sm;
        case SystemId::bt: return bt;
    }
    throw ValidationError("bad system id");
}

namespace {

double get_param(const ParamMap& params, const std::string& name) {
    auto it = params.find(name);
    if (it == params.end()) throw ValidationError("missing parameter '" + name + "'");
    return it->second;
}

constexpr std::size_t kBtSide = 8;
constexpr std::size_t kBtCells = kBtSide * kBtSide;

// 5-point periodic Laplacian on the 8x8 grid, unit spacing.
void periodic_laplacian(const double* f, double* out) {
    for (std::size_t i = 0; i < kBtSide; ++i) {
        const std::size_t up = (i + kBtSide - 1) % kBtSide, dn = (i + 1) % kBtSide;
        for (std::size_t j = 0; j < kBtSide; ++j) {
            const std::size_t lf = (j + kBtSide - 1) % kBtSide, rt = (j + 1) % kBtSide;
            out[i * kBtSide + j] = f[up * kBtSide + j] + f[dn * kBtSide + j] + f[i * kBtSide + lf] +
                                   f[i * kBtSide + rt] - 4.0 * f[i * kBtSide + j];
        }
    }
}

}  // namespace

Tensor true_field(const SystemSpec& spec, const ParamMap& params, const Tensor& x) {
    if (x.size() != spec.state_size)
        throw ValidationError("true_field: state size " + std::to_string(x.size()) + " for system " +
                              system_name(spec.id));
    Tensor dx(x.shape());
    switch (spec.id) {
        case SystemId::sp: {
            const double g = get_param(params, "g"), L = get_param(params, "L");
            dx[0] = x[1];
            dx[1] = -(g / L) * std::sin(x[0]);
            break;
        }
        case SystemId::lv: {
            const double alpha = get_param(params, "alpha"), beta = get_param(params, "beta");
            const double gamma = get_param(params, "gamma"), delta = get_param(params, "delta");
            dx[0] = alpha * x[0] - beta * x[0] * x[1];
            dx[1] = delta * x[0] * x[1] - gamma * x[1];
            break;
        }
        case SystemId::go: {
            const double J0 = get_param(params, "J0"), k1 = get_param(params, "k1");
            const double k2 = get_param(params, "k2"), k3 = get_param(params, "k3");
            const double k4 = get_param(params, "k4"), k5 = get_param(params, "k5");
            const double k6 = get_param(params, "k6"), K1 = get_param(params, "K1");
            const double q = get_param(params, "q"), N = get_param(params, "N");
            const double A = get_param(params, "A"), kappa = get_param(params, "kappa");
            const double psi = get_param(params, "psi"), k = get_param(params, "k");
            const double s1 = x[0], s2 = x[1], s3 = x[2], s4 = x[3], s5 = x[4], s6 = x[5], s7 = x[6];
            const double flux = k1 * s1 * s6 / (1.0 + std::pow(s6 / K1, q));
            dx[0] = J0 - flux;
            dx[1] = 2.0 * flux - k2 * s2 * (N - s5) - k6 * s2 * s5;
            dx[2] = k2 * s2 * (N - s5) - k3 * s3 * (A - s6);
            dx[3] = k3 * s3 * (A - s6) - k4 * s4 * s5 - kappa * (s4 - s7);
            dx[4] = k2 * s2 * (N - s5) - k4 * s4 * s5 - k6 * s2 * s5;
            dx[5] = -2.0 * flux + 2.0 * k3 * s3 * (A - s6) - k5 * s6;
            dx[6] = psi * kappa * (s4 - s7) - k * s7;
            break;
        }
        case SystemId::sm: {
            const double a = get_param(params, "a"), b = get_param(params, "b");
            dx[0] = -x[0] + a * x[1] + x[0] * x[0] * x[1];
            dx[1] = b - a * x[1] - x[0] * x[0] * x[1];
            break;
        }
        case SystemId::bt: {
            const double A = get_param(params, "A"), B = get_param(params, "B");
            const double Du = get_param(params, "Du"), Dv = get_param(params, "Dv");
            const double* U = x.data();
            const double* V = x.data() + kBtCells;
            double lapU[kBtCells], lapV[kBtCells];
            periodic_laplacian(U, lapU);
            periodic_laplacian(V, lapV);
            for (std::size_t c = 0; c < kBtCells; ++c) {
                const double uv2 = U[c] * U[c] * V[c];
                dx[c] = Du * lapU[c] + A - (B + 1.0) * U[c] + uv2;
                dx[kBtCells + c] = Dv * lapV[c] + B * U[c] - uv2;
            }
            break;
        }
    }
    return dx;
}

namespace {

GoIcRanges default_go_ranges() {
    // Substituted per-species ranges; see configs/go_ic_ranges.json.
    return {{{0.15, 1.60}, {0.19, 2.16}, {0.04, 0.20}, {0.10, 0.35}, {0.08, 0.30}, {0.14, 2.67}, {0.05, 0.10}}};
}

GoIcRanges& go_ranges_storage() {
    static GoIcRanges ranges = default_go_ranges();
    return ranges;
}

}  // namespace

const GoIcRanges& go_ic_ranges() { return go_ranges_storage(); }

void set_go_ic_ranges(GoIcRanges ranges) {
    if (ranges.species.size() != 7) throw ValidationError("go ic ranges: need exactly 7 species entries");
    go_ranges_storage() = std::move(ranges);
}

Tensor sample_ic(const SystemSpec& spec, Rng& rng) {
    Tensor x(Shape{spec.state_size});
    switch (spec.id) {
        case SystemId::sp: {
            const double third_pi = 3.14159265358979323846 / 3.0;
            x[0] = rng.uniform(-third_pi, third_pi);
            x[1] = rng.uniform(-1.0, 1.0);
            break;
        }
        case SystemId::lv:
            x[0] = rng.uniform(1.0, 3.0);
            x[1] = rng.uniform(1.0, 3.0);
            break;
        case SystemId::go: {
            const GoIcRanges& r = go_ic_ranges();
            for (std::size_t k = 0; k < 7; ++k) x[k] = rng.uniform(r.species[k].first, r.species[k].second);
            break;
        }
        case SystemId::sm:
            x[0] = rng.uniform(0.0, 3.0);
            x[1] = rng.uniform(0.0, 3.0);
            break;
        case SystemId::bt: {
            const double abar = rng.uniform(0.5, 2.0);
            const double bbar = rng.uniform(1.25, 5.0);
            for (std::size_t c = 0; c < kBtCells; ++c) x[c] = abar;
            for (std::size_t c = 0; c < kBtCells; ++c) x[kBtCells + c] = bbar / abar + 0.1 * rng.normal();
            break;
        }
    }
    return x;
}

namespace {

std::vector<double> linspace(double lo, double hi, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i)
        v[i] = n == 1 ? lo : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
}

std::vector<ParamMap> product_grid(const ParamMap& fixed, const std::string& p1,
                                   const std::vector<double>& v1, const std::string& p2,
                                   const std::vector<double>& v2) {
    std::vector<ParamMap> envs;
    for (double a : v1)
        for (double b : v2) {
            ParamMap m = fixed;
            m[p1] = a;
            m[p2] = b;
            envs.push_back(std::move(m));
        }
    return envs;
}

}  // namespace

DatasetRecipe make_recipe(SystemId id, const std::string& preset) {
    const bool desk = preset == "desk";
    const bool paper = preset == "paper";
    if (!desk && !paper && !(id == SystemId::lv && preset == "grid5"))
        throw ValidationError("unknown preset '" + preset + "' for system " + system_name(id));

    DatasetRecipe r;
    r.system = id;
    switch (id) {
        case SystemId::sp: {
            const ParamMap fixed{{"L", 1.0}};
            const std::size_t n_train_envs = paper ? 25 : 8;
            for (double g : linspace(2.0, 24.0, n_train_envs)) {
                ParamMap m = fixed;
                m["g"] = g;
                r.grid.train_envs.push_back(std::move(m));
            }
            for (double g : {10.25, 14.75}) {
                ParamMap m = fixed;
                m["g"] = g;
                r.grid.adapt_envs.push_back(std::move(m));
            }
            r.t_grid = linspace(0.0, 0.25 * 19, 20);  // dt 0.25, 20 samples
            r.n_train_trajs = 4;
            r.n_test_trajs = paper ? 32 : 4;
            r.n_adapt_trajs = 1;
            r.n_adapt_test_trajs = paper ? 32 : 4;
            break;
        }
        case SystemId::lv: {
            const ParamMap fixed{{"alpha", 0.5}, {"gamma", 0.5}};
            r.grid.train_envs = product_grid(fixed, "beta", {0.5, 0.75, 1.0}, "delta", {0.5, 0.75, 1.0});
            if (preset == "grid5")
                r.grid.adapt_envs =
                    product_grid(fixed, "beta", linspace(0.25, 1.25, 5), "delta", linspace(0.25, 1.25, 5));
            else
                r.grid.adapt_envs = product_grid(fixed, "beta", {0.625, 1.125}, "delta", {0.625, 1.125});
            r.t_grid = linspace(0.0, 10.0, 21);
            r.n_train_trajs = 4;
            r.n_test_trajs = paper ? 32 : 4;
            r.n_adapt_trajs = 1;
            r.n_adapt_test_trajs = paper ? 32 : 4;
            r.shared_ic_across_envs = true;
            break;
        }
        case SystemId::go: {
            ParamMap fixed{{"J0", 2.5}, {"k2", 6.0},   {"k3", 16.0}, {"k4", 100.0}, {"k5", 1.28}, {"k6", 12.0},
                           {"q", 4.0},  {"N", 1.0},    {"A", 4.0},   {"kappa", 13.0}, {"psi", 0.1}, {"k", 1.8}};
            r.grid.train_envs = product_grid(fixed, "k1", {100.0, 90.0, 80.0}, "K1", {1.0, 0.75, 0.5});
            r.grid.adapt_envs = product_grid(fixed, "k1", {85.0, 95.0}, "K1", {0.625, 0.875});
            r.t_grid = linspace(0.0, 1.0, 21);
            r.n_train_trajs = paper ? 32 : 4;
            r.n_test_trajs = paper ? 32 : 4;
            r.n_adapt_trajs = 1;
            r.n_adapt_test_trajs = paper ? 32 : 4;
            break;
        }
        case SystemId::sm: {
            const ParamMap fixed{{"a", 0.1}};
            const std::size_t per_band = paper ? 7 : 3;
            for (const auto& band : {std::pair{-1.0, -0.25}, std::pair{-0.1, 0.1}, std::pair{0.25, 1.0}})
                for (double b : linspace(band.first, band.second, per_band)) {
                    ParamMap m = fixed;
                    m["b"] = b;
                    r.grid.train_envs.push_back(std::move(m));
                }
            for (double b : {-1.25, -0.65, -0.05, 0.02, 0.6, 1.2}) {
                ParamMap m = fixed;
                m["b"] = b;
                r.grid.adapt_envs.push_back(std::move(m));
            }
            r.t_grid = linspace(0.0, 40.0, 11);
            r.n_train_trajs = 4;
            r.n_test_trajs = 4;
            r.n_adapt_trajs = 1;
            r.n_adapt_test_trajs = 4;
            break;
        }
        case SystemId::bt: {
            const ParamMap fixed{{"Du", 1.0}, {"Dv", 0.1}};
            if (paper) {
                r.grid.train_envs = product_grid(fixed, "A", {0.75, 1.0, 1.25}, "B", {3.25, 3.5, 3.75});
                r.grid.adapt_envs =
                    product_grid(fixed, "A", {0.875, 1.125, 1.375}, "B", {3.125, 3.375, 3.625, 3.875});
            } else {
                r.grid.train_envs = product_grid(fixed, "A", {0.75, 1.25}, "B", {3.25, 3.75});
                r.grid.adapt_envs = product_grid(fixed, "A", {0.875, 1.375}, "B", {3.125, 3.875});
            }
            r.t_grid = linspace(0.0, 9.5, 20);  // reported every 0.5, horizon 10 excluded
            r.n_train_trajs = paper ? 4 : 2;
            r.n_test_trajs = paper ? 32 : 2;
            r.n_adapt_trajs = 1;
            r.n_adapt_test_trajs = paper ? 32 : 2;
            break;
        }
    }
    return r;
}

IntegratorSpec ground_truth_solver() {
    IntegratorSpec s = IntegratorSpec::dopri5(1e-7, 1e-9);
    s.max_steps = 10'000'000;
    return s;
}

namespace {

struct GenJob {
    std::size_t env, traj;
};

void fill_split(Split& split, const SystemSpec& spec, const std::vector<ParamMap>& envs,
                std::size_t n_trajs, const std::vector<double>& t_grid, bool shared_ic,
                std::uint64_t split_seed, int jobs) {
    const std::size_t d = spec.state_size;
    split.t = t_grid;
    split.env_params = envs;
    split.X = Tensor(Shape{envs.size(), n_trajs, t_grid.size(), d});

    // Draw every initial condition up front (serially) so that parallel
    // integration cannot change the stream.
    std::vector<Tensor> ics;
    ics.reserve(envs.size() * n_trajs);
    if (shared_ic) {
        Rng rng(mix_seed(split_seed, 0x1c0));
        std::vector<Tensor> shared;
        for (std::size_t i = 0; i < n_trajs; ++i) shared.push_back(sample_ic(spec, rng));
        for (std::size_t e = 0; e < envs.size(); ++e)
            for (std::size_t i = 0; i < n_trajs; ++i) ics.push_back(shared[i]);
    } else {
        for (std::size_t e = 0; e < envs.size(); ++e) {
            Rng rng(mix_seed(split_seed, 0x1c0, e));
            for (std::size_t i = 0; i < n_trajs; ++i) ics.push_back(sample_ic(spec, rng));
        }
    }

    const IntegratorSpec solver = ground_truth_solver();
    auto run_one = [&](std::size_t e, std::size_t i) {
        auto field = [&](const Tensor& x) { return true_field(spec, envs[e], x); };
        std::vector<Tensor> traj;
        try {
            traj = integrate(field, ics[e * n_trajs + i], t_grid, solver);
        } catch (const NumericError& err) {
            throw NumericError("dataset generation failed for env " + std::to_string(e) + " traj " +
                               std::to_string(i) + ": " + err.what());
        }
        Tensor flat(Shape{t_grid.size(), d});
        for (std::size_t n = 0; n < traj.size(); ++n)
            std::copy(traj[n].data(), traj[n].data() + d, flat.data() + n * d);
        split.set_trajectory(e, i, flat);
    };

    std::vector<GenJob> work;
    for (std::size_t e = 0; e < envs.size(); ++e)
        for (std::size_t i = 0; i < n_trajs; ++i) work.push_back({e, i});

    if (jobs <= 1 || work.size() < 2) {
        for (const GenJob& j : work) run_one(j.env, j.traj);
        return;
    }
    const std::size_t n_threads = std::min<std::size_t>(static_cast<std::size_t>(jobs), work.size());
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex err_mutex;
    for (std::size_t w = 0; w < n_threads; ++w)
        pool.emplace_back([&, w] {
            for (std::size_t k = w; k < work.size(); k += n_threads) {
                try {
                    run_one(work[k].env, work[k].traj);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) first_error = std::current_exception();
                    return;
                }
            }
        });
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

TrajectoryDataset generate_dataset(const DatasetRecipe& recipe, std::uint64_t seed, int jobs) {
    const SystemSpec& spec = system_spec(recipe.system);
    if (recipe.grid.train_envs.empty()) throw ValidationError("generate_dataset: empty environment grid");
    TrajectoryDataset ds;
    ds.system = system_name(recipe.system);
    ds.seed = seed;
    ds.generator_solver = ground_truth_solver();
    fill_split(ds.train, spec, recipe.grid.train_envs, recipe.n_train_trajs, recipe.t_grid,
               recipe.shared_ic_across_envs, mix_seed(seed, 1), jobs);
    fill_split(ds.test, spec, recipe.grid.train_envs, recipe.n_test_trajs, recipe.t_grid,
               recipe.shared_ic_across_envs, mix_seed(seed, 2), jobs);
    fill_split(ds.ood_train, spec, recipe.grid.adapt_envs, recipe.n_adapt_trajs, recipe.t_grid,
               recipe.shared_ic_across_envs, mix_seed(seed, 3), jobs);
    fill_split(ds.ood_test, spec, recipe.grid.adapt_envs, recipe.n_adapt_test_trajs, recipe.t_grid,
               recipe.shared_ic_across_envs, mix_seed(seed, 4), jobs);
    return ds;
}

Tensor add_gaussian_noise(const Tensor& x, double eta, Rng& rng) {
    Tensor out = x;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += eta * rng.normal();
    return out;
}

}  // namespace ncf
