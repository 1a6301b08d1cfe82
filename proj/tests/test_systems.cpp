#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "ncf/systems.hpp"
#include "support.hpp"

using namespace ncf;
using testing::rel_err;

TEST_CASE("pendulum field: sin(0) = 0") {
    const SystemSpec& sp = system_spec(SystemId::sp);
    Tensor x(Shape{2}, {0.0, 0.7});
    Tensor dx = true_field(sp, {{"g", 9.81}, {"L", 1.0}}, x);
    CHECK(dx[0] == doctest::Approx(0.7));
    CHECK(dx[1] == doctest::Approx(0.0));
}

TEST_CASE("predator-prey field: direct substitution") {
    const SystemSpec& lv = system_spec(SystemId::lv);
    Tensor x(Shape{2}, {2.0, 2.0});
    Tensor dx = true_field(lv, {{"alpha", 0.5}, {"beta", 0.5}, {"gamma", 0.5}, {"delta", 0.5}}, x);
    CHECK(dx[0] == doctest::Approx(-1.0));
    CHECK(dx[1] == doctest::Approx(1.0));
}

TEST_CASE("unknown parameter name fails") {
    const SystemSpec& lv = system_spec(SystemId::lv);
    CHECK_THROWS_AS(true_field(lv, {{"alpha", 0.5}}, Tensor(Shape{2})), ValidationError);
}

TEST_CASE("reaction-diffusion field: constant fields kill diffusion; closed-form reaction") {
    const SystemSpec& bt = system_spec(SystemId::bt);
    const double A = 1.0, B = 3.5, abar = 1.3, bbar = 2.6;
    const ParamMap params{{"A", A}, {"B", B}, {"Du", 1.0}, {"Dv", 0.1}};
    Tensor x(Shape{128});
    for (std::size_t c = 0; c < 64; ++c) {
        x[c] = abar;
        x[64 + c] = bbar / abar;
    }
    Tensor dx = true_field(bt, params, x);
    // Diffusion of a constant field is zero, so only the reaction remains:
    // dU = A - (B+1) Ubar + Ubar^2 Vbar, dV = B Ubar - Ubar^2 Vbar.
    const double du = A - (B + 1.0) * abar + abar * abar * (bbar / abar);
    const double dv = B * abar - abar * abar * (bbar / abar);
    for (std::size_t c = 0; c < 64; ++c) {
        CHECK(dx[c] == doctest::Approx(du).epsilon(1e-12));
        CHECK(dx[64 + c] == doctest::Approx(dv).epsilon(1e-12));
    }
}

TEST_CASE("reaction-diffusion periodicity: cyclic shifts commute with the field") {
    const SystemSpec& bt = system_spec(SystemId::bt);
    const ParamMap params{{"A", 0.75}, {"B", 3.25}, {"Du", 1.0}, {"Dv", 0.1}};
    Rng rng(9);
    Tensor x = testing::random_tensor({128}, rng, 0.5, 2.0);

    auto shift = [](const Tensor& f, std::size_t di, std::size_t dj) {
        Tensor out(f.shape());
        for (std::size_t s = 0; s < 2; ++s)
            for (std::size_t i = 0; i < 8; ++i)
                for (std::size_t j = 0; j < 8; ++j)
                    out[s * 64 + ((i + di) % 8) * 8 + (j + dj) % 8] = f[s * 64 + i * 8 + j];
        return out;
    };
    for (auto [di, dj] : {std::pair<std::size_t, std::size_t>{1, 0}, {0, 1}, {3, 5}}) {
        Tensor lhs = true_field(bt, params, shift(x, di, dj));
        Tensor rhs = shift(true_field(bt, params, x), di, dj);
        for (std::size_t i = 0; i < 128; ++i) CHECK(std::fabs(lhs[i] - rhs[i]) < 1e-12);
    }
}

TEST_CASE("glycolysis field: seven coupled species, fixed-point balance of shared fluxes") {
    const SystemSpec& go = system_spec(SystemId::go);
    ParamMap p{{"J0", 2.5}, {"k1", 100.0}, {"k2", 6.0},    {"k3", 16.0}, {"k4", 100.0},
               {"k5", 1.28}, {"k6", 12.0},  {"K1", 0.52},  {"q", 4.0},   {"N", 1.0},
               {"A", 4.0},   {"kappa", 13.0}, {"psi", 0.1}, {"k", 1.8}};
    Rng rng(12);
    Tensor x = testing::random_tensor({7}, rng, 0.1, 1.0);
    Tensor dx = true_field(go, p, x);
    // Independent recomputation of two representative rows.
    const double flux = p["k1"] * x[0] * x[5] / (1.0 + std::pow(x[5] / p["K1"], p["q"]));
    CHECK(dx[0] == doctest::Approx(p["J0"] - flux).epsilon(1e-12));
    CHECK(dx[6] == doctest::Approx(p["psi"] * p["kappa"] * (x[3] - x[6]) - p["k"] * x[6]).epsilon(1e-12));
}

TEST_CASE("ic sampling: supports and monte-carlo means") {
    Rng rng(77);
    const SystemSpec& sp = system_spec(SystemId::sp);
    for (int i = 0; i < 200; ++i) {
        Tensor x = sample_ic(sp, rng);
        CHECK(std::fabs(x[0]) < 3.14159265 / 3.0);
        CHECK(std::fabs(x[1]) < 1.0);
    }
    const SystemSpec& lv = system_spec(SystemId::lv);
    double mx = 0.0, my = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        Tensor x = sample_ic(lv, rng);
        CHECK(x[0] >= 1.0);
        CHECK(x[0] <= 3.0);
        CHECK(x[1] >= 1.0);
        CHECK(x[1] <= 3.0);
        mx += x[0];
        my += x[1];
    }
    mx /= n;
    my /= n;
    // U(1,3): mean 2, sd sqrt(1/3); 3 standard errors
    const double se = std::sqrt(1.0 / 3.0) / std::sqrt(double(n));
    CHECK(std::fabs(mx - 2.0) < 3.0 * se);
    CHECK(std::fabs(my - 2.0) < 3.0 * se);
}

TEST_CASE("sm ic support and bt ic structure") {
    Rng rng(3);
    const SystemSpec& sm = system_spec(SystemId::sm);
    for (int i = 0; i < 100; ++i) {
        Tensor x = sample_ic(sm, rng);
        CHECK(x[0] >= 0.0);
        CHECK(x[0] <= 3.0);
    }
    const SystemSpec& bt = system_spec(SystemId::bt);
    Tensor x = sample_ic(bt, rng);
    // U is a constant field
    for (std::size_t c = 1; c < 64; ++c) CHECK(x[c] == doctest::Approx(x[0]));
    CHECK(x[0] >= 0.5);
    CHECK(x[0] <= 2.0);
}

TEST_CASE("preset grids match the published environment layouts") {
    DatasetRecipe lv_paper = make_recipe(SystemId::lv, "paper");
    CHECK(lv_paper.grid.train_envs.size() == 9);
    CHECK(lv_paper.grid.adapt_envs.size() == 4);
    CHECK(lv_paper.grid.adapt_envs[0].at("beta") == doctest::Approx(0.625));
    CHECK(lv_paper.grid.adapt_envs[3].at("delta") == doctest::Approx(1.125));
    CHECK(lv_paper.shared_ic_across_envs);

    DatasetRecipe sp_desk = make_recipe(SystemId::sp, "desk");
    CHECK(sp_desk.grid.train_envs.size() == 8);
    CHECK(sp_desk.grid.train_envs.front().at("g") == doctest::Approx(2.0));
    CHECK(sp_desk.grid.train_envs.back().at("g") == doctest::Approx(24.0));
    CHECK(sp_desk.t_grid.size() == 20);
    CHECK(sp_desk.t_grid[1] - sp_desk.t_grid[0] == doctest::Approx(0.25));

    DatasetRecipe sp_paper = make_recipe(SystemId::sp, "paper");
    CHECK(sp_paper.grid.train_envs.size() == 25);

    DatasetRecipe sm_desk = make_recipe(SystemId::sm, "desk");
    CHECK(sm_desk.grid.train_envs.size() == 9);
    CHECK(sm_desk.grid.adapt_envs.size() == 6);
    CHECK(sm_desk.t_grid.size() == 11);
    CHECK(sm_desk.t_grid.back() == doctest::Approx(40.0));

    DatasetRecipe sm_paper = make_recipe(SystemId::sm, "paper");
    CHECK(sm_paper.grid.train_envs.size() == 21);

    DatasetRecipe grid5 = make_recipe(SystemId::lv, "grid5");
    CHECK(grid5.grid.adapt_envs.size() == 25);

    CHECK_THROWS_AS(make_recipe(SystemId::sp, "nope"), ValidationError);
}

TEST_CASE("dataset generation: shape contract, determinism, shared-ic convention") {
    DatasetRecipe r = make_recipe(SystemId::sp, "desk");
    TrajectoryDataset ds = generate_dataset(r, 42);
    CHECK(ds.train.X.shape() == Shape{8, 4, 20, 2});
    CHECK(validate(ds).empty());

    TrajectoryDataset ds2 = generate_dataset(r, 42);
    CHECK(bits_equal(ds.train.X, ds2.train.X));
    CHECK(bits_equal(ds.ood_test.X, ds2.ood_test.X));
    TrajectoryDataset ds3 = generate_dataset(r, 43);
    CHECK(!bits_equal(ds.train.X, ds3.train.X));

    // lv: the same initial conditions are reused across environments within a
    // split; sp draws per-environment conditions.
    DatasetRecipe rlv = make_recipe(SystemId::lv, "desk");
    rlv.t_grid = {0.0, 0.5, 1.0};
    TrajectoryDataset lv = generate_dataset(rlv, 7);
    for (std::size_t e = 1; e < lv.train.n_envs(); ++e)
        for (std::size_t i = 0; i < lv.train.n_trajs(); ++i)
            for (std::size_t k = 0; k < 2; ++k)
                CHECK(lv.train.X[((e * 4 + i) * 3) * 2 + k] ==
                      doctest::Approx(lv.train.X[((0 * 4 + i) * 3) * 2 + k]));
    bool sp_all_equal = true;
    for (std::size_t k = 0; k < 2; ++k)
        if (ds.train.X[((1 * 4 + 0) * 20) * 2 + k] != ds.train.X[((0 * 4 + 0) * 20) * 2 + k])
            sp_all_equal = false;
    CHECK(!sp_all_equal);
}

TEST_CASE("generation is identical with --jobs parallelism") {
    DatasetRecipe r = make_recipe(SystemId::lv, "desk");
    r.t_grid = {0.0, 0.5, 1.0, 1.5};
    TrajectoryDataset serial = generate_dataset(r, 11, 1);
    TrajectoryDataset parallel = generate_dataset(r, 11, 4);
    for (const std::string& s : TrajectoryDataset::split_names())
        CHECK(bits_equal(serial.split(s).X, parallel.split(s).X));
}

TEST_CASE("generated trajectories satisfy the ode residual on a fine grid") {
    // Central differences on a fine grid must reproduce the field to ~1e-2
    // relative error at interior points.
    DatasetRecipe r = make_recipe(SystemId::lv, "desk");
    r.t_grid.clear();
    for (int i = 0; i <= 100; ++i) r.t_grid.push_back(0.04 * i);
    r.n_train_trajs = 2;
    r.n_test_trajs = 1;
    r.n_adapt_test_trajs = 1;
    TrajectoryDataset ds = generate_dataset(r, 5);
    const SystemSpec& lv = system_spec(SystemId::lv);

    double worst = 0.0;
    for (std::size_t e = 0; e < ds.train.n_envs(); ++e)
        for (std::size_t i = 0; i < ds.train.n_trajs(); ++i) {
            Tensor traj = ds.train.trajectory(e, i);
            for (std::size_t n = 1; n + 1 < ds.train.n_steps(); ++n) {
                Tensor xn(Shape{2}, {traj.at(n, 0), traj.at(n, 1)});
                Tensor f = true_field(lv, ds.train.env_params[e], xn);
                const double dt2 = ds.train.t[n + 1] - ds.train.t[n - 1];
                for (std::size_t k = 0; k < 2; ++k) {
                    const double fd = (traj.at(n + 1, k) - traj.at(n - 1, k)) / dt2;
                    worst = std::max(worst, std::fabs(fd - f[k]) / (std::fabs(f[k]) + 1.0));
                }
            }
        }
    CHECK(worst < 1e-2);
}

TEST_CASE("split disjointness: no (environment, initial condition) pair is shared across splits") {
    DatasetRecipe r = make_recipe(SystemId::sp, "desk");
    TrajectoryDataset ds = generate_dataset(r, 13);
    auto ic_of = [&](const Split& s, std::size_t e, std::size_t i) {
        return std::pair<double, double>{s.X[((e * s.n_trajs() + i) * s.n_steps()) * 2],
                                         s.X[((e * s.n_trajs() + i) * s.n_steps()) * 2 + 1]};
    };
    for (std::size_t e = 0; e < ds.train.n_envs(); ++e)
        for (std::size_t i = 0; i < ds.train.n_trajs(); ++i)
            for (std::size_t j = 0; j < ds.test.n_trajs(); ++j)
                CHECK(ic_of(ds.train, e, i) != ic_of(ds.test, e, j));
}

TEST_CASE("gaussian corruption utility perturbs at the requested scale") {
    Rng rng(1);
    Tensor x(Shape{1000}, std::vector<double>(1000, 1.0));
    Tensor noisy = add_gaussian_noise(x, 0.05, rng);
    double mean_dev = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) mean_dev += (noisy[i] - 1.0) * (noisy[i] - 1.0);
    mean_dev = std::sqrt(mean_dev / 1000.0);
    CHECK(mean_dev == doctest::Approx(0.05).epsilon(0.15));
}
