#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncf/dataset.hpp"
#include "ncf/rng.hpp"
#include "ncf/tensor.hpp"

namespace ncf {

enum class SystemId { sp, lv, go, sm, bt };

SystemId system_from_name(const std::string& name);
std::string system_name(SystemId id);

struct SystemSpec {
    SystemId id;
    std::size_t state_size;
    std::vector<std::string> param_names;
    std::vector<std::string> varying;  // parameters that differ across environments
};

const SystemSpec& system_spec(SystemId id);

// Exact right-hand side of the benchmark ODE. For bt the state packs the two
// 8x8 species fields as [U(64), V(64)], row-major, with a 5-point periodic
// Laplacian (unit grid spacing).
Tensor true_field(const SystemSpec& spec, const ParamMap& params, const Tensor& x);

// One initial condition from the system's stated distribution.
Tensor sample_ic(const SystemSpec& spec, Rng& rng);

// Per-species uniform ranges for the go sampler; the defaults ship in
// configs/go_ic_ranges.json and can be overridden there.
struct GoIcRanges {
    std::vector<std::pair<double, double>> species;  // 7 (lo, hi) pairs
};
const GoIcRanges& go_ic_ranges();
void set_go_ic_ranges(GoIcRanges ranges);

struct EnvironmentGrid {
    std::vector<ParamMap> train_envs;
    std::vector<ParamMap> adapt_envs;
};

// Everything needed to generate one dataset: grid, time grid, trajectory
// counts, and the shared-initial-condition convention (lv only).
struct DatasetRecipe {
    SystemId system;
    EnvironmentGrid grid;
    std::vector<double> t_grid;
    std::size_t n_train_trajs = 4;
    std::size_t n_test_trajs = 4;
    std::size_t n_adapt_trajs = 1;
    std::size_t n_adapt_test_trajs = 4;
    bool shared_ic_across_envs = false;
};

// Presets: "desk" (scaled-down environment counts, small test splits),
// "paper" (printed grids and trajectory counts), and for lv additionally
// "grid5" (desk training grid with a 5x5 adaptation sweep).
DatasetRecipe make_recipe(SystemId id, const std::string& preset);

// Ground truth is always integrated at tight tolerances, independent of the
// solver any learner uses downstream.
IntegratorSpec ground_truth_solver();

TrajectoryDataset generate_dataset(const DatasetRecipe& recipe, std::uint64_t seed, int jobs = 1);

// Gaussian corruption utility: x + eta * N(0,1), elementwise.
Tensor add_gaussian_noise(const Tensor& x, double eta, Rng& rng);

}  // namespace ncf
