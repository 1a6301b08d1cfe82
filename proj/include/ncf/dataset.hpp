#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ncf/odeint.hpp"
#include "ncf/tensor.hpp"

namespace ncf {

using ParamMap = std::map<std::string, double>;

// One split of the four-way train/test/ood_train/ood_test layout.
// X is [nb_envs, nb_trajs, nb_steps, state_size].
struct Split {
    std::vector<double> t;
    Tensor X;
    std::vector<ParamMap> env_params;

    std::size_t n_envs() const { return X.rank() == 4 ? X.shape()[0] : 0; }
    std::size_t n_trajs() const { return X.rank() == 4 ? X.shape()[1] : 0; }
    std::size_t n_steps() const { return X.rank() == 4 ? X.shape()[2] : 0; }
    std::size_t state_size() const { return X.rank() == 4 ? X.shape()[3] : 0; }

    // Trajectory (env, traj) as an [n_steps, state_size] tensor.
    Tensor trajectory(std::size_t env, std::size_t traj) const;
    void set_trajectory(std::size_t env, std::size_t traj, const Tensor& xs);
    // Initial conditions of all (env, traj) pairs stacked as rows, in
    // row-major (env, traj) order.
    Tensor initial_conditions() const;
};

struct TrajectoryDataset {
    std::string system;
    std::uint64_t seed = 0;
    IntegratorSpec generator_solver;  // ground-truth integrator
    Split train, test, ood_train, ood_test;

    Split& split(const std::string& name);
    const Split& split(const std::string& name) const;
    static const std::vector<std::string>& split_names();
};

struct Violation {
    std::string split;
    std::string rule;
    std::string detail;
};

std::vector<Violation> validate(const TrajectoryDataset& ds);

// On-disk format: a directory holding manifest.json plus one raw
// little-endian float64 row-major blob per array ("<split>_t.bin",
// "<split>_X.bin"), each with its CRC-64 recorded in the manifest. Two saves
// of the same dataset are byte-identical.
void save_dataset(const TrajectoryDataset& ds, const std::string& dir);
TrajectoryDataset load_dataset(const std::string& dir);

// One row per (env, traj, step): env,traj,step,t,x_0..x_{d-1}.
void export_split_csv(const Split& split, const std::string& path);

}  // namespace ncf
