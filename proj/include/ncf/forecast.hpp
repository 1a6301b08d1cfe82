#pragma once

#include <vector>

#include "ncf/dataset.hpp"
#include "ncf/models.hpp"
#include "ncf/odeint.hpp"

namespace ncf {

// Plain-field forecasts (taylor order 0, each environment using its own
// context) for every (env, traj) row of a split, batched into one
// integration. Returns one [n_rows, d] tensor per time step; rows are
// (env, traj) in row-major order.
std::vector<Tensor> forecast_split(const ThreeNetParams& net, const Tensor& contexts, const Split& split,
                                   const IntegratorSpec& solver);

std::vector<Tensor> forecast_split(const BaselineParams& net, const Split& split,
                                   const IntegratorSpec& solver);

// Mean squared forecast error per environment (mean over trajs, steps, dims).
std::vector<double> per_env_mse(const ThreeNetParams& net, const Tensor& contexts, const Split& split,
                                const IntegratorSpec& solver);
std::vector<double> per_env_mse(const BaselineParams& net, const Split& split, const IntegratorSpec& solver);

double mean_of(const std::vector<double>& v);

}  // namespace ncf
