#include "ncf/forecast.hpp"

namespace ncf {

namespace {

std::vector<double> mse_by_env(const std::vector<Tensor>& pred, const Split& split) {
    const std::size_t m = split.n_envs(), S = split.n_trajs(), N = split.n_steps(), d = split.state_size();
    std::vector<double> out(m, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const Tensor& yn = pred[n];
        for (std::size_t e = 0; e < m; ++e)
            for (std::size_t i = 0; i < S; ++i) {
                const double* truth = split.X.data() + (((e * S) + i) * N + n) * d;
                const double* hat = yn.data() + (e * S + i) * d;
                double acc = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = hat[k] - truth[k];
                    acc += diff * diff;
                }
                out[e] += acc;
            }
    }
    for (double& v : out) v /= static_cast<double>(S * N * d);
    return out;
}

}  // namespace

std::vector<Tensor> forecast_split(const ThreeNetParams& net, const Tensor& contexts, const Split& split,
                                   const IntegratorSpec& solver) {
    const std::size_t m = split.n_envs(), S = split.n_trajs();
    if (contexts.rank() != 2 || contexts.shape()[0] != m)
        throw ValidationError("forecast: contexts must be [n_envs, d_xi], got " + shape_str(contexts.shape()));
    std::vector<std::size_t> env_of_row;
    env_of_row.reserve(m * S);
    for (std::size_t e = 0; e < m; ++e)
        for (std::size_t i = 0; i < S; ++i) env_of_row.push_back(e);
    Tensor xi = gather_rows(contexts, env_of_row);
    Tensor x0 = split.initial_conditions();
    auto field = [&](const Tensor& x) { return vf_eval(net, x, xi); };
    return integrate(field, x0, split.t, solver);
}

std::vector<Tensor> forecast_split(const BaselineParams& net, const Split& split,
                                   const IntegratorSpec& solver) {
    Tensor x0 = split.initial_conditions();
    auto field = [&](const Tensor& x) { return vf_eval(net, x); };
    return integrate(field, x0, split.t, solver);
}

std::vector<double> per_env_mse(const ThreeNetParams& net, const Tensor& contexts, const Split& split,
                                const IntegratorSpec& solver) {
    return mse_by_env(forecast_split(net, contexts, split, solver), split);
}

std::vector<double> per_env_mse(const BaselineParams& net, const Split& split, const IntegratorSpec& solver) {
    return mse_by_env(forecast_split(net, split, solver), split);
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace ncf
