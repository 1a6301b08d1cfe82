#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ncf/dataset.hpp"
#include "ncf/models.hpp"
#include "ncf/odeint.hpp"
#include "ncf/rng.hpp"
#include "ncf/tensor.hpp"

namespace ncf {

enum class PoolStrategy { random_all, nearest_first, smallest_first };

PoolStrategy pool_strategy_from_name(const std::string& name);
std::string pool_strategy_name(PoolStrategy s);

// Selects the p environment indices whose contexts serve as expansion points
// for environment e. random_all draws without replacement; nearest_first
// takes the p smallest L2 distances to xi_e (e itself qualifies at distance
// 0); smallest_first the p smallest L1 norms. Ties break toward the lowest
// index.
std::vector<std::size_t> build_pool(PoolStrategy strategy, std::size_t e, const Tensor& contexts,
                                    std::size_t p, Rng& rng);

// Supervised loss for one candidate trajectory:
//   mean squared error over (steps x dims)
//   + lambda1/d_xi * |xi_e|_1 + lambda2/d_theta * |theta|_2^2.
double inner_loss(const ThreeNetParams& net, const Tensor& xi_e, const Tensor& predicted,
                  const Tensor& truth, double lambda1, double lambda2);

struct LossBreakdown {
    double total = 0.0;
    double data = 0.0;
    double l1 = 0.0;
    double l2 = 0.0;
    double prox = 0.0;
};

struct TrainConfig {
    int taylor_order = 1;
    PoolStrategy pool_strategy = PoolStrategy::random_all;
    std::size_t pool_size = 2;
    double lambda1 = 1e-3;
    double lambda2 = 0.0;
    double lr_theta = 1e-3;
    double lr_xi = 1e-3;
    double proximal_beta = 0.0;
    int epochs = 1000;            // ordinary alternating minimization
    int outer_iterations = 100;   // proximal alternating minimization
    int inner_iterations_theta = 10;
    int inner_iterations_xi = 10;
    double rel_tol = 1e-6;  // relative loss-change stop for inner/epoch loops
    std::size_t d_xi = 2;
    std::vector<std::size_t> state_widths{32, 32};
    std::vector<std::size_t> context_widths{32, 32};
    std::vector<std::size_t> main_widths{32, 32};
    std::vector<std::size_t> baseline_widths{40, 40};
    Activation activation = Activation::swish;
    IntegratorSpec solver = IntegratorSpec::rk4(0.1);
    int validate_every = 20;
    std::uint64_t seed = 0;
    std::string algorithm = "ordinary";  // ordinary | proximal | ofa | ope
};

TrainConfig train_config_from_json_text(const std::string& text);
std::string train_config_to_json_text(const TrainConfig& cfg);

// Total training objective over a split: candidates x_hat^{e,j}_i come from
// integrating the Taylor-expanded field around each pool member's context,
// and the mean runs over (env, traj, pool member). Pools are rebuilt at every
// evaluation from pool_seed.
struct LossRequest {
    const ThreeNetParams* net = nullptr;
    const Tensor* contexts = nullptr;  // [m, d_xi]
    const Split* split = nullptr;
    int taylor_order = 1;
    PoolStrategy strategy = PoolStrategy::random_all;
    std::size_t pool_size = 1;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    IntegratorSpec solver = IntegratorSpec::rk4(0.1);
    std::uint64_t pool_seed = 0;
    // Optional proximal anchors.
    const ThreeNetParams* theta_anchor = nullptr;
    const Tensor* xi_anchor = nullptr;
    double beta = 0.0;
    bool want_grads = true;
};

struct LossResult {
    LossBreakdown value;
    std::vector<Tensor> theta_grads;  // canonical parameter order
    Tensor context_grads;             // [m, d_xi]
};

LossResult total_loss(const LossRequest& req);

struct TrainReport {
    std::vector<LossBreakdown> epoch_loss;
    std::vector<int> val_epochs;
    std::vector<double> val_mse;
    ThreeNetParams net;  // best-validation checkpoint
    Tensor contexts;     // [m, d_xi] matching the checkpoint
    double best_val = 0.0;
    int best_epoch = -1;
    int executed_epochs = 0;
    double wall_seconds = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

// NCF-t1 style: one Adam step on theta (contexts frozen), then one on the
// contexts (theta frozen), per epoch.
TrainReport train_ordinary(const TrajectoryDataset& ds, const TrainConfig& cfg);

// NCF-t2 style: alternating proximal subproblems G(theta) and H(xi), each
// minimized by Adam for a capped iteration count or until the relative loss
// change drops below rel_tol; anchors refresh every outer iteration.
TrainReport train_proximal(const TrajectoryDataset& ds, const TrainConfig& cfg);

enum class BaselineMode { ofa, ope };

struct BaselineReport {
    std::vector<BaselineParams> nets;  // one (ofa) or one per environment (ope)
    std::vector<LossBreakdown> epoch_loss;
    std::vector<double> per_env_train_mse;
    std::vector<double> per_env_test_mse;
    int executed_epochs = 0;
    double wall_seconds = 0.0;
};

// Context-free baselines. on_adapt_split trains (and evaluates) on
// ood_train/ood_test instead of train/test, which is how ope "adapts".
BaselineReport train_baseline(const TrajectoryDataset& ds, BaselineMode mode, const TrainConfig& cfg,
                              bool on_adapt_split = false);

void save_train_report(const std::string& dir, const TrainReport& report, const TrainConfig& cfg);

}  // namespace ncf
