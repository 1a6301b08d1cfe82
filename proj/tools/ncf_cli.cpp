// Command-line front end: dataset generation, meta-training, few-shot
// adaptation, evaluation, uncertainty estimation, parameter identification,
// and CSV exports for plotting. Every subcommand writes a run_manifest.json
// into its output directory and honors --seed (or the NCF_SEED env var).

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ncf/adapteval.hpp"
#include "ncf/blob_io.hpp"
#include "ncf/dataset.hpp"
#include "ncf/forecast.hpp"
#include "ncf/metatrain.hpp"
#include "ncf/models.hpp"
#include "ncf/systems.hpp"

#ifndef NCF_GIT_DESCRIBE
#define NCF_GIT_DESCRIBE "unknown"
#endif

namespace {

using json = nlohmann::json;

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, std::uint64_t fallback) {
    if (flag) return *flag;
    if (const char* env = std::getenv("NCF_SEED")) return std::strtoull(env, nullptr, 10);
    return fallback;
}

void write_run_manifest(const std::string& out_dir, const std::string& subcommand,
                        const std::string& config_path, const std::string& dataset_path,
                        std::uint64_t seed) {
    std::filesystem::create_directories(out_dir);
    json j;
    j["subcommand"] = subcommand;
    j["config"] = config_path;
    j["dataset"] = dataset_path;
    j["out"] = out_dir;
    j["seed"] = seed;
    j["build"] = NCF_GIT_DESCRIBE;
    ncf::write_text_file(out_dir + "/run_manifest.json", j.dump(2) + "\n");
}

ncf::TrainConfig load_train_config(const std::string& path) {
    return ncf::train_config_from_json_text(ncf::read_text_file(path));
}

// Context sets live either in a checkpoint directory (contexts.bin described
// by manifest.json) or in an adaptation output (adapted_contexts.bin with the
// shape in adapt_report.json).
ncf::Tensor load_context_set(const std::string& dir) {
    namespace fs = std::filesystem;
    if (fs::exists(dir + "/manifest.json") && fs::exists(dir + "/contexts.bin")) {
        ncf::Tensor contexts;
        ncf::load_checkpoint(dir, &contexts);
        return contexts;
    }
    if (fs::exists(dir + "/adapt_report.json")) {
        const json j = json::parse(ncf::read_text_file(dir + "/adapt_report.json"));
        const ncf::Shape shape = j.at("contexts_shape").get<ncf::Shape>();
        return ncf::Tensor(shape, ncf::read_f64_blob(dir + "/adapted_contexts.bin"));
    }
    throw ncf::ValidationError("no context set found in '" + dir +
                               "' (expected a checkpoint or an adaptation output)");
}

ncf::Tensor observed_params(const std::vector<ncf::ParamMap>& envs, const std::vector<std::string>& names) {
    ncf::Tensor out(ncf::Shape{envs.size(), names.size()});
    for (std::size_t e = 0; e < envs.size(); ++e)
        for (std::size_t c = 0; c < names.size(); ++c) out.at(e, c) = envs[e].at(names[c]);
    return out;
}

struct CsvWriter {
    std::string path;
    std::string content;
    void row(const std::string& line) { content += line + "\n"; }
    void flush() const { ncf::write_text_file(path, content); }
};

int cmd_generate(const std::string& system, const std::string& preset, const std::string& out,
                 std::optional<std::uint64_t> seed_flag, int jobs, bool export_csv,
                 const std::string& ic_ranges_path) {
    const ncf::SystemId id = ncf::system_from_name(system);
    if (!ic_ranges_path.empty()) {
        const json j = json::parse(ncf::read_text_file(ic_ranges_path));
        ncf::GoIcRanges ranges;
        for (const auto& pair : j.at("species")) ranges.species.push_back({pair.at(0), pair.at(1)});
        ncf::set_go_ic_ranges(ranges);
    }
    const std::uint64_t seed = resolve_seed(seed_flag, 0);
    const ncf::DatasetRecipe recipe = ncf::make_recipe(id, preset);
    const ncf::TrajectoryDataset ds = ncf::generate_dataset(recipe, seed, jobs);
    ncf::save_dataset(ds, out);
    write_run_manifest(out, "generate", "", "", seed);
    if (export_csv)
        for (const std::string& name : ncf::TrajectoryDataset::split_names())
            ncf::export_split_csv(ds.split(name), out + "/" + name + ".csv");
    std::cout << "system " << system << " preset " << preset << "\n";
    for (const std::string& name : ncf::TrajectoryDataset::split_names()) {
        const ncf::Split& s = ds.split(name);
        std::cout << "  " << name << ": X " << ncf::shape_str(s.X.shape()) << ", t[0.." << s.t.size()
                  << ") in [" << s.t.front() << "," << s.t.back() << "]\n";
    }
    std::cout << "  train envs:";
    for (const auto& env : ds.train.env_params) {
        std::cout << " {";
        bool first = true;
        for (const auto& kv : env) {
            const auto& varying = ncf::system_spec(id).varying;
            if (std::find(varying.begin(), varying.end(), kv.first) == varying.end()) continue;
            std::cout << (first ? "" : ",") << kv.first << "=" << kv.second;
            first = false;
        }
        std::cout << "}";
    }
    std::cout << "\n";
    return 0;
}

int cmd_train(const std::string& dataset_dir, const std::string& config_path, const std::string& out,
              std::optional<std::uint64_t> seed_flag, const std::string& algorithm_flag) {
    ncf::TrainConfig cfg = load_train_config(config_path);
    cfg.seed = resolve_seed(seed_flag, cfg.seed);
    if (!algorithm_flag.empty()) cfg.algorithm = algorithm_flag;
    const ncf::TrajectoryDataset ds = ncf::load_dataset(dataset_dir);
    {
        const auto violations = ncf::validate(ds);
        if (!violations.empty()) {
            for (const auto& v : violations)
                std::cerr << "dataset violation [" << v.split << "/" << v.rule << "]: " << v.detail << "\n";
            throw ncf::ValidationError("dataset failed validation");
        }
    }
    write_run_manifest(out, "train", config_path, dataset_dir, cfg.seed);

    if (cfg.algorithm == "ordinary" || cfg.algorithm == "proximal") {
        ncf::TrainReport report = cfg.algorithm == "proximal" ? ncf::train_proximal(ds, cfg)
                                                              : ncf::train_ordinary(ds, cfg);
        ncf::save_train_report(out, report, cfg);
        ncf::save_checkpoint(out + "/checkpoint", report.net, &report.contexts);
        std::cout << "trained " << cfg.algorithm << " for " << report.executed_epochs
                  << " epochs; best val mse " << report.best_val << "\n";
        if (report.aborted) {
            std::cerr << "training aborted: " << report.abort_reason << "\n";
            return 3;
        }
        return 0;
    }
    if (cfg.algorithm == "ofa" || cfg.algorithm == "ope") {
        const ncf::BaselineMode mode =
            cfg.algorithm == "ofa" ? ncf::BaselineMode::ofa : ncf::BaselineMode::ope;
        ncf::BaselineReport report = ncf::train_baseline(ds, mode, cfg);
        json j;
        j["algorithm"] = cfg.algorithm;
        j["epochs"] = report.executed_epochs;
        j["per_env_train_mse"] = report.per_env_train_mse;
        j["per_env_test_mse"] = report.per_env_test_mse;
        j["wall_seconds"] = report.wall_seconds;
        ncf::write_text_file(out + "/baseline_report.json", j.dump(2) + "\n");
        CsvWriter csv{out + "/loss_curve.csv", ""};
        csv.row("epoch,total,data,l1,l2,prox");
        for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
            char buf[160];
            std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g,0,0,0", i, report.epoch_loss[i].total,
                          report.epoch_loss[i].data);
            csv.row(buf);
        }
        csv.flush();
        std::cout << "trained baseline " << cfg.algorithm << "\n";
        return 0;
    }
    throw ncf::ValidationError("unknown algorithm '" + cfg.algorithm + "'");
}

int cmd_adapt(const std::string& dataset_dir, const std::string& checkpoint_dir, const std::string& out,
              std::optional<std::uint64_t> seed_flag, const std::string& mode, int iterations, double lr,
              long envs_limit, const std::string& config_path) {
    const ncf::TrajectoryDataset ds = ncf::load_dataset(dataset_dir);
    const ncf::ThreeNetParams net = ncf::load_checkpoint(checkpoint_dir);
    ncf::AdaptConfig acfg;
    if (!config_path.empty()) {
        const ncf::TrainConfig tcfg = load_train_config(config_path);
        acfg.lambda1 = tcfg.lambda1;
        acfg.lambda2 = tcfg.lambda2;
        acfg.solver = tcfg.solver;
        acfg.lr = tcfg.lr_xi;
    }
    if (iterations >= 0) acfg.iterations = iterations;
    if (lr > 0) acfg.lr = lr;
    const std::uint64_t seed = resolve_seed(seed_flag, 0);
    write_run_manifest(out, "adapt", config_path, dataset_dir, seed);

    ncf::Split adapt_split = ds.ood_train;
    if (envs_limit >= 0) {
        std::vector<std::size_t> keep;
        for (std::size_t e = 0; e < std::min<std::size_t>(adapt_split.n_envs(), envs_limit); ++e)
            keep.push_back(e);
        adapt_split.X = ncf::gather_rows(adapt_split.X, keep);
        adapt_split.env_params.resize(keep.size());
    }

    const ncf::AdaptReport report = mode == "bulk" ? ncf::adapt_bulk(net, adapt_split, acfg)
                                                   : ncf::adapt_sequential(net, adapt_split, acfg);
    ncf::save_adapt_report(out, report);
    bool any_failed = false;
    for (const std::string& err : report.env_errors)
        if (!err.empty()) {
            std::cerr << "adaptation failure: " << err << "\n";
            any_failed = true;
        }
    std::cout << "adapted " << adapt_split.n_envs() << " environments (" << mode << ")\n";
    return any_failed ? 3 : 0;
}

int cmd_eval(const std::string& dataset_dir, const std::string& checkpoint_dir,
             const std::string& contexts_dir, const std::string& split_name, const std::string& out,
             std::optional<std::uint64_t> seed_flag, const std::string& config_path) {
    if (contexts_dir.empty()) throw ncf::ValidationError("eval requires --contexts");
    const ncf::TrajectoryDataset ds = ncf::load_dataset(dataset_dir);
    const ncf::ThreeNetParams net = ncf::load_checkpoint(checkpoint_dir);
    const ncf::Tensor contexts = load_context_set(contexts_dir);
    ncf::IntegratorSpec solver = ncf::IntegratorSpec::rk4(0.1);
    if (!config_path.empty()) solver = load_train_config(config_path).solver;
    const ncf::Split& split = ds.split(split_name);
    write_run_manifest(out, "eval", config_path, dataset_dir, resolve_seed(seed_flag, 0));
    const std::vector<ncf::EnvMetrics> em = ncf::metrics(net, contexts, split, solver);
    ncf::save_eval_report(out, em, split.env_params, split_name);
    double acc = 0.0;
    for (const auto& e : em) acc += e.mse;
    std::cout << "split " << split_name << ": mean mse " << acc / std::max<std::size_t>(em.size(), 1)
              << "\n";
    return 0;
}

int cmd_uq(const std::string& dataset_dir, const std::string& checkpoint_dir, const std::string& adapted_dir,
           const std::string& split_name, const std::string& expansion, int order, const std::string& out,
           std::optional<std::uint64_t> seed_flag, const std::string& config_path) {
    const ncf::TrajectoryDataset ds = ncf::load_dataset(dataset_dir);
    ncf::Tensor train_contexts;
    const ncf::ThreeNetParams net = ncf::load_checkpoint(checkpoint_dir, &train_contexts);
    ncf::IntegratorSpec solver = ncf::IntegratorSpec::rk4(0.1);
    if (!config_path.empty()) solver = load_train_config(config_path).solver;
    const ncf::Split& split = ds.split(split_name);

    // Target contexts: training contexts for in-domain splits, adapted ones
    // for the ood splits.
    ncf::Tensor target_contexts = train_contexts;
    if (split_name == "ood_train" || split_name == "ood_test") {
        if (adapted_dir.empty()) throw ncf::ValidationError("uq on an ood split requires --adapted");
        target_contexts = load_context_set(adapted_dir);
    }
    ncf::Tensor expansion_contexts = train_contexts;
    if (expansion == "both") {
        if (adapted_dir.empty()) throw ncf::ValidationError("uq --expansion both requires --adapted");
        const ncf::Tensor adapted = load_context_set(adapted_dir);
        expansion_contexts =
            ncf::Tensor(ncf::Shape{train_contexts.shape()[0] + adapted.shape()[0], train_contexts.shape()[1]});
        std::copy(train_contexts.data(), train_contexts.data() + train_contexts.size(),
                  expansion_contexts.data());
        std::copy(adapted.data(), adapted.data() + adapted.size(),
                  expansion_contexts.data() + train_contexts.size());
    } else if (expansion != "train") {
        throw ncf::ValidationError("--expansion must be train or both");
    }

    write_run_manifest(out, "uq", config_path, dataset_dir, resolve_seed(seed_flag, 0));
    const ncf::UqSummary summary = ncf::uq_metrics(net, target_contexts, expansion_contexts, split, order, solver);
    ncf::save_uq_report(out, summary, split);
    std::cout << "rel mse " << summary.rel_mse << "% | mape " << summary.mape << "% | cl " << summary.cl
              << "%\n";
    return 0;
}

int cmd_identify(const std::string& dataset_dir, const std::string& checkpoint_dir,
                 const std::string& adapted_dir, const std::string& out,
                 std::optional<std::uint64_t> seed_flag) {
    const ncf::TrajectoryDataset ds = ncf::load_dataset(dataset_dir);
    ncf::Tensor train_contexts;
    ncf::load_checkpoint(checkpoint_dir, &train_contexts);
    const auto& varying = ncf::system_spec(ncf::system_from_name(ds.system)).varying;
    const ncf::Tensor c_train = observed_params(ds.train.env_params, varying);
    write_run_manifest(out, "identify", "", dataset_dir, resolve_seed(seed_flag, 0));

    ncf::IdentifyResult res;
    if (!adapted_dir.empty()) {
        const ncf::Tensor adapted = load_context_set(adapted_dir);
        const ncf::Tensor c_adapt = observed_params(ds.ood_train.env_params, varying);
        res = ncf::identify_linear(train_contexts, c_train, &adapted, &c_adapt);
    } else {
        res = ncf::identify_linear(train_contexts, c_train);
    }
    ncf::save_identify_report(out, res);
    std::cout << "train residual mse " << res.train_mse;
    if (std::isfinite(res.heldout_mse)) std::cout << " | heldout mse " << res.heldout_mse;
    std::cout << "\n";
    return 0;
}

int cmd_export_plots(const std::string& report_dir, const std::string& out,
                     const std::vector<std::string>& series) {
    namespace fs = std::filesystem;
    fs::create_directories(out);
    std::vector<std::string> missing;
    for (const std::string& s : series) {
        if (s == "loss") {
            if (fs::exists(report_dir + "/loss_curve.csv"))
                fs::copy_file(report_dir + "/loss_curve.csv", out + "/loss_curve.csv",
                              fs::copy_options::overwrite_existing);
            else
                missing.push_back("loss (loss_curve.csv)");
        } else if (s == "scatter") {
            const std::string ckpt = report_dir + "/checkpoint";
            if (fs::exists(ckpt + "/contexts.bin")) {
                ncf::Tensor contexts;
                ncf::load_checkpoint(ckpt, &contexts);
                CsvWriter csv{out + "/context_scatter.csv", ""};
                csv.row("env,xi1,xi2");
                for (std::size_t e = 0; e < contexts.shape()[0]; ++e) {
                    char buf[96];
                    std::snprintf(buf, sizeof buf, "%zu,%.17g,%.17g", e, contexts.at(e, 0),
                                  contexts.shape()[1] > 1 ? contexts.at(e, 1) : 0.0);
                    csv.row(buf);
                }
                csv.flush();
            } else {
                missing.push_back("scatter (checkpoint/contexts.bin)");
            }
        } else if (s == "heatmap") {
            if (fs::exists(report_dir + "/eval_report.json")) {
                const json j = json::parse(ncf::read_text_file(report_dir + "/eval_report.json"));
                CsvWriter csv{out + "/heatmap.csv", ""};
                std::vector<std::string> keys;
                if (!j.at("envs").empty() && j.at("envs")[0].contains("params"))
                    for (const auto& kv : j.at("envs")[0].at("params").items()) keys.push_back(kv.key());
                std::string header = "env";
                for (const auto& k : keys) header += "," + k;
                csv.row(header + ",mse,mape");
                for (const auto& env : j.at("envs")) {
                    char buf[64];
                    std::string line = std::to_string(env.at("env").get<std::size_t>());
                    for (const auto& k : keys) {
                        std::snprintf(buf, sizeof buf, ",%.17g", env.at("params").at(k).get<double>());
                        line += buf;
                    }
                    std::snprintf(buf, sizeof buf, ",%.17g", env.at("mse").get<double>());
                    line += buf;
                    std::snprintf(buf, sizeof buf, ",%.17g",
                                  env.value("mape", std::numeric_limits<double>::quiet_NaN()));
                    line += buf;
                    csv.row(line);
                }
                csv.flush();
            } else {
                missing.push_back("heatmap (eval_report.json)");
            }
        } else {
            throw ncf::ValidationError("unknown series '" + s + "' (expected loss|scatter|heatmap)");
        }
    }
    if (!missing.empty()) {
        for (const auto& m : missing) std::cerr << "missing series: " << m << "\n";
        return 2;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"neural context flows: meta-learning of parameter-varying neural ODEs"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    app.add_option("--seed", seed, "seed override (NCF_SEED env var also honored)");

    // generate
    auto* gen = app.add_subcommand("generate", "generate a benchmark trajectory dataset")->fallthrough();
    std::string g_system, g_preset = "desk", g_out, g_ic;
    int g_jobs = 1;
    bool g_csv = false;
    gen->add_option("--system", g_system, "sp|lv|go|sm|bt")->required();
    gen->add_option("--preset", g_preset, "desk|paper (lv also: grid5)");
    gen->add_option("--out", g_out, "output directory")->required();
    gen->add_option("--jobs", g_jobs, "parallel trajectory integrations");
    gen->add_flag("--export-csv", g_csv, "also write one CSV per split");
    gen->add_option("--ic-ranges", g_ic, "JSON file with go initial-condition ranges");

    // train
    auto* tr = app.add_subcommand("train", "meta-train on a dataset")->fallthrough();
    std::string t_ds, t_cfg, t_out, t_algo;
    tr->add_option("--dataset", t_ds)->required();
    tr->add_option("--config", t_cfg, "TrainConfig JSON")->required();
    tr->add_option("--out", t_out)->required();
    tr->add_option("--algorithm", t_algo, "override: ordinary|proximal|ofa|ope");

    // adapt
    auto* ad = app.add_subcommand("adapt", "few-shot adaptation of a trained checkpoint")->fallthrough();
    std::string a_ds, a_ckpt, a_out, a_mode = "sequential", a_cfg;
    int a_iters = -1;
    double a_lr = 0.0;
    long a_envs = -1;
    ad->add_option("--dataset", a_ds)->required();
    ad->add_option("--checkpoint", a_ckpt)->required();
    ad->add_option("--out", a_out)->required();
    ad->add_option("--mode", a_mode, "sequential|bulk");
    ad->add_option("--iterations", a_iters);
    ad->add_option("--lr", a_lr);
    ad->add_option("--envs", a_envs, "limit to the first K adaptation environments");
    ad->add_option("--config", a_cfg, "TrainConfig JSON for solver/penalty defaults");

    // eval
    auto* ev = app.add_subcommand("eval", "forecast metrics on a split")->fallthrough();
    std::string e_ds, e_ckpt, e_ctx, e_split = "test", e_out, e_cfg;
    ev->add_option("--dataset", e_ds)->required();
    ev->add_option("--checkpoint", e_ckpt)->required();
    ev->add_option("--contexts", e_ctx, "checkpoint dir or adaptation output dir");
    ev->add_option("--split", e_split, "train|test|ood_train|ood_test");
    ev->add_option("--out", e_out)->required();
    ev->add_option("--config", e_cfg);

    // uq
    auto* uq = app.add_subcommand("uq", "candidate-spread uncertainty metrics")->fallthrough();
    std::string u_ds, u_ckpt, u_adapted, u_split = "test", u_exp = "train", u_out, u_cfg;
    int u_order = 2;
    uq->add_option("--dataset", u_ds)->required();
    uq->add_option("--checkpoint", u_ckpt)->required();
    uq->add_option("--adapted", u_adapted, "adaptation output dir (targets for ood, expansion=both)");
    uq->add_option("--split", u_split);
    uq->add_option("--expansion", u_exp, "train|both");
    uq->add_option("--order", u_order, "taylor order for candidates");
    uq->add_option("--out", u_out)->required();
    uq->add_option("--config", u_cfg);

    // identify
    auto* idf = app.add_subcommand("identify", "least-squares parameter recovery from contexts")->fallthrough();
    std::string i_ds, i_ckpt, i_adapted, i_out;
    idf->add_option("--dataset", i_ds)->required();
    idf->add_option("--checkpoint", i_ckpt)->required();
    idf->add_option("--adapted", i_adapted, "adaptation output dir for a held-out fit");
    idf->add_option("--out", i_out)->required();

    // export-plots
    auto* xp = app.add_subcommand("export-plots", "CSV series for offline plotting")->fallthrough();
    std::string x_report, x_out;
    std::vector<std::string> x_series{"loss", "scatter", "heatmap"};
    xp->add_option("--report", x_report)->required();
    xp->add_option("--out", x_out)->required();
    xp->add_option("--series", x_series, "subset of loss,scatter,heatmap")->delimiter(',');

    try {
        app.parse(argc, argv);
        if (*gen) return cmd_generate(g_system, g_preset, g_out, seed, g_jobs, g_csv, g_ic);
        if (*tr) return cmd_train(t_ds, t_cfg, t_out, seed, t_algo);
        if (*ad) return cmd_adapt(a_ds, a_ckpt, a_out, seed, a_mode, a_iters, a_lr, a_envs, a_cfg);
        if (*ev) return cmd_eval(e_ds, e_ckpt, e_ctx, e_split, e_out, seed, e_cfg);
        if (*uq) return cmd_uq(u_ds, u_ckpt, u_adapted, u_split, u_exp, u_order, u_out, seed, u_cfg);
        if (*idf) return cmd_identify(i_ds, i_ckpt, i_adapted, i_out, seed);
        if (*xp) return cmd_export_plots(x_report, x_out, x_series);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    } catch (const ncf::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ncf::NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
