#include "ncf/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "ncf/blob_io.hpp"

namespace ncf {

using json = nlohmann::json;

Tensor Split::trajectory(std::size_t env, std::size_t traj) const {
    const std::size_t n = n_steps(), d = state_size();
    Tensor out(Shape{n, d});
    const double* src = X.data() + ((env * n_trajs()) + traj) * n * d;
    std::copy(src, src + n * d, out.data());
    return out;
}

void Split::set_trajectory(std::size_t env, std::size_t traj, const Tensor& xs) {
    const std::size_t n = n_steps(), d = state_size();
    if (xs.size() != n * d) throw ValidationError("set_trajectory: size mismatch");
    double* dst = X.data() + ((env * n_trajs()) + traj) * n * d;
    std::copy(xs.data(), xs.data() + n * d, dst);
}

Tensor Split::initial_conditions() const {
    const std::size_t e = n_envs(), s = n_trajs(), n = n_steps(), d = state_size();
    Tensor out(Shape{e * s, d});
    for (std::size_t i = 0; i < e * s; ++i) {
        const double* src = X.data() + i * n * d;
        std::copy(src, src + d, out.data() + i * d);
    }
    return out;
}

const std::vector<std::string>& TrajectoryDataset::split_names() {
    static const std::vector<std::string> names{"train", "test", "ood_train", "ood_test"};
    return names;
}

Split& TrajectoryDataset::split(const std::string& name) {
    if (name == "train") return train;
    if (name == "test") return test;
    if (name == "ood_train") return ood_train;
    if (name == "ood_test") return ood_test;
    throw ValidationError("unknown split '" + name + "'");
}

const Split& TrajectoryDataset::split(const std::string& name) const {
    return const_cast<TrajectoryDataset*>(this)->split(name);
}

std::vector<Violation> validate(const TrajectoryDataset& ds) {
    std::vector<Violation> out;
    auto bad = [&](const std::string& split, const std::string& rule, const std::string& detail) {
        out.push_back({split, rule, detail});
    };
    std::size_t state_size = 0;
    for (const std::string& name : TrajectoryDataset::split_names()) {
        const Split& s = ds.split(name);
        if (s.X.rank() != 4) {
            bad(name, "rank", "X must be rank 4, got " + shape_str(s.X.shape()));
            continue;
        }
        if (s.n_steps() != s.t.size())
            bad(name, "steps", "X has " + std::to_string(s.n_steps()) + " steps but t has " +
                                   std::to_string(s.t.size()));
        for (std::size_t i = 1; i < s.t.size(); ++i)
            if (!(s.t[i] > s.t[i - 1])) {
                bad(name, "time_grid", "t not strictly increasing at index " + std::to_string(i));
                break;
            }
        if (s.env_params.size() != s.n_envs())
            bad(name, "env_params", "have " + std::to_string(s.env_params.size()) + " entries for " +
                                        std::to_string(s.n_envs()) + " environments");
        if (state_size == 0) state_size = s.state_size();
        if (s.state_size() != state_size)
            bad(name, "state_size", "state size differs across splits: " + std::to_string(s.state_size()) +
                                        " vs " + std::to_string(state_size));
        const double* p = s.X.data();
        for (std::size_t i = 0; i < s.X.size(); ++i) {
            if (!std::isfinite(p[i])) {
                const std::size_t d = s.state_size(), n = s.n_steps(), st = s.n_trajs();
                const std::size_t env = i / (st * n * d), traj = (i / (n * d)) % st, step = (i / d) % n,
                                  dim = i % d;
                bad(name, "finite",
                    "non-finite value at [" + std::to_string(env) + "," + std::to_string(traj) + "," +
                        std::to_string(step) + "," + std::to_string(dim) + "]");
                break;
            }
        }
    }
    auto same_envs = [&](const Split& a, const Split& b, const std::string& label) {
        if (a.env_params != b.env_params)
            bad(label, "shared_envs", "environment parameter lists differ");
    };
    same_envs(ds.train, ds.test, "train/test");
    same_envs(ds.ood_train, ds.ood_test, "ood_train/ood_test");
    return out;
}

namespace {

json spec_to_json(const IntegratorSpec& s) {
    json j;
    j["method"] = method_name(s.method);
    j["dt"] = s.dt;
    j["rtol"] = s.rtol;
    j["atol"] = s.atol;
    j["max_steps"] = s.max_steps;
    return j;
}

IntegratorSpec spec_from_json(const json& j) {
    IntegratorSpec s;
    s.method = method_from_name(j.at("method").get<std::string>());
    s.dt = j.at("dt").get<double>();
    s.rtol = j.at("rtol").get<double>();
    s.atol = j.at("atol").get<double>();
    s.max_steps = j.at("max_steps").get<int>();
    return s;
}

json blob_entry(const std::string& file, const Shape& shape, const std::vector<double>& data) {
    json j;
    j["file"] = file;
    j["shape"] = shape;
    j["crc64"] = crc64(data.data(), data.size() * sizeof(double));
    return j;
}

std::vector<double> load_blob_checked(const std::string& dir, const json& entry, const char* what) {
    const std::string file = entry.at("file").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> data = read_f64_blob(dir + "/" + file);
    if (data.size() != shape_numel(shape))
        throw ValidationError(std::string("dataset: blob size mismatch for ") + what + " '" + file + "': " +
                              std::to_string(data.size()) + " values for shape " + shape_str(shape));
    const std::uint64_t want = entry.at("crc64").get<std::uint64_t>();
    const std::uint64_t got = crc64(data.data(), data.size() * sizeof(double));
    if (want != got)
        throw ValidationError(std::string("dataset: checksum mismatch for ") + what + " '" + file + "'");
    return data;
}

}  // namespace

void save_dataset(const TrajectoryDataset& ds, const std::string& dir) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "gen-dynamics-dir-v1";
    manifest["dtype"] = "f64le";
    manifest["system"] = ds.system;
    manifest["seed"] = ds.seed;
    manifest["generator_solver"] = spec_to_json(ds.generator_solver);
    json splits;
    for (const std::string& name : TrajectoryDataset::split_names()) {
        const Split& s = ds.split(name);
        json js;
        write_f64_blob(dir + "/" + name + "_t.bin", s.t.data(), s.t.size());
        js["t"] = blob_entry(name + "_t.bin", Shape{s.t.size()}, s.t);
        write_f64_blob(dir + "/" + name + "_X.bin", s.X.data(), s.X.size());
        js["X"] = blob_entry(name + "_X.bin", s.X.shape(), s.X.vec());
        js["env_params"] = s.env_params;
        splits[name] = js;
    }
    manifest["splits"] = splits;
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

TrajectoryDataset load_dataset(const std::string& dir) {
    const json manifest = json::parse(read_text_file(dir + "/manifest.json"));
    if (manifest.at("format").get<std::string>() != "gen-dynamics-dir-v1")
        throw ValidationError("dataset: unknown format tag");
    if (manifest.at("dtype").get<std::string>() != "f64le")
        throw ValidationError("dataset: unknown dtype '" + manifest.at("dtype").get<std::string>() + "'");
    TrajectoryDataset ds;
    ds.system = manifest.at("system").get<std::string>();
    ds.seed = manifest.at("seed").get<std::uint64_t>();
    ds.generator_solver = spec_from_json(manifest.at("generator_solver"));
    for (const std::string& name : TrajectoryDataset::split_names()) {
        const json& js = manifest.at("splits").at(name);
        Split& s = ds.split(name);
        s.t = load_blob_checked(dir, js.at("t"), "t");
        const Shape x_shape = js.at("X").at("shape").get<Shape>();
        if (x_shape.size() != 4)
            throw ValidationError("dataset: X must be rank 4 in split '" + name + "'");
        s.X = Tensor(x_shape, load_blob_checked(dir, js.at("X"), "X"));
        s.env_params = js.at("env_params").get<std::vector<ParamMap>>();
    }
    return ds;
}

void export_split_csv(const Split& split, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw ValidationError("cannot open for writing: " + path);
    out << "env,traj,step,t";
    for (std::size_t k = 0; k < split.state_size(); ++k) out << ",x" << k;
    out << "\n";
    char buf[32];
    for (std::size_t e = 0; e < split.n_envs(); ++e)
        for (std::size_t i = 0; i < split.n_trajs(); ++i)
            for (std::size_t n = 0; n < split.n_steps(); ++n) {
                out << e << ',' << i << ',' << n;
                std::snprintf(buf, sizeof buf, ",%.17g", split.t[n]);
                out << buf;
                const double* row =
                    split.X.data() + (((e * split.n_trajs()) + i) * split.n_steps() + n) * split.state_size();
                for (std::size_t k = 0; k < split.state_size(); ++k) {
                    std::snprintf(buf, sizeof buf, ",%.17g", row[k]);
                    out << buf;
                }
                out << "\n";
            }
}

}  // namespace ncf
