#include "ncf/models.hpp"

#include <cmath>
#include <filesystem>

#include "json.hpp"
#include "ncf/blob_io.hpp"
#include "ncf/rng.hpp"

namespace ncf {

using json = nlohmann::json;

Activation activation_from_name(const std::string& name) {
    if (name == "swish") return Activation::swish;
    if (name == "tanh") return Activation::tanh;
    if (name == "identity") return Activation::identity;
    throw ValidationError("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
    switch (a) {
        case Activation::swish: return "swish";
        case Activation::tanh: return "tanh";
        case Activation::identity: return "identity";
    }
    return "?";
}

namespace {

MlpParams init_mlp(const std::vector<std::size_t>& dims, Activation act, bool activate_last, Rng& rng) {
    if (dims.size() < 2) throw ValidationError("mlp needs at least one layer");
    MlpParams m;
    m.act = act;
    m.activate_last = activate_last;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t fan_in = dims[l], fan_out = dims[l + 1];
        if (fan_in == 0 || fan_out == 0) throw ValidationError("mlp layer width must be positive");
        const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Tensor w(Shape{fan_in, fan_out});
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = rng.uniform(-a, a);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Tensor::zeros(Shape{fan_out}));
    }
    return m;
}

std::vector<std::size_t> chain(std::size_t in, const std::vector<std::size_t>& hidden,
                               std::size_t out = 0) {
    std::vector<std::size_t> dims{in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    if (out) dims.push_back(out);
    return dims;
}

}  // namespace

ThreeNetParams init_three_net(const ThreeNetConfig& cfg, std::uint64_t seed) {
    if (cfg.d == 0 || cfg.d_xi == 0) throw ValidationError("init_three_net: d and d_xi must be positive");
    if (cfg.state_widths.empty() || cfg.context_widths.empty())
        throw ValidationError("init_three_net: state/context nets need at least one layer");
    Rng rng(mix_seed(seed, 0x3e7));
    ThreeNetParams net;
    net.d = cfg.d;
    net.d_xi = cfg.d_xi;
    net.state_net = init_mlp(chain(cfg.d, cfg.state_widths), cfg.act, true, rng);
    net.context_net = init_mlp(chain(cfg.d_xi, cfg.context_widths), cfg.act, true, rng);
    const std::size_t h = cfg.state_widths.back() + cfg.context_widths.back();
    net.main_net = init_mlp(chain(h, cfg.main_widths, cfg.d), cfg.act, false, rng);
    return net;
}

BaselineParams init_baseline(std::size_t d, const std::vector<std::size_t>& widths, std::uint64_t seed,
                             Activation act) {
    if (widths.empty()) throw ValidationError("init_baseline: need at least one hidden width");
    Rng rng(mix_seed(seed, 0x3e7));
    BaselineParams net;
    net.d = d;
    net.state_net = init_mlp(chain(d, widths), act, true, rng);
    net.main_net = init_mlp(chain(widths.back(), widths, d), act, false, rng);
    return net;
}

Mlp<Var> lift_to_tape(Tape& tape, const MlpParams& m, bool requires_grad) {
    Mlp<Var> out;
    out.act = m.act;
    out.activate_last = m.activate_last;
    for (const Tensor& w : m.weights) out.weights.push_back(tape.leaf(w, requires_grad));
    for (const Tensor& b : m.biases) out.biases.push_back(tape.leaf(b, requires_grad));
    return out;
}

ThreeNet<Var> lift_to_tape(Tape& tape, const ThreeNetParams& net, bool requires_grad) {
    return {lift_to_tape(tape, net.state_net, requires_grad),
            lift_to_tape(tape, net.context_net, requires_grad),
            lift_to_tape(tape, net.main_net, requires_grad), net.d, net.d_xi};
}

BaselineNet<Var> lift_to_tape(Tape& tape, const BaselineParams& net, bool requires_grad) {
    return {lift_to_tape(tape, net.state_net, requires_grad),
            lift_to_tape(tape, net.main_net, requires_grad), net.d};
}

std::vector<double> flatten_params(const ThreeNetParams& net) {
    std::vector<double> flat;
    flat.reserve(param_count(net));
    for_each_param(net, [&](const Tensor& t) { flat.insert(flat.end(), t.vec().begin(), t.vec().end()); });
    return flat;
}

std::uint64_t params_hash(const ThreeNetParams& net) {
    const std::vector<double> flat = flatten_params(net);
    return crc64(flat.data(), flat.size() * sizeof(double));
}

namespace {

json mlp_manifest(const MlpParams& m) {
    json j;
    std::vector<std::size_t> dims{m.in_dim()};
    for (const Tensor& w : m.weights) dims.push_back(w.shape()[1]);
    j["dims"] = dims;
    j["activation"] = activation_name(m.act);
    j["activate_last"] = m.activate_last;
    return j;
}

MlpParams mlp_from_manifest(const json& j, const double*& cursor, const double* end) {
    MlpParams m;
    m.act = activation_from_name(j.at("activation").get<std::string>());
    m.activate_last = j.at("activate_last").get<bool>();
    const auto dims = j.at("dims").get<std::vector<std::size_t>>();
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const std::size_t n_w = dims[l] * dims[l + 1];
        if (cursor + n_w + dims[l + 1] > end) throw ValidationError("checkpoint: weight blob too short");
        Tensor w(Shape{dims[l], dims[l + 1]}, std::vector<double>(cursor, cursor + n_w));
        cursor += n_w;
        Tensor b(Shape{dims[l + 1]}, std::vector<double>(cursor, cursor + dims[l + 1]));
        cursor += dims[l + 1];
        m.weights.push_back(std::move(w));
        m.biases.push_back(std::move(b));
    }
    return m;
}

}  // namespace

void save_checkpoint(const std::string& dir, const ThreeNetParams& net, const Tensor* contexts) {
    std::filesystem::create_directories(dir);
    json manifest;
    manifest["format"] = "ncf-checkpoint-v1";
    manifest["dtype"] = "f64le";
    manifest["d"] = net.d;
    manifest["d_xi"] = net.d_xi;
    manifest["state_net"] = mlp_manifest(net.state_net);
    manifest["context_net"] = mlp_manifest(net.context_net);
    manifest["main_net"] = mlp_manifest(net.main_net);
    manifest["param_count"] = param_count(net);
    const std::vector<double> flat = flatten_params(net);
    manifest["weights_crc64"] = crc64(flat.data(), flat.size() * sizeof(double));
    write_f64_blob(dir + "/weights.bin", flat.data(), flat.size());
    if (contexts) {
        manifest["contexts_shape"] = contexts->shape();
        write_f64_blob(dir + "/contexts.bin", contexts->data(), contexts->size());
    }
    write_text_file(dir + "/manifest.json", manifest.dump(2) + "\n");
}

ThreeNetParams load_checkpoint(const std::string& dir, Tensor* contexts_out) {
    const json manifest = json::parse(read_text_file(dir + "/manifest.json"));
    if (manifest.at("format").get<std::string>() != "ncf-checkpoint-v1")
        throw ValidationError("checkpoint: unknown format tag");
    const std::vector<double> flat = read_f64_blob(dir + "/weights.bin");
    if (manifest.contains("weights_crc64") &&
        manifest.at("weights_crc64").get<std::uint64_t>() != crc64(flat.data(), flat.size() * sizeof(double)))
        throw ValidationError("checkpoint: weights.bin checksum mismatch");
    ThreeNetParams net;
    net.d = manifest.at("d").get<std::size_t>();
    net.d_xi = manifest.at("d_xi").get<std::size_t>();
    const double* cursor = flat.data();
    const double* end = flat.data() + flat.size();
    net.state_net = mlp_from_manifest(manifest.at("state_net"), cursor, end);
    net.context_net = mlp_from_manifest(manifest.at("context_net"), cursor, end);
    net.main_net = mlp_from_manifest(manifest.at("main_net"), cursor, end);
    if (cursor != end) throw ValidationError("checkpoint: weight blob longer than manifest describes");
    if (contexts_out) {
        const auto shape = manifest.at("contexts_shape").get<Shape>();
        std::vector<double> c = read_f64_blob(dir + "/contexts.bin");
        *contexts_out = Tensor(shape, std::move(c));
    }
    return net;
}

}  // namespace ncf
