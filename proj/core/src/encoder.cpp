#include "fedexdnn/encoder.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "nlohmann/json.hpp"

namespace fedexdnn {

namespace {
using nlohmann::json;
}

void EncoderConfig::validate() const {
    if (input_dim < 1 || num_layers < 1 || hidden_dim < 1 || embed_dim < 1)
        throw ContractError("EncoderConfig: all dimensions must be >= 1");
}

std::string EncoderConfig::fingerprint() const {
    std::ostringstream os;
    os << "lstm:in=" << input_dim << ";layers=" << num_layers << ";hidden=" << hidden_dim
       << ";embed=" << embed_dim << ";bi=" << (bidirectional ? 1 : 0);
    return os.str();
}

std::size_t TensorSpec::count() const {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                           [](std::size_t a, std::size_t b) { return a * b; });
}

std::vector<TensorSpec> encoder_manifest(const EncoderConfig& cfg) {
    cfg.validate();
    const std::size_t H = cfg.hidden_dim;
    const std::size_t dirs = cfg.bidirectional ? 2 : 1;
    std::vector<TensorSpec> out;
    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        const std::size_t in = l == 0 ? cfg.input_dim : H * dirs;
        for (std::size_t d = 0; d < dirs; ++d) {
            std::string prefix = "lstm" + std::to_string(l) + (dirs == 2 ? (d == 0 ? ".fw" : ".bw") : "");
            out.push_back({prefix + ".w_ih", {4 * H, in}});
            out.push_back({prefix + ".w_hh", {4 * H, H}});
            out.push_back({prefix + ".b", {4 * H, 1}});
        }
    }
    out.push_back({"embed.w", {cfg.embed_dim, H * dirs}});
    out.push_back({"embed.b", {cfg.embed_dim, 1}});
    return out;
}

std::size_t encoder_param_count(const EncoderConfig& cfg) {
    std::size_t n = 0;
    for (const TensorSpec& s : encoder_manifest(cfg)) n += s.count();
    return n;
}

EncoderParams encoder_init(const EncoderConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    EncoderParams p;
    p.config = cfg;
    p.flat.reserve(encoder_param_count(cfg));
    for (const TensorSpec& spec : encoder_manifest(cfg)) {
        const bool is_bias = spec.name.ends_with(".b");
        const double bound = is_bias ? 0.0 : 1.0 / std::sqrt(static_cast<double>(spec.shape[1]));
        for (std::size_t i = 0; i < spec.count(); ++i)
            p.flat.push_back(is_bias ? 0.0 : rng.uniform(-bound, bound));
    }
    return p;
}

namespace {

struct LstmWeights {
    Var w_ih, w_hh, b;
};

struct EncoderGraph {
    std::vector<std::vector<LstmWeights>> layers;  // [layer][direction]
    Var embed_w, embed_b;
};

EncoderGraph slice_params(GradTape& t, Var theta, const EncoderConfig& cfg) {
    const auto manifest = encoder_manifest(cfg);
    if (t.value(theta).size() != encoder_param_count(cfg))
        throw ContractError("encoder: parameter vector length does not match config");

    EncoderGraph g;
    const std::size_t dirs = cfg.bidirectional ? 2 : 1;
    std::size_t pos = 0;
    std::size_t mi = 0;
    auto next = [&](const TensorSpec& spec) {
        Var v = t.reshape(t.slice(theta, pos, spec.count()), spec.shape);
        pos += spec.count();
        return v;
    };
    g.layers.resize(cfg.num_layers);
    for (std::size_t l = 0; l < cfg.num_layers; ++l)
        for (std::size_t d = 0; d < dirs; ++d) {
            LstmWeights w;
            w.w_ih = next(manifest[mi++]);
            w.w_hh = next(manifest[mi++]);
            w.b = next(manifest[mi++]);
            g.layers[l].push_back(w);
        }
    g.embed_w = next(manifest[mi++]);
    g.embed_b = next(manifest[mi++]);
    return g;
}

// One direction over a sequence of (in, 1) inputs; returns h_t for each step.
std::vector<Var> lstm_direction(GradTape& t, const LstmWeights& w, std::size_t hidden,
                                const std::vector<Var>& inputs, bool reversed) {
    Var h = t.constant(Tensor({hidden, 1}, 0.0));
    Var c = t.constant(Tensor({hidden, 1}, 0.0));
    std::vector<Var> hs(inputs.size());
    for (std::size_t step = 0; step < inputs.size(); ++step) {
        const std::size_t ti = reversed ? inputs.size() - 1 - step : step;
        Var gates = t.add(t.add(t.matmul(w.w_ih, inputs[ti]), t.matmul(w.w_hh, h)), w.b);
        Var gf = t.reshape(gates, {4 * hidden});
        Var i_g = t.sigmoid(t.slice(gf, 0, hidden));
        Var f_g = t.sigmoid(t.slice(gf, hidden, hidden));
        Var g_g = t.tanh_of(t.slice(gf, 2 * hidden, hidden));
        Var o_g = t.sigmoid(t.slice(gf, 3 * hidden, hidden));
        Var c_flat = t.reshape(c, {hidden});
        Var c_new = t.add(t.mul(f_g, c_flat), t.mul(i_g, g_g));
        Var h_new = t.mul(o_g, t.tanh_of(c_new));
        c = t.reshape(c_new, {hidden, 1});
        h = t.reshape(h_new, {hidden, 1});
        hs[ti] = h;
    }
    return hs;
}

Var forward_one(GradTape& t, const EncoderGraph& g, const EncoderConfig& cfg,
                const Tensor& segment) {
    if (segment.rank() != 2 || segment.rows() != cfg.input_dim)
        throw ContractError("encoder: segment feature dim does not match config");
    const std::size_t T = segment.cols();
    const std::size_t H = cfg.hidden_dim;

    std::vector<Var> inputs(T);
    for (std::size_t ti = 0; ti < T; ++ti) {
        std::vector<double> col(cfg.input_dim);
        for (std::size_t c = 0; c < cfg.input_dim; ++c) col[c] = segment.at(c, ti);
        inputs[ti] = t.constant(Tensor({cfg.input_dim, 1}, std::move(col)));
    }

    for (std::size_t l = 0; l < cfg.num_layers; ++l) {
        if (!cfg.bidirectional) {
            inputs = lstm_direction(t, g.layers[l][0], H, inputs, false);
        } else {
            std::vector<Var> fw = lstm_direction(t, g.layers[l][0], H, inputs, false);
            std::vector<Var> bw = lstm_direction(t, g.layers[l][1], H, inputs, true);
            for (std::size_t ti = 0; ti < T; ++ti)
                inputs[ti] = t.reshape(
                    t.concat(t.reshape(fw[ti], {H}), t.reshape(bw[ti], {H})), {2 * H, 1});
        }
    }

    // final hidden state(s) feed the fully connected embedding layer; the
    // backward direction's summary state is the one stored at t = 0
    Var features;
    if (!cfg.bidirectional) {
        features = inputs[T - 1];
    } else {
        Var fw_final = t.slice(t.reshape(inputs[T - 1], {2 * H}), 0, H);
        Var bw_final = t.slice(t.reshape(inputs[0], {2 * H}), H, H);
        features = t.reshape(t.concat(fw_final, bw_final), {2 * H, 1});
    }
    Var emb = t.add(t.matmul(g.embed_w, features), g.embed_b);
    return t.reshape(emb, {cfg.embed_dim});
}

}  // namespace

std::vector<Var> encoder_forward_batch(GradTape& tape, Var theta, const EncoderConfig& cfg,
                                       std::span<const Tensor> segments) {
    cfg.validate();
    EncoderGraph g = slice_params(tape, theta, cfg);
    std::vector<Var> out;
    out.reserve(segments.size());
    for (const Tensor& s : segments) out.push_back(forward_one(tape, g, cfg, s));
    return out;
}

Var encoder_forward(GradTape& tape, Var theta, const EncoderConfig& cfg, const Tensor& segment) {
    std::span<const Tensor> one(&segment, 1);
    return encoder_forward_batch(tape, theta, cfg, one)[0];
}

Tensor encoder_embed(const EncoderParams& params, const Tensor& segment) {
    GradTape t;
    Var theta = t.constant(Tensor::vec(params.flat));
    Var e = encoder_forward(t, theta, params.config, segment);
    return t.value(e);
}

std::vector<Tensor> encoder_embed_batch(const EncoderParams& params,
                                        std::span<const Tensor> segments) {
    GradTape t;
    Var theta = t.constant(Tensor::vec(params.flat));
    std::vector<Var> vars = encoder_forward_batch(t, theta, params.config, segments);
    std::vector<Tensor> out;
    out.reserve(vars.size());
    for (Var v : vars) out.push_back(t.value(v));
    return out;
}

std::string encoder_serialize(const EncoderParams& params) {
    json j;
    j["fingerprint"] = params.fingerprint();
    j["config"] = {{"input_dim", params.config.input_dim},
                   {"num_layers", params.config.num_layers},
                   {"hidden_dim", params.config.hidden_dim},
                   {"embed_dim", params.config.embed_dim},
                   {"bidirectional", params.config.bidirectional}};
    json manifest = json::array();
    for (const TensorSpec& s : encoder_manifest(params.config))
        manifest.push_back({{"name", s.name}, {"shape", s.shape}});
    j["manifest"] = manifest;
    j["values"] = params.flat;
    return j.dump(2);
}

EncoderParams encoder_deserialize(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ContractError(std::string("encoder checkpoint: invalid JSON: ") + e.what());
    }
    EncoderParams p;
    try {
        const json& c = j.at("config");
        p.config.input_dim = c.at("input_dim").get<std::size_t>();
        p.config.num_layers = c.at("num_layers").get<std::size_t>();
        p.config.hidden_dim = c.at("hidden_dim").get<std::size_t>();
        p.config.embed_dim = c.at("embed_dim").get<std::size_t>();
        p.config.bidirectional = c.at("bidirectional").get<bool>();
        p.flat = j.at("values").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ContractError(std::string("encoder checkpoint: missing field: ") + e.what());
    }
    if (j.at("fingerprint").get<std::string>() != p.config.fingerprint())
        throw ContractError("encoder checkpoint: fingerprint does not match embedded config");
    if (p.flat.size() != encoder_param_count(p.config))
        throw ContractError("encoder checkpoint: value count does not match manifest");
    return p;
}

EncoderParams encoder_deserialize(const std::string& text, const EncoderConfig& expected) {
    EncoderParams p = encoder_deserialize(text);
    if (p.fingerprint() != expected.fingerprint())
        throw ContractError("encoder checkpoint: fingerprint mismatch (have " + p.fingerprint() +
                            ", expected " + expected.fingerprint() + ")");
    return p;
}

}  // namespace fedexdnn
