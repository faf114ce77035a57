#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fedexdnn/tensor.hpp"

namespace fedexdnn {

struct EncoderConfig {
    std::size_t input_dim = 1;
    std::size_t num_layers = 4;
    std::size_t hidden_dim = 8;
    std::size_t embed_dim = 8;
    bool bidirectional = false;

    void validate() const;
    std::string fingerprint() const;
};

struct TensorSpec {
    std::string name;
    std::vector<std::size_t> shape;
    std::size_t count() const;
};

// Ordered parameter layout for a config; order is stable across runs.
std::vector<TensorSpec> encoder_manifest(const EncoderConfig& cfg);
std::size_t encoder_param_count(const EncoderConfig& cfg);

// Flat parameter vector + the config it was shaped for. Two parameter sets
// are aggregation-compatible iff their fingerprints match.
struct EncoderParams {
    EncoderConfig config;
    std::vector<double> flat;

    std::string fingerprint() const { return config.fingerprint(); }
};

// Seeded init: weights uniform in +/- 1/sqrt(fan_in), biases zero.
EncoderParams encoder_init(const EncoderConfig& cfg, std::uint64_t seed);

// Recorded forward pass; theta is a flat parameter node shaped per the
// manifest. Segments are (input_dim, seg_len) tensors. Returns one rank-1
// embedding node per segment.
std::vector<Var> encoder_forward_batch(GradTape& tape, Var theta, const EncoderConfig& cfg,
                                       std::span<const Tensor> segments);
Var encoder_forward(GradTape& tape, Var theta, const EncoderConfig& cfg, const Tensor& segment);

// Convenience eval on a scratch tape.
Tensor encoder_embed(const EncoderParams& params, const Tensor& segment);
std::vector<Tensor> encoder_embed_batch(const EncoderParams& params,
                                        std::span<const Tensor> segments);

// Checkpoint round-trips are value-exact (shortest round-trip doubles).
std::string encoder_serialize(const EncoderParams& params);
EncoderParams encoder_deserialize(const std::string& text);
EncoderParams encoder_deserialize(const std::string& text, const EncoderConfig& expected);

}  // namespace fedexdnn
