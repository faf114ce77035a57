#include <cmath>

#include "doctest.h"
#include "fedexdnn/encoder.hpp"

using namespace fedexdnn;

namespace {

Tensor random_segment(Rng& rng, std::size_t channels, std::size_t seg_len) {
    Tensor t({channels, seg_len});
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-1.0, 1.0);
    return t;
}

}  // namespace

TEST_CASE("init is seeded and deterministic") {
    EncoderConfig cfg{.input_dim = 3, .num_layers = 2, .hidden_dim = 4, .embed_dim = 4};
    EncoderParams a = encoder_init(cfg, 42);
    EncoderParams b = encoder_init(cfg, 42);
    EncoderParams c = encoder_init(cfg, 43);
    CHECK(a.flat == b.flat);
    CHECK(a.flat != c.flat);
}

TEST_CASE("manifest total equals the closed-form parameter count") {
    EncoderConfig cfg{.input_dim = 2, .num_layers = 4, .hidden_dim = 8, .embed_dim = 8};
    // per layer: 4H*(in + H) + 4H; embedding: d*H + d
    std::size_t h = 8, expect = 0;
    for (std::size_t l = 0; l < 4; ++l) {
        std::size_t in = l == 0 ? 2 : h;
        expect += 4 * h * (in + h) + 4 * h;
    }
    expect += 8 * h + 8;
    CHECK(encoder_param_count(cfg) == expect);
    CHECK(encoder_init(cfg, 1).flat.size() == expect);
}

TEST_CASE("zero input and zero weights give a zero embedding") {
    EncoderConfig cfg{.input_dim = 2, .num_layers = 2, .hidden_dim = 3, .embed_dim = 3};
    EncoderParams p;
    p.config = cfg;
    p.flat.assign(encoder_param_count(cfg), 0.0);
    Tensor emb = encoder_embed(p, Tensor({2, 5}, 0.0));
    for (std::size_t i = 0; i < emb.size(); ++i) CHECK(emb[i] == 0.0);
}

TEST_CASE("embedding has shape d for any segment length") {
    EncoderConfig cfg{.input_dim = 2, .num_layers = 2, .hidden_dim = 4, .embed_dim = 5};
    EncoderParams p = encoder_init(cfg, 3);
    Rng rng(8);
    for (std::size_t len : {std::size_t{1}, std::size_t{4}, std::size_t{9}}) {
        Tensor emb = encoder_embed(p, random_segment(rng, 2, len));
        CHECK(emb.shape() == std::vector<std::size_t>{5});
        CHECK(emb.all_finite());
    }
}

TEST_CASE("forward is deterministic and time-direction sensitive") {
    EncoderConfig cfg{.input_dim = 2, .num_layers = 2, .hidden_dim = 4, .embed_dim = 4};
    EncoderParams p = encoder_init(cfg, 5);
    Rng rng(21);
    Tensor seg = random_segment(rng, 2, 7);
    Tensor a = encoder_embed(p, seg);
    Tensor b = encoder_embed(p, seg);
    CHECK(a.values() == b.values());

    Tensor rev({2, 7});
    for (std::size_t c = 0; c < 2; ++c)
        for (std::size_t t = 0; t < 7; ++t) rev.at(c, t) = seg.at(c, 6 - t);
    Tensor r = encoder_embed(p, rev);
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += std::abs(a[i] - r[i]);
    CHECK(diff > 1e-6);
}

TEST_CASE("dimension mismatch is rejected") {
    EncoderConfig cfg{.input_dim = 3, .num_layers = 1, .hidden_dim = 2, .embed_dim = 2};
    EncoderParams p = encoder_init(cfg, 1);
    CHECK_THROWS_AS(encoder_embed(p, Tensor({2, 4}, 0.0)), ContractError);
}

TEST_CASE("gradient through the recurrence passes finite differences") {
    Rng rng(33);
    for (std::size_t seg_len : {std::size_t{1}, std::size_t{3}, std::size_t{10}}) {
        EncoderConfig cfg{.input_dim = 2, .num_layers = 2, .hidden_dim = 3, .embed_dim = 3};
        EncoderParams p = encoder_init(cfg, 11 + seg_len);
        Tensor seg = random_segment(rng, 2, seg_len);
        auto build = [&](GradTape& t, const std::vector<Var>& params) {
            Var emb = encoder_forward(t, params[0], cfg, seg);
            return t.sum(t.mul(emb, emb));
        };
        CHECK(grad_check(build, {Tensor::vec(p.flat)}, 1e-5) <= 1e-4);
    }
}

TEST_CASE("bidirectional option: shape, sensitivity and gradient") {
    EncoderConfig cfg{.input_dim = 2, .num_layers = 2, .hidden_dim = 3, .embed_dim = 4,
                      .bidirectional = true};
    EncoderParams p = encoder_init(cfg, 9);
    Rng rng(12);
    Tensor seg = random_segment(rng, 2, 5);
    Tensor emb = encoder_embed(p, seg);
    CHECK(emb.shape() == std::vector<std::size_t>{4});

    auto build = [&](GradTape& t, const std::vector<Var>& params) {
        Var e = encoder_forward(t, params[0], cfg, seg);
        return t.sum(t.mul(e, e));
    };
    CHECK(grad_check(build, {Tensor::vec(p.flat)}, 1e-5) <= 1e-4);
}

TEST_CASE("checkpoint round-trip is value-exact") {
    EncoderConfig cfg{.input_dim = 3, .num_layers = 2, .hidden_dim = 4, .embed_dim = 4};
    EncoderParams p = encoder_init(cfg, 77);
    std::string text = encoder_serialize(p);
    EncoderParams q = encoder_deserialize(text);
    CHECK(q.flat == p.flat);  // bit-exact
    CHECK(q.fingerprint() == p.fingerprint());

    // stable manifest order: serializing twice gives identical text
    CHECK(encoder_serialize(p) == text);
}

TEST_CASE("checkpoint load rejects a mismatched config") {
    EncoderConfig cfg{.input_dim = 3, .num_layers = 2, .hidden_dim = 4, .embed_dim = 4};
    EncoderParams p = encoder_init(cfg, 1);
    std::string text = encoder_serialize(p);
    EncoderConfig other = cfg;
    other.hidden_dim = 8;
    CHECK_THROWS_AS(encoder_deserialize(text, other), ContractError);
    CHECK_NOTHROW(encoder_deserialize(text, cfg));
}
