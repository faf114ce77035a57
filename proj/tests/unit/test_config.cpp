#include "doctest.h"
#include "fedexdnn/config.hpp"

using namespace fedexdnn;
using nlohmann::json;

TEST_CASE("defaults materialize and the hash is stable") {
    ExperimentConfig cfg = config_from_json(json::object());
    CHECK(cfg.rounds == 5);
    CHECK(cfg.train.batch_size == 128);
    CHECK(cfg.train.learning_rate == doctest::Approx(0.005));
    CHECK(cfg.loss.gamma1 == doctest::Approx(2.0));
    CHECK(cfg.loss.gamma2 == doctest::Approx(10.0));
    CHECK(cfg.loss.gamma3 == doctest::Approx(10.0));
    CHECK(cfg.loss.margin == doctest::Approx(0.5));
    CHECK(cfg.loss.knn_k == 10);
    CHECK(cfg.fedcc.steps == 500);
    CHECK(cfg.fedcc.batch == 256);
    CHECK(cfg.fedcc.gamma4 == doctest::Approx(5.0));
    CHECK(cfg.encoder.num_layers == 4);
    CHECK(cfg.encoder.hidden_dim == 8);

    CHECK(config_hash(cfg) == config_hash(cfg));
    ExperimentConfig other = cfg;
    other.seed = cfg.seed + 1;
    CHECK(config_hash(other) != config_hash(cfg));
}

TEST_CASE("round-trip through json preserves the hash") {
    json j;
    j["seed"] = 9;
    j["fed"] = {{"clients", 3}, {"rounds", 2}, {"aggregator", "kmeans_ex"}};
    j["loss"] = {{"balance_weight", 5.0}, {"exemplars", 16}};
    ExperimentConfig cfg = config_from_json(j);
    CHECK(cfg.clients == 3);
    CHECK(cfg.aggregator == Aggregator::KmeansEx);
    CHECK(cfg.exemplars == 16);
    CHECK(cfg.loss.balance_weight == doctest::Approx(5.0));

    ExperimentConfig again = config_from_json(config_to_json(cfg));
    CHECK(config_hash(again) == config_hash(cfg));
}

TEST_CASE("unknown fields are rejected with their path") {
    json j;
    j["train"] = {{"batchsize", 64}};  // typo
    try {
        config_from_json(j);
        FAIL("expected a config error");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("train.batchsize") != std::string::npos);
    }
}

TEST_CASE("invalid aggregator errors enumerate the valid names") {
    json j;
    j["fed"] = {{"aggregator", "fancy"}};
    try {
        config_from_json(j);
        FAIL("expected a config error");
    } catch (const ContractError& e) {
        std::string msg = e.what();
        CHECK(msg.find("fedcc") != std::string::npos);
        CHECK(msg.find("fedavg_ex") != std::string::npos);
        CHECK(msg.find("kmeans_ex") != std::string::npos);
    }
}

TEST_CASE("csv kind requires a train path") {
    json j;
    j["data"] = {{"kind", "csv"}};
    try {
        config_from_json(j);
        FAIL("expected a config error");
    } catch (const ContractError& e) {
        CHECK(std::string(e.what()).find("train_csv") != std::string::npos);
    }
}

TEST_CASE("report json is stable and omits wall time") {
    RoundReport r;
    r.round = 3;
    r.aggregator = "fedcc";
    r.seed = 5;
    r.config_hash = "abc";
    r.auc = 0.875;
    r.threshold_metrics = ThresholdMetrics{0.8, 0.75, 0.9, 0.123};
    r.wall_seconds = 1.5;
    json j = report_to_json(r);
    CHECK(j["metrics"]["auc"] == 0.875);
    CHECK(j["metrics"]["f1"] == 0.8);
    CHECK_FALSE(j.contains("wall_seconds"));
    std::string dump = j.dump();
    r.wall_seconds = 99.0;  // timing must not leak into the bytes
    CHECK(report_to_json(r).dump() == dump);
}

TEST_CASE("summary csv carries one row per report with timing") {
    RoundReport r;
    r.round = 0;
    r.aggregator = "fedavg_ex";
    r.auc = 0.5;
    r.threshold_metrics = ThresholdMetrics{0.4, 0.3, 0.6, -0.2};
    r.wall_seconds = 2.0;
    std::string csv = summary_csv({r});
    CHECK(csv.find("round,aggregator,auc,f1,precision,recall,threshold,seconds") == 0);
    CHECK(csv.find("0,fedavg_ex,0.500000,0.400000,0.300000,0.600000,-0.200000,2.000000") !=
          std::string::npos);
}
