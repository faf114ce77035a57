#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fedexdnn/client.hpp"
#include "fedexdnn/data.hpp"
#include "fedexdnn/eval.hpp"
#include "fedexdnn/fedserver.hpp"

namespace fedexdnn {

enum class Aggregator { FedCC, FedAvgEx, KmeansEx };

std::string aggregator_name(Aggregator a);
Aggregator aggregator_from_name(const std::string& name);

enum class PartitionScheme { Sequential, ByMode };

struct PartitionConfig {
    PartitionScheme scheme = PartitionScheme::Sequential;
    std::size_t modes_per_client = 1;
    bool disjoint = false;
};

struct SyntheticSpec {
    std::size_t modes = 4;
    std::size_t channels = 3;
    std::size_t seg_len = 16;
    std::size_t train_per_mode = 128;
    std::size_t val_per_mode = 16;
    std::size_t test_per_mode = 32;
    double noise_sigma = 0.05;
    double train_anomaly_fraction = 0.0;  // contamination
    double eval_anomaly_fraction = 0.25;
};

struct CsvSpec {
    std::string train_csv;
    std::string val_csv;   // optional
    std::string test_csv;  // optional
    std::string label_column;  // optional
    std::size_t seg_len = 100;
    std::size_t stride = 1;
    bool normalize = true;
};

enum class DataKind { Synthetic, Csv };

struct DataConfig {
    DataKind kind = DataKind::Synthetic;
    SyntheticSpec synth;
    CsvSpec csv;
    PartitionConfig partition;
};

struct EvalConfig {
    bool auc_only = false;
};

struct ExperimentConfig {
    std::size_t clients = 1;
    std::size_t rounds = 5;
    Aggregator aggregator = Aggregator::FedCC;
    std::size_t exemplars = 8;
    std::size_t parallel_clients = 1;
    std::uint64_t seed = 42;

    EncoderConfig encoder;  // input_dim is derived from the data
    LossConfig loss;
    TrainConfig train;
    FedCCConfig fedcc;
    DataConfig data;
    EvalConfig eval;

    void validate() const;
};

struct ClientDiagnostics {
    int client_id = 0;
    double final_loss = 0.0;
    std::size_t samples = 0;
    std::optional<double> local_auc;  // local model on the client's own test shard
};

struct RoundReport {
    std::size_t round = 0;
    std::string aggregator;
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<ClientDiagnostics> clients;
    double auc = 0.0;
    std::optional<ThresholdMetrics> threshold_metrics;  // absent in auc-only mode
    double wall_seconds = 0.0;  // reported via summary.csv, not the round JSON
};

struct ExperimentState {
    ExperimentConfig cfg;
    std::string config_hash;
    std::vector<ClientShard> shards;
    GlobalModel global;
};

// Builds the dataset, partitions it, and initializes the global model.
ExperimentState prepare_experiment(const ExperimentConfig& cfg, const std::string& config_hash);

// One communication round: local training on every client, upload, exemplar
// aggregation, encoder averaging, redistribution, then evaluation of the new
// global model on the pooled labeled test data.
RoundReport run_round(ExperimentState& state, std::size_t round_idx);

struct ExperimentResult {
    std::vector<RoundReport> reports;
    GlobalModel final_model;
};

// Full protocol for cfg.rounds rounds (rounds == 0 evaluates the initial
// model only). Deterministic under cfg.seed.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& config_hash);

}  // namespace fedexdnn
