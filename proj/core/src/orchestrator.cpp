#include "fedexdnn/orchestrator.hpp"

#include <algorithm>
#include <chrono>
#include <thread>

namespace fedexdnn {

std::string aggregator_name(Aggregator a) {
    switch (a) {
        case Aggregator::FedCC: return "fedcc";
        case Aggregator::FedAvgEx: return "fedavg_ex";
        case Aggregator::KmeansEx: return "kmeans_ex";
    }
    return "?";
}

Aggregator aggregator_from_name(const std::string& name) {
    if (name == "fedcc") return Aggregator::FedCC;
    if (name == "fedavg_ex") return Aggregator::FedAvgEx;
    if (name == "kmeans_ex") return Aggregator::KmeansEx;
    throw ContractError("unknown aggregator '" + name +
                        "' (valid: fedcc, fedavg_ex, kmeans_ex)");
}

void ExperimentConfig::validate() const {
    if (clients < 1) throw ContractError("config: clients must be >= 1");
    if (exemplars < 1) throw ContractError("config: exemplars must be >= 1");
    if (parallel_clients < 1) throw ContractError("config: parallel_clients must be >= 1");
    encoder.validate();
    loss.validate();
    train.validate();
    fedcc.validate();
    if (data.kind == DataKind::Csv && data.csv.train_csv.empty())
        throw ContractError("config: data.train_csv is required for csv datasets");
    if (data.kind == DataKind::Synthetic) {
        if (data.synth.modes < 1) throw ContractError("config: data.modes must be >= 1");
        if (data.partition.scheme == PartitionScheme::ByMode &&
            data.partition.modes_per_client > data.synth.modes)
            throw ContractError("config: partition.modes_per_client exceeds data.modes");
    }
}

namespace {

struct BuiltData {
    std::vector<ClientShard> shards;
    std::size_t input_dim = 0;
};

BuiltData build_synthetic(const ExperimentConfig& cfg) {
    const SyntheticSpec& s = cfg.data.synth;
    SynthData train = synth_multimode(s.modes, s.channels, s.seg_len, s.train_per_mode,
                                      s.train_anomaly_fraction, s.noise_sigma,
                                      derive_seed(cfg.seed, 0xda7a, 0));
    SynthData val = synth_multimode(s.modes, s.channels, s.seg_len, s.val_per_mode,
                                    s.eval_anomaly_fraction, s.noise_sigma,
                                    derive_seed(cfg.seed, 0xda7a, 1));
    SynthData test = synth_multimode(s.modes, s.channels, s.seg_len, s.test_per_mode,
                                     s.eval_anomaly_fraction, s.noise_sigma,
                                     derive_seed(cfg.seed, 0xda7a, 2));

    BuiltData out;
    out.input_dim = s.channels;
    if (cfg.data.partition.scheme == PartitionScheme::ByMode) {
        out.shards = partition_by_mode(train.segments, train.mode_tags, cfg.clients,
                                       cfg.data.partition.modes_per_client,
                                       derive_seed(cfg.seed, 0xda7a, 3),
                                       cfg.data.partition.disjoint);
    } else {
        out.shards = partition_sequential(train.segments, cfg.clients);
    }
    attach_eval_sets(out.shards, val.segments, test.segments);
    return out;
}

BuiltData build_csv(const ExperimentConfig& cfg) {
    const CsvSpec& c = cfg.data.csv;
    std::optional<std::string> label =
        c.label_column.empty() ? std::nullopt : std::optional<std::string>(c.label_column);

    SeriesTable train_table = load_csv(c.train_csv, label);
    std::vector<Segment> train = make_windows(train_table, c.seg_len, c.stride, 0);
    std::vector<Segment> val, test;
    if (!c.val_csv.empty())
        val = make_windows(load_csv(c.val_csv, label), c.seg_len, c.stride, 1);
    if (!c.test_csv.empty())
        test = make_windows(load_csv(c.test_csv, label), c.seg_len, c.stride, 2);
    if (c.normalize) {
        std::vector<std::vector<Segment>*> others;
        if (!val.empty()) others.push_back(&val);
        if (!test.empty()) others.push_back(&test);
        normalize_fit_apply(train, others);
    }

    BuiltData out;
    out.input_dim = train_table.channels;
    out.shards = partition_sequential(train, cfg.clients);
    attach_eval_sets(out.shards, val, test);
    return out;
}

ScoredSet scored_set(const GlobalModel& model, const std::vector<Segment>& segments) {
    ScoredSet s;
    for (const Segment& seg : segments) {
        if (!seg.label) continue;
        s.scores.push_back(anomaly_score(model.encoder, model.exemplars, seg.values));
        s.labels.push_back(*seg.label);
    }
    return s;
}

bool has_both_classes(const ScoredSet& s) {
    bool a = false, b = false;
    for (int l : s.labels) (l != 0 ? a : b) = true;
    return a && b;
}

void evaluate_global(const ExperimentState& state, const GlobalModel& model, RoundReport& report) {
    std::vector<Segment> pooled_test, pooled_val;
    for (const ClientShard& sh : state.shards) {
        pooled_test.insert(pooled_test.end(), sh.test.begin(), sh.test.end());
        pooled_val.insert(pooled_val.end(), sh.val.begin(), sh.val.end());
    }
    ScoredSet test = scored_set(model, pooled_test);
    if (test.scores.empty())
        throw NumericError("evaluation: pooled test set has no labeled segments");
    if (!has_both_classes(test))
        throw NumericError("evaluation: pooled test set needs both normal and anomalous windows");

    report.auc = auc(test);
    if (state.cfg.eval.auc_only) return;

    ScoredSet val = scored_set(model, pooled_val);
    if (!val.scores.empty() && has_both_classes(val)) {
        TestMetrics m = select_then_apply(val, test);
        report.threshold_metrics = m.at_threshold;
    } else {
        report.threshold_metrics = best_f1(test);
    }
}

ExemplarSet aggregate_exemplars(const ExperimentState& state,
                                const std::vector<LocalModel>& models, std::size_t round_idx) {
    const ExperimentConfig& cfg = state.cfg;
    const std::uint64_t seed = derive_seed(cfg.seed, 0xa99, round_idx);
    switch (cfg.aggregator) {
        case Aggregator::FedAvgEx:
            return avg_exemplars(models, seed);
        case Aggregator::KmeansEx:
            return kmeans_exemplars(models, cfg.exemplars, seed);
        case Aggregator::FedCC: {
            FedCCConfig fcfg = cfg.fedcc;
            fcfg.seed = seed;  // projection net re-initialized each round
            FedCCResult res = fedcc_train(models, fcfg);
            return merge_exemplars(res.q_global, pool_exemplars(models));
        }
    }
    throw ContractError("aggregate_exemplars: unknown aggregator");
}

}  // namespace

ExperimentState prepare_experiment(const ExperimentConfig& cfg, const std::string& config_hash) {
    cfg.validate();
    ExperimentState state;
    state.cfg = cfg;
    state.config_hash = config_hash;

    BuiltData built = cfg.data.kind == DataKind::Synthetic ? build_synthetic(cfg) : build_csv(cfg);
    state.shards = std::move(built.shards);
    for (const ClientShard& sh : state.shards)
        if (sh.train.empty())
            throw NumericError("prepare_experiment: client " + std::to_string(sh.client_id) +
                               " received no training segments");

    EncoderConfig enc = cfg.encoder;
    enc.input_dim = built.input_dim;
    state.cfg.encoder = enc;
    state.global.encoder = encoder_init(enc, derive_seed(cfg.seed, 0xe2c, 0));
    state.global.exemplars =
        ExemplarSet::random_unit(cfg.exemplars, enc.embed_dim, derive_seed(cfg.seed, 0xe7e, 0));
    state.global.round = 0;
    return state;
}

RoundReport run_round(ExperimentState& state, std::size_t round_idx) {
    const auto started = std::chrono::steady_clock::now();
    const ExperimentConfig& cfg = state.cfg;

    RoundReport report;
    report.round = round_idx;
    report.aggregator = aggregator_name(cfg.aggregator);
    report.seed = cfg.seed;
    report.config_hash = state.config_hash;

    // (1) local training on each client, initialized from the global model
    std::vector<LocalModel> models(state.shards.size());
    auto train_one = [&](std::size_t l) {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(l), round_idx);
        models[l] = local_train(state.shards[l], state.global, cfg.loss, tc);
    };
    if (cfg.parallel_clients <= 1) {
        for (std::size_t l = 0; l < state.shards.size(); ++l) train_one(l);
    } else {
        for (std::size_t base = 0; base < state.shards.size(); base += cfg.parallel_clients) {
            std::vector<std::thread> pool;
            const std::size_t end = std::min(base + cfg.parallel_clients, state.shards.size());
            for (std::size_t l = base; l < end; ++l) pool.emplace_back(train_one, l);
            for (std::thread& th : pool) th.join();
        }
    }

    // (2) upload; (3) exemplar aggregation; (4) encoder averaging
    ExemplarSet global_exemplars = aggregate_exemplars(state, models, round_idx);
    EncoderParams global_encoder = fedavg_encoders(models);

    // (5) redistribute
    state.global.encoder = std::move(global_encoder);
    state.global.exemplars = std::move(global_exemplars);
    state.global.round = round_idx + 1;

    for (const LocalModel& m : models) {
        ClientDiagnostics diag;
        diag.client_id = m.client_id;
        diag.final_loss = m.final_loss;
        diag.samples = m.sample_count;
        const ClientShard& sh = state.shards[static_cast<std::size_t>(m.client_id)];
        ScoredSet local;
        for (const Segment& seg : sh.test) {
            if (!seg.label) continue;
            local.scores.push_back(anomaly_score(m.encoder, m.exemplars, seg.values));
            local.labels.push_back(*seg.label);
        }
        if (!local.scores.empty() && has_both_classes(local)) diag.local_auc = auc(local);
        report.clients.push_back(std::move(diag));
    }

    evaluate_global(state, state.global, report);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& config_hash) {
    ExperimentState state = prepare_experiment(cfg, config_hash);
    ExperimentResult out;

    if (cfg.rounds == 0) {
        const auto started = std::chrono::steady_clock::now();
        RoundReport report;
        report.round = 0;
        report.aggregator = aggregator_name(cfg.aggregator);
        report.seed = cfg.seed;
        report.config_hash = config_hash;
        evaluate_global(state, state.global, report);
        report.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        out.reports.push_back(std::move(report));
        out.final_model = state.global;
        return out;
    }

    for (std::size_t r = 0; r < cfg.rounds; ++r) {
        RoundReport report = run_round(state, r);
        log_info("round " + std::to_string(r) + " [" + report.aggregator +
                 "] auc=" + std::to_string(report.auc));
        out.reports.push_back(std::move(report));
    }
    out.final_model = state.global;
    return out;
}

}  // namespace fedexdnn
