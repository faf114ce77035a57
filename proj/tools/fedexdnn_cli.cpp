// Experiment driver: single-device runs, federated runs, and loss-term
// ablations, all driven by a JSON config plus a few overrides.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fedexdnn/config.hpp"

namespace fs = std::filesystem;
using namespace fedexdnn;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir;
    std::optional<std::size_t> parallel_clients;
    std::optional<double> contaminate;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "experiment config (JSON)")->required();
    cmd->add_option("--seed", opts.seed, "override the master seed");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--parallel-clients", opts.parallel_clients,
                    "train up to N clients concurrently");
    cmd->add_option("--contaminate", opts.contaminate,
                    "anomaly fraction injected into synthetic training data");
}

ExperimentConfig load_with_overrides(const CommonOpts& opts) {
    ExperimentConfig cfg = load_config_file(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.parallel_clients) cfg.parallel_clients = *opts.parallel_clients;
    if (opts.contaminate) {
        if (cfg.data.kind != DataKind::Synthetic)
            throw ContractError("--contaminate only applies to synthetic datasets");
        if (*opts.contaminate < 0.0 || *opts.contaminate >= 0.5)
            throw ContractError("--contaminate must be in [0, 0.5)");
        cfg.data.synth.train_anomaly_fraction = *opts.contaminate;
    }
    return cfg;
}

std::string timestamp_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    return buf;
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) throw NumericError("cannot write " + path.string());
    out << content;
}

// Runs one experiment and writes round_NNN.json, summary.csv and
// manifest.json into dir. Returns the reports for cross-run summaries.
std::vector<RoundReport> run_into(const ExperimentConfig& cfg, const fs::path& dir,
                                  const std::string& command) {
    fs::create_directories(dir);
    const std::string hash = config_hash(cfg);

    nlohmann::json manifest;
    manifest["command"] = command;
    manifest["config"] = config_to_json(cfg);
    manifest["config_hash"] = hash;
    manifest["out_dir"] = dir.string();
    manifest["created_at"] = timestamp_now();
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");

    ExperimentResult result = run_experiment(cfg, hash);
    for (const RoundReport& r : result.reports) {
        char name[32];
        std::snprintf(name, sizeof(name), "round_%03zu.json", r.round);
        write_file(dir / name, report_to_json(r).dump(2) + "\n");
    }
    write_file(dir / "summary.csv", summary_csv(result.reports));
    return result.reports;
}

fs::path default_out(const std::string& command, const ExperimentConfig& cfg) {
    return fs::path("runs") / (command + "_" + config_hash(cfg).substr(0, 8));
}

int cmd_local(const CommonOpts& opts, const std::vector<std::size_t>& exemplar_sweep) {
    ExperimentConfig cfg = load_with_overrides(opts);
    cfg.clients = 1;
    cfg.rounds = 1;
    cfg.aggregator = Aggregator::FedAvgEx;  // identity aggregation for one device
    cfg.data.partition.scheme = PartitionScheme::Sequential;

    const fs::path root = opts.out_dir.empty() ? default_out("local", cfg) : fs::path(opts.out_dir);
    if (exemplar_sweep.empty()) {
        std::vector<RoundReport> reports = run_into(cfg, root, "local");
        std::cout << "local run: auc=" << reports.back().auc << " (reports in " << root.string()
                  << ")\n";
        return 0;
    }

    std::vector<RoundReport> finals;
    for (std::size_t k : exemplar_sweep) {
        ExperimentConfig variant = cfg;
        variant.exemplars = k;
        const fs::path dir = root / ("K" + std::to_string(k));
        std::vector<RoundReport> reports = run_into(variant, dir, "local");
        std::cout << "exemplars=" << k << " auc=" << reports.back().auc << "\n";
        finals.push_back(reports.back());
        finals.back().aggregator = "K" + std::to_string(k);  // sweep label in the summary
    }
    write_file(root / "sweep_summary.csv", summary_csv(finals));
    return 0;
}

int cmd_fed(const CommonOpts& opts, const std::string& aggregator) {
    ExperimentConfig cfg = load_with_overrides(opts);
    std::vector<Aggregator> aggs;
    if (aggregator.empty()) {
        aggs.push_back(cfg.aggregator);
    } else if (aggregator == "all") {
        aggs = {Aggregator::FedCC, Aggregator::FedAvgEx, Aggregator::KmeansEx};
    } else {
        aggs.push_back(aggregator_from_name(aggregator));
    }

    cfg.aggregator = aggs.front();
    const fs::path root = opts.out_dir.empty() ? default_out("fed", cfg) : fs::path(opts.out_dir);

    if (aggs.size() == 1) {
        std::vector<RoundReport> reports = run_into(cfg, root, "fed");
        std::cout << "fed run [" << aggregator_name(cfg.aggregator)
                  << "]: final auc=" << reports.back().auc << " (reports in " << root.string()
                  << ")\n";
        return 0;
    }

    std::vector<RoundReport> combined;
    for (Aggregator a : aggs) {
        ExperimentConfig variant = cfg;
        variant.aggregator = a;
        std::vector<RoundReport> reports = run_into(variant, root / aggregator_name(a), "fed");
        std::cout << aggregator_name(a) << ": final auc=" << reports.back().auc << "\n";
        combined.insert(combined.end(), reports.begin(), reports.end());
    }
    write_file(root / "summary.csv", summary_csv(combined));
    return 0;
}

int cmd_ablate(const CommonOpts& opts, const std::vector<std::string>& toggles) {
    ExperimentConfig cfg = load_with_overrides(opts);
    for (const std::string& t : toggles)
        if (t != "cluster" && t != "balance" && t != "absolute" && t != "drp")
            throw ContractError("unknown toggle '" + t +
                                "' (valid: cluster, balance, absolute, drp)");

    const fs::path root = opts.out_dir.empty() ? default_out("ablate", cfg) : fs::path(opts.out_dir);
    std::vector<RoundReport> finals;
    auto run_variant = [&](const std::string& name, const ExperimentConfig& variant) {
        std::vector<RoundReport> reports = run_into(variant, root / name, "ablate");
        std::cout << name << ": auc=" << reports.back().auc << "\n";
        finals.push_back(reports.back());
        finals.back().aggregator = name;
    };

    if (toggles.empty()) {
        run_variant("full", cfg);
    } else {
        for (const std::string& t : toggles) {
            ExperimentConfig variant = cfg;
            if (t == "cluster") variant.loss.cluster_weight = 0.0;
            if (t == "balance") variant.loss.balance_weight = 0.0;
            if (t == "absolute") variant.loss.absolute_weight = 0.0;
            if (t == "drp") variant.loss.drp_weight = 0.0;
            run_variant("wo_" + t, variant);
        }
    }
    write_file(root / "ablate_summary.csv", summary_csv(finals));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fed-ExDNN: federated exemplar-based anomaly detection for multivariate time series"};
    app.require_subcommand(1);

    CommonOpts local_opts, fed_opts, ablate_opts;
    std::vector<std::size_t> exemplar_sweep;
    std::string fed_aggregator;
    std::vector<std::string> toggles;

    CLI::App* local = app.add_subcommand("local", "train and evaluate a single-device detector");
    add_common(local, local_opts);
    local->add_option("--exemplars", exemplar_sweep, "exemplar counts to sweep")
        ->delimiter(',');

    CLI::App* fed = app.add_subcommand("fed", "run the federated protocol");
    add_common(fed, fed_opts);
    fed->add_option("--aggregator", fed_aggregator,
                    "fedcc, fedavg_ex, kmeans_ex, or 'all' to sweep");

    CLI::App* ablate = app.add_subcommand("ablate", "re-run with loss terms zero-weighted");
    add_common(ablate, ablate_opts);
    ablate->add_option("--toggle", toggles, "loss term to disable (repeatable)");

    try {
        app.parse(argc, argv);
        if (local->parsed()) return cmd_local(local_opts, exemplar_sweep);
        if (fed->parsed()) return cmd_fed(fed_opts, fed_aggregator);
        if (ablate->parsed()) return cmd_ablate(ablate_opts, toggles);
        return 2;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ContractError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "runtime error: " << e.what() << "\n";
        return 3;
    }
}
