#include "fedexdnn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace fedexdnn {

namespace {

using nlohmann::json;

class SectionReader {
public:
    SectionReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw ContractError("config: '" + path_ + "' must be an object");
    }

    ~SectionReader() = default;

    void finish() const {
        for (const auto& [key, _] : j_.items())
            if (!seen_.contains(key))
                throw ContractError("config: unknown field '" + path_ + "." + key + "'");
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key);
    }

    template <typename T>
    void read(const std::string& key, T& out) {
        if (!has(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw ContractError("config: field '" + path_ + "." + key + "' has the wrong type");
        }
    }

    const json* sub(const std::string& key) {
        if (!has(key)) return nullptr;
        return &j_.at(key);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_encoder(const json& j, EncoderConfig& out) {
    SectionReader r(j, "encoder");
    r.read("num_layers", out.num_layers);
    r.read("hidden_dim", out.hidden_dim);
    r.read("embed_dim", out.embed_dim);
    r.read("bidirectional", out.bidirectional);
    r.finish();
}

void read_loss(const json& j, LossConfig& out, std::size_t& exemplars) {
    SectionReader r(j, "loss");
    r.read("gamma1", out.gamma1);
    r.read("gamma2", out.gamma2);
    r.read("gamma3", out.gamma3);
    r.read("margin", out.margin);
    r.read("knn_k", out.knn_k);
    r.read("cluster_weight", out.cluster_weight);
    r.read("balance_weight", out.balance_weight);
    r.read("absolute_weight", out.absolute_weight);
    r.read("drp_weight", out.drp_weight);
    r.read("alpha", out.alpha);
    r.read("exemplars", exemplars);
    r.finish();
}

void read_train(const json& j, TrainConfig& out) {
    SectionReader r(j, "train");
    r.read("batch_size", out.batch_size);
    r.read("learning_rate", out.learning_rate);
    r.read("local_epochs", out.local_epochs);
    r.finish();
}

void read_fedcc(const json& j, FedCCConfig& out) {
    SectionReader r(j, "fedcc");
    r.read("steps", out.steps);
    r.read("batch", out.batch);
    r.read("learning_rate", out.learning_rate);
    r.read("gamma4", out.gamma4);
    r.read("gamma5", out.gamma5);
    r.read("align_k", out.align_k);
    r.read("literal_alignment_sign", out.literal_alignment_sign);
    r.read("balance_over_p", out.balance_over_p);
    r.finish();
}

void read_data(const json& j, DataConfig& out) {
    SectionReader r(j, "data");
    std::string kind = "synthetic";
    r.read("kind", kind);
    if (kind == "synthetic") out.kind = DataKind::Synthetic;
    else if (kind == "csv") out.kind = DataKind::Csv;
    else throw ContractError("config: data.kind must be 'synthetic' or 'csv'");

    r.read("modes", out.synth.modes);
    r.read("channels", out.synth.channels);
    std::size_t seg_len = out.kind == DataKind::Synthetic ? out.synth.seg_len : out.csv.seg_len;
    r.read("seg_len", seg_len);
    out.synth.seg_len = seg_len;
    out.csv.seg_len = seg_len;
    r.read("train_per_mode", out.synth.train_per_mode);
    r.read("val_per_mode", out.synth.val_per_mode);
    r.read("test_per_mode", out.synth.test_per_mode);
    r.read("noise_sigma", out.synth.noise_sigma);
    r.read("train_anomaly_fraction", out.synth.train_anomaly_fraction);
    r.read("eval_anomaly_fraction", out.synth.eval_anomaly_fraction);

    r.read("train_csv", out.csv.train_csv);
    r.read("val_csv", out.csv.val_csv);
    r.read("test_csv", out.csv.test_csv);
    r.read("label_column", out.csv.label_column);
    r.read("stride", out.csv.stride);
    r.read("normalize", out.csv.normalize);

    if (const json* p = r.sub("partition")) {
        SectionReader pr(*p, "data.partition");
        std::string scheme = "sequential";
        pr.read("scheme", scheme);
        if (scheme == "sequential") out.partition.scheme = PartitionScheme::Sequential;
        else if (scheme == "by_mode") out.partition.scheme = PartitionScheme::ByMode;
        else throw ContractError("config: data.partition.scheme must be 'sequential' or 'by_mode'");
        pr.read("modes_per_client", out.partition.modes_per_client);
        pr.read("disjoint", out.partition.disjoint);
        pr.finish();
    }
    r.finish();
}

void read_eval(const json& j, EvalConfig& out) {
    SectionReader r(j, "eval");
    r.read("auc_only", out.auc_only);
    r.finish();
}

void read_fed(const json& j, ExperimentConfig& out) {
    SectionReader r(j, "fed");
    r.read("clients", out.clients);
    r.read("rounds", out.rounds);
    std::string agg = aggregator_name(out.aggregator);
    r.read("aggregator", agg);
    out.aggregator = aggregator_from_name(agg);
    r.finish();
}

}  // namespace

ExperimentConfig config_from_json(const json& j) {
    ExperimentConfig cfg;
    SectionReader top(j, "<root>");
    top.read("seed", cfg.seed);
    top.read("parallel_clients", cfg.parallel_clients);
    std::size_t exemplars = cfg.exemplars;
    if (const json* p = top.sub("encoder")) read_encoder(*p, cfg.encoder);
    if (const json* p = top.sub("loss")) read_loss(*p, cfg.loss, exemplars);
    if (const json* p = top.sub("train")) read_train(*p, cfg.train);
    if (const json* p = top.sub("fedcc")) read_fedcc(*p, cfg.fedcc);
    if (const json* p = top.sub("data")) read_data(*p, cfg.data);
    if (const json* p = top.sub("eval")) read_eval(*p, cfg.eval);
    if (const json* p = top.sub("fed")) read_fed(*p, cfg);
    top.finish();
    cfg.exemplars = exemplars;

    // surface obvious mistakes now rather than mid-run; input_dim is derived
    // later so give validate() a plausible stand-in
    ExperimentConfig probe = cfg;
    probe.encoder.input_dim = 1;
    probe.validate();
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ContractError("config: cannot open file: " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ContractError("config: invalid JSON in " + path + ": " + e.what());
    }
    return config_from_json(j);
}

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["parallel_clients"] = cfg.parallel_clients;
    j["fed"] = {{"clients", cfg.clients},
                {"rounds", cfg.rounds},
                {"aggregator", aggregator_name(cfg.aggregator)}};
    j["encoder"] = {{"num_layers", cfg.encoder.num_layers},
                    {"hidden_dim", cfg.encoder.hidden_dim},
                    {"embed_dim", cfg.encoder.embed_dim},
                    {"bidirectional", cfg.encoder.bidirectional}};
    j["loss"] = {{"gamma1", cfg.loss.gamma1},
                 {"gamma2", cfg.loss.gamma2},
                 {"gamma3", cfg.loss.gamma3},
                 {"margin", cfg.loss.margin},
                 {"knn_k", cfg.loss.knn_k},
                 {"cluster_weight", cfg.loss.cluster_weight},
                 {"balance_weight", cfg.loss.balance_weight},
                 {"absolute_weight", cfg.loss.absolute_weight},
                 {"drp_weight", cfg.loss.drp_weight},
                 {"alpha", cfg.loss.alpha},
                 {"exemplars", cfg.exemplars}};
    j["train"] = {{"batch_size", cfg.train.batch_size},
                  {"learning_rate", cfg.train.learning_rate},
                  {"local_epochs", cfg.train.local_epochs}};
    j["fedcc"] = {{"steps", cfg.fedcc.steps},
                  {"batch", cfg.fedcc.batch},
                  {"learning_rate", cfg.fedcc.learning_rate},
                  {"gamma4", cfg.fedcc.gamma4},
                  {"gamma5", cfg.fedcc.gamma5},
                  {"align_k", cfg.fedcc.align_k},
                  {"literal_alignment_sign", cfg.fedcc.literal_alignment_sign},
                  {"balance_over_p", cfg.fedcc.balance_over_p}};
    json data;
    data["kind"] = cfg.data.kind == DataKind::Synthetic ? "synthetic" : "csv";
    if (cfg.data.kind == DataKind::Synthetic) {
        data["modes"] = cfg.data.synth.modes;
        data["channels"] = cfg.data.synth.channels;
        data["seg_len"] = cfg.data.synth.seg_len;
        data["train_per_mode"] = cfg.data.synth.train_per_mode;
        data["val_per_mode"] = cfg.data.synth.val_per_mode;
        data["test_per_mode"] = cfg.data.synth.test_per_mode;
        data["noise_sigma"] = cfg.data.synth.noise_sigma;
        data["train_anomaly_fraction"] = cfg.data.synth.train_anomaly_fraction;
        data["eval_anomaly_fraction"] = cfg.data.synth.eval_anomaly_fraction;
    } else {
        data["train_csv"] = cfg.data.csv.train_csv;
        data["val_csv"] = cfg.data.csv.val_csv;
        data["test_csv"] = cfg.data.csv.test_csv;
        data["label_column"] = cfg.data.csv.label_column;
        data["seg_len"] = cfg.data.csv.seg_len;
        data["stride"] = cfg.data.csv.stride;
        data["normalize"] = cfg.data.csv.normalize;
    }
    data["partition"] = {
        {"scheme", cfg.data.partition.scheme == PartitionScheme::Sequential ? "sequential" : "by_mode"},
        {"modes_per_client", cfg.data.partition.modes_per_client},
        {"disjoint", cfg.data.partition.disjoint}};
    j["data"] = data;
    j["eval"] = {{"auc_only", cfg.eval.auc_only}};
    return j;
}

std::string config_hash(const ExperimentConfig& cfg) {
    return fnv1a_hex(config_to_json(cfg).dump());
}

json report_to_json(const RoundReport& report) {
    json j;
    j["round"] = report.round;
    j["aggregator"] = report.aggregator;
    j["seed"] = report.seed;
    j["config_hash"] = report.config_hash;
    json clients = json::array();
    for (const ClientDiagnostics& c : report.clients) {
        json cj;
        cj["client_id"] = c.client_id;
        cj["final_loss"] = c.final_loss;
        cj["samples"] = c.samples;
        cj["local_auc"] = c.local_auc ? json(*c.local_auc) : json(nullptr);
        clients.push_back(cj);
    }
    j["clients"] = clients;
    json m;
    m["auc"] = report.auc;
    if (report.threshold_metrics) {
        m["f1"] = report.threshold_metrics->f1;
        m["precision"] = report.threshold_metrics->precision;
        m["recall"] = report.threshold_metrics->recall;
        m["threshold"] = report.threshold_metrics->threshold;
    }
    j["metrics"] = m;
    return j;
}

std::string summary_csv(const std::vector<RoundReport>& reports) {
    std::ostringstream os;
    os << "round,aggregator,auc,f1,precision,recall,threshold,seconds\n";
    os.precision(6);
    os << std::fixed;
    for (const RoundReport& r : reports) {
        os << r.round << ',' << r.aggregator << ',' << r.auc << ',';
        if (r.threshold_metrics)
            os << r.threshold_metrics->f1 << ',' << r.threshold_metrics->precision << ','
               << r.threshold_metrics->recall << ',' << r.threshold_metrics->threshold;
        else
            os << ",,,";
        os << ',' << r.wall_seconds << '\n';
    }
    return os.str();
}

}  // namespace fedexdnn
