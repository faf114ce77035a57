#include "fedexdnn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace fedexdnn {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& cell, std::size_t row, std::size_t col) {
    const char* begin = cell.c_str();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t')) --end;
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end)
        throw ContractError("load_csv: unparsable number '" + cell + "' at row " +
                            std::to_string(row) + ", column " + std::to_string(col));
    return v;
}

}  // namespace

std::vector<TrainSegment> strip_labels(const std::vector<Segment>& segments) {
    std::vector<TrainSegment> out;
    out.reserve(segments.size());
    for (const Segment& s : segments) out.push_back(TrainSegment{s.values, s.origin});
    return out;
}

SeriesTable load_csv(const std::string& path, const std::optional<std::string>& label_column) {
    std::ifstream in(path);
    if (!in) throw ContractError("load_csv: cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw ContractError("load_csv: empty file: " + path);
    std::vector<std::string> header = split_csv_line(line);

    std::ptrdiff_t label_idx = -1;
    if (label_column) {
        auto it = std::find(header.begin(), header.end(), *label_column);
        if (it == header.end())
            throw ContractError("load_csv: label column '" + *label_column +
                                "' not found in header of " + path);
        label_idx = it - header.begin();
    }

    const std::size_t num_cols = header.size();
    const std::size_t channels = label_idx >= 0 ? num_cols - 1 : num_cols;
    if (channels == 0) throw ContractError("load_csv: no value columns in " + path);

    std::vector<double> values;
    std::vector<int> labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != num_cols)
            throw ContractError("load_csv: row " + std::to_string(row) + " has " +
                                std::to_string(cells.size()) + " columns, expected " +
                                std::to_string(num_cols));
        for (std::size_t c = 0; c < num_cols; ++c) {
            if (static_cast<std::ptrdiff_t>(c) == label_idx) {
                double v = parse_double(cells[c], row, c + 1);
                if (v != 0.0 && v != 1.0)
                    throw ContractError("load_csv: label at row " + std::to_string(row) +
                                        " must be 0 or 1");
                labels.push_back(static_cast<int>(v));
            } else {
                values.push_back(parse_double(cells[c], row, c + 1));
            }
        }
    }

    SeriesTable t;
    t.channels = channels;
    t.timesteps = values.size() / channels;
    if (t.timesteps == 0) throw ContractError("load_csv: no data rows in " + path);
    t.values = Tensor::matrix(t.timesteps, channels, std::move(values));
    if (!t.values.all_finite()) throw ContractError("load_csv: non-finite value in " + path);
    if (label_idx >= 0) t.point_labels = std::move(labels);
    return t;
}

std::vector<Segment> make_windows(const SeriesTable& table, std::size_t seg_len,
                                  std::size_t stride, int source_id) {
    if (seg_len == 0 || seg_len > table.timesteps)
        throw ContractError("make_windows: seg_len must be in [1, timesteps]");
    if (stride == 0) throw ContractError("make_windows: stride must be >= 1");

    const std::size_t count = (table.timesteps - seg_len) / stride + 1;
    std::vector<Segment> out;
    out.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
        const std::size_t start = w * stride;
        Tensor vals({table.channels, seg_len});
        for (std::size_t c = 0; c < table.channels; ++c)
            for (std::size_t t = 0; t < seg_len; ++t)
                vals[c * seg_len + t] = table.values[(start + t) * table.channels + c];
        Segment s;
        s.values = std::move(vals);
        s.origin = SegmentOrigin{source_id, start};
        if (table.point_labels) {
            int lab = 0;
            for (std::size_t t = 0; t < seg_len; ++t)
                if ((*table.point_labels)[start + t] != 0) lab = 1;
            s.label = lab;
        }
        out.push_back(std::move(s));
    }
    return out;
}

ChannelStats normalize_fit_apply(std::vector<Segment>& train,
                                 std::vector<std::vector<Segment>*> others) {
    if (train.empty()) throw ContractError("normalize_fit_apply: empty train set");
    const std::size_t channels = train[0].values.rows();
    const std::size_t seg_len = train[0].values.cols();

    ChannelStats stats;
    stats.mean.assign(channels, 0.0);
    stats.std_dev.assign(channels, 0.0);

    const double count = static_cast<double>(train.size() * seg_len);
    for (const Segment& s : train)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t t = 0; t < s.values.cols(); ++t) stats.mean[c] += s.values.at(c, t);
    for (std::size_t c = 0; c < channels; ++c) stats.mean[c] /= count;

    for (const Segment& s : train)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t t = 0; t < s.values.cols(); ++t) {
                double d = s.values.at(c, t) - stats.mean[c];
                stats.std_dev[c] += d * d;
            }
    for (std::size_t c = 0; c < channels; ++c) stats.std_dev[c] = std::sqrt(stats.std_dev[c] / count);

    auto apply = [&](std::vector<Segment>& segs) {
        for (Segment& s : segs) {
            if (s.values.rows() != channels)
                throw ContractError("normalize_fit_apply: channel count mismatch");
            for (std::size_t c = 0; c < channels; ++c) {
                const double sd = stats.std_dev[c];
                for (std::size_t t = 0; t < s.values.cols(); ++t) {
                    double v = s.values.at(c, t) - stats.mean[c];
                    s.values.at(c, t) = sd < 1e-12 ? v : v / sd;
                }
            }
        }
    };
    apply(train);
    for (auto* o : others)
        if (o != nullptr) apply(*o);
    return stats;
}

std::vector<ClientShard> partition_sequential(const std::vector<Segment>& segments,
                                              std::size_t num_clients) {
    if (num_clients == 0) throw ContractError("partition_sequential: need at least one client");
    if (num_clients > segments.size())
        throw ContractError("partition_sequential: more clients than segments");

    std::vector<ClientShard> shards(num_clients);
    const std::size_t base = segments.size() / num_clients;
    const std::size_t rem = segments.size() % num_clients;
    std::size_t pos = 0;
    for (std::size_t l = 0; l < num_clients; ++l) {
        shards[l].client_id = static_cast<int>(l);
        const std::size_t take = base + (l < rem ? 1 : 0);
        std::vector<Segment> chunk(segments.begin() + static_cast<std::ptrdiff_t>(pos),
                                   segments.begin() + static_cast<std::ptrdiff_t>(pos + take));
        shards[l].train = strip_labels(chunk);
        pos += take;
    }
    return shards;
}

std::vector<ClientShard> partition_by_mode(const std::vector<Segment>& segments,
                                           const std::vector<int>& mode_tags,
                                           std::size_t num_clients,
                                           std::size_t modes_per_client, std::uint64_t seed,
                                           bool disjoint) {
    if (num_clients == 0) throw ContractError("partition_by_mode: need at least one client");
    if (segments.size() != mode_tags.size())
        throw ContractError("partition_by_mode: mode tag count mismatch");

    std::vector<int> modes;
    for (int tag : mode_tags)
        if (tag >= 0 && std::find(modes.begin(), modes.end(), tag) == modes.end())
            modes.push_back(tag);
    std::sort(modes.begin(), modes.end());
    if (modes_per_client == 0 || modes_per_client > modes.size())
        throw ContractError("partition_by_mode: modes_per_client exceeds available modes");
    if (disjoint && modes_per_client * num_clients > modes.size())
        throw ContractError("partition_by_mode: disjoint assignment needs modes_per_client * clients <= modes");

    Rng rng(seed);
    std::vector<std::vector<int>> client_modes(num_clients);
    if (disjoint) {
        std::vector<int> pool = modes;
        rng.shuffle(pool);
        std::size_t pos = 0;
        for (std::size_t l = 0; l < num_clients; ++l)
            for (std::size_t k = 0; k < modes_per_client; ++k) client_modes[l].push_back(pool[pos++]);
    } else {
        for (std::size_t l = 0; l < num_clients; ++l) {
            auto pick = rng.sample_without_replacement(modes.size(), modes_per_client);
            for (std::size_t idx : pick) client_modes[l].push_back(modes[idx]);
        }
    }

    std::vector<ClientShard> shards(num_clients);
    for (std::size_t l = 0; l < num_clients; ++l) shards[l].client_id = static_cast<int>(l);

    // owners per mode, then deal each mode's segments round-robin among them
    std::size_t dropped = 0, anom_rr = 0;
    std::vector<std::size_t> mode_cursor(modes.empty() ? 0 : static_cast<std::size_t>(modes.back()) + 1, 0);
    for (std::size_t i = 0; i < segments.size(); ++i) {
        const int tag = mode_tags[i];
        if (tag < 0) {
            // contamination: spread anomalous training segments across all clients
            shards[anom_rr % num_clients].train.push_back(
                TrainSegment{segments[i].values, segments[i].origin});
            ++anom_rr;
            continue;
        }
        std::vector<std::size_t> owners;
        for (std::size_t l = 0; l < num_clients; ++l)
            if (std::find(client_modes[l].begin(), client_modes[l].end(), tag) !=
                client_modes[l].end())
                owners.push_back(l);
        if (owners.empty()) {
            ++dropped;
            continue;
        }
        const std::size_t who = owners[mode_cursor[static_cast<std::size_t>(tag)] % owners.size()];
        ++mode_cursor[static_cast<std::size_t>(tag)];
        shards[who].train.push_back(TrainSegment{segments[i].values, segments[i].origin});
    }
    if (dropped > 0)
        log_info("partition_by_mode: dropped " + std::to_string(dropped) +
                 " segments of unassigned modes");
    return shards;
}

void attach_eval_sets(std::vector<ClientShard>& shards, const std::vector<Segment>& val,
                      const std::vector<Segment>& test) {
    if (shards.empty()) throw ContractError("attach_eval_sets: no shards");
    for (std::size_t i = 0; i < val.size(); ++i) shards[i % shards.size()].val.push_back(val[i]);
    for (std::size_t i = 0; i < test.size(); ++i) shards[i % shards.size()].test.push_back(test[i]);
}

SynthData synth_multimode(std::size_t modes, std::size_t channels, std::size_t seg_len,
                          std::size_t n_per_mode, double anomaly_fraction, double noise_sigma,
                          std::uint64_t seed) {
    if (modes == 0) throw ContractError("synth_multimode: need at least one mode");
    if (anomaly_fraction < 0.0 || anomaly_fraction >= 0.5)
        throw ContractError("synth_multimode: anomaly_fraction must be in [0, 0.5)");

    Rng rng(seed);
    constexpr std::size_t kAnomalyFamilies = 3;

    // fixed per-(mode, channel) phases; frequency grows with the mode index
    std::vector<double> phase(modes * channels);
    for (double& p : phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
    std::vector<double> anom_phase(kAnomalyFamilies * channels);
    for (double& p : anom_phase) p = rng.uniform(0.0, 2.0 * std::numbers::pi);

    auto normal_template = [&](std::size_t mode, std::size_t c, std::size_t t) {
        double tau = static_cast<double>(t) / static_cast<double>(seg_len);
        return std::sin(2.0 * std::numbers::pi * static_cast<double>(mode + 1) * tau +
                        phase[mode * channels + c]);
    };
    // reserved family: higher-frequency square waves, disjoint from every
    // normal sinusoid
    auto anomaly_template = [&](std::size_t fam, std::size_t c, std::size_t t) {
        double tau = static_cast<double>(t) / static_cast<double>(seg_len);
        double s = std::sin(2.0 * std::numbers::pi * static_cast<double>(modes + 2 + fam) * tau +
                            anom_phase[fam * channels + c]);
        return s >= 0.0 ? 1.0 : -1.0;
    };

    const std::size_t n_normal = modes * n_per_mode;
    const std::size_t n_anom = anomaly_fraction == 0.0
        ? 0
        : static_cast<std::size_t>(std::llround(anomaly_fraction * static_cast<double>(n_normal) /
                                                (1.0 - anomaly_fraction)));

    SynthData out;
    out.segments.reserve(n_normal + n_anom);
    out.mode_tags.reserve(n_normal + n_anom);

    int next_id = 0;
    for (std::size_t mode = 0; mode < modes; ++mode) {
        for (std::size_t i = 0; i < n_per_mode; ++i) {
            Tensor vals({channels, seg_len});
            for (std::size_t c = 0; c < channels; ++c)
                for (std::size_t t = 0; t < seg_len; ++t)
                    vals[c * seg_len + t] =
                        normal_template(mode, c, t) + noise_sigma * rng.normal();
            Segment s;
            s.values = std::move(vals);
            s.label = 0;
            s.origin = SegmentOrigin{next_id++, 0};
            out.segments.push_back(std::move(s));
            out.mode_tags.push_back(static_cast<int>(mode));
        }
    }
    for (std::size_t i = 0; i < n_anom; ++i) {
        const std::size_t fam = i % kAnomalyFamilies;
        Tensor vals({channels, seg_len});
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t t = 0; t < seg_len; ++t)
                vals[c * seg_len + t] = anomaly_template(fam, c, t) + noise_sigma * rng.normal();
        Segment s;
        s.values = std::move(vals);
        s.label = 1;
        s.origin = SegmentOrigin{next_id++, 0};
        out.segments.push_back(std::move(s));
        out.mode_tags.push_back(-static_cast<int>(fam) - 1);
    }

    // deterministic interleave so sequential partitions see mixed modes
    std::vector<std::size_t> order(out.segments.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    SynthData shuffled;
    shuffled.segments.reserve(order.size());
    shuffled.mode_tags.reserve(order.size());
    for (std::size_t i : order) {
        shuffled.segments.push_back(std::move(out.segments[i]));
        shuffled.mode_tags.push_back(out.mode_tags[i]);
    }
    return shuffled;
}

}  // namespace fedexdnn
