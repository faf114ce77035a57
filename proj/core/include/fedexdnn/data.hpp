#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedexdnn/tensor.hpp"

namespace fedexdnn {

// One multivariate series: values laid out timesteps x channels.
struct SeriesTable {
    std::size_t channels = 0;
    std::size_t timesteps = 0;
    Tensor values;  // (timesteps, channels)
    std::optional<std::vector<int>> point_labels;  // 0 normal / 1 anomaly, per timestep
};

struct SegmentOrigin {
    int source_id = 0;
    std::size_t start = 0;
};

// Windowed sample: values are (channels, seg_len). Label 1 means the window
// covers at least one anomalous point.
struct Segment {
    Tensor values;
    std::optional<int> label;
    SegmentOrigin origin;
};

// Training-side sample: deliberately has no label member, so nothing in the
// training path can read anomaly supervision.
struct TrainSegment {
    Tensor values;
    SegmentOrigin origin;
};

struct ClientShard {
    int client_id = 0;
    std::vector<TrainSegment> train;
    std::vector<Segment> val;
    std::vector<Segment> test;
};

std::vector<TrainSegment> strip_labels(const std::vector<Segment>& segments);

// CSV: UTF-8, comma separated, first row is a header. If label_column names a
// header entry that column must hold integers {0,1}.
SeriesTable load_csv(const std::string& path, const std::optional<std::string>& label_column);

std::vector<Segment> make_windows(const SeriesTable& table, std::size_t seg_len,
                                  std::size_t stride, int source_id = 0);

struct ChannelStats {
    std::vector<double> mean;
    std::vector<double> std_dev;  // entries < 1e-12 mean: center only
};

// Fits per-channel z-score stats on train and applies them to train and all
// other lists in place. Channels with train std below 1e-12 are centered only.
ChannelStats normalize_fit_apply(std::vector<Segment>& train,
                                 std::vector<std::vector<Segment>*> others);

std::vector<ClientShard> partition_sequential(const std::vector<Segment>& segments,
                                              std::size_t num_clients);

// Mode-based heterogeneous split. Each client draws modes_per_client normal
// modes (disjoint deal when disjoint=true, independent draws otherwise);
// segments of a mode are split round-robin among the clients that own it, and
// anomalous segments are dealt round-robin across all clients. Segments of
// unowned modes are dropped.
std::vector<ClientShard> partition_by_mode(const std::vector<Segment>& segments,
                                           const std::vector<int>& mode_tags,
                                           std::size_t num_clients,
                                           std::size_t modes_per_client, std::uint64_t seed,
                                           bool disjoint = false);

// Splits val/test pools sequentially across the shards.
void attach_eval_sets(std::vector<ClientShard>& shards, const std::vector<Segment>& val,
                      const std::vector<Segment>& test);

struct SynthData {
    std::vector<Segment> segments;
    std::vector<int> mode_tags;  // normal: 0..modes-1, anomaly: -(family+1)
};

// Multi-mode synthetic generator. Normal mode k is a smooth per-channel
// sinusoid with mode-specific frequency and phase; anomalies come from a
// reserved square-wave family so they stay disjoint from every normal mode.
SynthData synth_multimode(std::size_t modes, std::size_t channels, std::size_t seg_len,
                          std::size_t n_per_mode, double anomaly_fraction, double noise_sigma,
                          std::uint64_t seed);

}  // namespace fedexdnn
