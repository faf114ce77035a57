#pragma once

#include <cstdint>

#include "fedexdnn/data.hpp"
#include "fedexdnn/model.hpp"

namespace fedexdnn {

struct TrainConfig {
    std::size_t batch_size = 128;
    double learning_rate = 0.005;
    std::size_t local_epochs = 5;
    std::uint64_t seed = 0;

    void validate() const;
};

// Adam with standard moment defaults; one state per flat parameter vector.
class AdamState {
public:
    explicit AdamState(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
    void step(std::vector<double>& params, const std::vector<double>& grad, double lr);

private:
    std::vector<double> m_, v_;
    std::size_t t_ = 0;
};

// Local ExDNN training: jointly updates theta and the exemplar matrix by
// minimizing the full objective over shuffled minibatches for local_epochs.
// Deterministic under train_cfg.seed.
LocalModel local_train(const ClientShard& shard, const GlobalModel& init,
                       const LossConfig& loss_cfg, const TrainConfig& train_cfg);

// Anomaly score per segment, order preserving.
std::vector<double> score_dataset(const EncoderParams& params, const ExemplarSet& exemplars,
                                  const std::vector<Segment>& segments);

}  // namespace fedexdnn
