#include "fedexdnn/client.hpp"

#include <cmath>

namespace fedexdnn {

void TrainConfig::validate() const {
    if (batch_size < 2) throw ContractError("TrainConfig: batch_size must be >= 2 (DRP needs pairs)");
    if (local_epochs < 1) throw ContractError("TrainConfig: local_epochs must be >= 1");
    if (learning_rate <= 0.0) throw ContractError("TrainConfig: learning_rate must be positive");
}

void AdamState::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    if (params.size() != m_.size() || grad.size() != m_.size())
        throw ContractError("AdamState: size mismatch");
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = b1 * m_[i] + (1.0 - b1) * grad[i];
        v_[i] = b2 * v_[i] + (1.0 - b2) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps);
    }
}

LocalModel local_train(const ClientShard& shard, const GlobalModel& init,
                       const LossConfig& loss_cfg, const TrainConfig& train_cfg) {
    train_cfg.validate();
    loss_cfg.validate();
    if (shard.train.empty()) throw ContractError("local_train: shard has no training segments");
    if (init.exemplars.dim() != init.encoder.config.embed_dim)
        throw ContractError("local_train: exemplar dim does not match encoder embed dim");

    EncoderParams params = init.encoder;
    ExemplarSet exemplars = init.exemplars;
    Rng rng(train_cfg.seed);

    const std::size_t n = shard.train.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;

    LocalModel out;
    out.client_id = shard.client_id;
    out.sample_count = n;

    AdamState adam_theta(params.flat.size());
    AdamState adam_c(exemplars.mat.size());
    std::vector<double> c_flat = exemplars.mat.values();

    double last_epoch_loss = 0.0;
    for (std::size_t epoch = 0; epoch < train_cfg.local_epochs; ++epoch) {
        rng.shuffle(order);
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t pos = 0; pos < n; pos += train_cfg.batch_size) {
            const std::size_t take = std::min(train_cfg.batch_size, n - pos);
            std::vector<Tensor> batch;
            batch.reserve(take);
            for (std::size_t b = 0; b < take; ++b)
                batch.push_back(shard.train[order[pos + b]].values);

            exemplars.mat = Tensor({exemplars.count(), exemplars.dim()}, c_flat);
            TotalLossResult res;
            try {
                res = total_loss(batch, params, exemplars, loss_cfg);
            } catch (const NumericError& e) {
                throw NumericError("local_train: client " + std::to_string(shard.client_id) +
                                   " aborted at epoch " + std::to_string(epoch) + ": " + e.what());
            }
            adam_theta.step(params.flat, res.grad_theta, train_cfg.learning_rate);
            adam_c.step(c_flat, res.grad_exemplars, train_cfg.learning_rate);
            epoch_loss += res.terms.total;
            ++steps;
        }
        last_epoch_loss = epoch_loss / static_cast<double>(steps);
        out.epoch_losses.push_back(last_epoch_loss);
    }

    exemplars.mat = Tensor({exemplars.count(), exemplars.dim()}, std::move(c_flat));
    out.encoder = std::move(params);
    out.exemplars = std::move(exemplars);
    out.final_loss = last_epoch_loss;
    out.epochs_run = train_cfg.local_epochs;
    return out;
}

std::vector<double> score_dataset(const EncoderParams& params, const ExemplarSet& exemplars,
                                  const std::vector<Segment>& segments) {
    std::vector<double> out;
    out.reserve(segments.size());
    for (const Segment& s : segments)
        out.push_back(anomaly_score(params, exemplars, s.values));
    return out;
}

}  // namespace fedexdnn
