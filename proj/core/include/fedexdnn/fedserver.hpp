#pragma once

#include <cstdint>
#include <vector>

#include "fedexdnn/model.hpp"

namespace fedexdnn {

// Parameters of the projection network h: 3-layer MLP d -> 4d -> 4d -> d
// with ReLU, used by FedCC to align pooled local exemplars.
struct ProjectionNet {
    std::size_t dim = 0;
    std::vector<double> flat;

    static std::size_t param_count(std::size_t dim);
    static ProjectionNet init(std::size_t dim, std::uint64_t seed);
};

// recorded forward: input is an n x d matrix node, output n x d
Var projection_forward(GradTape& tape, Var phi, std::size_t dim, Var inputs);

// Latent cluster centers in the output space of h, one per row.
struct LatentCenters {
    Tensor mat;  // K x d
};

// +1 / -1 pairing over the pooled L*K exemplars; diagonal excluded (0).
struct AlignmentMatrix {
    std::size_t n = 0;
    std::vector<signed char> e;  // row-major n x n

    signed char at(std::size_t i, std::size_t j) const { return e[i * n + j]; }
};

struct FedCCConfig {
    std::size_t steps = 500;
    std::size_t batch = 256;
    double learning_rate = 0.005;
    double gamma4 = 5.0;
    double gamma5 = 5.0;
    // 0 means "one candidate per device": align_k = L
    std::size_t align_k = 0;
    // reproduce the exponent sign exactly as printed in the constraint term
    // (attracts negatives / repels positives); default inverts it so aligned
    // pairs attract
    bool literal_alignment_sign = false;
    // balance the printed distribution p instead of q
    bool balance_over_p = false;
    std::uint64_t seed = 0;

    void validate() const;
};

// Weighted elementwise average of encoder parameters (weights n_l / sum n_l).
EncoderParams fedavg_encoders(const std::vector<LocalModel>& models);

// Baseline "FedAvgEx": slot-wise mean across clients. Slots that collapse to
// (near) zero norm are flagged and re-jittered with seeded 1e-6 noise.
ExemplarSet avg_exemplars(const std::vector<LocalModel>& models, std::uint64_t seed = 0);

// Baseline "FedKmsEx": kmeans++ then Lloyd iterations (cosine assignment)
// over the pooled, unit-normalized exemplars; centers are assignment means.
ExemplarSet kmeans_exemplars(const std::vector<LocalModel>& models, std::size_t k,
                             std::uint64_t seed);
// Lower-level entry used by tests and FedCC's center init. objective_trace,
// when given, records the total within-cluster cosine distance after each
// Lloyd update.
ExemplarSet kmeans_points(const std::vector<Tensor>& points, std::size_t k, std::uint64_t seed,
                          std::vector<double>* objective_trace = nullptr);

// Pools exemplars client-major: index = client * K + slot.
std::vector<Tensor> pool_exemplars(const std::vector<LocalModel>& models);

// e(i,j) = +1 iff the slots match and either is among the other's align_k
// cosine nearest neighbours; -1 otherwise; self pairs excluded.
AlignmentMatrix build_alignment(const std::vector<Tensor>& pooled, std::size_t slots_per_client,
                                std::size_t align_k);

// Recorded FedCC objective over the pooled exemplars listed in batch_idx.
// p is rebuilt from the current q and treated as a constant; fixed_p pins it
// for finite-difference checks.
Var fedcc_loss_graph(GradTape& tape, Var phi, Var centers, const std::vector<Tensor>& pooled,
                     const std::vector<std::size_t>& batch_idx, const AlignmentMatrix& align,
                     const FedCCConfig& cfg, std::vector<double>* term_values = nullptr,
                     const Tensor* fixed_p = nullptr);

struct FedCCResult {
    Tensor q_global;  // N x K soft assignment of every pooled exemplar
    double final_loss = 0.0;
    ProjectionNet projection;
    LatentCenters centers;
};

// Aligns and clusters the pooled local exemplars: fresh projection net,
// kmeans++ center init in projection space, Adam for cfg.steps.
FedCCResult fedcc_train(const std::vector<LocalModel>& models, const FedCCConfig& cfg);

// Eq.-(12)-style merge in the original exemplar space: each global exemplar
// is the assignment-weighted mean of the pooled local exemplars. Columns with
// (near) zero total weight are re-seeded from the least-covered exemplar.
ExemplarSet merge_exemplars(const Tensor& q_global, const std::vector<Tensor>& pooled);

}  // namespace fedexdnn
