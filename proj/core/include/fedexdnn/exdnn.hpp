#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "fedexdnn/encoder.hpp"
#include "fedexdnn/tensor.hpp"

namespace fedexdnn {

// K learnable exemplars in embedding space, stored one per row (K x d).
struct ExemplarSet {
    Tensor mat;

    std::size_t count() const { return mat.rows(); }
    std::size_t dim() const { return mat.cols(); }
    std::span<const double> row(std::size_t k) const {
        return std::span<const double>(mat.data().data() + k * dim(), dim());
    }
    void validate() const;

    // seeded random unit vectors
    static ExemplarSet random_unit(std::size_t count, std::size_t dim, std::uint64_t seed);
};

struct LossConfig {
    double gamma1 = 2.0;
    double gamma2 = 10.0;
    double gamma3 = 10.0;
    double margin = 0.5;
    std::size_t knn_k = 10;
    // per-term weights; zeroing one reproduces the matching ablation
    double cluster_weight = 1.0;
    double balance_weight = 1.0;  // swept over {0,1,5} in the contamination study
    double absolute_weight = 1.0;
    double drp_weight = 1.0;
    // prior over exemplars; empty means uniform 1/K
    std::vector<double> alpha;

    void validate() const;
    std::vector<double> alpha_for(std::size_t k) const;
};

// ---- recorded losses (embeddings is an n x d node, exemplars a K x d node) ----

// q_ij = softmax_j(gamma1 * cos(f_i, c_j)); rows sum to 1
Var soft_assign(Var embeddings, Var exemplars, double gamma1);

// Self-sharpened target: p_ij = (q_ij^2 / f_j) / sum_j' (q_ij'^2 / f_j'),
// f_j = column sum. Treated as a constant (no gradient flows through it).
Tensor target_dist(const Tensor& q);

// (1/n) sum_ij p_ij log(p_ij / q_ij) with 0 log 0 = 0; logs guarded at 1e-12
Var cluster_loss(const Tensor& p, Var q);
double cluster_loss_value(const Tensor& p, const Tensor& q);

// -alpha^T log(mean_i q_i)
Var balance_loss(Var q, const std::vector<double>& alpha);

// Per-anchor positive sets for the DRP loss: the knn_k nearest other batch
// members by cosine similarity of the flattened raw segments.
std::vector<std::vector<std::size_t>> knn_positives(std::span<const Tensor> raw_segments,
                                                    std::size_t knn_k);

// mean_i log(1 + sum_{p in P_i, q notin P_i} exp(gamma2 (s_iq - s_ip))) over
// embedding-space cosines; anchors with an empty positive or negative set
// contribute zero
Var drp_loss(Var embeddings, const std::vector<std::vector<std::size_t>>& positives,
             double gamma2);

// mean_i softplus(-gamma3 (t_i - margin)) with t_i the cosine between the
// embedding and its soft nearest exemplar (both unit-normalized)
Var absolute_loss(Var embeddings, Var exemplars, Var q, double gamma3, double margin);

struct LossBreakdown {
    double total = 0.0;
    double cluster = 0.0;
    double balance = 0.0;
    double drp = 0.0;
    double absolute = 0.0;
};

// Recorded full objective on embeddings that are already on the tape. By
// default the target distribution is rebuilt from the current assignments;
// fixed_p pins it instead (used by finite-difference checks, which must
// difference the same fixed-target function the tape differentiates).
Var total_loss_graph(Var embeddings, std::span<const Tensor> raw_segments, Var exemplars,
                     const LossConfig& cfg, LossBreakdown* breakdown = nullptr,
                     const Tensor* fixed_p = nullptr);

struct TotalLossResult {
    LossBreakdown terms;
    std::vector<double> grad_theta;
    std::vector<double> grad_exemplars;
};

// Full objective through the encoder; returns value and gradients for theta
// and the exemplar matrix. Throws NumericError naming the term if any term
// goes non-finite.
TotalLossResult total_loss(std::span<const Tensor> batch, const EncoderParams& params,
                           const ExemplarSet& exemplars, const LossConfig& cfg);

// Eq.-(7)-style score: minus the best cosine between the embedded segment and
// any exemplar. Higher means more anomalous; range [-1, 1].
double anomaly_score(const EncoderParams& params, const ExemplarSet& exemplars,
                     const Tensor& segment);
double anomaly_score_embedding(const Tensor& embedding, const ExemplarSet& exemplars);

}  // namespace fedexdnn
