#include "fedexdnn/exdnn.hpp"

#include <algorithm>
#include <cmath>

namespace fedexdnn {

void ExemplarSet::validate() const {
    if (mat.rank() != 2 || mat.rows() == 0)
        throw ContractError("ExemplarSet: K x d matrix with K >= 1 required");
    for (std::size_t k = 0; k < count(); ++k) {
        double n = 0.0;
        for (double v : row(k)) n += v * v;
        if (std::sqrt(n) < 1e-12)
            throw NumericError("ExemplarSet: exemplar " + std::to_string(k) + " has zero norm");
    }
}

ExemplarSet ExemplarSet::random_unit(std::size_t count, std::size_t dim, std::uint64_t seed) {
    if (count == 0 || dim == 0) throw ContractError("ExemplarSet: count and dim must be >= 1");
    Rng rng(seed);
    Tensor m({count, dim});
    for (std::size_t k = 0; k < count; ++k) {
        double norm = 0.0;
        do {
            norm = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                m.at(k, j) = rng.normal();
                norm += m.at(k, j) * m.at(k, j);
            }
            norm = std::sqrt(norm);
        } while (norm < 1e-6);
        for (std::size_t j = 0; j < dim; ++j) m.at(k, j) /= norm;
    }
    return ExemplarSet{std::move(m)};
}

void LossConfig::validate() const {
    if (gamma1 <= 0.0 || gamma2 <= 0.0 || gamma3 <= 0.0)
        throw ContractError("LossConfig: gammas must be positive");
    if (margin <= 0.0 || margin >= 1.0) throw ContractError("LossConfig: margin must be in (0,1)");
    if (knn_k < 1) throw ContractError("LossConfig: knn_k must be >= 1");
    if (cluster_weight < 0.0 || balance_weight < 0.0 || absolute_weight < 0.0 || drp_weight < 0.0)
        throw ContractError("LossConfig: term weights must be non-negative");
    if (!alpha.empty()) {
        double s = 0.0;
        for (double a : alpha) {
            if (a < 0.0) throw ContractError("LossConfig: alpha entries must be non-negative");
            s += a;
        }
        if (std::abs(s - 1.0) > 1e-9) throw ContractError("LossConfig: alpha must sum to 1");
    }
}

std::vector<double> LossConfig::alpha_for(std::size_t k) const {
    if (alpha.empty()) return std::vector<double>(k, 1.0 / static_cast<double>(k));
    if (alpha.size() != k)
        throw ContractError("LossConfig: alpha length does not match exemplar count");
    return alpha;
}

Var soft_assign(Var embeddings, Var exemplars, double gamma1) {
    GradTape& t = *embeddings.tape;
    Var sims = t.matmul_nt(normalize_rows(embeddings), normalize_rows(exemplars));
    return softmax_rows_scaled(sims, gamma1);
}

Tensor target_dist(const Tensor& q) {
    const std::size_t n = q.rows(), k = q.cols();
    if (n == 1) return q;  // p reduces to q algebraically for a single sample

    std::vector<double> freq(k, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) freq[j] += q.at(i, j);

    Tensor p({n, k});
    for (std::size_t i = 0; i < n; ++i) {
        double row_sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            double w = q.at(i, j) * q.at(i, j) / std::max(freq[j], 1e-12);
            p.at(i, j) = w;
            row_sum += w;
        }
        for (std::size_t j = 0; j < k; ++j) p.at(i, j) /= row_sum;
    }
    return p;
}

Var cluster_loss(const Tensor& p, Var q) {
    GradTape& t = *q.tape;
    const Tensor& qv = t.value(q);
    if (!p.same_shape(qv)) throw ContractError("cluster_loss: P and Q shapes differ");
    const double n = static_cast<double>(p.rows());

    double min_q_where_p = 1.0;
    double plogp = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        // accumulated exactly like the recorded sum below so P == Q gives 0
        plogp += p[i] == 0.0 ? p[i] * std::log(1e-12)
                             : p[i] * std::log(std::max(p[i], 1e-12));
        if (p[i] > 0.0) min_q_where_p = std::min(min_q_where_p, qv[i]);
    }
    if (min_q_where_p < 1e-12)
        log_warn("cluster_loss: q underflowed below 1e-12 where p > 0; log clamped");

    Var plogq = t.sum(t.mul(t.constant(p), t.log_of(q)));
    return t.scale(t.offset(t.scale(plogq, -1.0), plogp), 1.0 / n);
}

double cluster_loss_value(const Tensor& p, const Tensor& q) {
    GradTape t;
    Var qc = t.constant(q);
    return t.value(cluster_loss(p, qc))[0];
}

Var balance_loss(Var q, const std::vector<double>& alpha) {
    GradTape& t = *q.tape;
    const Tensor& qv = t.value(q);
    const std::size_t n = qv.rows(), k = qv.cols();
    if (alpha.size() != k) throw ContractError("balance_loss: alpha length mismatch");
    // column means via ones^T Q / n
    Var ones = t.constant(Tensor::matrix(1, n, std::vector<double>(n, 1.0)));
    Var col_mean = t.scale(t.matmul(ones, q), 1.0 / static_cast<double>(n));
    Var logs = t.log_of(t.reshape(col_mean, {k}));
    return t.scale(t.sum(t.mul(t.constant(Tensor::vec(alpha)), logs)), -1.0);
}

std::vector<std::vector<std::size_t>> knn_positives(std::span<const Tensor> raw_segments,
                                                    std::size_t knn_k) {
    const std::size_t n = raw_segments.size();
    std::vector<std::vector<std::size_t>> out(n);
    if (n < 2) return out;

    std::vector<Tensor> flat;
    flat.reserve(n);
    for (const Tensor& s : raw_segments) flat.push_back(Tensor::vec(s.values()));

    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> sims;
        sims.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sims.emplace_back(cosine_sim(flat[i], flat[j]), j);
        }
        const std::size_t take = std::min(knn_k, sims.size());
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(take),
                          sims.end(), [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;  // deterministic tie-break
                          });
        out[i].reserve(take);
        for (std::size_t r = 0; r < take; ++r) out[i].push_back(sims[r].second);
        std::sort(out[i].begin(), out[i].end());
    }
    return out;
}

Var drp_loss(Var embeddings, const std::vector<std::vector<std::size_t>>& positives,
             double gamma2) {
    GradTape& t = *embeddings.tape;
    const Tensor& ev = t.value(embeddings);
    const std::size_t n = ev.rows();
    if (n < 2) return t.constant(Tensor::scalar(0.0));
    if (positives.size() != n) throw ContractError("drp_loss: positives size mismatch");

    Var norm = normalize_rows(embeddings);
    Var sims = t.matmul_nt(norm, norm);  // n x n cosines
    Var sims_flat = t.reshape(sims, {n * n});

    Var acc = t.constant(Tensor::scalar(0.0));
    std::size_t active = 0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> pos_mask(n, 0.0), neg_mask(n, 0.0);
        std::size_t n_pos = 0, n_neg = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            if (std::binary_search(positives[i].begin(), positives[i].end(), j)) {
                pos_mask[j] = 1.0;
                ++n_pos;
            } else {
                neg_mask[j] = 1.0;
                ++n_neg;
            }
        }
        // sum_{p,q} exp(g(s_iq - s_ip)) factorizes into the two masked sums
        if (n_pos == 0 || n_neg == 0) continue;
        ++active;
        Var row = t.slice(sims_flat, i * n, n);
        Var pos_sum = t.sum(t.mul(t.constant(Tensor::vec(pos_mask)),
                                  t.exp_of(t.scale(row, -gamma2))));
        Var neg_sum = t.sum(t.mul(t.constant(Tensor::vec(neg_mask)),
                                  t.exp_of(t.scale(row, gamma2))));
        acc = t.add(acc, t.log_of(t.offset(t.mul(pos_sum, neg_sum), 1.0)));
    }
    (void)active;
    return t.scale(acc, 1.0 / static_cast<double>(n));
}

Var absolute_loss(Var embeddings, Var exemplars, Var q, double gamma3, double margin) {
    GradTape& t = *embeddings.tape;
    const Tensor& ev = t.value(embeddings);
    const std::size_t n = ev.rows(), d = ev.cols();

    Var e_hat = normalize_rows(embeddings);
    Var c_hat = normalize_rows(exemplars);
    Var c_bar = t.matmul(q, c_hat);  // n x d soft nearest exemplar
    // t_i = e_hat_i . c_bar_i via row sums of the elementwise product
    Var ones = t.constant(Tensor::matrix(d, 1, std::vector<double>(d, 1.0)));
    Var t_col = t.matmul(t.mul(e_hat, c_bar), ones);  // n x 1
    Var z = t.scale(t.offset(t.reshape(t_col, {n}), -margin), -gamma3);
    return t.scale(t.sum(t.softplus(z)), 1.0 / static_cast<double>(n));
}

namespace {

double checked_term(GradTape& t, Var v, const char* name) {
    double x = t.value(v)[0];
    if (!std::isfinite(x))
        throw NumericError(std::string("total_loss: term '") + name + "' is non-finite");
    return x;
}

}  // namespace

Var total_loss_graph(Var embeddings, std::span<const Tensor> raw_segments, Var exemplars,
                     const LossConfig& cfg, LossBreakdown* breakdown, const Tensor* fixed_p) {
    cfg.validate();
    GradTape& t = *embeddings.tape;
    const std::size_t k = t.value(exemplars).rows();

    Var q = soft_assign(embeddings, exemplars, cfg.gamma1);
    Tensor p = fixed_p != nullptr ? *fixed_p : target_dist(t.value(q));

    Var l_cluster = cluster_loss(p, q);
    Var l_balance = balance_loss(q, cfg.alpha_for(k));
    Var l_drp = drp_loss(embeddings, knn_positives(raw_segments, cfg.knn_k), cfg.gamma2);
    Var l_abs = absolute_loss(embeddings, exemplars, q, cfg.gamma3, cfg.margin);

    LossBreakdown b;
    b.cluster = checked_term(t, l_cluster, "cluster");
    b.balance = checked_term(t, l_balance, "balance");
    b.drp = checked_term(t, l_drp, "drp");
    b.absolute = checked_term(t, l_abs, "absolute");

    Var total = t.add(t.add(t.scale(l_cluster, cfg.cluster_weight),
                            t.scale(l_drp, cfg.drp_weight)),
                      t.add(t.scale(l_balance, cfg.balance_weight),
                            t.scale(l_abs, cfg.absolute_weight)));
    b.total = checked_term(t, total, "total");
    if (breakdown != nullptr) *breakdown = b;
    return total;
}

TotalLossResult total_loss(std::span<const Tensor> batch, const EncoderParams& params,
                           const ExemplarSet& exemplars, const LossConfig& cfg) {
    if (batch.empty()) throw ContractError("total_loss: empty batch");
    GradTape t;
    Var theta = t.param(Tensor::vec(params.flat), "theta");
    Var c = t.param(exemplars.mat, "exemplars");
    std::vector<Var> embs = encoder_forward_batch(t, theta, params.config, batch);
    Var emat = concat_rows(embs, params.config.embed_dim);

    TotalLossResult res;
    Var total = total_loss_graph(emat, batch, c, cfg, &res.terms);
    t.backward(total);
    res.grad_theta = t.grad(theta).values();
    res.grad_exemplars = t.grad(c).values();
    return res;
}

double anomaly_score_embedding(const Tensor& embedding, const ExemplarSet& exemplars) {
    double best = -1.0;
    Tensor ex({exemplars.dim()});
    for (std::size_t k = 0; k < exemplars.count(); ++k) {
        auto r = exemplars.row(k);
        for (std::size_t j = 0; j < r.size(); ++j) ex[j] = r[j];
        best = std::max(best, cosine_sim(embedding, ex));
    }
    return -best;
}

double anomaly_score(const EncoderParams& params, const ExemplarSet& exemplars,
                     const Tensor& segment) {
    return anomaly_score_embedding(encoder_embed(params, segment), exemplars);
}

}  // namespace fedexdnn
