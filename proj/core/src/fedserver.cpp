#include "fedexdnn/fedserver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fedexdnn/client.hpp"

namespace fedexdnn {

void FedCCConfig::validate() const {
    if (steps < 1) throw ContractError("FedCCConfig: steps must be >= 1");
    if (batch < 2) throw ContractError("FedCCConfig: batch must be >= 2");
    if (learning_rate <= 0.0) throw ContractError("FedCCConfig: learning rate must be positive");
    if (gamma4 <= 0.0 || gamma5 <= 0.0) throw ContractError("FedCCConfig: gammas must be positive");
}

std::size_t ProjectionNet::param_count(std::size_t dim) {
    const std::size_t h = 4 * dim;
    return h * dim + h   // layer 1
         + h * h + h     // layer 2
         + dim * h + dim;  // output layer
}

ProjectionNet ProjectionNet::init(std::size_t dim, std::uint64_t seed) {
    if (dim == 0) throw ContractError("ProjectionNet: dim must be >= 1");
    Rng rng(seed);
    ProjectionNet p;
    p.dim = dim;
    p.flat.reserve(param_count(dim));
    const std::size_t h = 4 * dim;
    auto layer = [&](std::size_t rows, std::size_t cols) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
        for (std::size_t i = 0; i < rows * cols; ++i) p.flat.push_back(rng.uniform(-bound, bound));
        for (std::size_t i = 0; i < rows; ++i) p.flat.push_back(0.0);
    };
    layer(h, dim);
    layer(h, h);
    layer(dim, h);
    return p;
}

Var projection_forward(GradTape& t, Var phi, std::size_t dim, Var inputs) {
    const std::size_t h = 4 * dim;
    if (t.value(phi).size() != ProjectionNet::param_count(dim))
        throw ContractError("projection_forward: phi length does not match dim");
    const Tensor& x = t.value(inputs);
    if (x.rank() != 2 || x.cols() != dim)
        throw ContractError("projection_forward: inputs must be n x dim");
    const std::size_t n = x.rows();

    std::size_t pos = 0;
    auto take = [&](std::size_t rows, std::size_t cols) {
        Var w = t.reshape(t.slice(phi, pos, rows * cols), {rows, cols});
        pos += rows * cols;
        Var b = t.slice(phi, pos, rows);
        pos += rows;
        return std::pair<Var, Var>(w, b);
    };
    auto [w1, b1] = take(h, dim);
    auto [w2, b2] = take(h, h);
    auto [w3, b3] = take(dim, h);

    // broadcast bias by stacking: rows are processed through X * W^T
    auto affine = [&](Var in, Var w, Var b, std::size_t out_dim) {
        Var lin = t.matmul_nt(in, w);  // n x out_dim
        std::vector<Var> rows_b(n, b);
        Var bias = concat_rows(rows_b, out_dim);
        return t.add(lin, bias);
    };
    Var z1 = t.relu(affine(inputs, w1, b1, h));
    Var z2 = t.relu(affine(z1, w2, b2, h));
    return affine(z2, w3, b3, dim);
}

EncoderParams fedavg_encoders(const std::vector<LocalModel>& models) {
    if (models.empty()) throw ContractError("fedavg_encoders: no models");
    const std::string fp = models[0].encoder.fingerprint();
    std::size_t total = 0;
    for (const LocalModel& m : models) {
        if (m.encoder.fingerprint() != fp)
            throw ContractError("fedavg_encoders: fingerprint mismatch between clients");
        if (m.sample_count == 0) throw ContractError("fedavg_encoders: client with zero samples");
        total += m.sample_count;
    }
    EncoderParams out = models[0].encoder;
    std::fill(out.flat.begin(), out.flat.end(), 0.0);
    for (const LocalModel& m : models) {
        const double w = static_cast<double>(m.sample_count) / static_cast<double>(total);
        for (std::size_t i = 0; i < out.flat.size(); ++i) out.flat[i] += w * m.encoder.flat[i];
    }
    return out;
}

ExemplarSet avg_exemplars(const std::vector<LocalModel>& models, std::uint64_t seed) {
    if (models.empty()) throw ContractError("avg_exemplars: no models");
    const std::size_t k = models[0].exemplars.count();
    const std::size_t d = models[0].exemplars.dim();
    for (const LocalModel& m : models)
        if (m.exemplars.count() != k || m.exemplars.dim() != d)
            throw ContractError("avg_exemplars: exemplar shape mismatch");

    Tensor mean({k, d}, 0.0);
    for (const LocalModel& m : models)
        for (std::size_t i = 0; i < mean.size(); ++i)
            mean[i] += m.exemplars.mat[i] / static_cast<double>(models.size());

    Rng rng(mix64(seed ^ 0xa6e5u));
    for (std::size_t slot = 0; slot < k; ++slot) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += mean.at(slot, j) * mean.at(slot, j);
        if (std::sqrt(norm) < 1e-8) {
            log_warn("avg_exemplars: slot " + std::to_string(slot) +
                     " collapsed to zero norm; re-jittering");
            for (std::size_t j = 0; j < d; ++j) mean.at(slot, j) += 1e-6 * rng.normal();
        }
    }
    return ExemplarSet{std::move(mean)};
}

std::vector<Tensor> pool_exemplars(const std::vector<LocalModel>& models) {
    if (models.empty()) throw ContractError("pool_exemplars: no models");
    const std::size_t d = models[0].exemplars.dim();
    std::vector<Tensor> out;
    for (const LocalModel& m : models) {
        if (m.exemplars.dim() != d) throw ContractError("pool_exemplars: dim mismatch");
        for (std::size_t s = 0; s < m.exemplars.count(); ++s) {
            auto r = m.exemplars.row(s);
            out.push_back(Tensor::vec(std::vector<double>(r.begin(), r.end())));
        }
    }
    return out;
}

namespace {

Tensor unit(const Tensor& v) {
    double n = v.norm();
    if (n < 1e-12) throw NumericError("kmeans: zero-norm point");
    Tensor out = v;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= n;
    return out;
}

double sq_dist(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

}  // namespace

ExemplarSet kmeans_points(const std::vector<Tensor>& points, std::size_t k, std::uint64_t seed,
                          std::vector<double>* objective_trace) {
    if (k == 0) throw ContractError("kmeans: k must be >= 1");
    if (points.size() < k) throw ContractError("kmeans: fewer points than clusters");
    const std::size_t n = points.size();
    const std::size_t d = points[0].size();

    std::vector<Tensor> data;
    data.reserve(n);
    for (const Tensor& p : points) data.push_back(unit(p));

    Rng rng(seed);
    // kmeans++ seeding
    std::vector<std::size_t> chosen;
    std::vector<bool> is_chosen(n, false);
    {
        std::size_t first = static_cast<std::size_t>(rng.below(n));
        chosen.push_back(first);
        is_chosen[first] = true;
        std::vector<double> d2(n, 0.0);
        while (chosen.size() < k) {
            double total = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (is_chosen[i]) {
                    d2[i] = 0.0;
                    continue;
                }
                double best = std::numeric_limits<double>::max();
                for (std::size_t c : chosen) best = std::min(best, sq_dist(data[i], data[c]));
                d2[i] = best;
                total += best;
            }
            std::size_t pick = n;
            if (total > 0.0) {
                double r = rng.uniform() * total;
                double acc = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    acc += d2[i];
                    if (acc >= r && !is_chosen[i]) {
                        pick = i;
                        break;
                    }
                }
            }
            if (pick == n) {  // duplicates or numeric corner: first unchosen
                for (std::size_t i = 0; i < n; ++i)
                    if (!is_chosen[i]) {
                        pick = i;
                        break;
                    }
            }
            chosen.push_back(pick);
            is_chosen[pick] = true;
        }
    }

    std::vector<Tensor> centers;
    centers.reserve(k);
    for (std::size_t c : chosen) centers.push_back(data[c]);

    std::vector<std::size_t> assign(n, 0);
    for (std::size_t iter = 0; iter < 100; ++iter) {
        // assignment by cosine to the center direction
        for (std::size_t i = 0; i < n; ++i) {
            double best = -std::numeric_limits<double>::max();
            std::size_t arg = 0;
            for (std::size_t c = 0; c < k; ++c) {
                double cs = cosine_sim(data[i], centers[c]);
                if (cs > best) {
                    best = cs;
                    arg = c;
                }
            }
            assign[i] = arg;
        }
        // update: plain means of assigned (normalized) points
        std::vector<Tensor> next(k, Tensor({d}, 0.0));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < d; ++j) next[assign[i]][j] += data[i][j];
            ++counts[assign[i]];
        }
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] == 0) {
                // re-seed an empty cluster from the point farthest from its center
                double worst = -1.0;
                std::size_t far = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    double dd = sq_dist(data[i], centers[assign[i]]);
                    if (dd > worst) {
                        worst = dd;
                        far = i;
                    }
                }
                next[c] = data[far];
                counts[c] = 1;
                assign[far] = c;
                log_debug("kmeans: re-seeded empty cluster " + std::to_string(c));
            } else {
                for (std::size_t j = 0; j < d; ++j) next[c][j] /= static_cast<double>(counts[c]);
            }
        }
        double moved = 0.0;
        for (std::size_t c = 0; c < k; ++c) moved = std::max(moved, std::sqrt(sq_dist(next[c], centers[c])));
        centers = std::move(next);
        if (objective_trace != nullptr) {
            double obj = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                obj += 1.0 - cosine_sim(data[i], centers[assign[i]]);
            objective_trace->push_back(obj);
        }
        if (moved < 1e-8) break;
    }

    Tensor out({k, d});
    for (std::size_t c = 0; c < k; ++c) {
        double norm = 0.0;
        for (std::size_t j = 0; j < d; ++j) norm += centers[c][j] * centers[c][j];
        if (std::sqrt(norm) < 1e-12) {
            log_warn("kmeans: center " + std::to_string(c) + " has zero norm; re-jittering");
            for (std::size_t j = 0; j < d; ++j) centers[c][j] += 1e-6 * rng.normal();
        }
        for (std::size_t j = 0; j < d; ++j) out.at(c, j) = centers[c][j];
    }
    return ExemplarSet{std::move(out)};
}

ExemplarSet kmeans_exemplars(const std::vector<LocalModel>& models, std::size_t k,
                             std::uint64_t seed) {
    return kmeans_points(pool_exemplars(models), k, seed);
}

AlignmentMatrix build_alignment(const std::vector<Tensor>& pooled, std::size_t slots_per_client,
                                std::size_t align_k) {
    const std::size_t n = pooled.size();
    if (n == 0 || slots_per_client == 0 || n % slots_per_client != 0)
        throw ContractError("build_alignment: pooled size must be a multiple of the slot count");
    if (align_k == 0) align_k = n / slots_per_client;  // one candidate per device

    // cosine KNN over all other pooled exemplars
    std::vector<std::vector<bool>> in_knn(n, std::vector<bool>(n, false));
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::pair<double, std::size_t>> sims;
        sims.reserve(n - 1);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            sims.emplace_back(cosine_sim(pooled[i], pooled[j]), j);
        }
        const std::size_t take = std::min(align_k, sims.size());
        std::partial_sort(sims.begin(), sims.begin() + static_cast<std::ptrdiff_t>(take),
                          sims.end(), [](const auto& a, const auto& b) {
                              if (a.first != b.first) return a.first > b.first;
                              return a.second < b.second;
                          });
        for (std::size_t r = 0; r < take; ++r) in_knn[i][sims[r].second] = true;
    }

    AlignmentMatrix out;
    out.n = n;
    out.e.assign(n * n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        out.e[i * n + i] = 0;  // self pairs excluded
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const bool same_slot = (i % slots_per_client) == (j % slots_per_client);
            // symmetrized: positive if either direction is a neighbour
            if (same_slot && (in_knn[i][j] || in_knn[j][i])) out.e[i * n + j] = 1;
        }
    }
    return out;
}

Var fedcc_loss_graph(GradTape& t, Var phi, Var centers, const std::vector<Tensor>& pooled,
                     const std::vector<std::size_t>& batch_idx, const AlignmentMatrix& align,
                     const FedCCConfig& cfg, std::vector<double>* term_values,
                     const Tensor* fixed_p) {
    cfg.validate();
    if (batch_idx.empty()) throw ContractError("fedcc_loss: empty batch");
    const std::size_t d = pooled[0].size();
    const std::size_t nb = batch_idx.size();
    const std::size_t k = t.value(centers).rows();

    std::vector<double> flat;
    flat.reserve(nb * d);
    for (std::size_t idx : batch_idx)
        flat.insert(flat.end(), pooled[idx].data().begin(), pooled[idx].data().end());
    Var inputs = t.constant(Tensor::matrix(nb, d, std::move(flat)));

    Var proj = projection_forward(t, phi, d, inputs);  // nb x d
    Var proj_hat = normalize_rows(proj);
    Var cent_hat = normalize_rows(centers);
    Var q = softmax_rows_scaled(t.matmul_nt(proj_hat, cent_hat), cfg.gamma4);
    Tensor p = fixed_p != nullptr ? *fixed_p : target_dist(t.value(q));

    // clustering term: -(1/nb) sum p log q (p fixed)
    Var term1 = t.scale(t.sum(t.mul(t.constant(p), t.log_of(q))),
                        -1.0 / static_cast<double>(nb));

    // balance term: -1^T log(mean of assignments)
    Var term2;
    {
        Var ones = t.constant(Tensor::matrix(1, nb, std::vector<double>(nb, 1.0)));
        Var assign = cfg.balance_over_p ? t.constant(p) : q;
        Var col_mean = t.scale(t.matmul(ones, assign), 1.0 / static_cast<double>(nb));
        term2 = t.scale(t.sum(t.log_of(t.reshape(col_mean, {k}))), -1.0);
    }

    // alignment constraint over within-batch pairs
    Var term3;
    {
        Var sims = t.matmul_nt(proj_hat, proj_hat);
        Var sims_flat = t.reshape(sims, {nb * nb});
        Var acc = t.constant(Tensor::scalar(0.0));
        for (std::size_t bi = 0; bi < nb; ++bi) {
            std::vector<double> pos_mask(nb, 0.0), neg_mask(nb, 0.0);
            bool any = false;
            for (std::size_t bj = 0; bj < nb; ++bj) {
                if (bi == bj) continue;
                signed char e = align.at(batch_idx[bi], batch_idx[bj]);
                if (e > 0) pos_mask[bj] = 1.0;
                else if (e < 0) neg_mask[bj] = 1.0;
                any = true;
            }
            if (!any) continue;
            Var row = t.slice(sims_flat, bi * nb, nb);
            // default pulls positives together (exp(-g s)) and pushes
            // negatives apart (exp(+g s)); the literal switch swaps the signs
            const double pos_g = cfg.literal_alignment_sign ? cfg.gamma5 : -cfg.gamma5;
            const double neg_g = cfg.literal_alignment_sign ? -cfg.gamma5 : cfg.gamma5;
            Var s = t.add(t.sum(t.mul(t.constant(Tensor::vec(pos_mask)),
                                      t.exp_of(t.scale(row, pos_g)))),
                          t.sum(t.mul(t.constant(Tensor::vec(neg_mask)),
                                      t.exp_of(t.scale(row, neg_g)))));
            acc = t.add(acc, t.log_of(t.offset(s, 1.0)));
        }
        term3 = t.scale(acc, 1.0 / static_cast<double>(nb));
    }

    if (term_values != nullptr)
        *term_values = {t.value(term1)[0], t.value(term2)[0], t.value(term3)[0]};
    return t.add(t.add(term1, term2), term3);
}

FedCCResult fedcc_train(const std::vector<LocalModel>& models, const FedCCConfig& cfg) {
    cfg.validate();
    std::vector<Tensor> pooled = pool_exemplars(models);
    const std::size_t n = pooled.size();
    const std::size_t k = models[0].exemplars.count();
    const std::size_t d = models[0].exemplars.dim();
    if (n < k) throw ContractError("fedcc_train: fewer pooled exemplars than centers");

    AlignmentMatrix align = build_alignment(pooled, k, cfg.align_k);

    ProjectionNet proj = ProjectionNet::init(d, mix64(cfg.seed ^ 0xfcc1u));

    // kmeans++ init of the latent centers on the fresh projections
    Tensor centers_init;
    {
        GradTape t;
        Var phi = t.constant(Tensor::vec(proj.flat));
        std::vector<double> flat;
        for (const Tensor& p : pooled) flat.insert(flat.end(), p.data().begin(), p.data().end());
        Var z = projection_forward(t, phi, d, t.constant(Tensor::matrix(n, d, std::move(flat))));
        const Tensor& zv = t.value(z);
        std::vector<Tensor> zpoints;
        zpoints.reserve(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> row(d);
            for (std::size_t j = 0; j < d; ++j) row[j] = zv.at(i, j);
            zpoints.push_back(Tensor::vec(std::move(row)));
        }
        centers_init = kmeans_points(zpoints, k, mix64(cfg.seed ^ 0x5eedu)).mat;
    }

    std::vector<double> phi_flat = proj.flat;
    std::vector<double> v_flat = centers_init.values();
    AdamState adam_phi(phi_flat.size());
    AdamState adam_v(v_flat.size());
    Rng rng(mix64(cfg.seed ^ 0xbadc0deULL));

    std::vector<std::size_t> all_idx(n);
    for (std::size_t i = 0; i < n; ++i) all_idx[i] = i;

    double last_loss = 0.0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        std::vector<std::size_t> batch_idx =
            n <= cfg.batch ? all_idx : rng.sample_without_replacement(n, cfg.batch);
        std::sort(batch_idx.begin(), batch_idx.end());

        GradTape t;
        Var phi = t.param(Tensor::vec(phi_flat), "phi");
        Var centers = t.param(Tensor::matrix(k, d, v_flat), "centers");
        Var loss = fedcc_loss_graph(t, phi, centers, pooled, batch_idx, align, cfg);
        last_loss = t.value(loss)[0];
        if (!std::isfinite(last_loss))
            throw NumericError("fedcc_train: non-finite loss at step " + std::to_string(step));
        t.backward(loss);
        adam_phi.step(phi_flat, t.grad(phi).values(), cfg.learning_rate);
        adam_v.step(v_flat, t.grad(centers).values(), cfg.learning_rate);
    }

    // final assignment of every pooled exemplar
    FedCCResult out;
    {
        GradTape t;
        Var phi = t.constant(Tensor::vec(phi_flat));
        Var centers = t.constant(Tensor::matrix(k, d, v_flat));
        std::vector<double> flat;
        for (const Tensor& p : pooled) flat.insert(flat.end(), p.data().begin(), p.data().end());
        Var proj_all = projection_forward(t, phi, d, t.constant(Tensor::matrix(n, d, std::move(flat))));
        Var q = softmax_rows_scaled(t.matmul_nt(normalize_rows(proj_all), normalize_rows(centers)),
                                    cfg.gamma4);
        out.q_global = t.value(q);
    }
    out.final_loss = last_loss;
    out.projection.dim = d;
    out.projection.flat = std::move(phi_flat);
    out.centers.mat = Tensor::matrix(k, d, std::move(v_flat));
    return out;
}

ExemplarSet merge_exemplars(const Tensor& q_global, const std::vector<Tensor>& pooled) {
    if (q_global.rank() != 2 || q_global.rows() != pooled.size())
        throw ContractError("merge_exemplars: assignment rows must match pooled exemplars");
    const std::size_t n = q_global.rows(), k = q_global.cols();
    const std::size_t d = pooled[0].size();

    Tensor out({k, d}, 0.0);
    for (std::size_t z = 0; z < k; ++z) {
        double weight = 0.0;
        for (std::size_t i = 0; i < n; ++i) weight += q_global.at(i, z);
        if (weight < 1e-8) {
            // least covered = smallest best assignment anywhere
            std::size_t arg = 0;
            double best = std::numeric_limits<double>::max();
            for (std::size_t i = 0; i < n; ++i) {
                double row_max = 0.0;
                for (std::size_t j = 0; j < k; ++j) row_max = std::max(row_max, q_global.at(i, j));
                if (row_max < best) {
                    best = row_max;
                    arg = i;
                }
            }
            log_warn("merge_exemplars: center " + std::to_string(z) +
                     " has no assignment mass; re-seeding from exemplar " + std::to_string(arg));
            for (std::size_t j = 0; j < d; ++j) out.at(z, j) = pooled[arg][j];
            continue;
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j)
                out.at(z, j) += q_global.at(i, z) * pooled[i][j] / weight;
    }
    return ExemplarSet{std::move(out)};
}

}  // namespace fedexdnn
