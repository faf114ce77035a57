#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "fedexdnn/fedserver.hpp"

using namespace fedexdnn;

namespace {

LocalModel model_with(const std::vector<double>& theta, const Tensor& exemplars,
                      std::size_t samples, int id = 0) {
    LocalModel m;
    m.client_id = id;
    m.encoder.config = EncoderConfig{.input_dim = 1, .num_layers = 1, .hidden_dim = 1,
                                     .embed_dim = 1};
    m.encoder.flat = theta;
    m.exemplars = ExemplarSet{exemplars};
    m.sample_count = samples;
    return m;
}

Tensor unit_vec(Rng& rng, std::size_t d) {
    Tensor v({d});
    double n = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        v[i] = rng.normal();
        n += v[i] * v[i];
    }
    n = std::sqrt(n);
    for (std::size_t i = 0; i < d; ++i) v[i] /= n;
    return v;
}

}  // namespace

TEST_CASE("fedavg_encoders: identity, equal weights, weighted oracle") {
    Tensor ex = Tensor::matrix(1, 1, {1.0});
    LocalModel a = model_with({0.0}, ex, 1, 0);
    LocalModel b = model_with({4.0}, ex, 3, 1);

    EncoderParams same = fedavg_encoders({a, a});
    CHECK(same.flat[0] == 0.0);

    LocalModel b1 = model_with({4.0}, ex, 1, 1);
    CHECK(fedavg_encoders({a, b1}).flat[0] == doctest::Approx(2.0));

    // weights (1, 3) on scalars (0, 4) -> 3.0
    CHECK(fedavg_encoders({a, b}).flat[0] == doctest::Approx(3.0).epsilon(1e-12));

    // permutation invariance
    CHECK(fedavg_encoders({b, a}).flat[0] == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("fedavg_encoders matches a weighted-mean loop oracle on vectors") {
    Rng rng(3);
    std::vector<LocalModel> models;
    std::vector<std::size_t> counts = {2, 5, 3};
    EncoderConfig cfg{.input_dim = 2, .num_layers = 1, .hidden_dim = 2, .embed_dim = 2};
    for (int c = 0; c < 3; ++c) {
        LocalModel m;
        m.client_id = c;
        m.encoder = encoder_init(cfg, static_cast<std::uint64_t>(c + 10));
        m.exemplars = ExemplarSet::random_unit(2, 2, static_cast<std::uint64_t>(c));
        m.sample_count = counts[static_cast<std::size_t>(c)];
        models.push_back(std::move(m));
    }
    EncoderParams avg = fedavg_encoders(models);
    const double total = 10.0;
    for (std::size_t i = 0; i < avg.flat.size(); ++i) {
        double want = 0.0;
        for (std::size_t c = 0; c < 3; ++c)
            want += static_cast<double>(counts[c]) / total * models[c].encoder.flat[i];
        CHECK(std::abs(avg.flat[i] - want) <= 1e-12);
    }
}

TEST_CASE("fedavg_encoders rejects fingerprint mismatches") {
    Tensor ex = Tensor::matrix(1, 1, {1.0});
    LocalModel a = model_with({0.0}, ex, 1);
    LocalModel b = model_with({1.0}, ex, 1);
    b.encoder.config.hidden_dim = 2;
    b.encoder.flat = {1.0, 2.0};
    CHECK_THROWS_AS(fedavg_encoders({a, b}), ContractError);
}

TEST_CASE("avg_exemplars: identity, per-slot mean, collapse jitter") {
    Rng rng(7);
    Tensor e1 = Tensor::matrix(2, 3, {1, 0, 0, 0, 1, 0});
    LocalModel a = model_with({0.0}, e1, 1, 0);
    ExemplarSet one = avg_exemplars({a});
    CHECK(one.mat.values() == e1.values());

    std::vector<LocalModel> three;
    for (int c = 0; c < 3; ++c) {
        Tensor m({2, 3});
        for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.uniform(-1.0, 1.0);
        three.push_back(model_with({0.0}, m, 1, c));
    }
    ExemplarSet mean = avg_exemplars(three);
    for (std::size_t i = 0; i < mean.mat.size(); ++i) {
        double want = (three[0].exemplars.mat[i] + three[1].exemplars.mat[i] +
                       three[2].exemplars.mat[i]) / 3.0;
        CHECK(std::abs(mean.mat[i] - want) <= 1e-12);
    }

    // opposite slot-0 exemplars collapse; the slot must be re-jittered, not zero
    Tensor pa = Tensor::matrix(1, 2, {1.0, 0.0});
    Tensor pb = Tensor::matrix(1, 2, {-1.0, 0.0});
    ExemplarSet collapsed = avg_exemplars({model_with({0.0}, pa, 1, 0),
                                           model_with({0.0}, pb, 1, 1)}, 5);
    double norm = std::hypot(collapsed.mat[0], collapsed.mat[1]);
    CHECK(norm > 0.0);
    CHECK(norm < 1e-4);
}

TEST_CASE("kmeans recovers planted tight clusters") {
    Rng rng(15);
    std::vector<Tensor> truth;
    for (int c = 0; c < 3; ++c) truth.push_back(unit_vec(rng, 4));

    std::vector<Tensor> points;
    for (int rep = 0; rep < 6; ++rep)
        for (const Tensor& c : truth) {
            Tensor p = c;
            for (std::size_t j = 0; j < 4; ++j) p[j] += 1e-9 * rng.normal();
            points.push_back(p);
        }
    ExemplarSet centers = kmeans_points(points, 3, 5);

    // each true centroid has a center within 1e-6 of the mean of its
    // normalized points
    for (const Tensor& c : truth) {
        Tensor want({4}, 0.0);
        std::size_t cnt = 0;
        for (const Tensor& p : points) {
            Tensor pn = p;
            double n = pn.norm();
            for (std::size_t j = 0; j < 4; ++j) pn[j] /= n;
            if (cosine_sim(p, c) > 0.999) {
                for (std::size_t j = 0; j < 4; ++j) want[j] += pn[j];
                ++cnt;
            }
        }
        for (std::size_t j = 0; j < 4; ++j) want[j] /= static_cast<double>(cnt);
        double best = 1e9;
        for (std::size_t k = 0; k < 3; ++k) {
            double d = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                double diff = centers.mat.at(k, j) - want[j];
                d += diff * diff;
            }
            best = std::min(best, std::sqrt(d));
        }
        CHECK(best < 1e-6);
    }
}

TEST_CASE("kmeans with K == N keeps every point as its own center") {
    Rng rng(21);
    std::vector<Tensor> points;
    for (int i = 0; i < 4; ++i) points.push_back(unit_vec(rng, 3));
    ExemplarSet centers = kmeans_points(points, 4, 9);
    for (const Tensor& p : points) {
        double best = -1.0;
        for (std::size_t k = 0; k < 4; ++k) {
            std::vector<double> row(centers.mat.data().begin() + k * 3,
                                    centers.mat.data().begin() + (k + 1) * 3);
            best = std::max(best, cosine_sim(p, Tensor::vec(row)));
        }
        CHECK(best == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("kmeans is deterministic and its objective never increases") {
    Rng rng(33);
    std::vector<Tensor> points;
    for (int i = 0; i < 20; ++i) points.push_back(unit_vec(rng, 5));

    ExemplarSet a = kmeans_points(points, 4, 123);
    ExemplarSet b = kmeans_points(points, 4, 123);
    CHECK(a.mat.values() == b.mat.values());

    std::vector<double> trace;
    kmeans_points(points, 4, 7, &trace);
    REQUIRE(trace.size() >= 2);
    for (std::size_t i = 1; i < trace.size(); ++i) CHECK(trace[i] <= trace[i - 1] + 1e-12);
}

TEST_CASE("build_alignment: duplicated clients pair same slots positively") {
    Rng rng(2);
    std::vector<Tensor> client;
    for (int i = 0; i < 3; ++i) client.push_back(unit_vec(rng, 4));
    std::vector<Tensor> pooled = client;
    pooled.insert(pooled.end(), client.begin(), client.end());  // two identical clients

    AlignmentMatrix e = build_alignment(pooled, 3, 0);
    for (std::size_t slot = 0; slot < 3; ++slot) {
        CHECK(e.at(slot, slot + 3) == 1);
        CHECK(e.at(slot + 3, slot) == 1);
    }
    CHECK(e.at(0, 0) == 0);  // self excluded
    CHECK(e.at(0, 1) == -1); // same client, different slot
}

TEST_CASE("build_alignment: orthogonal same-slot pair loses to a closer different slot") {
    // client 0 slot 0 = x-axis; client 1 slot 0 = y-axis (orthogonal);
    // client 1 slot 1 = x-axis (closest neighbour of client 0 slot 0)
    std::vector<Tensor> pooled = {
        Tensor::vec({1, 0, 0}), Tensor::vec({0, 0, 1}),   // client 0, slots 0/1
        Tensor::vec({0, 1, 0}), Tensor::vec({0.99, 0.14, 0}),  // client 1, slots 0/1
    };
    AlignmentMatrix e = build_alignment(pooled, 2, 1);
    CHECK(e.at(0, 2) == -1);  // same slot but not within 1-NN either way
    CHECK(e.at(0, 3) == -1);  // different slot stays negative even when close
}

TEST_CASE("build_alignment symmetrizes the neighbour rule") {
    Rng rng(11);
    std::vector<Tensor> pooled;
    for (int i = 0; i < 8; ++i) pooled.push_back(unit_vec(rng, 4));
    AlignmentMatrix e = build_alignment(pooled, 4, 1);
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j) CHECK(e.at(i, j) == e.at(j, i));
}

TEST_CASE("fedcc_loss: uniform assignments give K log K balance, entropy term1") {
    // identical centers make every cosine equal, hence q exactly uniform
    Rng rng(9);
    std::vector<Tensor> pooled;
    for (int i = 0; i < 6; ++i) pooled.push_back(unit_vec(rng, 4));
    ProjectionNet proj = ProjectionNet::init(4, 3);
    Tensor centers({3, 4});
    for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t j = 0; j < 4; ++j) centers.at(k, j) = (j == 0 ? 1.0 : 0.25);

    GradTape t;
    Var phi = t.constant(Tensor::vec(proj.flat));
    Var v = t.constant(centers);
    std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5};
    AlignmentMatrix e = build_alignment(pooled, 3, 0);
    std::vector<double> terms;
    FedCCConfig cfg;
    fedcc_loss_graph(t, phi, v, pooled, all, e, cfg, &terms);
    REQUIRE(terms.size() == 3);
    CHECK(terms[1] == doctest::Approx(3.0 * std::log(3.0)).epsilon(1e-9));
    // with q uniform, p is uniform too and term1 is the entropy log K
    CHECK(terms[0] == doctest::Approx(std::log(3.0)).epsilon(1e-9));
}

TEST_CASE("fedcc_loss gradient matches finite differences (L=2, K=3, d=4)") {
    Rng rng(27);
    std::vector<Tensor> pooled;
    for (int i = 0; i < 6; ++i) pooled.push_back(unit_vec(rng, 4));
    AlignmentMatrix e = build_alignment(pooled, 3, 0);
    ProjectionNet proj = ProjectionNet::init(4, 1);
    Tensor centers({3, 4});
    for (std::size_t i = 0; i < centers.size(); ++i) centers[i] = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> all = {0, 1, 2, 3, 4, 5};
    FedCCConfig cfg;

    // pin p at the base parameters, as the tape does
    Tensor p0;
    {
        GradTape t;
        Var phi = t.constant(Tensor::vec(proj.flat));
        Var v = t.constant(centers);
        std::vector<double> flat;
        for (const Tensor& x : pooled) flat.insert(flat.end(), x.data().begin(), x.data().end());
        Var proj_out = projection_forward(t, phi, 4, t.constant(Tensor::matrix(6, 4, flat)));
        Var q = softmax_rows_scaled(
            t.matmul_nt(normalize_rows(proj_out), normalize_rows(v)), cfg.gamma4);
        p0 = target_dist(t.value(q));
    }

    auto build = [&](GradTape& t, const std::vector<Var>& params) {
        return fedcc_loss_graph(t, params[0], params[1], pooled, all, e, cfg, nullptr, &p0);
    };
    CHECK(grad_check(build, {Tensor::vec(proj.flat), centers}, 1e-5) <= 1e-4);
}

TEST_CASE("fedcc_train: single client recovers its own exemplars") {
    Rng rng(61);
    Tensor ex({4, 8});
    std::vector<Tensor> rows;
    for (std::size_t k = 0; k < 4; ++k) {
        Tensor u = unit_vec(rng, 8);
        rows.push_back(u);
        for (std::size_t j = 0; j < 8; ++j) ex.at(k, j) = u[j];
    }
    LocalModel m = model_with({0.0}, ex, 10, 0);
    FedCCConfig cfg;
    cfg.steps = 300;
    cfg.seed = 5;
    FedCCResult res = fedcc_train({m}, cfg);
    ExemplarSet merged = merge_exemplars(res.q_global, pool_exemplars({m}));

    // optimal matching: for each input exemplar some merged exemplar is
    // nearly colinear
    for (const Tensor& r : rows) {
        double best = -1.0;
        for (std::size_t k = 0; k < 4; ++k) {
            std::vector<double> row(merged.mat.data().begin() + k * 8,
                                    merged.mat.data().begin() + (k + 1) * 8);
            best = std::max(best, cosine_sim(r, Tensor::vec(row)));
        }
        CHECK(best >= 0.99);
    }

    // duplicated clients behave like the single client
    FedCCResult res2 = fedcc_train({m, m, m}, cfg);
    ExemplarSet merged2 = merge_exemplars(res2.q_global, pool_exemplars({m, m, m}));
    for (const Tensor& r : rows) {
        double best = -1.0;
        for (std::size_t k = 0; k < 4; ++k) {
            std::vector<double> row(merged2.mat.data().begin() + k * 8,
                                    merged2.mat.data().begin() + (k + 1) * 8);
            best = std::max(best, cosine_sim(r, Tensor::vec(row)));
        }
        CHECK(best >= 0.99);
    }
}

TEST_CASE("fedcc_train groups same-mode exemplars despite permuted slots") {
    Rng rng(83);
    std::vector<Tensor> modes;
    for (int k = 0; k < 3; ++k) modes.push_back(unit_vec(rng, 6));

    // two clients share the true modes, but client 1's slots are rotated
    std::vector<std::size_t> perm = {1, 2, 0};
    auto noisy = [&](const Tensor& m) {
        Tensor v = m;
        for (std::size_t j = 0; j < 6; ++j) v[j] += 0.03 * rng.normal();
        return v;
    };
    Tensor exa({3, 6}), exb({3, 6});
    std::vector<int> truth_a(3), truth_b(3);
    for (std::size_t s = 0; s < 3; ++s) {
        Tensor a = noisy(modes[s]);
        Tensor b = noisy(modes[perm[s]]);
        truth_a[s] = static_cast<int>(s);
        truth_b[s] = static_cast<int>(perm[s]);
        for (std::size_t j = 0; j < 6; ++j) {
            exa.at(s, j) = a[j];
            exb.at(s, j) = b[j];
        }
    }
    LocalModel ma = model_with({0.0}, exa, 10, 0);
    LocalModel mb = model_with({0.0}, exb, 10, 1);

    FedCCConfig cfg;
    cfg.steps = 400;
    cfg.seed = 3;
    FedCCResult res = fedcc_train({ma, mb}, cfg);

    // purity of the hard assignment against the true modes
    std::vector<int> truth;
    truth.insert(truth.end(), truth_a.begin(), truth_a.end());
    truth.insert(truth.end(), truth_b.begin(), truth_b.end());
    std::vector<std::size_t> hard(6);
    for (std::size_t i = 0; i < 6; ++i) {
        double best = -1.0;
        for (std::size_t k = 0; k < 3; ++k)
            if (res.q_global.at(i, k) > best) {
                best = res.q_global.at(i, k);
                hard[i] = k;
            }
    }
    std::size_t correct = 0;
    for (std::size_t k = 0; k < 3; ++k) {
        // majority true mode within cluster k
        std::vector<std::size_t> count(3, 0);
        std::size_t members = 0;
        for (std::size_t i = 0; i < 6; ++i)
            if (hard[i] == k) {
                ++count[static_cast<std::size_t>(truth[i])];
                ++members;
            }
        correct += *std::max_element(count.begin(), count.end());
    }
    CHECK(static_cast<double>(correct) / 6.0 >= 0.9);
}

TEST_CASE("merge_exemplars: one-hot groups, uniform grand mean, loop oracle") {
    std::vector<Tensor> pooled = {Tensor::vec({1.0, 0.0}), Tensor::vec({3.0, 0.0}),
                                  Tensor::vec({0.0, 2.0}), Tensor::vec({0.0, 4.0})};

    Tensor onehot({4, 2}, 0.0);
    onehot.at(0, 0) = 1.0;
    onehot.at(1, 0) = 1.0;
    onehot.at(2, 1) = 1.0;
    onehot.at(3, 1) = 1.0;
    ExemplarSet u = merge_exemplars(onehot, pooled);
    CHECK(u.mat.at(0, 0) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(u.mat.at(0, 1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(u.mat.at(1, 1) == doctest::Approx(3.0).epsilon(1e-12));

    Tensor uniform({4, 2}, 0.5);
    ExemplarSet g = merge_exemplars(uniform, pooled);
    for (std::size_t z = 0; z < 2; ++z) {
        CHECK(g.mat.at(z, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(g.mat.at(z, 1) == doctest::Approx(1.5).epsilon(1e-12));
    }

    Rng rng(5);
    Tensor q({4, 3});
    for (std::size_t i = 0; i < 4; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < 3; ++j) {
            q.at(i, j) = rng.uniform(0.01, 1.0);
            row += q.at(i, j);
        }
        for (std::size_t j = 0; j < 3; ++j) q.at(i, j) /= row;
    }
    ExemplarSet r = merge_exemplars(q, pooled);
    for (std::size_t z = 0; z < 3; ++z) {
        double wsum = 0.0;
        for (std::size_t i = 0; i < 4; ++i) wsum += q.at(i, z);
        for (std::size_t j = 0; j < 2; ++j) {
            double want = 0.0;
            for (std::size_t i = 0; i < 4; ++i) want += q.at(i, z) * pooled[i][j] / wsum;
            CHECK(std::abs(r.mat.at(z, j) - want) <= 1e-12);
        }
    }
}

TEST_CASE("merge_exemplars output stays in the convex hull column-wise") {
    Rng rng(8);
    std::vector<Tensor> pooled;
    for (int i = 0; i < 5; ++i) pooled.push_back(unit_vec(rng, 3));
    Tensor q({5, 2});
    for (std::size_t i = 0; i < 5; ++i) {
        double a = rng.uniform(0.0, 1.0);
        q.at(i, 0) = a;
        q.at(i, 1) = 1.0 - a;
    }
    ExemplarSet u = merge_exemplars(q, pooled);
    for (std::size_t z = 0; z < 2; ++z)
        for (std::size_t j = 0; j < 3; ++j) {
            double lo = 1e9, hi = -1e9;
            for (const Tensor& p : pooled) {
                lo = std::min(lo, p[j]);
                hi = std::max(hi, p[j]);
            }
            CHECK(u.mat.at(z, j) >= lo - 1e-12);
            CHECK(u.mat.at(z, j) <= hi + 1e-12);
        }
}
