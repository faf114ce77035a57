#include <cmath>

#include "doctest.h"
#include "fedexdnn/tensor.hpp"

using namespace fedexdnn;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

}  // namespace

TEST_CASE("matmul identity and hand arithmetic") {
    Tensor eye = Tensor::matrix(2, 2, {1, 0, 0, 1});
    Tensor a = Tensor::matrix(2, 2, {3, -1, 2, 5});
    Tensor r = matmul(eye, a);
    for (std::size_t i = 0; i < 4; ++i) CHECK(r[i] == a[i]);

    Tensor b = Tensor::matrix(2, 2, {1, 2, 3, 4});
    Tensor c = Tensor::matrix(2, 1, {0, 1});
    Tensor p = matmul(b, c);
    CHECK(p[0] == doctest::Approx(2.0));
    CHECK(p[1] == doctest::Approx(4.0));
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(7);
    Tensor a = random_tensor(rng, {3, 4});
    Tensor b = random_tensor(rng, {4, 2});
    Tensor got = matmul(a, b);
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = 0; j < 2; ++j) {
            double want = 0.0;
            for (std::size_t k = 0; k < 4; ++k) want += a.at(i, k) * b.at(k, j);
            CHECK(std::abs(got.at(i, j) - want) < 1e-12);
        }
}

TEST_CASE("matmul shape mismatch is a contract violation") {
    Tensor a = Tensor::matrix(2, 3, std::vector<double>(6, 1.0));
    Tensor b = Tensor::matrix(2, 2, std::vector<double>(4, 1.0));
    CHECK_THROWS_AS(matmul(a, b), ContractError);
}

TEST_CASE("cosine similarity basics") {
    Tensor a = Tensor::vec({1, 0});
    Tensor b = Tensor::vec({0, 1});
    CHECK(cosine_sim(a, a) == doctest::Approx(1.0));
    CHECK(cosine_sim(a, b) == doctest::Approx(0.0));
    CHECK(cosine_sim(Tensor::vec({1, 1}), Tensor::vec({1, -1})) == doctest::Approx(0.0));
    CHECK(cosine_sim(Tensor::vec({2, 0}), Tensor::vec({1, 0})) == doctest::Approx(1.0));
    CHECK_THROWS_AS(cosine_sim(Tensor::vec({0, 0}), a), NumericError);
}

TEST_CASE("cosine similarity symmetry and bound") {
    Rng rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        Tensor a = random_tensor(rng, {5});
        Tensor b = random_tensor(rng, {5});
        double ab = cosine_sim(a, b);
        CHECK(ab == cosine_sim(b, a));
        CHECK(std::abs(ab) <= 1.0 + 1e-12);
    }
}

TEST_CASE("softmax_scaled values and invariants") {
    Tensor equal = Tensor::vec({0.3, 0.3, 0.3, 0.3});
    Tensor u = softmax_scaled(equal, 7.0);
    for (std::size_t i = 0; i < 4; ++i) CHECK(u[i] == doctest::Approx(0.25));

    Tensor two = softmax_scaled(Tensor::vec({1.0, 0.0}), 2.0);
    CHECK(two[0] == doctest::Approx(0.8807970779778823).epsilon(1e-10));
    CHECK(two[1] == doctest::Approx(0.11920292202211755).epsilon(1e-10));

    Tensor sharp = softmax_scaled(Tensor::vec({1.0, 0.0}), 100.0);
    CHECK(sharp[0] > 0.99);

    Rng rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, {6}, -3.0, 3.0);
        Tensor s = softmax_scaled(x, rng.uniform(0.5, 20.0));
        double total = 0.0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            CHECK(s[i] >= 0.0);
            total += s[i];
        }
        CHECK(std::abs(total - 1.0) <= 1e-12);
    }
}

TEST_CASE("grad_check on the quadratic and a constant") {
    Rng rng(5);
    Tensor x = random_tensor(rng, {6});
    double err = grad_check(
        [](GradTape& t, const std::vector<Var>& p) { return t.scale(t.sum(t.mul(p[0], p[0])), 0.5); },
        {x}, 1e-5);
    CHECK(err < 1e-8);

    double cerr = grad_check(
        [](GradTape& t, const std::vector<Var>&) { return t.constant(Tensor::scalar(3.0)); },
        {x}, 1e-5);
    CHECK(cerr == 0.0);
}

TEST_CASE("grad_check covers every primitive") {
    Rng rng(17);
    Tensor a = random_tensor(rng, {3, 4}, 0.2, 1.5);  // positive: log/div-safe
    Tensor b = random_tensor(rng, {3, 4}, 0.2, 1.5);
    Tensor m = random_tensor(rng, {4, 2});

    auto build = [](GradTape& t, const std::vector<Var>& p) {
        Var a = p[0], b = p[1], m = p[2];
        Var mixed = t.div(t.mul(t.add(a, b), t.sub(a, t.scale(b, 0.5))), t.offset(b, 2.0));
        Var mm = t.matmul(mixed, m);                       // 3x2
        Var nt = t.matmul_nt(mm, t.constant(Tensor::matrix(5, 2, {1, 2, 0.5, -1, 2, 0.25, -0.75, 1, 0.1, 0.9})));
        Var nl = t.tanh_of(t.slice(t.reshape(nt, {15}), 2, 6));
        Var sg = t.sigmoid(nl);
        Var sp = t.softplus(t.concat(sg, t.relu(t.offset(nl, 0.3))));
        Var ex = t.exp_of(t.scale(sp, 0.25));
        Var lg = t.log_of(t.offset(ex, 1.0));
        Var nm = t.normalize_l2(lg);
        Var s = t.sum(nm);
        Var d = t.div_scalar(lg, t.offset(s, 3.0));
        Var u = t.mul_scalar(nm, t.sum(d));
        return t.sum(u);
    };
    double err = grad_check(build, {a, b, m}, 1e-5);
    CHECK(err <= 1e-4);
}

TEST_CASE("tape composite helpers differentiate cleanly") {
    Rng rng(23);
    Tensor e = random_tensor(rng, {4, 3});
    Tensor c = random_tensor(rng, {2, 3});
    auto build = [](GradTape& t, const std::vector<Var>& p) {
        Var sims = t.matmul_nt(normalize_rows(p[0]), normalize_rows(p[1]));
        Var q = softmax_rows_scaled(sims, 2.5);
        return t.sum(t.mul(q, q));
    };
    CHECK(grad_check(build, {e, c}, 1e-5) <= 1e-4);
}

TEST_CASE("non-participating parameters receive exact zero gradients") {
    GradTape t;
    Var used = t.param(Tensor::vec({1.0, 2.0}), "used");
    Var unused = t.param(Tensor::vec({3.0, 4.0}), "unused");
    Var loss = t.sum(t.mul(used, used));
    t.backward(loss);
    Tensor gu = t.grad(unused);
    CHECK(gu[0] == 0.0);
    CHECK(gu[1] == 0.0);
    Tensor g = t.grad(used);
    CHECK(g[0] == doctest::Approx(2.0));
    CHECK(g[1] == doctest::Approx(4.0));
}

TEST_CASE("every registered parameter has exactly one gradient slot") {
    GradTape t;
    Var a = t.param(Tensor::vec({1.0}), "a");
    Var b = t.param(Tensor::vec({2.0}), "b");
    Var loss = t.sum(t.mul(a, b));
    t.backward(loss);
    REQUIRE(t.num_params() == 2);
    CHECK(t.param_name(0) == "a");
    CHECK(t.grad(t.param_at(0)).size() == 1);
    CHECK(t.grad(t.param_at(1)).size() == 1);
    // re-running backward resets accumulators instead of doubling them
    t.backward(loss);
    CHECK(t.grad(a)[0] == doctest::Approx(2.0));
}

TEST_CASE("row softmax is invariant to the detached max shift") {
    GradTape t;
    Var row = t.constant(Tensor::vec({100.0, 100.5, 99.0}));
    Tensor q = t.value(row_softmax_scaled(row, 3.0));
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) total += q[i];
    CHECK(std::abs(total - 1.0) <= 1e-12);
    CHECK(q[1] > q[0]);
    CHECK(q[0] > q[2]);
}

TEST_CASE("var operator sugar matches explicit calls") {
    GradTape t;
    Var a = t.constant(Tensor::vec({2.0, 3.0}));
    Var b = t.constant(Tensor::vec({5.0, 7.0}));
    CHECK(t.value(a + b)[1] == 10.0);
    CHECK(t.value(a * b)[0] == 10.0);
    CHECK(t.value(2.0 * a)[1] == 6.0);
    CHECK(t.value(-(a - b))[0] == 3.0);
}
