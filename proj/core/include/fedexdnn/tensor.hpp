#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fedexdnn/util.hpp"

namespace fedexdnn {

// Dense row-major tensor of doubles. Rank 1 and 2 cover everything here.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vec(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
    double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    bool all_finite() const;
    double norm() const;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// ---- plain (non-recorded) numerics ----

Tensor matmul(const Tensor& a, const Tensor& b);
double cosine_sim(const Tensor& a, const Tensor& b);
// softmax of gamma*logits with max subtraction; sums to 1 within 1e-12
Tensor softmax_scaled(const Tensor& logits, double gamma);

class GradTape;

// Handle to a node on a tape. Cheap to copy.
struct Var {
    GradTape* tape = nullptr;
    int idx = -1;
    bool valid() const { return tape != nullptr && idx >= 0; }
};

// Reverse-mode tape over a fixed primitive set. Single-threaded; build a
// fresh tape per training step. Registered parameters always receive a
// gradient from backward(); parameters the scalar does not depend on get
// exact zeros.
class GradTape {
public:
    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    Var constant(Tensor v);
    Var param(Tensor v, std::string name);

    // elementwise, same shape
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var div(Var a, Var b);
    // affine by compile-time constants
    Var scale(Var a, double c);
    Var offset(Var a, double c);
    // matrix product (m x k)(k x n); matmul_nt computes a * b^T
    Var matmul(Var a, Var b);
    Var matmul_nt(Var a, Var b);
    // elementwise nonlinearities
    Var tanh_of(Var a);
    Var sigmoid(Var a);
    Var relu(Var a);
    Var exp_of(Var a);
    Var log_of(Var a);      // argument clamped at 1e-12
    Var softplus(Var a);    // stable log(1 + exp(x))
    // reductions / shape plumbing on the flattened buffer
    Var sum(Var a);
    Var slice(Var a, std::size_t start, std::size_t len);
    Var concat(Var a, Var b);
    Var reshape(Var a, std::vector<std::size_t> shape);
    // L2-normalize the whole buffer as one vector; errors on zero norm
    Var normalize_l2(Var a);
    // tensor (op) scalar node
    Var div_scalar(Var a, Var s);
    Var mul_scalar(Var a, Var s);

    void backward(Var scalar_node);

    const Tensor& value(Var v) const;
    // gradient of the last backward() w.r.t. this node (zeros if untouched)
    Tensor grad(Var v) const;

    std::size_t num_nodes() const { return nodes_.size(); }
    std::size_t num_params() const { return params_.size(); }
    Var param_at(std::size_t i) const { return Var{const_cast<GradTape*>(this), params_[i]}; }
    const std::string& param_name(std::size_t i) const;
    // how many log/div guards fired during forward (degenerate-input diagnostics)
    std::size_t clamp_count() const { return clamp_count_; }

private:
    enum class Op : std::uint8_t {
        Const, Param, Add, Sub, Mul, Div, Scale, Offset, MatMul, MatMulNT,
        Tanh, Sigmoid, Relu, Exp, Log, Softplus, Sum, Slice, Concat, Reshape,
        NormalizeL2, DivScalar, MulScalar
    };
    struct Node {
        Tensor value;
        std::vector<double> grad;  // lazily sized
        Op op = Op::Const;
        int a = -1;
        int b = -1;
        double c0 = 0.0;
        std::size_t p0 = 0, p1 = 0;
    };

    int push(Node n);
    Var make(Op op, int a, int b, Tensor value, double c0 = 0.0, std::size_t p0 = 0,
             std::size_t p1 = 0);
    std::vector<double>& grad_buf(int i);
    void check_same_tape(Var v) const;

    std::vector<Node> nodes_;
    std::vector<int> params_;
    std::vector<std::string> param_names_;
    std::size_t clamp_count_ = 0;
};

// operator sugar over tape ops
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator*(double c, Var a);
Var operator*(Var a, double c);
Var operator+(Var a, double c);
Var operator-(Var a, double c);
Var operator-(Var a);

// ---- recorded composites used across losses ----

// cosine similarity of two vectors as a scalar node
Var cosine_sim(Var a, Var b);
// softmax of gamma*row with a detached max subtraction (row is rank-1)
Var row_softmax_scaled(Var row, double gamma);
// apply row_softmax_scaled to each row of an n x k matrix
Var softmax_rows_scaled(Var mat, double gamma);
// L2-normalize each row of an n x k matrix
Var normalize_rows(Var mat);
// stack rank-1 vars of equal length into an n x cols matrix
Var concat_rows(std::span<const Var> rows, std::size_t cols);

// Builds the scalar under test on a fresh tape from the given parameters.
using ScalarBuilder = std::function<Var(GradTape&, const std::vector<Var>&)>;

// Max over parameter elements of |analytic - central difference| / max(1, |analytic|).
double grad_check(const ScalarBuilder& build, const std::vector<Tensor>& params, double step);

}  // namespace fedexdnn
