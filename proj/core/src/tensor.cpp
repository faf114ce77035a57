#include "fedexdnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace fedexdnn {

namespace {

std::size_t shape_product(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) {
        if (e == 0) throw ContractError("Tensor: zero extent in shape");
        n *= e;
    }
    return n;
}

constexpr double kLogEps = 1e-12;

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(shape_product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (shape_product(shape_) != data_.size())
        throw ContractError("Tensor: shape does not match value count");
}

Tensor Tensor::vec(std::vector<double> v) {
    std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ContractError("Tensor::rows: rank-2 tensor required");
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ContractError("Tensor::cols: rank-2 tensor required");
    return shape_[1];
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

double Tensor::norm() const {
    double s = 0.0;
    for (double v : data_) s += v * v;
    return std::sqrt(s);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw ContractError("matmul: inner extents must match");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
        }
    }
    return out;
}

double cosine_sim(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw ContractError("cosine_sim: length mismatch");
    double na = a.norm(), nb = b.norm();
    if (na < kLogEps || nb < kLogEps) throw NumericError("cosine_sim: zero-norm input");
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) dot += a[i] * b[i];
    return dot / (na * nb);
}

Tensor softmax_scaled(const Tensor& logits, double gamma) {
    if (gamma <= 0.0) throw ContractError("softmax_scaled: gamma must be positive");
    if (!logits.all_finite()) throw ContractError("softmax_scaled: non-finite logits");
    const std::size_t n = logits.size();
    Tensor out(logits.shape());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, gamma * logits[i]);
    double z = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = std::exp(gamma * logits[i] - mx);
        z += out[i];
    }
    for (std::size_t i = 0; i < n; ++i) out[i] /= z;
    return out;
}

// ---- GradTape ----

int GradTape::push(Node n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
}

Var GradTape::make(Op op, int a, int b, Tensor value, double c0, std::size_t p0, std::size_t p1) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.a = a;
    n.b = b;
    n.c0 = c0;
    n.p0 = p0;
    n.p1 = p1;
    return Var{this, push(std::move(n))};
}

void GradTape::check_same_tape(Var v) const {
    if (v.tape != this || v.idx < 0 || v.idx >= static_cast<int>(nodes_.size()))
        throw ContractError("GradTape: var does not belong to this tape");
}

Var GradTape::constant(Tensor v) { return make(Op::Const, -1, -1, std::move(v)); }

Var GradTape::param(Tensor v, std::string name) {
    Var out = make(Op::Param, -1, -1, std::move(v));
    params_.push_back(out.idx);
    param_names_.push_back(std::move(name));
    return out;
}

const std::string& GradTape::param_name(std::size_t i) const { return param_names_.at(i); }

const Tensor& GradTape::value(Var v) const {
    check_same_tape(v);
    return nodes_[static_cast<std::size_t>(v.idx)].value;
}

Tensor GradTape::grad(Var v) const {
    check_same_tape(v);
    const Node& n = nodes_[static_cast<std::size_t>(v.idx)];
    if (n.grad.empty()) return Tensor(n.value.shape(), 0.0);
    return Tensor(n.value.shape(), n.grad);
}

std::vector<double>& GradTape::grad_buf(int i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
}

namespace {
void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) throw ContractError(std::string(what) + ": shape mismatch");
}
}  // namespace

Var GradTape::add(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require_same_shape(x, y, "add");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
    return make(Op::Add, a.idx, b.idx, std::move(out));
}

Var GradTape::sub(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require_same_shape(x, y, "sub");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
    return make(Op::Sub, a.idx, b.idx, std::move(out));
}

Var GradTape::mul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require_same_shape(x, y, "mul");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
    return make(Op::Mul, a.idx, b.idx, std::move(out));
}

Var GradTape::div(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    require_same_shape(x, y, "div");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (std::abs(y[i]) < kLogEps) throw NumericError("div: near-zero denominator");
        out[i] = x[i] / y[i];
    }
    return make(Op::Div, a.idx, b.idx, std::move(out));
}

Var GradTape::scale(Var a, double c) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
    return make(Op::Scale, a.idx, -1, std::move(out), c);
}

Var GradTape::offset(Var a, double c) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
    return make(Op::Offset, a.idx, -1, std::move(out), c);
}

Var GradTape::matmul(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    return make(Op::MatMul, a.idx, b.idx, fedexdnn::matmul(value(a), value(b)));
}

Var GradTape::matmul_nt(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols())
        throw ContractError("matmul_nt: inner extents must match");
    const std::size_t m = x.rows(), k = x.cols(), n = y.rows();
    Tensor out({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += x[i * k + p] * y[j * k + p];
            out[i * n + j] = s;
        }
    return make(Op::MatMulNT, a.idx, b.idx, std::move(out));
}

Var GradTape::tanh_of(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
    return make(Op::Tanh, a.idx, -1, std::move(out));
}

Var GradTape::sigmoid(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double z = x[i];
        out[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
    }
    return make(Op::Sigmoid, a.idx, -1, std::move(out));
}

Var GradTape::relu(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
    return make(Op::Relu, a.idx, -1, std::move(out));
}

Var GradTape::exp_of(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(x[i]);
    if (!out.all_finite()) throw NumericError("exp: overflow to non-finite value");
    return make(Op::Exp, a.idx, -1, std::move(out));
}

Var GradTape::log_of(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double v = x[i];
        if (v < kLogEps) {
            v = kLogEps;
            ++clamp_count_;
        }
        out[i] = std::log(v);
    }
    return make(Op::Log, a.idx, -1, std::move(out));
}

Var GradTape::softplus(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        double z = x[i];
        out[i] = z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
    }
    return make(Op::Softplus, a.idx, -1, std::move(out));
}

Var GradTape::sum(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    double s = std::accumulate(x.data().begin(), x.data().end(), 0.0);
    return make(Op::Sum, a.idx, -1, Tensor::scalar(s));
}

Var GradTape::slice(Var a, std::size_t start, std::size_t len) {
    check_same_tape(a);
    const Tensor& x = value(a);
    if (start + len > x.size()) throw ContractError("slice: range out of bounds");
    std::vector<double> v(x.data().begin() + static_cast<std::ptrdiff_t>(start),
                          x.data().begin() + static_cast<std::ptrdiff_t>(start + len));
    return make(Op::Slice, a.idx, -1, Tensor::vec(std::move(v)), 0.0, start, len);
}

Var GradTape::concat(Var a, Var b) {
    check_same_tape(a);
    check_same_tape(b);
    const Tensor& x = value(a);
    const Tensor& y = value(b);
    std::vector<double> v;
    v.reserve(x.size() + y.size());
    v.insert(v.end(), x.data().begin(), x.data().end());
    v.insert(v.end(), y.data().begin(), y.data().end());
    return make(Op::Concat, a.idx, b.idx, Tensor::vec(std::move(v)), 0.0, x.size());
}

Var GradTape::reshape(Var a, std::vector<std::size_t> shape) {
    check_same_tape(a);
    const Tensor& x = value(a);
    Tensor out(std::move(shape), x.values());
    return make(Op::Reshape, a.idx, -1, std::move(out));
}

Var GradTape::normalize_l2(Var a) {
    check_same_tape(a);
    const Tensor& x = value(a);
    double n = x.norm();
    if (n < kLogEps) throw NumericError("normalize_l2: zero-norm input");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / n;
    return make(Op::NormalizeL2, a.idx, -1, std::move(out), n);
}

Var GradTape::div_scalar(Var a, Var s) {
    check_same_tape(a);
    check_same_tape(s);
    const Tensor& x = value(a);
    const Tensor& sv = value(s);
    if (sv.size() != 1) throw ContractError("div_scalar: scalar node required");
    if (std::abs(sv[0]) < kLogEps) throw NumericError("div_scalar: near-zero denominator");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] / sv[0];
    return make(Op::DivScalar, a.idx, s.idx, std::move(out));
}

Var GradTape::mul_scalar(Var a, Var s) {
    check_same_tape(a);
    check_same_tape(s);
    const Tensor& x = value(a);
    const Tensor& sv = value(s);
    if (sv.size() != 1) throw ContractError("mul_scalar: scalar node required");
    Tensor out(x.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * sv[0];
    return make(Op::MulScalar, a.idx, s.idx, std::move(out));
}

void GradTape::backward(Var scalar_node) {
    check_same_tape(scalar_node);
    if (value(scalar_node).size() != 1)
        throw ContractError("backward: seed must be a scalar node");
    for (Node& n : nodes_) n.grad.clear();
    grad_buf(scalar_node.idx)[0] = 1.0;

    for (int i = scalar_node.idx; i >= 0; --i) {
        Node& n = nodes_[static_cast<std::size_t>(i)];
        if (n.grad.empty()) continue;
        const std::vector<double>& g = n.grad;
        switch (n.op) {
            case Op::Const:
            case Op::Param:
                break;
            case Op::Add: {
                auto& ga = grad_buf(n.a);
                auto& gb = grad_buf(n.b);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga[j] += g[j];
                    gb[j] += g[j];
                }
                break;
            }
            case Op::Sub: {
                auto& ga = grad_buf(n.a);
                auto& gb = grad_buf(n.b);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga[j] += g[j];
                    gb[j] -= g[j];
                }
                break;
            }
            case Op::Mul: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& y = nodes_[static_cast<std::size_t>(n.b)].value;
                auto& ga = grad_buf(n.a);
                auto& gb = grad_buf(n.b);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga[j] += g[j] * y[j];
                    gb[j] += g[j] * x[j];
                }
                break;
            }
            case Op::Div: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& y = nodes_[static_cast<std::size_t>(n.b)].value;
                auto& ga = grad_buf(n.a);
                auto& gb = grad_buf(n.b);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga[j] += g[j] / y[j];
                    gb[j] -= g[j] * x[j] / (y[j] * y[j]);
                }
                break;
            }
            case Op::Scale: {
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j) ga[j] += n.c0 * g[j];
                break;
            }
            case Op::Offset:
            case Op::Reshape: {
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j];
                break;
            }
            case Op::MatMul: {
                const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
                const std::size_t m = A.rows(), k = A.cols(), c = B.cols();
                auto& ga = grad_buf(n.a);
                auto& gb = grad_buf(n.b);
                // gA = G * B^T ; gB = A^T * G
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < c; ++j) s += g[r * c + j] * B[p * c + j];
                        ga[r * k + p] += s;
                    }
                for (std::size_t p = 0; p < k; ++p)
                    for (std::size_t j = 0; j < c; ++j) {
                        double s = 0.0;
                        for (std::size_t r = 0; r < m; ++r) s += A[r * k + p] * g[r * c + j];
                        gb[p * c + j] += s;
                    }
                break;
            }
            case Op::MatMulNT: {
                const Tensor& A = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& B = nodes_[static_cast<std::size_t>(n.b)].value;
                const std::size_t m = A.rows(), k = A.cols(), c = B.rows();
                auto& ga = grad_buf(n.a);
                auto& gb = grad_buf(n.b);
                // out = A * B^T ; gA = G * B ; gB = G^T * A
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < c; ++j) s += g[r * c + j] * B[j * k + p];
                        ga[r * k + p] += s;
                    }
                for (std::size_t j = 0; j < c; ++j)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t r = 0; r < m; ++r) s += g[r * c + j] * A[r * k + p];
                        gb[j * k + p] += s;
                    }
                break;
            }
            case Op::Tanh: {
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j)
                    ga[j] += g[j] * (1.0 - n.value[j] * n.value[j]);
                break;
            }
            case Op::Sigmoid: {
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j)
                    ga[j] += g[j] * n.value[j] * (1.0 - n.value[j]);
                break;
            }
            case Op::Relu: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j)
                    if (x[j] > 0.0) ga[j] += g[j];
                break;
            }
            case Op::Exp: {
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j) ga[j] += g[j] * n.value[j];
                break;
            }
            case Op::Log: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j)
                    ga[j] += g[j] / std::max(x[j], kLogEps);
                break;
            }
            case Op::Softplus: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    double z = x[j];
                    double s = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                                        : std::exp(z) / (1.0 + std::exp(z));
                    ga[j] += g[j] * s;
                }
                break;
            }
            case Op::Sum: {
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < ga.size(); ++j) ga[j] += g[0];
                break;
            }
            case Op::Slice: {
                auto& ga = grad_buf(n.a);
                for (std::size_t j = 0; j < n.p1; ++j) ga[n.p0 + j] += g[j];
                break;
            }
            case Op::Concat: {
                auto& ga = grad_buf(n.a);
                auto& gb = grad_buf(n.b);
                for (std::size_t j = 0; j < n.p0; ++j) ga[j] += g[j];
                for (std::size_t j = n.p0; j < g.size(); ++j) gb[j - n.p0] += g[j];
                break;
            }
            case Op::NormalizeL2: {
                auto& ga = grad_buf(n.a);
                const double nrm = n.c0;
                double yg = 0.0;
                for (std::size_t j = 0; j < g.size(); ++j) yg += n.value[j] * g[j];
                for (std::size_t j = 0; j < g.size(); ++j)
                    ga[j] += (g[j] - n.value[j] * yg) / nrm;
                break;
            }
            case Op::DivScalar: {
                const Tensor& s = nodes_[static_cast<std::size_t>(n.b)].value;
                auto& ga = grad_buf(n.a);
                auto& gs = grad_buf(n.b);
                double acc = 0.0;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga[j] += g[j] / s[0];
                    acc += g[j] * n.value[j];
                }
                gs[0] -= acc / s[0];
                break;
            }
            case Op::MulScalar: {
                const Tensor& x = nodes_[static_cast<std::size_t>(n.a)].value;
                const Tensor& s = nodes_[static_cast<std::size_t>(n.b)].value;
                auto& ga = grad_buf(n.a);
                auto& gs = grad_buf(n.b);
                double acc = 0.0;
                for (std::size_t j = 0; j < g.size(); ++j) {
                    ga[j] += g[j] * s[0];
                    acc += g[j] * x[j];
                }
                gs[0] += acc;
                break;
            }
        }
    }
}

// ---- operators ----

Var operator+(Var a, Var b) { return a.tape->add(a, b); }
Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
Var operator/(Var a, Var b) { return a.tape->div(a, b); }
Var operator*(double c, Var a) { return a.tape->scale(a, c); }
Var operator*(Var a, double c) { return a.tape->scale(a, c); }
Var operator+(Var a, double c) { return a.tape->offset(a, c); }
Var operator-(Var a, double c) { return a.tape->offset(a, -c); }
Var operator-(Var a) { return a.tape->scale(a, -1.0); }

// ---- composites ----

Var cosine_sim(Var a, Var b) {
    GradTape& t = *a.tape;
    return t.sum(t.mul(t.normalize_l2(a), t.normalize_l2(b)));
}

Var row_softmax_scaled(Var row, double gamma) {
    GradTape& t = *row.tape;
    Var z = t.scale(row, gamma);
    const Tensor& zv = t.value(z);
    double mx = *std::max_element(zv.data().begin(), zv.data().end());
    // subtracting the detached max leaves value and gradient unchanged
    Var e = t.exp_of(t.offset(z, -mx));
    return t.div_scalar(e, t.sum(e));
}

Var softmax_rows_scaled(Var mat, double gamma) {
    GradTape& t = *mat.tape;
    const Tensor& m = t.value(mat);
    const std::size_t rows = m.rows(), cols = m.cols();
    Var flat = t.reshape(mat, {rows * cols});
    std::vector<Var> out;
    out.reserve(rows);
    for (std::size_t i = 0; i < rows; ++i)
        out.push_back(row_softmax_scaled(t.slice(flat, i * cols, cols), gamma));
    return concat_rows(out, cols);
}

Var normalize_rows(Var mat) {
    GradTape& t = *mat.tape;
    const Tensor& m = t.value(mat);
    const std::size_t rows = m.rows(), cols = m.cols();
    Var flat = t.reshape(mat, {rows * cols});
    std::vector<Var> out;
    out.reserve(rows);
    for (std::size_t i = 0; i < rows; ++i)
        out.push_back(t.normalize_l2(t.slice(flat, i * cols, cols)));
    return concat_rows(out, cols);
}

Var concat_rows(std::span<const Var> rows, std::size_t cols) {
    if (rows.empty()) throw ContractError("concat_rows: no rows");
    GradTape& t = *rows[0].tape;
    Var acc = rows[0];
    for (std::size_t i = 1; i < rows.size(); ++i) acc = t.concat(acc, rows[i]);
    return t.reshape(acc, {rows.size(), cols});
}

double grad_check(const ScalarBuilder& build, const std::vector<Tensor>& params, double step) {
    if (step <= 0.0 || step > 1e-3) throw ContractError("grad_check: step must be in (0, 1e-3]");

    auto eval = [&](const std::vector<Tensor>& p) {
        GradTape t;
        std::vector<Var> vars;
        vars.reserve(p.size());
        for (std::size_t i = 0; i < p.size(); ++i)
            vars.push_back(t.param(p[i], "p" + std::to_string(i)));
        Var out = build(t, vars);
        return t.value(out)[0];
    };

    GradTape t;
    std::vector<Var> vars;
    vars.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        vars.push_back(t.param(params[i], "p" + std::to_string(i)));
    Var out = build(t, vars);
    t.backward(out);

    double worst = 0.0;
    std::vector<Tensor> work = params;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor analytic = t.grad(vars[pi]);
        for (std::size_t j = 0; j < work[pi].size(); ++j) {
            const double orig = work[pi][j];
            work[pi][j] = orig + step;
            double fp = eval(work);
            work[pi][j] = orig - step;
            double fm = eval(work);
            work[pi][j] = orig;
            double fd = (fp - fm) / (2.0 * step);
            double err = std::abs(analytic[j] - fd) / std::max(1.0, std::abs(analytic[j]));
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace fedexdnn
