#pragma once

// Dense f64 tensors (rank <= 3) with reverse-mode automatic differentiation
// on a dynamic tape. The tape is rebuilt on every forward pass; graph shape
// may change per input (variable-size molecular graphs).
//
// Tensors are immutable values: shape + shared flat data + an optional node
// handle into the tape that recorded them. Ops whose inputs carry no tape run
// eagerly and return constants.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "molkan/rng.hpp"

namespace molkan {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string r = "[";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) r += ", ";
        r += std::to_string(s[i]);
    }
    return r + "]";
}

class ShapeError : public std::runtime_error {
public:
    ShapeError(const std::string& op, const std::string& what)
        : std::runtime_error(op + ": " + what) {}
};

class IndexError : public std::runtime_error {
public:
    IndexError(const std::string& op, const std::string& what)
        : std::runtime_error(op + ": " + what) {}
};

class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& what) : std::runtime_error(what) {}
};

class Tape;

struct Tensor {
    Shape shape;
    std::shared_ptr<std::vector<double>> data;
    Tape* tape = nullptr;
    int node = -1;

    Tensor() : data(std::make_shared<std::vector<double>>()) {}
    Tensor(Shape s, std::shared_ptr<std::vector<double>> d) : shape(std::move(s)), data(std::move(d)) {}

    int64_t size() const { return numel(shape); }
    int rank() const { return int(shape.size()); }
    // 2D helpers; 1D tensors count as a single column of rows
    int rows() const { return shape.empty() ? 1 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double* ptr() { return data->data(); }
    const double* ptr() const { return data->data(); }

    double item() const {
        if (size() != 1) throw ContractError("item(): tensor is not scalar, shape " + shape_str(shape));
        return (*data)[0];
    }
    double operator()(int i) const { return (*data)[i]; }
    double operator()(int i, int j) const { return (*data)[size_t(i) * shape[1] + j]; }

    static Tensor zeros(Shape s) {
        Tensor t;
        t.shape = std::move(s);
        t.data = std::make_shared<std::vector<double>>(size_t(numel(t.shape)), 0.0);
        return t;
    }
    static Tensor full(Shape s, double v) {
        Tensor t = zeros(std::move(s));
        std::fill(t.data->begin(), t.data->end(), v);
        return t;
    }
    static Tensor from_vector(std::vector<double> v, Shape s) {
        if (int64_t(v.size()) != numel(s))
            throw ShapeError("from_vector", "data length " + std::to_string(v.size()) +
                                                " does not match shape " + shape_str(s));
        Tensor t;
        t.shape = std::move(s);
        t.data = std::make_shared<std::vector<double>>(std::move(v));
        return t;
    }
    static Tensor scalar(double v) { return from_vector({v}, {1}); }
};

// A learnable value with a gradient accumulator and a unique name path.
struct Parameter {
    std::string name;
    Tensor value;
    std::vector<double> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor v)
        : name(std::move(n)), value(std::move(v)), grad(size_t(value.size()), 0.0) {}

    int64_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

    static Parameter uniform(std::string name, Shape shape, double lo, double hi, Rng& rng) {
        Tensor v = Tensor::zeros(std::move(shape));
        for (auto& x : *v.data) x = rng.uniform(lo, hi);
        return Parameter(std::move(name), std::move(v));
    }
    static Parameter zeros(std::string name, Shape shape) {
        return Parameter(std::move(name), Tensor::zeros(std::move(shape)));
    }
};

// Append-only record of differentiable operations. Node ids are topological:
// every node's inputs have smaller ids. Gradient buffers are allocated during
// backward, only for nodes actually reached from the root.
class Tape {
public:
    struct Node {
        const char* op;
        std::vector<int> inputs;
        int64_t out_numel;
        std::function<void(Tape&)> backward;
    };

    int record(const char* op, std::vector<int> inputs, int64_t out_numel) {
        nodes_.push_back(Node{op, std::move(inputs), out_numel, nullptr});
        return int(nodes_.size()) - 1;
    }
    void set_backward(int id, std::function<void(Tape&)> fn) { nodes_[size_t(id)].backward = std::move(fn); }

    size_t num_nodes() const { return nodes_.size(); }
    const Node& node(int id) const { return nodes_[size_t(id)]; }

    // Registers a parameter as a leaf. Watching the same parameter twice
    // returns the same node so gradient contributions accumulate.
    Tensor watch(Parameter& p) {
        auto it = watched_ids_.find(&p);
        if (it != watched_ids_.end()) {
            Tensor t(p.value.shape, p.value.data);
            t.tape = this;
            t.node = it->second;
            return t;
        }
        int id = record("param", {}, p.value.size());
        watched_.push_back(&p);
        watched_ids_[&p] = id;
        Tensor t(p.value.shape, p.value.data);
        t.tape = this;
        t.node = id;
        return t;
    }

    bool reached(int id) const { return id >= 0 && id < int(present_.size()) && present_[size_t(id)]; }

    // Gradient buffer for a node, zero-initialized on first touch.
    std::vector<double>& grad_buf(int id) {
        if (!present_[size_t(id)]) {
            grads_[size_t(id)].assign(size_t(nodes_[size_t(id)].out_numel), 0.0);
            present_[size_t(id)] = 1;
        }
        return grads_[size_t(id)];
    }
    const std::vector<double>& grad_of(int id) const { return grads_[size_t(id)]; }

    // Reverse sweep from a scalar root. Fills Parameter::grad for every
    // watched parameter reachable from the root; unreachable watched
    // parameters get zero grad.
    void backward(const Tensor& root) {
        if (root.tape != nullptr && root.tape != this)
            throw ContractError("backward: root tensor belongs to a different tape");
        if (root.size() != 1)
            throw ContractError("backward: root must be scalar, got shape " + shape_str(root.shape));
        for (Parameter* p : watched_) p->zero_grad();
        if (root.node < 0) return;  // constant root: nothing reachable

        grads_.assign(nodes_.size(), {});
        present_.assign(nodes_.size(), 0);
        grad_buf(root.node)[0] = 1.0;
        for (int id = root.node; id >= 0; --id) {
            if (present_[size_t(id)] && nodes_[size_t(id)].backward) nodes_[size_t(id)].backward(*this);
        }
        for (Parameter* p : watched_) {
            int id = watched_ids_[p];
            if (present_[size_t(id)]) {
                const auto& g = grads_[size_t(id)];
                for (size_t i = 0; i < g.size(); ++i) p->grad[i] += g[i];
            }
        }
    }

private:
    std::vector<Node> nodes_;
    std::vector<std::vector<double>> grads_;
    std::vector<char> present_;
    std::vector<Parameter*> watched_;
    std::unordered_map<Parameter*, int> watched_ids_;
};

namespace detail {

inline Tape* merge_tapes(const char* op, const Tensor& a, const Tensor& b) {
    if (a.tape && b.tape && a.tape != b.tape)
        throw ContractError(std::string(op) + ": operands recorded on different tapes");
    return a.tape ? a.tape : b.tape;
}

inline Tensor make_result(Shape shape, std::vector<double> data, Tape* tape) {
    Tensor t = Tensor::from_vector(std::move(data), std::move(shape));
    t.tape = tape;
    return t;
}

// y = alpha * x + y over n entries
inline void axpy(double alpha, const double* x, double* y, int n) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

inline double dot(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

// C(m x n) += op(A) * op(B), row-major. Accumulating form so backward passes
// can stack contributions from multiple consumers into one gradient buffer.
inline void matmul_raw(const double* A, const double* B, double* C, int m, int n, int k, bool ta,
                       bool tb) {
    if (!ta && !tb) {
        for (int i = 0; i < m; ++i) {
            const double* arow = A + size_t(i) * k;
            double* crow = C + size_t(i) * n;
            for (int p = 0; p < k; ++p) {
                double a = arow[p];
                if (a != 0.0) axpy(a, B + size_t(p) * n, crow, n);
            }
        }
    } else if (!ta && tb) {
        for (int i = 0; i < m; ++i) {
            const double* arow = A + size_t(i) * k;
            double* crow = C + size_t(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += dot(arow, B + size_t(j) * k, k);
        }
    } else if (ta && !tb) {
        for (int p = 0; p < k; ++p) {
            const double* arow = A + size_t(p) * m;
            const double* brow = B + size_t(p) * n;
            for (int i = 0; i < m; ++i) {
                double a = arow[i];
                if (a != 0.0) axpy(a, brow, C + size_t(i) * n, n);
            }
        }
    } else {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) {
                double s = 0.0;
                for (int p = 0; p < k; ++p) s += A[size_t(p) * m + i] * B[size_t(j) * k + p];
                C[size_t(i) * n + j] += s;
            }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise binary ops: same shape, or one operand scalar
// ---------------------------------------------------------------------------

namespace detail {

enum class BinKind { Add, Sub, Mul };

inline Tensor binary_op(const char* name, BinKind kind, const Tensor& a, const Tensor& b) {
    const bool a_scalar = a.size() == 1;
    const bool b_scalar = b.size() == 1;
    if (!(a.shape == b.shape || a_scalar || b_scalar))
        throw ShapeError(name, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));

    const Shape& out_shape = a_scalar && !b_scalar ? b.shape : a.shape;
    const int64_t n = numel(out_shape);
    std::vector<double> out(size_t(n), 0.0);
    const double* pa = a.ptr();
    const double* pb = b.ptr();
    for (int64_t i = 0; i < n; ++i) {
        double x = pa[a_scalar ? 0 : i];
        double y = pb[b_scalar ? 0 : i];
        out[size_t(i)] = kind == BinKind::Add ? x + y : kind == BinKind::Sub ? x - y : x * y;
    }
    Tape* tp = merge_tapes(name, a, b);
    Tensor r = make_result(out_shape, std::move(out), tp);
    if (!tp) return r;
    r.node = tp->record(name, {a.node, b.node}, n);
    tp->set_backward(r.node, [name, kind, a, b, a_scalar, b_scalar, n, id = r.node](Tape& t) {
        const auto& g = t.grad_of(id);
        if (a.node >= 0) {
            auto& ga = t.grad_buf(a.node);
            for (int64_t i = 0; i < n; ++i) {
                double d = g[size_t(i)];
                if (kind == BinKind::Mul) d *= (*b.data)[b_scalar ? 0 : size_t(i)];
                ga[a_scalar ? 0 : size_t(i)] += d;
            }
        }
        if (b.node >= 0) {
            auto& gb = t.grad_buf(b.node);
            for (int64_t i = 0; i < n; ++i) {
                double d = g[size_t(i)];
                if (kind == BinKind::Sub) d = -d;
                if (kind == BinKind::Mul) d *= (*a.data)[a_scalar ? 0 : size_t(i)];
                gb[b_scalar ? 0 : size_t(i)] += d;
            }
        }
    });
    return r;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary_op("add", detail::BinKind::Add, a, b); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary_op("sub", detail::BinKind::Sub, a, b); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary_op("mul", detail::BinKind::Mul, a, b); }

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// elementwise unary ops
// ---------------------------------------------------------------------------

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// fwd(x, p) -> y; dfn(x, y, p) -> dy/dx. Plain function pointers with one
// spare parameter p for parameterized activations.
using UnaryFwd = double (*)(double, double);
using UnaryDfn = double (*)(double, double, double);

inline Tensor unary_op(const char* name, const Tensor& a, UnaryFwd fwd, UnaryDfn dfn,
                       double p = 0.0) {
    const int64_t n = a.size();
    std::vector<double> out(size_t(n), 0.0);
    const double* pa = a.ptr();
    for (int64_t i = 0; i < n; ++i) out[size_t(i)] = fwd(pa[size_t(i)], p);
    Tensor r = make_result(a.shape, std::move(out), a.tape);
    if (!a.tape) return r;
    r.node = a.tape->record(name, {a.node}, n);
    if (a.node >= 0) {
        // output data captured for derivative rules that reuse it
        a.tape->set_backward(r.node, [a, dfn, p, n, yd = r.data, id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& ga = t.grad_buf(a.node);
            const double* px = a.ptr();
            const double* py = yd->data();
            for (int64_t i = 0; i < n; ++i)
                ga[size_t(i)] += g[size_t(i)] * dfn(px[size_t(i)], py[size_t(i)], p);
        });
    }
    return r;
}

}  // namespace detail

inline Tensor exp(const Tensor& a) {
    return detail::unary_op(
        "exp", a, [](double x, double) { return std::exp(x); },
        [](double, double y, double) { return y; });
}

inline Tensor square(const Tensor& a) {
    return detail::unary_op(
        "square", a, [](double x, double) { return x * x; },
        [](double x, double, double) { return 2.0 * x; });
}

// silu(x) = x * sigmoid(x)
inline Tensor silu(const Tensor& a) {
    return detail::unary_op(
        "silu", a, [](double x, double) { return x * detail::sigmoid(x); },
        [](double x, double, double) {
            double s = detail::sigmoid(x);
            return s * (1.0 + x * (1.0 - s));
        });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        "relu", a, [](double x, double) { return x > 0.0 ? x : 0.0; },
        [](double x, double, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor leaky_relu(const Tensor& a, double slope = 0.2) {
    return detail::unary_op(
        "leaky_relu", a, [](double x, double s) { return x > 0.0 ? x : s * x; },
        [](double x, double, double s) { return x > 0.0 ? 1.0 : s; }, slope);
}

// ---------------------------------------------------------------------------
// matmul with optional transposes (2D)
// ---------------------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false) {
    if (a.rank() != 2 || b.rank() != 2)
        throw ShapeError("matmul", "expects rank-2 operands, got " + shape_str(a.shape) + " and " +
                                       shape_str(b.shape));
    const int m = trans_a ? a.shape[1] : a.shape[0];
    const int ka = trans_a ? a.shape[0] : a.shape[1];
    const int kb = trans_b ? b.shape[1] : b.shape[0];
    const int n = trans_b ? b.shape[0] : b.shape[1];
    if (ka != kb)
        throw ShapeError("matmul", "inner dimensions differ: " + shape_str(a.shape) +
                                       (trans_a ? "^T" : "") + " x " + shape_str(b.shape) +
                                       (trans_b ? "^T" : ""));
    std::vector<double> out(size_t(m) * n, 0.0);
    detail::matmul_raw(a.ptr(), b.ptr(), out.data(), m, n, ka, trans_a, trans_b);
    Tape* tp = detail::merge_tapes("matmul", a, b);
    Tensor r = detail::make_result({m, n}, std::move(out), tp);
    if (!tp) return r;
    r.node = tp->record("matmul", {a.node, b.node}, int64_t(m) * n);
    tp->set_backward(r.node, [a, b, trans_a, trans_b, m, n, k = ka, id = r.node](Tape& t) {
        const auto& g = t.grad_of(id);
        if (a.node >= 0) {
            auto& ga = t.grad_buf(a.node);
            // dA for C = op(A) op(B)
            if (!trans_a)
                detail::matmul_raw(g.data(), b.ptr(), ga.data(), m, k, n, false, !trans_b);
            else if (!trans_b)
                detail::matmul_raw(b.ptr(), g.data(), ga.data(), k, m, n, false, true);
            else
                detail::matmul_raw(b.ptr(), g.data(), ga.data(), k, m, n, true, true);
        }
        if (b.node >= 0) {
            auto& gb = t.grad_buf(b.node);
            if (!trans_b)
                detail::matmul_raw(a.ptr(), g.data(), gb.data(), k, n, m, !trans_a, false);
            else if (!trans_a)
                detail::matmul_raw(g.data(), a.ptr(), gb.data(), n, k, m, true, false);
            else
                detail::matmul_raw(g.data(), a.ptr(), gb.data(), n, k, m, true, true);
        }
    });
    return r;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor reduce_op(const char* name, const Tensor& a, bool is_mean) {
    const int64_t n = a.size();
    double s = 0.0;
    const double* pa = a.ptr();
    for (int64_t i = 0; i < n; ++i) s += pa[size_t(i)];
    if (is_mean && n > 0) s /= double(n);
    Tensor r = make_result({1}, {s}, a.tape);
    if (!a.tape) return r;
    r.node = a.tape->record(name, {a.node}, 1);
    if (a.node >= 0) {
        a.tape->set_backward(r.node, [a, n, is_mean, id = r.node](Tape& t) {
            double g = t.grad_of(id)[0];
            if (is_mean && n > 0) g /= double(n);
            auto& ga = t.grad_buf(a.node);
            for (int64_t i = 0; i < n; ++i) ga[size_t(i)] += g;
        });
    }
    return r;
}

}  // namespace detail

inline Tensor sum(const Tensor& a) { return detail::reduce_op("sum", a, false); }
inline Tensor mean(const Tensor& a) { return detail::reduce_op("mean", a, true); }

// ---------------------------------------------------------------------------
// shape ops: reshape, broadcast, concat, slice
// ---------------------------------------------------------------------------

// Metadata-only on the forward path (shares the data buffer).
inline Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.size())
        throw ShapeError("reshape", "cannot reshape " + shape_str(a.shape) + " to " + shape_str(shape));
    Tensor r(std::move(shape), a.data);
    r.tape = a.tape;
    if (!a.tape) return r;
    r.node = a.tape->record("reshape", {a.node}, a.size());
    if (a.node >= 0) {
        a.tape->set_backward(r.node, [an = a.node, id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& ga = t.grad_buf(an);
            for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        });
    }
    return r;
}

// NumPy-style broadcast to a target shape (rank <= 3): the input shape is
// left-padded with 1s; each dim must equal the target dim or 1.
inline Tensor broadcast(const Tensor& a, const Shape& target) {
    if (target.size() > 3) throw ShapeError("broadcast", "rank > 3 unsupported");
    Shape src = a.shape;
    while (src.size() < target.size()) src.insert(src.begin(), 1);
    if (src.size() != target.size())
        throw ShapeError("broadcast",
                         "cannot broadcast " + shape_str(a.shape) + " to " + shape_str(target));
    for (size_t d = 0; d < src.size(); ++d)
        if (src[d] != target[d] && src[d] != 1)
            throw ShapeError("broadcast",
                             "cannot broadcast " + shape_str(a.shape) + " to " + shape_str(target));

    // pad to rank 3 for uniform iteration
    Shape t3 = target, s3 = src;
    while (t3.size() < 3) t3.insert(t3.begin(), 1);
    while (s3.size() < 3) s3.insert(s3.begin(), 1);
    const int64_t sstr2 = 1, sstr1 = s3[2], sstr0 = int64_t(s3[1]) * s3[2];
    const int64_t st0 = s3[0] == 1 ? 0 : sstr0;
    const int64_t st1 = s3[1] == 1 ? 0 : sstr1;
    const int64_t st2 = s3[2] == 1 ? 0 : sstr2;

    std::vector<double> out(size_t(numel(target)), 0.0);
    const double* pa = a.ptr();
    int64_t w = 0;
    for (int i = 0; i < t3[0]; ++i)
        for (int j = 0; j < t3[1]; ++j)
            for (int k = 0; k < t3[2]; ++k) out[size_t(w++)] = pa[size_t(i * st0 + j * st1 + k * st2)];

    Tensor r = detail::make_result(target, std::move(out), a.tape);
    if (!a.tape) return r;
    r.node = a.tape->record("broadcast", {a.node}, numel(target));
    if (a.node >= 0) {
        a.tape->set_backward(r.node, [an = a.node, t3, st0, st1, st2, id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& ga = t.grad_buf(an);
            int64_t w = 0;
            for (int i = 0; i < t3[0]; ++i)
                for (int j = 0; j < t3[1]; ++j)
                    for (int k = 0; k < t3[2]; ++k) ga[size_t(i * st0 + j * st1 + k * st2)] += g[size_t(w++)];
        });
    }
    return r;
}

// Concatenate along axis 0 (rows) or 1 (columns). All parts must agree on the
// other dimension; 1D tensors concat along axis 0 only.
inline Tensor concat(const std::vector<Tensor>& parts, int axis = 0) {
    if (parts.empty()) throw ContractError("concat: empty input list");
    const int rank = parts[0].rank();
    if (rank > 2 || axis < 0 || axis >= std::max(rank, 1))
        throw ShapeError("concat", "unsupported rank/axis");
    Tape* tp = nullptr;
    for (const auto& p : parts) {
        if (p.rank() != rank) throw ShapeError("concat", "mixed ranks");
        if (p.tape) {
            if (tp && tp != p.tape) throw ContractError("concat: operands on different tapes");
            tp = p.tape;
        }
    }

    Shape out_shape;
    std::vector<double> out;
    if (rank == 1 || axis == 0) {
        int other = rank == 2 ? parts[0].shape[1] : -1;
        int total = 0;
        for (const auto& p : parts) {
            if (rank == 2 && p.shape[1] != other)
                throw ShapeError("concat", "column mismatch " + shape_str(p.shape));
            total += p.shape[0];
        }
        out_shape = rank == 2 ? Shape{total, other} : Shape{total};
        out.reserve(size_t(numel(out_shape)));
        for (const auto& p : parts) out.insert(out.end(), p.data->begin(), p.data->end());
    } else {
        int rows = parts[0].shape[0];
        int total_cols = 0;
        for (const auto& p : parts) {
            if (p.shape[0] != rows) throw ShapeError("concat", "row mismatch " + shape_str(p.shape));
            total_cols += p.shape[1];
        }
        out_shape = {rows, total_cols};
        out.resize(size_t(rows) * total_cols);
        int col0 = 0;
        for (const auto& p : parts) {
            int c = p.shape[1];
            for (int i = 0; i < rows; ++i)
                std::copy(p.ptr() + size_t(i) * c, p.ptr() + size_t(i) * c + c,
                          out.data() + size_t(i) * total_cols + col0);
            col0 += c;
        }
    }

    Tensor r = detail::make_result(out_shape, std::move(out), tp);
    if (!tp) return r;
    std::vector<int> input_ids;
    for (const auto& p : parts) input_ids.push_back(p.node);
    r.node = tp->record("concat", input_ids, r.size());
    tp->set_backward(r.node, [parts, axis, rank, out_shape, id = r.node](Tape& t) {
        const auto& g = t.grad_of(id);
        if (rank == 1 || axis == 0) {
            size_t off = 0;
            for (const auto& p : parts) {
                size_t n = size_t(p.size());
                if (p.node >= 0) {
                    auto& gp = t.grad_buf(p.node);
                    for (size_t i = 0; i < n; ++i) gp[i] += g[off + i];
                }
                off += n;
            }
        } else {
            int rows = out_shape[0], total_cols = out_shape[1];
            int col0 = 0;
            for (const auto& p : parts) {
                int c = p.shape[1];
                if (p.node >= 0) {
                    auto& gp = t.grad_buf(p.node);
                    for (int i = 0; i < rows; ++i)
                        for (int j = 0; j < c; ++j)
                            gp[size_t(i) * c + j] += g[size_t(i) * total_cols + col0 + j];
                }
                col0 += c;
            }
        }
    });
    return r;
}

// Contiguous row slice [begin, end) of a 1D or 2D tensor.
inline Tensor slice(const Tensor& a, int begin, int end) {
    if (a.rank() < 1 || a.rank() > 2) throw ShapeError("slice", "expects rank 1 or 2");
    const int nrows = a.shape[0];
    if (begin < 0 || end > nrows || begin >= end)
        throw IndexError("slice", "row range [" + std::to_string(begin) + ", " + std::to_string(end) +
                                      ") out of bounds for " + shape_str(a.shape));
    const int c = a.rank() == 2 ? a.shape[1] : 1;
    Shape out_shape = a.rank() == 2 ? Shape{end - begin, c} : Shape{end - begin};
    std::vector<double> out(a.ptr() + size_t(begin) * c, a.ptr() + size_t(end) * c);
    Tensor r = detail::make_result(out_shape, std::move(out), a.tape);
    if (!a.tape) return r;
    r.node = a.tape->record("slice", {a.node}, r.size());
    if (a.node >= 0) {
        a.tape->set_backward(r.node, [an = a.node, begin, c, n = (end - begin) * c, id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& ga = t.grad_buf(an);
            for (int i = 0; i < n; ++i) ga[size_t(begin) * c + i] += g[size_t(i)];
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// indexed ops over rows
// ---------------------------------------------------------------------------

// out[r, :] = src[index[r], :]
inline Tensor gather_rows(const Tensor& src, const std::vector<int>& index) {
    if (src.rank() < 1 || src.rank() > 2) throw ShapeError("gather_rows", "expects rank 1 or 2");
    const int n = src.shape[0];
    const int c = src.rank() == 2 ? src.shape[1] : 1;
    for (int i : index)
        if (i < 0 || i >= n)
            throw IndexError("gather_rows", "row index " + std::to_string(i) + " out of range [0, " +
                                                std::to_string(n) + ")");
    Shape out_shape = src.rank() == 2 ? Shape{int(index.size()), c} : Shape{int(index.size())};
    std::vector<double> out(index.size() * size_t(c));
    for (size_t r = 0; r < index.size(); ++r)
        std::copy(src.ptr() + size_t(index[r]) * c, src.ptr() + size_t(index[r]) * c + c,
                  out.data() + r * size_t(c));
    Tensor r = detail::make_result(out_shape, std::move(out), src.tape);
    if (!src.tape) return r;
    r.node = src.tape->record("gather_rows", {src.node}, r.size());
    if (src.node >= 0) {
        src.tape->set_backward(r.node, [sn = src.node, index, c, id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& gs = t.grad_buf(sn);
            for (size_t r2 = 0; r2 < index.size(); ++r2)
                detail::axpy(1.0, g.data() + r2 * size_t(c), gs.data() + size_t(index[r2]) * c, c);
        });
    }
    return r;
}

// out[index[r], :] += src[r, :] into n_slots rows
inline Tensor scatter_add(const Tensor& src, const std::vector<int>& index, int n_slots) {
    if (src.rank() < 1 || src.rank() > 2) throw ShapeError("scatter_add", "expects rank 1 or 2");
    if (int(index.size()) != src.shape[0])
        throw ShapeError("scatter_add", "index length " + std::to_string(index.size()) +
                                            " != source row count " + std::to_string(src.shape[0]));
    for (int i : index)
        if (i < 0 || i >= n_slots)
            throw IndexError("scatter_add", "slot index " + std::to_string(i) + " out of range [0, " +
                                                std::to_string(n_slots) + ")");
    const int c = src.rank() == 2 ? src.shape[1] : 1;
    Shape out_shape = src.rank() == 2 ? Shape{n_slots, c} : Shape{n_slots};
    std::vector<double> out(size_t(n_slots) * c, 0.0);
    for (size_t r = 0; r < index.size(); ++r)
        detail::axpy(1.0, src.ptr() + r * size_t(c), out.data() + size_t(index[r]) * c, c);
    Tensor r = detail::make_result(out_shape, std::move(out), src.tape);
    if (!src.tape) return r;
    r.node = src.tape->record("scatter_add", {src.node}, r.size());
    if (src.node >= 0) {
        src.tape->set_backward(r.node, [sn = src.node, index, c, id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& gs = t.grad_buf(sn);
            for (size_t r2 = 0; r2 < index.size(); ++r2)
                detail::axpy(1.0, g.data() + size_t(index[r2]) * c, gs.data() + r2 * size_t(c), c);
        });
    }
    return r;
}

// ---------------------------------------------------------------------------
// fused kernels used by the layers
// ---------------------------------------------------------------------------

// Gaussian RBF feature expansion. x: B x n, centers: M, log_bandwidths: M.
// out[b, i*M + j] = exp(-0.5 * ((x[b,i] - c[j]) / bw[j])^2), bw = exp(log_bw).
// Differentiable in x, centers and log-bandwidths (whichever are on the tape).
inline Tensor rbf_basis(const Tensor& x, const Tensor& centers, const Tensor& log_bw) {
    if (x.rank() != 2) throw ShapeError("rbf_basis", "x must be rank 2, got " + shape_str(x.shape));
    if (centers.rank() != 1 || log_bw.rank() != 1 || centers.shape[0] != log_bw.shape[0])
        throw ShapeError("rbf_basis", "centers/log_bandwidths must be equal-length vectors");
    const int B = x.shape[0], n = x.shape[1], M = centers.shape[0];
    std::vector<double> invbw(size_t(M), 0.0);
    for (int j = 0; j < M; ++j) invbw[size_t(j)] = std::exp(-(*log_bw.data)[size_t(j)]);

    std::vector<double> out(size_t(B) * n * M, 0.0);
    const double* px = x.ptr();
    const double* pc = centers.ptr();
    for (int b = 0; b < B; ++b)
        for (int i = 0; i < n; ++i) {
            double xv = px[size_t(b) * n + i];
            double* row = out.data() + (size_t(b) * n + i) * M;
            for (int j = 0; j < M; ++j) {
                double tj = (xv - pc[size_t(j)]) * invbw[size_t(j)];
                row[j] = std::exp(-0.5 * tj * tj);
            }
        }

    Tape* tp = detail::merge_tapes("rbf_basis", x, centers);
    if (log_bw.tape) {
        if (tp && tp != log_bw.tape) throw ContractError("rbf_basis: operands on different tapes");
        tp = log_bw.tape;
    }
    Tensor r = detail::make_result({B, n * M}, std::move(out), tp);
    if (!tp) return r;
    r.node = tp->record("rbf_basis", {x.node, centers.node, log_bw.node}, r.size());
    tp->set_backward(r.node, [x, centers, invbw, B, n, M, yd = r.data, id = r.node](Tape& t) {
        const auto& g = t.grad_of(id);
        const double* px = x.ptr();
        const double* pc = centers.ptr();
        const double* py = yd->data();
        double* gx = x.node >= 0 ? t.grad_buf(x.node).data() : nullptr;
        double* gc = centers.node >= 0 ? t.grad_buf(centers.node).data() : nullptr;
        // log_bw node id was recorded as third input
        int lbw_node = t.node(id).inputs[2];
        double* gl = lbw_node >= 0 ? t.grad_buf(lbw_node).data() : nullptr;
        for (int b = 0; b < B; ++b)
            for (int i = 0; i < n; ++i) {
                size_t base = (size_t(b) * n + i) * M;
                double xv = px[size_t(b) * n + i];
                double dx_acc = 0.0;
                for (int j = 0; j < M; ++j) {
                    double go = g[base + j];
                    if (go == 0.0) continue;
                    double tj = (xv - pc[size_t(j)]) * invbw[size_t(j)];
                    double common = go * py[base + j] * tj;
                    if (gx) dx_acc -= common * invbw[size_t(j)];
                    if (gc) gc[j] += common * invbw[size_t(j)];
                    if (gl) gl[j] += common * tj;
                }
                if (gx) gx[size_t(b) * n + i] += dx_acc;
            }
    });
    return r;
}

// Softmax over segments: weights[e] = exp(l[e]) / sum over edges e' with
// seg[e'] == seg[e]. Entries are max-shifted per segment for stability.
inline Tensor segment_softmax(const Tensor& logits, const std::vector<int>& seg, int n_segments) {
    if (!(logits.rank() == 1 || (logits.rank() == 2 && logits.shape[1] == 1)))
        throw ShapeError("segment_softmax", "logits must be a vector or column");
    const int E = logits.shape[0];
    if (int(seg.size()) != E) throw ShapeError("segment_softmax", "segment index length mismatch");
    for (int s : seg)
        if (s < 0 || s >= n_segments) throw IndexError("segment_softmax", "segment id out of range");

    const double* pl = logits.ptr();
    std::vector<double> mx(size_t(n_segments), -std::numeric_limits<double>::infinity());
    for (int e = 0; e < E; ++e) mx[size_t(seg[size_t(e)])] = std::max(mx[size_t(seg[size_t(e)])], pl[e]);
    std::vector<double> out(size_t(E), 0.0);
    std::vector<double> denom(size_t(n_segments), 0.0);
    for (int e = 0; e < E; ++e) {
        out[size_t(e)] = std::exp(pl[e] - mx[size_t(seg[size_t(e)])]);
        denom[size_t(seg[size_t(e)])] += out[size_t(e)];
    }
    for (int e = 0; e < E; ++e) out[size_t(e)] /= denom[size_t(seg[size_t(e)])];

    Tensor r = detail::make_result(logits.shape, std::move(out), logits.tape);
    if (!logits.tape) return r;
    r.node = logits.tape->record("segment_softmax", {logits.node}, E);
    if (logits.node >= 0) {
        logits.tape->set_backward(r.node, [ln = logits.node, seg, n_segments, E, yd = r.data,
                                           id = r.node](Tape& t) {
            const auto& g = t.grad_of(id);
            auto& gl = t.grad_buf(ln);
            const double* w = yd->data();
            std::vector<double> seg_dot(size_t(n_segments), 0.0);
            for (int e = 0; e < E; ++e) seg_dot[size_t(seg[size_t(e)])] += w[e] * g[size_t(e)];
            for (int e = 0; e < E; ++e)
                gl[size_t(e)] += w[e] * (g[size_t(e)] - seg_dot[size_t(seg[size_t(e)])]);
        });
    }
    return r;
}

// Mean of binary cross-entropy with logits over unmasked entries, in the
// numerically stable form max(z,0) - z*y + log(1 + exp(-|z|)). Returns 0 with
// zero gradients when everything is masked. labels/mask are constants.
inline Tensor bce_with_logits(const Tensor& logits, const Tensor& labels, const Tensor& mask) {
    if (logits.shape != labels.shape || logits.shape != mask.shape)
        throw ShapeError("bce_with_logits", "logits/labels/mask shapes differ");
    const int64_t n = logits.size();
    const double* pz = logits.ptr();
    const double* py = labels.ptr();
    const double* pm = mask.ptr();
    double cnt = 0.0, loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        if (pm[size_t(i)] == 0.0) continue;
        double z = pz[size_t(i)], y = py[size_t(i)];
        loss += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        cnt += 1.0;
    }
    if (cnt > 0.0) loss /= cnt;
    Tensor r = detail::make_result({1}, {loss}, logits.tape);
    if (!logits.tape) return r;
    r.node = logits.tape->record("bce_with_logits", {logits.node}, 1);
    if (logits.node >= 0 && cnt > 0.0) {
        logits.tape->set_backward(r.node, [logits, labels, mask, n, cnt, id = r.node](Tape& t) {
            double g = t.grad_of(id)[0];
            auto& gz = t.grad_buf(logits.node);
            const double* pz = logits.ptr();
            const double* py = labels.ptr();
            const double* pm = mask.ptr();
            for (int64_t i = 0; i < n; ++i) {
                if (pm[size_t(i)] == 0.0) continue;
                gz[size_t(i)] += g * (detail::sigmoid(pz[size_t(i)]) - py[size_t(i)]) / cnt;
            }
        });
    }
    return r;
}

// Mean squared error over unmasked entries; 0 when everything is masked.
inline Tensor masked_mse(const Tensor& pred, const Tensor& target, const Tensor& mask) {
    if (pred.shape != target.shape || pred.shape != mask.shape)
        throw ShapeError("masked_mse", "pred/target/mask shapes differ");
    const int64_t n = pred.size();
    const double* pp = pred.ptr();
    const double* pt = target.ptr();
    const double* pm = mask.ptr();
    double cnt = 0.0, loss = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        if (pm[size_t(i)] == 0.0) continue;
        double d = pp[size_t(i)] - pt[size_t(i)];
        loss += d * d;
        cnt += 1.0;
    }
    if (cnt > 0.0) loss /= cnt;
    Tensor r = detail::make_result({1}, {loss}, pred.tape);
    if (!pred.tape) return r;
    r.node = pred.tape->record("masked_mse", {pred.node}, 1);
    if (pred.node >= 0 && cnt > 0.0) {
        pred.tape->set_backward(r.node, [pred, target, mask, n, cnt, id = r.node](Tape& t) {
            double g = t.grad_of(id)[0];
            auto& gp = t.grad_buf(pred.node);
            const double* pp = pred.ptr();
            const double* pt = target.ptr();
            const double* pm = mask.ptr();
            for (int64_t i = 0; i < n; ++i) {
                if (pm[size_t(i)] == 0.0) continue;
                gp[size_t(i)] += g * 2.0 * (pp[size_t(i)] - pt[size_t(i)]) / cnt;
            }
        });
    }
    return r;
}

}  // namespace molkan
