#pragma once

// Reverse-mode differentiation over dense tensors.
//
// A Tape records every operation executed on its Vars in forward order.
// backward() replays the record from the loss node down to the first node,
// accumulating gradients additively into every operand that requires them.
// Tapes are single-use and single-threaded: build one per optimisation step.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "frost/error.hpp"
#include "frost/tensor.hpp"

namespace frost::ad {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
public:
    Var() = default;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    std::size_t id() const { return id_; }
    Tape& tape() const { return *tape_; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    // Runs during backward; receives the node's accumulated output gradient.
    using Backward = std::function<void(Tape&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf that receives gradients (a parameter or an input under test).
    Var variable(Tensor value) { return push(std::move(value), {}, true, nullptr, "variable"); }

    // Leaf that never receives gradients.
    Var constant(Tensor value) { return push(std::move(value), {}, false, nullptr, "constant"); }

    // Record the result of an operation. requires_grad is inferred from the operands.
    Var record(Tensor value, std::vector<std::size_t> parents, Backward fn, std::string op) {
        bool rg = false;
        for (auto p : parents) rg = rg || nodes_[p].requires_grad;
        if (!value.all_finite()) throw NumericError("non-finite value produced by " + op);
        return push(std::move(value), std::move(parents), rg, rg ? std::move(fn) : nullptr, std::move(op));
    }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
    const std::string& op_name(std::size_t id) const { return nodes_[id].op; }
    std::size_t size() const { return nodes_.size(); }

    // Gradient of the last backward() w.r.t. v; zeros when v was not reached.
    Tensor grad(Var v) const {
        const auto& n = nodes_[v.id()];
        return n.has_grad ? n.grad : Tensor(n.value.shape());
    }

    // Mutable gradient buffer of node id, allocated on first use.
    Tensor& grad_buffer(std::size_t id) {
        auto& n = nodes_[id];
        if (!n.has_grad) {
            n.grad = Tensor(n.value.shape());
            n.has_grad = true;
        }
        return n.grad;
    }

    // Add contribution into the gradient of node id (no-op for constants).
    void accumulate(std::size_t id, std::span<const double> contribution) {
        if (!nodes_[id].requires_grad) return;
        auto& g = grad_buffer(id);
        for (std::size_t i = 0; i < contribution.size(); ++i) g[i] += contribution[i];
    }

    void backward(Var loss) {
        const auto& root = nodes_[loss.id()];
        if (root.value.size() != 1)
            throw ShapeError("backward requires a scalar loss, got shape " + shape_str(root.value.shape()));
        for (auto& n : nodes_) {
            n.has_grad = false;
            n.grad = Tensor();
        }
        order_.clear();
        if (!root.requires_grad) return;
        grad_buffer(loss.id())[0] = 1.0;
        for (std::size_t i = loss.id() + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (!n.requires_grad || !n.has_grad || !n.backward) continue;
            order_.push_back(i);
            // The node vector does not grow during backward, so the reference is stable.
            n.backward(*this, n.grad);
        }
    }

    // Node ids whose backward rule ran in the last backward(), in visit order.
    const std::vector<std::size_t>& backward_order() const { return order_; }

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool requires_grad = false;
        bool has_grad = false;
        std::vector<std::size_t> parents;
        Backward backward;
        std::string op;
    };

    Var push(Tensor value, std::vector<std::size_t> parents, bool rg, Backward fn, std::string op) {
        nodes_.push_back(Node{std::move(value), Tensor(), rg, false, std::move(parents), std::move(fn), std::move(op)});
        return Var(this, nodes_.size() - 1);
    }

    std::vector<Node> nodes_;
    std::vector<std::size_t> order_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

inline void require_same_tape(const Var& a, const Var& b, const char* op) {
    if (&a.tape() != &b.tape()) throw Error(std::string(op) + ": operands live on different tapes");
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
    require_same_tape(a, b, op);
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
}

inline void require_matrix(const Var& a, const char* op) {
    if (a.value().rank() != 2)
        throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(a.shape()));
}

// Elementwise unary op with derivative expressed through input x and output y.
template <class F, class DF>
Var unary(const Var& a, F f, DF df, const char* op) {
    const Tensor& x = a.value();
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
    const auto ia = a.id();
    return a.tape().record(
        std::move(y), {ia},
        [ia, df](Tape& t, const Tensor& g) {
            if (!t.requires_grad(ia)) return;
            const Tensor& xv = t.value(ia);
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i]);
        },
        op);
}

}  // namespace detail

// ---------------------------------------------------------------- linear algebra

inline Var matmul(const Var& a, const Var& b) {
    detail::require_same_tape(a, b, "matmul");
    detail::require_matrix(a, "matmul");
    detail::require_matrix(b, "matmul");
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    if (B.rows() != k)
        throw ShapeError("matmul: inner dimensions differ " + shape_str(A.shape()) + " x " + shape_str(B.shape()));
    Tensor C({m, n});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A.at(i, p);
            if (aip == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) C.at(i, j) += aip * B.at(p, j);
        }
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(
        std::move(C), {ia, ib},
        [ia, ib, m, k, n](Tape& t, const Tensor& g) {
            const Tensor& A = t.value(ia);
            const Tensor& B = t.value(ib);
            if (t.requires_grad(ia)) {
                auto& ga = t.grad_buffer(ia);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        double s = 0.0;
                        for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * B.at(p, j);
                        ga.at(i, p) += s;
                    }
            }
            if (t.requires_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double aip = A.at(i, p);
                        for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += aip * g.at(i, j);
                    }
            }
        },
        "matmul");
}

inline Var transpose(const Var& a) {
    detail::require_matrix(a, "transpose");
    const Tensor& A = a.value();
    const std::size_t m = A.rows(), n = A.cols();
    Tensor T({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) T.at(j, i) = A.at(i, j);
    const auto ia = a.id();
    return a.tape().record(
        std::move(T), {ia},
        [ia, m, n](Tape& t, const Tensor& g) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) ga.at(i, j) += g.at(j, i);
        },
        "transpose");
}

// x [n x in] times weight^T [in x out] plus the bias row [out].
inline Var linear(const Var& x, const Var& weight, const Var& bias) {
    detail::require_same_tape(x, weight, "linear");
    detail::require_same_tape(x, bias, "linear");
    detail::require_matrix(x, "linear");
    detail::require_matrix(weight, "linear");
    const Tensor& X = x.value();
    const Tensor& W = weight.value();
    const Tensor& b = bias.value();
    const std::size_t n = X.rows(), in = X.cols(), out = W.rows();
    if (W.cols() != in)
        throw ShapeError("linear: input width " + std::to_string(in) + " does not match weight " +
                         shape_str(W.shape()));
    if (b.rank() != 1 || b.size() != out) throw ShapeError("linear: bias shape " + shape_str(b.shape()));
    Tensor Y({n, out});
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = X.row(i);
        for (std::size_t o = 0; o < out; ++o) {
            auto wo = W.row(o);
            double s = b[o];
            for (std::size_t p = 0; p < in; ++p) s += xi[p] * wo[p];
            Y.at(i, o) = s;
        }
    }
    const auto ix = x.id(), iw = weight.id(), ib = bias.id();
    return x.tape().record(
        std::move(Y), {ix, iw, ib},
        [ix, iw, ib, n, in, out](Tape& t, const Tensor& g) {
            const Tensor& X = t.value(ix);
            const Tensor& W = t.value(iw);
            if (t.requires_grad(ix)) {
                auto& gx = t.grad_buffer(ix);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t o = 0; o < out; ++o) {
                        const double gio = g.at(i, o);
                        if (gio == 0.0) continue;
                        auto wo = W.row(o);
                        for (std::size_t p = 0; p < in; ++p) gx.at(i, p) += gio * wo[p];
                    }
            }
            if (t.requires_grad(iw)) {
                auto& gw = t.grad_buffer(iw);
                for (std::size_t i = 0; i < n; ++i) {
                    auto xi = X.row(i);
                    for (std::size_t o = 0; o < out; ++o) {
                        const double gio = g.at(i, o);
                        if (gio == 0.0) continue;
                        for (std::size_t p = 0; p < in; ++p) gw.at(o, p) += gio * xi[p];
                    }
                }
            }
            if (t.requires_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t o = 0; o < out; ++o) gb[o] += g.at(i, o);
            }
        },
        "linear");
}

// Row-wise bias addition: x [n x c] + b [c]. The only broadcast the engine supports.
inline Var add_bias(const Var& x, const Var& b) {
    detail::require_same_tape(x, b, "add_bias");
    const Tensor& X = x.value();
    const Tensor& B = b.value();
    if (B.rank() != 1 || B.size() != X.cols())
        throw ShapeError("add_bias: bias " + shape_str(B.shape()) + " vs input " + shape_str(X.shape()));
    Tensor Y = X;
    for (std::size_t i = 0; i < X.rows(); ++i)
        for (std::size_t j = 0; j < X.cols(); ++j) Y.at(i, j) += B[j];
    const auto ix = x.id(), ib = b.id();
    const std::size_t rows = X.rows(), cols = X.cols();
    return x.tape().record(
        std::move(Y), {ix, ib},
        [ix, ib, rows, cols](Tape& t, const Tensor& g) {
            t.accumulate(ix, g.data());
            if (t.requires_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j) gb[j] += g.at(i, j);
            }
        },
        "add_bias");
}

// ---------------------------------------------------------------- elementwise

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "add");
    Tensor y = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += B[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(
        std::move(y), {ia, ib},
        [ia, ib](Tape& t, const Tensor& g) {
            t.accumulate(ia, g.data());
            t.accumulate(ib, g.data());
        },
        "add");
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "sub");
    Tensor y = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] -= B[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(
        std::move(y), {ia, ib},
        [ia, ib](Tape& t, const Tensor& g) {
            t.accumulate(ia, g.data());
            if (t.requires_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
            }
        },
        "sub");
}

inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape(a, b, "mul");
    Tensor y = a.value();
    const Tensor& B = b.value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] *= B[i];
    const auto ia = a.id(), ib = b.id();
    return a.tape().record(
        std::move(y), {ia, ib},
        [ia, ib](Tape& t, const Tensor& g) {
            const Tensor& A = t.value(ia);
            const Tensor& B = t.value(ib);
            if (t.requires_grad(ia)) {
                auto& ga = t.grad_buffer(ia);
                for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * B[i];
            }
            if (t.requires_grad(ib)) {
                auto& gb = t.grad_buffer(ib);
                for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * A[i];
            }
        },
        "mul");
}

inline Var scale(const Var& a, double s) {
    return detail::unary(a, [s](double x) { return s * x; }, [s](double) { return s; }, "scale");
}

inline Var add_scalar(const Var& a, double s) {
    return detail::unary(a, [s](double x) { return x + s; }, [](double) { return 1.0; }, "add_scalar");
}

inline Var square(const Var& a) {
    return detail::unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; }, "square");
}

// Derivative at exactly 0 is 0.
inline Var relu(const Var& a) {
    return detail::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; }, "relu");
}

inline Var exp(const Var& a) {
    return detail::unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); }, "exp");
}

inline Var log(const Var& a) {
    for (double v : a.value().data())
        if (!(v > 0.0)) throw DomainError("log of non-positive value " + std::to_string(v));
    return detail::unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; }, "log");
}

inline Var sigmoid(const Var& a) {
    auto f = [](double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); };
    return detail::unary(a, f, [f](double x) { const double s = f(x); return s * (1.0 - s); }, "sigmoid");
}

// Gradient passes where lo < x < hi, zero where the clamp is active.
inline Var clamp(const Var& a, double lo, double hi) {
    if (!(lo <= hi)) throw ParameterError("clamp: lo > hi");
    return detail::unary(
        a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
        [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; }, "clamp");
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator*(double s, const Var& a) { return scale(a, s); }

// ---------------------------------------------------------------- reductions

inline Var sum(const Var& a) {
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    const auto ia = a.id();
    return a.tape().record(
        Tensor::scalar(s), {ia},
        [ia](Tape& t, const Tensor& g) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
        },
        "sum");
}

inline Var mean(const Var& a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

// Euclidean norm of each row; gradient at a zero row is taken as zero.
inline Var row_norm(const Var& a) {
    const Tensor& X = a.value();
    const std::size_t n = X.rows(), c = X.cols();
    Tensor y({n});
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (double v : X.row(i)) s += v * v;
        y[i] = std::sqrt(s);
    }
    const auto ia = a.id();
    return a.tape().record(
        Tensor(y), {ia},
        [ia, n, c, y](Tape& t, const Tensor& g) {
            const Tensor& X = t.value(ia);
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < n; ++i) {
                if (y[i] == 0.0) continue;
                const double s = g[i] / y[i];
                for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += s * X.at(i, j);
            }
        },
        "row_norm");
}

// ---------------------------------------------------------------- row-wise softmax family

// softmax(x / temperature) along each row, computed as exp(x - max) normalised.
inline Var softmax(const Var& a, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
    const Tensor& X = a.value();
    const std::size_t n = X.rows(), c = X.cols();
    Tensor Y(X.shape());
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = X.row(i);
        auto yi = Y.row(i);
        const double mx = *std::max_element(xi.begin(), xi.end());
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += (yi[j] = std::exp((xi[j] - mx) / temperature));
        for (std::size_t j = 0; j < c; ++j) yi[j] /= z;
    }
    const auto ia = a.id();
    Tensor saved = Y;
    return a.tape().record(
        std::move(Y), {ia},
        [ia, n, c, temperature, saved](Tape& t, const Tensor& g) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < n; ++i) {
                double dot = 0.0;
                for (std::size_t j = 0; j < c; ++j) dot += g.at(i, j) * saved.at(i, j);
                for (std::size_t j = 0; j < c; ++j)
                    ga.at(i, j) += saved.at(i, j) * (g.at(i, j) - dot) / temperature;
            }
        },
        "softmax");
}

// log of softmax(x / temperature) along each row.
inline Var log_softmax(const Var& a, double temperature = 1.0) {
    if (!(temperature > 0.0)) throw ParameterError("softmax temperature must be positive");
    const Tensor& X = a.value();
    const std::size_t n = X.rows(), c = X.cols();
    Tensor Y(X.shape());
    Tensor P(X.shape());
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = X.row(i);
        const double mx = *std::max_element(xi.begin(), xi.end());
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) z += std::exp((xi[j] - mx) / temperature);
        const double lz = std::log(z);
        for (std::size_t j = 0; j < c; ++j) {
            Y.at(i, j) = (xi[j] - mx) / temperature - lz;
            P.at(i, j) = std::exp(Y.at(i, j));
        }
    }
    const auto ia = a.id();
    return a.tape().record(
        std::move(Y), {ia},
        [ia, n, c, temperature, P](Tape& t, const Tensor& g) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < n; ++i) {
                double gs = 0.0;
                for (std::size_t j = 0; j < c; ++j) gs += g.at(i, j);
                for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += (g.at(i, j) - P.at(i, j) * gs) / temperature;
            }
        },
        "log_softmax");
}

// ---------------------------------------------------------------- indexing

// Columns [begin, end) of a matrix.
inline Var columns(const Var& a, std::size_t begin, std::size_t end) {
    detail::require_matrix(a, "columns");
    const Tensor& X = a.value();
    if (begin >= end || end > X.cols()) throw ShapeError("columns: invalid range");
    const std::size_t n = X.rows(), w = end - begin;
    Tensor Y({n, w});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < w; ++j) Y.at(i, j) = X.at(i, begin + j);
    const auto ia = a.id();
    return a.tape().record(
        std::move(Y), {ia},
        [ia, n, w, begin](Tape& t, const Tensor& g) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < w; ++j) ga.at(i, begin + j) += g.at(i, j);
        },
        "columns");
}

// out[i] = a[i, index[i]].
inline Var pick(const Var& a, std::vector<std::size_t> index) {
    const Tensor& X = a.value();
    if (index.size() != X.rows()) throw ShapeError("pick: one index per row required");
    Tensor y({index.size()});
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= X.cols()) throw ValidationError("pick: column index out of range");
        y[i] = X.at(i, index[i]);
    }
    const auto ia = a.id();
    return a.tape().record(
        std::move(y), {ia},
        [ia, index = std::move(index)](Tape& t, const Tensor& g) {
            auto& ga = t.grad_buffer(ia);
            for (std::size_t i = 0; i < index.size(); ++i) ga.at(i, index[i]) += g[i];
        },
        "pick");
}

}  // namespace frost::ad
