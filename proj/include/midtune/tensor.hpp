#ifndef MIDTUNE_TENSOR_HPP
#define MIDTUNE_TENSOR_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "midtune/errors.hpp"

namespace midtune {

// Dense 64-bit float tensor participating in reverse-mode autodiff.
//
// Tensor is a cheap handle onto a shared node. Every operation records its
// parents and a backward closure, so calling backward() on a scalar loss
// fills the grad buffer of every reachable node. All loops run in a fixed
// sequential order; identical inputs give bit-identical outputs.
//
// Shapes are 1-D [n] or 2-D [m,n], row-major; that is all the encoder and
// the objectives need.

class Tensor;

namespace detail {

struct TensorNode {
    std::vector<std::size_t> shape;
    std::vector<double> values;
    std::vector<double> grad;  // sized lazily, same length as values
    bool requires_grad = false;
    std::string op;  // producing operation, for error messages
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::size_t numel() const { return values.size(); }

    void ensure_grad() {
        if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
    }
};

inline std::size_t shape_numel(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) n *= d;
    return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

}  // namespace detail

class Tensor {
  public:
    Tensor() = default;

    Tensor(std::vector<std::size_t> shape, std::vector<double> values, bool requires_grad = false)
        : node_(std::make_shared<detail::TensorNode>()) {
        if (detail::shape_numel(shape) != values.size())
            throw ShapeError("tensor value count " + std::to_string(values.size()) +
                             " does not match shape " + detail::shape_str(shape));
        node_->shape = std::move(shape);
        node_->values = std::move(values);
        node_->requires_grad = requires_grad;
        node_->op = "leaf";
    }

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        std::vector<double> v(detail::shape_numel(shape), 0.0);
        return Tensor(std::move(shape), std::move(v), requires_grad);
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t numel() const { return node_->numel(); }
    std::size_t dim() const { return node_->shape.size(); }
    std::size_t rows() const { return node_->shape.at(0); }
    std::size_t cols() const { return node_->shape.size() > 1 ? node_->shape[1] : 1; }

    const std::vector<double>& values() const { return node_->values; }
    std::vector<double>& values() { return node_->values; }
    double value() const {
        if (numel() != 1) throw ShapeError("value() requires a scalar, got shape " + shape_str());
        return node_->values[0];
    }

    bool has_grad() const { return node_->grad.size() == node_->values.size(); }
    const std::vector<double>& grad() const {
        if (!has_grad()) throw OptimizerError("tensor has no gradient buffer (op " + op() + ")");
        return node_->grad;
    }
    std::vector<double>& grad_mut() {
        node_->ensure_grad();
        return node_->grad;
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }

    void zero_grad() {
        if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    const std::string& op() const { return node_->op; }
    std::string shape_str() const { return detail::shape_str(node_->shape); }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

    // Builds an interior graph node. Exposed so composite objectives can
    // register custom differentiable operations (e.g. the fused
    // numerically-stable cross-entropy).
    static Tensor make_node(std::vector<std::size_t> shape, std::vector<double> values,
                            std::string op, std::vector<Tensor> parents,
                            std::function<void(detail::TensorNode&)> backward_fn) {
        Tensor t(std::move(shape), std::move(values));
        t.node_->op = std::move(op);
        bool needs = false;
        for (const Tensor& p : parents) {
            t.node_->parents.push_back(p.node());
            needs = needs || p.node()->requires_grad;
        }
        t.node_->requires_grad = needs;
        if (needs) t.node_->backward_fn = std::move(backward_fn);
        return t;
    }

  private:
    std::shared_ptr<detail::TensorNode> node_;
};

// ----------------------------------------------------------------------
// Backward pass

// Accumulates d(loss)/d(node) into every reachable node's grad buffer.
// Gradients add up across calls; zero them between backward passes.
inline void backward(const Tensor& loss) {
    if (loss.numel() != 1)
        throw ShapeError("backward() needs a scalar loss, got shape " + loss.shape_str());

    // Iterative post-order DFS for the topological order.
    std::vector<detail::TensorNode*> order;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<std::pair<detail::TensorNode*, std::size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            detail::TensorNode* p = node->parents[next++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (detail::TensorNode* n : order) n->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::TensorNode* n = *it;
        if (n->backward_fn) n->backward_fn(*n);
    }
}

// ----------------------------------------------------------------------
// Operation suite

namespace detail {

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
}

inline void check_matrix(const Tensor& a, const char* op) {
    if (a.dim() != 2)
        throw ShapeError(std::string(op) + ": expected a 2-D tensor, got " + a.shape_str());
}

}  // namespace detail

// c = a + b (same shape).
inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] + b.values()[i];
    return Tensor::make_node(a.shape(), std::move(v), "add", {a, b}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            pa.grad[i] += n.grad[i];
            pb.grad[i] += n.grad[i];
        }
    });
}

// c = a - b (same shape).
inline Tensor subtract(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "subtract");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] - b.values()[i];
    return Tensor::make_node(a.shape(), std::move(v), "subtract", {a, b},
                             [](detail::TensorNode& n) {
                                 auto& pa = *n.parents[0];
                                 auto& pb = *n.parents[1];
                                 for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                     pa.grad[i] += n.grad[i];
                                     pb.grad[i] -= n.grad[i];
                                 }
                             });
}

// c = a ⊙ b elementwise (same shape).
inline Tensor multiply(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "multiply");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * b.values()[i];
    return Tensor::make_node(a.shape(), std::move(v), "multiply", {a, b},
                             [](detail::TensorNode& n) {
                                 auto& pa = *n.parents[0];
                                 auto& pb = *n.parents[1];
                                 for (std::size_t i = 0; i < n.grad.size(); ++i) {
                                     pa.grad[i] += n.grad[i] * pb.values[i];
                                     pb.grad[i] += n.grad[i] * pa.values[i];
                                 }
                             });
}

// c[i,j] = a[i,j] + b[j]; adds a vector to every row.
inline Tensor add_row_broadcast(const Tensor& a, const Tensor& b) {
    detail::check_matrix(a, "add_row_broadcast");
    if (b.dim() != 1 || b.numel() != a.cols())
        throw ShapeError("add_row_broadcast: " + a.shape_str() + " vs " + b.shape_str());
    std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = a.values()[i * n + j] + b.values()[j];
    return Tensor::make_node(a.shape(), std::move(v), "add_row_broadcast", {a, b},
                             [m, n](detail::TensorNode& nd) {
                                 auto& pa = *nd.parents[0];
                                 auto& pb = *nd.parents[1];
                                 for (std::size_t i = 0; i < m; ++i)
                                     for (std::size_t j = 0; j < n; ++j) {
                                         pa.grad[i * n + j] += nd.grad[i * n + j];
                                         pb.grad[j] += nd.grad[i * n + j];
                                     }
                             });
}

// c[i,j] = a[i,j] * b[j]; per-column gains (layernorm gain, etc.).
inline Tensor multiply_row_broadcast(const Tensor& a, const Tensor& b) {
    detail::check_matrix(a, "multiply_row_broadcast");
    if (b.dim() != 1 || b.numel() != a.cols())
        throw ShapeError("multiply_row_broadcast: " + a.shape_str() + " vs " + b.shape_str());
    std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = a.values()[i * n + j] * b.values()[j];
    return Tensor::make_node(a.shape(), std::move(v), "multiply_row_broadcast", {a, b},
                             [m, n](detail::TensorNode& nd) {
                                 auto& pa = *nd.parents[0];
                                 auto& pb = *nd.parents[1];
                                 for (std::size_t i = 0; i < m; ++i)
                                     for (std::size_t j = 0; j < n; ++j) {
                                         pa.grad[i * n + j] += nd.grad[i * n + j] * pb.values[j];
                                         pb.grad[j] += nd.grad[i * n + j] * pa.values[i * n + j];
                                     }
                             });
}

// c[i,j] = a[i,j] * b[i]; per-row scaling (pad masks before pooling).
inline Tensor multiply_col_broadcast(const Tensor& a, const Tensor& b) {
    detail::check_matrix(a, "multiply_col_broadcast");
    if (b.dim() != 1 || b.numel() != a.rows())
        throw ShapeError("multiply_col_broadcast: " + a.shape_str() + " vs " + b.shape_str());
    std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = a.values()[i * n + j] * b.values()[i];
    return Tensor::make_node(a.shape(), std::move(v), "multiply_col_broadcast", {a, b},
                             [m, n](detail::TensorNode& nd) {
                                 auto& pa = *nd.parents[0];
                                 auto& pb = *nd.parents[1];
                                 for (std::size_t i = 0; i < m; ++i)
                                     for (std::size_t j = 0; j < n; ++j) {
                                         pa.grad[i * n + j] += nd.grad[i * n + j] * pb.values[i];
                                         pb.grad[i] += nd.grad[i * n + j] * pa.values[i * n + j];
                                     }
                             });
}

// c = k * a for a constant k.
inline Tensor scale(const Tensor& a, double k) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * k;
    return Tensor::make_node(a.shape(), std::move(v), "scale", {a}, [k](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * k;
    });
}

// C[m,n] = A[m,k] * B[k,n], or A[m,k] * B[n,k]^T with transpose_b.
inline Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_b = false) {
    detail::check_matrix(a, "matmul");
    detail::check_matrix(b, "matmul");
    std::size_t m = a.rows(), k = a.cols();
    std::size_t bk = transpose_b ? b.cols() : b.rows();
    std::size_t n = transpose_b ? b.rows() : b.cols();
    if (k != bk)
        throw ShapeError("matmul: inner dimensions disagree, " + a.shape_str() + " vs " +
                         b.shape_str() + (transpose_b ? " (b transposed)" : ""));
    std::vector<double> v(m * n, 0.0);
    const auto& av = a.values();
    const auto& bv = b.values();
    if (!transpose_b) {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t p = 0; p < k; ++p) {
                double aip = av[i * k + p];
                for (std::size_t j = 0; j < n; ++j) v[i * n + j] += aip * bv[p * n + j];
            }
    } else {
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                double acc = 0.0;
                for (std::size_t p = 0; p < k; ++p) acc += av[i * k + p] * bv[j * k + p];
                v[i * n + j] = acc;
            }
    }
    return Tensor::make_node(
        {m, n}, std::move(v), "matmul", {a, b}, [m, n, k, transpose_b](detail::TensorNode& nd) {
            auto& pa = *nd.parents[0];
            auto& pb = *nd.parents[1];
            if (!transpose_b) {
                // dA += dC * B^T ; dB += A^T * dC
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        double g = nd.grad[i * n + j];
                        if (g == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) {
                            pa.grad[i * k + p] += g * pb.values[p * n + j];
                            pb.grad[p * n + j] += g * pa.values[i * k + p];
                        }
                    }
            } else {
                // C = A * B^T: dA += dC * B ; dB += dC^T * A
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        double g = nd.grad[i * n + j];
                        if (g == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) {
                            pa.grad[i * k + p] += g * pb.values[j * k + p];
                            pb.grad[j * k + p] += g * pa.values[i * k + p];
                        }
                    }
            }
        });
}

// max(x, 0). Subgradient 0 at the kink. NaN inputs propagate instead of
// flushing to zero, so a diverged upstream value cannot hide inside the
// hinge.
inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double x = a.values()[i];
        v[i] = std::isnan(x) ? x : (x > 0.0 ? x : 0.0);
    }
    return Tensor::make_node(a.shape(), std::move(v), "relu", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (pa.values[i] > 0.0) pa.grad[i] += n.grad[i];
    });
}

// Exact GELU: x * Phi(x) with the Gaussian CDF.
inline Tensor gelu(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double x = a.values()[i];
        v[i] = 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2));
    }
    return Tensor::make_node(a.shape(), std::move(v), "gelu", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        constexpr double inv_sqrt_2pi = 0.3989422804014327;
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double x = pa.values[i];
            double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
            double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
            pa.grad[i] += n.grad[i] * (cdf + x * pdf);
        }
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double x = a.values()[i];
        v[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    return Tensor::make_node(a.shape(), std::move(v), "sigmoid", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double s = n.values[i];
            pa.grad[i] += n.grad[i] * s * (1.0 - s);
        }
    });
}

inline Tensor abs(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::fabs(a.values()[i]);
    return Tensor::make_node(a.shape(), std::move(v), "abs", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) {
            double x = pa.values[i];
            double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
            pa.grad[i] += n.grad[i] * s;
        }
    });
}

inline Tensor square(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.values()[i] * a.values()[i];
    return Tensor::make_node(a.shape(), std::move(v), "square", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i] * 2.0 * pa.values[i];
    });
}

inline Tensor sqrt(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::sqrt(a.values()[i]);
    return Tensor::make_node(a.shape(), std::move(v), "sqrt", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            pa.grad[i] += n.grad[i] * 0.5 / n.values[i];
    });
}

inline Tensor log(const Tensor& a) {
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(a.values()[i]);
    return Tensor::make_node(a.shape(), std::move(v), "log", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] / pa.values[i];
    });
}

// Sum of all elements, as a scalar.
inline Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (double x : a.values()) acc += x;
    return Tensor::make_node({1}, {acc}, "sum", {a}, [](detail::TensorNode& n) {
        auto& pa = *n.parents[0];
        for (std::size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += n.grad[0];
    });
}

// Column sums of a matrix: [m,n] -> [n]. Rows are accumulated top to bottom.
inline Tensor sum_axis0(const Tensor& a) {
    detail::check_matrix(a, "sum_axis0");
    std::size_t m = a.rows(), n = a.cols();
    std::vector<double> v(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) v[j] += a.values()[i * n + j];
    return Tensor::make_node({n}, std::move(v), "sum_axis0", {a}, [m, n](detail::TensorNode& nd) {
        auto& pa = *nd.parents[0];
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) pa.grad[i * n + j] += nd.grad[j];
    });
}

// Column means: [m,n] -> [n].
inline Tensor mean_axis0(const Tensor& a) {
    detail::check_matrix(a, "mean_axis0");
    return scale(sum_axis0(a), 1.0 / static_cast<double>(a.rows()));
}

namespace detail {

inline std::pair<std::size_t, std::size_t> row_view(const Tensor& a) {
    if (a.dim() == 1) return {1, a.numel()};
    if (a.dim() == 2) return {a.rows(), a.cols()};
    throw ShapeError("row-wise op needs a 1-D or 2-D tensor, got " + a.shape_str());
}

}  // namespace detail

// Row-wise softmax with max subtraction. 1-D input is one row.
inline Tensor softmax(const Tensor& a) {
    auto [m, n] = detail::row_view(a);
    if (n == 0) throw ShapeError("softmax: empty rows");
    std::vector<double> v(a.numel());
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.values().data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double z = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            v[i * n + j] = std::exp(row[j] - mx);
            z += v[i * n + j];
        }
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] /= z;
    }
    return Tensor::make_node(a.shape(), std::move(v), "softmax", {a},
                             [m = m, n = n](detail::TensorNode& nd) {
                                 auto& pa = *nd.parents[0];
                                 for (std::size_t i = 0; i < m; ++i) {
                                     double dot = 0.0;
                                     for (std::size_t j = 0; j < n; ++j)
                                         dot += nd.grad[i * n + j] * nd.values[i * n + j];
                                     for (std::size_t j = 0; j < n; ++j)
                                         pa.grad[i * n + j] += (nd.grad[i * n + j] - dot) *
                                                               nd.values[i * n + j];
                                 }
                             });
}

// Row-wise layer normalization: (x - mean) / sqrt(pop_var + eps) per row.
// Gains/biases are applied by the caller via the broadcast ops.
inline Tensor layernorm(const Tensor& a, double eps = 1e-5) {
    auto [m, n] = detail::row_view(a);
    if (n < 1) throw ShapeError("layernorm: empty rows");
    std::vector<double> v(a.numel());
    std::vector<double> inv_std(m);
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = a.values().data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(n);
        double is = 1.0 / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < n; ++j) v[i * n + j] = (row[j] - mean) * is;
    }
    return Tensor::make_node(
        a.shape(), std::move(v), "layernorm", {a},
        [m = m, n = n, inv_std = std::move(inv_std)](detail::TensorNode& nd) {
            auto& pa = *nd.parents[0];
            double inv_n = 1.0 / static_cast<double>(n);
            for (std::size_t i = 0; i < m; ++i) {
                double gmean = 0.0, gymean = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    gmean += nd.grad[i * n + j];
                    gymean += nd.grad[i * n + j] * nd.values[i * n + j];
                }
                gmean *= inv_n;
                gymean *= inv_n;
                for (std::size_t j = 0; j < n; ++j) {
                    double y = nd.values[i * n + j];
                    pa.grad[i * n + j] +=
                        inv_std[i] * (nd.grad[i * n + j] - gmean - y * gymean);
                }
            }
        });
}

// Concatenation. All 1-D: end to end. All 2-D with equal row counts: along
// columns.
inline Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    bool all_1d = true;
    for (const Tensor& t : parts) all_1d = all_1d && t.dim() == 1;
    if (all_1d) {
        std::size_t total = 0;
        for (const Tensor& t : parts) total += t.numel();
        std::vector<double> v;
        v.reserve(total);
        std::vector<std::size_t> sizes;
        for (const Tensor& t : parts) {
            v.insert(v.end(), t.values().begin(), t.values().end());
            sizes.push_back(t.numel());
        }
        return Tensor::make_node({total}, std::move(v), "concat", parts,
                                 [sizes](detail::TensorNode& nd) {
                                     std::size_t off = 0;
                                     for (std::size_t p = 0; p < sizes.size(); ++p) {
                                         auto& par = *nd.parents[p];
                                         for (std::size_t i = 0; i < sizes[p]; ++i)
                                             par.grad[i] += nd.grad[off + i];
                                         off += sizes[p];
                                     }
                                 });
    }
    std::size_t m = parts[0].rows();
    std::size_t total_cols = 0;
    std::vector<std::size_t> widths;
    for (const Tensor& t : parts) {
        detail::check_matrix(t, "concat");
        if (t.rows() != m)
            throw ShapeError("concat: row counts differ, " + parts[0].shape_str() + " vs " +
                             t.shape_str());
        widths.push_back(t.cols());
        total_cols += t.cols();
    }
    std::vector<double> v(m * total_cols);
    std::size_t off = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
        const auto& pv = parts[p].values();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < widths[p]; ++j)
                v[i * total_cols + off + j] = pv[i * widths[p] + j];
        off += widths[p];
    }
    return Tensor::make_node({m, total_cols}, std::move(v), "concat", parts,
                             [m, total_cols, widths](detail::TensorNode& nd) {
                                 std::size_t off2 = 0;
                                 for (std::size_t p = 0; p < widths.size(); ++p) {
                                     auto& par = *nd.parents[p];
                                     for (std::size_t i = 0; i < m; ++i)
                                         for (std::size_t j = 0; j < widths[p]; ++j)
                                             par.grad[i * widths[p] + j] +=
                                                 nd.grad[i * total_cols + off2 + j];
                                     off2 += widths[p];
                                 }
                             });
}

// Rows of `table` selected by ids: [V,d] x ids[len] -> [len,d]. Gradients
// scatter back into the selected rows.
inline Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
    detail::check_matrix(table, "embedding_lookup");
    std::size_t v_size = table.rows(), d = table.cols();
    for (std::size_t id : ids)
        if (id >= v_size)
            throw ShapeError("embedding_lookup: id " + std::to_string(id) +
                             " out of range for table " + table.shape_str());
    std::vector<double> v(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) v[i * d + j] = table.values()[ids[i] * d + j];
    return Tensor::make_node({ids.size(), d}, std::move(v), "embedding_lookup", {table},
                             [ids, d](detail::TensorNode& nd) {
                                 auto& pt = *nd.parents[0];
                                 for (std::size_t i = 0; i < ids.size(); ++i)
                                     for (std::size_t j = 0; j < d; ++j)
                                         pt.grad[ids[i] * d + j] += nd.grad[i * d + j];
                             });
}

// ----------------------------------------------------------------------
// Gradient checking

// Max over all parameter coordinates of the relative difference between the
// analytic gradient and a central finite difference of f. f must rebuild its
// graph on every call.
inline double grad_check(const std::function<Tensor()>& f, std::vector<Tensor> params,
                         double eps = 1e-5) {
    if (eps <= 0.0) throw ConfigError("grad_check eps must be > 0");
    for (Tensor& p : params) {
        p.zero_grad();
        p.grad_mut();
    }
    Tensor loss = f();
    backward(loss);
    std::vector<std::vector<double>> analytic;
    for (Tensor& p : params) analytic.push_back(p.grad());

    double max_rel = 0.0;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        for (std::size_t i = 0; i < p.numel(); ++i) {
            double orig = p.values()[i];
            p.values()[i] = orig + eps;
            double up = f().value();
            p.values()[i] = orig - eps;
            double down = f().value();
            p.values()[i] = orig;
            double cd = (up - down) / (2.0 * eps);
            double a = analytic[pi][i];
            double denom = std::max({std::fabs(a), std::fabs(cd), 1e-8});
            max_rel = std::max(max_rel, std::fabs(a - cd) / denom);
        }
    }
    return max_rel;
}

}  // namespace midtune

#endif  // MIDTUNE_TENSOR_HPP
