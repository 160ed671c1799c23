#ifndef MIDTUNE_OBJECTIVES_HPP
#define MIDTUNE_OBJECTIVES_HPP

#include <cmath>
#include <string>
#include <vector>

#include "midtune/errors.hpp"
#include "midtune/tensor.hpp"

namespace midtune {

// Explicit alignment: squared-Euclidean triplet hinge
//   max(||s - r+||^2 - ||s - r-||^2 + margin, 0)
// with subgradient 0 at the hinge boundary (relu supplies exactly that).
struct TripletConfig {
    double margin = 1.0;

    void validate() const {
        if (margin < 0.0) throw ConfigError("triplet margin must be >= 0");
    }
};

inline Tensor squared_distance(const Tensor& a, const Tensor& b) {
    return sum(square(subtract(a, b)));
}

inline Tensor triplet_loss(const Tensor& s, const Tensor& r_pos, const Tensor& r_neg,
                           const TripletConfig& cfg) {
    cfg.validate();
    if (s.shape() != r_pos.shape() || s.shape() != r_neg.shape())
        throw ShapeError("triplet_loss: embedding shapes differ: " + s.shape_str() + ", " +
                         r_pos.shape_str() + ", " + r_neg.shape_str());
    Tensor gap = add(subtract(squared_distance(s, r_pos), squared_distance(s, r_neg)),
                     Tensor::scalar(cfg.margin));
    return relu(gap);
}

// Implicit alignment: a linear head over concat(s, r, |s - r|) feeding a
// sigmoid, i.e. the SBERT-style pair feature map with a binary output.
// Zero initialization keeps the first optimizer steps from backpropagating
// random-head noise into the encoders; the head fits on stable features
// first and the encoders join once it carries signal.
struct ClassifierHead {
    Tensor weight;  // [3 * d_model]
    Tensor bias;    // [1]

    static ClassifierHead zeros(std::size_t d_model) {
        ClassifierHead head;
        head.weight = Tensor::zeros({3 * d_model}, /*requires_grad=*/true);
        head.bias = Tensor::zeros({1}, /*requires_grad=*/true);
        return head;
    }
};

inline Tensor pair_features(const Tensor& s, const Tensor& r) {
    if (s.shape() != r.shape())
        throw ShapeError("pair_features: embedding shapes differ: " + s.shape_str() + " vs " +
                         r.shape_str());
    return concat({s, r, abs(subtract(s, r))});
}

inline Tensor classifier_logit(const Tensor& s, const Tensor& r, const ClassifierHead& head) {
    Tensor f = pair_features(s, r);
    if (f.shape() != head.weight.shape())
        throw ShapeError("classifier_logit: feature size " + f.shape_str() +
                         " does not match head weight " + head.weight.shape_str());
    return add(sum(multiply(f, head.weight)), head.bias);
}

// Binary cross-entropy from the logit, label in {0,1}:
//   loss = max(z,0) - z*y + log(1 + exp(-|z|))
// A fused node keeps the value and the gradient (sigmoid(z) - y) stable for
// any logit magnitude.
inline Tensor bce_loss(const Tensor& logit, int label) {
    if (label != 0 && label != 1)
        throw ConfigError("bce label must be 0 or 1, got " + std::to_string(label));
    if (logit.numel() != 1)
        throw ShapeError("bce_loss expects a scalar logit, got " + logit.shape_str());
    double z = logit.values()[0];
    double y = static_cast<double>(label);
    double value = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::fabs(z)));
    return Tensor::make_node({1}, {value}, "bce", {logit}, [y](detail::TensorNode& n) {
        double zv = n.parents[0]->values[0];
        double sig = zv >= 0.0 ? 1.0 / (1.0 + std::exp(-zv)) : std::exp(zv) / (1.0 + std::exp(zv));
        n.parents[0]->grad[0] += n.grad[0] * (sig - y);
    });
}

}  // namespace midtune

#endif  // MIDTUNE_OBJECTIVES_HPP
