#ifndef MIDTUNE_OPTIM_HPP
#define MIDTUNE_OPTIM_HPP

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "midtune/errors.hpp"
#include "midtune/tensor.hpp"

namespace midtune {

using ParamMap = std::map<std::string, Tensor>;

inline void zero_grads(ParamMap& params) {
    for (auto& [name, p] : params) p.zero_grad();
}

// Bias-corrected Adam. Moment buffers are keyed by parameter name; the step
// counter is shared across parameters.
struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::size_t t = 0;
    std::map<std::string, std::vector<double>> m;
    std::map<std::string, std::vector<double>> v;
};

// One update over every parameter, in name order. Gradients are zeroed after
// being consumed.
inline void adam_step(ParamMap& params, AdamState& state) {
    for (auto& [name, p] : params) {
        if (!p.has_grad())
            throw OptimizerError("adam_step: parameter \"" + name + "\" has no gradient");
    }
    ++state.t;
    double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (auto& [name, p] : params) {
        auto& m = state.m[name];
        auto& v = state.v[name];
        if (m.size() != p.numel()) m.assign(p.numel(), 0.0);
        if (v.size() != p.numel()) v.assign(p.numel(), 0.0);
        const auto& g = p.grad();
        auto& w = p.values();
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            double mhat = m[i] / bc1;
            double vhat = v[i] / bc2;
            w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
        p.zero_grad();
    }
}

}  // namespace midtune

#endif  // MIDTUNE_OPTIM_HPP
