#pragma once

#include <cmath>
#include <vector>

#include "dreamforge/tensor.hpp"

namespace dreamforge {

/// Bias-corrected Adam over a list of parameter tensors.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double lr = 1e-3;

    static AdamState init(const std::vector<Tensor>& params, double lr, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8) {
        AdamState s;
        s.lr = lr;
        s.beta1 = beta1;
        s.beta2 = beta2;
        s.epsilon = epsilon;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const Tensor& p : params) {
            s.m.push_back(Tensor::zeros(p.shape));
            s.v.push_back(Tensor::zeros(p.shape));
        }
        return s;
    }
};

/// One Adam step in place. params, grads and state moments must align
/// element for element.
inline void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw Error("adam_step: parameter/gradient count mismatch");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        const Tensor& gt = grads[i];
        if (!p.same_shape(gt))
            throw Error("adam_step: shape mismatch at param " + std::to_string(i) + ": " +
                        shape_str(p.shape) + " vs " + shape_str(gt.shape));
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        for (std::int64_t j = 0; j < p.numel(); ++j) {
            m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * gt[j];
            v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * gt[j] * gt[j];
            const double mhat = m[j] / bc1;
            const double vhat = v[j] / bc2;
            p[j] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

}  // namespace dreamforge
