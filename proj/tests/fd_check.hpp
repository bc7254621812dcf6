#pragma once

// Central finite-difference comparison against the recorded gradients. Loss
// builders must be pure functions of the parameter list. Inputs are kept
// small so float32 evaluation noise stays well under the tolerance.

#include "mstx/tensor.hpp"

#include <cmath>
#include <functional>
#include <vector>

namespace fdtest {

using mstx::Tape;
using mstx::Tensor;

using LossFn = std::function<Tensor(const std::vector<Tensor>&)>;

inline float max_grad_err(std::vector<Tensor> params, const LossFn& fn,
                          float eps = 1e-3f) {
    std::vector<std::vector<float>> analytic;
    {
        Tape tape;
        Tensor loss = fn(params);
        tape.backward(loss);
    }
    for (Tensor& p : params) {
        if (p.has_grad())
            analytic.push_back(p.grad());
        else
            analytic.emplace_back(size_t(p.size()), 0.f);
        p.zero_grad();
    }

    float worst = 0.f;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor& p = params[pi];
        for (int i = 0; i < p.size(); ++i) {
            const float saved = p.at(i);
            p.set(i, saved + eps);
            const float up = fn(params).item();
            p.set(i, saved - eps);
            const float dn = fn(params).item();
            p.set(i, saved);
            const float fd = (up - dn) / (2.f * eps);
            worst = std::max(worst, std::abs(fd - analytic[pi][size_t(i)]));
        }
    }
    return worst;
}

inline std::vector<float> uniform_values(mstx::Rng& rng, int n, float lo, float hi) {
    std::vector<float> v(size_t(n));
    for (float& x : v) x = float(rng.uniform(lo, hi));
    return v;
}

inline Tensor uniform_param(mstx::Rng& rng, mstx::Shape shape, float lo = -1.f,
                            float hi = 1.f) {
    return Tensor::param(shape, uniform_values(rng, mstx::shape_size(shape), lo, hi));
}

} // namespace fdtest
