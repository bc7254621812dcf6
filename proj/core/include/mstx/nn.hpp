#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mstx/tensor.hpp"

namespace mstx::nn {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

struct TrainCurve {
    std::vector<std::pair<int, float>> points; // (step, loss)
};

// Xavier-uniform weights: U(-L, L) with L = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_param(Rng& rng, Shape shape, int fan_in, int fan_out);
Tensor zeros_param(Shape shape);

struct Dense {
    Tensor w; // (out, in)
    Tensor b; // (out)

    Dense() = default;
    Dense(Rng& rng, int in, int out);

    Tensor channels(const Tensor& x) const; // (in,T)  -> (out,T)
    Tensor tokens(const Tensor& x) const;   // (T,in)  -> (T,out)
    Tensor vec(const Tensor& x) const;      // (in)    -> (out)

    void collect(const std::string& prefix, NamedParams& out) const;
};

struct Conv1d {
    Tensor w; // (out, in, k)
    Tensor b; // (out)
    int stride = 1;
    int dilation = 1;

    Conv1d() = default;
    Conv1d(Rng& rng, int in, int out, int k, int stride = 1, int dilation = 1);

    Tensor operator()(const Tensor& x) const;

    void collect(const std::string& prefix, NamedParams& out) const;
};

// Pre-norm transformer block over token-major (T, dim) sequences.
struct TransformerBlock {
    Dense q, k, v, o, ff1, ff2;
    int heads = 4;

    TransformerBlock() = default;
    TransformerBlock(Rng& rng, int dim, int heads, int ff);

    Tensor self_attend(const Tensor& x) const;
    // queries from x, keys/values from kv (token-major, same feature dim)
    Tensor cross_attend(const Tensor& x, const Tensor& kv) const;

    void collect(const std::string& prefix, NamedParams& out) const;

private:
    Tensor feed_forward(const Tensor& y) const;
};

// Adam with bias correction. step() applies one update; if any gradient is
// non-finite it applies nothing and returns false (moments untouched).
class Adam {
public:
    explicit Adam(float lr = 1e-3f, float beta1 = 0.9f, float beta2 = 0.999f,
                  float eps = 1e-8f);

    void add(const Tensor& p);
    void add(const std::vector<Tensor>& ps);
    void add(const NamedParams& ps);

    bool step();
    void zero_grad();

    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }
    int64_t steps() const { return t_; }
    size_t param_count() const { return params_.size(); }

private:
    std::vector<Tensor> params_;
    std::vector<std::vector<float>> m_, v_;
    float lr_, b1_, b2_, eps_;
    int64_t t_ = 0;
};

} // namespace mstx::nn
