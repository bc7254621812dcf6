#include "mstx/nn.hpp"

#include <cmath>

namespace mstx::nn {

Tensor xavier_param(Rng& rng, Shape shape, int fan_in, int fan_out) {
    const float limit = std::sqrt(6.f / float(fan_in + fan_out));
    std::vector<float> values(size_t(shape_size(shape)));
    for (auto& v : values) v = float(rng.uniform(-limit, limit));
    return Tensor::param(std::move(shape), std::move(values));
}

Tensor zeros_param(Shape shape) {
    return Tensor::param(std::move(shape), std::vector<float>(size_t(shape_size(shape)), 0.f));
}

Dense::Dense(Rng& rng, int in, int out)
    : w(xavier_param(rng, {out, in}, in, out)), b(zeros_param({out})) {}

Tensor Dense::channels(const Tensor& x) const {
    return ops::row_add(ops::matmul(w, x), b);
}

Tensor Dense::tokens(const Tensor& x) const {
    return ops::col_add(ops::matmul(x, w, false, true), b);
}

Tensor Dense::vec(const Tensor& x) const {
    Tensor col = ops::reshape(x, {x.size(), 1});
    return ops::reshape(channels(col), {w.dim(0)});
}

void Dense::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

Conv1d::Conv1d(Rng& rng, int in, int out, int k, int stride, int dilation)
    : w(xavier_param(rng, {out, in, k}, in * k, out * k)),
      b(zeros_param({out})),
      stride(stride),
      dilation(dilation) {
    if (k % 2 == 0) throw ShapeError("conv layer requires an odd kernel width");
}

Tensor Conv1d::operator()(const Tensor& x) const {
    return ops::conv1d(x, w, b, stride, dilation);
}

void Conv1d::collect(const std::string& prefix, NamedParams& out) const {
    out.emplace_back(prefix + ".w", w);
    out.emplace_back(prefix + ".b", b);
}

TransformerBlock::TransformerBlock(Rng& rng, int dim, int heads, int ff)
    : q(rng, dim, dim),
      k(rng, dim, dim),
      v(rng, dim, dim),
      o(rng, dim, dim),
      ff1(rng, dim, ff),
      ff2(rng, ff, dim),
      heads(heads) {
    if (dim % heads != 0) throw ShapeError("transformer dim must divide by head count");
}

Tensor TransformerBlock::feed_forward(const Tensor& y) const {
    Tensor n = ops::instance_norm(y); // per-token over features in token-major layout
    return ops::add(y, ff2.tokens(ops::leaky_relu(ff1.tokens(n))));
}

Tensor TransformerBlock::self_attend(const Tensor& x) const {
    Tensor n = ops::instance_norm(x);
    Tensor a = ops::multi_head_attention(q.tokens(n), k.tokens(n), v.tokens(n), heads);
    Tensor y = ops::add(x, o.tokens(a));
    return feed_forward(y);
}

Tensor TransformerBlock::cross_attend(const Tensor& x, const Tensor& kv) const {
    Tensor nx = ops::instance_norm(x);
    Tensor nkv = ops::instance_norm(kv);
    Tensor a = ops::multi_head_attention(q.tokens(nx), k.tokens(nkv), v.tokens(nkv), heads);
    Tensor y = ops::add(x, o.tokens(a));
    return feed_forward(y);
}

void TransformerBlock::collect(const std::string& prefix, NamedParams& out) const {
    q.collect(prefix + ".q", out);
    k.collect(prefix + ".k", out);
    v.collect(prefix + ".v", out);
    o.collect(prefix + ".o", out);
    ff1.collect(prefix + ".ff1", out);
    ff2.collect(prefix + ".ff2", out);
}

Adam::Adam(float lr, float beta1, float beta2, float eps)
    : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::add(const Tensor& p) {
    params_.push_back(p);
    m_.emplace_back(size_t(p.size()), 0.f);
    v_.emplace_back(size_t(p.size()), 0.f);
}

void Adam::add(const std::vector<Tensor>& ps) {
    for (const auto& p : ps) add(p);
}

void Adam::add(const NamedParams& ps) {
    for (const auto& [name, p] : ps) add(p);
}

bool Adam::step() {
    for (auto& p : params_) {
        p.impl()->ensure_grad();
        for (float g : p.grad())
            if (!std::isfinite(g)) return false;
    }
    ++t_;
    const float c1 = 1.f - std::pow(b1_, float(t_));
    const float c2 = 1.f - std::pow(b2_, float(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        const auto& g = p.grad();
        auto& m = m_[i];
        auto& v = v_[i];
        float* data = p.data();
        for (size_t j = 0; j < g.size(); ++j) {
            m[j] = b1_ * m[j] + (1.f - b1_) * g[j];
            v[j] = b2_ * v[j] + (1.f - b2_) * g[j] * g[j];
            const float mh = m[j] / c1;
            const float vh = v[j] / c2;
            data[j] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
    }
    return true;
}

void Adam::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

} // namespace mstx::nn
