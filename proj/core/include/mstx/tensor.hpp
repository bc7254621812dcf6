#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mstx/common.hpp"

namespace mstx {

using Shape = std::vector<int>;

namespace detail {

struct TensorImpl;

// One recorded operation. `fn` accumulates into the inputs' grad buffers,
// reading the output's grad through a non-owning pointer (the graph keeps
// every intermediate alive while backward runs, so the pointer is valid).
struct Node {
    std::vector<std::shared_ptr<TensorImpl>> inputs;
    std::function<void()> fn;
};

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad; // empty until touched by backward
    bool requires_grad = false;
    std::shared_ptr<Node> producer;

    int size() const { return int(data.size()); }
    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), 0.f);
    }
};

} // namespace detail

int shape_size(const Shape& s);
std::string shape_str(const Shape& s);

// Dense float32 tensor with optional reverse-mode gradient. Copies are
// shallow (shared storage); use clone() for a deep copy.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.f);
    Tensor(Shape shape, std::vector<float> values);

    static Tensor scalar(float v) { return Tensor({1}, {v}); }
    // Leaf tensor that participates in gradient recording (a parameter).
    static Tensor param(Shape shape, std::vector<float> values);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return int(impl_->shape.size()); }
    int dim(int i) const { return impl_->shape[size_t(i)]; }
    int size() const { return impl_->size(); }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& vec() { return impl_->data; }
    const std::vector<float>& vec() const { return impl_->data; }

    float item() const;
    float at(int i) const { return impl_->data[size_t(i)]; }
    float at(int r, int c) const { return impl_->data[size_t(r) * dim(1) + c]; }
    void set(int i, float v) { impl_->data[size_t(i)] = v; }
    void set(int r, int c, float v) { impl_->data[size_t(r) * dim(1) + c] = v; }

    bool requires_grad() const { return impl_->requires_grad; }
    bool has_grad() const { return defined() && !impl_->grad.empty(); }
    std::vector<float>& grad();
    const std::vector<float>& grad() const;
    void zero_grad();

    Tensor clone() const;
    Tensor detached() const; // same data, no graph link, no grad flag

    std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

private:
    friend class Tape;
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Scoped recording of the autodiff graph. Ops link their inputs only while a
// tape is active; without one, forward passes are pure computation.
// Recording is single-threaded per step (one active tape per thread).
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Runs reverse-mode accumulation from a scalar loss. Gradients add into
    // any reachable tensor with requires_grad plus intermediates.
    void backward(const Tensor& loss);

    static bool recording();

private:
    Tape* prev_ = nullptr;
};

namespace ops {

// elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor add_scalar(const Tensor& a, float s);
Tensor mul_scalar(const Tensor& a, float s);
Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor leaky_relu(const Tensor& a, float slope = 0.2f);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);

// shape
Tensor reshape(const Tensor& a, Shape shape);
Tensor transpose(const Tensor& a);                       // (A,B) -> (B,A)
Tensor concat_rows(const Tensor& a, const Tensor& b);    // (Ca,T)+(Cb,T) -> (Ca+Cb,T)
Tensor gather_rows(const Tensor& a, std::vector<int> rows);
Tensor slice_cols(const Tensor& a, int c0, int len);     // (R,C) -> (R,len)
// (r*C, T) -> (C, r*T): channel groups interleave along time
Tensor interleave_time(const Tensor& a, int r);

// broadcast over the time axis of a (C,T) map
Tensor row_add(const Tensor& x, const Tensor& b);        // b: (C)
Tensor row_mul(const Tensor& x, const Tensor& s);        // s: (C)
// broadcast over the rows of a token-major (T,D) map
Tensor col_add(const Tensor& x, const Tensor& b);        // b: (D)

// reductions
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor mean_rows(const Tensor& a);                       // (C,T) -> (C)

// linear algebra; ta/tb transpose the logical operand
Tensor matmul(const Tensor& a, const Tensor& b, bool ta = false, bool tb = false);

// 1-D convolution over (C_in,T) with same padding; odd kernels only.
// Output length is ceil(T / stride).
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, int stride = 1,
              int dilation = 1);

Tensor softmax_rows(const Tensor& a);
// Scaled dot-product attention, fused forward/backward.
// q: (Tq,D), k/v: (Tk,D), D divisible by heads.
Tensor multi_head_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int heads);

// Integrates per-frame local hip displacement (3,T) rows (x,y,z) into a
// ground-plane track (2,T) rows (x,z), updating heading by gain * atan2(x,z)
// whenever the planar speed exceeds gate. Frame 0 stays at (x0,z0). Matches
// velocity-mode reconstruction; the heading gate is treated as constant in
// the backward pass.
Tensor integrate_xz(const Tensor& h, float x0, float z0, float yaw0, float gain,
                    float gate);

Tensor instance_norm(const Tensor& x, float eps = 1e-5f); // per channel over time
Tensor layer_norm(const Tensor& x, float eps = 1e-5f);    // per frame over channels
// Re-statistics of x to per-channel (mean, std). std is floored at eps.
Tensor adain(const Tensor& x, const Tensor& mean, const Tensor& std,
             float eps = 1e-5f);

// losses (scalar outputs)
Tensor mean_abs(const Tensor& a, const Tensor& b);
Tensor mean_sq(const Tensor& a, const Tensor& b);
Tensor sum_sq(const Tensor& a, const Tensor& b);
Tensor bce_with_logits(const Tensor& logits, const std::vector<float>& targets);
Tensor softmax_cross_entropy(const Tensor& logits, int label);

} // namespace ops

// Raw single-threaded sgemm used by the ops; exposed for benchmarks.
// C = alpha * op(A) * op(B) + beta * C with row-major storage.
void sgemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* A,
           int lda, const float* B, int ldb, float beta, float* C, int ldc);

} // namespace mstx
