#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fd_check.hpp"

#include "mstx/nn.hpp"
#include "mstx/tensor.hpp"

#include <cmath>
#include <vector>

using namespace mstx;
using fdtest::max_grad_err;
using fdtest::uniform_param;

namespace {
constexpr float kFdTol = 1e-4f;
}

TEST_CASE("square function gradient at x=3") {
    Tensor x = Tensor::param({1}, {3.f});
    Tape tape;
    Tensor y = ops::mul(x, x);
    tape.backward(y);
    CHECK(y.item() == doctest::Approx(9.f));
    CHECK(x.grad()[0] == doctest::Approx(6.f));
}

TEST_CASE("sum of matmul gradient is ones times B transposed") {
    Rng rng(3);
    Tensor a = uniform_param(rng, {2, 3});
    Tensor b = uniform_param(rng, {3, 2});
    Tape tape;
    Tensor loss = ops::sum(ops::matmul(a, b));
    tape.backward(loss);
    // d/dA sum(AB) = ones(2,2) B^T
    for (int r = 0; r < 2; ++r)
        for (int c = 0; c < 3; ++c) {
            float expect = 0.f;
            for (int j = 0; j < 2; ++j) expect += b.at(c, j);
            CHECK(a.grad()[size_t(r * 3 + c)] == doctest::Approx(expect).epsilon(1e-5));
        }
}

TEST_CASE("elementwise op gradients match finite differences") {
    Rng rng(11);
    auto scalarized = [](Tensor t) { return ops::mean(t); };

    Tensor x = uniform_param(rng, {3, 4}, 0.3f, 1.5f); // positive, away from kinks
    Tensor y = uniform_param(rng, {3, 4}, 0.3f, 1.5f);

    CHECK(max_grad_err({x, y}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::add(p[0], p[1]));
          }) < kFdTol);
    CHECK(max_grad_err({x, y}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::sub(p[0], p[1]));
          }) < kFdTol);
    CHECK(max_grad_err({x, y}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::mul(p[0], p[1]));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::add_scalar(p[0], 0.7f));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::mul_scalar(p[0], -1.3f));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::abs(p[0]));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::exp(p[0]));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::sqrt(p[0]));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::sigmoid(p[0]));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::tanh(p[0]));
          }) < kFdTol);

    Tensor mixed = uniform_param(rng, {3, 4}, -1.f, 1.f);
    for (int i = 0; i < mixed.size(); ++i) // keep clear of the relu kink
        if (std::abs(mixed.at(i)) < 0.05f) mixed.set(i, 0.2f);
    CHECK(max_grad_err({mixed}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::leaky_relu(p[0]));
          }) < kFdTol);
    (void)scalarized;
}

TEST_CASE("shape op gradients match finite differences") {
    Rng rng(12);
    Tensor x = uniform_param(rng, {3, 4});
    Tensor y = uniform_param(rng, {2, 4});
    Tensor w = uniform_param(rng, {4, 6});

    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::mul(ops::reshape(p[0], {4, 3}), ops::reshape(p[0], {4, 3})));
          }) < kFdTol);
    CHECK(max_grad_err({x, w}, [&](const std::vector<Tensor>& p) {
              return ops::mean(ops::matmul(ops::transpose(p[0]), ops::transpose(p[1]), false,
                                           true));
          }) < kFdTol);
    CHECK(max_grad_err({x, y}, [&](const std::vector<Tensor>& p) {
              Tensor cat = ops::concat_rows(p[0], p[1]);
              return ops::mean(ops::mul(cat, cat));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              Tensor g = ops::gather_rows(p[0], {2, 0, 2});
              return ops::mean(ops::mul(g, g));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              Tensor s = ops::slice_cols(p[0], 1, 2);
              return ops::mean(ops::mul(s, s));
          }) < kFdTol);
    Tensor il = uniform_param(rng, {6, 4}); // 2 groups of 3 channels
    CHECK(max_grad_err({il}, [&](const std::vector<Tensor>& p) {
              Tensor t = ops::interleave_time(p[0], 2);
              return ops::mean(ops::mul(t, t));
          }) < kFdTol);
}

TEST_CASE("broadcast and reduction gradients match finite differences") {
    Rng rng(13);
    Tensor x = uniform_param(rng, {3, 5});
    Tensor bias = uniform_param(rng, {3});
    Tensor scale = uniform_param(rng, {3}, 0.5f, 1.5f);
    Tensor tok = uniform_param(rng, {5, 3});
    Tensor cbias = uniform_param(rng, {3});

    CHECK(max_grad_err({x, bias}, [&](const std::vector<Tensor>& p) {
              Tensor t = ops::row_add(p[0], p[1]);
              return ops::mean(ops::mul(t, t));
          }) < kFdTol);
    CHECK(max_grad_err({x, scale}, [&](const std::vector<Tensor>& p) {
              Tensor t = ops::row_mul(p[0], p[1]);
              return ops::mean(ops::mul(t, t));
          }) < kFdTol);
    CHECK(max_grad_err({tok, cbias}, [&](const std::vector<Tensor>& p) {
              Tensor t = ops::col_add(p[0], p[1]);
              return ops::mean(ops::mul(t, t));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              return ops::mul_scalar(ops::sum(ops::mul(p[0], p[0])), 0.1f);
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              Tensor m = ops::mean_rows(p[0]);
              return ops::mean(ops::mul(m, m));
          }) < kFdTol);
}

TEST_CASE("matmul gradients for every transpose variant") {
    Rng rng(14);
    Tensor a = uniform_param(rng, {3, 4});
    Tensor b = uniform_param(rng, {4, 2});
    Tensor at = uniform_param(rng, {4, 3});
    Tensor bt = uniform_param(rng, {2, 4});

    auto loss = [](Tensor m) { return ops::mean(ops::mul(m, m)); };
    CHECK(max_grad_err({a, b}, [&](const std::vector<Tensor>& p) {
              return loss(ops::matmul(p[0], p[1]));
          }) < kFdTol);
    CHECK(max_grad_err({at, b}, [&](const std::vector<Tensor>& p) {
              return loss(ops::matmul(p[0], p[1], true, false));
          }) < kFdTol);
    CHECK(max_grad_err({a, bt}, [&](const std::vector<Tensor>& p) {
              return loss(ops::matmul(p[0], p[1], false, true));
          }) < kFdTol);
    CHECK(max_grad_err({at, bt}, [&](const std::vector<Tensor>& p) {
              return loss(ops::matmul(p[0], p[1], true, true));
          }) < kFdTol);
}

TEST_CASE("conv1d kernel [1] is the identity") {
    Rng rng(15);
    Tensor x = uniform_param(rng, {2, 7});
    Tensor w({1, 2, 1}, {1.f, 0.f});
    Tensor b({1}, {0.f});
    Tensor y = ops::conv1d(x, w, b);
    REQUIRE(y.dim(0) == 1);
    REQUIRE(y.dim(1) == 7);
    for (int t = 0; t < 7; ++t) CHECK(y.at(0, t) == doctest::Approx(x.at(0, t)));
}

TEST_CASE("conv1d box kernel preserves a constant signal") {
    Tensor x({1, 9}, std::vector<float>(9, 4.f));
    Tensor w({1, 1, 3}, {1.f / 3, 1.f / 3, 1.f / 3});
    Tensor b({1}, {0.f});
    Tensor y = ops::conv1d(x, w, b);
    // interior frames see three copies of the constant; edges see zero padding
    for (int t = 1; t < 8; ++t) CHECK(y.at(0, t) == doctest::Approx(4.f).epsilon(1e-6));
}

TEST_CASE("conv1d stride 2 matches a direct-summation oracle") {
    Rng rng(16);
    const int cin = 3, cout = 2, k = 5, T = 11, stride = 2, dil = 1;
    Tensor x = uniform_param(rng, {cin, T});
    Tensor w = uniform_param(rng, {cout, cin, k});
    Tensor b = uniform_param(rng, {cout});
    Tensor y = ops::conv1d(x, w, b, stride, dil);
    REQUIRE(y.dim(0) == cout);
    REQUIRE(y.dim(1) == (T + stride - 1) / stride);

    const int pad = dil * (k - 1) / 2;
    for (int o = 0; o < cout; ++o)
        for (int t = 0; t < y.dim(1); ++t) {
            double acc = b.at(o);
            for (int i = 0; i < cin; ++i)
                for (int j = 0; j < k; ++j) {
                    int src = t * stride - pad + j * dil;
                    if (src < 0 || src >= T) continue;
                    acc += double(w.vec()[size_t((o * cin + i) * k + j)]) * x.at(i, src);
                }
            CHECK(y.at(o, t) == doctest::Approx(float(acc)).epsilon(1e-5));
        }
}

TEST_CASE("conv1d gradients match finite differences") {
    Rng rng(17);
    Tensor x = uniform_param(rng, {2, 8});
    Tensor w = uniform_param(rng, {3, 2, 3});
    Tensor b = uniform_param(rng, {3});
    CHECK(max_grad_err({x, w, b}, [&](const std::vector<Tensor>& p) {
              Tensor y = ops::conv1d(p[0], p[1], p[2]);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
    CHECK(max_grad_err({x, w, b}, [&](const std::vector<Tensor>& p) {
              Tensor y = ops::conv1d(p[0], p[1], p[2], 2, 2);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
}

TEST_CASE("attention with one timestep returns v") {
    Rng rng(18);
    Tensor q = uniform_param(rng, {3, 4});
    Tensor k = uniform_param(rng, {1, 4});
    Tensor v = uniform_param(rng, {1, 4});
    Tensor y = ops::multi_head_attention(q, k, v, 1);
    for (int t = 0; t < 3; ++t)
        for (int d = 0; d < 4; ++d) CHECK(y.at(t, d) == doctest::Approx(v.at(0, d)));
}

TEST_CASE("attention with orthogonal q averages v") {
    // q is orthogonal to every key row, so all scores are zero and the
    // softmax is uniform
    Tensor q({1, 4}, {0.f, 0.f, 1.f, 0.f});
    Tensor k({3, 4}, {1.f, 0.f, 0.f, 0.f, 0.f, 1.f, 0.f, 0.f, 1.f, 1.f, 0.f, 0.f});
    Tensor v({3, 4}, {3.f, 0.f, 0.f, 1.f, 0.f, 3.f, 0.f, 1.f, 0.f, 0.f, 3.f, 1.f});
    Tensor y = ops::multi_head_attention(q, k, v, 1);
    CHECK(y.at(0, 0) == doctest::Approx(1.f));
    CHECK(y.at(0, 1) == doctest::Approx(1.f));
    CHECK(y.at(0, 2) == doctest::Approx(1.f));
    CHECK(y.at(0, 3) == doctest::Approx(1.f));
}

TEST_CASE("two-head attention matches a brute-force oracle") {
    Rng rng(19);
    const int Tq = 4, Tk = 5, D = 6, heads = 2, hd = D / heads;
    Tensor q = uniform_param(rng, {Tq, D});
    Tensor k = uniform_param(rng, {Tk, D});
    Tensor v = uniform_param(rng, {Tk, D});
    Tensor y = ops::multi_head_attention(q, k, v, heads);

    for (int h = 0; h < heads; ++h)
        for (int t = 0; t < Tq; ++t) {
            std::vector<double> scores(size_t(Tk));
            double mx = -1e30;
            for (int s = 0; s < Tk; ++s) {
                double dot = 0;
                for (int d = 0; d < hd; ++d)
                    dot += double(q.at(t, h * hd + d)) * k.at(s, h * hd + d);
                scores[size_t(s)] = dot / std::sqrt(double(hd));
                mx = std::max(mx, scores[size_t(s)]);
            }
            double z = 0;
            for (double& s : scores) {
                s = std::exp(s - mx);
                z += s;
            }
            for (int d = 0; d < hd; ++d) {
                double acc = 0;
                for (int s = 0; s < Tk; ++s)
                    acc += scores[size_t(s)] / z * v.at(s, h * hd + d);
                CHECK(std::abs(y.at(t, h * hd + d) - float(acc)) < 1e-5f);
            }
        }
}

TEST_CASE("attention and softmax gradients match finite differences") {
    Rng rng(20);
    Tensor q = uniform_param(rng, {3, 4});
    Tensor k = uniform_param(rng, {4, 4});
    Tensor v = uniform_param(rng, {4, 4});
    CHECK(max_grad_err({q, k, v}, [&](const std::vector<Tensor>& p) {
              Tensor y = ops::multi_head_attention(p[0], p[1], p[2], 2);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
    Tensor x = uniform_param(rng, {3, 5});
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              Tensor y = ops::softmax_rows(p[0]);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
}

TEST_CASE("adain with the input's own stats is the identity") {
    Rng rng(21);
    Tensor x = uniform_param(rng, {3, 8});
    Tensor mean({3});
    Tensor stdev({3});
    for (int c = 0; c < 3; ++c) {
        double m = 0, s = 0;
        for (int t = 0; t < 8; ++t) m += x.at(c, t);
        m /= 8;
        for (int t = 0; t < 8; ++t) s += (x.at(c, t) - m) * (x.at(c, t) - m);
        mean.set(c, float(m));
        stdev.set(c, float(std::sqrt(s / 8)));
    }
    Tensor y = ops::adain(x, mean, stdev);
    for (int i = 0; i < x.size(); ++i) CHECK(y.at(i) == doctest::Approx(x.at(i)).epsilon(1e-4));
}

TEST_CASE("adain to stats (0,1) is instance normalization") {
    Rng rng(22);
    Tensor x = uniform_param(rng, {3, 8});
    Tensor y = ops::adain(x, Tensor({3}, std::vector<float>(3, 0.f)),
                          Tensor({3}, std::vector<float>(3, 1.f)));
    Tensor in = ops::instance_norm(x);
    for (int i = 0; i < x.size(); ++i) CHECK(y.at(i) == doctest::Approx(in.at(i)).epsilon(1e-4));
}

TEST_CASE("adain maps a constant channel to the target mean") {
    Tensor x({2, 6}, std::vector<float>(12, 7.f));
    Tensor y = ops::adain(x, Tensor({2}, {3.f, -1.f}), Tensor({2}, {2.f, 0.5f}));
    for (int t = 0; t < 6; ++t) {
        CHECK(y.at(0, t) == doctest::Approx(3.f).epsilon(1e-4));
        CHECK(y.at(1, t) == doctest::Approx(-1.f).epsilon(1e-4));
    }
}

TEST_CASE("normalization and adain gradients match finite differences") {
    Rng rng(23);
    Tensor x = uniform_param(rng, {3, 6});
    Tensor m = uniform_param(rng, {3});
    Tensor s = uniform_param(rng, {3}, 0.5f, 1.5f);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              Tensor y = ops::instance_norm(p[0]);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
    CHECK(max_grad_err({x}, [&](const std::vector<Tensor>& p) {
              Tensor y = ops::layer_norm(p[0]);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
    CHECK(max_grad_err({x, m, s}, [&](const std::vector<Tensor>& p) {
              Tensor y = ops::adain(p[0], p[1], p[2]);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
}

TEST_CASE("loss gradients match finite differences") {
    Rng rng(24);
    Tensor a = uniform_param(rng, {3, 4});
    Tensor b = uniform_param(rng, {3, 4}, 1.2f, 2.f); // keep |a-b| away from 0
    CHECK(max_grad_err({a}, [&](const std::vector<Tensor>& p) {
              return ops::mean_abs(p[0], b);
          }) < kFdTol);
    CHECK(max_grad_err({a, b}, [&](const std::vector<Tensor>& p) {
              return ops::mean_sq(p[0], p[1]);
          }) < kFdTol);
    CHECK(max_grad_err({a, b}, [&](const std::vector<Tensor>& p) {
              return ops::mul_scalar(ops::sum_sq(p[0], p[1]), 0.05f);
          }) < kFdTol);

    Tensor logits = uniform_param(rng, {2, 6});
    std::vector<float> targets(12);
    for (float& t : targets) t = rng.uniform() < 0.5 ? 0.f : 1.f;
    CHECK(max_grad_err({logits}, [&](const std::vector<Tensor>& p) {
              return ops::bce_with_logits(p[0], targets);
          }) < kFdTol);
    Tensor cl = uniform_param(rng, {5});
    CHECK(max_grad_err({cl}, [&](const std::vector<Tensor>& p) {
              return ops::softmax_cross_entropy(p[0], 3);
          }) < kFdTol);
}

TEST_CASE("integrate_xz gradients match finite differences away from the gate") {
    Rng rng(25);
    // planar speeds stay well above the gate so the heading gate never flips
    // inside the finite-difference probe
    Tensor h = uniform_param(rng, {3, 6}, 0.8f, 1.6f);
    CHECK(max_grad_err({h}, [&](const std::vector<Tensor>& p) {
              Tensor tr = ops::integrate_xz(p[0], 0.f, 0.f, 0.1f, 0.25f, 0.5f);
              return ops::mean(ops::mul(tr, tr));
          }) < kFdTol);
}

TEST_CASE("dense layer maps and gradients") {
    Rng rng(26);
    nn::Dense d(rng, 4, 3);
    nn::NamedParams ps;
    d.collect("d", ps);
    REQUIRE(ps.size() == 2);
    Tensor x = uniform_param(rng, {4, 5});
    CHECK(max_grad_err({ps[0].second, ps[1].second, x},
                       [&](const std::vector<Tensor>& p) {
                           Tensor y = d.channels(p[2]);
                           return ops::mean(ops::mul(y, y));
                       }) < kFdTol);
    Tensor tok = uniform_param(rng, {5, 4});
    CHECK(max_grad_err({ps[0].second, ps[1].second, tok},
                       [&](const std::vector<Tensor>& p) {
                           Tensor y = d.tokens(p[2]);
                           return ops::mean(ops::mul(y, y));
                       }) < kFdTol);
    Tensor v = uniform_param(rng, {4});
    CHECK(max_grad_err({ps[0].second, ps[1].second, v},
                       [&](const std::vector<Tensor>& p) {
                           Tensor y = d.vec(p[2]);
                           return ops::mean(ops::mul(y, y));
                       }) < kFdTol);
}

TEST_CASE("conv layer gradients through the module wrapper") {
    Rng rng(27);
    nn::Conv1d c(rng, 3, 2, 3, 2, 1);
    nn::NamedParams ps;
    c.collect("c", ps);
    Tensor x = uniform_param(rng, {3, 9});
    std::vector<Tensor> params = {ps[0].second, ps[1].second, x};
    CHECK(max_grad_err(params, [&](const std::vector<Tensor>& p) {
              Tensor y = c(p[2]);
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
}

TEST_CASE("transformer block gradients match finite differences") {
    Rng rng(28);
    nn::TransformerBlock blk(rng, 8, 2, 16);
    nn::NamedParams ps;
    blk.collect("blk", ps);
    Tensor x = uniform_param(rng, {4, 8}, -0.5f, 0.5f);
    std::vector<Tensor> params;
    for (auto& [name, t] : ps) params.push_back(t);
    params.push_back(x);
    CHECK(max_grad_err(params, [&](const std::vector<Tensor>& p) {
              Tensor y = blk.self_attend(p.back());
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);

    Tensor kv = uniform_param(rng, {5, 8}, -0.5f, 0.5f);
    std::vector<Tensor> cparams = params;
    cparams.push_back(kv);
    CHECK(max_grad_err(cparams, [&](const std::vector<Tensor>& p) {
              Tensor y = blk.cross_attend(p[p.size() - 2], p.back());
              return ops::mean(ops::mul(y, y));
          }) < kFdTol);
}

TEST_CASE("adam ignores zero gradients") {
    Tensor p = Tensor::param({3}, {1.f, 2.f, 3.f});
    nn::Adam opt(0.1f);
    opt.add(p);
    opt.zero_grad();
    {
        Tape tape;
        Tensor loss = ops::mul_scalar(ops::sum(p), 0.f);
        tape.backward(loss);
    }
    CHECK(opt.step());
    CHECK(p.at(0) == doctest::Approx(1.f));
    CHECK(p.at(1) == doctest::Approx(2.f));
    CHECK(p.at(2) == doctest::Approx(3.f));
}

TEST_CASE("adam first step moves by lr against the gradient sign") {
    Tensor p = Tensor::param({1}, {5.f});
    nn::Adam opt(0.1f);
    opt.add(p);
    opt.zero_grad();
    {
        Tape tape;
        Tensor loss = ops::mul_scalar(ops::sum(p), 2.f); // constant grad +2
        tape.backward(loss);
    }
    REQUIRE(opt.step());
    // bias-corrected first step is -lr * g/|g| up to the eps term
    CHECK(p.at(0) == doctest::Approx(5.f - 0.1f).epsilon(1e-3));
}

TEST_CASE("adam converges on a quadratic bowl") {
    Tensor p = Tensor::param({1}, {-4.f});
    nn::Adam opt(0.1f);
    opt.add(p);
    for (int i = 0; i < 500; ++i) {
        opt.zero_grad();
        Tape tape;
        Tensor d = ops::add_scalar(p, -2.f);
        Tensor loss = ops::sum(ops::mul(d, d));
        tape.backward(loss);
        REQUIRE(opt.step());
    }
    CHECK(std::abs(p.at(0) - 2.f) < 1e-2f);
}

TEST_CASE("adam refuses non-finite gradients and leaves params untouched") {
    Tensor p = Tensor::param({2}, {1.f, 2.f});
    nn::Adam opt(0.1f);
    opt.add(p);
    opt.zero_grad();
    {
        Tape tape;
        Tensor loss = ops::sum(ops::mul(p, p));
        tape.backward(loss);
    }
    p.grad()[0] = std::numeric_limits<float>::quiet_NaN();
    CHECK_FALSE(opt.step());
    CHECK(p.at(0) == doctest::Approx(1.f));
    CHECK(p.at(1) == doctest::Approx(2.f));
}

TEST_CASE("ops run without a tape and leave no gradients") {
    Rng rng(29);
    Tensor x = uniform_param(rng, {2, 3});
    Tensor y = ops::mul(x, x);
    CHECK_FALSE(y.requires_grad() && Tape::recording());
    CHECK_FALSE(x.has_grad());
    CHECK(y.defined());
}
