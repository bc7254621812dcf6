#include "mstx/hip_contact.hpp"

#include "mstx/checkpoint.hpp"

#include <algorithm>
#include <cmath>

namespace mstx {

FDeltaModel FDeltaModel::init(Rng& rng) {
    FDeltaModel m;
    m.c1 = nn::Conv1d(rng, 3, 32, 7, 1, 1);
    m.c2 = nn::Conv1d(rng, 32, 64, 7, 1, 2);
    m.c3 = nn::Conv1d(rng, 64, 64, 7, 1, 4);
    m.c4 = nn::Conv1d(rng, 64, 2, 7, 1, 2);
    return m;
}

int FDeltaModel::receptive_field() const {
    const int k = c1.w.dim(2);
    return 1 + (k - 1) * (c1.dilation + c2.dilation + c3.dilation + c4.dilation);
}

Tensor FDeltaModel::logits(const Tensor& h) const {
    if (h.ndim() != 2 || h.dim(0) != 3)
        throw ShapeError("fdelta wants (3, T) hip velocity, got " + shape_str(h.shape()));
    const int rf = receptive_field();
    if (h.dim(1) < rf)
        throw Error("fdelta needs at least " + std::to_string(rf) + " frames, got " +
                    std::to_string(h.dim(1)));
    Tensor x = ops::leaky_relu(c1(h), 0.2f);
    x = ops::leaky_relu(c2(x), 0.2f);
    x = ops::leaky_relu(c3(x), 0.2f);
    return c4(x);
}

Tensor FDeltaModel::forward(const Tensor& h) const { return ops::sigmoid(logits(h)); }

ContactSeq FDeltaModel::predict(const HipVelocitySeq& h) const {
    const int T = h.frames();
    Tensor in({3, T});
    for (int t = 0; t < T; ++t) {
        in.set(0, t, h.vel[size_t(t)].x);
        in.set(1, t, h.vel[size_t(t)].y);
        in.set(2, t, h.vel[size_t(t)].z);
    }
    Tensor p = forward(in);
    ContactSeq c = ContactSeq::zeros(T);
    for (int t = 0; t < T; ++t) {
        c.c[size_t(t)][0] = p.at(0, t);
        c.c[size_t(t)][1] = p.at(1, t);
    }
    return c;
}

void FDeltaModel::collect(nn::NamedParams& out) const {
    c1.collect("fdelta.c1", out);
    c2.collect("fdelta.c2", out);
    c3.collect("fdelta.c3", out);
    c4.collect("fdelta.c4", out);
}

void FDeltaModel::save(const std::string& path) const {
    nn::NamedParams rec;
    collect(rec);
    save_checkpoint(path, CkptKind::fdelta, rec);
}

FDeltaModel FDeltaModel::load(const std::string& path) {
    nn::NamedParams rec = load_checkpoint(path, CkptKind::fdelta);
    Rng rng(0);
    FDeltaModel m = init(rng);
    nn::NamedParams model_params;
    m.collect(model_params);
    assign_params(rec, model_params);
    return m;
}

Tensor augment_scale(const Tensor& h, float factor) {
    return ops::mul_scalar(h, factor);
}

namespace {

std::vector<float> contact_targets(const ContactSeq& c) {
    const int T = c.frames();
    std::vector<float> y(size_t(2 * T));
    for (int t = 0; t < T; ++t) {
        y[size_t(t)] = c.c[size_t(t)][0] ? 1.f : 0.f;
        y[size_t(T + t)] = c.c[size_t(t)][1] ? 1.f : 0.f;
    }
    return y;
}

} // namespace

FdeltaTrainResult train_fdelta(const Corpus& corpus, const FdeltaTrainConfig& cfg) {
    if (corpus.train.empty()) throw Error("fdelta training needs a train split");
    Rng rng(cfg.seed);
    FdeltaTrainResult res;
    res.model = FDeltaModel::init(rng);

    nn::NamedParams params;
    res.model.collect(params);
    nn::Adam opt(cfg.lr);
    opt.add(params);

    std::vector<Tensor> inputs;
    std::vector<std::vector<float>> targets;
    inputs.reserve(corpus.train.size());
    for (const Window& w : corpus.train) {
        inputs.push_back(hip_rows(w.raw));
        targets.push_back(contact_targets(w.contacts));
    }

    std::vector<size_t> order(inputs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        double epoch_loss = 0.0;
        int epoch_n = 0;
        for (size_t at = 0; at < order.size();) {
            const size_t bn = std::min(size_t(cfg.batch), order.size() - at);
            opt.zero_grad();
            double batch_loss = 0.0;
            for (size_t b = 0; b < bn; ++b, ++at) {
                const size_t idx = order[at];
                Tensor in = inputs[idx];
                if (cfg.augment)
                    in = augment_scale(in, float(rng.uniform(cfg.scale_lo, cfg.scale_hi)));
                Tape tape;
                Tensor loss = ops::bce_with_logits(res.model.logits(in), targets[idx]);
                tape.backward(ops::mul_scalar(loss, 1.f / float(bn)));
                batch_loss += loss.item();
            }
            batch_loss /= double(bn);
            if (!std::isfinite(batch_loss)) throw Error("fdelta training diverged (loss)");
            if (!opt.step()) throw Error("fdelta training diverged (gradients)");
            epoch_loss += batch_loss;
            ++epoch_n;
            ++step;
        }
        res.final_loss = float(epoch_loss / std::max(epoch_n, 1));
        res.curve.points.emplace_back(step, res.final_loss);
    }

    int hit = 0, total = 0;
    const auto& eval_set = corpus.val.empty() ? corpus.train : corpus.val;
    for (const Window& w : eval_set) {
        Tensor p = res.model.forward(hip_rows(w.raw));
        for (int t = 0; t < w.contacts.frames(); ++t)
            for (int f = 0; f < 2; ++f) {
                hit += (p.at(f, t) > 0.5f) == w.contacts.on(t, f);
                ++total;
            }
    }
    res.val_accuracy = total ? float(hit) / float(total) : 0.f;
    return res;
}

} // namespace mstx
