#include "mstx/manifold.hpp"

#include "mstx/checkpoint.hpp"
#include "mstx/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace mstx {

namespace {

Tensor scalar_record(float v) { return Tensor({1}, {v}); }

std::vector<int> body_rows() {
    std::vector<int> rows(size_t(feat::kHipBase));
    for (int i = 0; i < feat::kHipBase; ++i) rows[size_t(i)] = i;
    return rows;
}

} // namespace

ManifoldModel ManifoldModel::init(Rng& rng, bool frame_level) {
    ManifoldModel m;
    m.frame_level = frame_level;
    m.e1 = nn::Conv1d(rng, feat::kDim, 96, 5, 2);
    m.e2 = nn::Conv1d(rng, 96, 128, 5, 2);
    m.e3 = nn::Conv1d(rng, 128, 128, 3, 1);
    m.pool_q = nn::xavier_param(rng, {1, 128}, 128, 128);
    m.mu_head = nn::Dense(rng, 128, m.latent_dim);
    m.lv_head = nn::Dense(rng, 128, m.latent_dim);
    const int t = m.tokens();
    m.z_in = frame_level ? nn::Dense(rng, m.latent_dim, 128)
                         : nn::Dense(rng, m.latent_dim, 128 * t);
    m.dec_pos = nn::xavier_param(rng, {m.window, 128}, 128, 128);
    m.h_embed = nn::Dense(rng, 3, 128);
    for (int i = 0; i < 4; ++i) m.blocks.emplace_back(rng, 128, 4, 256);
    m.out_head = nn::Dense(rng, 128, feat::kDim);
    return m;
}

Tensor ManifoldModel::encode_map(const Tensor& x_std) const {
    if (x_std.ndim() != 2 || x_std.dim(0) != feat::kDim || x_std.dim(1) != window)
        throw ShapeError("manifold encode: expected (" + std::to_string(feat::kDim) + "," +
                         std::to_string(window) + "), got " + shape_str(x_std.shape()));
    Tensor a = ops::leaky_relu(e1(x_std));
    a = ops::leaky_relu(e2(a));
    return ops::leaky_relu(e3(a));
}

ManifoldLatent ManifoldModel::encode(const Tensor& x_std, const Tensor* eps) const {
    Tensor toks = ops::transpose(encode_map(x_std)); // (T',128)
    ManifoldLatent lat;
    if (frame_level) {
        lat.mu = mu_head.tokens(toks);
        lat.logvar = lv_head.tokens(toks);
    } else {
        Tensor pooled = ops::multi_head_attention(pool_q, toks, toks, 4);
        pooled = ops::reshape(pooled, {128});
        lat.mu = mu_head.vec(pooled);
        lat.logvar = lv_head.vec(pooled);
    }
    if (eps) {
        if (eps->shape() != lat.mu.shape())
            throw ShapeError("manifold encode: eps shape " + shape_str(eps->shape()) +
                             " vs mu " + shape_str(lat.mu.shape()));
        lat.z = ops::add(lat.mu, ops::mul(ops::exp(ops::mul_scalar(lat.logvar, 0.5f)), *eps));
    } else {
        lat.z = lat.mu;
    }
    return lat;
}

Tensor ManifoldModel::decode(const Tensor& z, const Tensor& h_std) const {
    if (h_std.ndim() != 2 || h_std.dim(0) != 3 || h_std.dim(1) != window)
        throw ShapeError("manifold decode: hip rows must be (3," + std::to_string(window) +
                         "), got " + shape_str(h_std.shape()));
    Tensor kv = frame_level ? z_in.tokens(z) : ops::reshape(z_in.vec(z), {tokens(), 128});
    Tensor y = ops::add(h_embed.tokens(ops::transpose(h_std)), dec_pos);
    for (const auto& b : blocks) {
        y = b.self_attend(y);
        y = b.cross_attend(y, kv);
    }
    Tensor out = ops::transpose(out_head.tokens(y)); // (231,window)
    Tensor body = ops::gather_rows(out, body_rows());
    return ops::concat_rows(body, h_std);
}

Tensor ManifoldModel::kl(const ManifoldLatent& lat) const {
    Tensor t = ops::add(ops::add(ops::mul(lat.mu, lat.mu), ops::exp(lat.logvar)),
                        ops::mul_scalar(lat.logvar, -1.f));
    Tensor s = ops::add_scalar(ops::sum(t), -float(lat.mu.size()));
    s = ops::mul_scalar(s, 0.5f);
    if (frame_level) s = ops::mul_scalar(s, 1.f / float(tokens()));
    return s;
}

void ManifoldModel::collect(nn::NamedParams& out) const {
    e1.collect("manifold.e1", out);
    e2.collect("manifold.e2", out);
    e3.collect("manifold.e3", out);
    out.emplace_back("manifold.pool_q", pool_q);
    mu_head.collect("manifold.mu", out);
    lv_head.collect("manifold.lv", out);
    z_in.collect("manifold.z_in", out);
    out.emplace_back("manifold.dec_pos", dec_pos);
    h_embed.collect("manifold.h_embed", out);
    for (size_t i = 0; i < blocks.size(); ++i)
        blocks[i].collect("manifold.block" + std::to_string(i), out);
    out_head.collect("manifold.out", out);
}

void ManifoldModel::save(const std::string& path) const {
    if (norm.mean.empty()) throw Error("manifold save: normalizer not fit");
    nn::NamedParams rec;
    rec.emplace_back("meta.frame_level", scalar_record(frame_level ? 1.f : 0.f));
    rec.emplace_back("meta.window", scalar_record(float(window)));
    rec.emplace_back("meta.beta", scalar_record(beta));
    rec.emplace_back("norm.mean", Tensor({feat::kDim}, norm.mean));
    rec.emplace_back("norm.std", Tensor({feat::kDim}, norm.stdev));
    collect(rec);
    save_checkpoint(path, CkptKind::manifold, rec);
}

ManifoldModel ManifoldModel::load(const std::string& path) {
    nn::NamedParams rec = load_checkpoint(path, CkptKind::manifold);
    if (rec.size() < 5 || rec[0].first != "meta.frame_level")
        throw Error("manifold load: unexpected layout in " + path);
    const bool frame_level = rec[0].second.at(0) != 0.f;
    Rng rng(0);
    ManifoldModel m = init(rng, frame_level);
    if (int(rec[1].second.at(0)) != m.window)
        throw Error("manifold load: window mismatch in " + path);
    m.beta = rec[2].second.at(0);
    m.norm.mean = rec[3].second.vec();
    m.norm.stdev = rec[4].second.vec();
    nn::NamedParams model_params;
    m.collect(model_params);
    assign_params(nn::NamedParams(rec.begin() + 5, rec.end()), model_params);
    return m;
}

ManifoldTrainResult train_manifold(const Corpus& corpus, const ManifoldTrainConfig& cfg) {
    if (corpus.train.empty()) throw Error("manifold training needs a train split");
    if (corpus.norm.mean.empty()) throw Error("manifold training needs a fit normalizer");
    Rng rng(cfg.seed);
    ManifoldTrainResult res;
    res.model = ManifoldModel::init(rng, cfg.frame_level);
    res.model.beta = cfg.beta;
    res.model.norm = corpus.norm;

    nn::NamedParams params;
    res.model.collect(params);
    nn::Adam opt(cfg.lr);
    opt.add(params);

    std::vector<Tensor> xs, hs;
    xs.reserve(corpus.train.size());
    for (const Window& w : corpus.train) {
        xs.push_back(corpus.norm.apply(w.raw));
        hs.push_back(hip_rows(xs.back()));
    }

    std::vector<size_t> order(xs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const Shape mu_shape = cfg.frame_level
                               ? Shape{res.model.tokens(), res.model.latent_dim}
                               : Shape{res.model.latent_dim};
    const int mu_n = shape_size(mu_shape);

    int step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        double ep_loss = 0.0, ep_rec = 0.0, ep_kl = 0.0;
        int ep_n = 0;
        for (size_t at = 0; at < order.size();) {
            const size_t bn = std::min(size_t(cfg.batch), order.size() - at);
            opt.zero_grad();
            double batch_loss = 0.0;
            for (size_t b = 0; b < bn; ++b, ++at) {
                const size_t idx = order[at];
                Tensor eps(mu_shape);
                for (int i = 0; i < mu_n; ++i) eps.set(i, rng.normalf());
                Tape tape;
                ManifoldLatent lat = res.model.encode(xs[idx], &eps);
                Tensor y = res.model.decode(lat.z, hs[idx]);
                Tensor rec = ops::mean_abs(y, xs[idx]);
                Tensor klv = res.model.kl(lat);
                Tensor loss = ops::add(rec, ops::mul_scalar(klv, cfg.beta));
                tape.backward(ops::mul_scalar(loss, 1.f / float(bn)));
                batch_loss += loss.item();
                ep_rec += rec.item();
                ep_kl += klv.item();
            }
            batch_loss /= double(bn);
            if (!std::isfinite(batch_loss)) throw Error("manifold training diverged (loss)");
            if (!opt.step()) throw Error("manifold training diverged (gradients)");
            ep_loss += batch_loss;
            ++ep_n;
            ++step;
        }
        res.final_loss = float(ep_loss / std::max(ep_n, 1));
        res.final_recon = float(ep_rec / double(order.size()));
        res.final_kl = float(ep_kl / double(order.size()));
        res.curve.points.emplace_back(step, res.final_loss);
    }
    return res;
}

Tensor manifold_project_features(const ManifoldModel& m, const Tensor& raw) {
    if (raw.ndim() != 2 || raw.dim(0) != feat::kDim)
        throw ShapeError("manifold project: expected (231,T)");
    return stitch_windows(raw.dim(1), m.window, 16, [&](int start) {
        Tensor x = m.norm.apply(ops::slice_cols(raw, start, m.window));
        ManifoldLatent lat = m.encode(x);
        Tensor y = m.decode(lat.z, hip_rows(x));
        return m.norm.invert(y);
    });
}

MotionClip manifold_project(const ManifoldModel& m, const MotionClip& clip) {
    Tensor raw = featurize(clip);
    Tensor proj = manifold_project_features(m, raw);
    PoseSeq seq = unpack_features(proj);
    return reconstruct(ReconMode::velocity, clip.skeleton, seq, clip.fps);
}

} // namespace mstx
