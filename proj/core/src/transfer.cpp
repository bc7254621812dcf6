#include "mstx/transfer.hpp"

#include "mstx/checkpoint.hpp"
#include "mstx/gait.hpp"
#include "mstx/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace mstx {

namespace {

Tensor scalar_record(float v) { return Tensor({1}, {v}); }

Tensor vec_slice(const Tensor& v, int start, int len) {
    Tensor m = ops::reshape(v, {v.dim(0), 1});
    std::vector<int> rows(static_cast<size_t>(len));
    for (int i = 0; i < len; ++i) rows[size_t(i)] = start + i;
    return ops::reshape(ops::gather_rows(m, std::move(rows)), {len});
}

// per-channel (mean, std) of a (C,T') map, concatenated into a (2C) vector
Tensor map_stats(const Tensor& f) {
    Tensor mu = ops::mean_rows(f);
    Tensor d = ops::row_add(f, ops::mul_scalar(mu, -1.f));
    Tensor sd = ops::sqrt(ops::add_scalar(ops::mean_rows(ops::mul(d, d)), 1e-5f));
    Tensor a = ops::reshape(mu, {mu.dim(0), 1});
    Tensor b = ops::reshape(sd, {sd.dim(0), 1});
    return ops::reshape(ops::concat_rows(a, b), {2 * mu.dim(0)});
}

Tensor adain_from_style(const Tensor& x, const Tensor& z_s, const nn::Dense& head) {
    Tensor site = head.vec(map_stats(z_s));
    const int c = x.dim(0);
    return ops::adain(x, vec_slice(site, 0, c), vec_slice(site, c, c));
}

void check_finite(const Tensor& t, const char* name) {
    if (!std::isfinite(t.item()))
        throw Error(std::string("transfer loss diverged (L_") + name + ")");
}

} // namespace

TransferModel TransferModel::init(Rng& rng, bool frame_level) {
    TransferModel m;
    m.frame_level = frame_level;
    m.s1 = nn::Conv1d(rng, feat::kDim, 128, 5, 2);
    m.s2 = nn::Conv1d(rng, 128, 128, 5, 2);
    m.s3 = nn::Conv1d(rng, 128, 128, 3, 1);
    const int crows = int(contact_rows().size());
    m.c1 = nn::Conv1d(rng, crows, 64, 5, 2);
    m.c2 = nn::Conv1d(rng, 64, 64, 5, 2);
    m.c3 = nn::Conv1d(rng, 64, 64, 3, 1);
    m.t1 = nn::Conv1d(rng, 3, 64, 5, 2);
    m.t2 = nn::Conv1d(rng, 64, 64, 5, 2);
    m.t3 = nn::Conv1d(rng, 64, 64, 3, 1);
    m.fuse1 = nn::Conv1d(rng, 128, 128, 1);
    m.fuse2 = nn::Conv1d(rng, 128, 128, 3);
    m.ada1 = nn::Dense(rng, 256, 256);
    m.ada2 = nn::Dense(rng, 256, 256);
    m.head_pos = nn::xavier_param(rng, {m.tokens(), 128}, 128, 128);
    for (int i = 0; i < 3; ++i) m.head.emplace_back(rng, 128, 4, 256);
    m.hip_head = nn::Dense(rng, 128, 12);
    m.z_head = nn::Dense(rng, 128, 64);
    return m;
}

const std::vector<int>& TransferModel::contact_rows() {
    static const std::vector<int> rows = [] {
        std::vector<int> r;
        for (int j = 11; j < feat::kJoints; ++j) // both leg chains
            for (int k = 0; k < 3; ++k) r.push_back(feat::pos_row(j) + k);
        for (int j = 11; j < feat::kJoints; ++j)
            for (int k = 0; k < 3; ++k) r.push_back(feat::vel_row(j) + k);
        for (int k = 0; k < 3; ++k) r.push_back(feat::kHipBase + k);
        return r;
    }();
    return rows;
}

Tensor TransferModel::encode_style(const Tensor& x_std) const {
    Tensor a = ops::leaky_relu(s1(x_std));
    a = ops::leaky_relu(s2(a));
    return ops::leaky_relu(s3(a));
}

Tensor TransferModel::encode_contact(const Tensor& x_std) const {
    Tensor a = ops::gather_rows(x_std, contact_rows());
    a = ops::leaky_relu(c1(a));
    a = ops::leaky_relu(c2(a));
    return ops::leaky_relu(c3(a));
}

Tensor TransferModel::encode_trajectory(const Tensor& h_std) const {
    if (h_std.ndim() != 2 || h_std.dim(0) != 3)
        throw ShapeError("encode_trajectory: expected hip rows (3,T)");
    Tensor a = ops::leaky_relu(t1(h_std));
    a = ops::leaky_relu(t2(a));
    return ops::leaky_relu(t3(a));
}

TransferCodes TransferModel::codes(const Tensor& x_style, const Tensor& x_contact,
                                   const Tensor& x_traj) const {
    TransferCodes c;
    c.z_s = encode_style(x_style);
    c.z_ct = encode_contact(x_contact);
    c.z_tj = encode_trajectory(hip_rows(x_traj));
    return c;
}

TransferOutput TransferModel::generate_codes(const ManifoldModel& man,
                                             const TransferCodes& c) const {
    if (man.frame_level != frame_level)
        throw Error("transfer/manifold latent modes differ");
    if (man.window != window) throw Error("transfer/manifold window sizes differ");

    Tensor y = fuse1(ops::concat_rows(c.z_ct, c.z_tj));
    y = ops::leaky_relu(adain_from_style(y, c.z_s, ada1));
    y = fuse2(y);
    y = ops::leaky_relu(adain_from_style(y, c.z_s, ada2));

    Tensor toks = ops::add(ops::transpose(y), head_pos);
    for (const auto& b : head) toks = b.self_attend(toks);

    TransferOutput out;
    out.codes = c;
    // 12 channels per token = 4 consecutive frames x (x,y,z)
    out.h_std = ops::interleave_time(ops::transpose(hip_head.tokens(toks)), 4);
    if (frame_level) {
        out.z = z_head.tokens(toks);
    } else {
        Tensor pooled = ops::mean_rows(ops::transpose(toks));
        out.z = z_head.vec(pooled);
    }
    out.feats = man.decode(out.z, out.h_std);
    return out;
}

TransferOutput TransferModel::generate(const ManifoldModel& man, const Tensor& x_style,
                                       const Tensor& x_contact, const Tensor& x_traj) const {
    return generate_codes(man, codes(x_style, x_contact, x_traj));
}

void TransferModel::collect(nn::NamedParams& out) const {
    s1.collect("transfer.s1", out);
    s2.collect("transfer.s2", out);
    s3.collect("transfer.s3", out);
    c1.collect("transfer.c1", out);
    c2.collect("transfer.c2", out);
    c3.collect("transfer.c3", out);
    t1.collect("transfer.t1", out);
    t2.collect("transfer.t2", out);
    t3.collect("transfer.t3", out);
    fuse1.collect("transfer.fuse1", out);
    fuse2.collect("transfer.fuse2", out);
    ada1.collect("transfer.ada1", out);
    ada2.collect("transfer.ada2", out);
    out.emplace_back("transfer.head_pos", head_pos);
    for (size_t i = 0; i < head.size(); ++i)
        head[i].collect("transfer.head" + std::to_string(i), out);
    hip_head.collect("transfer.hip_head", out);
    z_head.collect("transfer.z_head", out);
}

void TransferModel::save(const std::string& path) const {
    nn::NamedParams rec;
    rec.emplace_back("meta.frame_level", scalar_record(frame_level ? 1.f : 0.f));
    rec.emplace_back("meta.window", scalar_record(float(window)));
    collect(rec);
    save_checkpoint(path, CkptKind::transfer, rec);
}

TransferModel TransferModel::load(const std::string& path) {
    nn::NamedParams rec = load_checkpoint(path, CkptKind::transfer);
    if (rec.size() < 2 || rec[0].first != "meta.frame_level")
        throw Error("transfer load: unexpected layout in " + path);
    Rng rng(0);
    TransferModel m = init(rng, rec[0].second.at(0) != 0.f);
    if (int(rec[1].second.at(0)) != m.window)
        throw Error("transfer load: window mismatch in " + path);
    nn::NamedParams model_params;
    m.collect(model_params);
    assign_params(nn::NamedParams(rec.begin() + 2, rec.end()), model_params);
    return m;
}

Tensor gram_matrix(const Tensor& f) {
    return ops::mul_scalar(ops::matmul(f, f, false, true),
                           1.f / float(f.dim(0) * f.dim(1)));
}

Tensor transfer_loss(const TransferModel& model, const ManifoldModel& man,
                     const FDeltaModel& fdelta, const Tensor& x_s, const Tensor& x_c,
                     bool ct_from_style, TransferLossParts* parts,
                     const TransferLossWeights& w) {
    // encoder outputs shared across the generator applications
    Tensor zs_s = model.encode_style(x_s), zs_c = model.encode_style(x_c);
    Tensor zct_s = model.encode_contact(x_s), zct_c = model.encode_contact(x_c);
    Tensor ztj_s = model.encode_trajectory(hip_rows(x_s));
    Tensor ztj_c = model.encode_trajectory(hip_rows(x_c));

    auto gen = [&](const Tensor& zs, const Tensor& zct, const Tensor& ztj) {
        return model.generate_codes(man, {zs, zct, ztj});
    };
    TransferOutput g_ccc = gen(zs_c, zct_c, ztj_c);
    TransferOutput g_sss = gen(zs_s, zct_s, ztj_s);
    TransferOutput g_scc = gen(zs_s, zct_c, ztj_c);
    TransferOutput g_ssc = gen(zs_s, zct_s, ztj_c);

    Tensor l_rec = ops::add(ops::mean_abs(g_ccc.feats, x_c), ops::mean_abs(g_sss.feats, x_s));
    check_finite(l_rec, "rec");

    const TransferOutput& mid = ct_from_style ? g_ssc : g_scc;
    TransferOutput cyc_a = model.generate(man, x_c, mid.feats, mid.feats);
    TransferOutput cyc_b = model.generate(man, mid.feats, x_s, x_s);
    Tensor l_cyc = ops::add(ops::mean_abs(cyc_a.feats, x_c), ops::mean_abs(cyc_b.feats, x_s));
    check_finite(l_cyc, "cyc");

    Tensor l_style = ops::mean_sq(gram_matrix(man.encode_map(mid.feats)),
                                  gram_matrix(man.encode_map(x_s)));
    check_finite(l_style, "style");

    Tensor mean_h = man.norm.mean_tensor(feat::kHipBase, 3);
    Tensor std_h = man.norm.stdev_tensor(feat::kHipBase, 3);
    auto destd = [&](const Tensor& hs) { return ops::row_add(ops::row_mul(hs, std_h), mean_h); };
    Tensor h_c = destd(hip_rows(x_c)), h_s = destd(hip_rows(x_s));
    Tensor h_scc = destd(g_scc.h_std), h_ssc = destd(g_ssc.h_std);

    Tensor proj_ssc = ops::integrate_xz(h_ssc, 0.f, 0.f, 0.f, kHeadingGain, kHeadingSpeedGate);
    Tensor proj_c = ops::integrate_xz(h_c, 0.f, 0.f, 0.f, kHeadingGain, kHeadingSpeedGate);
    Tensor l_tj = ops::add(ops::mean_sq(h_scc, h_c),
                           ops::mul_scalar(ops::mean_sq(proj_ssc, proj_c), w.alpha_tj));
    check_finite(l_tj, "tj");

    Tensor fd_c = fdelta.forward(h_c).detached();
    Tensor fd_s = fdelta.forward(h_s).detached();
    Tensor l_ctt = ops::add(ops::mean_sq(fdelta.forward(h_scc), fd_c),
                            ops::mean_sq(fdelta.forward(h_ssc), fd_s));
    check_finite(l_ctt, "ctt");

    Tensor rest = ops::add(ops::add(l_cyc, l_style), ops::add(l_tj, l_ctt));
    Tensor total = ops::add(l_rec, ops::mul_scalar(rest, w.alpha));
    if (parts) {
        parts->rec = l_rec.item();
        parts->cyc = l_cyc.item();
        parts->style = l_style.item();
        parts->tj = l_tj.item();
        parts->ctt = l_ctt.item();
        parts->total = total.item();
    }
    return total;
}

TransferTrainResult train_transfer(const Corpus& corpus, const ManifoldModel& man,
                                   const FDeltaModel& fdelta,
                                   const TransferTrainConfig& cfg) {
    if (corpus.train.empty()) throw Error("transfer training needs a train split");
    if (man.norm.mean.empty()) throw Error("transfer training needs a fit manifold normalizer");

    nn::NamedParams man_params, fd_params;
    man.collect(man_params);
    fdelta.collect(fd_params);
    const uint64_t man_sum = params_checksum(man_params);
    const uint64_t fd_sum = params_checksum(fd_params);

    Rng rng(cfg.seed);
    TransferTrainResult res;
    res.model = TransferModel::init(rng, man.frame_level);

    nn::NamedParams params;
    res.model.collect(params);
    nn::Adam opt(cfg.lr);
    opt.add(params);

    std::vector<Tensor> xs;
    std::vector<int> labels;
    xs.reserve(corpus.train.size());
    int max_label = 0;
    for (const Window& w : corpus.train) {
        xs.push_back(corpus.norm.apply(w.raw));
        labels.push_back(w.label);
        max_label = std::max(max_label, w.label);
    }
    std::vector<std::vector<size_t>> by_label(size_t(max_label) + 1);
    for (size_t i = 0; i < labels.size(); ++i) by_label[size_t(labels[i])].push_back(i);
    int label_count = 0;
    for (const auto& g : by_label) label_count += g.empty() ? 0 : 1;

    TransferLossParts acc{};
    int acc_n = 0;
    auto flush = [&](int step) {
        if (!acc_n) return;
        TransferLossParts mean = acc;
        mean.rec /= float(acc_n);
        mean.cyc /= float(acc_n);
        mean.style /= float(acc_n);
        mean.tj /= float(acc_n);
        mean.ctt /= float(acc_n);
        mean.total /= float(acc_n);
        res.curve.push_back({step, mean});
        res.final_parts = mean;
        acc = {};
        acc_n = 0;
    };

    for (int step = 0; step < cfg.steps; ++step) {
        const bool ct_from_style = (step % 2) == 1;
        opt.zero_grad();
        for (int b = 0; b < cfg.batch; ++b) {
            const size_t si = size_t(rng.uniform_index(xs.size()));
            const bool cross = label_count > 1 && rng.uniform() < cfg.cross_style_prob;
            size_t ci = si;
            if (cross) {
                do
                    ci = size_t(rng.uniform_index(xs.size()));
                while (labels[ci] == labels[si]);
            } else {
                const auto& g = by_label[size_t(labels[si])];
                ci = g[size_t(rng.uniform_index(g.size()))];
            }
            Tape tape;
            TransferLossParts p;
            Tensor loss = transfer_loss(res.model, man, fdelta, xs[si], xs[ci],
                                        ct_from_style, &p, cfg.weights);
            tape.backward(ops::mul_scalar(loss, 1.f / float(cfg.batch)));
            acc.rec += p.rec;
            acc.cyc += p.cyc;
            acc.style += p.style;
            acc.tj += p.tj;
            acc.ctt += p.ctt;
            acc.total += p.total;
            ++acc_n;
        }
        if (!opt.step()) throw Error("transfer training diverged (gradients)");
        if ((step + 1) % cfg.log_every == 0 || step + 1 == cfg.steps) flush(step + 1);
    }

    nn::NamedParams man_after, fd_after;
    man.collect(man_after);
    fdelta.collect(fd_after);
    if (params_checksum(man_after) != man_sum || params_checksum(fd_after) != fd_sum)
        throw Error("frozen model drifted during transfer training");
    return res;
}

MotionClip features_to_clip(const ManifoldModel& man, const Tensor& feats_std) {
    PoseSeq seq = unpack_features(man.norm.invert(feats_std));
    return reconstruct(ReconMode::velocity, shared_humanoid19(), seq);
}

Tensor transfer_features(const TransferModel& model, const ManifoldModel& man,
                         const Tensor& style_raw, const Tensor& content_raw) {
    if (style_raw.ndim() != 2 || style_raw.dim(0) != feat::kDim ||
        style_raw.dim(1) < model.window)
        throw ShapeError("transfer: style features must be (231, >=window)");
    if (content_raw.ndim() != 2 || content_raw.dim(0) != feat::kDim)
        throw ShapeError("transfer: content features must be (231,T)");
    Tensor x_s = man.norm.apply(ops::slice_cols(style_raw, 0, model.window));
    return stitch_windows(content_raw.dim(1), model.window, 16, [&](int start) {
        Tensor x_c = man.norm.apply(ops::slice_cols(content_raw, start, model.window));
        TransferOutput out = model.generate(man, x_s, x_c, x_c);
        return man.norm.invert(out.feats);
    });
}

MotionClip transfer_clip(const TransferModel& model, const ManifoldModel& man,
                         const MotionClip& style, const MotionClip& content) {
    Tensor out = transfer_features(model, man, featurize(style), featurize(content));
    PoseSeq seq = unpack_features(out);
    MotionClip clip = reconstruct(ReconMode::velocity, content.skeleton, seq, content.fps);
    clip.style_label = style.style_label;
    return clip;
}

} // namespace mstx
