#include "mstx/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace mstx {

namespace {

float yaw_at(const MotionClip& clip, int t) {
    return yaw_of(clip.rot[size_t(t)][0]);
}

void put3(Tensor& f, int row, int t, const Vec3& v) {
    f.set(row, t, v.x);
    f.set(row + 1, t, v.y);
    f.set(row + 2, t, v.z);
}

Vec3 get3(const Tensor& f, int row, int t) {
    return {f.at(row, t), f.at(row + 1, t), f.at(row + 2, t)};
}

} // namespace

Tensor featurize(const MotionClip& clip) {
    clip.validate();
    const int T = clip.frames();
    const int J = clip.joints();
    if (J != feat::kJoints)
        throw Error("featurize expects a " + std::to_string(feat::kJoints) +
                    "-joint rig, got " + std::to_string(J));
    Tensor f({feat::kDim, T});
    const auto pos = fk(clip);

    for (int t = 0; t < T; ++t) {
        const float psi = yaw_at(clip, t);
        const float psi_prev = t > 0 ? yaw_at(clip, t - 1) : psi;
        const Quat to_local = yaw_quat(-psi);

        for (int j = 0; j < J; ++j) {
            Quat q = clip.rot[size_t(t)][size_t(j)];
            if (j == 0) q = (yaw_quat(-psi_prev) * q).normalized();
            float r6[6];
            rot6d_from_quat(q, r6);
            for (int k = 0; k < 6; ++k) f.set(feat::rot_row(j) + k, t, r6[k]);
        }

        const Vec3 hip = clip.root_pos[size_t(t)];
        const Vec3 ground{hip.x, 0.f, hip.z};
        for (int j = 0; j < J; ++j)
            put3(f, feat::pos_row(j), t, to_local.rotate(pos[size_t(t)][size_t(j)] - ground));

        if (t > 0)
            for (int j = 0; j < J; ++j)
                put3(f, feat::vel_row(j), t,
                     to_local.rotate(pos[size_t(t)][size_t(j)] - pos[size_t(t) - 1][size_t(j)]));
    }
    for (int j = 0; j < J; ++j)
        put3(f, feat::vel_row(j), 0, get3(f, feat::vel_row(j), 1));
    for (int t = 0; t < T; ++t)
        put3(f, feat::kHipBase, t, get3(f, feat::vel_row(0), t));
    return f;
}

PoseSeq unpack_features(const Tensor& f) {
    if (f.shape().size() != 2 || f.shape()[0] != feat::kDim)
        throw ShapeError("unpack_features wants (" + std::to_string(feat::kDim) +
                         ", T), got rows " +
                         (f.shape().empty() ? std::string("?") : std::to_string(f.shape()[0])));
    const int T = f.shape()[1];
    PoseSeq s;
    s.rot.assign(size_t(T), std::vector<Quat>(feat::kJoints));
    s.pos.assign(size_t(T), std::vector<Vec3>(feat::kJoints));
    s.vel.assign(size_t(T), std::vector<Vec3>(feat::kJoints));
    s.hip_vel.vel.resize(size_t(T));
    for (int t = 0; t < T; ++t) {
        for (int j = 0; j < feat::kJoints; ++j) {
            float r6[6];
            for (int k = 0; k < 6; ++k) r6[k] = f.at(feat::rot_row(j) + k, t);
            s.rot[size_t(t)][size_t(j)] = quat_from_rot6d(r6);
            s.pos[size_t(t)][size_t(j)] = get3(f, feat::pos_row(j), t);
            s.vel[size_t(t)][size_t(j)] = get3(f, feat::vel_row(j), t);
        }
        s.hip_vel.vel[size_t(t)] = get3(f, feat::kHipBase, t);
    }
    return s;
}

Tensor hip_rows(const Tensor& f) {
    if (f.shape().size() != 2 || f.shape()[0] != feat::kDim)
        throw ShapeError("hip_rows wants the full feature matrix");
    return ops::gather_rows(f, {feat::kHipBase, feat::kHipBase + 1, feat::kHipBase + 2});
}

void Normalizer::fit(const std::vector<Tensor>& raws) {
    if (raws.empty()) throw Error("normalizer fit on empty set");
    std::vector<double> sum(feat::kDim, 0.0), sq(feat::kDim, 0.0);
    int64_t n = 0;
    for (const Tensor& f : raws) {
        if (f.shape().size() != 2 || f.shape()[0] != feat::kDim)
            throw ShapeError("normalizer fit wants (231, T) tensors");
        const int T = f.shape()[1];
        for (int r = 0; r < feat::kDim; ++r)
            for (int t = 0; t < T; ++t) {
                const double v = f.at(r, t);
                sum[size_t(r)] += v;
                sq[size_t(r)] += v * v;
            }
        n += T;
    }
    mean.resize(feat::kDim);
    stdev.resize(feat::kDim);
    for (int r = 0; r < feat::kDim; ++r) {
        const double m = sum[size_t(r)] / double(n);
        const double var = std::max(sq[size_t(r)] / double(n) - m * m, 0.0);
        mean[size_t(r)] = float(m);
        stdev[size_t(r)] = std::max(float(std::sqrt(var)), 1e-6f);
    }
}

Tensor Normalizer::apply(const Tensor& raw) const {
    if (raw.shape().size() != 2 || raw.shape()[0] != int(mean.size()))
        throw ShapeError("normalizer/apply shape mismatch");
    const int R = raw.shape()[0], T = raw.shape()[1];
    Tensor out({R, T});
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t)
            out.set(r, t, (raw.at(r, t) - mean[size_t(r)]) / stdev[size_t(r)]);
    return out;
}

Tensor Normalizer::invert(const Tensor& standardized) const {
    if (standardized.shape().size() != 2 || standardized.shape()[0] != int(mean.size()))
        throw ShapeError("normalizer/invert shape mismatch");
    const int R = standardized.shape()[0], T = standardized.shape()[1];
    Tensor out({R, T});
    for (int r = 0; r < R; ++r)
        for (int t = 0; t < T; ++t)
            out.set(r, t, standardized.at(r, t) * stdev[size_t(r)] + mean[size_t(r)]);
    return out;
}

Tensor Normalizer::mean_tensor(int row0, int rows) const {
    Tensor v({rows});
    for (int r = 0; r < rows; ++r) v.set(r, mean[size_t(row0 + r)]);
    return v;
}

Tensor Normalizer::stdev_tensor(int row0, int rows) const {
    Tensor v({rows});
    for (int r = 0; r < rows; ++r) v.set(r, stdev[size_t(row0 + r)]);
    return v;
}

Corpus build_corpus(const CorpusConfig& cfg) {
    const auto& presets = style_presets();
    if (cfg.clips_per_style < 1) throw Error("clips_per_style must be >= 1");
    if (cfg.window < 2 || cfg.stride < 1) throw Error("bad window/stride");
    if (cfg.frames < cfg.window) throw Error("clips shorter than the window");

    Corpus c;
    c.cfg = cfg;
    Rng rng(cfg.seed);
    for (size_t s = 0; s < presets.size(); ++s) {
        for (int i = 0; i < cfg.clips_per_style; ++i) {
            ClipMeta m;
            m.style = int(s);
            m.seed = rng.next_u64();
            m.path.heading0 = float(rng.uniform(-kPi, kPi));
            m.path.turn_rate = rng.uniform() < 0.4 ? 0.f : float(rng.uniform(-0.012, 0.012));
            GaitSample g = synth_gait(presets[s], cfg.frames, m.seed, m.path);
            c.clips.push_back(std::move(g.clip));
            c.gen_contacts.push_back(std::move(g.contacts));
            c.meta.push_back(m);
        }
    }

    const int total = int(c.clips.size());
    const int n_val = int(std::lround(double(cfg.val_fraction) * total));
    if (n_val < 1 || n_val >= total)
        throw Error("split needs more clips: " + std::to_string(total) + " total, " +
                    std::to_string(n_val) + " for validation");
    std::vector<int> order;
    order.resize(size_t(total));
    for (int i = 0; i < total; ++i) order[size_t(i)] = i;
    for (int i = total - 1; i > 0; --i)
        std::swap(order[size_t(i)], order[rng.uniform_index(size_t(i) + 1)]);
    for (int i = 0; i < n_val; ++i) c.meta[size_t(order[size_t(i)])].val = true;

    for (int ci = 0; ci < total; ++ci) {
        const MotionClip& clip = c.clips[size_t(ci)];
        const ContactSeq lab = label_contacts(clip);
        for (int start = 0; start + cfg.window <= cfg.frames; start += cfg.stride) {
            Window w;
            w.clip = ci;
            w.start = start;
            w.label = clip.style_label;
            w.raw = featurize(clip.window(start, cfg.window));
            w.contacts.c.assign(lab.c.begin() + start, lab.c.begin() + start + cfg.window);
            (c.meta[size_t(ci)].val ? c.val : c.train).push_back(std::move(w));
        }
    }
    if (c.train.empty() || c.val.empty()) throw Error("split produced an empty side");

    std::vector<Tensor> raws;
    raws.reserve(c.train.size());
    for (const Window& w : c.train) raws.push_back(w.raw);
    c.norm.fit(raws);
    return c;
}

void write_manifest(const std::string& path, const Corpus& corpus) {
    std::ofstream os(path);
    if (!os) throw Error("cannot write manifest: " + path);
    os << "# file\tstyle\tlabel\tseed\theading\tturn\tframes\tsplit\n";
    const auto& presets = style_presets();
    char buf[64];
    for (size_t i = 0; i < corpus.meta.size(); ++i) {
        const ClipMeta& m = corpus.meta[i];
        os << (m.file.empty() ? "-" : m.file) << '\t' << presets[size_t(m.style)].name << '\t'
           << m.style << '\t' << m.seed << '\t';
        std::snprintf(buf, sizeof buf, "%.9g\t%.9g", double(m.path.heading0),
                      double(m.path.turn_rate));
        os << buf << '\t' << corpus.clips[i].frames() << '\t' << (m.val ? "val" : "train")
           << '\n';
    }
    if (!os) throw Error("manifest write failed: " + path);
}

std::vector<ClipMeta> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw Error("cannot read manifest: " + path);
    std::vector<ClipMeta> out;
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        ClipMeta m;
        std::string style_name, split;
        uint64_t seed = 0;
        int frames = 0;
        if (!(ls >> m.file >> style_name >> m.style >> seed >> m.path.heading0 >>
              m.path.turn_rate >> frames >> split))
            throw ParseError("manifest line " + std::to_string(lineno) + ": expected 8 fields");
        m.seed = seed;
        if (split != "train" && split != "val")
            throw ParseError("manifest line " + std::to_string(lineno) + ": bad split '" +
                             split + "'");
        m.val = split == "val";
        if (m.file == "-") m.file.clear();
        out.push_back(std::move(m));
    }
    return out;
}

Tensor stitch_windows(int frames, int window, int fade,
                      const std::function<Tensor(int)>& window_fn) {
    if (frames < window) throw Error("stitch_windows: clip shorter than the window");
    if (fade < 0 || fade >= window) throw Error("stitch_windows: bad fade length");
    if (frames == window) return window_fn(0);

    const int stride = window - fade;
    Tensor out;
    int covered = 0;
    for (int start = 0;; start += stride) {
        bool last = false;
        if (start + window >= frames) {
            start = frames - window;
            last = true;
        }
        Tensor y = window_fn(start);
        if (y.ndim() != 2 || y.dim(1) != window)
            throw ShapeError("stitch_windows: window_fn returned " + shape_str(y.shape()));
        if (!out.defined()) out = Tensor({y.dim(0), frames});
        const int rows = out.dim(0);
        const int overlap = std::max(covered - start, 0);
        const int blend = std::min(overlap, fade);
        for (int t = 0; t < window; ++t) {
            const int col = start + t;
            float wnew = 1.f;
            if (t < overlap) {
                if (overlap - t > blend) continue; // older window wins outright
                wnew = float(t - (overlap - blend) + 1) / float(blend + 1);
            }
            for (int r = 0; r < rows; ++r)
                out.set(r, col, wnew * y.at(r, t) + (1.f - wnew) * out.at(r, col));
        }
        covered = start + window;
        if (last) break;
    }
    return out;
}

} // namespace mstx
