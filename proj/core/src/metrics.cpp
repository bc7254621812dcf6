#include "mstx/metrics.hpp"

#include "mstx/checkpoint.hpp"
#include "mstx/geom.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

namespace mstx {

// ---------------------------------------------------------------------------
// contact precision / recall

namespace {

// event frames of one (foot, touch) bucket, in time order
std::vector<int> event_frames(const ContactSeq& s, int foot, bool touch) {
    std::vector<int> out;
    for (const ContactEvent& e : s.change_events())
        if (e.foot == foot && e.touch == touch) out.push_back(e.frame);
    return out;
}

} // namespace

int greedy_event_matches(const std::vector<int>& predicted,
                         const std::vector<int>& reference, int tol) {
    size_t i = 0, j = 0;
    int matched = 0;
    while (i < predicted.size() && j < reference.size()) {
        const int d = predicted[i] - reference[j];
        if (std::abs(d) <= tol) {
            ++matched;
            ++i;
            ++j;
        } else if (d < 0) {
            ++i;
        } else {
            ++j;
        }
    }
    return matched;
}

ContactPR contact_pr(const ContactSeq& predicted, const ContactSeq& reference, int tol) {
    if (predicted.frames() != reference.frames())
        throw ShapeError("contact_pr: sequence length mismatch");
    ContactPR r;
    for (int foot = 0; foot < 2; ++foot)
        for (int touch = 0; touch < 2; ++touch) {
            const std::vector<int> p = event_frames(predicted, foot, touch != 0);
            const std::vector<int> g = event_frames(reference, foot, touch != 0);
            r.predicted += int(p.size());
            r.reference += int(g.size());
            r.matched += greedy_event_matches(p, g, tol);
        }
    r.precision = r.predicted ? float(r.matched) / float(r.predicted) : 1.f;
    r.recall = r.reference ? float(r.matched) / float(r.reference) : 1.f;
    return r;
}

ContactPR contact_pr_star(const ContactSeq& predicted, const FDeltaModel& fdelta,
                          const HipVelocitySeq& h, int tol) {
    ContactPR r = contact_pr(predicted, fdelta.predict(h), tol);
    r.starred = true;
    return r;
}

// ---------------------------------------------------------------------------
// foot skating

float skate_weight(float height_cm, float H) {
    return std::clamp(2.f - std::exp2(height_cm / H), 0.f, 1.f);
}

float foot_skate(const MotionClip& clip, float H) {
    if (!clip.skeleton) throw Error("foot_skate: clip has no skeleton");
    const Skeleton& sk = *clip.skeleton;
    std::vector<int> joints;
    for (const char* name : {"LeftFoot", "LeftToe", "RightFoot", "RightToe"}) {
        const int j = sk.find(name);
        if (j >= 0) joints.push_back(j);
    }
    if (joints.empty()) throw Error("foot_skate: no foot joints in skeleton");

    const std::vector<std::vector<Vec3>> pos = fk(clip);
    double sum = 0.0;
    int n = 0;
    for (size_t t = 1; t < pos.size(); ++t)
        for (int j : joints) {
            const float w = skate_weight(pos[t][size_t(j)].y, H);
            if (w <= 0.f) continue;
            const Vec3 d = pos[t][size_t(j)] - pos[t - 1][size_t(j)];
            sum += double(w) * std::sqrt(double(d.x) * d.x + double(d.z) * d.z);
            ++n;
        }
    return n ? float(sum / n) : 0.f;
}

// ---------------------------------------------------------------------------
// Frechet distance over joint velocities

namespace {

// Cyclic Jacobi eigen-decomposition of a symmetric matrix (row-major). On
// return a's diagonal holds eigenvalues; V columns are the eigenvectors.
void jacobi_eig(std::vector<double>& a, int n, std::vector<double>& V) {
    V.assign(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i) V[size_t(i) * size_t(n) + size_t(i)] = 1.0;
    auto A = [&](int r, int c) -> double& { return a[size_t(r) * size_t(n) + size_t(c)]; };
    auto E = [&](int r, int c) -> double& { return V[size_t(r) * size_t(n) + size_t(c)]; };

    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += A(p, q) * A(p, q);
        if (off < 1e-26) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = A(k, p), akq = A(k, q);
                    A(k, p) = c * akp - s * akq;
                    A(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = A(p, k), aqk = A(q, k);
                    A(p, k) = c * apk - s * aqk;
                    A(q, k) = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    const double vkp = E(k, p), vkq = E(k, q);
                    E(k, p) = c * vkp - s * vkq;
                    E(k, q) = s * vkp + c * vkq;
                }
            }
    }
}

std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                            int n) {
    std::vector<double> out(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double aik = a[size_t(i) * size_t(n) + size_t(k)];
            if (aik == 0.0) continue;
            for (int j = 0; j < n; ++j)
                out[size_t(i) * size_t(n) + size_t(j)] +=
                    aik * b[size_t(k) * size_t(n) + size_t(j)];
        }
    return out;
}

void symmetrize(std::vector<double>& a, int n) {
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            const double m =
                0.5 * (a[size_t(i) * size_t(n) + size_t(j)] + a[size_t(j) * size_t(n) + size_t(i)]);
            a[size_t(i) * size_t(n) + size_t(j)] = m;
            a[size_t(j) * size_t(n) + size_t(i)] = m;
        }
}

// PSD square root via eigen-decomposition, negative eigenvalues clipped
std::vector<double> mat_sqrt(std::vector<double> a, int n) {
    symmetrize(a, n);
    std::vector<double> V;
    jacobi_eig(a, n, V);
    std::vector<double> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        w[size_t(i)] = std::sqrt(std::max(a[size_t(i) * size_t(n) + size_t(i)], 0.0));
    std::vector<double> out(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0.0;
            for (int k = 0; k < n; ++k)
                s += V[size_t(i) * size_t(n) + size_t(k)] * w[size_t(k)] *
                     V[size_t(j) * size_t(n) + size_t(k)];
            out[size_t(i) * size_t(n) + size_t(j)] = s;
        }
    return out;
}

} // namespace

double fmd_gaussian(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                    const std::vector<double>& mu_b, const std::vector<double>& cov_b) {
    const int n = int(mu_a.size());
    if (mu_b.size() != size_t(n) || cov_a.size() != size_t(n) * size_t(n) ||
        cov_b.size() != size_t(n) * size_t(n))
        throw ShapeError("fmd: dimension mismatch");

    double d2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double d = mu_a[size_t(i)] - mu_b[size_t(i)];
        d2 += d * d;
    }
    double tr = 0.0;
    for (int i = 0; i < n; ++i)
        tr += cov_a[size_t(i) * size_t(n) + size_t(i)] +
              cov_b[size_t(i) * size_t(n) + size_t(i)];

    const std::vector<double> ra = mat_sqrt(cov_a, n);
    std::vector<double> m = mat_mul(mat_mul(ra, cov_b, n), ra, n);
    symmetrize(m, n);
    std::vector<double> V;
    jacobi_eig(m, n, V);
    double tr_sqrt = 0.0;
    for (int i = 0; i < n; ++i)
        tr_sqrt += std::sqrt(std::max(m[size_t(i) * size_t(n) + size_t(i)], 0.0));

    return std::max(d2 + tr - 2.0 * tr_sqrt, 0.0);
}

double fmd_samples(const std::vector<std::vector<float>>& a,
                   const std::vector<std::vector<float>>& b) {
    if (a.size() < 2 || b.size() < 2) throw Error("fmd: each set needs >= 2 samples");
    const size_t d = a[0].size();
    for (const auto& s : a)
        if (s.size() != d) throw ShapeError("fmd: feature dimension mismatch");
    for (const auto& s : b)
        if (s.size() != d) throw ShapeError("fmd: feature dimension mismatch");

    auto stats = [d](const std::vector<std::vector<float>>& xs, std::vector<double>& mu,
                     std::vector<double>& cov) {
        const double n = double(xs.size());
        mu.assign(d, 0.0);
        for (const auto& s : xs)
            for (size_t i = 0; i < d; ++i) mu[i] += double(s[i]);
        for (size_t i = 0; i < d; ++i) mu[i] /= n;
        cov.assign(d * d, 0.0);
        for (const auto& s : xs)
            for (size_t i = 0; i < d; ++i) {
                const double di = double(s[i]) - mu[i];
                for (size_t j = i; j < d; ++j)
                    cov[i * d + j] += di * (double(s[j]) - mu[j]);
            }
        for (size_t i = 0; i < d; ++i)
            for (size_t j = i; j < d; ++j) {
                cov[i * d + j] /= (n - 1.0);
                cov[j * d + i] = cov[i * d + j];
            }
    };

    std::vector<double> mu_a, cov_a, mu_b, cov_b;
    stats(a, mu_a, cov_a);
    stats(b, mu_b, cov_b);
    return fmd_gaussian(mu_a, cov_a, mu_b, cov_b);
}

namespace {

void append_velocity_samples(const MotionClip& clip, std::vector<std::vector<float>>& out) {
    const Tensor f = featurize(clip);
    constexpr int dim = feat::kHipBase - feat::kVelBase; // per-frame joint velocities
    for (int t = 0; t < f.dim(1); ++t) {
        std::vector<float> s(static_cast<size_t>(dim));
        for (int i = 0; i < dim; ++i) s[size_t(i)] = f.at(feat::kVelBase + i, t);
        out.push_back(std::move(s));
    }
}

} // namespace

double fmd(const std::vector<MotionClip>& a, const std::vector<MotionClip>& b) {
    if (a.size() < 2 || b.size() < 2) throw Error("fmd: each set needs >= 2 clips");
    std::vector<std::vector<float>> sa, sb;
    for (const MotionClip& c : a) append_velocity_samples(c, sa);
    for (const MotionClip& c : b) append_velocity_samples(c, sb);
    return fmd_samples(sa, sb);
}

// ---------------------------------------------------------------------------
// trajectory error

namespace {

// rigidly move a track so it starts at the origin headed along yaw 0
Trajectory canonical_track(const Trajectory& t, float yaw0) {
    const float c = std::cos(yaw0), s = std::sin(yaw0);
    Trajectory out(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        const float dx = t[i][0] - t[0][0];
        const float dz = t[i][1] - t[0][1];
        out[i] = {c * dx - s * dz, s * dx + c * dz};
    }
    return out;
}

} // namespace

TrajectoryError trajectory_error(const Trajectory& out, float out_yaw0,
                                 const Trajectory& ref, float ref_yaw0, float min_step) {
    if (out.size() != ref.size()) throw ShapeError("trajectory_error: length mismatch");
    if (out.empty()) throw Error("trajectory_error: empty trajectory");
    const Trajectory a = canonical_track(out, out_yaw0);
    const Trajectory b = canonical_track(ref, ref_yaw0);

    TrajectoryError e;
    double xz = 0.0;
    for (size_t t = 0; t < a.size(); ++t)
        xz += std::sqrt(double(a[t][0] - b[t][0]) * (a[t][0] - b[t][0]) +
                        double(a[t][1] - b[t][1]) * (a[t][1] - b[t][1]));
    e.xz_cm = float(xz / double(a.size()));

    double ang = 0.0;
    int n = 0;
    for (size_t t = 1; t < a.size(); ++t) {
        const float dax = a[t][0] - a[t - 1][0], daz = a[t][1] - a[t - 1][1];
        const float dbx = b[t][0] - b[t - 1][0], dbz = b[t][1] - b[t - 1][1];
        if (std::sqrt(dax * dax + daz * daz) < min_step ||
            std::sqrt(dbx * dbx + dbz * dbz) < min_step)
            continue;
        ang += std::abs(wrap_angle(std::atan2(dax, daz) - std::atan2(dbx, dbz)));
        ++n;
    }
    e.angle_rad = n ? float(ang / n) : 0.f;
    return e;
}

TrajectoryError trajectory_error(const MotionClip& out, const MotionClip& ref,
                                 float min_step) {
    if (out.frames() == 0 || ref.frames() == 0)
        throw Error("trajectory_error: empty clip");
    return trajectory_error(proj(out.root_pos), yaw_of(out.rot[0][0]),
                            proj(ref.root_pos), yaw_of(ref.rot[0][0]), min_step);
}

// ---------------------------------------------------------------------------
// style classifier

namespace {

Tensor scalar_record(float v) { return Tensor({1}, {v}); }

} // namespace

StyleClassifier StyleClassifier::init(Rng& rng, int styles, int window) {
    if (styles < 2) throw Error("style classifier needs >= 2 styles");
    StyleClassifier c;
    c.c1 = nn::Conv1d(rng, feat::kDim, 64, 5, 2);
    c.c2 = nn::Conv1d(rng, 64, 64, 5, 2);
    c.head = nn::Dense(rng, 64, styles);
    c.styles = styles;
    c.window = window;
    return c;
}

Tensor StyleClassifier::logits(const Tensor& x_std) const {
    Tensor h = ops::leaky_relu(c1(x_std));
    h = ops::leaky_relu(c2(h));
    return head.vec(ops::mean_rows(h));
}

int StyleClassifier::classify(const Tensor& raw) const {
    if (raw.ndim() != 2 || raw.dim(0) != feat::kDim)
        throw ShapeError("classify: expected (231,T) features");
    const int T = raw.dim(1);
    if (T < window) throw Error("classify: fewer frames than the classifier window");
    const Tensor x = norm.apply(raw);
    std::vector<double> votes(size_t(styles), 0.0);
    for (int start = 0;; start += window) {
        if (start + window > T) start = T - window; // end-align the last window
        Tensor lg = logits(ops::slice_cols(x, start, window));
        for (int s = 0; s < styles; ++s) votes[size_t(s)] += double(lg.at(s));
        if (start + window >= T) break;
    }
    return int(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

void StyleClassifier::collect(nn::NamedParams& out) const {
    c1.collect("cls.c1", out);
    c2.collect("cls.c2", out);
    head.collect("cls.head", out);
}

void StyleClassifier::save(const std::string& path) const {
    if (norm.mean.empty()) throw Error("classifier save: normalizer not fit");
    nn::NamedParams rec;
    rec.emplace_back("meta.styles", scalar_record(float(styles)));
    rec.emplace_back("meta.window", scalar_record(float(window)));
    rec.emplace_back("meta.validated", scalar_record(validated ? 1.f : 0.f));
    rec.emplace_back("meta.val_accuracy", scalar_record(val_accuracy));
    rec.emplace_back("norm.mean", Tensor({feat::kDim}, norm.mean));
    rec.emplace_back("norm.std", Tensor({feat::kDim}, norm.stdev));
    collect(rec);
    save_checkpoint(path, CkptKind::classifier, rec);
}

StyleClassifier StyleClassifier::load(const std::string& path) {
    nn::NamedParams rec = load_checkpoint(path, CkptKind::classifier);
    if (rec.size() < 6 || rec[0].first != "meta.styles")
        throw Error("classifier load: unexpected layout in " + path);
    Rng rng(0);
    StyleClassifier c =
        init(rng, int(rec[0].second.at(0)), int(rec[1].second.at(0)));
    c.validated = rec[2].second.at(0) != 0.f;
    c.val_accuracy = rec[3].second.at(0);
    c.norm.mean = rec[4].second.vec();
    c.norm.stdev = rec[5].second.vec();
    nn::NamedParams model_params;
    c.collect(model_params);
    assign_params(nn::NamedParams(rec.begin() + 6, rec.end()), model_params);
    return c;
}

ClassifierTrainResult train_classifier(const Corpus& corpus,
                                       const ClassifierTrainConfig& cfg) {
    if (corpus.train.empty()) throw Error("classifier training needs a train split");
    int styles = 0;
    for (const Window& w : corpus.train) styles = std::max(styles, w.label + 1);

    Rng rng(cfg.seed);
    ClassifierTrainResult res;
    res.model = StyleClassifier::init(rng, styles, corpus.cfg.window);
    res.model.norm = corpus.norm;

    nn::NamedParams params;
    res.model.collect(params);
    nn::Adam opt(cfg.lr);
    opt.add(params);

    std::vector<Tensor> inputs;
    inputs.reserve(corpus.train.size());
    for (const Window& w : corpus.train) inputs.push_back(corpus.norm.apply(w.raw));

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
                Tape tape;
                Tensor loss = ops::softmax_cross_entropy(
                    res.model.logits(inputs[idx]), corpus.train[idx].label);
                tape.backward(ops::mul_scalar(loss, 1.f / float(bn)));
                batch_loss += loss.item();
            }
            batch_loss /= double(bn);
            if (!std::isfinite(batch_loss)) throw Error("classifier training diverged (loss)");
            if (!opt.step()) throw Error("classifier training diverged (gradients)");
            epoch_loss += batch_loss;
            ++epoch_n;
            ++step;
        }
        res.curve.points.emplace_back(step, float(epoch_loss / std::max(epoch_n, 1)));
    }

    int hit = 0;
    const auto& eval_set = corpus.val.empty() ? corpus.train : corpus.val;
    for (const Window& w : eval_set) {
        Tensor lg = res.model.logits(corpus.norm.apply(w.raw));
        int best = 0;
        for (int s = 1; s < styles; ++s)
            if (lg.at(s) > lg.at(best)) best = s;
        hit += best == w.label;
    }
    res.val_accuracy = eval_set.empty() ? 0.f : float(hit) / float(eval_set.size());
    res.model.val_accuracy = res.val_accuracy;
    res.model.validated = res.val_accuracy >= cfg.gate;
    return res;
}

float style_accuracy(const StyleClassifier& cls, const std::vector<Tensor>& raw_feats,
                     const std::vector<int>& labels) {
    if (!cls.validated)
        throw Error("style_accuracy: classifier has not passed its validation gate");
    if (raw_feats.size() != labels.size() || raw_feats.empty())
        throw Error("style_accuracy: need matching, nonempty features and labels");
    int hit = 0;
    for (size_t i = 0; i < raw_feats.size(); ++i)
        hit += cls.classify(raw_feats[i]) == labels[i];
    return float(hit) / float(raw_feats.size());
}

float style_accuracy(const StyleClassifier& cls, const std::vector<MotionClip>& clips,
                     const std::vector<int>& labels) {
    std::vector<Tensor> feats;
    feats.reserve(clips.size());
    for (const MotionClip& c : clips) feats.push_back(featurize(c));
    return style_accuracy(cls, feats, labels);
}

} // namespace mstx
