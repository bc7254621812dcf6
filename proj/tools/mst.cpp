// mst: one binary for the whole pipeline. synth -> train-* -> transfer /
// edit / project -> eval. Every command is deterministic under --seed and
// either writes all of its outputs or removes the partial ones and exits 1.

#include "mstx/bvh.hpp"
#include "mstx/checkpoint.hpp"
#include "mstx/config.hpp"
#include "mstx/dataset.hpp"
#include "mstx/editing.hpp"
#include "mstx/gait.hpp"
#include "mstx/hip_contact.hpp"
#include "mstx/kinematics.hpp"
#include "mstx/manifold.hpp"
#include "mstx/metrics.hpp"
#include "mstx/transfer.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace mstx;

namespace {

// Tracks files a command intends to produce so a failure can clean up.
struct Outputs {
    fs::path dir;
    std::vector<fs::path> files;

    explicit Outputs(const std::string& d) : dir(d) { fs::create_directories(dir); }

    std::string path(const std::string& name) {
        fs::path p = dir / name;
        files.push_back(p);
        return p.string();
    }

    void discard() {
        for (const fs::path& p : files) {
            std::error_code ec;
            fs::remove(p, ec);
        }
    }
};

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path);
    out << text;
    if (!out) throw Error("write failed: " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return text;
}

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// checkpoint routing: --ckpt is repeatable and order-free; files say what
// they are, so each slot is filled by kind and duplicates are an error.

struct CkptSet {
    std::string fdelta, manifold, transfer, classifier;
};

CkptSet route_checkpoints(const std::vector<std::string>& paths) {
    CkptSet set;
    auto fill = [](std::string& slot, const std::string& p, const char* kind) {
        if (!slot.empty()) throw Error(std::string("two ") + kind + " checkpoints given: " + p);
        slot = p;
    };
    for (const std::string& p : paths) {
        switch (peek_checkpoint_kind(p)) {
            case CkptKind::fdelta: fill(set.fdelta, p, "fdelta"); break;
            case CkptKind::manifold: fill(set.manifold, p, "manifold"); break;
            case CkptKind::transfer: fill(set.transfer, p, "transfer"); break;
            case CkptKind::classifier: fill(set.classifier, p, "classifier"); break;
        }
    }
    return set;
}

const std::string& need(const std::string& slot, const char* kind) {
    if (slot.empty()) throw Error(std::string("a ") + kind + " checkpoint is required (--ckpt)");
    return slot;
}

// ---------------------------------------------------------------------------
// small conversions shared by the commands

Tensor first_window(const Tensor& raw, int window) {
    if (raw.dim(1) < window)
        throw Error("clip too short: need " + std::to_string(window) + " frames, have " +
                    std::to_string(raw.dim(1)));
    return ops::slice_cols(raw, 0, window);
}

Tensor clip_window_raw(const MotionClip& clip, int window) {
    return first_window(featurize(clip), window);
}

HipVelocitySeq to_hip_seq(const Tensor& h) {
    HipVelocitySeq seq;
    seq.vel.resize(size_t(h.dim(1)));
    for (int t = 0; t < h.dim(1); ++t)
        seq.vel[size_t(t)] = {h.at(0, t), h.at(1, t), h.at(2, t)};
    return seq;
}

MotionClip load_clip(const std::string& path) {
    BvhResult r = parse_bvh_file(path);
    return r.clip;
}

void write_clip(const std::string& path, const MotionClip& clip) {
    write_bvh_file(path, *clip.skeleton, clip);
}

std::vector<float> velocity_rows(const Tensor& raw, int t) {
    std::vector<float> v(size_t(feat::kHipBase - feat::kVelBase));
    for (int r = feat::kVelBase; r < feat::kHipBase; ++r)
        v[size_t(r - feat::kVelBase)] = raw.at(r, t);
    return v;
}

void append_velocity_samples(const Tensor& raw, std::vector<std::vector<float>>& out) {
    for (int t = 0; t < raw.dim(1); ++t) out.push_back(velocity_rows(raw, t));
}

// ---------------------------------------------------------------------------
// synth

int cmd_synth(const RunConfig& cfg, Outputs& out) {
    Corpus corpus = build_corpus(cfg.corpus);
    const auto& presets = style_presets();
    for (size_t i = 0; i < corpus.clips.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "%s_%03zu.bvh",
                      presets[size_t(corpus.meta[i].style)].name.c_str(), i);
        std::string p = out.path(name);
        write_clip(p, corpus.clips[i]);
        corpus.meta[i].file = name;
    }
    write_manifest(out.path("manifest.tsv"), corpus);
    std::printf("synth: %zu clips, %zu train / %zu val windows\n", corpus.clips.size(),
                corpus.train.size(), corpus.val.size());
    return 0;
}

// ---------------------------------------------------------------------------
// training commands

std::string curve_csv(const nn::TrainCurve& curve, const char* head) {
    std::string text = std::string(head) + "\n";
    for (const auto& [step, value] : curve.points)
        text += std::to_string(step) + "," + num(value) + "\n";
    return text;
}

int cmd_train_fdelta(const RunConfig& cfg, Outputs& out) {
    Corpus corpus = build_corpus(cfg.corpus);
    FdeltaTrainResult res = train_fdelta(corpus, cfg.fdelta);
    res.model.save(out.path("fdelta.ckpt"));
    write_text(out.path("fdelta_curve.csv"), curve_csv(res.curve, "epoch,loss"));
    std::printf("train-fdelta: loss %.4f, val accuracy %.4f\n", res.final_loss,
                res.val_accuracy);
    return 0;
}

int cmd_train_manifold(const RunConfig& cfg, Outputs& out) {
    Corpus corpus = build_corpus(cfg.corpus);
    ManifoldTrainResult res = train_manifold(corpus, cfg.manifold);
    res.model.save(out.path("manifold.ckpt"));
    write_text(out.path("manifold_curve.csv"), curve_csv(res.curve, "epoch,loss"));
    std::printf("train-manifold: loss %.4f (recon %.4f, kl %.4f)\n", res.final_loss,
                res.final_recon, res.final_kl);
    return 0;
}

int cmd_train_transfer(const RunConfig& cfg, const CkptSet& ck, Outputs& out) {
    Corpus corpus = build_corpus(cfg.corpus);
    ManifoldModel man = ManifoldModel::load(need(ck.manifold, "manifold"));
    FDeltaModel fd = FDeltaModel::load(need(ck.fdelta, "fdelta"));
    TransferTrainResult res = train_transfer(corpus, man, fd, cfg.transfer);
    res.model.save(out.path("transfer.ckpt"));
    std::string csv = "step,rec,cyc,style,tj,ctt,total\n";
    for (const TransferCurvePoint& p : res.curve) {
        csv += std::to_string(p.step);
        for (float v : {p.parts.rec, p.parts.cyc, p.parts.style, p.parts.tj, p.parts.ctt,
                        p.parts.total})
            csv += "," + num(v);
        csv += "\n";
    }
    write_text(out.path("transfer_curve.csv"), csv);
    std::printf("train-transfer: total %.4f (rec %.4f, cyc %.4f, style %.4f)\n",
                res.final_parts.total, res.final_parts.rec, res.final_parts.cyc,
                res.final_parts.style);
    return 0;
}

int cmd_train_classifier(const RunConfig& cfg, Outputs& out) {
    Corpus corpus = build_corpus(cfg.corpus);
    ClassifierTrainResult res = train_classifier(corpus, cfg.classifier);
    res.model.save(out.path("classifier.ckpt"));
    write_text(out.path("classifier_curve.csv"), curve_csv(res.curve, "epoch,loss"));
    std::printf("train-classifier: val accuracy %.4f (gate %s)\n", res.val_accuracy,
                res.model.validated ? "passed" : "FAILED");
    return 0;
}

// ---------------------------------------------------------------------------
// transfer / project

int cmd_transfer(const CkptSet& ck, const std::string& style_path,
                 const std::string& content_path, Outputs& out) {
    ManifoldModel man = ManifoldModel::load(need(ck.manifold, "manifold"));
    TransferModel model = TransferModel::load(need(ck.transfer, "transfer"));
    MotionClip result =
        transfer_clip(model, man, load_clip(style_path), load_clip(content_path));
    write_clip(out.path("transfer.bvh"), result);
    std::printf("transfer: %d frames\n", result.frames());
    return 0;
}

int cmd_project(const CkptSet& ck, const std::string& input_path, Outputs& out) {
    ManifoldModel man = ManifoldModel::load(need(ck.manifold, "manifold"));
    MotionClip result = manifold_project(man, load_clip(input_path));
    write_clip(out.path("project.bvh"), result);
    std::printf("project: %d frames\n", result.frames());
    return 0;
}

// ---------------------------------------------------------------------------
// edit

CodeKind interp_kind(const std::string& op) {
    if (op == "interp_style") return CodeKind::style;
    if (op == "interp_contact") return CodeKind::contact;
    return CodeKind::trajectory;
}

int cmd_edit(const CkptSet& ck, const std::string& spec_path, Outputs& out) {
    EditSpec spec = parse_edit_spec(read_text(spec_path));
    ManifoldModel man = ManifoldModel::load(need(ck.manifold, "manifold"));
    MotionClip result;

    if (spec.op == "interp_style" || spec.op == "interp_contact" ||
        spec.op == "interp_trajectory") {
        TransferModel model = TransferModel::load(need(ck.transfer, "transfer"));
        MotionClip a = load_clip(spec.a);
        Tensor xa = man.norm.apply(clip_window_raw(a, man.window));
        Tensor xb = man.norm.apply(clip_window_raw(load_clip(spec.b), man.window));
        TransferOutput o = interp_factor(model, man, interp_kind(spec.op), xa, xb, spec.factor);
        PoseSeq seq = unpack_features(man.norm.invert(o.feats));
        result = reconstruct(ReconMode::velocity, a.skeleton, seq, a.fps);
    } else if (spec.op == "scale_hip" || spec.op == "replace_hip") {
        TransferModel model = TransferModel::load(need(ck.transfer, "transfer"));
        Tensor xs = man.norm.apply(clip_window_raw(load_clip(spec.style), man.window));
        Tensor xc = man.norm.apply(clip_window_raw(load_clip(spec.content), man.window));
        TransferOutput g = model.generate(man, xs, xc, xc);
        if (spec.op == "scale_hip") {
            result = scale_hip(man, g.z, g.h_std, spec.scale);
        } else {
            Tensor h_new = hip_rows(clip_window_raw(load_clip(spec.hip), man.window));
            result = replace_hip(man, g.z, h_new);
        }
    } else if (spec.op == "optimize_contact") {
        FDeltaModel fd = FDeltaModel::load(need(ck.fdelta, "fdelta"));
        Tensor raw = clip_window_raw(load_clip(spec.hip), man.window);
        Tensor h = hip_rows(raw);
        ContactSeq target = contacts_from_runs(man.window, spec.desired);
        ContactOptimConfig oc;
        oc.lambda = spec.lambda;
        oc.sigma = spec.sigma;
        ContactOptimResult res = optimize_contact(fd, h, target, oc);
        ManifoldLatent lat = man.encode(man.norm.apply(raw));
        result = replace_hip(man, lat.z, res.h);
        std::printf("edit: objective %.4f -> %.4f in %d steps\n", res.initial, res.final,
                    res.steps_run);
    } else {
        throw Error("unhandled edit op: " + spec.op);
    }

    write_clip(out.path("edit.bvh"), result);
    std::printf("edit: %s, %d frames\n", spec.op.c_str(), result.frames());
    return 0;
}

// ---------------------------------------------------------------------------
// eval

struct Row {
    std::string experiment, metric;
    double value;
};

struct Averager {
    double sum = 0;
    int n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    double mean() const { return n ? sum / n : 0.0; }
};

int cmd_eval(const RunConfig& cfg, const CkptSet& ck, Outputs& out) {
    Corpus corpus = build_corpus(cfg.corpus);
    FDeltaModel fd = FDeltaModel::load(need(ck.fdelta, "fdelta"));
    ManifoldModel man = ManifoldModel::load(need(ck.manifold, "manifold"));
    TransferModel model = TransferModel::load(need(ck.transfer, "transfer"));
    StyleClassifier cls = ck.classifier.empty()
                              ? train_classifier(corpus, cfg.classifier).model
                              : StyleClassifier::load(ck.classifier);
    if (!cls.validated) throw Error("eval: style classifier has not passed its gate");

    const int tol = cfg.eval.tol_frames;
    std::vector<Row> rows;

    // dataset: labeled-corpus baselines and f_delta held-out quality
    {
        Averager skate;
        for (size_t i = 0; i < corpus.clips.size(); ++i)
            if (corpus.meta[i].val) skate.add(foot_skate(corpus.clips[i]));
        Averager acc, prec, rec;
        for (const Window& w : corpus.val) {
            ContactSeq pred = fd.predict(to_hip_seq(hip_rows(w.raw)));
            int hit = 0;
            for (int t = 0; t < man.window; ++t)
                for (int f = 0; f < 2; ++f)
                    hit += pred.on(t, f) == w.contacts.on(t, f);
            acc.add(double(hit) / (2.0 * man.window));
            ContactPR pr = contact_pr(pred, w.contacts, tol);
            prec.add(pr.precision);
            rec.add(pr.recall);
        }
        rows.push_back({"dataset", "val_foot_skate", skate.mean()});
        rows.push_back({"dataset", "fdelta_accuracy", acc.mean()});
        rows.push_back({"dataset", "fdelta_contact_precision", prec.mean()});
        rows.push_back({"dataset", "fdelta_contact_recall", rec.mean()});
    }

    // manifold: decode val windows at the latent mean, compare the decoded
    // motion's kinematic contacts against f_delta on the conditioning hip
    {
        Averager prec, rec, skate;
        for (const Window& w : corpus.val) {
            Tensor x = man.norm.apply(w.raw);
            ManifoldLatent lat = man.encode(x);
            Tensor y = man.decode(lat.z, hip_rows(x));
            MotionClip decoded = features_to_clip(man, y);
            ContactPR pr =
                contact_pr_star(label_contacts(decoded), fd, to_hip_seq(hip_rows(w.raw)), tol);
            prec.add(pr.precision);
            rec.add(pr.recall);
            skate.add(foot_skate(decoded));
        }
        rows.push_back({"manifold", "contact_precision_star", prec.mean()});
        rows.push_back({"manifold", "contact_recall_star", rec.mean()});
        rows.push_back({"manifold", "foot_skate", skate.mean()});
    }

    // transfer experiments over deterministic cross-style val pairs
    const std::vector<Window>& pool = corpus.val.empty() ? corpus.train : corpus.val;
    Rng rng(cfg.eval.seed);
    struct Pair {
        int style, content;
    };
    std::vector<Pair> pairs;
    for (int i = 0; i < cfg.eval.pairs; ++i) {
        int a = int(rng.uniform_index(pool.size()));
        int b = int(rng.uniform_index(pool.size()));
        for (int guard = 0; guard < 64 && pool[size_t(b)].label == pool[size_t(a)].label;
             ++guard)
            b = int(rng.uniform_index(pool.size()));
        if (pool[size_t(b)].label != pool[size_t(a)].label) pairs.push_back({a, b});
    }
    if (pairs.empty()) throw Error("eval: no cross-style pairs in the validation split");

    Averager rec_l1, rec_xz;
    Averager tr_sa, tr_xz, tr_skate, tr_prec, tr_rec;
    Averager ct_sa, ct_xz;
    std::vector<std::vector<float>> gen_vel, ref_vel;
    for (const Pair& p : pairs) {
        const Window& ws = pool[size_t(p.style)];
        const Window& wc = pool[size_t(p.content)];
        Tensor xs = man.norm.apply(ws.raw);
        Tensor xc = man.norm.apply(wc.raw);
        MotionClip content_clip = features_to_clip(man, xc);

        TransferOutput ccc = model.generate(man, xc, xc, xc);
        rec_l1.add(ops::mean_abs(ccc.feats, xc).item());
        rec_xz.add(trajectory_error(features_to_clip(man, ccc.feats), content_clip).xz_cm);

        TransferOutput scc = model.generate(man, xs, xc, xc);
        Tensor scc_raw = man.norm.invert(scc.feats);
        MotionClip scc_clip = features_to_clip(man, scc.feats);
        tr_sa.add(cls.classify(scc_raw) == ws.label ? 1.0 : 0.0);
        tr_xz.add(trajectory_error(scc_clip, content_clip).xz_cm);
        tr_skate.add(foot_skate(scc_clip));
        ContactPR pr = contact_pr_star(label_contacts(scc_clip), fd,
                                       to_hip_seq(hip_rows(scc_raw)), tol);
        tr_prec.add(pr.precision);
        tr_rec.add(pr.recall);
        append_velocity_samples(scc_raw, gen_vel);
        append_velocity_samples(ws.raw, ref_vel);

        TransferOutput ssc = model.generate(man, xs, xs, xc);
        ct_sa.add(cls.classify(man.norm.invert(ssc.feats)) == ws.label ? 1.0 : 0.0);
        ct_xz.add(trajectory_error(features_to_clip(man, ssc.feats), content_clip).xz_cm);
    }
    rows.push_back({"reconstruction", "feature_l1", rec_l1.mean()});
    rows.push_back({"reconstruction", "xz_error_cm", rec_xz.mean()});
    rows.push_back({"transfer", "style_accuracy", tr_sa.mean()});
    rows.push_back({"transfer", "xz_error_cm", tr_xz.mean()});
    rows.push_back({"transfer", "foot_skate", tr_skate.mean()});
    rows.push_back({"transfer", "contact_precision_star", tr_prec.mean()});
    rows.push_back({"transfer", "contact_recall_star", tr_rec.mean()});
    rows.push_back({"transfer", "fmd", fmd_samples(gen_vel, ref_vel)});
    rows.push_back({"transfer_ct", "style_accuracy", ct_sa.mean()});
    rows.push_back({"transfer_ct", "xz_error_cm", ct_xz.mean()});
    rows.push_back({"eval", "pairs", double(pairs.size())});

    std::string csv = "experiment,metric,value\n";
    for (const Row& r : rows) csv += r.experiment + "," + r.metric + "," + num(r.value) + "\n";
    write_text(out.path("eval.csv"), csv);
    std::printf("eval: %zu metrics over %zu pairs\n", rows.size(), pairs.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"contact-decoupled motion style transfer"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out";
    std::string style_path, content_path, input_path, spec_path;
    std::vector<std::string> ckpt_paths;
    uint64_t seed = 0;
    std::vector<CLI::Option*> seed_opts;

    auto add_common = [&](CLI::App* sub, bool takes_ckpts) {
        sub->add_option("--config", config_path, "run configuration (JSON)");
        seed_opts.push_back(sub->add_option("--seed", seed, "override every stage seed"));
        sub->add_option("--out", out_dir, "output directory");
        if (takes_ckpts)
            sub->add_option("--ckpt", ckpt_paths, "checkpoint file (repeatable)");
        return sub;
    };

    CLI::App* synth = add_common(app.add_subcommand("synth", "write the corpus as BVH"), false);
    CLI::App* tr_fd =
        add_common(app.add_subcommand("train-fdelta", "hip-to-contact network"), false);
    CLI::App* tr_man =
        add_common(app.add_subcommand("train-manifold", "pose manifold CVAE"), false);
    CLI::App* tr_tx =
        add_common(app.add_subcommand("train-transfer", "style transfer network"), true);
    CLI::App* tr_cls =
        add_common(app.add_subcommand("train-classifier", "style classifier"), false);

    CLI::App* transfer = add_common(app.add_subcommand("transfer", "stylize a clip"), true);
    transfer->add_option("--style", style_path, "style source BVH")->required();
    transfer->add_option("--content", content_path, "content source BVH")->required();

    CLI::App* edit = add_common(app.add_subcommand("edit", "apply an edit spec"), true);
    edit->add_option("--edit-spec", spec_path, "edit description (JSON)")->required();

    CLI::App* project =
        add_common(app.add_subcommand("project", "manifold projection cleanup"), true);
    project->add_option("--input", input_path, "clip to project (BVH)")->required();

    CLI::App* eval = add_common(app.add_subcommand("eval", "metric report (CSV)"), true);

    CLI11_PARSE(app, argc, argv);

    Outputs out(out_dir);
    try {
        RunConfig cfg = config_path.empty() ? RunConfig{} : load_run_config(config_path);
        for (const CLI::Option* o : seed_opts)
            if (o->count()) apply_seed_override(cfg, seed);
        CkptSet ck = route_checkpoints(ckpt_paths);

        if (synth->parsed()) return cmd_synth(cfg, out);
        if (tr_fd->parsed()) return cmd_train_fdelta(cfg, out);
        if (tr_man->parsed()) return cmd_train_manifold(cfg, out);
        if (tr_tx->parsed()) return cmd_train_transfer(cfg, ck, out);
        if (tr_cls->parsed()) return cmd_train_classifier(cfg, out);
        if (transfer->parsed()) return cmd_transfer(ck, style_path, content_path, out);
        if (edit->parsed()) return cmd_edit(ck, spec_path, out);
        if (project->parsed()) return cmd_project(ck, input_path, out);
        if (eval->parsed()) return cmd_eval(cfg, ck, out);
        throw Error("no command");
    } catch (const std::exception& e) {
        out.discard();
        std::fprintf(stderr, "mst: %s\n", e.what());
        return 1;
    }
}
