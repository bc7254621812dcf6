#include "mstx/config.hpp"

#include <json.hpp>

#include <fstream>
#include <initializer_list>
#include <sstream>

namespace mstx {

namespace {

using nlohmann::json;

void expect_object(const json& j, const std::string& where) {
    if (!j.is_object()) throw Error("config: " + where + " must be an object");
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool known = false;
        for (const char* k : keys)
            if (it.key() == k) {
                known = true;
                break;
            }
        if (!known) throw Error("config: unknown key '" + it.key() + "' in " + where);
    }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        throw Error("config: bad value for '" + where + "." + key + "': " + e.what());
    }
}

void parse_corpus(const json& j, CorpusConfig& c) {
    expect_object(j, "corpus");
    reject_unknown(j, {"clips_per_style", "frames", "window", "stride", "val_fraction", "seed"},
                   "corpus");
    read(j, "clips_per_style", c.clips_per_style, "corpus");
    read(j, "frames", c.frames, "corpus");
    read(j, "window", c.window, "corpus");
    read(j, "stride", c.stride, "corpus");
    read(j, "val_fraction", c.val_fraction, "corpus");
    read(j, "seed", c.seed, "corpus");
}

void parse_fdelta(const json& j, FdeltaTrainConfig& c) {
    expect_object(j, "fdelta");
    reject_unknown(j, {"epochs", "batch", "lr", "seed", "augment", "scale_lo", "scale_hi"},
                   "fdelta");
    read(j, "epochs", c.epochs, "fdelta");
    read(j, "batch", c.batch, "fdelta");
    read(j, "lr", c.lr, "fdelta");
    read(j, "seed", c.seed, "fdelta");
    read(j, "augment", c.augment, "fdelta");
    read(j, "scale_lo", c.scale_lo, "fdelta");
    read(j, "scale_hi", c.scale_hi, "fdelta");
}

void parse_manifold(const json& j, ManifoldTrainConfig& c) {
    expect_object(j, "manifold");
    reject_unknown(j, {"epochs", "batch", "lr", "seed", "frame_level"}, "manifold");
    read(j, "epochs", c.epochs, "manifold");
    read(j, "batch", c.batch, "manifold");
    read(j, "lr", c.lr, "manifold");
    read(j, "seed", c.seed, "manifold");
    read(j, "frame_level", c.frame_level, "manifold");
}

void parse_transfer(const json& j, TransferTrainConfig& c) {
    expect_object(j, "transfer");
    reject_unknown(j, {"steps", "batch", "lr", "cross_style_prob", "seed", "log_every"},
                   "transfer");
    read(j, "steps", c.steps, "transfer");
    read(j, "batch", c.batch, "transfer");
    read(j, "lr", c.lr, "transfer");
    read(j, "cross_style_prob", c.cross_style_prob, "transfer");
    read(j, "seed", c.seed, "transfer");
    read(j, "log_every", c.log_every, "transfer");
}

void parse_classifier(const json& j, ClassifierTrainConfig& c) {
    expect_object(j, "classifier");
    reject_unknown(j, {"epochs", "batch", "lr", "seed", "gate"}, "classifier");
    read(j, "epochs", c.epochs, "classifier");
    read(j, "batch", c.batch, "classifier");
    read(j, "lr", c.lr, "classifier");
    read(j, "seed", c.seed, "classifier");
    read(j, "gate", c.gate, "classifier");
}

void parse_weights(const json& j, LossWeights& w) {
    expect_object(j, "weights");
    reject_unknown(j, {"alpha", "alpha_tj", "beta", "lambda", "sigma", "skate_threshold"},
                   "weights");
    read(j, "alpha", w.alpha, "weights");
    read(j, "alpha_tj", w.alpha_tj, "weights");
    read(j, "beta", w.beta, "weights");
    read(j, "lambda", w.lambda, "weights");
    read(j, "sigma", w.sigma, "weights");
    read(j, "skate_threshold", w.skate_threshold, "weights");
}

void parse_eval(const json& j, EvalConfig& e) {
    expect_object(j, "eval");
    reject_unknown(j, {"tol_frames", "pairs", "seed"}, "eval");
    read(j, "tol_frames", e.tol_frames, "eval");
    read(j, "pairs", e.pairs, "eval");
    read(j, "seed", e.seed, "eval");
}

void validate(const RunConfig& c) {
    if (c.corpus.window != 64)
        throw Error("config: corpus.window must be 64 (the model window)");
    if (c.corpus.frames < c.corpus.window)
        throw Error("config: corpus.frames must be >= corpus.window");
    if (c.corpus.clips_per_style < 2)
        throw Error("config: corpus.clips_per_style must be >= 2");
    if (c.corpus.stride <= 0) throw Error("config: corpus.stride must be positive");
    if (c.fdelta.epochs <= 0 || c.manifold.epochs <= 0 || c.classifier.epochs <= 0 ||
        c.transfer.steps <= 0)
        throw Error("config: training lengths must be positive");
    if (c.fdelta.batch <= 0 || c.manifold.batch <= 0 || c.transfer.batch <= 0 ||
        c.classifier.batch <= 0)
        throw Error("config: batch sizes must be positive");
    if (c.weights.lambda < 0.f || c.weights.sigma < 0.f)
        throw Error("config: lambda and sigma must be >= 0");
    if (c.weights.skate_threshold <= 0.f)
        throw Error("config: skate_threshold must be positive");
    if (c.eval.pairs < 1) throw Error("config: eval.pairs must be >= 1");
    if (c.eval.tol_frames < 0) throw Error("config: eval.tol_frames must be >= 0");
}

} // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw Error(std::string("config: parse error: ") + e.what());
    }
    expect_object(j, "top level");
    reject_unknown(j,
                   {"seed", "corpus", "fdelta", "manifold", "transfer", "classifier",
                    "weights", "eval"},
                   "top level");

    RunConfig c;
    read(j, "seed", c.seed, "top level");
    if (j.contains("corpus")) parse_corpus(j.at("corpus"), c.corpus);
    if (j.contains("fdelta")) parse_fdelta(j.at("fdelta"), c.fdelta);
    if (j.contains("manifold")) parse_manifold(j.at("manifold"), c.manifold);
    if (j.contains("transfer")) parse_transfer(j.at("transfer"), c.transfer);
    if (j.contains("classifier")) parse_classifier(j.at("classifier"), c.classifier);
    if (j.contains("weights")) parse_weights(j.at("weights"), c.weights);
    if (j.contains("eval")) parse_eval(j.at("eval"), c.eval);

    // the weight block is the single source for the shared loss constants
    c.manifold.beta = c.weights.beta;
    c.transfer.weights.alpha = c.weights.alpha;
    c.transfer.weights.alpha_tj = c.weights.alpha_tj;

    validate(c);
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

void apply_seed_override(RunConfig& cfg, uint64_t seed) {
    cfg.seed = seed;
    cfg.corpus.seed = seed;
    cfg.fdelta.seed = seed + 1;
    cfg.manifold.seed = seed + 2;
    cfg.transfer.seed = seed + 3;
    cfg.classifier.seed = seed + 4;
    cfg.eval.seed = seed + 5;
}

} // namespace mstx
