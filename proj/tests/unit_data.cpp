#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mstx/checkpoint.hpp"
#include "mstx/config.hpp"
#include "mstx/dataset.hpp"
#include "mstx/gait.hpp"
#include "mstx/kinematics.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace mstx;

namespace {

std::string temp_path(const char* name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return std::string((std::istreambuf_iterator<char>(in)),
                       std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
}

CorpusConfig small_corpus_config() {
    CorpusConfig cfg;
    cfg.clips_per_style = 3;
    cfg.frames = 120;
    cfg.val_fraction = 0.34f;
    return cfg;
}

bool contains(const std::string& hay, const std::string& needle) {
    return hay.find(needle) != std::string::npos;
}

template <typename Fn>
std::string error_message(Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("default corpus splits 200 clips into 180 train and 20 val") {
    Corpus c = build_corpus(CorpusConfig{});
    CHECK(c.clips.size() == 200);
    int val = 0;
    for (const ClipMeta& m : c.meta) val += m.val ? 1 : 0;
    CHECK(val == 20);
    CHECK(c.meta.size() == 200);
    CHECK(c.gen_contacts.size() == 200);
    CHECK(!c.train.empty());
    CHECK(!c.val.empty());
    // windows carry the owning clip's label
    for (const Window& w : c.val) {
        CHECK(w.label == c.meta[size_t(w.clip)].style);
        CHECK(c.meta[size_t(w.clip)].val);
    }

    SUBCASE("standardized train features have zero mean and unit spread") {
        std::vector<double> sum(feat::kDim, 0.0), sq(feat::kDim, 0.0);
        int64_t n = 0;
        for (const Window& w : c.train) {
            Tensor x = c.norm.apply(w.raw);
            for (int r = 0; r < feat::kDim; ++r)
                for (int t = 0; t < x.dim(1); ++t) {
                    sum[size_t(r)] += x.at(r, t);
                    sq[size_t(r)] += double(x.at(r, t)) * x.at(r, t);
                }
            n += x.dim(1);
        }
        for (int r = 0; r < feat::kDim; ++r) {
            const double m = sum[size_t(r)] / double(n);
            const double sd = std::sqrt(std::max(sq[size_t(r)] / double(n) - m * m, 0.0));
            CHECK(std::abs(m) < 1e-4);
            if (c.norm.stdev[size_t(r)] > 1e-3f) CHECK(std::abs(sd - 1.0) < 1e-3);
        }
    }

    SUBCASE("normalizer invert undoes apply") {
        const Tensor& raw = c.train[0].raw;
        Tensor back = c.norm.invert(c.norm.apply(raw));
        for (int i = 0; i < raw.size(); ++i)
            CHECK(back.at(i) == doctest::Approx(raw.at(i)).epsilon(1e-4));
    }
}

TEST_CASE("same seed reproduces the corpus split exactly") {
    CorpusConfig cfg = small_corpus_config();
    Corpus a = build_corpus(cfg);
    Corpus b = build_corpus(cfg);
    REQUIRE(a.meta.size() == b.meta.size());
    for (size_t i = 0; i < a.meta.size(); ++i) {
        CHECK(a.meta[i].val == b.meta[i].val);
        CHECK(a.meta[i].seed == b.meta[i].seed);
    }
    REQUIRE(a.train.size() == b.train.size());
    for (size_t i = 0; i < a.train.size(); ++i) {
        CHECK(a.train[i].clip == b.train[i].clip);
        CHECK(a.train[i].start == b.train[i].start);
    }
}

TEST_CASE("featurize exposes hip velocity on its reserved rows") {
    GaitSample s = synth_gait(style_presets()[2], 100, 8);
    Tensor f = featurize(s.clip);
    REQUIRE(f.dim(0) == feat::kDim);
    REQUIRE(f.dim(1) == 100);
    HipVelocitySeq h = hip_local_velocity(s.clip);
    Tensor rows = hip_rows(f);
    for (int t = 0; t < 100; ++t) {
        CHECK(rows.at(0, t) == doctest::Approx(h.vel[size_t(t)].x).epsilon(1e-5));
        CHECK(rows.at(1, t) == doctest::Approx(h.vel[size_t(t)].y).epsilon(1e-5));
        CHECK(rows.at(2, t) == doctest::Approx(h.vel[size_t(t)].z).epsilon(1e-5));
    }
}

TEST_CASE("stitch_windows is the identity for a single window") {
    Tensor once({2, 8});
    for (int i = 0; i < once.size(); ++i) once.set(i, float(i));
    Tensor out = stitch_windows(8, 8, 3, [&](int start) {
        REQUIRE(start == 0);
        return once;
    });
    for (int i = 0; i < once.size(); ++i) CHECK(out.at(i) == once.at(i));
}

TEST_CASE("stitch_windows crossfades between overlapping windows") {
    // each window is constant at its own start index; the blend must stay
    // within [start_a, start_b] and cover every frame
    const int frames = 20, window = 8, fade = 4;
    Tensor out = stitch_windows(frames, window, fade, [&](int start) {
        return Tensor({1, window}, std::vector<float>(window, float(start)));
    });
    REQUIRE(out.dim(1) == frames);
    CHECK(out.at(0, 0) == doctest::Approx(0.f));
    CHECK(out.at(0, frames - 1) == doctest::Approx(12.f));
    for (int t = 1; t < frames; ++t) CHECK(out.at(0, t) >= out.at(0, t - 1) - 1e-5f);
}

TEST_CASE("manifest lists every clip with split membership") {
    Corpus c = build_corpus(small_corpus_config());
    const std::string path = temp_path("mstx_manifest_test.tsv");
    write_manifest(path, c);
    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(contains(header, "style"));
    CHECK(contains(header, "split"));
    int rows = 0, val = 0;
    for (std::string line; std::getline(in, line);) {
        if (line.empty()) continue;
        ++rows;
        if (contains(line, "\tval")) ++val;
    }
    CHECK(rows == int(c.clips.size()));
    CHECK(val == 8); // one val clip per style at this fraction
    std::filesystem::remove(path);
}

static std::vector<float> ramp(int n, float scale) {
    std::vector<float> v(size_t(n));
    for (int i = 0; i < n; ++i) v[size_t(i)] = scale * float(i) - 1.f;
    return v;
}

TEST_CASE("checkpoint save, load, save produces identical bytes") {
    nn::NamedParams params;
    params.emplace_back("enc.w", Tensor({3, 4}, ramp(12, 0.25f)));
    params.emplace_back("enc.b", Tensor({3}, ramp(3, -0.5f)));
    params.emplace_back("head.w", Tensor({2, 3}, ramp(6, 1.5f)));

    const std::string p1 = temp_path("mstx_ckpt_a.bin");
    const std::string p2 = temp_path("mstx_ckpt_b.bin");
    save_checkpoint(p1, CkptKind::fdelta, params);
    nn::NamedParams loaded = load_checkpoint(p1, CkptKind::fdelta);
    REQUIRE(loaded.size() == params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        CHECK(loaded[i].first == params[i].first);
        CHECK(loaded[i].second.shape() == params[i].second.shape());
        for (int j = 0; j < params[i].second.size(); ++j)
            CHECK(loaded[i].second.at(j) == params[i].second.at(j));
    }
    save_checkpoint(p2, CkptKind::fdelta, loaded);
    CHECK(slurp(p1) == slurp(p2));
    CHECK(peek_checkpoint_kind(p1) == CkptKind::fdelta);
    std::filesystem::remove(p1);
    std::filesystem::remove(p2);
}

TEST_CASE("checkpoint rejects kind mismatch, corruption, and bad versions") {
    nn::NamedParams params;
    params.emplace_back("x", Tensor({2}, ramp(2, 1.f)));
    const std::string path = temp_path("mstx_ckpt_err.bin");
    save_checkpoint(path, CkptKind::manifold, params);

    CHECK(contains(error_message([&] { load_checkpoint(path, CkptKind::transfer); }),
                   "kind"));

    std::string bytes = slurp(path);
    SUBCASE("flipped payload byte breaks the checksum") {
        std::string bad = bytes;
        bad[bad.size() / 2] = char(bad[bad.size() / 2] ^ 0x5a);
        spit(path, bad);
        CHECK(contains(error_message([&] { load_checkpoint(path, CkptKind::manifold); }),
                       "checksum"));
    }
    SUBCASE("stale format version is refused") {
        std::string bad = bytes;
        bad[4] = 9;
        spit(path, bad);
        CHECK(contains(error_message([&] { load_checkpoint(path, CkptKind::manifold); }),
                       "version"));
    }
    SUBCASE("truncated file is refused") {
        spit(path, bytes.substr(0, bytes.size() / 2));
        CHECK_THROWS_AS((void)load_checkpoint(path, CkptKind::manifold), Error);
    }
    SUBCASE("wrong magic is refused") {
        std::string bad = bytes;
        bad[0] = 'X';
        spit(path, bad);
        CHECK_THROWS_AS((void)peek_checkpoint_kind(path), Error);
    }
    std::filesystem::remove(path);
}

TEST_CASE("assign_params wants the exact recorded layout") {
    nn::NamedParams stored;
    stored.emplace_back("w", Tensor({2}, ramp(2, 1.f)));
    nn::NamedParams model;
    model.emplace_back("w", Tensor::param({3}, ramp(3, 1.f)));
    CHECK_THROWS_AS(assign_params(stored, model), Error);

    nn::NamedParams renamed;
    renamed.emplace_back("v", Tensor::param({2}, ramp(2, 1.f)));
    CHECK_THROWS_AS(assign_params(stored, renamed), Error);

    nn::NamedParams ok;
    ok.emplace_back("w", Tensor::param({2}, ramp(2, 0.f)));
    assign_params(stored, ok);
    CHECK(ok[0].second.at(1) == doctest::Approx(stored[0].second.at(1)));
}

TEST_CASE("run config defaults and overrides parse") {
    RunConfig def = parse_run_config("{}");
    CHECK(def.seed == 7);
    CHECK(def.corpus.clips_per_style == 25);
    CHECK(def.weights.alpha == doctest::Approx(0.5f));
    CHECK(def.weights.alpha_tj == doctest::Approx(0.2f));
    CHECK(def.weights.beta == doctest::Approx(0.02f));
    CHECK(def.weights.skate_threshold == doctest::Approx(2.5f));
    CHECK(def.manifold.beta == doctest::Approx(def.weights.beta));
    CHECK(def.transfer.weights.alpha == doctest::Approx(def.weights.alpha));

    RunConfig cfg = parse_run_config(R"({
        "seed": 3,
        "corpus": {"clips_per_style": 4, "frames": 96, "val_fraction": 0.25},
        "fdelta": {"epochs": 2, "augment": false},
        "manifold": {"epochs": 1, "frame_level": true},
        "transfer": {"steps": 10, "lr": 1e-4},
        "classifier": {"gate": 0.9},
        "weights": {"alpha": 0.4, "beta": 0.05},
        "eval": {"pairs": 6, "tol_frames": 2}
    })");
    CHECK(cfg.corpus.clips_per_style == 4);
    CHECK(cfg.fdelta.augment == false);
    CHECK(cfg.manifold.frame_level == true);
    CHECK(cfg.manifold.beta == doctest::Approx(0.05f));
    CHECK(cfg.transfer.weights.alpha == doctest::Approx(0.4f));
    CHECK(cfg.eval.pairs == 6);
}

TEST_CASE("run config rejects malformed input") {
    CHECK(contains(error_message([] { parse_run_config("{\"sede\": 1}"); }), "unknown key"));
    CHECK(contains(
        error_message([] { parse_run_config("{\"corpus\": {\"frames\": \"many\"}}"); }),
        "bad value"));
    CHECK(contains(
        error_message([] { parse_run_config("{\"corpus\": {\"window\": 32}}"); }), "window"));
    CHECK(contains(error_message([] { parse_run_config("{\"transfer\": {\"steps\": 0}}"); }),
                   "steps"));
    CHECK_THROWS_AS((void)parse_run_config("[1,2]"), Error);
    CHECK_THROWS_AS((void)parse_run_config("{nope"), Error);
    CHECK(contains(
        error_message([] { parse_run_config("{\"weights\": {\"gamma\": 1.0}}"); }),
        "unknown key"));
}

TEST_CASE("seed override rebases every stage") {
    RunConfig cfg = parse_run_config("{}");
    apply_seed_override(cfg, 100);
    CHECK(cfg.seed == 100);
    CHECK(cfg.corpus.seed == 100);
    CHECK(cfg.fdelta.seed == 101);
    CHECK(cfg.manifold.seed == 102);
    CHECK(cfg.transfer.seed == 103);
    CHECK(cfg.classifier.seed == 104);
    CHECK(cfg.eval.seed == 105);
}
