#pragma once

#include "mstx/dataset.hpp"
#include "mstx/nn.hpp"

#include <string>

namespace mstx {

struct ManifoldLatent {
    Tensor mu;     // (64), or (T', 64) when frame-level
    Tensor logvar; // same shape as mu
    Tensor z;      // mu + exp(logvar/2) * eps, or mu when no eps is given
};

// Variational pose-manifold over standardized feature windows. The encoder
// downsamples time by 4; the decoder is conditioned on the hip-velocity rows
// and copies them through unchanged, so pose decoding never alters the hip.
struct ManifoldModel {
    nn::Conv1d e1, e2, e3;   // 231->96 s2, 96->128 s2, 128->128 s1
    Tensor pool_q;           // (1,128) learned pooling query
    nn::Dense mu_head, lv_head;
    nn::Dense z_in;          // latent -> T'x128 decoder memory
    Tensor dec_pos;          // (window,128) positional term for the queries
    nn::Dense h_embed;       // 3 -> 128 per-frame hip embedding
    std::vector<nn::TransformerBlock> blocks;
    nn::Dense out_head;      // 128 -> 231 per frame
    Normalizer norm;
    float beta = 0.02f;
    bool frame_level = false;
    int window = 64;
    int latent_dim = 64;

    static ManifoldModel init(Rng& rng, bool frame_level = false);

    int tokens() const { return window / 4; }

    // (231,window) standardized -> (128,window/4) feature map
    Tensor encode_map(const Tensor& x_std) const;
    // eps: fixed standard-normal sample shaped like mu; null decodes the mean
    ManifoldLatent encode(const Tensor& x_std, const Tensor* eps = nullptr) const;
    // z + standardized hip rows (3,window) -> standardized features (231,window);
    // rows [228,231) of the output are the conditioning hip verbatim
    Tensor decode(const Tensor& z, const Tensor& h_std) const;
    // 0.5 * sum(mu^2 + e^lv - lv - 1), averaged over tokens when frame-level
    Tensor kl(const ManifoldLatent& lat) const;

    void collect(nn::NamedParams& out) const; // trainable parameters only
    void save(const std::string& path) const; // parameters + normalizer + flags
    static ManifoldModel load(const std::string& path);
};

struct ManifoldTrainConfig {
    int epochs = 25;
    int batch = 8;
    float lr = 1e-3f;
    float beta = 0.02f;
    uint64_t seed = 2;
    bool frame_level = false;
};

struct ManifoldTrainResult {
    ManifoldModel model;
    float final_loss = 0.f;
    float final_recon = 0.f;
    float final_kl = 0.f;
    nn::TrainCurve curve;
};

// L1 reconstruction + beta * KL with per-step reparameterization noise.
// Non-finite loss or gradients abort with an error.
ManifoldTrainResult train_manifold(const Corpus& corpus, const ManifoldTrainConfig& cfg);

// Encode with the mean latent and decode back, preserving the hip rows.
// Inputs longer than the window are processed as sliding windows (stride
// window-16) and crossfaded over the 16-frame overlap in feature space.
// Raw features in, raw features out.
Tensor manifold_project_features(const ManifoldModel& m, const Tensor& raw);

// featurize -> project -> velocity-mode reconstruction
MotionClip manifold_project(const ManifoldModel& m, const MotionClip& clip);

} // namespace mstx
