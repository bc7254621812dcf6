#pragma once

#include "mstx/hip_contact.hpp"
#include "mstx/manifold.hpp"

#include <string>
#include <vector>

namespace mstx {

// Factor codes extracted by the three encoders. All share the downsampled
// time axis so contact and trajectory can be fused frame-aligned.
struct TransferCodes {
    Tensor z_s;  // (128, T') style feature map
    Tensor z_ct; // (64,  T') contact-timing feature map
    Tensor z_tj; // (64,  T') trajectory feature map
};

struct TransferOutput {
    Tensor feats; // (231, window) standardized features, hip rows = h_std
    Tensor h_std; // (3, window) predicted hip velocity, standardized
    Tensor z;     // manifold latent fed to the frozen decoder
    TransferCodes codes;
};

// Style-transfer generator: three conv encoders, AdaIN-modulated fusion, and
// a transformer head that predicts the hip velocity plus the manifold latent.
// The manifold decoder and f_delta stay frozen; they are passed in by
// reference and never updated here.
struct TransferModel {
    nn::Conv1d s1, s2, s3; // style: 231 -> 128, T/4
    nn::Conv1d c1, c2, c3; // contact: legs+hip rows -> 64, T/4
    nn::Conv1d t1, t2, t3; // trajectory: hip rows -> 64, T/4
    nn::Conv1d fuse1;      // 1x1 over concat(z_ct, z_tj)
    nn::Conv1d fuse2;      // k3
    nn::Dense ada1, ada2;  // z_s stats -> per-channel (mean, std) per AdaIN site
    Tensor head_pos;       // (T',128) learned positional term
    std::vector<nn::TransformerBlock> head; // 3 blocks, dim 128, 4 heads
    nn::Dense hip_head;    // 128 -> 12 per token, interleaved to (3, window)
    nn::Dense z_head;      // 128 -> 64 (pooled, or per token when frame-level)
    bool frame_level = false;
    int window = 64;

    static TransferModel init(Rng& rng, bool frame_level = false);

    int tokens() const { return window / 4; }

    // rows of the feature layout the contact encoder is allowed to see:
    // leg joint positions, leg joint velocities, hip velocity
    static const std::vector<int>& contact_rows();

    Tensor encode_style(const Tensor& x_std) const;      // (231,W) -> (128,T')
    Tensor encode_contact(const Tensor& x_std) const;    // (231,W) -> (64,T')
    Tensor encode_trajectory(const Tensor& h_std) const; // (3,W)   -> (64,T')

    TransferCodes codes(const Tensor& x_style, const Tensor& x_contact,
                        const Tensor& x_traj) const;
    // fuse + head + frozen manifold decode
    TransferOutput generate_codes(const ManifoldModel& man, const TransferCodes& c) const;
    TransferOutput generate(const ManifoldModel& man, const Tensor& x_style,
                            const Tensor& x_contact, const Tensor& x_traj) const;

    void collect(nn::NamedParams& out) const;
    void save(const std::string& path) const;
    static TransferModel load(const std::string& path);
};

struct TransferLossParts {
    float rec = 0.f, cyc = 0.f, style = 0.f, tj = 0.f, ctt = 0.f, total = 0.f;
};

// Channel Gram statistics of a (C,T) feature map: (f f^T) / (C*T). The
// style loss compares these between the stylized and style feature maps.
Tensor gram_matrix(const Tensor& f);

// L = L_rec + 0.5*(L_cyc + L_style + L_tj + L_ctt) on one (style, content)
// pair of standardized windows. ct_from_style picks the z_ct source of the
// synthesized motion used by the cycle and style terms. Any non-finite
// component aborts with its name.
struct TransferLossWeights {
    float alpha = 0.5f;    // cycle / style / trajectory / contact terms
    float alpha_tj = 0.2f; // projected-trajectory share of the trajectory term
};

Tensor transfer_loss(const TransferModel& model, const ManifoldModel& man,
                     const FDeltaModel& fdelta, const Tensor& x_s, const Tensor& x_c,
                     bool ct_from_style, TransferLossParts* parts = nullptr,
                     const TransferLossWeights& w = {});

struct TransferTrainConfig {
    int steps = 1200;
    int batch = 2;
    float lr = 2e-4f;
    float cross_style_prob = 0.9f;
    uint64_t seed = 3;
    int log_every = 25;
    TransferLossWeights weights;
};

struct TransferCurvePoint {
    int step = 0;
    TransferLossParts parts;
};

struct TransferTrainResult {
    TransferModel model;
    TransferLossParts final_parts; // mean over the last log window
    std::vector<TransferCurvePoint> curve;
};

// Adam on the transfer parameters only. Pairs are sampled from the train
// split, cross-style with probability cross_style_prob; the z_ct source
// alternates every step. Verifies by checksum that the frozen manifold and
// f_delta did not drift; drift is a hard failure.
TransferTrainResult train_transfer(const Corpus& corpus, const ManifoldModel& man,
                                   const FDeltaModel& fdelta,
                                   const TransferTrainConfig& cfg);

// Standardized feature window -> world-space clip (velocity reconstruction).
MotionClip features_to_clip(const ManifoldModel& man, const Tensor& feats_std);

// Window-level style transfer over a full-length content clip: content is cut
// into sliding windows (stride window-16), each transferred with the style
// window, and the outputs crossfaded in feature space. Returns raw features.
Tensor transfer_features(const TransferModel& model, const ManifoldModel& man,
                         const Tensor& style_raw, const Tensor& content_raw);

MotionClip transfer_clip(const TransferModel& model, const ManifoldModel& man,
                         const MotionClip& style, const MotionClip& content);

} // namespace mstx
