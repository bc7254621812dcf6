#pragma once

#include "mstx/dataset.hpp"
#include "mstx/kinematics.hpp"
#include "mstx/nn.hpp"

namespace mstx {

// Learned hip-velocity -> contact-probability map. Consumes raw velocities
// (cm/frame, unstandardized) so a single scale factor acts uniformly.
struct FDeltaModel {
    nn::Conv1d c1, c2, c3, c4;
    int version = 1;

    static FDeltaModel init(Rng& rng);

    // dilations 1,2,4,2 with kernel 7: 1 + 6*(1+2+4+2)
    int receptive_field() const;

    // (3, T) raw hip velocity -> (2, T) pre-sigmoid logits; differentiable
    Tensor logits(const Tensor& h) const;
    // (3, T) -> (2, T) probabilities
    Tensor forward(const Tensor& h) const;
    ContactSeq predict(const HipVelocitySeq& h) const;

    void collect(nn::NamedParams& out) const;
    void save(const std::string& path) const;
    static FDeltaModel load(const std::string& path);
};

// One scalar multiplies the whole sequence; labels are unaffected.
Tensor augment_scale(const Tensor& h, float factor);

struct FdeltaTrainConfig {
    int epochs = 30;
    int batch = 16;
    float lr = 1e-3f;
    uint64_t seed = 1;
    bool augment = true;
    float scale_lo = 0.5f;
    float scale_hi = 2.0f;
};

struct FdeltaTrainResult {
    FDeltaModel model;
    float final_loss = 0.f;
    float val_accuracy = 0.f; // per-frame vs the corpus labels, val split
    nn::TrainCurve curve;
};

// BCE on the corpus windows' kinematic labels. Throws on divergence
// (non-finite loss or gradients).
FdeltaTrainResult train_fdelta(const Corpus& corpus, const FdeltaTrainConfig& cfg);

} // namespace mstx
