#pragma once

#include "mstx/dataset.hpp"
#include "mstx/hip_contact.hpp"
#include "mstx/kinematics.hpp"
#include "mstx/nn.hpp"

#include <string>
#include <vector>

namespace mstx {

// ---------------------------------------------------------------------------
// contact precision / recall

struct ContactPR {
    float precision = 1.f;
    float recall = 1.f;
    int matched = 0;
    int predicted = 0;  // predicted change events
    int reference = 0;  // reference change events
    bool starred = false; // reference came from f_delta, not ground truth
};

// Greedy one-to-one matching of time-ordered event frames within +-tol;
// the per-(foot, type) bucket rule used by contact_pr.
int greedy_event_matches(const std::vector<int>& predicted,
                         const std::vector<int>& reference, int tol);

// Greedy one-to-one matching of contact change events of the same foot and
// type within +-tol frames. Empty sides count as perfect (0/0 -> 1).
ContactPR contact_pr(const ContactSeq& predicted, const ContactSeq& reference,
                     int tol = 3);

// Reference replaced by f_delta's prediction on the hip velocity (the starred
// convention for motions without ground-truth contacts).
ContactPR contact_pr_star(const ContactSeq& predicted, const FDeltaModel& fdelta,
                          const HipVelocitySeq& h, int tol = 3);

// ---------------------------------------------------------------------------
// foot skating

// clamp(2 - 2^(h/H), 0, 1): 1 on the ground, 0 at height H and above.
float skate_weight(float height_cm, float H = 2.5f);

// Mean horizontal foot speed (cm/frame) weighted by ground proximity,
// averaged over (joint, frame) samples with nonzero weight. Evaluated at the
// foot and toe joints of both legs.
float foot_skate(const MotionClip& clip, float H = 2.5f);

// ---------------------------------------------------------------------------
// distribution distance over joint velocities

// Frechet distance between Gaussians given directly: |mu_a - mu_b|^2 +
// Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2). Covariances are row-major (d,d),
// symmetrized internally; negative eigenvalues clip to zero.
double fmd_gaussian(const std::vector<double>& mu_a, const std::vector<double>& cov_a,
                    const std::vector<double>& mu_b, const std::vector<double>& cov_b);

// Fits mean and covariance (unbiased, n-1) per set of d-dimensional samples.
double fmd_samples(const std::vector<std::vector<float>>& a,
                   const std::vector<std::vector<float>>& b);

// Per-frame yaw-local joint velocity vectors of every clip, pooled per set.
// Each set needs at least two clips.
double fmd(const std::vector<MotionClip>& a, const std::vector<MotionClip>& b);

// ---------------------------------------------------------------------------
// trajectory error

struct TrajectoryError {
    float xz_cm = 0.f;     // mean per-frame ground-plane distance
    float angle_rad = 0.f; // mean |tangent direction difference|
};

// Canonicalizes each track to start at the origin facing yaw 0, then compares
// frame-wise. Tangent samples where either path moves less than
// min_step cm/frame are skipped.
TrajectoryError trajectory_error(const Trajectory& out, float out_yaw0,
                                 const Trajectory& ref, float ref_yaw0,
                                 float min_step = 0.05f);

// Hip ground tracks of two clips; each is aligned by its own first frame's
// root position and yaw.
TrajectoryError trajectory_error(const MotionClip& out, const MotionClip& ref,
                                 float min_step = 0.05f);

// ---------------------------------------------------------------------------
// style recognition accuracy

struct StyleClassifier {
    nn::Conv1d c1, c2;
    nn::Dense head;
    Normalizer norm;
    int styles = 0;
    int window = 64;
    bool validated = false;   // val accuracy >= 0.95 on held-out windows
    float val_accuracy = 0.f;

    static StyleClassifier init(Rng& rng, int styles, int window = 64);

    Tensor logits(const Tensor& x_std) const; // (231,T) -> (styles)
    // Raw features of any length; windows are classified jointly by summing
    // logits (stride = window, last window end-aligned).
    int classify(const Tensor& raw) const;

    void collect(nn::NamedParams& out) const;
    void save(const std::string& path) const;
    static StyleClassifier load(const std::string& path);
};

struct ClassifierTrainConfig {
    int epochs = 20;
    int batch = 16;
    float lr = 1e-3f;
    uint64_t seed = 4;
    float gate = 0.95f; // validation accuracy required before SA use
};

struct ClassifierTrainResult {
    StyleClassifier model;
    float val_accuracy = 0.f;
    nn::TrainCurve curve;
};

// Cross-entropy over the corpus train windows; sets validated when the val
// split accuracy reaches the gate. Throws on divergence.
ClassifierTrainResult train_classifier(const Corpus& corpus,
                                       const ClassifierTrainConfig& cfg);

// Fraction classified as the intended label. Throws unless the classifier
// passed its validation gate.
float style_accuracy(const StyleClassifier& cls, const std::vector<Tensor>& raw_feats,
                     const std::vector<int>& labels);
float style_accuracy(const StyleClassifier& cls, const std::vector<MotionClip>& clips,
                     const std::vector<int>& labels);

} // namespace mstx
