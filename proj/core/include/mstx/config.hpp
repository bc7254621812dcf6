#pragma once

#include "mstx/dataset.hpp"
#include "mstx/hip_contact.hpp"
#include "mstx/manifold.hpp"
#include "mstx/metrics.hpp"
#include "mstx/transfer.hpp"

#include <string>

namespace mstx {

// Shared loss and metric constants. alpha scales the cycle/style/trajectory/
// contact losses against reconstruction, alpha_tj the integrated-trajectory
// share, beta the KL weight, lambda/sigma the contact-optimization terms,
// skate_threshold the ground-proximity height H in cm.
struct LossWeights {
    float alpha = 0.5f;
    float alpha_tj = 0.2f;
    float beta = 0.02f;
    float lambda = 1.f;
    float sigma = 0.1f;
    float skate_threshold = 2.5f;
};

struct EvalConfig {
    int tol_frames = 3; // contact event matching tolerance
    int pairs = 24;     // style/content pairs sampled for the report
    uint64_t seed = 5;
};

// Everything a run needs; defaults reproduce the acceptance settings. JSON
// files may override any subset; unknown keys anywhere are errors.
struct RunConfig {
    uint64_t seed = 7; // base seed, see apply_seed_override
    CorpusConfig corpus;
    FdeltaTrainConfig fdelta;
    ManifoldTrainConfig manifold;
    TransferTrainConfig transfer;
    ClassifierTrainConfig classifier;
    LossWeights weights;
    EvalConfig eval;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Rebases every stage seed on the given value (corpus = seed, fdelta = +1,
// manifold = +2, transfer = +3, classifier = +4, eval = +5).
void apply_seed_override(RunConfig& cfg, uint64_t seed);

} // namespace mstx
