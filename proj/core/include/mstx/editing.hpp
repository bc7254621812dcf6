#pragma once

#include "mstx/transfer.hpp"

#include <array>
#include <string>
#include <vector>

namespace mstx {

enum class CodeKind { style, contact, trajectory };

// Linear interpolation of one factor code; the other two stay a's. t=0
// returns a's codes verbatim and t=1 substitutes b's code, both bitwise.
TransferCodes lerp_codes(const TransferCodes& a, const TransferCodes& b, CodeKind kind,
                         float t);

// Codes from A (the content source) with one factor pulled toward B.
TransferOutput interp_factor(const TransferModel& model, const ManifoldModel& man,
                             CodeKind kind, const Tensor& xa_std, const Tensor& xb_std,
                             float t);

// Rescales the hip velocity magnitude before the frozen decode. s=1 decodes
// the unmodified hip and is bit-identical to the base generation.
MotionClip scale_hip(const ManifoldModel& man, const Tensor& z, const Tensor& h_std,
                     float s);

// Decodes with a caller-supplied raw hip-velocity sequence (3,window).
MotionClip replace_hip(const ManifoldModel& man, const Tensor& z, const Tensor& h_new_raw);

struct ContactOptimConfig {
    float lambda = 1.f;  // trajectory keep weight
    float sigma = 0.1f;  // proximity regularizer
    int steps = 300;
    float lr = 0.01f;
    float early_stop_rel = 1e-5f;
    int patience = 30; // consecutive steps without relative improvement
};

struct ContactOptimResult {
    Tensor h;          // (3,T) optimized hip velocity, best iterate
    float initial = 0.f;
    float final = 0.f; // objective of h; always <= initial
    int steps_run = 0;
};

// Gradient descent on
//   lambda*|proj(h') - proj(h)|^2 + |fdelta(h') - c_t|^2 + sigma*|h' - h|^2
// initialized at h' = h; returns the best iterate. Non-finite objective or
// gradients abort with an error.
ContactOptimResult optimize_contact(const FDeltaModel& fdelta, const Tensor& h_raw,
                                    const ContactSeq& target,
                                    const ContactOptimConfig& cfg = {});

// Run-length contact construction: runs are (foot, start, end) with end
// exclusive; frames outside every run are no-contact.
ContactSeq contacts_from_runs(int frames, const std::vector<std::array<int, 3>>& runs);

// One editing request, parsed from JSON. Exactly the keys required by op are
// allowed; anything unknown or missing is a parse error.
struct EditSpec {
    std::string op; // interp_style | interp_contact | interp_trajectory |
                    // scale_hip | replace_hip | optimize_contact
    float factor = 0.f;
    float scale = 1.f;
    std::string a, b;            // interpolation sources (clip paths)
    std::string style, content;  // generation sources (clip paths)
    std::string hip;             // hip source for replace_hip / optimize_contact
    std::vector<std::array<int, 3>> desired;
    float lambda = 1.f, sigma = 0.1f;
};

EditSpec parse_edit_spec(const std::string& json_text);

} // namespace mstx
