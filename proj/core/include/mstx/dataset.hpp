#pragma once

#include "mstx/gait.hpp"
#include "mstx/kinematics.hpp"
#include "mstx/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mstx {

// Per-frame feature column layout, all values in cm / cm-per-frame:
//   [0,114)   19 joints x 6D rotation; the root's rotation is expressed
//             relative to the previous frame's facing yaw
//   [114,171) 19 joints x world position relative to the hip ground point,
//             rotated into the facing frame; the root entry is (0, hip_y, 0)
//   [171,228) 19 joints x per-frame velocity in the facing frame (frame 0
//             copies frame 1)
//   [228,231) hip velocity in the facing frame (x left, y up, z forward)
namespace feat {
constexpr int kJoints = 19;
constexpr int kRotBase = 0;
constexpr int kPosBase = 114;
constexpr int kVelBase = 171;
constexpr int kHipBase = 228;
constexpr int kDim = 231;
inline int rot_row(int joint) { return kRotBase + 6 * joint; }
inline int pos_row(int joint) { return kPosBase + 3 * joint; }
inline int vel_row(int joint) { return kVelBase + 3 * joint; }
} // namespace feat

// clip -> (231, T) raw feature tensor (no gradient, unstandardized)
Tensor featurize(const MotionClip& clip);

// (231, T) raw features -> pose channels for kinematics::reconstruct
PoseSeq unpack_features(const Tensor& f);

// hip-velocity rows only, as a (3, T) tensor
Tensor hip_rows(const Tensor& f);

struct Normalizer {
    std::vector<float> mean, stdev; // per feature row; stdev floored at 1e-6
    void fit(const std::vector<Tensor>& raws);
    Tensor apply(const Tensor& raw) const;
    Tensor invert(const Tensor& standardized) const;
    // graph-friendly constants, rows restricted to [row0, row0+rows)
    Tensor mean_tensor(int row0, int rows) const;
    Tensor stdev_tensor(int row0, int rows) const;
};

struct ClipMeta {
    int style = 0;
    uint64_t seed = 0;
    GaitPath path;
    bool val = false;
    std::string file; // set when written to disk
};

struct Window {
    int clip = 0;
    int start = 0;
    int label = 0;
    Tensor raw;          // (231, window) features of this span
    ContactSeq contacts; // kinematic labels for the same span
};

struct CorpusConfig {
    int clips_per_style = 25;
    int frames = 240;
    int window = 64;
    int stride = 32;
    float val_fraction = 0.1f;
    uint64_t seed = 77;
};

struct Corpus {
    CorpusConfig cfg;
    std::vector<MotionClip> clips;
    std::vector<ContactSeq> gen_contacts; // generator stance windows per clip
    std::vector<ClipMeta> meta;
    std::vector<Window> train, val;
    Normalizer norm; // fit on train windows only
};

// Synthesizes clips_per_style clips for every preset, splits 90/10 by clip
// under the seed, cuts overlapping windows, and fits normalization on the
// train split. Throws when the split would leave either side empty.
Corpus build_corpus(const CorpusConfig& cfg);

// One clip per line: file, style name, label, seed, heading, turn, frames,
// split. Tab-separated with a # header; read_manifest accepts its own output.
void write_manifest(const std::string& path, const Corpus& corpus);
std::vector<ClipMeta> read_manifest(const std::string& path);

// Applies window_fn to sliding windows (stride = window - fade, last window
// end-aligned) and linearly crossfades each overlap in feature space.
// window_fn(start) must return a (rows, window) tensor. frames == window
// degenerates to a single call.
Tensor stitch_windows(int frames, int window, int fade,
                      const std::function<Tensor(int)>& window_fn);

} // namespace mstx
