#pragma once

#include "mstx/motion.hpp"

#include <cstdint>
#include <vector>

namespace mstx {

// Ground path the walk follows: heading0 is the initial travel direction
// (radians, 0 = +z) and turn_rate bends it by that many radians per frame.
struct GaitPath {
    float heading0 = 0.f;
    float turn_rate = 0.f;
};

struct GaitSample {
    MotionClip clip;
    ContactSeq contacts;
};

// Procedural walk generator. Produces a clip plus the exact stance windows it
// planted the feet with. Deterministic in (params, frames, seed, path).
// Throws Error when the requested gait is infeasible (stride beyond leg
// reach, or fewer than two gait cycles fit in `frames`).
GaitSample synth_gait(const StyleParams& params, int frames, uint64_t seed,
                      const GaitPath& path = {});

// The eight built-in styles; index == StyleParams::label.
const std::vector<StyleParams>& style_presets();

// One shared rig for everything the generator produces.
std::shared_ptr<const Skeleton> shared_humanoid19();

} // namespace mstx
