#pragma once

#include <iosfwd>
#include <string>

#include "mstx/motion.hpp"

namespace mstx {

struct BvhResult {
    std::shared_ptr<Skeleton> skeleton;
    MotionClip clip;
};

// Parses HIERARCHY + MOTION. Euler channels (any axis order) become unit
// quaternions; offsets are taken as cm; fps = 1/FrameTime. Errors carry the
// offending line number.
BvhResult parse_bvh(const std::string& text);
BvhResult parse_bvh_file(const std::string& path);

// Serializes with the skeleton's recorded euler_order for every joint and
// XYZ position channels on the root.
std::string write_bvh(const Skeleton& sk, const MotionClip& clip);
void write_bvh_file(const std::string& path, const Skeleton& sk, const MotionClip& clip);

} // namespace mstx
