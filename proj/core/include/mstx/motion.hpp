#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "mstx/skeleton.hpp"

namespace mstx {

struct MotionClip {
    std::shared_ptr<const Skeleton> skeleton;
    float fps = 30.f;
    std::vector<Vec3> root_pos;          // T, world cm
    std::vector<std::vector<Quat>> rot;  // T x J local unit quaternions
    int style_label = -1;

    int frames() const { return int(root_pos.size()); }
    int joints() const { return skeleton ? skeleton->size() : 0; }

    // unit quats within 1e-4, T >= 2, consistent row widths
    void validate() const;

    MotionClip window(int start, int len) const;
};

struct ContactEvent {
    int frame = 0;
    int foot = 0;    // 0 left, 1 right
    bool touch = false; // touch-down if true, lift-off otherwise
};

struct ContactSeq {
    std::vector<std::array<float, 2>> c; // T x (left, right), values in [0,1]

    int frames() const { return int(c.size()); }
    bool on(int t, int foot) const { return c[size_t(t)][size_t(foot)] > 0.5f; }

    // transitions of the thresholded sequence, ordered by frame
    std::vector<ContactEvent> change_events() const;

    static ContactSeq zeros(int T);
};

struct StyleParams {
    std::string name = "neutral";
    int label = 0;
    float stride_length = 60.f; // cm per gait cycle
    float cadence = 1.f;        // gait cycles per second (per foot)
    float knee_lift = 12.f;     // swing apex raise, cm
    float torso_bend = 0.f;     // forward pitch, degrees
    float speed = 60.f;         // cm/s along the path
    float arm_swing = 25.f;     // degrees

    void validate() const;
};

} // namespace mstx
