#pragma once

#include <array>

#include "mstx/motion.hpp"

namespace mstx {

// Heading recurrence for integrating yaw from local hip velocity:
// yaw(t) = yaw(t-1) + atan2(v.x, v.z) * kHeadingGain whenever the ground
// speed exceeds kHeadingSpeedGate. This inverts the facing model used when
// generating data (facing = exponential smoothing of the velocity direction
// over tau = 5 frames), so integration reproduces the generator's facing
// exactly; the gate keeps near-stationary frames from spinning the heading.
inline constexpr float kHeadingGain = 0.25f;
inline constexpr float kHeadingSpeedGate = 0.5f; // cm/frame, ground-plane speed

// ---------------------------------------------------------------------------
// forward kinematics

std::vector<Vec3> fk_frame(const Skeleton& sk, const Vec3& root_pos,
                           const std::vector<Quat>& local_rot);
void fk_frame_full(const Skeleton& sk, const Vec3& root_pos,
                   const std::vector<Quat>& local_rot, std::vector<Vec3>& pos,
                   std::vector<Quat>& world_rot);
std::vector<std::vector<Vec3>> fk(const MotionClip& clip); // T x J world positions

// ---------------------------------------------------------------------------
// hip velocity and trajectories

struct HipVelocitySeq {
    std::vector<Vec3> vel; // cm/frame, yaw-local (x left, y up, z forward)
    int frames() const { return int(vel.size()); }
};

// World hip displacement rotated into the current frame's yaw-only facing
// frame; vel[0] := vel[1].
HipVelocitySeq hip_local_velocity(const MotionClip& clip);

struct IntegratedHip {
    std::vector<Vec3> pos;  // world positions
    std::vector<float> yaw; // facing per frame
};
// Forward-Euler integration with the heading recurrence above. pos[0] = p0
// and yaw[0] = yaw0; vel[0] is the forward-difference duplicate and moves
// nothing.
IntegratedHip integrate_hip(const HipVelocitySeq& h, const Vec3& p0 = {},
                            float yaw0 = 0.f);

using Trajectory = std::vector<std::array<float, 2>>; // ground-plane (x, z)

Trajectory proj(const std::vector<Vec3>& hip_positions);
Trajectory proj(const HipVelocitySeq& h, const Vec3& p0 = {}, float yaw0 = 0.f);

// ---------------------------------------------------------------------------
// contact labeling

struct ContactParams {
    float max_height = 5.f;   // cm
    float max_speed = 1.f;    // cm/frame
    int min_run = 3;          // frames, morphological cleanup
};
ContactSeq label_contacts(const MotionClip& clip, const ContactParams& p = {});

// ---------------------------------------------------------------------------
// reconstruction

// Decoded network output per the feature layout (dataset module unpacks the
// raw feature matrix into this).
struct PoseSeq {
    std::vector<std::vector<Quat>> rot;  // T x J local; root encodes yaw delta
    std::vector<std::vector<Vec3>> pos;  // T x J yaw-local, rel. hip ground point
    std::vector<std::vector<Vec3>> vel;  // T x J yaw-local, cm/frame
    HipVelocitySeq hip_vel;              // dedicated conditioning channels

    int frames() const { return int(rot.size()); }
};

enum class ReconMode { rotation, position, velocity };

MotionClip reconstruct(ReconMode mode, std::shared_ptr<const Skeleton> sk,
                       const PoseSeq& seq, float fps = 30.f, const Vec3& p0 = {},
                       float yaw0 = 0.f);

// ---------------------------------------------------------------------------
// two-bone IK and contact-based foot locking

struct TwoBoneSolution {
    Quat upper_world;  // world rotation of the thigh segment (rest dir -y)
    Quat lower_world;  // world rotation of the calf segment
    Vec3 mid_pos;      // knee position
    bool clamped = false;
};

// Solves hip->knee->ankle for an ankle target; the knee bends toward `pole`.
// Unreachable targets are clamped to the leg's reach.
TwoBoneSolution two_bone_ik(const Vec3& hip, float len_upper, float len_lower,
                            const Vec3& target, const Vec3& pole);

// Pins each foot to its position at contact-run start, with a 5-frame blend
// into and out of every run.
MotionClip ik_footlock(const MotionClip& clip, const ContactSeq& contacts,
                       int blend_frames = 5);

} // namespace mstx
