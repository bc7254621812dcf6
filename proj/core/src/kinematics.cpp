#include "mstx/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace mstx {

std::vector<Vec3> fk_frame(const Skeleton& sk, const Vec3& root_pos,
                           const std::vector<Quat>& local_rot) {
    std::vector<Vec3> pos;
    std::vector<Quat> wr;
    fk_frame_full(sk, root_pos, local_rot, pos, wr);
    return pos;
}

void fk_frame_full(const Skeleton& sk, const Vec3& root_pos,
                   const std::vector<Quat>& local_rot, std::vector<Vec3>& pos,
                   std::vector<Quat>& world_rot) {
    const int j = sk.size();
    if (int(local_rot.size()) != j) throw ShapeError("fk: rotation count mismatch");
    pos.resize(size_t(j));
    world_rot.resize(size_t(j));
    pos[0] = root_pos;
    world_rot[0] = local_rot[0];
    for (int i = 1; i < j; ++i) {
        const int p = sk.joints[size_t(i)].parent;
        world_rot[size_t(i)] = world_rot[size_t(p)] * local_rot[size_t(i)];
        pos[size_t(i)] =
            pos[size_t(p)] + world_rot[size_t(p)].rotate(sk.joints[size_t(i)].offset);
    }
}

std::vector<std::vector<Vec3>> fk(const MotionClip& clip) {
    std::vector<std::vector<Vec3>> out(static_cast<size_t>(clip.frames()));
    for (int t = 0; t < clip.frames(); ++t)
        out[size_t(t)] = fk_frame(*clip.skeleton, clip.root_pos[size_t(t)],
                                  clip.rot[size_t(t)]);
    return out;
}

HipVelocitySeq hip_local_velocity(const MotionClip& clip) {
    const int T = clip.frames();
    if (T < 2) throw Error("hip velocity needs at least 2 frames");
    HipVelocitySeq h;
    h.vel.resize(size_t(T));
    for (int t = 1; t < T; ++t) {
        const Vec3 d = clip.root_pos[size_t(t)] - clip.root_pos[size_t(t) - 1];
        const float psi = yaw_of(clip.rot[size_t(t)][0]);
        h.vel[size_t(t)] = yaw_quat(-psi).rotate(d);
    }
    h.vel[0] = h.vel[1];
    return h;
}

IntegratedHip integrate_hip(const HipVelocitySeq& h, const Vec3& p0, float yaw0) {
    IntegratedHip out;
    const int T = h.frames();
    out.pos.resize(size_t(T));
    out.yaw.resize(size_t(T));
    out.pos[0] = p0;
    out.yaw[0] = yaw0;
    for (int t = 1; t < T; ++t) {
        const Vec3& v = h.vel[size_t(t)];
        float yaw = out.yaw[size_t(t) - 1];
        if (std::sqrt(v.x * v.x + v.z * v.z) > kHeadingSpeedGate)
            yaw = wrap_angle(yaw + std::atan2(v.x, v.z) * kHeadingGain);
        out.yaw[size_t(t)] = yaw;
        out.pos[size_t(t)] = out.pos[size_t(t) - 1] + yaw_quat(yaw).rotate(v);
    }
    return out;
}

Trajectory proj(const std::vector<Vec3>& hip_positions) {
    Trajectory tr(hip_positions.size());
    for (size_t i = 0; i < hip_positions.size(); ++i)
        tr[i] = {hip_positions[i].x, hip_positions[i].z};
    return tr;
}

Trajectory proj(const HipVelocitySeq& h, const Vec3& p0, float yaw0) {
    return proj(integrate_hip(h, p0, yaw0).pos);
}

// ---------------------------------------------------------------------------
// contact labeling

namespace {

void cleanup_runs(std::vector<bool>& s, int min_run) {
    if (s.empty()) return;
    bool changed = true;
    while (changed) {
        changed = false;
        const int n = int(s.size());
        int start = 0;
        while (start < n) {
            int end = start;
            while (end < n && s[size_t(end)] == s[size_t(start)]) ++end;
            const int len = end - start;
            const bool has_prev = start > 0, has_next = end < n;
            if (len < min_run && (has_prev || has_next)) {
                // only flip runs that merge into equal-valued neighbors (or a
                // single neighbor at the sequence edge)
                if (!has_prev || !has_next ||
                    s[size_t(start) - 1] == s[size_t(end)]) {
                    const bool v = has_prev ? s[size_t(start) - 1] : s[size_t(end)];
                    for (int i = start; i < end; ++i) s[size_t(i)] = v;
                    changed = true;
                    break;
                }
            }
            start = end;
        }
    }
}

} // namespace

ContactSeq label_contacts(const MotionClip& clip, const ContactParams& p) {
    const int T = clip.frames();
    const auto positions = fk(clip);
    const Skeleton& sk = *clip.skeleton;
    const int heel[2] = {sk.left_foot, sk.right_foot};
    const int toe[2] = {sk.left_toe, sk.right_toe};

    auto min_disp = [&](int joint, int t) {
        // displacement toward the nearer neighbor frame, so a frame on a
        // stance boundary counts as still
        float d = 1e9f;
        if (t > 0)
            d = std::min(d, (positions[size_t(t)][size_t(joint)] -
                             positions[size_t(t) - 1][size_t(joint)])
                                .length());
        if (t + 1 < T)
            d = std::min(d, (positions[size_t(t) + 1][size_t(joint)] -
                             positions[size_t(t)][size_t(joint)])
                                .length());
        return d;
    };

    ContactSeq out;
    out.c.assign(size_t(T), {0.f, 0.f});
    for (int f = 0; f < 2; ++f) {
        std::vector<bool> on(static_cast<size_t>(T));
        for (int t = 0; t < T; ++t) {
            const float h = std::min(positions[size_t(t)][size_t(heel[f])].y,
                                     positions[size_t(t)][size_t(toe[f])].y);
            const float v = std::min(min_disp(heel[f], t), min_disp(toe[f], t));
            on[size_t(t)] = h < p.max_height && v < p.max_speed;
        }
        cleanup_runs(on, p.min_run);
        for (int t = 0; t < T; ++t) out.c[size_t(t)][size_t(f)] = on[size_t(t)] ? 1.f : 0.f;
    }
    return out;
}

// ---------------------------------------------------------------------------
// reconstruction

namespace {

std::vector<std::vector<int>> children_of(const Skeleton& sk) {
    std::vector<std::vector<int>> ch(static_cast<size_t>(sk.size()));
    for (int i = 1; i < sk.size(); ++i) ch[size_t(sk.joints[size_t(i)].parent)].push_back(i);
    return ch;
}

// world rotation aligning two rest directions to two world directions
bool triad(const Vec3& o1, const Vec3& o2, const Vec3& d1, const Vec3& d2, Quat& out) {
    const Vec3 u1 = o1.normalized();
    const Vec3 w1 = d1.normalized();
    Vec3 u2 = o2 - u1 * u1.dot(o2);
    Vec3 w2 = d2 - w1 * w1.dot(d2);
    if (u2.length() < 1e-5f || w2.length() < 1e-5f) return false;
    u2 = u2.normalized();
    w2 = w2.normalized();
    const Mat3 rest = Mat3::from_cols(u1, u2, u1.cross(u2));
    const Mat3 tgt = Mat3::from_cols(w1, w2, w1.cross(w2));
    out = (tgt * rest.transposed()).to_quat();
    return true;
}

// Solve local rotations so FK reproduces the given world joint positions.
// `base` seeds the root orientation (yaw frame); unresolvable joints fall
// back to `prev` (previous frame's locals).
std::vector<Quat> solve_rotations(const Skeleton& sk,
                                  const std::vector<std::vector<int>>& ch,
                                  const std::vector<Vec3>& pos, const Quat& base,
                                  const std::vector<Quat>* prev) {
    const int j = sk.size();
    std::vector<Quat> world(static_cast<size_t>(j));
    std::vector<Quat> local(static_cast<size_t>(j));
    for (int i = 0; i < j; ++i) {
        const int parent = sk.joints[size_t(i)].parent;
        const Quat parent_world = parent < 0 ? Quat{} : world[size_t(parent)];
        const Quat guess = i == 0 ? base : parent_world;
        Quat w = guess;
        const auto& kids = ch[size_t(i)];
        auto dir_to = [&](int k) { return pos[size_t(k)] - pos[size_t(i)]; };
        bool solved = false;
        if (kids.size() >= 2) {
            solved = triad(sk.joints[size_t(kids[0])].offset,
                           sk.joints[size_t(kids[1])].offset, dir_to(kids[0]),
                           dir_to(kids[1]), w);
        }
        if (!solved && !kids.empty()) {
            const Vec3 o = sk.joints[size_t(kids[0])].offset;
            const Vec3 d = dir_to(kids[0]);
            if (o.length() > 1e-5f && d.length() > 1e-4f) {
                w = rotation_between(guess.rotate(o), d) * guess;
                solved = true;
            }
        }
        if (!solved && !kids.empty() && prev) {
            // zero-length bone: keep the previous frame's rotation
            w = (parent < 0 ? Quat{} : world[size_t(parent)]) * (*prev)[size_t(i)];
        }
        world[size_t(i)] = w.normalized();
        local[size_t(i)] =
            parent < 0 ? world[size_t(i)]
                       : (parent_world.conjugate() * world[size_t(i)]).normalized();
    }
    return local;
}

} // namespace

MotionClip reconstruct(ReconMode mode, std::shared_ptr<const Skeleton> sk,
                       const PoseSeq& seq, float fps, const Vec3& p0, float yaw0) {
    const int T = seq.frames();
    const int J = sk->size();
    if (T < 2) throw Error("reconstruct: need at least 2 frames");
    if (int(seq.hip_vel.frames()) != T || int(seq.pos.size()) != T ||
        int(seq.vel.size()) != T)
        throw ShapeError("reconstruct: feature blocks disagree on frame count");

    // facing per frame
    std::vector<float> psi(static_cast<size_t>(T));
    std::vector<Quat> root_world(static_cast<size_t>(T));
    if (mode == ReconMode::velocity) {
        const IntegratedHip ih = integrate_hip(seq.hip_vel, p0, yaw0);
        for (int t = 0; t < T; ++t) psi[size_t(t)] = ih.yaw[size_t(t)];
    } else {
        float prev = yaw0;
        for (int t = 0; t < T; ++t) {
            root_world[size_t(t)] = (yaw_quat(prev) * seq.rot[size_t(t)][0]).normalized();
            psi[size_t(t)] = yaw_of(root_world[size_t(t)]);
            prev = psi[size_t(t)];
        }
    }

    // hip world track
    std::vector<Vec3> hip(static_cast<size_t>(T));
    hip[0] = p0;
    for (int t = 1; t < T; ++t)
        hip[size_t(t)] =
            hip[size_t(t) - 1] + yaw_quat(psi[size_t(t)]).rotate(seq.hip_vel.vel[size_t(t)]);
    if (mode == ReconMode::position)
        for (int t = 0; t < T; ++t) hip[size_t(t)].y = seq.pos[size_t(t)][0].y;

    MotionClip clip;
    clip.skeleton = sk;
    clip.fps = fps;
    clip.root_pos = hip;
    clip.rot.assign(size_t(T), std::vector<Quat>(size_t(J)));

    if (mode == ReconMode::rotation) {
        for (int t = 0; t < T; ++t) {
            clip.rot[size_t(t)][0] = root_world[size_t(t)];
            for (int i = 1; i < J; ++i)
                clip.rot[size_t(t)][size_t(i)] = seq.rot[size_t(t)][size_t(i)].normalized();
        }
        return clip;
    }

    // world joint positions
    std::vector<std::vector<Vec3>> pos(static_cast<size_t>(T), std::vector<Vec3>(static_cast<size_t>(J)));
    if (mode == ReconMode::position) {
        for (int t = 0; t < T; ++t) {
            const Vec3 ground{hip[size_t(t)].x, 0.f, hip[size_t(t)].z};
            const Quat r = yaw_quat(psi[size_t(t)]);
            for (int i = 0; i < J; ++i)
                pos[size_t(t)][size_t(i)] = ground + r.rotate(seq.pos[size_t(t)][size_t(i)]);
        }
    } else {
        const Vec3 ground0{hip[0].x, 0.f, hip[0].z};
        const Quat r0 = yaw_quat(psi[0]);
        for (int i = 0; i < J; ++i) pos[0][size_t(i)] = ground0 + r0.rotate(seq.pos[0][size_t(i)]);
        for (int t = 1; t < T; ++t) {
            const Quat r = yaw_quat(psi[size_t(t)]);
            for (int i = 0; i < J; ++i)
                pos[size_t(t)][size_t(i)] =
                    pos[size_t(t) - 1][size_t(i)] + r.rotate(seq.vel[size_t(t)][size_t(i)]);
        }
        // the hip track is authoritative for the root
        for (int t = 0; t < T; ++t) pos[size_t(t)][0] = hip[size_t(t)];
    }

    const auto ch = children_of(*sk);
    std::vector<Quat> prev;
    for (int t = 0; t < T; ++t) {
        clip.rot[size_t(t)] = solve_rotations(*sk, ch, pos[size_t(t)],
                                              yaw_quat(psi[size_t(t)]),
                                              t > 0 ? &prev : nullptr);
        prev = clip.rot[size_t(t)];
    }
    return clip;
}

// ---------------------------------------------------------------------------
// two-bone IK and foot locking

TwoBoneSolution two_bone_ik(const Vec3& hip, float l1, float l2, const Vec3& target,
                            const Vec3& pole) {
    TwoBoneSolution sol;
    Vec3 to = target - hip;
    float dist = to.length();
    const float lo = std::fabs(l1 - l2) + 1e-3f;
    const float hi = l1 + l2 - 1e-3f;
    sol.clamped = dist < lo || dist > hi;
    dist = std::clamp(dist, lo, hi);
    const Vec3 n = to.normalized({0.f, -1.f, 0.f});
    Vec3 perp = pole - n * n.dot(pole);
    if (perp.length() < 1e-5f) {
        Vec3 alt = n.cross({0.f, 1.f, 0.f});
        if (alt.length() < 1e-5f) alt = {0.f, 0.f, 1.f};
        perp = alt;
    }
    perp = perp.normalized();

    const float cos_a = std::clamp((l1 * l1 + dist * dist - l2 * l2) / (2.f * l1 * dist),
                                   -1.f, 1.f);
    const float sin_a = std::sqrt(std::max(0.f, 1.f - cos_a * cos_a));
    sol.mid_pos = hip + n * (l1 * cos_a) + perp * (l1 * sin_a);

    const Vec3 dir1 = ((sol.mid_pos - hip) * (1.f / l1)).normalized({0.f, -1.f, 0.f});
    const Vec3 end = hip + n * dist;
    const Vec3 dir2 = ((end - sol.mid_pos) * (1.f / l2)).normalized({0.f, -1.f, 0.f});
    const Vec3 axis = perp.cross(n).normalized({1.f, 0.f, 0.f});

    sol.upper_world = Mat3::from_cols(axis, -dir1, axis.cross(-dir1)).to_quat();
    sol.lower_world = Mat3::from_cols(axis, -dir2, axis.cross(-dir2)).to_quat();
    return sol;
}

MotionClip ik_footlock(const MotionClip& clip, const ContactSeq& contacts,
                       int blend_frames) {
    const int T = clip.frames();
    if (contacts.frames() != T) throw ShapeError("ik_footlock: contact length mismatch");
    const Skeleton& sk = *clip.skeleton;

    // original FK
    std::vector<std::vector<Vec3>> pos(static_cast<size_t>(T));
    std::vector<std::vector<Quat>> wrot(static_cast<size_t>(T));
    for (int t = 0; t < T; ++t)
        fk_frame_full(sk, clip.root_pos[size_t(t)], clip.rot[size_t(t)], pos[size_t(t)],
                      wrot[size_t(t)]);

    MotionClip out = clip;
    for (int side = 0; side < 2; ++side) {
        const LegChain leg = leg_chain(sk, side == 0);
        const float l1 = sk.joints[size_t(leg.leg)].offset.length();
        const float l2 = sk.joints[size_t(leg.foot)].offset.length();

        // per-frame correction offsets for the ankle
        std::vector<Vec3> delta(static_cast<size_t>(T));
        std::vector<float> weight(size_t(T), 0.f);
        int t = 0;
        while (t < T) {
            if (!contacts.on(t, side)) {
                ++t;
                continue;
            }
            int end = t;
            while (end < T && contacts.on(end, side)) ++end;
            const Vec3 anchor = pos[size_t(t)][size_t(leg.foot)];
            for (int i = t; i < end; ++i) {
                delta[size_t(i)] = anchor - pos[size_t(i)][size_t(leg.foot)];
                weight[size_t(i)] = 1.f;
            }
            // ease the final correction out over the following swing
            const Vec3 d_out = anchor - pos[size_t(end) - 1][size_t(leg.foot)];
            for (int k = 1; k <= blend_frames && end - 1 + k < T; ++k) {
                const int i = end - 1 + k;
                if (contacts.on(i, side)) break;
                const float w = 1.f - float(k) / float(blend_frames + 1);
                if (w > weight[size_t(i)]) {
                    weight[size_t(i)] = w;
                    delta[size_t(i)] = d_out;
                }
            }
            // no ease-in needed: the anchor is the touch-frame position, so
            // the correction starts at zero by construction
            t = end;
        }

        for (int f = 0; f < T; ++f) {
            if (weight[size_t(f)] <= 0.f) continue;
            const Vec3 target =
                pos[size_t(f)][size_t(leg.foot)] + delta[size_t(f)] * weight[size_t(f)];
            const Vec3 hip_pos = pos[size_t(f)][size_t(leg.upleg)];
            const Vec3 fwd = clip.rot[size_t(f)][0].rotate({0.f, 0.f, 1.f});
            const auto sol = two_bone_ik(hip_pos, l1, l2, target, {fwd.x, 0.f, fwd.z});

            const Quat hip_world = wrot[size_t(f)][0];
            out.rot[size_t(f)][size_t(leg.upleg)] =
                (hip_world.conjugate() * sol.upper_world).normalized();
            out.rot[size_t(f)][size_t(leg.leg)] =
                (sol.upper_world.conjugate() * sol.lower_world).normalized();
            // keep the foot's original world orientation
            out.rot[size_t(f)][size_t(leg.foot)] =
                (sol.lower_world.conjugate() * wrot[size_t(f)][size_t(leg.foot)])
                    .normalized();
        }
    }
    return out;
}

} // namespace mstx
