#include "mstx/gait.hpp"

#include "mstx/kinematics.hpp"

#include <algorithm>
#include <cmath>

namespace mstx {

namespace {

constexpr float kFps = 30.f;
constexpr float kFootLateral = 9.f;  // matches upleg x offset
constexpr float kAnkleRest = 9.f;    // planted ankle height; toe sits at 2
constexpr float kHipBase = 88.f;
constexpr float kReachMargin = 0.985f;
constexpr float kFacingTau = 5.f;    // facing smooths velocity direction

// fraction of the cycle each foot stays planted; faster gaits spend less
float duty_factor(float cadence) {
    return std::clamp(0.80f - 0.20f * cadence, 0.52f, 0.70f);
}

Vec3 fwd_dir(float heading) { return {std::sin(heading), 0.f, std::cos(heading)}; }
Vec3 left_dir(float heading) { return {std::cos(heading), 0.f, -std::sin(heading)}; }

float smoothstep01(float u) { return u * u * (3.f - 2.f * u); }

// swing height profile; the 0.75 power widens the apex so takeoff and landing
// still clear the contact labeler's speed gate at low knee lift
float swing_lift(float u) {
    return std::pow(std::max(std::sin(kPi * u), 0.f), 0.75f);
}

struct Osc {
    float amp = 0.f, freq = 1.f, phase = 0.f; // degrees, Hz, radians
    float at(float t_sec) const {
        return amp * std::sin(2.f * kPi * freq * t_sec + phase);
    }
};

Osc make_osc(Rng& rng, float amp_lo, float amp_hi) {
    Osc o;
    o.amp = rng.uniform(amp_lo, amp_hi);
    o.freq = rng.uniform(0.6, 1.6);
    o.phase = rng.uniform(0.0, 2.0 * kPi);
    return o;
}

struct StanceWindow {
    int start = 0, end = 0; // frames, [start, end)
    Vec3 anchor;            // ankle world position while planted
    float yaw = 0.f;        // frozen foot yaw
};

struct FootTarget {
    Vec3 pos;
    float yaw = 0.f;
    bool planted = false;
};

FootTarget foot_target(const std::vector<StanceWindow>& w, int t, float lift) {
    size_t i = 0;
    while (i + 1 < w.size() && w[i + 1].start <= t) ++i;
    const StanceWindow& cur = w[i];
    if (t < cur.end || i + 1 == w.size())
        return {cur.anchor, cur.yaw, t >= cur.start && t < cur.end};
    const StanceWindow& nxt = w[i + 1];
    float span = float(nxt.start - cur.end);
    float u = (float(t - cur.end) + 0.5f) / span;
    float s = smoothstep01(u);
    Vec3 p = cur.anchor + (nxt.anchor - cur.anchor) * s;
    p.y = kAnkleRest + lift * swing_lift(u);
    return {p, cur.yaw + wrap_angle(nxt.yaw - cur.yaw) * s, false};
}

float lerp_at(const std::vector<float>& v, float t) {
    if (t <= 0.f) return v.front();
    if (t >= float(v.size() - 1)) return v.back();
    int i = int(t);
    float f = t - float(i);
    return v[size_t(i)] + (v[size_t(i) + 1] - v[size_t(i)]) * f;
}

Vec3 lerp_at(const std::vector<Vec3>& v, float t) {
    int last = int(v.size()) - 1;
    if (t <= 0.f) return v.front() + (v[1] - v[0]) * t;
    if (t >= float(last)) return v.back() + (v.back() - v[size_t(last) - 1]) * (t - float(last));
    int i = int(t);
    float f = t - float(i);
    return v[size_t(i)] + (v[size_t(i) + 1] - v[size_t(i)]) * f;
}

float angle_at(const std::vector<float>& psi, float t) {
    if (t <= 0.f) return psi.front();
    if (t >= float(psi.size() - 1)) return psi.back();
    int i = int(t);
    float f = t - float(i);
    return psi[size_t(i)] + wrap_angle(psi[size_t(i) + 1] - psi[size_t(i)]) * f;
}

} // namespace

std::shared_ptr<const Skeleton> shared_humanoid19() {
    static const std::shared_ptr<const Skeleton> sk =
        std::make_shared<const Skeleton>(humanoid19());
    return sk;
}

GaitSample synth_gait(const StyleParams& params, int frames, uint64_t seed,
                      const GaitPath& path) {
    params.validate();
    auto sk = shared_humanoid19();
    LegChain legs[2] = {leg_chain(*sk, true), leg_chain(*sk, false)};
    const float l1 = sk->joints[size_t(legs[0].leg)].offset.length();
    const float l2 = sk->joints[size_t(legs[0].foot)].offset.length();
    const float reach = kReachMargin * (l1 + l2);

    const float cycle = kFps / params.cadence; // frames per gait cycle
    const float stride = params.speed / params.cadence;
    if (params.stride_length >= l1 + l2 || stride >= l1 + l2)
        throw Error("style '" + params.name + "': stride " +
                    std::to_string(std::max(params.stride_length, stride)) +
                    " exceeds leg reach " + std::to_string(l1 + l2));
    if (float(frames) < 2.f * cycle)
        throw Error("clip too short: " + std::to_string(frames) +
                    " frames holds fewer than two gait cycles of " +
                    std::to_string(cycle));
    const float duty = duty_factor(params.cadence);
    const float step = params.speed / kFps;

    // ground path, extended past the clip so trailing swing targets exist
    const int cycles = int(std::ceil(float(frames) / cycle)) + 2;
    const int horizon = int(std::ceil(float(cycles + 1) * cycle)) + 2;
    std::vector<float> theta(size_t(horizon) + 1);
    std::vector<Vec3> ground(size_t(horizon) + 1);
    for (int t = 0; t <= horizon; ++t)
        theta[size_t(t)] = path.heading0 + path.turn_rate * float(t);
    ground[0] = {0.f, 0.f, 0.f};
    for (int t = 1; t <= horizon; ++t)
        ground[size_t(t)] = ground[size_t(t) - 1] + fwd_dir(theta[size_t(t)]) * step;

    // hip ground track: path plus lateral sway toward the planted foot
    const float sway_amp = 0.8f;
    const float bounce_amp = 1.2f + 0.04f * params.knee_lift;
    std::vector<Vec3> hip_xz(size_t(horizon) + 1);
    std::vector<float> bounce(size_t(horizon) + 1);
    for (int t = 0; t <= horizon; ++t) {
        float ph = float(t) / cycle;
        hip_xz[size_t(t)] = ground[size_t(t)] +
                            left_dir(theta[size_t(t)]) * (sway_amp * std::sin(2.f * kPi * ph));
        bounce[size_t(t)] = -bounce_amp * std::cos(4.f * kPi * ph);
    }

    // facing chases the hip velocity direction; reconstruction inverts this
    // recurrence exactly, gate included
    std::vector<float> psi(size_t(horizon) + 1);
    psi[0] = path.heading0 - path.turn_rate * (kFacingTau - 1.f);
    for (int t = 1; t <= horizon; ++t) {
        Vec3 v = hip_xz[size_t(t)] - hip_xz[size_t(t) - 1];
        float p = psi[size_t(t) - 1];
        if (std::sqrt(v.x * v.x + v.z * v.z) > kHeadingSpeedGate)
            p = wrap_angle(p + wrap_angle(std::atan2(v.x, v.z) - p) / kFacingTau);
        psi[size_t(t)] = p;
    }

    // integer stance windows per foot, with anchors sampled mid-stance
    std::vector<StanceWindow> windows[2];
    for (int f = 0; f < 2; ++f) {
        const float off = f == 0 ? 0.f : 0.5f;
        for (int k = -2; k <= cycles; ++k) {
            StanceWindow w;
            w.start = int(std::ceil((float(k) + off) * cycle - 1e-4f));
            w.end = int(std::ceil((float(k) + off + duty) * cycle - 1e-4f));
            if (w.end <= w.start) w.end = w.start + 1;
            float mid = (float(k) + off + 0.5f * duty) * cycle;
            float side = f == 0 ? kFootLateral : -kFootLateral;
            w.anchor = lerp_at(ground, mid) + left_dir(lerp_at(theta, mid)) * side;
            w.anchor.y = kAnkleRest;
            w.yaw = angle_at(psi, mid);
            windows[f].push_back(w);
        }
    }

    // ankle targets for every clip frame, then drop the hip until the most
    // stretched frame still reaches with margin
    std::vector<FootTarget> targets[2];
    const Vec3 upleg_off[2] = {sk->joints[size_t(legs[0].upleg)].offset,
                               sk->joints[size_t(legs[1].upleg)].offset};
    float hip_cap = 1e9f;
    for (int f = 0; f < 2; ++f) {
        targets[f].resize(size_t(frames));
        for (int t = 0; t < frames; ++t) {
            FootTarget ft = foot_target(windows[f], t, params.knee_lift);
            targets[f][size_t(t)] = ft;
            Vec3 u = hip_xz[size_t(t)] + yaw_quat(psi[size_t(t)]).rotate(upleg_off[f]);
            float dx = u.x - ft.pos.x, dz = u.z - ft.pos.z;
            float dh = std::sqrt(dx * dx + dz * dz);
            if (dh >= reach)
                throw Error("style '" + params.name + "': stride demands " +
                            std::to_string(dh) + " exceeding leg reach");
            float slack = std::sqrt(reach * reach - dh * dh);
            hip_cap = std::min(hip_cap,
                               ft.pos.y - upleg_off[f].y + slack - 0.5f - bounce[size_t(t)]);
        }
    }
    float hip_base = kHipBase - std::max(0.f, params.torso_bend - 10.f) * 0.35f;
    hip_base = std::min(hip_base, hip_cap);
    if (hip_base < 40.f)
        throw Error("style '" + params.name + "': gait infeasible, hip would sit at " +
                    std::to_string(hip_base));

    // seeded upper-body wiggle so equal params with different seeds differ
    Rng rng(seed);
    Osc w_spine = make_osc(rng, 0.4f, 1.4f);
    Osc w_chest = make_osc(rng, 0.4f, 1.4f);
    Osc w_neck = make_osc(rng, 0.6f, 1.8f);
    Osc w_sh[2] = {make_osc(rng, 0.5f, 1.5f), make_osc(rng, 0.5f, 1.5f)};
    Osc w_el[2] = {make_osc(rng, 0.5f, 2.0f), make_osc(rng, 0.5f, 2.0f)};

    MotionClip clip;
    clip.skeleton = sk;
    clip.fps = kFps;
    clip.style_label = params.label;
    clip.root_pos.resize(size_t(frames));
    clip.rot.assign(size_t(frames), std::vector<Quat>(size_t(sk->size())));

    const Vec3 x_axis{1.f, 0.f, 0.f}, y_axis{0.f, 1.f, 0.f}, z_axis{0.f, 0.f, 1.f};
    const int spine = sk->find("Spine"), chest = sk->find("Chest");
    const int neck = sk->find("Neck");
    const int sh[2] = {sk->find("LeftShoulder"), sk->find("RightShoulder")};
    const int el[2] = {sk->find("LeftElbow"), sk->find("RightElbow")};

    for (int t = 0; t < frames; ++t) {
        float sec = float(t) / kFps;
        float ph = float(t) / cycle;
        Vec3 hip = hip_xz[size_t(t)];
        hip.y = hip_base + bounce[size_t(t)];
        clip.root_pos[size_t(t)] = hip;

        auto& r = clip.rot[size_t(t)];
        Quat q_hip = yaw_quat(psi[size_t(t)]);
        r[0] = q_hip;
        r[size_t(spine)] =
            Quat::from_axis_angle(x_axis, deg2rad(0.6f * params.torso_bend + w_spine.at(sec)));
        r[size_t(chest)] =
            Quat::from_axis_angle(x_axis, deg2rad(0.4f * params.torso_bend + w_chest.at(sec)));
        r[size_t(neck)] =
            Quat::from_axis_angle(x_axis, deg2rad(-0.35f * params.torso_bend + w_neck.at(sec)));

        float swing = params.arm_swing * std::sin(2.f * kPi * ph + kPi);
        for (int s = 0; s < 2; ++s) {
            float side = s == 0 ? 1.f : -1.f;
            float arm = s == 0 ? swing : -swing;
            Quat drop = Quat::from_axis_angle(z_axis, deg2rad(-side * (72.f + w_sh[s].at(sec))));
            r[size_t(sh[s])] = Quat::from_axis_angle(x_axis, deg2rad(arm)) * drop;
            float flex = 14.f + 0.3f * params.arm_swing * (0.5f + 0.5f * std::sin(2.f * kPi * ph)) +
                         w_el[s].at(sec);
            r[size_t(el[s])] = Quat::from_axis_angle(y_axis, deg2rad(side * flex));
        }

        for (int f = 0; f < 2; ++f) {
            const FootTarget& ft = targets[f][size_t(t)];
            Vec3 u = hip + q_hip.rotate(upleg_off[f]);
            TwoBoneSolution ik = two_bone_ik(u, l1, l2, ft.pos, fwd_dir(psi[size_t(t)]));
            Quat upper_local = (q_hip.conjugate() * ik.upper_world).normalized();
            Quat lower_local = (ik.upper_world.conjugate() * ik.lower_world).normalized();
            Quat foot_local = (ik.lower_world.conjugate() * yaw_quat(ft.yaw)).normalized();
            r[size_t(legs[f].upleg)] = upper_local;
            r[size_t(legs[f].leg)] = lower_local;
            r[size_t(legs[f].foot)] = foot_local;
        }
    }

    ContactSeq contacts = ContactSeq::zeros(frames);
    for (int f = 0; f < 2; ++f)
        for (const StanceWindow& w : windows[f])
            for (int t = std::max(w.start, 0); t < std::min(w.end, frames); ++t)
                contacts.c[size_t(t)][size_t(f)] = 1.f;

    clip.validate();
    return {std::move(clip), std::move(contacts)};
}

const std::vector<StyleParams>& style_presets() {
    static const std::vector<StyleParams> presets = {
        {"neutral", 0, 60.f, 1.00f, 12.f, 2.f, 60.f, 25.f},
        {"old-man", 1, 40.f, 0.85f, 7.f, 18.f, 34.f, 10.f},
        {"proud", 2, 69.5f, 0.95f, 14.f, -8.f, 66.f, 35.f},
        {"crouched", 3, 40.f, 1.05f, 9.f, 32.f, 42.f, 14.f},
        {"high-knees", 4, 50.f, 1.30f, 26.f, 4.f, 65.f, 30.f},
        {"shuffle", 5, 26.1f, 1.15f, 8.f, 10.f, 30.f, 8.f},
        {"march", 6, 45.8f, 1.20f, 24.f, -4.f, 55.f, 45.f},
        {"skip", 7, 64.3f, 1.40f, 20.f, 0.f, 90.f, 40.f},
    };
    return presets;
}

} // namespace mstx
