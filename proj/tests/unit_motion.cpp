#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mstx/bvh.hpp"
#include "mstx/dataset.hpp"
#include "mstx/gait.hpp"
#include "mstx/kinematics.hpp"
#include "mstx/metrics.hpp"

#include <cmath>
#include <vector>

using namespace mstx;

namespace {

MotionClip standing_clip(int frames, float root_y_shift = 0.f) {
    MotionClip clip;
    clip.skeleton = shared_humanoid19();
    const Skeleton& sk = *clip.skeleton;
    std::vector<Vec3> rest = fk_frame(sk, {0.f, 0.f, 0.f},
                                      std::vector<Quat>(size_t(sk.size())));
    // place the hip so the ankle rests at its modeled height, then shift
    float hip_y = -rest[size_t(sk.left_foot)].y + 9.f;
    clip.root_pos.assign(size_t(frames), {0.f, hip_y + root_y_shift, 0.f});
    clip.rot.assign(size_t(frames), std::vector<Quat>(size_t(sk.size())));
    return clip;
}

// independent quaternion-to-matrix conversion for the fk oracle
void quat_mat(const Quat& q, double m[9]) {
    double w = q.w, x = q.x, y = q.y, z = q.z;
    m[0] = 1 - 2 * (y * y + z * z);
    m[1] = 2 * (x * y - w * z);
    m[2] = 2 * (x * z + w * y);
    m[3] = 2 * (x * y + w * z);
    m[4] = 1 - 2 * (x * x + z * z);
    m[5] = 2 * (y * z - w * x);
    m[6] = 2 * (x * z - w * y);
    m[7] = 2 * (y * z + w * x);
    m[8] = 1 - 2 * (x * x + y * y);
}

void mat_mul3(const double a[9], const double b[9], double out[9]) {
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += a[r * 3 + k] * b[k * 3 + c];
            out[r * 3 + c] = acc;
        }
}

} // namespace

TEST_CASE("minimal two-joint bvh parses") {
    const char* text =
        "HIERARCHY\n"
        "ROOT Hips\n"
        "{\n"
        "  OFFSET 0 90 0\n"
        "  CHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation\n"
        "  JOINT Chest\n"
        "  {\n"
        "    OFFSET 0 20 0\n"
        "    CHANNELS 3 Zrotation Xrotation Yrotation\n"
        "    End Site\n"
        "    {\n"
        "      OFFSET 0 10 0\n"
        "    }\n"
        "  }\n"
        "}\n"
        "MOTION\n"
        "Frames: 3\n"
        "Frame Time: 0.033333\n"
        "0 90 0 0 0 0 0 0 0\n"
        "1 90 0 0 0 0 0 0 0\n"
        "2 90 0 0 0 0 0 0 0\n";
    BvhResult r = parse_bvh(text);
    REQUIRE(r.skeleton->size() == 2);
    CHECK(r.skeleton->joints[0].name == "Hips");
    CHECK(r.skeleton->joints[1].parent == 0);
    REQUIRE(r.clip.frames() == 3);
    for (int t = 0; t < 3; ++t) {
        CHECK(r.clip.root_pos[size_t(t)].x == doctest::Approx(float(t)));
        for (const Quat& q : r.clip.rot[size_t(t)]) {
            CHECK(q.w == doctest::Approx(1.f));
            CHECK(q.x == doctest::Approx(0.f));
        }
    }
}

TEST_CASE("bvh write then parse preserves tree and frames") {
    GaitSample s = synth_gait(style_presets()[2], 90, 5);
    std::string text = write_bvh(*s.clip.skeleton, s.clip);
    BvhResult r = parse_bvh(text);

    REQUIRE(r.skeleton->size() == s.clip.skeleton->size());
    for (int j = 0; j < r.skeleton->size(); ++j) {
        CHECK(r.skeleton->joints[size_t(j)].name == s.clip.skeleton->joints[size_t(j)].name);
        CHECK(r.skeleton->joints[size_t(j)].parent ==
              s.clip.skeleton->joints[size_t(j)].parent);
        CHECK(std::abs(r.skeleton->joints[size_t(j)].offset.x -
                       s.clip.skeleton->joints[size_t(j)].offset.x) < 1e-4f);
    }
    REQUIRE(r.clip.frames() == s.clip.frames());
    for (int t = 0; t < r.clip.frames(); ++t) {
        CHECK((r.clip.root_pos[size_t(t)] - s.clip.root_pos[size_t(t)]).length() < 1e-3f);
        for (int j = 0; j < r.skeleton->size(); ++j) {
            const Quat a = r.clip.rot[size_t(t)][size_t(j)];
            const Quat b = s.clip.rot[size_t(t)][size_t(j)];
            CHECK(std::abs(std::abs(a.dot(b)) - 1.f) < 1e-4f);
        }
    }
}

TEST_CASE("ZYX euler 90 about Z gives the matching quaternion") {
    Quat q = quat_from_euler_deg(0.f, 0.f, 90.f, "ZYX");
    const float c = std::cos(deg2rad(45.f)), s = std::sin(deg2rad(45.f));
    CHECK(q.w == doctest::Approx(c).epsilon(1e-5));
    CHECK(q.x == doctest::Approx(0.f));
    CHECK(q.y == doctest::Approx(0.f));
    CHECK(q.z == doctest::Approx(s).epsilon(1e-5));
}

TEST_CASE("march in place stays put but keeps stepping") {
    StyleParams p = style_presets()[0];
    p.speed = 0.f;
    p.stride_length = 0.f;
    GaitSample s = synth_gait(p, 240, 9);
    const Vec3 d = s.clip.root_pos.back() - s.clip.root_pos.front();
    CHECK(std::sqrt(d.x * d.x + d.z * d.z) < 1.f);

    // both feet keep alternating
    auto events = s.contacts.change_events();
    CHECK(events.size() > 8);
    bool left = false, right = false;
    for (const ContactEvent& e : events) (e.foot == 0 ? left : right) = true;
    CHECK(left);
    CHECK(right);
}

TEST_CASE("contact change events scale with cadence") {
    const StyleParams& p = style_presets()[0];
    const int frames = 240; // 8 s at 30 fps
    GaitSample s = synth_gait(p, frames, 3);
    const float t = frames / 30.f;
    const int expected = 2 * int(std::floor(2.f * p.cadence * t));
    const int got = int(s.contacts.change_events().size());
    CHECK(got >= expected - 2);
    CHECK(got <= expected + 2);
}

TEST_CASE("seed changes the wiggle but not the contact plan") {
    const StyleParams& p = style_presets()[4];
    GaitSample a = synth_gait(p, 150, 11);
    GaitSample b = synth_gait(p, 150, 12);
    REQUIRE(a.contacts.frames() == b.contacts.frames());
    for (int t = 0; t < a.contacts.frames(); ++t) {
        CHECK(a.contacts.on(t, 0) == b.contacts.on(t, 0));
        CHECK(a.contacts.on(t, 1) == b.contacts.on(t, 1));
    }
    // upper body phase noise differs somewhere
    const Skeleton& sk = *a.clip.skeleton;
    int spine = sk.find("Chest");
    REQUIRE(spine >= 0);
    float diff = 0.f;
    for (int t = 0; t < a.clip.frames(); ++t)
        diff += std::abs(1.f - std::abs(a.clip.rot[size_t(t)][size_t(spine)].dot(
                                   b.clip.rot[size_t(t)][size_t(spine)])));
    CHECK(diff > 1e-6f);
}

TEST_CASE("fk with identity rotations accumulates offsets") {
    Skeleton sk = humanoid19();
    std::vector<Vec3> pos =
        fk_frame(sk, {1.f, 2.f, 3.f}, std::vector<Quat>(size_t(sk.size())));
    for (int j = 0; j < sk.size(); ++j) {
        Vec3 expect = {1.f, 2.f, 3.f};
        for (int a = j; a > 0; a = sk.joints[size_t(a)].parent)
            expect += sk.joints[size_t(a)].offset;
        CHECK((pos[size_t(j)] - expect).length() < 1e-4f);
    }
}

TEST_CASE("root yaw rotates child offsets right-handed about y") {
    Skeleton sk;
    sk.joints.push_back({"root", -1, {0.f, 0.f, 0.f}});
    sk.joints.push_back({"child", 0, {1.f, 0.f, 0.f}});
    sk.left_foot = sk.left_toe = sk.right_foot = sk.right_toe = 0;
    std::vector<Quat> rot(2);
    rot[0] = yaw_quat(kPi / 2.f);
    std::vector<Vec3> pos = fk_frame(sk, {0.f, 0.f, 0.f}, rot);
    CHECK(pos[1].x == doctest::Approx(0.f).epsilon(1e-5));
    CHECK(pos[1].y == doctest::Approx(0.f));
    CHECK(pos[1].z == doctest::Approx(-1.f).epsilon(1e-5));
}

TEST_CASE("fk matches a matrix-chain oracle on a random pose") {
    Skeleton sk = humanoid19();
    Rng rng(31);
    std::vector<Quat> rot(size_t(sk.size()));
    for (Quat& q : rot) {
        q = {float(rng.normal()), float(rng.normal()), float(rng.normal()),
             float(rng.normal())};
        q = q.normalized();
    }
    const Vec3 root = {4.f, 90.f, -2.f};
    std::vector<Vec3> pos = fk_frame(sk, root, rot);

    std::vector<std::array<double, 9>> world(size_t(sk.size()));
    std::vector<Vec3> opos(size_t(sk.size()));
    for (int j = 0; j < sk.size(); ++j) {
        double local[9];
        quat_mat(rot[size_t(j)], local);
        const int par = sk.joints[size_t(j)].parent;
        if (par < 0) {
            std::copy(local, local + 9, world[size_t(j)].begin());
            opos[size_t(j)] = root;
        } else {
            mat_mul3(world[size_t(par)].data(), local, world[size_t(j)].data());
            const Vec3 o = sk.joints[size_t(j)].offset;
            const auto& m = world[size_t(par)];
            opos[size_t(j)] =
                opos[size_t(par)] + Vec3{float(m[0] * o.x + m[1] * o.y + m[2] * o.z),
                                         float(m[3] * o.x + m[4] * o.y + m[5] * o.z),
                                         float(m[6] * o.x + m[7] * o.y + m[8] * o.z)};
        }
        CHECK((pos[size_t(j)] - opos[size_t(j)]).length() < 1e-4f);
    }
}

TEST_CASE("hip velocity of a standing character is zero") {
    MotionClip clip = standing_clip(20);
    HipVelocitySeq h = hip_local_velocity(clip);
    for (const Vec3& v : h.vel) CHECK(v.length() < 1e-6f);
}

TEST_CASE("straight walk reads as forward local velocity") {
    MotionClip clip = standing_clip(30);
    for (int t = 0; t < 30; ++t) {
        clip.root_pos[size_t(t)].x = 2.f * t; // walk along world +x
        clip.rot[size_t(t)][0] = yaw_quat(kPi / 2.f); // facing +x
    }
    HipVelocitySeq h = hip_local_velocity(clip);
    for (int t = 1; t < 30; ++t) {
        CHECK(h.vel[size_t(t)].x == doctest::Approx(0.f).epsilon(1e-4));
        CHECK(h.vel[size_t(t)].z == doctest::Approx(2.f).epsilon(1e-4));
    }
}

TEST_CASE("circular walk matches the analytic chord") {
    const float R = 120.f, omega = 0.03f;
    MotionClip clip = standing_clip(60);
    for (int t = 0; t < 60; ++t) {
        const float phi = omega * t;
        clip.root_pos[size_t(t)].x = R * std::sin(phi);
        clip.root_pos[size_t(t)].z = R * std::cos(phi);
        // face the tangent direction
        clip.rot[size_t(t)][0] = yaw_quat(std::atan2(std::cos(phi), -std::sin(phi)));
    }
    HipVelocitySeq h = hip_local_velocity(clip);
    const float chord = 2.f * R * std::sin(omega / 2.f);
    for (int t = 1; t < 60; ++t) {
        CHECK(h.vel[size_t(t)].z == doctest::Approx(chord).epsilon(0.02));
        CHECK(std::abs(h.vel[size_t(t)].x) < 0.15f * chord);
    }
}

TEST_CASE("projection keeps only the ground plane") {
    std::vector<Vec3> hip(12, {3.f, 90.f, -4.f});
    Trajectory tr = proj(hip);
    for (const auto& p : tr) {
        CHECK(p[0] == doctest::Approx(3.f));
        CHECK(p[1] == doctest::Approx(-4.f));
    }

    // vertical bounce only
    std::vector<Vec3> bounce(12, {1.f, 90.f, 2.f});
    for (size_t t = 0; t < bounce.size(); ++t) bounce[t].y += 5.f * std::sin(0.3f * t);
    Trajectory tb = proj(bounce);
    for (const auto& p : tb) {
        CHECK(p[0] == doctest::Approx(1.f));
        CHECK(p[1] == doctest::Approx(2.f));
    }
}

TEST_CASE("straight-line walk projects to a collinear track of the right length") {
    MotionClip clip = standing_clip(50);
    const float speed = 1.7f;
    for (int t = 0; t < 50; ++t) {
        clip.root_pos[size_t(t)].x = speed * t * 0.6f;
        clip.root_pos[size_t(t)].z = speed * t * 0.8f;
    }
    std::vector<std::vector<Vec3>> world = fk(clip);
    std::vector<Vec3> hip(size_t(clip.frames()));
    for (int t = 0; t < clip.frames(); ++t)
        hip[size_t(t)] = world[size_t(t)][size_t(clip.skeleton->hip_index)];
    Trajectory tr = proj(hip);
    float len = 0.f;
    for (size_t t = 1; t < tr.size(); ++t)
        len += std::hypot(tr[t][0] - tr[t - 1][0], tr[t][1] - tr[t - 1][1]);
    CHECK(len == doctest::Approx(speed * 49).epsilon(0.01));
    // collinear: cross products vanish
    for (size_t t = 2; t < tr.size(); ++t) {
        const float ax = tr[t - 1][0] - tr[t - 2][0], az = tr[t - 1][1] - tr[t - 2][1];
        const float bx = tr[t][0] - tr[t - 1][0], bz = tr[t][1] - tr[t - 1][1];
        CHECK(std::abs(ax * bz - az * bx) < 1e-3f);
    }
}

TEST_CASE("kinematic labels agree with the generator ground truth") {
    GaitSample s = synth_gait(style_presets()[0], 240, 21);
    ContactSeq lab = label_contacts(s.clip);
    int agree = 0;
    for (int t = 0; t < 240; ++t)
        for (int f = 0; f < 2; ++f) agree += lab.on(t, f) == s.contacts.on(t, f);
    CHECK(double(agree) / (2 * 240) >= 0.97);
}

TEST_CASE("feet on the floor label as full contact") {
    MotionClip clip = standing_clip(20, -5.f); // ankles at 4 cm, toes below
    ContactSeq lab = label_contacts(clip);
    for (int t = 0; t < 20; ++t) {
        CHECK(lab.on(t, 0));
        CHECK(lab.on(t, 1));
    }
}

TEST_CASE("airborne clip labels as no contact") {
    MotionClip clip = standing_clip(20, 100.f);
    ContactSeq lab = label_contacts(clip);
    for (int t = 0; t < 20; ++t) {
        CHECK_FALSE(lab.on(t, 0));
        CHECK_FALSE(lab.on(t, 1));
    }
}

TEST_CASE("rotation-mode reconstruction inverts featurize") {
    GaitSample s = synth_gait(style_presets()[1], 120, 13);
    Tensor f = featurize(s.clip);
    PoseSeq seq = unpack_features(f);
    const float yaw0 = yaw_of(s.clip.rot[0][0]);
    MotionClip back = reconstruct(ReconMode::rotation, s.clip.skeleton, seq, s.clip.fps,
                                  s.clip.root_pos[0], yaw0);
    REQUIRE(back.frames() == s.clip.frames());
    std::vector<std::vector<Vec3>> pa = fk(s.clip), pb = fk(back);
    for (int t = 0; t < back.frames(); ++t)
        for (int j = 0; j < s.clip.joints(); ++j)
            CHECK((pa[size_t(t)][size_t(j)] - pb[size_t(t)][size_t(j)]).length() < 0.05f);
}

TEST_CASE("position-mode reconstruction matches bone directions") {
    GaitSample s = synth_gait(style_presets()[3], 120, 14);
    Tensor f = featurize(s.clip);
    PoseSeq seq = unpack_features(f);
    MotionClip back = reconstruct(ReconMode::position, s.clip.skeleton, seq, s.clip.fps,
                                  s.clip.root_pos[0], yaw_of(s.clip.rot[0][0]));
    std::vector<std::vector<Vec3>> pa = fk(s.clip), pb = fk(back);
    const Skeleton& sk = *s.clip.skeleton;
    for (int t = 0; t < back.frames(); ++t)
        for (int j = 1; j < sk.size(); ++j) {
            const int par = sk.joints[size_t(j)].parent;
            if (sk.joints[size_t(j)].offset.length() < 1e-4f) continue;
            Vec3 da = (pa[size_t(t)][size_t(j)] - pa[size_t(t)][size_t(par)]).normalized();
            Vec3 db = (pb[size_t(t)][size_t(j)] - pb[size_t(t)][size_t(par)]).normalized();
            const float cosang = std::min(1.f, std::max(-1.f, da.dot(db)));
            CHECK(std::acos(cosang) < 2e-3f);
        }
}

TEST_CASE("velocity-mode reconstruction drifts under half a centimeter") {
    GaitSample s = synth_gait(style_presets()[0], 64, 15);
    Tensor f = featurize(s.clip);
    PoseSeq seq = unpack_features(f);
    MotionClip back = reconstruct(ReconMode::velocity, s.clip.skeleton, seq, s.clip.fps,
                                  s.clip.root_pos[0], yaw_of(s.clip.rot[0][0]));
    REQUIRE(back.frames() == 64);
    for (int t = 0; t < 60; ++t) {
        Vec3 d = back.root_pos[size_t(t)] - s.clip.root_pos[size_t(t)];
        CHECK(std::hypot(d.x, d.z) < 0.5f);
    }
}

TEST_CASE("foot locking leaves a clean clip almost untouched") {
    GaitSample s = synth_gait(style_presets()[0], 120, 16);
    MotionClip locked = ik_footlock(s.clip, s.contacts);
    std::vector<std::vector<Vec3>> pa = fk(s.clip), pb = fk(locked);
    float worst = 0.f;
    for (int t = 0; t < s.clip.frames(); ++t)
        for (int j = 0; j < s.clip.joints(); ++j)
            worst = std::max(worst, (pa[size_t(t)][size_t(j)] - pb[size_t(t)][size_t(j)]).length());
    CHECK(worst < 0.1f);
}

TEST_CASE("two-bone ik bends the knee to ninety degrees") {
    const Vec3 hip = {0.f, 80.f, 0.f};
    const float reach = 40.f * std::sqrt(2.f);
    const Vec3 target = hip + Vec3{0.f, -reach, 0.f};
    TwoBoneSolution sol = two_bone_ik(hip, 40.f, 40.f, target, {0.f, 0.f, 1.f});
    CHECK_FALSE(sol.clamped);
    const Vec3 a = (hip - sol.mid_pos).normalized();
    const Vec3 b = (target - sol.mid_pos).normalized();
    CHECK(std::abs(a.dot(b)) < 1e-3f); // cos 90
    CHECK((sol.mid_pos - hip).length() == doctest::Approx(40.f).epsilon(1e-4));
}

TEST_CASE("foot locking removes injected stance drift") {
    GaitSample s = synth_gait(style_presets()[0], 180, 17);
    MotionClip bad = s.clip;
    // drag the whole body sideways during every stance: planted feet skate
    float shift = 0.f;
    for (int t = 0; t < bad.frames(); ++t) {
        if (s.contacts.on(t, 0) || s.contacts.on(t, 1)) shift += 1.f;
        bad.root_pos[size_t(t)].x += shift;
    }
    const float before = foot_skate(bad);
    MotionClip fixed = ik_footlock(bad, s.contacts);
    const float after = foot_skate(fixed);
    REQUIRE(before > 0.2f);
    CHECK(after <= 0.1f * before);
}
