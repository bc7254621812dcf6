#include "mstx/geom.hpp"

#include <algorithm>

namespace mstx {

Quat Quat::from_axis_angle(const Vec3& axis, float rad) {
    const Vec3 a = axis.normalized();
    const float h = 0.5f * rad;
    const float s = std::sin(h);
    return {std::cos(h), a.x * s, a.y * s, a.z * s};
}

Quat Quat::normalized() const {
    const float n = std::sqrt(dot(*this));
    if (n < 1e-12f) return {};
    const float inv = 1.f / n;
    return {w * inv, x * inv, y * inv, z * inv};
}

Vec3 Quat::rotate(const Vec3& v) const {
    const Vec3 u{x, y, z};
    const Vec3 t = u.cross(v) * 2.f;
    return v + t * w + u.cross(t);
}

Quat Quat::slerp(const Quat& a, const Quat& b_in, float t) {
    Quat b = b_in;
    float d = a.dot(b);
    if (d < 0.f) {
        d = -d;
        b = {-b.w, -b.x, -b.y, -b.z};
    }
    if (d > 0.9995f) {
        // nearly parallel: lerp and renormalize
        Quat r{a.w + (b.w - a.w) * t, a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t,
               a.z + (b.z - a.z) * t};
        return r.normalized();
    }
    const float th = std::acos(std::clamp(d, -1.f, 1.f));
    const float s = std::sin(th);
    const float wa = std::sin((1.f - t) * th) / s;
    const float wb = std::sin(t * th) / s;
    return {wa * a.w + wb * b.w, wa * a.x + wb * b.x, wa * a.y + wb * b.y,
            wa * a.z + wb * b.z};
}

Mat3 Mat3::from_quat(const Quat& q_in) {
    const Quat q = q_in.normalized();
    const float xx = q.x * q.x, yy = q.y * q.y, zz = q.z * q.z;
    const float xy = q.x * q.y, xz = q.x * q.z, yz = q.y * q.z;
    const float wx = q.w * q.x, wy = q.w * q.y, wz = q.w * q.z;
    Mat3 r;
    r.m[0] = 1.f - 2.f * (yy + zz);
    r.m[1] = 2.f * (xy - wz);
    r.m[2] = 2.f * (xz + wy);
    r.m[3] = 2.f * (xy + wz);
    r.m[4] = 1.f - 2.f * (xx + zz);
    r.m[5] = 2.f * (yz - wx);
    r.m[6] = 2.f * (xz - wy);
    r.m[7] = 2.f * (yz + wx);
    r.m[8] = 1.f - 2.f * (xx + yy);
    return r;
}

Mat3 Mat3::from_cols(const Vec3& a, const Vec3& b, const Vec3& c) {
    Mat3 r;
    r.m[0] = a.x;
    r.m[3] = a.y;
    r.m[6] = a.z;
    r.m[1] = b.x;
    r.m[4] = b.y;
    r.m[7] = b.z;
    r.m[2] = c.x;
    r.m[5] = c.y;
    r.m[8] = c.z;
    return r;
}

Quat Mat3::to_quat() const {
    const float tr = m[0] + m[4] + m[8];
    Quat q;
    if (tr > 0.f) {
        const float s = std::sqrt(tr + 1.f) * 2.f;
        q.w = 0.25f * s;
        q.x = (m[7] - m[5]) / s;
        q.y = (m[2] - m[6]) / s;
        q.z = (m[3] - m[1]) / s;
    } else if (m[0] > m[4] && m[0] > m[8]) {
        const float s = std::sqrt(1.f + m[0] - m[4] - m[8]) * 2.f;
        q.w = (m[7] - m[5]) / s;
        q.x = 0.25f * s;
        q.y = (m[1] + m[3]) / s;
        q.z = (m[2] + m[6]) / s;
    } else if (m[4] > m[8]) {
        const float s = std::sqrt(1.f + m[4] - m[0] - m[8]) * 2.f;
        q.w = (m[2] - m[6]) / s;
        q.x = (m[1] + m[3]) / s;
        q.y = 0.25f * s;
        q.z = (m[5] + m[7]) / s;
    } else {
        const float s = std::sqrt(1.f + m[8] - m[0] - m[4]) * 2.f;
        q.w = (m[3] - m[1]) / s;
        q.x = (m[2] + m[6]) / s;
        q.y = (m[5] + m[7]) / s;
        q.z = 0.25f * s;
    }
    return q.normalized();
}

Mat3 Mat3::operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            float acc = 0.f;
            for (int k = 0; k < 3; ++k) acc += m[size_t(i) * 3 + k] * o.m[size_t(k) * 3 + j];
            r.m[size_t(i) * 3 + j] = acc;
        }
    return r;
}

Mat3 Mat3::transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.m[size_t(i) * 3 + j] = m[size_t(j) * 3 + i];
    return r;
}

void rot6d_from_quat(const Quat& q, float out[6]) {
    const Mat3 r = Mat3::from_quat(q);
    const Vec3 c0 = r.col(0), c1 = r.col(1);
    out[0] = c0.x;
    out[1] = c0.y;
    out[2] = c0.z;
    out[3] = c1.x;
    out[4] = c1.y;
    out[5] = c1.z;
}

Quat quat_from_rot6d(const float in[6]) {
    const Vec3 r0{in[0], in[1], in[2]};
    const Vec3 r1{in[3], in[4], in[5]};
    const Vec3 a = r0.normalized({1.f, 0.f, 0.f});
    const Vec3 b = (r1 - a * a.dot(r1)).normalized({0.f, 1.f, 0.f});
    const Vec3 c = a.cross(b);
    return Mat3::from_cols(a, b, c).to_quat();
}

Quat quat_from_euler_deg(float xdeg, float ydeg, float zdeg, const std::string& order) {
    Quat q;
    for (char ax : order) {
        Quat r;
        switch (ax) {
        case 'X': r = Quat::from_axis_angle({1, 0, 0}, deg2rad(xdeg)); break;
        case 'Y': r = Quat::from_axis_angle({0, 1, 0}, deg2rad(ydeg)); break;
        case 'Z': r = Quat::from_axis_angle({0, 0, 1}, deg2rad(zdeg)); break;
        default: throw ParseError("bad euler axis '" + std::string(1, ax) + "'");
        }
        q = q * r;
    }
    return q;
}

void euler_deg_from_quat(const Quat& q, const std::string& order, float& xdeg,
                         float& ydeg, float& zdeg) {
    const Mat3 r = Mat3::from_quat(q);
    const float* m = r.m;
    float a, b, c; // x, y, z angles in radians
    if (order == "ZXY") {
        const float sa = std::clamp(m[7], -1.f, 1.f);
        a = std::asin(sa);
        if (std::fabs(sa) < 0.99999f) {
            c = std::atan2(-m[1], m[4]);
            b = std::atan2(-m[6], m[8]);
        } else {
            b = 0.f;
            c = std::atan2(m[3], m[0]);
        }
    } else if (order == "ZYX") {
        const float sb = std::clamp(-m[6], -1.f, 1.f);
        b = std::asin(sb);
        if (std::fabs(sb) < 0.99999f) {
            c = std::atan2(m[3], m[0]);
            a = std::atan2(m[7], m[8]);
        } else {
            a = 0.f;
            c = std::atan2(-m[1], m[4]);
        }
    } else {
        throw ParseError("unsupported euler order '" + order + "'");
    }
    xdeg = rad2deg(a);
    ydeg = rad2deg(b);
    zdeg = rad2deg(c);
}

Quat rotation_between(const Vec3& a_in, const Vec3& b_in) {
    const Vec3 a = a_in.normalized();
    const Vec3 b = b_in.normalized();
    const float d = std::clamp(a.dot(b), -1.f, 1.f);
    if (d > 1.f - 1e-7f) return {};
    if (d < -1.f + 1e-7f) {
        // opposite directions: rotate pi about any perpendicular axis
        Vec3 axis = a.cross({1.f, 0.f, 0.f});
        if (axis.length() < 1e-6f) axis = a.cross({0.f, 1.f, 0.f});
        return Quat::from_axis_angle(axis, kPi);
    }
    return Quat::from_axis_angle(a.cross(b), std::acos(d));
}

float yaw_of(const Quat& q) {
    const Vec3 f = q.rotate({0.f, 0.f, 1.f});
    if (std::fabs(f.x) < 1e-9f && std::fabs(f.z) < 1e-9f) {
        // forward points straight up/down; fall back to the rotated x axis
        const Vec3 s = q.rotate({1.f, 0.f, 0.f});
        return std::atan2(-s.z, s.x);
    }
    return std::atan2(f.x, f.z);
}

Quat yaw_quat(float yaw) { return Quat::from_axis_angle({0.f, 1.f, 0.f}, yaw); }

float wrap_angle(float a) {
    while (a > kPi) a -= 2.f * kPi;
    while (a <= -kPi) a += 2.f * kPi;
    return a;
}

} // namespace mstx
