#pragma once

#include <cmath>
#include <string>

#include "mstx/common.hpp"

namespace mstx {

// Right-handed, y-up, z-forward. Column-vector convention: v' = R * v.

struct Vec3 {
    float x = 0.f, y = 0.f, z = 0.f;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(float s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    Vec3& operator+=(const Vec3& o) {
        x += o.x;
        y += o.y;
        z += o.z;
        return *this;
    }

    float dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    float length() const { return std::sqrt(dot(*this)); }
    Vec3 normalized(const Vec3& fallback = {1.f, 0.f, 0.f}) const {
        const float l = length();
        return l > 1e-8f ? (*this) * (1.f / l) : fallback;
    }
};

struct Quat {
    float w = 1.f, x = 0.f, y = 0.f, z = 0.f;

    static Quat from_axis_angle(const Vec3& axis, float rad);

    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }
    Quat conjugate() const { return {w, -x, -y, -z}; }
    float dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    Quat normalized() const;
    Vec3 rotate(const Vec3& v) const;

    static Quat slerp(const Quat& a, const Quat& b, float t);
};

struct Mat3 {
    float m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1}; // row-major

    static Mat3 identity() { return {}; }
    static Mat3 from_quat(const Quat& q);
    static Mat3 from_cols(const Vec3& a, const Vec3& b, const Vec3& c);

    Quat to_quat() const;
    Vec3 col(int i) const { return {m[size_t(i)], m[size_t(i) + 3], m[size_t(i) + 6]}; }
    Vec3 operator*(const Vec3& v) const {
        return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
                m[3] * v.x + m[4] * v.y + m[5] * v.z,
                m[6] * v.x + m[7] * v.y + m[8] * v.z};
    }
    Mat3 operator*(const Mat3& o) const;
    Mat3 transposed() const;
};

// 6-value rotation encoding: the first two columns of the rotation matrix,
// stored (c0.x, c0.y, c0.z, c1.x, c1.y, c1.z). Decoding re-orthonormalizes
// with Gram-Schmidt, so any 6 floats map to a valid rotation.
void rot6d_from_quat(const Quat& q, float out[6]);
Quat quat_from_rot6d(const float in[6]);

// Euler composition in the listed order, e.g. "ZXY" means Rz * Rx * Ry.
Quat quat_from_euler_deg(float xdeg, float ydeg, float zdeg, const std::string& order);
// Extraction supports the orders used by the motion files here (ZXY, ZYX).
void euler_deg_from_quat(const Quat& q, const std::string& order, float& xdeg,
                         float& ydeg, float& zdeg);

// Minimal-arc rotation taking direction a to direction b.
Quat rotation_between(const Vec3& a, const Vec3& b);

// Heading of the rotated forward axis, measured about +y: atan2(f.x, f.z).
float yaw_of(const Quat& q);
Quat yaw_quat(float yaw);

// wrap to (-pi, pi]
float wrap_angle(float a);

inline constexpr float kPi = 3.14159265358979323846f;
inline float deg2rad(float d) { return d * (kPi / 180.f); }
inline float rad2deg(float r) { return r * (180.f / kPi); }

} // namespace mstx
