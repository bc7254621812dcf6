#include "mstx/motion.hpp"

#include <cmath>

namespace mstx {

void MotionClip::validate() const {
    if (!skeleton) throw Error("clip has no skeleton");
    if (frames() < 2) throw Error("clip must have at least 2 frames");
    if (int(rot.size()) != frames()) throw Error("clip rotation/frame count mismatch");
    const int j = skeleton->size();
    for (int t = 0; t < frames(); ++t) {
        if (int(rot[size_t(t)].size()) != j)
            throw Error("clip frame " + std::to_string(t) + " has wrong joint count");
        for (const Quat& q : rot[size_t(t)]) {
            const float n = std::sqrt(q.dot(q));
            if (std::fabs(n - 1.f) > 1e-4f)
                throw Error("clip frame " + std::to_string(t) + " has non-unit quaternion");
        }
    }
}

MotionClip MotionClip::window(int start, int len) const {
    if (start < 0 || len < 2 || start + len > frames())
        throw Error("clip window out of range");
    MotionClip w;
    w.skeleton = skeleton;
    w.fps = fps;
    w.style_label = style_label;
    w.root_pos.assign(root_pos.begin() + start, root_pos.begin() + start + len);
    w.rot.assign(rot.begin() + start, rot.begin() + start + len);
    return w;
}

std::vector<ContactEvent> ContactSeq::change_events() const {
    std::vector<ContactEvent> ev;
    for (int t = 1; t < frames(); ++t)
        for (int f = 0; f < 2; ++f) {
            const bool was = on(t - 1, f), now = on(t, f);
            if (was != now) ev.push_back({t, f, now});
        }
    return ev;
}

ContactSeq ContactSeq::zeros(int T) {
    ContactSeq s;
    s.c.assign(size_t(T), {0.f, 0.f});
    return s;
}

void StyleParams::validate() const {
    if (!(cadence > 0.f)) throw Error("style '" + name + "': cadence must be > 0");
    if (!(stride_length > 0.f)) throw Error("style '" + name + "': stride must be > 0");
    if (speed < 0.f) throw Error("style '" + name + "': speed must be >= 0");
}

} // namespace mstx
