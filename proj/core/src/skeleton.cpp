#include "mstx/skeleton.hpp"

namespace mstx {

int Skeleton::find(const std::string& name) const {
    for (int i = 0; i < size(); ++i)
        if (joints[size_t(i)].name == name) return i;
    return -1;
}

void Skeleton::validate() const {
    if (joints.empty()) throw Error("skeleton has no joints");
    if (joints[0].parent != -1) throw Error("skeleton root must have parent -1");
    for (int i = 1; i < size(); ++i) {
        const int p = joints[size_t(i)].parent;
        if (p < 0 || p >= i)
            throw Error("skeleton joint '" + joints[size_t(i)].name +
                        "': parent must precede it");
    }
    for (int idx : {hip_index, left_foot, left_toe, right_foot, right_toe})
        if (idx < 0 || idx >= size()) throw Error("skeleton key joint index out of range");
}

Skeleton humanoid19() {
    Skeleton sk;
    auto add = [&sk](const char* name, int parent, float x, float y, float z) {
        sk.joints.push_back({name, parent, {x, y, z}});
    };
    add("Hips", -1, 0, 0, 0);            // 0
    add("Spine", 0, 0, 12, 0);           // 1
    add("Chest", 1, 0, 14, 0);           // 2
    add("Neck", 2, 0, 14, 0);            // 3
    add("Head", 3, 0, 10, 0);            // 4
    add("LeftShoulder", 2, 8, 10, 0);    // 5
    add("LeftElbow", 5, 26, 0, 0);       // 6
    add("LeftHand", 6, 24, 0, 0);        // 7
    add("RightShoulder", 2, -8, 10, 0);  // 8
    add("RightElbow", 8, -26, 0, 0);     // 9
    add("RightHand", 9, -24, 0, 0);      // 10
    add("LeftUpLeg", 0, 9, -2, 0);       // 11
    add("LeftLeg", 11, 0, -42, 0);       // 12
    add("LeftFoot", 12, 0, -40, 0);      // 13
    add("LeftToe", 13, 0, -7, 13);       // 14
    add("RightUpLeg", 0, -9, -2, 0);     // 15
    add("RightLeg", 15, 0, -42, 0);      // 16
    add("RightFoot", 16, 0, -40, 0);     // 17
    add("RightToe", 17, 0, -7, 13);      // 18
    sk.hip_index = 0;
    sk.left_foot = 13;
    sk.left_toe = 14;
    sk.right_foot = 17;
    sk.right_toe = 18;
    sk.validate();
    return sk;
}

LegChain leg_chain(const Skeleton& sk, bool left) {
    LegChain c;
    c.upleg = sk.find(left ? "LeftUpLeg" : "RightUpLeg");
    c.leg = sk.find(left ? "LeftLeg" : "RightLeg");
    c.foot = left ? sk.left_foot : sk.right_foot;
    c.toe = left ? sk.left_toe : sk.right_toe;
    if (c.upleg < 0 || c.leg < 0) throw Error("skeleton is missing a leg chain");
    return c;
}

} // namespace mstx
