#pragma once

#include <string>
#include <vector>

#include "mstx/geom.hpp"

namespace mstx {

struct Joint {
    std::string name;
    int parent = -1; // -1 for root; parents precede children
    Vec3 offset;     // cm, in parent frame
};

struct Skeleton {
    std::vector<Joint> joints;
    int hip_index = 0;
    // (heel/ankle, toe) joint indices per side
    int left_foot = -1, left_toe = -1;
    int right_foot = -1, right_toe = -1;
    // Euler channel order used when writing BVH
    std::string euler_order = "ZXY";

    int size() const { return int(joints.size()); }
    int find(const std::string& name) const;
    void validate() const;
};

// The fixed 19-joint humanoid used across the repo. Legs: thigh 42 cm,
// calf 40 cm; ankle rests 9 cm above ground with the toe at 2 cm.
Skeleton humanoid19();

// handy leg chain indices for humanoid19
struct LegChain {
    int upleg, leg, foot, toe;
};
LegChain leg_chain(const Skeleton& sk, bool left);

} // namespace mstx
