#include "mstx/bvh.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace mstx {

namespace {

struct Lexer {
    const std::string& text;
    size_t pos = 0;
    int line = 1;

    explicit Lexer(const std::string& t) : text(t) {}

    [[noreturn]] void fail(const std::string& msg) const {
        throw ParseError("bvh line " + std::to_string(line) + ": " + msg);
    }

    void skip_ws() {
        while (pos < text.size()) {
            const char c = text[pos];
            if (c == '\n') {
                ++line;
                ++pos;
            } else if (c == ' ' || c == '\t' || c == '\r') {
                ++pos;
            } else {
                break;
            }
        }
    }

    bool eof() {
        skip_ws();
        return pos >= text.size();
    }

    std::string token() {
        skip_ws();
        if (pos >= text.size()) fail("unexpected end of file");
        const char c = text[pos];
        if (c == '{' || c == '}') {
            ++pos;
            return std::string(1, c);
        }
        size_t start = pos;
        while (pos < text.size() && !std::isspace(uint8_t(text[pos])) &&
               text[pos] != '{' && text[pos] != '}')
            ++pos;
        return text.substr(start, pos - start);
    }

    std::string peek() {
        const size_t p = pos;
        const int l = line;
        std::string t = eof() ? "" : token();
        pos = p;
        line = l;
        return t;
    }

    void expect(const std::string& want) {
        const std::string got = token();
        if (got != want) fail("expected '" + want + "', got '" + got + "'");
    }

    float number() {
        const std::string t = token();
        char* end = nullptr;
        const float v = std::strtof(t.c_str(), &end);
        if (end == t.c_str() || *end != '\0') fail("expected a number, got '" + t + "'");
        return v;
    }

    int integer() {
        const float v = number();
        if (v != std::floor(v)) fail("expected an integer");
        return int(v);
    }
};

struct ChannelSpec {
    int joint;
    char kind;  // 'X','Y','Z' rotation
    bool position;
};

struct ParseState {
    Skeleton sk;
    std::vector<ChannelSpec> channels;
    std::vector<std::string> rot_order; // per joint, e.g. "ZXY"
};

void parse_joint(Lexer& lx, ParseState& st, int parent) {
    const std::string name = lx.token();
    if (name.empty()) lx.fail("joint missing a name");
    const int index = int(st.sk.joints.size());
    st.sk.joints.push_back({name, parent, {}});
    st.rot_order.emplace_back();
    lx.expect("{");
    bool saw_offset = false;
    while (true) {
        const std::string t = lx.token();
        if (t == "OFFSET") {
            Vec3 o;
            o.x = lx.number();
            o.y = lx.number();
            o.z = lx.number();
            st.sk.joints[size_t(index)].offset = o;
            saw_offset = true;
        } else if (t == "CHANNELS") {
            const int n = lx.integer();
            for (int i = 0; i < n; ++i) {
                const std::string ch = lx.token();
                if (ch == "Xposition" || ch == "Yposition" || ch == "Zposition") {
                    st.channels.push_back({index, ch[0], true});
                } else if (ch == "Xrotation" || ch == "Yrotation" || ch == "Zrotation") {
                    st.channels.push_back({index, ch[0], false});
                    st.rot_order[size_t(index)] += ch[0];
                } else {
                    lx.fail("unknown channel '" + ch + "'");
                }
            }
        } else if (t == "JOINT") {
            parse_joint(lx, st, index);
        } else if (t == "End") {
            lx.expect("Site");
            lx.expect("{");
            lx.expect("OFFSET");
            lx.number();
            lx.number();
            lx.number();
            lx.expect("}");
        } else if (t == "}") {
            break;
        } else {
            lx.fail("unexpected token '" + t + "' in joint block");
        }
    }
    if (!saw_offset) lx.fail("joint '" + name + "' has no OFFSET");
}

void guess_key_joints(Skeleton& sk) {
    auto pick = [&sk](std::initializer_list<const char*> names, int fallback) {
        for (const char* n : names) {
            const int i = sk.find(n);
            if (i >= 0) return i;
        }
        return fallback;
    };
    sk.hip_index = 0;
    sk.left_foot = pick({"LeftFoot", "LeftAnkle"}, 0);
    sk.left_toe = pick({"LeftToe", "LeftToeBase"}, sk.left_foot);
    sk.right_foot = pick({"RightFoot", "RightAnkle"}, 0);
    sk.right_toe = pick({"RightToe", "RightToeBase"}, sk.right_foot);
}

} // namespace

BvhResult parse_bvh(const std::string& text) {
    Lexer lx(text);
    ParseState st;
    lx.expect("HIERARCHY");
    lx.expect("ROOT");
    parse_joint(lx, st, -1);
    lx.expect("MOTION");
    lx.expect("Frames:");
    const int frames = lx.integer();
    if (frames < 2) lx.fail("need at least 2 frames");
    lx.expect("Frame");
    lx.expect("Time:");
    const float dt = lx.number();
    if (!(dt > 0.f)) lx.fail("frame time must be positive");

    const std::string root_order = st.rot_order.empty() ? "" : st.rot_order[0];
    if (root_order == "ZXY" || root_order == "ZYX") st.sk.euler_order = root_order;
    guess_key_joints(st.sk);
    st.sk.validate();

    auto sk = std::make_shared<Skeleton>(st.sk);
    MotionClip clip;
    clip.skeleton = sk;
    clip.fps = 1.f / dt;
    clip.root_pos.resize(size_t(frames));
    clip.rot.assign(size_t(frames), std::vector<Quat>(st.sk.joints.size()));

    const int J = int(st.sk.joints.size());
    std::vector<float> euler(size_t(J) * 3, 0.f); // per joint X,Y,Z degrees
    for (int f = 0; f < frames; ++f) {
        std::fill(euler.begin(), euler.end(), 0.f);
        Vec3 root;
        for (const ChannelSpec& cs : st.channels) {
            const float v = lx.number();
            if (cs.position) {
                if (cs.joint == 0) {
                    if (cs.kind == 'X') root.x = v;
                    else if (cs.kind == 'Y') root.y = v;
                    else root.z = v;
                }
                // non-root position channels are ignored (rigid offsets)
            } else {
                euler[size_t(cs.joint) * 3 + size_t(cs.kind - 'X')] = v;
            }
        }
        clip.root_pos[size_t(f)] = root;
        for (int j = 0; j < J; ++j) {
            const std::string& order =
                st.rot_order[size_t(j)].empty() ? st.sk.euler_order : st.rot_order[size_t(j)];
            clip.rot[size_t(f)][size_t(j)] =
                quat_from_euler_deg(euler[size_t(j) * 3], euler[size_t(j) * 3 + 1],
                                    euler[size_t(j) * 3 + 2], order)
                    .normalized();
        }
    }
    if (!lx.eof()) lx.fail("trailing data after motion frames");
    clip.validate();
    return {sk, std::move(clip)};
}

BvhResult parse_bvh_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open bvh file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_bvh(ss.str());
}

namespace {

void write_joint(std::ostream& os, const Skeleton& sk,
                 const std::vector<std::vector<int>>& ch, int j, int depth) {
    const std::string pad(size_t(depth) * 2, ' ');
    const Joint& joint = sk.joints[size_t(j)];
    os << pad << (j == 0 ? "ROOT " : "JOINT ") << joint.name << "\n" << pad << "{\n";
    const std::string pad2(size_t(depth + 1) * 2, ' ');
    os << pad2 << "OFFSET " << joint.offset.x << " " << joint.offset.y << " "
       << joint.offset.z << "\n";
    os << pad2 << "CHANNELS ";
    if (j == 0) os << "6 Xposition Yposition Zposition";
    else os << "3";
    for (char ax : sk.euler_order) os << " " << ax << "rotation";
    os << "\n";
    if (ch[size_t(j)].empty()) {
        os << pad2 << "End Site\n" << pad2 << "{\n";
        os << pad2 << "  OFFSET 0 0 0\n";
        os << pad2 << "}\n";
    } else {
        for (int c : ch[size_t(j)]) write_joint(os, sk, ch, c, depth + 1);
    }
    os << pad << "}\n";
}

} // namespace

std::string write_bvh(const Skeleton& sk, const MotionClip& clip) {
    clip.validate();
    std::vector<std::vector<int>> ch(sk.joints.size());
    for (int i = 1; i < sk.size(); ++i) ch[size_t(sk.joints[size_t(i)].parent)].push_back(i);

    std::ostringstream os;
    os.precision(8);
    os << "HIERARCHY\n";
    write_joint(os, sk, ch, 0, 0);
    os << "MOTION\n";
    os << "Frames: " << clip.frames() << "\n";
    os << "Frame Time: " << (1.0 / double(clip.fps)) << "\n";
    for (int f = 0; f < clip.frames(); ++f) {
        const Vec3& r = clip.root_pos[size_t(f)];
        os << r.x << " " << r.y << " " << r.z;
        for (int j = 0; j < sk.size(); ++j) {
            float x, y, z;
            euler_deg_from_quat(clip.rot[size_t(f)][size_t(j)], sk.euler_order, x, y, z);
            for (char ax : sk.euler_order)
                os << " " << (ax == 'X' ? x : ax == 'Y' ? y : z);
        }
        os << "\n";
    }
    return os.str();
}

void write_bvh_file(const std::string& path, const Skeleton& sk, const MotionClip& clip) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write bvh file: " + path);
    out << write_bvh(sk, clip);
    if (!out) throw Error("failed while writing bvh file: " + path);
}

} // namespace mstx
