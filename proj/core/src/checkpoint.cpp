#include "mstx/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>

namespace mstx {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'T', 'X'};

uint64_t fnv1a(const uint8_t* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
    for (size_t i = 0; i < n; ++i) {
        h ^= bytes[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

void put_u32(std::vector<uint8_t>& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(uint8_t(v >> (8 * i)));
}

void put_f32(std::vector<uint8_t>& buf, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::vector<uint8_t>& buf;
    size_t pos = 0;

    void need(size_t n) const {
        if (pos + n > buf.size()) throw Error("checkpoint truncated");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= uint32_t(buf[pos + size_t(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        uint64_t lo = u32(), hi = u32();
        return lo | (hi << 32);
    }
    float f32() {
        uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
        pos += n;
        return s;
    }
};

} // namespace

void save_checkpoint(const std::string& path, CkptKind kind, const nn::NamedParams& params) {
    std::vector<uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put_u32(buf, kCkptVersion);
    put_u32(buf, uint32_t(kind));
    put_u32(buf, uint32_t(params.size()));
    for (const auto& [name, t] : params) {
        if (!t.defined()) throw Error("checkpoint: undefined tensor for " + name);
        put_u32(buf, uint32_t(name.size()));
        buf.insert(buf.end(), name.begin(), name.end());
        put_u32(buf, uint32_t(t.ndim()));
        for (int d = 0; d < t.ndim(); ++d) put_u32(buf, uint32_t(t.dim(d)));
        for (int i = 0; i < t.size(); ++i) put_f32(buf, t.at(i));
    }
    uint64_t sum = fnv1a(buf.data(), buf.size());
    put_u32(buf, uint32_t(sum));
    put_u32(buf, uint32_t(sum >> 32));

    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw Error("checkpoint: cannot open " + path + " for writing");
    size_t written = std::fwrite(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (written != buf.size()) throw Error("checkpoint: short write to " + path);
}

nn::NamedParams load_checkpoint(const std::string& path, CkptKind expected) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw Error("checkpoint: cannot open " + path);
    std::fseek(f, 0, SEEK_END);
    long len = std::ftell(f);
    std::fseek(f, 0, SEEK_SET);
    std::vector<uint8_t> buf(size_t(len > 0 ? len : 0));
    size_t got = std::fread(buf.data(), 1, buf.size(), f);
    std::fclose(f);
    if (got != buf.size()) throw Error("checkpoint: short read from " + path);
    if (buf.size() < 24) throw Error("checkpoint truncated");

    if (std::memcmp(buf.data(), kMagic, 4) != 0) throw Error("checkpoint: bad magic in " + path);
    uint64_t stored_sum = 0;
    for (int i = 0; i < 8; ++i)
        stored_sum |= uint64_t(buf[buf.size() - 8 + size_t(i)]) << (8 * i);
    if (fnv1a(buf.data(), buf.size() - 8) != stored_sum)
        throw Error("checkpoint: checksum mismatch in " + path);

    Reader r{buf};
    r.pos = 4;
    uint32_t version = r.u32();
    if (version != kCkptVersion)
        throw Error("checkpoint: unsupported version " + std::to_string(version));
    uint32_t kind = r.u32();
    if (kind != uint32_t(expected))
        throw Error("checkpoint: kind mismatch in " + path + " (stored " + std::to_string(kind) +
                    ", expected " + std::to_string(uint32_t(expected)) + ")");

    uint32_t count = r.u32();
    nn::NamedParams out;
    out.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = r.str(r.u32());
        uint32_t ndim = r.u32();
        Shape shape;
        for (uint32_t d = 0; d < ndim; ++d) shape.push_back(int(r.u32()));
        int n = shape_size(shape);
        std::vector<float> values(static_cast<size_t>(n));
        for (int k = 0; k < n; ++k) values[size_t(k)] = r.f32();
        out.emplace_back(std::move(name), Tensor(shape, std::move(values)));
    }
    if (r.pos != buf.size() - 8) throw Error("checkpoint: trailing bytes in " + path);
    return out;
}

CkptKind peek_checkpoint_kind(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw Error("checkpoint: cannot open " + path);
    uint8_t head[12];
    size_t got = std::fread(head, 1, sizeof(head), f);
    std::fclose(f);
    if (got != sizeof(head)) throw Error("checkpoint truncated");
    if (std::memcmp(head, kMagic, 4) != 0) throw Error("checkpoint: bad magic in " + path);
    uint32_t version = 0, kind = 0;
    for (int i = 0; i < 4; ++i) {
        version |= uint32_t(head[4 + i]) << (8 * i);
        kind |= uint32_t(head[8 + i]) << (8 * i);
    }
    if (version != kCkptVersion)
        throw Error("checkpoint: unsupported version " + std::to_string(version));
    if (kind < 1 || kind > 4) throw Error("checkpoint: unknown kind in " + path);
    return CkptKind(kind);
}

void assign_params(const nn::NamedParams& stored, const nn::NamedParams& model) {
    if (stored.size() != model.size())
        throw Error("checkpoint: parameter count mismatch (" + std::to_string(stored.size()) +
                    " stored, " + std::to_string(model.size()) + " in model)");
    for (size_t i = 0; i < stored.size(); ++i) {
        const auto& [sname, sval] = stored[i];
        const auto& [mname, mval] = model[i];
        if (sname != mname)
            throw Error("checkpoint: name mismatch at record " + std::to_string(i) + ": " +
                        sname + " vs " + mname);
        if (sval.shape() != mval.shape())
            throw Error("checkpoint: shape mismatch for " + sname + ": " +
                        shape_str(sval.shape()) + " vs " + shape_str(mval.shape()));
        Tensor dst = mval;
        std::memcpy(dst.data(), sval.data(), sizeof(float) * size_t(sval.size()));
    }
}

uint64_t params_checksum(const nn::NamedParams& params) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, t] : params) {
        h = fnv1a(reinterpret_cast<const uint8_t*>(name.data()), name.size(), h);
        h = fnv1a(reinterpret_cast<const uint8_t*>(t.data()), sizeof(float) * size_t(t.size()), h);
    }
    return h;
}

} // namespace mstx
