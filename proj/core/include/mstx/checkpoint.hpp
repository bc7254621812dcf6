#pragma once

#include "mstx/nn.hpp"

#include <cstdint>
#include <string>

namespace mstx {

enum class CkptKind : uint32_t {
    fdelta = 1,
    manifold = 2,
    transfer = 3,
    classifier = 4,
};

constexpr uint32_t kCkptVersion = 1;

// Binary layout, little-endian: "MSTX", u32 version, u32 kind, u32 record
// count, then per record (u32 name length, name bytes, u32 ndim, u32 dims[],
// f32 payload[]), and a trailing FNV-1a-64 checksum of everything before it.
void save_checkpoint(const std::string& path, CkptKind kind, const nn::NamedParams& params);

// Verifies magic, version, kind, and checksum; throws Error on any mismatch.
nn::NamedParams load_checkpoint(const std::string& path, CkptKind expected);

// Kind tag alone (magic and version still verified); lets callers route a
// self-describing checkpoint to the right loader.
CkptKind peek_checkpoint_kind(const std::string& path);

// Copies stored values into an already-built model's parameters; every name
// and shape must match exactly and every stored record must be consumed.
void assign_params(const nn::NamedParams& stored, const nn::NamedParams& model);

// FNV-1a over the raw float bytes of all parameters, in order. Used to prove
// frozen models did not drift.
uint64_t params_checksum(const nn::NamedParams& params);

} // namespace mstx
