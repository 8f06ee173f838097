#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace demoval {

// Hex-encoded SHA-256 of a byte string.
std::string sha256_hex(std::string_view data);

// Stable 64-bit string hash (FNV-1a). Used where we need a process- and
// platform-independent hash, which std::hash does not guarantee.
std::uint64_t fnv1a64(std::string_view data);

// splitmix64 mixing step; stable across platforms.
std::uint64_t splitmix64(std::uint64_t x);

// Deterministic per-index substream seed derived from a base seed.
std::uint64_t derive_seed(std::uint64_t base_seed, std::uint64_t index);

// Deterministic value in [0,1) keyed by (salt, key).
double hash01(std::uint64_t salt, std::string_view key);

}  // namespace demoval
