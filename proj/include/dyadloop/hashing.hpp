#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace dyadloop {

/// 64-bit FNV-1a. Stable across platforms; used for content fingerprints.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL) noexcept;

/// SplitMix64 finalizer; a bijective mixer for seeds and hash values.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Fixed-width lowercase hex of a 64-bit value.
std::string to_hex(std::uint64_t v);
std::uint64_t from_hex(std::string_view hex);

} // namespace dyadloop
