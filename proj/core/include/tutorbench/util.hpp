#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace tutorbench {

/// Hex-encoded SHA-256 of the given bytes.
std::string sha256_hex(std::string_view data);

/// Copy of `s` with leading/trailing ASCII whitespace removed.
std::string_view trim(std::string_view s);

/// True if `s` is empty after trimming.
bool is_blank(std::string_view s);

/// splitmix64 step; used to derive per-call seeds and presentation coins.
std::uint64_t splitmix64(std::uint64_t x);

/// FNV-1a over bytes, for mixing strings into seeds. Not for content digests.
std::uint64_t fnv1a64(std::string_view s);

/// Fixed-point decimal formatting with round-half-away-from-zero.
/// format_fixed(0.1235, 3) == "0.124", format_fixed(-0.0005, 3) == "-0.001".
std::string format_fixed(double value, int decimals);

}  // namespace tutorbench
