#pragma once

namespace oadn {

inline constexpr const char* kVersion = "0.1.0";

// Bumped whenever the random stream derivation or any on-disk layout changes.
inline constexpr int kFormatVersion = 1;

}  // namespace oadn
