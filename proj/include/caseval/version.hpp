#pragma once

namespace caseval {

inline constexpr const char* kToolName = "caseval";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace caseval
