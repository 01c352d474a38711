#pragma once

namespace glab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace glab
