#pragma once

namespace mlrem {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mlrem
