#pragma once

namespace tommy {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tommy
