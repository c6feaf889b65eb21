#pragma once

namespace vltaboo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace vltaboo
