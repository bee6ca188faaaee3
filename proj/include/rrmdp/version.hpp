#pragma once

namespace rrmdp {

inline constexpr const char* kVersion = "0.1.0";

} // namespace rrmdp
