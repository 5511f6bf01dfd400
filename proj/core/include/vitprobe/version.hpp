#pragma once

namespace vitprobe {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr unsigned kContainerVersion = 1;

}  // namespace vitprobe
