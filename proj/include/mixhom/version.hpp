#ifndef MIXHOM_VERSION_HPP
#define MIXHOM_VERSION_HPP

namespace mixhom {

inline constexpr const char* kToolName = "mixhom";
// Bump when report or cache layouts change; the calibration cache embeds it.
inline constexpr const char* kVersion = "0.1.0";

}  // namespace mixhom

#endif  // MIXHOM_VERSION_HPP
