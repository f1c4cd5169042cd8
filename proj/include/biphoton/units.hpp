#pragma once

namespace biphoton::units {

// Length scale factors relative to meters.
inline constexpr double meter = 1.0;
inline constexpr double centimeter = 1e-2;
inline constexpr double millimeter = 1e-3;
inline constexpr double micrometer = 1e-6;
inline constexpr double nanometer = 1e-9;

// Time scale factors relative to seconds.
inline constexpr double second = 1.0;
inline constexpr double millisecond = 1e-3;
inline constexpr double microsecond = 1e-6;
inline constexpr double nanosecond = 1e-9;
inline constexpr double picosecond = 1e-12;

}  // namespace biphoton::units
