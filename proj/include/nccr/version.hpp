#pragma once

namespace nccr {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace nccr
