#pragma once

namespace zsugr {

inline constexpr const char* kLibraryVersion = "0.1.0";

} // namespace zsugr
