#pragma once

namespace krigdes {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace krigdes
