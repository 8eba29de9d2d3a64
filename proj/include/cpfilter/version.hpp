#pragma once

namespace cpfilter {

inline constexpr const char* kVersion = "0.1.0";

// Version stamp written into every report/summary JSON document.
inline constexpr int kSchemaVersion = 1;

}  // namespace cpfilter
