#pragma once

#include <string>

namespace persona::io {

// Shortest round-trip decimal form; keeps CSV/text artifacts byte-stable.
std::string fmt_double(double v);

bool file_exists(const std::string& path);

} // namespace persona::io
