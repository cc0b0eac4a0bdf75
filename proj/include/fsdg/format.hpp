#pragma once

#include <string>

namespace fsdg {

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);

/// Inverse of format_double; throws DataError on malformed text.
double parse_double(const std::string& text);

}  // namespace fsdg
