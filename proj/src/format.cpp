#include "fsdg/format.hpp"

#include <charconv>
#include <cmath>

#include "fsdg/error.hpp"

namespace fsdg {

std::string format_double(double v) {
  if (v == 0.0) return "0";  // folds -0
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* end = text.data() + text.size();
  const auto r = std::from_chars(text.data(), end, v);
  if (r.ec != std::errc() || r.ptr != end) fail(ErrorCode::DataError, "not a number: '" + text + "'");
  return v;
}

}  // namespace fsdg
