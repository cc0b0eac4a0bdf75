#include "fsdg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "fsdg/error.hpp"

namespace fsdg {

Tensor Tensor::gather(std::span<const int> indices) const {
  Tensor out(static_cast<int>(indices.size()), c, h, w);
  const std::size_t stride = static_cast<std::size_t>(c) * h * w;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const int b = indices[i];
    if (b < 0 || b >= n) fail(ErrorCode::ShapeMismatch, "gather index out of range");
    std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(b * stride), stride,
                out.data.begin() + static_cast<std::ptrdiff_t>(i * stride));
  }
  return out;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
  has_spare_ = true;
  return r * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t item) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(base) ^ stream) ^ item);
}

}  // namespace fsdg
