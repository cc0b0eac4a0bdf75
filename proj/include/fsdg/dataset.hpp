#pragma once

#include <span>
#include <string>
#include <vector>

#include "fsdg/hierarchy.hpp"
#include "fsdg/tensor.hpp"

namespace fsdg {

/// Labeled image set. `labels[g][i]` is sample i's class at level g.
struct Dataset {
  Tensor images;  // N x C x H x W, values in [0, 1]
  std::vector<std::vector<int>> labels;
  std::vector<std::string> domains;
  std::vector<std::string> ids;

  int size() const { return images.n; }
  int levels() const { return static_cast<int>(labels.size()); }
  const std::vector<int>& fine_labels() const { return labels.at(0); }

  Dataset subset(std::span<const int> indices) const;
  /// Samples whose domain tag equals `domain`.
  Dataset filter_domain(const std::string& domain) const;
  /// Throws DataError unless every label vector obeys `h`.
  void validate(const GranularityHierarchy& h) const;
};

/// Binary 8-bit PPM (P6) I/O; pixel values map linearly to [0, 1].
void write_ppm(const std::string& path, const Tensor& images, int index);
/// Reads one P6 image into a 1 x 3 x H x W tensor.
Tensor read_ppm(const std::string& path);

}  // namespace fsdg
