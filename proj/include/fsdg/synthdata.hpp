#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "fsdg/dataset.hpp"
#include "fsdg/hierarchy.hpp"

namespace fsdg {

/// Nuisance rendering style of one domain. Nothing here depends on the class.
struct DomainStyle {
  std::string name;
  int palette = 0;         // background palette index (0 muted, 1 vivid, 2 dark)
  double texture = 0.0;    // background texture amplitude in [0, 1]
  int blur = 0;            // box-blur radius in pixels
  double contrast = 1.0;   // contrast scale about mid-grey
  std::array<double, 3> cast{0.0, 0.0, 0.0};  // additive RGB tint
};

std::vector<DomainStyle> default_domains();

struct SynthSpec {
  /// Class counts, fine level first. Each count must divide the one below.
  std::vector<int> classes_per_level{16, 8, 4, 2};
  int samples_per_class = 20;  // per domain
  int image_size = 32;
  std::vector<DomainStyle> domains = default_domains();
  double noise = 0.03;  // pixel noise standard deviation
  std::uint64_t seed = 0;

  /// Throws InconsistentBranching or ConfigError.
  void validate() const;
  GranularityHierarchy hierarchy() const;
};

struct SynthData {
  GranularityHierarchy hierarchy;
  std::vector<Dataset> domains;  // parallel to SynthSpec::domains
};

SynthData generate(const SynthSpec& spec);

}  // namespace fsdg
