#pragma once

#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace fsdg {

/// Element g is the level-g ancestor of a fine class; element 0 is the fine id.
using ClassVector = std::vector<int>;

/// G-level label tree. Level 0 is the fine level, level G-1 the coarsest.
///
/// Immutable once constructed; every constructor path validates that the
/// parent maps are total and functional and that ids at each level are the
/// dense range [0, K_g).
class GranularityHierarchy {
 public:
  GranularityHierarchy() = default;

  /// Builds from one row per fine class, ordered fine to coarse. Rows may be
  /// given in any order; row[0] is the fine id.
  static GranularityHierarchy from_rows(std::vector<std::vector<int>> rows);

  int levels() const { return static_cast<int>(classes_per_level_.size()); }
  const std::vector<int>& classes_per_level() const { return classes_per_level_; }
  int num_classes(int level) const;
  int num_fine() const { return num_classes(0); }

  /// Level-(g+1) parent of class `cls` at level g.
  int parent(int level, int cls) const;
  /// Level-g ancestor of a fine class (level 0 returns the id itself).
  int ancestor(int fine_id, int level) const;
  /// Number of fine classes below class `cls` at `level`.
  int descendant_count(int level, int cls) const;

  /// Row per fine class, fine to coarse, indexed by fine id.
  const std::vector<ClassVector>& rows() const { return rows_; }

  /// Stable 64-bit digest of the tree, recorded in checkpoints and run.json.
  std::uint64_t hash() const;

  bool operator==(const GranularityHierarchy&) const = default;

 private:
  std::vector<int> classes_per_level_;
  std::vector<ClassVector> rows_;
  std::vector<std::vector<int>> parents_;      // [level][cls] for level < G-1
  std::vector<std::vector<int>> descendants_;  // [level][cls]
};

GranularityHierarchy parse_hierarchy(std::istream& in);
GranularityHierarchy load_hierarchy(const std::filesystem::path& path);
void write_hierarchy(std::ostream& out, const GranularityHierarchy& h);
void save_hierarchy(const std::filesystem::path& path, const GranularityHierarchy& h);

/// Hierarchy derived from per-sample string label paths (fine to coarse),
/// with dense ids assigned in order of first appearance at each level.
struct LabeledHierarchy {
  GranularityHierarchy hierarchy;
  std::vector<std::vector<std::string>> names;  // [level][id]
  std::vector<int> fine_ids;                    // per input path
};

LabeledHierarchy hierarchy_from_label_paths(
    const std::vector<std::vector<std::string>>& paths);

/// Writes the optional `id<TAB>name` sidecar, one `#level g` block per level.
void save_label_names(const std::filesystem::path& path,
                      const std::vector<std::vector<std::string>>& names);

ClassVector class_vector(const GranularityHierarchy& h, int fine_id);

/// G minus the number of hierarchy levels at which the two classes differ.
int class_distance(const GranularityHierarchy& h, int i, int j);

struct GroupKey {
  int parent = 0;
  int sub_class = 0;
  auto operator<=>(const GroupKey&) const = default;
};

/// Sample index sets keyed by (parent at g+1, sub-class at g). Sub-classes
/// with no sample in the batch do not appear.
using Grouping = std::map<GroupKey, std::vector<int>>;

Grouping group_by_parent(const GranularityHierarchy& h,
                         std::span<const int> fine_labels, int level);

/// Spreads a level-g distribution over the fine classes, dividing each
/// ancestor's mass evenly among its fine descendants.
std::vector<double> expand_coarse_distribution(const GranularityHierarchy& h,
                                               std::span<const double> coarse_probs,
                                               int level);

}  // namespace fsdg
