#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fsdg/dataset.hpp"
#include "fsdg/featurespace.hpp"
#include "fsdg/hierarchy.hpp"
#include "fsdg/network.hpp"

namespace fsdg {

inline constexpr int kRecordsPerChannel = 40;
inline constexpr int kTopConcepts = 26;

struct RelevanceRecord {
  int sample = 0;
  std::string id;
  double relevance = 0.0;
  int label = 0;
};

struct ConceptRelevanceTable {
  int channels = 0;
  int classes = 0;
  /// Per channel, at most kRecordsPerChannel records sorted by relevance, descending.
  std::vector<std::vector<RelevanceRecord>> records;
  Matrix class_scores;                    // classes x channels
  std::vector<std::vector<int>> rankings;  // per class, a permutation of [0, channels)
};

/// Builds the table from pooled T_0 activations (N x d) and the fine
/// classifier weights (K x d). Relevance of channel j for sample x is
/// a_j(x) * w_{y(x), j}. Throws UntrainedModel if the weights are empty or zero.
ConceptRelevanceTable relevance_from_activations(const Matrix& pooled, const Matrix& weights,
                                                 std::span<const int> labels,
                                                 const std::vector<std::string>& ids = {},
                                                 int records_per_channel = kRecordsPerChannel);

ConceptRelevanceTable compute_relevance(const InferenceModel& model, const Dataset& data,
                                        int records_per_channel = kRecordsPerChannel);

/// First `top_k` channels of class k's ranking. Throws OutOfRangeClass.
std::vector<int> top_concepts(const ConceptRelevanceTable& table, int k, int top_k = kTopConcepts);

struct OverlapMatrix {
  std::vector<int> classes;
  int top_k = 0;
  std::vector<std::vector<int>> values;  // diagonal = top_k
};

/// Pairwise |top(i) & top(j)|, optionally counting only channels of one
/// segment. Throws DimensionMismatch if `spec` does not match the table.
OverlapMatrix overlap_matrix(const ConceptRelevanceTable& table, const std::vector<int>& classes, int top_k,
                             std::optional<Segment> restrict_to, const PartitionSpec& spec);

struct OverlapStats {
  int cls = 0;
  int all = 0, com = 0, spe = 0, conf = 0;
  double ratio_com = 0.0;
};

/// Per class sums of overlaps with every other listed class.
std::vector<OverlapStats> segment_overlap_stats(const ConceptRelevanceTable& table, const std::vector<int>& classes,
                                                int top_k, const PartitionSpec& spec);

/// S_class between the listed fine classes; diagonal = G. Throws OutOfRangeClass.
std::vector<std::vector<int>> ground_truth_matrix(const GranularityHierarchy& h, const std::vector<int>& classes);

/// Spearman correlation of the strictly lower triangles, average ranks for
/// ties. Returns 0 when either triangle is constant. Throws TooFewPairs.
double spearman(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b);
double spearman(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b);

/// Average ranks (1-based), ties share the mean of their positions.
std::vector<double> average_ranks(std::span<const double> v);

void write_relevance_jsonl(std::ostream& out, const ConceptRelevanceTable& table);

/// CSV with a `class` header row followed by the class ids.
void write_matrix_csv(std::ostream& out, const std::vector<int>& classes, const std::vector<std::vector<int>>& m);
struct ClassMatrix {
  std::vector<int> classes;
  std::vector<std::vector<int>> values;
};
ClassMatrix read_matrix_csv(std::istream& in);

void write_stats_csv(std::ostream& out, const std::vector<OverlapStats>& stats);
std::vector<OverlapStats> read_stats_csv(std::istream& in);

}  // namespace fsdg
