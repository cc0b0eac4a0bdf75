#pragma once

#include <map>
#include <span>
#include <vector>

#include "fsdg/featurespace.hpp"
#include "fsdg/hierarchy.hpp"

namespace fsdg {

/// One centroid row per class present in the batch.
struct CentroidSet {
  Matrix centroids;            // K x m
  std::vector<int> class_ids;  // K unique ids, row order
  int level = 0;
  Segment segment = Segment::Common;
  /// Sample indices averaged into each row, used by the backward pass.
  std::vector<std::vector<int>> members;
};

/// Mean over all n x n entries of (similarity - I). When `grad_rows` is set
/// it receives dValue/d(rows).
double similarity_excess(const Matrix& rows, Metric metric, Matrix* grad_rows = nullptr);

/// Decorrelation of the three segment prototypes, averaged over the batch.
/// `grad` (same shape as `prototypes`) receives dL/dP when given.
double decorrelation_loss(const FeatureMap& prototypes, Metric metric, FeatureMap* grad = nullptr);

/// Batch-mean cosine between every sample's flattened common segment at two
/// adjacent levels. Gradients are accumulated into the full-width maps.
double commonality_scale_similarity(const SegmentView& common_g, const SegmentView& common_g1,
                                    FeatureMap* grad_g = nullptr, FeatureMap* grad_g1 = nullptr);

/// Sub-centroids (spatial GAP, then mean over B_{k,q,g}) per parent class.
std::map<int, CentroidSet> common_subcentroids(const SegmentView& common, const Grouping& grouping);

/// Mean of (similarity - I) among one parent's sub-centroids. Parents with a
/// single sampled sub-class contribute nothing and return 0.
double commonality_sibling_similarity(const CentroidSet& subcentroids, Metric metric,
                                      Matrix* grad_centroids = nullptr);

/// Per-class centroid of the specific segment at one level.
CentroidSet specificity_centroids(const SegmentView& specific, std::span<const int> labels, int level);

/// Mean of (similarity - I) over the class centroids; throws TooFewClasses
/// when fewer than two classes are present.
double specificity_separation(const CentroidSet& centroids, Metric metric, Matrix* grad_centroids = nullptr);

/// Scatters dL/d(centroid rows) back onto the segment of the feature map.
void centroids_backward(const CentroidSet& set, const SegmentView& segment, const Matrix& grad_centroids,
                        FeatureMap& grad_features);

}  // namespace fsdg
