#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fsdg {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Batch of per-branch features, shape B x d x S with spatial extent flattened.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(int batch, int channels, int spatial, int level = 0)
      : batch_(batch), channels_(channels), spatial_(spatial), level_(level),
        values_(static_cast<std::size_t>(batch) * channels * spatial, 0.0) {}
  FeatureMap(int batch, int channels, int spatial, std::vector<double> values, int level = 0);

  int batch() const { return batch_; }
  int channels() const { return channels_; }
  int spatial() const { return spatial_; }
  int level() const { return level_; }
  void set_level(int g) { level_ = g; }

  double& at(int b, int c, int s) { return values_[index(b, c, s)]; }
  double at(int b, int c, int s) const { return values_[index(b, c, s)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  std::span<const double> channel(int b, int c) const {
    return {values_.data() + index(b, c, 0), static_cast<std::size_t>(spatial_)};
  }

  bool same_shape(const FeatureMap& o) const {
    return batch_ == o.batch_ && channels_ == o.channels_ && spatial_ == o.spatial_;
  }
  bool operator==(const FeatureMap& o) const { return same_shape(o) && values_ == o.values_; }

 private:
  std::size_t index(int b, int c, int s) const {
    return (static_cast<std::size_t>(b) * channels_ + c) * spatial_ + s;
  }

  int batch_ = 0;
  int channels_ = 0;
  int spatial_ = 0;
  int level_ = 0;
  std::vector<double> values_;
};

enum class Segment { Common = 0, Specific = 1, Confounding = 2 };

std::string_view segment_name(Segment s);

/// Channel-ratio contract. Counts use round/round/remainder:
/// d_c = round(r_c d), d_p = round(r_p d), d_n = d - d_c - d_p.
struct PartitionSpec {
  double r_c = 0.5;
  double r_p = 0.3;
  double r_n = 0.2;
  int d = 256;
  int d_c = 128;
  int d_p = 77;
  int d_n = 51;

  static PartitionSpec make(double r_c, double r_p, double r_n, int d);

  int begin(Segment s) const;
  int end(Segment s) const;
  int size(Segment s) const { return end(s) - begin(s); }
  /// Segment owning channel index `c`.
  Segment segment_of(int c) const;
};

/// Non-owning channel range of a FeatureMap.
class SegmentView {
 public:
  SegmentView(const FeatureMap& map, int offset, int count)
      : map_(&map), offset_(offset), count_(count) {}

  int batch() const { return map_->batch(); }
  int channels() const { return count_; }
  int spatial() const { return map_->spatial(); }
  int offset() const { return offset_; }
  double at(int b, int c, int s) const { return map_->at(b, offset_ + c, s); }
  std::span<const double> channel(int b, int c) const { return map_->channel(b, offset_ + c); }
  const FeatureMap& source() const { return *map_; }

  FeatureMap materialize() const;

 private:
  const FeatureMap* map_;
  int offset_;
  int count_;
};

struct PartitionedFeatures {
  SegmentView common;
  SegmentView specific;
  SegmentView confounding;
};

PartitionedFeatures partition(const FeatureMap& f, const PartitionSpec& spec);

/// Concatenates feature maps along the channel axis.
FeatureMap concat_channels(const std::vector<FeatureMap>& parts);

/// B x 3 x S tensor of per-segment channel means.
FeatureMap segment_prototypes(const FeatureMap& f, const PartitionSpec& spec);

/// Accumulates dL/dF into `grad_features` given dL/dP for P = segment_prototypes(F).
void segment_prototypes_backward(const FeatureMap& grad_prototypes, const PartitionSpec& spec,
                                 FeatureMap& grad_features);

enum class Metric { Cosine, Euclidean, Hsic };

Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric m);

/// n x n similarity between the rows of `rows`; larger means more similar
/// for every metric.
///   cosine:    normalized Gram matrix.
///   euclidean: -||r_i - r_j|| / sqrt(m).
///   hsic:      biased HSIC of the paired scalar samples (r_i[t], r_j[t]),
///              Gaussian kernels with median-distance bandwidth.
Matrix pairwise_similarity(const Matrix& rows, Metric metric);

/// dL/d(rows) given dL/d(similarity).
Matrix pairwise_similarity_backward(const Matrix& rows, Metric metric, const Matrix& grad_similarity);

}  // namespace fsdg
