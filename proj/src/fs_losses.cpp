#include "fsdg/fs_losses.hpp"

#include <cmath>

#include "fsdg/error.hpp"

namespace fsdg {

double similarity_excess(const Matrix& rows, Metric metric, Matrix* grad_rows) {
  const Matrix sim = pairwise_similarity(rows, metric);
  const double n = static_cast<double>(rows.rows());
  const double value = (sim.sum() - n) / (n * n);
  if (grad_rows) {
    const Matrix upstream = Matrix::Constant(rows.rows(), rows.rows(), 1.0 / (n * n));
    *grad_rows = pairwise_similarity_backward(rows, metric, upstream);
  }
  return value;
}

double decorrelation_loss(const FeatureMap& prototypes, Metric metric, FeatureMap* grad) {
  if (prototypes.channels() != 3) fail(ErrorCode::DimensionMismatch, "decorrelation expects B x 3 x S prototypes");
  if (prototypes.spatial() < 1 || prototypes.batch() < 1) fail(ErrorCode::DimensionMismatch, "empty prototypes");
  const int B = prototypes.batch();
  const int S = prototypes.spatial();
  if (grad) *grad = FeatureMap(B, 3, S, prototypes.level());
  double total = 0.0;
  Matrix rows(3, S);
  Matrix g;
  for (int b = 0; b < B; ++b) {
    for (int s = 0; s < 3; ++s) {
      auto src = prototypes.channel(b, s);
      for (int t = 0; t < S; ++t) rows(s, t) = src[t];
    }
    total += similarity_excess(rows, metric, grad ? &g : nullptr);
    if (grad) {
      for (int s = 0; s < 3; ++s) {
        for (int t = 0; t < S; ++t) grad->at(b, s, t) = g(s, t) / B;
      }
    }
  }
  return total / B;
}

double commonality_scale_similarity(const SegmentView& common_g, const SegmentView& common_g1,
                                    FeatureMap* grad_g, FeatureMap* grad_g1) {
  if (common_g.batch() != common_g1.batch()) {
    fail(ErrorCode::BatchMismatch, "S_cs: batch sizes differ between levels");
  }
  if (common_g.channels() != common_g1.channels() || common_g.spatial() != common_g1.spatial()) {
    fail(ErrorCode::DimensionMismatch, "S_cs: common segments must have equal width at both levels");
  }
  const int B = common_g.batch();
  const int C = common_g.channels();
  const int S = common_g.spatial();
  if (B < 1) fail(ErrorCode::BatchMismatch, "S_cs: empty batch");
  double total = 0.0;
  for (int b = 0; b < B; ++b) {
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (int c = 0; c < C; ++c) {
      auto u = common_g.channel(b, c);
      auto v = common_g1.channel(b, c);
      for (int t = 0; t < S; ++t) {
        dot += u[t] * v[t];
        nu += u[t] * u[t];
        nv += v[t] * v[t];
      }
    }
    if (!(nu > 0.0) || !(nv > 0.0)) fail(ErrorCode::ZeroVector, "S_cs: zero common segment");
    const double lu = std::sqrt(nu), lv = std::sqrt(nv);
    const double cosine = dot / (lu * lv);
    total += cosine;
    if (grad_g || grad_g1) {
      // d cos / du = v / (|u||v|) - cos u / |u|^2
      const double a = 1.0 / (lu * lv) / B;
      const double cu = cosine / nu / B;
      const double cv = cosine / nv / B;
      for (int c = 0; c < C; ++c) {
        auto u = common_g.channel(b, c);
        auto v = common_g1.channel(b, c);
        for (int t = 0; t < S; ++t) {
          if (grad_g) grad_g->at(b, common_g.offset() + c, t) += a * v[t] - cu * u[t];
          if (grad_g1) grad_g1->at(b, common_g1.offset() + c, t) += a * u[t] - cv * v[t];
        }
      }
    }
  }
  return total / B;
}

namespace {

// Spatially pooled, sample-averaged segment rows for each member set.
Matrix pooled_means(const SegmentView& seg, const std::vector<std::vector<int>>& members) {
  const int C = seg.channels();
  const int S = seg.spatial();
  Matrix out = Matrix::Zero(static_cast<Eigen::Index>(members.size()), C);
  for (std::size_t k = 0; k < members.size(); ++k) {
    if (members[k].empty()) fail(ErrorCode::EmptyGroup, "centroid over an empty sample set");
    for (int b : members[k]) {
      if (b < 0 || b >= seg.batch()) fail(ErrorCode::EmptyGroup, "group index outside the batch");
      for (int c = 0; c < C; ++c) {
        auto x = seg.channel(b, c);
        double sum = 0.0;
        for (int t = 0; t < S; ++t) sum += x[t];
        out(static_cast<Eigen::Index>(k), c) += sum / S;
      }
    }
    out.row(static_cast<Eigen::Index>(k)) /= static_cast<double>(members[k].size());
  }
  return out;
}

}  // namespace

std::map<int, CentroidSet> common_subcentroids(const SegmentView& common, const Grouping& grouping) {
  std::map<int, CentroidSet> out;
  for (const auto& [key, indices] : grouping) {
    CentroidSet& set = out[key.parent];
    set.segment = Segment::Common;
    set.level = common.source().level();
    set.class_ids.push_back(key.sub_class);
    set.members.push_back(indices);
  }
  for (auto& [parent, set] : out) set.centroids = pooled_means(common, set.members);
  return out;
}

double commonality_sibling_similarity(const CentroidSet& subcentroids, Metric metric, Matrix* grad_centroids) {
  if (subcentroids.centroids.rows() < 2) {
    if (grad_centroids) *grad_centroids = Matrix::Zero(subcentroids.centroids.rows(), subcentroids.centroids.cols());
    return 0.0;
  }
  return similarity_excess(subcentroids.centroids, metric, grad_centroids);
}

CentroidSet specificity_centroids(const SegmentView& specific, std::span<const int> labels, int level) {
  if (static_cast<int>(labels.size()) != specific.batch()) {
    fail(ErrorCode::BatchMismatch, "specificity_centroids: one label per sample required");
  }
  std::map<int, std::vector<int>> by_class;
  for (std::size_t b = 0; b < labels.size(); ++b) {
    if (labels[b] < 0) fail(ErrorCode::LabelOutOfRange, "negative class label");
    by_class[labels[b]].push_back(static_cast<int>(b));
  }
  CentroidSet set;
  set.level = level;
  set.segment = Segment::Specific;
  for (auto& [cls, members] : by_class) {
    set.class_ids.push_back(cls);
    set.members.push_back(std::move(members));
  }
  set.centroids = pooled_means(specific, set.members);
  return set;
}

double specificity_separation(const CentroidSet& centroids, Metric metric, Matrix* grad_centroids) {
  if (centroids.centroids.rows() < 2) {
    fail(ErrorCode::TooFewClasses, "S_p needs at least two classes in the batch");
  }
  return similarity_excess(centroids.centroids, metric, grad_centroids);
}

void centroids_backward(const CentroidSet& set, const SegmentView& segment, const Matrix& grad_centroids,
                        FeatureMap& grad_features) {
  const int C = segment.channels();
  const int S = segment.spatial();
  for (std::size_t k = 0; k < set.members.size(); ++k) {
    const double scale = 1.0 / (static_cast<double>(set.members[k].size()) * S);
    for (int b : set.members[k]) {
      for (int c = 0; c < C; ++c) {
        const double g = grad_centroids(static_cast<Eigen::Index>(k), c) * scale;
        double* dst = &grad_features.at(b, segment.offset() + c, 0);
        for (int t = 0; t < S; ++t) dst[t] += g;
      }
    }
  }
}

}  // namespace fsdg
