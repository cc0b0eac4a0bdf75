#include "fsdg/featurespace.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fsdg/error.hpp"

namespace fsdg {

FeatureMap::FeatureMap(int batch, int channels, int spatial, std::vector<double> values, int level)
    : batch_(batch), channels_(channels), spatial_(spatial), level_(level), values_(std::move(values)) {
  if (values_.size() != static_cast<std::size_t>(batch) * channels * spatial) {
    fail(ErrorCode::DimensionMismatch, "feature values do not match B x d x S");
  }
}

std::string_view segment_name(Segment s) {
  switch (s) {
    case Segment::Common: return "common";
    case Segment::Specific: return "specific";
    case Segment::Confounding: return "confounding";
  }
  return "?";
}

PartitionSpec PartitionSpec::make(double r_c, double r_p, double r_n, int d) {
  for (double r : {r_c, r_p, r_n}) {
    if (!(r >= 0.0 && r <= 1.0)) fail(ErrorCode::ConfigError, "partition ratios must lie in [0, 1]");
  }
  if (std::abs(r_c + r_p + r_n - 1.0) > 1e-9) {
    fail(ErrorCode::ConfigError, "partition ratios must sum to 1");
  }
  if (d < 1) fail(ErrorCode::ConfigError, "partition needs d >= 1");
  PartitionSpec s;
  s.r_c = r_c;
  s.r_p = r_p;
  s.r_n = r_n;
  s.d = d;
  // The nudge keeps decimal ratios such as 0.45 rounding half-up.
  s.d_c = static_cast<int>(std::round(r_c * d + 1e-9));
  s.d_c = std::min(s.d_c, d);
  s.d_p = static_cast<int>(std::round(r_p * d + 1e-9));
  s.d_p = std::min(s.d_p, d - s.d_c);
  s.d_n = d - s.d_c - s.d_p;
  return s;
}

int PartitionSpec::begin(Segment s) const {
  switch (s) {
    case Segment::Common: return 0;
    case Segment::Specific: return d_c;
    case Segment::Confounding: return d_c + d_p;
  }
  return 0;
}

int PartitionSpec::end(Segment s) const {
  switch (s) {
    case Segment::Common: return d_c;
    case Segment::Specific: return d_c + d_p;
    case Segment::Confounding: return d;
  }
  return d;
}

Segment PartitionSpec::segment_of(int c) const {
  if (c < d_c) return Segment::Common;
  if (c < d_c + d_p) return Segment::Specific;
  return Segment::Confounding;
}

FeatureMap SegmentView::materialize() const {
  FeatureMap out(batch(), count_, spatial(), map_->level());
  for (int b = 0; b < batch(); ++b) {
    for (int c = 0; c < count_; ++c) {
      auto src = channel(b, c);
      std::copy(src.begin(), src.end(), &out.at(b, c, 0));
    }
  }
  return out;
}

PartitionedFeatures partition(const FeatureMap& f, const PartitionSpec& spec) {
  if (spec.d != f.channels()) {
    fail(ErrorCode::DimensionMismatch, "partition expects " + std::to_string(spec.d) +
                                           " channels, feature map has " + std::to_string(f.channels()));
  }
  return {SegmentView(f, spec.begin(Segment::Common), spec.d_c),
          SegmentView(f, spec.begin(Segment::Specific), spec.d_p),
          SegmentView(f, spec.begin(Segment::Confounding), spec.d_n)};
}

FeatureMap concat_channels(const std::vector<FeatureMap>& parts) {
  if (parts.empty()) return {};
  const int batch = parts.front().batch();
  const int spatial = parts.front().spatial();
  int channels = 0;
  for (const auto& p : parts) {
    if (p.batch() != batch || p.spatial() != spatial) {
      fail(ErrorCode::DimensionMismatch, "concat_channels: batch or spatial mismatch");
    }
    channels += p.channels();
  }
  FeatureMap out(batch, channels, spatial, parts.front().level());
  for (int b = 0; b < batch; ++b) {
    int offset = 0;
    for (const auto& p : parts) {
      for (int c = 0; c < p.channels(); ++c) {
        auto src = p.channel(b, c);
        std::copy(src.begin(), src.end(), &out.at(b, offset + c, 0));
      }
      offset += p.channels();
    }
  }
  return out;
}

FeatureMap segment_prototypes(const FeatureMap& f, const PartitionSpec& spec) {
  if (spec.d != f.channels()) fail(ErrorCode::DimensionMismatch, "segment_prototypes: channel count mismatch");
  if (spec.d_c == 0 || spec.d_p == 0 || spec.d_n == 0) {
    fail(ErrorCode::EmptySegment, "prototypes need three non-empty segments");
  }
  const int S = f.spatial();
  FeatureMap protos(f.batch(), 3, S, f.level());
  for (int b = 0; b < f.batch(); ++b) {
    for (int seg = 0; seg < 3; ++seg) {
      const auto s = static_cast<Segment>(seg);
      double* dst = &protos.at(b, seg, 0);
      for (int c = spec.begin(s); c < spec.end(s); ++c) {
        auto src = f.channel(b, c);
        for (int t = 0; t < S; ++t) dst[t] += src[t];
      }
      const double inv = 1.0 / spec.size(s);
      for (int t = 0; t < S; ++t) dst[t] *= inv;
    }
  }
  return protos;
}

void segment_prototypes_backward(const FeatureMap& grad_prototypes, const PartitionSpec& spec,
                                 FeatureMap& grad_features) {
  const int S = grad_features.spatial();
  for (int b = 0; b < grad_features.batch(); ++b) {
    for (int seg = 0; seg < 3; ++seg) {
      const auto s = static_cast<Segment>(seg);
      const double inv = 1.0 / spec.size(s);
      auto g = grad_prototypes.channel(b, seg);
      for (int c = spec.begin(s); c < spec.end(s); ++c) {
        double* dst = &grad_features.at(b, c, 0);
        for (int t = 0; t < S; ++t) dst[t] += g[t] * inv;
      }
    }
  }
}

Metric parse_metric(std::string_view name) {
  if (name == "cosine") return Metric::Cosine;
  if (name == "euclidean") return Metric::Euclidean;
  if (name == "hsic") return Metric::Hsic;
  fail(ErrorCode::ConfigError, "unknown metric '" + std::string(name) + "'");
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Cosine: return "cosine";
    case Metric::Euclidean: return "euclidean";
    case Metric::Hsic: return "hsic";
  }
  return "?";
}

namespace {

void check_rows(const Matrix& rows) {
  if (rows.rows() < 2) fail(ErrorCode::DimensionMismatch, "pairwise_similarity needs at least 2 rows");
  if (rows.cols() < 1) fail(ErrorCode::DimensionMismatch, "pairwise_similarity needs non-empty rows");
}

Eigen::VectorXd row_norms(const Matrix& rows) {
  Eigen::VectorXd norms = rows.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (!(norms[i] > 0.0)) fail(ErrorCode::ZeroVector, "cosine similarity of a zero row");
  }
  return norms;
}

// Gaussian kernel over the scalar samples of one row, with the bandwidth set
// to the median pairwise distance. Records which pair(s) the median came from
// so the bandwidth can be differentiated.
struct RowKernel {
  Matrix kernel;    // m x m
  Matrix centered;  // H K H
  double sigma = 0.0;
  std::vector<std::pair<int, int>> median_pairs;  // one or two pairs
};

RowKernel row_kernel(const double* x, int m) {
  if (m < 2) fail(ErrorCode::DegenerateBandwidth, "HSIC needs at least 2 samples per row");
  struct Dist {
    double d;
    int t, s;
  };
  std::vector<Dist> dists;
  dists.reserve(static_cast<std::size_t>(m) * (m - 1) / 2);
  for (int t = 0; t < m; ++t) {
    for (int s = t + 1; s < m; ++s) dists.push_back({std::abs(x[t] - x[s]), t, s});
  }
  const std::size_t n = dists.size();
  auto by_d = [](const Dist& a, const Dist& b) { return a.d < b.d; };
  RowKernel rk;
  std::nth_element(dists.begin(), dists.begin() + n / 2, dists.end(), by_d);
  const Dist hi = dists[n / 2];
  if (n % 2 == 1) {
    rk.sigma = hi.d;
    rk.median_pairs = {{hi.t, hi.s}};
  } else {
    const Dist lo = *std::max_element(dists.begin(), dists.begin() + n / 2, by_d);
    rk.sigma = 0.5 * (lo.d + hi.d);
    rk.median_pairs = {{lo.t, lo.s}, {hi.t, hi.s}};
  }
  if (!(rk.sigma > 0.0)) fail(ErrorCode::DegenerateBandwidth, "HSIC bandwidth is zero (samples equal)");

  const double inv2s2 = 1.0 / (2.0 * rk.sigma * rk.sigma);
  rk.kernel.resize(m, m);
  for (int t = 0; t < m; ++t) {
    rk.kernel(t, t) = 1.0;
    for (int s = t + 1; s < m; ++s) {
      const double diff = x[t] - x[s];
      rk.kernel(t, s) = rk.kernel(s, t) = std::exp(-diff * diff * inv2s2);
    }
  }
  // H K H with H = I - 11^T / m.
  Eigen::VectorXd row_mean = rk.kernel.rowwise().mean();
  const double total_mean = row_mean.mean();
  rk.centered = rk.kernel;
  for (int t = 0; t < m; ++t) {
    for (int s = 0; s < m; ++s) rk.centered(t, s) += total_mean - row_mean[t] - row_mean[s];
  }
  return rk;
}

std::vector<RowKernel> row_kernels(const Matrix& rows) {
  std::vector<RowKernel> out;
  out.reserve(rows.rows());
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    out.push_back(row_kernel(rows.row(i).data(), static_cast<int>(rows.cols())));
  }
  return out;
}

}  // namespace

Matrix pairwise_similarity(const Matrix& rows, Metric metric) {
  check_rows(rows);
  const Eigen::Index n = rows.rows();
  switch (metric) {
    case Metric::Cosine: {
      const Eigen::VectorXd norms = row_norms(rows);
      Matrix unit = norms.cwiseInverse().asDiagonal() * rows;
      Matrix sim = unit * unit.transpose();
      // Mirror the upper triangle so the result is exactly symmetric.
      sim.triangularView<Eigen::StrictlyLower>() = sim.transpose();
      sim.diagonal().setOnes();
      return sim;
    }
    case Metric::Euclidean: {
      const double scale = 1.0 / std::sqrt(static_cast<double>(rows.cols()));
      Matrix sim = Matrix::Zero(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
          sim(i, j) = sim(j, i) = -(rows.row(i) - rows.row(j)).norm() * scale;
        }
      }
      return sim;
    }
    case Metric::Hsic: {
      const auto kernels = row_kernels(rows);
      const double m = static_cast<double>(rows.cols());
      const double norm = 1.0 / ((m - 1.0) * (m - 1.0));
      Matrix sim(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
          sim(i, j) = sim(j, i) = (kernels[i].kernel.cwiseProduct(kernels[j].centered)).sum() * norm;
        }
      }
      return sim;
    }
  }
  return {};
}

Matrix pairwise_similarity_backward(const Matrix& rows, Metric metric, const Matrix& grad_similarity) {
  check_rows(rows);
  const Eigen::Index n = rows.rows();
  const Eigen::Index m = rows.cols();
  if (grad_similarity.rows() != n || grad_similarity.cols() != n) {
    fail(ErrorCode::DimensionMismatch, "similarity gradient must be n x n");
  }
  Matrix grad = Matrix::Zero(n, m);
  switch (metric) {
    case Metric::Cosine: {
      const Eigen::VectorXd norms = row_norms(rows);
      Matrix unit = norms.cwiseInverse().asDiagonal() * rows;
      Matrix sym = grad_similarity + grad_similarity.transpose();
      // The diagonal is pinned to 1 and carries no gradient.
      sym.diagonal().setZero();
      Matrix grad_unit = sym * unit;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double radial = grad_unit.row(i).dot(unit.row(i));
        grad.row(i) = (grad_unit.row(i) - radial * unit.row(i)) / norms[i];
      }
      return grad;
    }
    case Metric::Euclidean: {
      const double scale = 1.0 / std::sqrt(static_cast<double>(m));
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) {
          Eigen::RowVectorXd diff = rows.row(i) - rows.row(j);
          const double dist = diff.norm();
          if (dist == 0.0) continue;
          const double g = (grad_similarity(i, j) + grad_similarity(j, i)) * (-scale / dist);
          grad.row(i) += g * diff;
          grad.row(j) -= g * diff;
        }
      }
      return grad;
    }
    case Metric::Hsic: {
      const auto kernels = row_kernels(rows);
      const double norm = 1.0 / ((m - 1.0) * (m - 1.0));
      for (Eigen::Index i = 0; i < n; ++i) {
        // dL/dK_i = sum_j (G_ij + G_ji) H K_j H / (m-1)^2
        Matrix grad_kernel = Matrix::Zero(m, m);
        for (Eigen::Index j = 0; j < n; ++j) {
          grad_kernel += (grad_similarity(i, j) + grad_similarity(j, i)) * norm * kernels[j].centered;
        }
        const RowKernel& rk = kernels[i];
        const double* x = rows.row(i).data();
        const double s2 = rk.sigma * rk.sigma;
        double grad_sigma = 0.0;
        for (Eigen::Index t = 0; t < m; ++t) {
          for (Eigen::Index s = 0; s < m; ++s) {
            if (t == s) continue;
            const double diff = x[t] - x[s];
            const double a = grad_kernel(t, s) * rk.kernel(t, s);
            // dK/dx_t through the squared distance, and dK/dsigma.
            const double g = -a * diff / s2;
            grad(i, t) += g;
            grad(i, s) -= g;
            grad_sigma += a * diff * diff / (s2 * rk.sigma);
          }
        }
        const double share = grad_sigma / static_cast<double>(rk.median_pairs.size());
        for (auto [t, s] : rk.median_pairs) {
          const double sign = x[t] >= x[s] ? 1.0 : -1.0;
          grad(i, t) += share * sign;
          grad(i, s) -= share * sign;
        }
      }
      return grad;
    }
  }
  return grad;
}

}  // namespace fsdg
