#include <cmath>
#include <numeric>

#include "fsdg/featurespace.hpp"
#include "support.hpp"

using namespace fsdg;
using fsdg::test::Gen;

namespace {

// Half-up rounding of (k / 20) * d in integer arithmetic.
int round_twentieths(int k, int d) { return (2 * k * d + 20) / 40; }

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Biased HSIC of rows a and b as paired scalar samples, written out directly.
double hsic_oracle(const std::vector<double>& a, const std::vector<double>& b) {
  const int m = static_cast<int>(a.size());
  auto kernel = [m](const std::vector<double>& x) {
    std::vector<double> d;
    for (int t = 0; t < m; ++t)
      for (int s = t + 1; s < m; ++s) d.push_back(std::abs(x[t] - x[s]));
    const double sigma = median(d);
    std::vector<std::vector<double>> k(m, std::vector<double>(m));
    for (int t = 0; t < m; ++t)
      for (int s = 0; s < m; ++s) k[t][s] = std::exp(-(x[t] - x[s]) * (x[t] - x[s]) / (2 * sigma * sigma));
    return k;
  };
  auto center = [m](std::vector<std::vector<double>> k) {
    std::vector<double> row(m, 0.0), col(m, 0.0);
    double all = 0.0;
    for (int t = 0; t < m; ++t)
      for (int s = 0; s < m; ++s) {
        row[t] += k[t][s] / m;
        col[s] += k[t][s] / m;
        all += k[t][s] / (m * m);
      }
    for (int t = 0; t < m; ++t)
      for (int s = 0; s < m; ++s) k[t][s] = k[t][s] - row[t] - col[s] + all;
    return k;
  };
  const auto kc = center(kernel(a));
  const auto l = kernel(b);
  double tr = 0.0;
  for (int t = 0; t < m; ++t)
    for (int s = 0; s < m; ++s) tr += kc[t][s] * l[s][t];
  return tr / ((m - 1.0) * (m - 1.0));
}

std::vector<double> row_of(const Matrix& m, int i) {
  return std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols());
}

}  // namespace

TEST_CASE("partition sizes") {
  const auto s = PartitionSpec::make(0.5, 0.3, 0.2, 256);
  CHECK(s.d_c == 128);
  CHECK(s.d_p == 77);
  CHECK(s.d_n == 51);

  const auto ten = PartitionSpec::make(0.5, 0.3, 0.2, 10);
  CHECK(ten.d_c == 5);
  CHECK(ten.d_p == 3);
  CHECK(ten.d_n == 2);

  const auto all_common = PartitionSpec::make(1.0, 0.0, 0.0, 12);
  CHECK(all_common.d_c == 12);
  CHECK(all_common.d_p == 0);
  CHECK(all_common.d_n == 0);

  CHECK_FSDG_ERROR(PartitionSpec::make(0.5, 0.3, 0.3, 10), ErrorCode::ConfigError);
  CHECK_FSDG_ERROR(PartitionSpec::make(-0.1, 0.9, 0.2, 10), ErrorCode::ConfigError);
}

TEST_CASE("partition views slice channel ranges") {
  Gen gen(1);
  const FeatureMap f = gen.feature_map(3, 10, 4);
  const auto spec = PartitionSpec::make(0.5, 0.3, 0.2, 10);
  const PartitionedFeatures p = partition(f, spec);
  CHECK(p.common.channels() == 5);
  CHECK(p.specific.channels() == 3);
  CHECK(p.confounding.channels() == 2);
  CHECK(&p.common.source() == &f);
  CHECK(p.specific.at(2, 0, 3) == f.at(2, 5, 3));
  CHECK(p.confounding.at(1, 1, 0) == f.at(1, 9, 0));
  CHECK(concat_channels({p.common.materialize(), p.specific.materialize(), p.confounding.materialize()}) == f);
  CHECK_FSDG_ERROR(partition(f, PartitionSpec::make(0.5, 0.3, 0.2, 12)), ErrorCode::DimensionMismatch);
}

TEST_CASE("segment prototypes") {
  const auto spec = PartitionSpec::make(0.5, 0.25, 0.25, 4);
  SUBCASE("identical channels give that channel") {
    FeatureMap f(1, 4, 3);
    for (int c = 0; c < 4; ++c)
      for (int s = 0; s < 3; ++s) f.at(0, c, s) = s + 1.0;
    const FeatureMap p = segment_prototypes(f, spec);
    for (int seg = 0; seg < 3; ++seg)
      for (int s = 0; s < 3; ++s) CHECK(p.at(0, seg, s) == s + 1.0);
  }
  SUBCASE("mean of two channels") {
    FeatureMap f(1, 4, 5);
    for (int s = 0; s < 5; ++s) {
      f.at(0, 0, s) = 1.0;
      f.at(0, 1, s) = 3.0;
    }
    const FeatureMap p = segment_prototypes(f, spec);
    for (int s = 0; s < 5; ++s) CHECK(p.at(0, 0, s) == 2.0);
  }
  SUBCASE("random input matches per-segment means") {
    Gen gen(2);
    const FeatureMap f = gen.feature_map(3, 6, 4);
    const auto s6 = PartitionSpec::make(0.5, 0.3, 0.2, 6);
    const FeatureMap p = segment_prototypes(f, s6);
    REQUIRE(p.channels() == 3);
    const int bounds[4] = {0, s6.d_c, s6.d_c + s6.d_p, 6};
    for (int b = 0; b < 3; ++b)
      for (int seg = 0; seg < 3; ++seg)
        for (int s = 0; s < 4; ++s) {
          double sum = 0.0;
          for (int c = bounds[seg]; c < bounds[seg + 1]; ++c) sum += f.at(b, c, s);
          CHECK(std::abs(p.at(b, seg, s) - sum / (bounds[seg + 1] - bounds[seg])) <= 1e-12);
        }
  }
  SUBCASE("empty segment") {
    FeatureMap f(1, 4, 1);
    CHECK_FSDG_ERROR(segment_prototypes(f, PartitionSpec::make(1.0, 0.0, 0.0, 4)), ErrorCode::EmptySegment);
  }
}

TEST_CASE("pairwise similarity examples") {
  const Matrix basis = Matrix::Identity(3, 3);
  CHECK(pairwise_similarity(basis, Metric::Cosine) == Matrix::Identity(3, 3));

  Matrix same(3, 4);
  for (int i = 0; i < 3; ++i) same.row(i) << 1.0, -2.0, 0.5, 3.0;
  const Matrix ones = pairwise_similarity(same, Metric::Cosine);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) CHECK(ones(i, j) == doctest::Approx(1.0).epsilon(1e-12));

  Matrix two(2, 2);
  two << 0, 0, 3, 4;
  const Matrix e = pairwise_similarity(two, Metric::Euclidean);
  CHECK(e(0, 1) == doctest::Approx(-5.0 / std::sqrt(2.0)));
  CHECK(e(1, 0) == doctest::Approx(-5.0 / std::sqrt(2.0)));
  CHECK(e(0, 0) == 0.0);

  Matrix zero = Matrix::Zero(2, 3);
  zero(0, 0) = 1.0;
  CHECK_FSDG_ERROR(pairwise_similarity(zero, Metric::Cosine), ErrorCode::ZeroVector);
  Matrix flat = Matrix::Ones(2, 4);
  CHECK_FSDG_ERROR(pairwise_similarity(flat, Metric::Hsic), ErrorCode::DegenerateBandwidth);
  CHECK_FSDG_ERROR(pairwise_similarity(Matrix::Ones(1, 4), Metric::Cosine), ErrorCode::DimensionMismatch);
  CHECK(parse_metric("hsic") == Metric::Hsic);
  CHECK_FSDG_ERROR(parse_metric("manhattan"), ErrorCode::ConfigError);
}

TEST_CASE("hsic matches a direct evaluation") {
  Gen gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = gen.uniform_int(2, 5), m = gen.uniform_int(2, 9);
    const Matrix rows = gen.matrix(n, m);
    const Matrix k = pairwise_similarity(rows, Metric::Hsic);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) CHECK(std::abs(k(i, j) - hsic_oracle(row_of(rows, i), row_of(rows, j))) <= 1e-12);
  }
}

TEST_CASE("property: partition arithmetic on the 0.05 ratio grid") {
  int failures = 0;
  for (int kc = 0; kc <= 20; ++kc) {
    for (int kp = 0; kc + kp <= 20; ++kp) {
      const int kn = 20 - kc - kp;
      for (int d = 3; d <= 4096; ++d) {
        const auto s = PartitionSpec::make(kc * 0.05, kp * 0.05, kn * 0.05, d);
        const int dc = round_twentieths(kc, d);
        const int dp = std::min(round_twentieths(kp, d), d - dc);
        const bool ok = s.d_c == dc && s.d_p == dp && s.d_c + s.d_p + s.d_n == d && s.d_n >= 0 &&
                        s.begin(Segment::Common) == 0 && s.end(Segment::Common) == s.begin(Segment::Specific) &&
                        s.end(Segment::Specific) == s.begin(Segment::Confounding) &&
                        s.end(Segment::Confounding) == d;
        if (!ok) ++failures;
      }
    }
  }
  CHECK(failures == 0);
}

TEST_CASE("property: partition is lossless") {
  Gen gen(4);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = gen.uniform_int(3, 40);
    const int kc = gen.uniform_int(0, 20), kp = gen.uniform_int(0, 20 - kc);
    const auto spec = PartitionSpec::make(kc * 0.05, kp * 0.05, (20 - kc - kp) * 0.05, d);
    const FeatureMap f = gen.feature_map(gen.uniform_int(1, 4), d, gen.uniform_int(1, 5));
    const auto p = partition(f, spec);
    CHECK(concat_channels({p.common.materialize(), p.specific.materialize(), p.confounding.materialize()}) == f);
    for (int c = 0; c < d; ++c) {
      const Segment s = spec.segment_of(c);
      CHECK(c >= spec.begin(s));
      CHECK(c < spec.end(s));
    }
  }
}

TEST_CASE("property: cosine similarity is symmetric and scale invariant") {
  Gen gen(5);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = gen.uniform_int(2, 6), m = gen.uniform_int(1, 8);
    Matrix rows = gen.matrix(n, m);
    const Matrix k = pairwise_similarity(rows, Metric::Cosine);
    CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(k.maxCoeff() <= 1.0 + 1e-12);
    CHECK(k.minCoeff() >= -1.0 - 1e-12);
    for (int i = 0; i < n; ++i) CHECK(k(i, i) == 1.0);
    rows.row(gen.uniform_int(0, n - 1)) *= gen.uniform(0.01, 100.0);
    CHECK((pairwise_similarity(rows, Metric::Cosine) - k).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("property: prototypes commute with permutations inside a segment") {
  Gen gen(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = gen.uniform_int(6, 20);
    const auto spec = PartitionSpec::make(0.5, 0.3, 0.2, d);
    const FeatureMap f = gen.feature_map(2, d, gen.uniform_int(1, 4));
    std::vector<int> perm(d);
    std::iota(perm.begin(), perm.end(), 0);
    for (Segment s : {Segment::Common, Segment::Specific, Segment::Confounding}) {
      std::shuffle(perm.begin() + spec.begin(s), perm.begin() + spec.end(s), gen.engine());
    }
    FeatureMap g(f.batch(), d, f.spatial());
    for (int b = 0; b < f.batch(); ++b)
      for (int c = 0; c < d; ++c)
        for (int s = 0; s < f.spatial(); ++s) g.at(b, c, s) = f.at(b, perm[c], s);
    const FeatureMap pf = segment_prototypes(f, spec), pg = segment_prototypes(g, spec);
    for (std::size_t i = 0; i < pf.values().size(); ++i) CHECK(pf.values()[i] == doctest::Approx(pg.values()[i]));
  }
}
