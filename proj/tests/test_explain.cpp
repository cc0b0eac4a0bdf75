#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "fsdg/explain.hpp"
#include "fsdg/network.hpp"
#include "fsdg/synthdata.hpp"
#include "support.hpp"

using namespace fsdg;
using fsdg::test::Gen;

namespace {

Matrix rows_of(const std::vector<std::vector<double>>& rows) {
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[0].size(); ++j) m(i, j) = rows[i][j];
  return m;
}

// Table whose class k ranking starts with tops[k], followed by the unused
// channels in index order.
ConceptRelevanceTable table_with_tops(int d, const std::vector<std::vector<int>>& tops) {
  ConceptRelevanceTable t;
  t.channels = d;
  t.classes = static_cast<int>(tops.size());
  t.records.resize(d);
  t.class_scores = Matrix::Zero(t.classes, d);
  for (const auto& top : tops) {
    std::vector<int> ranking = top;
    for (int c = 0; c < d; ++c) {
      if (std::find(top.begin(), top.end(), c) == top.end()) ranking.push_back(c);
    }
    t.rankings.push_back(ranking);
  }
  return t;
}

std::vector<int> random_ranking(Gen& g, int d) {
  std::vector<int> r(d);
  std::iota(r.begin(), r.end(), 0);
  std::shuffle(r.begin(), r.end(), g.engine());
  return r;
}

int set_overlap(std::vector<int> a, std::vector<int> b, int lo, int hi) {
  std::erase_if(a, [&](int c) { return c < lo || c >= hi; });
  std::erase_if(b, [&](int c) { return c < lo || c >= hi; });
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<int> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return static_cast<int>(out.size());
}

std::vector<std::vector<double>> random_square(Gen& g, int n) {
  std::vector<std::vector<double>> m(n, std::vector<double>(n, 0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j) m[i][j] = m[j][i] = g.uniform(-3.0, 3.0);
  return m;
}

}  // namespace

TEST_CASE("one-channel toy ranks first for the sample's class") {
  const Matrix pooled = rows_of({{0.0, 2.0, 0.0}});
  const Matrix w = rows_of({{0.1, 0.1, 0.1}, {0.2, 1.0, 0.3}});
  const std::vector<int> labels{1};
  const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels);
  CHECK(t.rankings[1][0] == 1);
  CHECK(t.class_scores(1, 1) == doctest::Approx(2.0));
  REQUIRE(t.records[1].size() == 1);
  CHECK(t.records[1][0].label == 1);
  CHECK(t.records[1][0].id == "0");
}

TEST_CASE("zero weight row leaves index order") {
  const Matrix pooled = rows_of({{1.0, 3.0, 2.0, 5.0}, {4.0, 1.0, 0.5, 2.0}, {2.0, 2.0, 2.0, 2.0}});
  const Matrix w = rows_of({{1.0, -1.0, 2.0, 0.5}, {0.0, 0.0, 0.0, 0.0}});
  const std::vector<int> labels{1, 0, 1};
  const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels);
  for (int j = 0; j < 4; ++j) CHECK(t.class_scores(1, j) == 0.0);
  CHECK(t.rankings[1] == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("hand fixture matches manual relevance table") {
  // Relevance a_j * w_{y,j} per sample:
  //   s0 (y=0): 1 1  0
  //   s1 (y=0): 3 0 -1
  //   s2 (y=1): 0 2  2
  //   s3 (y=1): 1 4  1
  const Matrix pooled = rows_of({{1, 2, 0}, {3, 0, 1}, {0, 1, 2}, {2, 2, 1}});
  const Matrix w = rows_of({{1, 0.5, -1}, {0.5, 2, 1}});
  const std::vector<int> labels{0, 0, 1, 1};
  const std::vector<std::string> ids{"a", "b", "c", "d"};

  SUBCASE("three records per channel") {
    const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels, ids, 3);
    // ch0 keeps b(3) a(1) d(1); ch1 keeps d(4) c(2) a(1); ch2 keeps c(2) d(1) a(0).
    auto names = [&](int j) {
      std::vector<std::string> out;
      for (const auto& r : t.records[j]) out.push_back(r.id);
      return out;
    };
    CHECK(names(0) == std::vector<std::string>{"b", "a", "d"});
    CHECK(names(1) == std::vector<std::string>{"d", "c", "a"});
    CHECK(names(2) == std::vector<std::string>{"c", "d", "a"});
    const Matrix expected = rows_of({{4, 1, 0}, {1, 6, 3}});
    CHECK(t.class_scores == expected);
    CHECK(t.rankings[0] == std::vector<int>{0, 1, 2});
    CHECK(t.rankings[1] == std::vector<int>{1, 2, 0});
  }
  SUBCASE("two records per channel") {
    const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels, ids, 2);
    const Matrix expected = rows_of({{4, 0, 0}, {0, 6, 3}});
    CHECK(t.class_scores == expected);
    CHECK(t.rankings[0] == std::vector<int>{0, 1, 2});
    CHECK(t.rankings[1] == std::vector<int>{1, 2, 0});
  }
  SUBCASE("all records") {
    const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels, ids, 40);
    const Matrix expected = rows_of({{4, 1, -1}, {1, 6, 3}});
    CHECK(t.class_scores == expected);
  }
}

TEST_CASE("relevance errors") {
  const Matrix pooled = rows_of({{1, 2}});
  const std::vector<int> labels{0};
  CHECK_FSDG_ERROR(relevance_from_activations(pooled, Matrix(0, 2), labels), ErrorCode::UntrainedModel);
  CHECK_FSDG_ERROR(relevance_from_activations(pooled, Matrix::Zero(2, 2), labels), ErrorCode::UntrainedModel);
  CHECK_FSDG_ERROR(relevance_from_activations(pooled, Matrix::Ones(2, 3), labels), ErrorCode::DimensionMismatch);
  const std::vector<int> bad{2};
  CHECK_FSDG_ERROR(relevance_from_activations(pooled, Matrix::Ones(2, 2), bad), ErrorCode::OutOfRangeClass);
}

TEST_CASE("property: relevance table invariants") {
  Gen g(11);
  for (int trial = 0; trial < 40; ++trial) {
    const int N = g.uniform_int(1, 60);
    const int d = g.uniform_int(1, 12);
    const int K = g.uniform_int(1, 5);
    const int records = g.uniform_int(1, 50);
    Matrix pooled(N, d);
    for (int i = 0; i < N; ++i)
      for (int j = 0; j < d; ++j) pooled(i, j) = std::max(0.0, g.normal());
    const Matrix w = g.matrix(K, d);
    std::vector<int> labels(N);
    for (int& y : labels) y = g.uniform_int(0, K - 1);
    const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels, {}, records);
    for (int j = 0; j < d; ++j) {
      CHECK(static_cast<int>(t.records[j].size()) == std::min(N, records));
      for (std::size_t r = 1; r < t.records[j].size(); ++r) {
        CHECK(t.records[j][r - 1].relevance >= t.records[j][r].relevance);
      }
      // Every stored record is at least as relevant as any dropped sample.
      const double floor = t.records[j].back().relevance;
      std::set<int> kept;
      for (const auto& r : t.records[j]) kept.insert(r.sample);
      for (int i = 0; i < N; ++i) {
        if (!kept.count(i)) CHECK(pooled(i, j) * w(labels[i], j) <= floor);
      }
    }
    for (int k = 0; k < K; ++k) {
      std::vector<int> sorted = t.rankings[k];
      std::sort(sorted.begin(), sorted.end());
      std::vector<int> iota(d);
      std::iota(iota.begin(), iota.end(), 0);
      CHECK(sorted == iota);
      for (int r = 1; r < d; ++r) {
        const int a = t.rankings[k][r - 1], b = t.rankings[k][r];
        const double sa = t.class_scores(k, a), sb = t.class_scores(k, b);
        CHECK((sa > sb || (sa == sb && a < b)));
      }
    }
    if (records >= N) {
      // Class scores over all samples: onehot^T (pooled .* W[labels]).
      Matrix expected = Matrix::Zero(K, d);
      for (int i = 0; i < N; ++i) expected.row(labels[i]) += pooled.row(i).cwiseProduct(w.row(labels[i]));
      CHECK((t.class_scores - expected).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("compute_relevance uses the fine head's logit contributions") {
  SynthSpec spec;
  spec.classes_per_level = {4, 2};
  spec.samples_per_class = 3;
  spec.image_size = 8;
  const SynthData data = generate(spec);
  ModelConfig mc;
  mc.classes_per_level = {4, 2};
  mc.widths = {4, 4, 8, 8};
  mc.feature_channels = 10;
  mc.image_size = 8;
  Model model(mc);
  model.init(5);
  const InferenceModel pruned = model.prune_to_fine();
  const Dataset& ds = data.domains[0];
  const ConceptRelevanceTable t = compute_relevance(pruned, ds);
  const auto [logits, pooled] = pruned.fine_logits_and_pooled(ds.images);
  const Matrix w = pruned.fine_classifier().weight();
  const auto bias = pruned.fine_classifier().bias();
  CHECK(t.channels == 10);
  CHECK(t.classes == 4);
  // Fewer samples than records per channel: every sample's contributions
  // are stored, so summing them over channels recovers the true-class logit.
  std::vector<double> per_sample(ds.size(), 0.0);
  for (int j = 0; j < t.channels; ++j) {
    CHECK(static_cast<int>(t.records[j].size()) == ds.size());
    for (const auto& r : t.records[j]) per_sample[r.sample] += r.relevance;
  }
  for (int i = 0; i < ds.size(); ++i) {
    const int y = ds.fine_labels()[i];
    CHECK(per_sample[i] == doctest::Approx(logits(i, y) - bias[y]).epsilon(1e-10));
  }
  CHECK(t.records[0][0].id == ds.ids[t.records[0][0].sample]);
  const ConceptRelevanceTable direct = relevance_from_activations(pooled, w, ds.fine_labels(), ds.ids);
  CHECK(direct.class_scores == t.class_scores);
}

TEST_CASE("top concepts") {
  Gen g(3);
  const int d = 256, K = 4;
  Matrix pooled(64, d);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < d; ++j) pooled(i, j) = std::abs(g.normal());
  const Matrix w = g.matrix(K, d);
  std::vector<int> labels(64);
  for (int i = 0; i < 64; ++i) labels[i] = i % K;
  const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels);

  CHECK(top_concepts(t, 2).size() == 26);
  CHECK(top_concepts(t, 2, 26) == std::vector<int>(t.rankings[2].begin(), t.rankings[2].begin() + 26));
  std::vector<int> full = top_concepts(t, 1, d);
  std::sort(full.begin(), full.end());
  for (int j = 0; j < d; ++j) CHECK(full[j] == j);
  CHECK(top_concepts(t, 0, 0).empty());
  CHECK_FSDG_ERROR(top_concepts(t, K), ErrorCode::OutOfRangeClass);
  CHECK_FSDG_ERROR(top_concepts(t, -1), ErrorCode::OutOfRangeClass);
  CHECK_FSDG_ERROR(top_concepts(t, 0, d + 1), ErrorCode::DimensionMismatch);
}

TEST_CASE("identical score vectors give identical top lists") {
  Gen g(8);
  const int d = 30;
  Matrix pooled(10, d);
  for (int i = 0; i < 5; ++i) {
    for (int j = 0; j < d; ++j) pooled(2 * i, j) = pooled(2 * i + 1, j) = std::abs(g.normal());
  }
  Matrix w(2, d);
  w.row(0) = g.matrix(1, d);
  w.row(1) = w.row(0);
  std::vector<int> labels(10);
  for (int i = 0; i < 10; ++i) labels[i] = i % 2;
  const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels);
  CHECK(t.class_scores.row(0) == t.class_scores.row(1));
  CHECK(top_concepts(t, 0, 10) == top_concepts(t, 1, 10));
}

TEST_CASE("overlap matrices") {
  // d = 10: common [0,5), specific [5,8), confounding [8,10).
  const PartitionSpec spec = PartitionSpec::make(0.5, 0.3, 0.2, 10);
  REQUIRE(spec.d_c == 5);
  REQUIRE(spec.d_p == 3);

  SUBCASE("disjoint lists") {
    const auto t = table_with_tops(10, {{0, 1, 2}, {3, 4, 5}, {6, 7, 8}});
    const OverlapMatrix m = overlap_matrix(t, {0, 1, 2}, 3, std::nullopt, spec);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(m.values[i][j] == (i == j ? 3 : 0));
  }
  SUBCASE("identical lists") {
    const auto t = table_with_tops(10, {{9, 1, 5}, {9, 1, 5}, {9, 1, 5}});
    const OverlapMatrix m = overlap_matrix(t, {0, 1, 2}, 3, std::nullopt, spec);
    for (const auto& row : m.values)
      for (int v : row) CHECK(v == 3);
  }
  SUBCASE("mixed fixture") {
    const auto t = table_with_tops(10, {{0, 1, 5, 8}, {1, 2, 5, 9}, {0, 1, 8, 9}});
    const std::vector<int> cls{0, 1, 2};
    using V = std::vector<std::vector<int>>;
    CHECK(overlap_matrix(t, cls, 4, std::nullopt, spec).values == V{{4, 2, 3}, {2, 4, 2}, {3, 2, 4}});
    CHECK(overlap_matrix(t, cls, 4, Segment::Common, spec).values == V{{4, 1, 2}, {1, 4, 1}, {2, 1, 4}});
    CHECK(overlap_matrix(t, cls, 4, Segment::Specific, spec).values == V{{4, 1, 0}, {1, 4, 0}, {0, 0, 4}});
    CHECK(overlap_matrix(t, cls, 4, Segment::Confounding, spec).values == V{{4, 0, 1}, {0, 4, 1}, {1, 1, 4}});
    // Class order follows the requested list.
    const OverlapMatrix sub = overlap_matrix(t, {2, 0}, 4, std::nullopt, spec);
    CHECK(sub.classes == std::vector<int>{2, 0});
    CHECK(sub.values[0][1] == 3);

    const auto stats = segment_overlap_stats(t, cls, 4, spec);
    REQUIRE(stats.size() == 3);
    CHECK(stats[0].all == 5);
    CHECK(stats[0].com == 3);
    CHECK(stats[0].spe == 1);
    CHECK(stats[0].conf == 1);
    CHECK(stats[0].ratio_com == doctest::Approx(0.6));
    CHECK(stats[1].all == 4);
    CHECK(stats[1].com == 2);
    CHECK(stats[1].ratio_com == doctest::Approx(0.5));
    CHECK(stats[2].all == 5);
    CHECK(stats[2].spe == 0);
    CHECK(stats[2].conf == 2);
  }
  SUBCASE("two classes sharing five common channels") {
    const auto t = table_with_tops(10, {{0, 1, 2, 3, 4, 5}, {4, 3, 2, 1, 0, 9}});
    const auto stats = segment_overlap_stats(t, {0, 1}, 6, spec);
    for (const auto& s : stats) {
      CHECK(s.all == 5);
      CHECK(s.com == 5);
      CHECK(s.ratio_com == 1.0);
    }
  }
  SUBCASE("no overlap gives zero ratio") {
    const auto t = table_with_tops(10, {{0, 1}, {2, 3}});
    const auto stats = segment_overlap_stats(t, {0, 1}, 2, spec);
    CHECK(stats[0].all == 0);
    CHECK(stats[0].ratio_com == 0.0);
  }
  SUBCASE("errors") {
    const auto t = table_with_tops(10, {{0, 1}, {2, 3}});
    CHECK_FSDG_ERROR(overlap_matrix(t, {0, 1}, 2, std::nullopt, PartitionSpec::make(0.5, 0.3, 0.2, 12)),
                     ErrorCode::DimensionMismatch);
    CHECK_FSDG_ERROR(overlap_matrix(t, {0, 2}, 2, std::nullopt, spec), ErrorCode::OutOfRangeClass);
    CHECK_FSDG_ERROR(segment_overlap_stats(t, {0}, 2, spec), ErrorCode::TooFewClasses);
  }
}

TEST_CASE("property: overlaps match set intersection") {
  Gen g(21);
  for (int trial = 0; trial < 60; ++trial) {
    const int d = g.uniform_int(3, 64);
    const int K = g.uniform_int(2, 8);
    const int top_k = g.uniform_int(0, d);
    const PartitionSpec spec = PartitionSpec::make(0.5, 0.3, 0.2, d);
    std::vector<std::vector<int>> tops;
    for (int k = 0; k < K; ++k) tops.push_back(random_ranking(g, d));
    const auto t = table_with_tops(d, tops);
    std::vector<int> cls(K);
    std::iota(cls.begin(), cls.end(), 0);
    std::shuffle(cls.begin(), cls.end(), g.engine());

    const OverlapMatrix all = overlap_matrix(t, cls, top_k, std::nullopt, spec);
    std::vector<OverlapMatrix> seg;
    for (Segment s : {Segment::Common, Segment::Specific, Segment::Confounding})
      seg.push_back(overlap_matrix(t, cls, top_k, s, spec));
    for (int i = 0; i < K; ++i) {
      const std::vector<int> ti(tops[cls[i]].begin(), tops[cls[i]].begin() + top_k);
      for (int j = 0; j < K; ++j) {
        CHECK(all.values[i][j] == all.values[j][i]);
        CHECK(all.values[i][j] >= 0);
        CHECK(all.values[i][j] <= top_k);
        if (i == j) {
          CHECK(all.values[i][j] == top_k);
          continue;
        }
        const std::vector<int> tj(tops[cls[j]].begin(), tops[cls[j]].begin() + top_k);
        CHECK(all.values[i][j] == set_overlap(ti, tj, 0, d));
        CHECK(seg[0].values[i][j] == set_overlap(ti, tj, 0, spec.d_c));
        CHECK(seg[1].values[i][j] == set_overlap(ti, tj, spec.d_c, spec.d_c + spec.d_p));
        CHECK(seg[2].values[i][j] == set_overlap(ti, tj, spec.d_c + spec.d_p, d));
        CHECK(seg[0].values[i][j] + seg[1].values[i][j] + seg[2].values[i][j] == all.values[i][j]);
      }
    }
    for (const OverlapStats& s : segment_overlap_stats(t, cls, top_k, spec)) {
      CHECK(s.com + s.spe + s.conf == s.all);
      if (s.all > 0) CHECK(s.ratio_com == doctest::Approx(static_cast<double>(s.com) / s.all));
    }
  }
}

TEST_CASE("ground truth matrix") {
  const GranularityHierarchy h = fsdg::test::table_iv_hierarchy();
  CHECK(ground_truth_matrix(h, {8, 10})[0][1] == 3);
  CHECK(ground_truth_matrix(h, {28, 29})[1][0] == 3);
  const auto& ids = fsdg::test::table_iv_classes();
  const auto m = ground_truth_matrix(h, ids);
  const auto& rows = fsdg::test::table_iv_rows();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    CHECK(m[i][i] == 4);
    for (std::size_t j = 0; j < ids.size(); ++j) {
      int same = 0;
      for (int g = 0; g < 4; ++g) same += rows[i][g] == rows[j][g];
      CHECK(m[i][j] == same);
    }
  }
  CHECK_FSDG_ERROR(ground_truth_matrix(h, {8, 52}), ErrorCode::OutOfRangeClass);
}

TEST_CASE("average ranks") {
  const std::vector<double> v{3.0, 1.0, 3.0, 2.0, 3.0};
  CHECK(average_ranks(v) == std::vector<double>{4.0, 1.0, 4.0, 2.0, 4.0});
  CHECK(average_ranks(std::vector<double>{}).empty());
}

TEST_CASE("spearman") {
  Gen g(4);
  const auto b = random_square(g, 5);
  CHECK(spearman(b, b) == doctest::Approx(1.0).epsilon(1e-12));
  auto neg = b;
  for (auto& row : neg)
    for (double& v : row) v = -v;
  CHECK(spearman(neg, b) == doctest::Approx(-1.0).epsilon(1e-12));

  SUBCASE("one tie") {
    // Lower triangles in row order: a = 1 2 2 3 4 5, b = 2 1 3 4 6 5.
    // Ranks a = 1 2.5 2.5 4 5 6, ranks b = 2 1 3 4 6 5, both with mean 3.5:
    // sum(da db) = 14.5, sum(da^2) = 17, sum(db^2) = 17.5.
    const std::vector<std::vector<int>> a{{0, 1, 2, 3}, {1, 0, 2, 4}, {2, 2, 0, 5}, {3, 4, 5, 0}};
    const std::vector<std::vector<int>> bb{{0, 2, 1, 4}, {2, 0, 3, 6}, {1, 3, 0, 5}, {4, 6, 5, 0}};
    CHECK(spearman(a, bb) == doctest::Approx(14.5 / std::sqrt(17.0 * 17.5)).epsilon(1e-12));
  }
  SUBCASE("diagonal is ignored") {
    auto c = b;
    for (std::size_t i = 0; i < c.size(); ++i) c[i][i] = 1e6 * static_cast<double>(i);
    CHECK(spearman(c, b) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("constant triangle") {
    const std::vector<std::vector<int>> flat(4, std::vector<int>(4, 2));
    const std::vector<std::vector<int>> m{{4, 1, 2, 3}, {1, 4, 2, 3}, {2, 2, 4, 1}, {3, 3, 1, 4}};
    CHECK(spearman(flat, m) == 0.0);
  }
  SUBCASE("errors") {
    const std::vector<std::vector<int>> two{{4, 1}, {1, 4}};
    CHECK_FSDG_ERROR(spearman(two, two), ErrorCode::TooFewPairs);
    const std::vector<std::vector<int>> three(3, std::vector<int>(3, 0));
    const std::vector<std::vector<int>> four(4, std::vector<int>(4, 0));
    CHECK_FSDG_ERROR(spearman(three, four), ErrorCode::DimensionMismatch);
  }
}

TEST_CASE("property: spearman is invariant under increasing transforms") {
  Gen g(6);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = g.uniform_int(3, 9);
    auto a = random_square(g, n);
    const auto b = random_square(g, n);
    // Quantize some entries to create ties.
    if (trial % 2 == 0) {
      for (auto& row : a)
        for (double& v : row) v = std::round(v);
    }
    auto ta = a;
    for (auto& row : ta)
      for (double& v : row) v = std::exp(v) + v * v * v;
    const double r = spearman(a, b);
    CHECK(r >= -1.0 - 1e-12);
    CHECK(r <= 1.0 + 1e-12);
    CHECK(spearman(ta, b) == doctest::Approx(r).epsilon(1e-12));
    CHECK(spearman(b, a) == doctest::Approx(r).epsilon(1e-12));
  }
}

TEST_CASE("explain output round trips") {
  SUBCASE("matrix csv") {
    const std::vector<int> cls{8, 10, 51};
    const std::vector<std::vector<int>> m{{26, 4, 0}, {4, 26, 7}, {0, 7, 26}};
    std::stringstream s;
    write_matrix_csv(s, cls, m);
    CHECK(s.str().rfind("class,8,10,51\n8,26,4,0\n", 0) == 0);
    const ClassMatrix back = read_matrix_csv(s);
    CHECK(back.classes == cls);
    CHECK(back.values == m);
  }
  SUBCASE("malformed matrix csv") {
    std::istringstream bad_header("cls,1,2\n1,0,0\n2,0,0\n");
    CHECK_FSDG_ERROR(read_matrix_csv(bad_header), ErrorCode::DataError);
    std::istringstream ragged("class,1,2\n1,0\n2,0,0\n");
    CHECK_FSDG_ERROR(read_matrix_csv(ragged), ErrorCode::DataError);
    std::istringstream short_rows("class,1,2\n1,0,0\n");
    CHECK_FSDG_ERROR(read_matrix_csv(short_rows), ErrorCode::DataError);
    std::istringstream text("class,1,2\n1,x,0\n2,0,0\n");
    CHECK_FSDG_ERROR(read_matrix_csv(text), ErrorCode::DataError);
  }
  SUBCASE("stats csv") {
    const std::vector<OverlapStats> stats{{8, 59, 40, 12, 7, 40.0 / 59.0}, {9, 0, 0, 0, 0, 0.0}};
    std::stringstream s;
    write_stats_csv(s, stats);
    const auto back = read_stats_csv(s);
    REQUIRE(back.size() == 2);
    CHECK(back[0].cls == 8);
    CHECK(back[0].all == 59);
    CHECK(back[0].com == 40);
    CHECK(back[0].spe == 12);
    CHECK(back[0].conf == 7);
    CHECK(back[0].ratio_com == stats[0].ratio_com);
    CHECK(back[1].ratio_com == 0.0);
    std::istringstream bad("class,All\n");
    CHECK_FSDG_ERROR(read_stats_csv(bad), ErrorCode::DataError);
  }
  SUBCASE("relevance jsonl") {
    const Matrix pooled = rows_of({{1, 2, 0}, {3, 0, 1}, {0, 1, 2}, {2, 2, 1}});
    const Matrix w = rows_of({{1, 0.5, -1}, {0.5, 2, 1}});
    const std::vector<int> labels{0, 0, 1, 1};
    const ConceptRelevanceTable t = relevance_from_activations(pooled, w, labels, {"a", "b", "c", "d"}, 3);
    std::stringstream s;
    write_relevance_jsonl(s, t);
    std::vector<nlohmann::json> lines;
    std::string line;
    while (std::getline(s, line)) lines.push_back(nlohmann::json::parse(line));
    REQUIRE(lines.size() == 5);
    for (int j = 0; j < 3; ++j) {
      CHECK(lines[j]["channel"] == j);
      REQUIRE(lines[j]["records"].size() == t.records[j].size());
      for (std::size_t r = 0; r < t.records[j].size(); ++r) {
        CHECK(lines[j]["records"][r]["sample"] == t.records[j][r].id);
        CHECK(lines[j]["records"][r]["relevance"].get<double>() == t.records[j][r].relevance);
        CHECK(lines[j]["records"][r]["label"] == t.records[j][r].label);
      }
    }
    CHECK(lines[3]["class"] == 0);
    CHECK(lines[4]["ranking"].get<std::vector<int>>() == t.rankings[1]);
    CHECK(lines[4]["scores"].get<std::vector<double>>() == std::vector<double>{1, 6, 3});
  }
}
