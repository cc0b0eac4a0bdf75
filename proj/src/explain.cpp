#include "fsdg/explain.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fsdg/error.hpp"
#include "fsdg/format.hpp"
#include "fsdg/serialization.hpp"

namespace fsdg {

namespace {

void check_class(int k, int classes) {
  if (k < 0 || k >= classes) {
    fail(ErrorCode::OutOfRangeClass, "class " + std::to_string(k) + " outside [0, " + std::to_string(classes) + ")");
  }
}

std::vector<double> lower_triangle(const std::vector<std::vector<double>>& m) {
  std::vector<double> out;
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (m[i].size() != m.size()) fail(ErrorCode::DimensionMismatch, "matrix is not square");
    for (std::size_t j = 0; j < i; ++j) out.push_back(m[i][j]);
  }
  return out;
}

std::vector<std::vector<double>> to_double(const std::vector<std::vector<int>>& m) {
  std::vector<std::vector<double>> out;
  for (const auto& row : m) out.emplace_back(row.begin(), row.end());
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int parse_int(const std::string& s) {
  std::size_t pos = 0;
  int v = 0;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != s.size()) fail(ErrorCode::DataError, "not an integer: '" + s + "'");
  return v;
}

}  // namespace

ConceptRelevanceTable relevance_from_activations(const Matrix& pooled, const Matrix& weights,
                                                 std::span<const int> labels, const std::vector<std::string>& ids,
                                                 int records_per_channel) {
  if (weights.size() == 0 || weights.isZero(0.0)) {
    fail(ErrorCode::UntrainedModel, "classifier weights are missing");
  }
  if (pooled.cols() != weights.cols()) {
    fail(ErrorCode::DimensionMismatch, "activation width differs from classifier input width");
  }
  if (static_cast<std::size_t>(pooled.rows()) != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "one label per sample required");
  }
  const int N = static_cast<int>(pooled.rows());
  const int d = static_cast<int>(pooled.cols());
  const int K = static_cast<int>(weights.rows());
  for (int y : labels) check_class(y, K);

  ConceptRelevanceTable t;
  t.channels = d;
  t.classes = K;
  t.records.resize(d);
  t.class_scores = Matrix::Zero(K, d);
  for (int j = 0; j < d; ++j) {
    std::vector<RelevanceRecord> all;
    all.reserve(N);
    for (int i = 0; i < N; ++i) {
      all.push_back({i, ids.empty() ? std::to_string(i) : ids[i], pooled(i, j) * weights(labels[i], j), labels[i]});
    }
    const std::size_t keep = std::min<std::size_t>(all.size(), static_cast<std::size_t>(records_per_channel));
    std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(keep), all.end(),
                      [](const RelevanceRecord& a, const RelevanceRecord& b) {
                        return a.relevance != b.relevance ? a.relevance > b.relevance : a.sample < b.sample;
                      });
    all.resize(keep);
    for (const RelevanceRecord& r : all) t.class_scores(r.label, j) += r.relevance;
    t.records[j] = std::move(all);
  }
  t.rankings.resize(K);
  for (int k = 0; k < K; ++k) {
    std::vector<int> order(d);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return t.class_scores(k, a) > t.class_scores(k, b); });
    t.rankings[k] = std::move(order);
  }
  return t;
}

ConceptRelevanceTable compute_relevance(const InferenceModel& model, const Dataset& data, int records_per_channel) {
  const Matrix w = model.fine_classifier().weight();
  Matrix pooled(data.size(), w.cols());
  constexpr int kBatch = 64;
  for (int start = 0; start < data.size(); start += kBatch) {
    std::vector<int> idx;
    for (int i = start; i < std::min(data.size(), start + kBatch); ++i) idx.push_back(i);
    const Matrix p = model.fine_logits_and_pooled(data.images.gather(idx)).second;
    pooled.middleRows(start, p.rows()) = p;
  }
  return relevance_from_activations(pooled, w, data.fine_labels(), data.ids, records_per_channel);
}

std::vector<int> top_concepts(const ConceptRelevanceTable& table, int k, int top_k) {
  check_class(k, table.classes);
  if (top_k < 0 || top_k > table.channels) {
    fail(ErrorCode::DimensionMismatch, "top_k " + std::to_string(top_k) + " exceeds " +
                                           std::to_string(table.channels) + " channels");
  }
  return {table.rankings[k].begin(), table.rankings[k].begin() + top_k};
}

OverlapMatrix overlap_matrix(const ConceptRelevanceTable& table, const std::vector<int>& classes, int top_k,
                             std::optional<Segment> restrict_to, const PartitionSpec& spec) {
  if (spec.d != table.channels) {
    fail(ErrorCode::DimensionMismatch, "partition width " + std::to_string(spec.d) + " differs from " +
                                           std::to_string(table.channels) + " relevance channels");
  }
  const std::size_t n = classes.size();
  std::vector<std::vector<char>> member(n, std::vector<char>(table.channels, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (int c : top_concepts(table, classes[i], top_k)) {
      if (!restrict_to || spec.segment_of(c) == *restrict_to) member[i][c] = 1;
    }
  }
  OverlapMatrix m;
  m.classes = classes;
  m.top_k = top_k;
  m.values.assign(n, std::vector<int>(n, top_k));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      int count = 0;
      for (int c = 0; c < table.channels; ++c) count += member[i][c] && member[j][c];
      m.values[i][j] = m.values[j][i] = count;
    }
  }
  return m;
}

std::vector<OverlapStats> segment_overlap_stats(const ConceptRelevanceTable& table, const std::vector<int>& classes,
                                                int top_k, const PartitionSpec& spec) {
  if (classes.size() < 2) fail(ErrorCode::TooFewClasses, "overlap statistics need at least two classes");
  const OverlapMatrix all = overlap_matrix(table, classes, top_k, std::nullopt, spec);
  const OverlapMatrix com = overlap_matrix(table, classes, top_k, Segment::Common, spec);
  const OverlapMatrix spe = overlap_matrix(table, classes, top_k, Segment::Specific, spec);
  const OverlapMatrix conf = overlap_matrix(table, classes, top_k, Segment::Confounding, spec);
  std::vector<OverlapStats> out;
  for (std::size_t i = 0; i < classes.size(); ++i) {
    OverlapStats s;
    s.cls = classes[i];
    for (std::size_t j = 0; j < classes.size(); ++j) {
      if (i == j) continue;
      s.all += all.values[i][j];
      s.com += com.values[i][j];
      s.spe += spe.values[i][j];
      s.conf += conf.values[i][j];
    }
    s.ratio_com = s.all > 0 ? static_cast<double>(s.com) / s.all : 0.0;
    out.push_back(s);
  }
  return out;
}

std::vector<std::vector<int>> ground_truth_matrix(const GranularityHierarchy& h, const std::vector<int>& classes) {
  for (int c : classes) check_class(c, h.num_fine());
  std::vector<std::vector<int>> m(classes.size(), std::vector<int>(classes.size()));
  for (std::size_t i = 0; i < classes.size(); ++i) {
    for (std::size_t j = 0; j < classes.size(); ++j) m[i][j] = class_distance(h, classes[i], classes[j]);
  }
  return m;
}

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& b) {
  if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "matrices cover different class lists");
  if (a.size() < 3) fail(ErrorCode::TooFewPairs, "Spearman needs at least three classes");
  const std::vector<double> ra = average_ranks(lower_triangle(a));
  const std::vector<double> rb = average_ranks(lower_triangle(b));
  const double n = static_cast<double>(ra.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

double spearman(const std::vector<std::vector<int>>& a, const std::vector<std::vector<int>>& b) {
  return spearman(to_double(a), to_double(b));
}

void write_relevance_jsonl(std::ostream& out, const ConceptRelevanceTable& table) {
  for (int j = 0; j < table.channels; ++j) {
    Json rec;
    rec["channel"] = j;
    Json rows = Json::array();
    for (const RelevanceRecord& r : table.records[j]) {
      rows.push_back({{"sample", r.id}, {"relevance", r.relevance}, {"label", r.label}});
    }
    rec["records"] = std::move(rows);
    out << rec.dump() << '\n';
  }
  for (int k = 0; k < table.classes; ++k) {
    Json rec;
    rec["class"] = k;
    rec["ranking"] = table.rankings[k];
    std::vector<double> scores(table.channels);
    for (int j = 0; j < table.channels; ++j) scores[j] = table.class_scores(k, j);
    rec["scores"] = scores;
    out << rec.dump() << '\n';
  }
}

void write_matrix_csv(std::ostream& out, const std::vector<int>& classes, const std::vector<std::vector<int>>& m) {
  out << "class";
  for (int c : classes) out << ',' << c;
  out << '\n';
  for (std::size_t i = 0; i < classes.size(); ++i) {
    out << classes[i];
    for (int v : m[i]) out << ',' << v;
    out << '\n';
  }
}

ClassMatrix read_matrix_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) fail(ErrorCode::DataError, "empty matrix CSV");
  std::vector<std::string> head = split_csv(line);
  if (head.empty() || head[0] != "class") fail(ErrorCode::DataError, "matrix CSV must start with 'class'");
  ClassMatrix m;
  for (std::size_t i = 1; i < head.size(); ++i) m.classes.push_back(parse_int(head[i]));
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells = split_csv(line);
    if (cells.size() != head.size()) fail(ErrorCode::DataError, "ragged matrix CSV row");
    const std::size_t r = m.values.size();
    if (r >= m.classes.size() || parse_int(cells[0]) != m.classes[r]) {
      fail(ErrorCode::DataError, "matrix CSV row labels do not follow the header");
    }
    std::vector<int> row;
    for (std::size_t i = 1; i < cells.size(); ++i) row.push_back(parse_int(cells[i]));
    m.values.push_back(std::move(row));
  }
  if (m.values.size() != m.classes.size()) fail(ErrorCode::DataError, "matrix CSV is not square");
  return m;
}

void write_stats_csv(std::ostream& out, const std::vector<OverlapStats>& stats) {
  out << "class,All,Com,Spe,Conf,RatioCom\n";
  for (const OverlapStats& s : stats) {
    out << s.cls << ',' << s.all << ',' << s.com << ',' << s.spe << ',' << s.conf << ',' << format_double(s.ratio_com)
        << '\n';
  }
}

std::vector<OverlapStats> read_stats_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != "class,All,Com,Spe,Conf,RatioCom") {
    fail(ErrorCode::DataError, "unexpected stats CSV header");
  }
  std::vector<OverlapStats> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> c = split_csv(line);
    if (c.size() != 6) fail(ErrorCode::DataError, "stats CSV rows need 6 fields");
    out.push_back({parse_int(c[0]), parse_int(c[1]), parse_int(c[2]), parse_int(c[3]), parse_int(c[4]),
                   parse_double(c[5])});
  }
  return out;
}

}  // namespace fsdg
