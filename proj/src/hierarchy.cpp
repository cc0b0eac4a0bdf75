#include "fsdg/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fsdg/error.hpp"
#include "fsdg/hash.hpp"

namespace fsdg {

namespace {

std::string row_text(const std::vector<int>& row) {
  std::string s = "[";
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(row[i]);
  }
  return s + "]";
}

}  // namespace

GranularityHierarchy GranularityHierarchy::from_rows(std::vector<std::vector<int>> rows) {
  if (rows.empty()) fail(ErrorCode::MissingParent, "hierarchy has no classes");
  const std::size_t levels = rows.front().size();
  if (levels < 2) {
    fail(ErrorCode::CycleOrLevelMismatch, "hierarchy needs at least 2 levels");
  }

  for (const auto& row : rows) {
    if (row.size() < levels) {
      fail(ErrorCode::MissingParent, "class row " + row_text(row) + " lacks a parent entry");
    }
    if (row.size() > levels) {
      fail(ErrorCode::CycleOrLevelMismatch, "class row " + row_text(row) + " has too many levels");
    }
    for (int id : row) {
      if (id < 0) fail(ErrorCode::CycleOrLevelMismatch, "negative class id in " + row_text(row));
    }
  }

  std::sort(rows.begin(), rows.end());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (i > 0 && rows[i][0] == rows[i - 1][0]) {
      fail(ErrorCode::DuplicateClassId, "fine class " + std::to_string(rows[i][0]) + " listed twice");
    }
    if (rows[i][0] != static_cast<int>(i)) {
      fail(ErrorCode::MissingParent,
           "fine class " + std::to_string(i) + " has no entry (ids must be dense)");
    }
  }

  GranularityHierarchy h;
  h.rows_ = std::move(rows);
  h.classes_per_level_.assign(levels, 0);
  h.classes_per_level_[0] = static_cast<int>(h.rows_.size());

  for (std::size_t g = 1; g < levels; ++g) {
    std::set<int> ids;
    for (const auto& row : h.rows_) ids.insert(row[g]);
    const int k = static_cast<int>(ids.size());
    if (*ids.rbegin() != k - 1) {
      fail(ErrorCode::CycleOrLevelMismatch,
           "level " + std::to_string(g) + " ids are not the dense range [0, " + std::to_string(k) + ")");
    }
    h.classes_per_level_[g] = k;
  }

  h.parents_.resize(levels - 1);
  for (std::size_t g = 0; g + 1 < levels; ++g) {
    auto& map = h.parents_[g];
    map.assign(h.classes_per_level_[g], -1);
    for (const auto& row : h.rows_) {
      int& p = map[row[g]];
      if (p >= 0 && p != row[g + 1]) {
        fail(ErrorCode::CycleOrLevelMismatch,
             "class " + std::to_string(row[g]) + " at level " + std::to_string(g) +
                 " has two parents (" + std::to_string(p) + ", " + std::to_string(row[g + 1]) + ")");
      }
      p = row[g + 1];
    }
  }

  h.descendants_.resize(levels);
  for (std::size_t g = 0; g < levels; ++g) {
    h.descendants_[g].assign(h.classes_per_level_[g], 0);
    for (const auto& row : h.rows_) ++h.descendants_[g][row[g]];
  }
  return h;
}

int GranularityHierarchy::num_classes(int level) const {
  if (level < 0 || level >= levels()) {
    fail(ErrorCode::InvalidLevel, "level " + std::to_string(level) + " outside [0, " +
                                      std::to_string(levels()) + ")");
  }
  return classes_per_level_[level];
}

int GranularityHierarchy::parent(int level, int cls) const {
  if (level < 0 || level + 1 >= levels()) {
    fail(ErrorCode::InvalidLevel, "no parent level above " + std::to_string(level));
  }
  if (cls < 0 || cls >= classes_per_level_[level]) {
    fail(ErrorCode::OutOfRangeClass, "class " + std::to_string(cls) + " at level " + std::to_string(level));
  }
  return parents_[level][cls];
}

int GranularityHierarchy::ancestor(int fine_id, int level) const {
  if (fine_id < 0 || fine_id >= num_fine()) {
    fail(ErrorCode::OutOfRangeClass, "fine class " + std::to_string(fine_id) + " outside [0, " +
                                         std::to_string(num_fine()) + ")");
  }
  if (level < 0 || level >= levels()) fail(ErrorCode::InvalidLevel, "level " + std::to_string(level));
  return rows_[fine_id][level];
}

int GranularityHierarchy::descendant_count(int level, int cls) const {
  if (cls < 0 || cls >= num_classes(level)) {
    fail(ErrorCode::OutOfRangeClass, "class " + std::to_string(cls) + " at level " + std::to_string(level));
  }
  return descendants_[level][cls];
}

std::uint64_t GranularityHierarchy::hash() const {
  Fnv1a h;
  for (int k : classes_per_level_) h.update_value(k);
  for (const auto& row : rows_) h.update_span(std::span<const int>(row));
  return h.digest();
}

GranularityHierarchy parse_hierarchy(std::istream& in) {
  int declared_levels = -1;
  bool coarse_first = false;
  std::vector<std::vector<int>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    if (line[0] == '#') {
      std::istringstream ss(line.substr(1));
      std::string key, value;
      ss >> key >> value;
      if (key == "levels") {
        try {
          declared_levels = std::stoi(value);
        } catch (const std::exception&) {
          fail(ErrorCode::DataError, "bad #levels header: " + line);
        }
      } else if (key == "order") {
        if (value == "coarse-to-fine") coarse_first = true;
        else if (value == "fine-to-coarse") coarse_first = false;
        else fail(ErrorCode::DataError, "unknown #order value: " + value);
      }
      continue;
    }
    if (declared_levels < 1) {
      fail(ErrorCode::DataError, "hierarchy file must start with a '#levels G' header");
    }
    std::istringstream ss(line);
    std::vector<int> row;
    std::string tok;
    while (ss >> tok) {
      try {
        std::size_t used = 0;
        row.push_back(std::stoi(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        fail(ErrorCode::DataError, "line " + std::to_string(line_no) + ": not an integer: " + tok);
      }
    }
    if (static_cast<int>(row.size()) < declared_levels) {
      fail(ErrorCode::MissingParent, "line " + std::to_string(line_no) + ": expected " +
                                         std::to_string(declared_levels) + " ids");
    }
    if (static_cast<int>(row.size()) > declared_levels) {
      fail(ErrorCode::CycleOrLevelMismatch, "line " + std::to_string(line_no) + ": more ids than #levels");
    }
    if (coarse_first) std::reverse(row.begin(), row.end());
    if (declared_levels == 1) row.push_back(0);  // synthetic all-to-one root
    rows.push_back(std::move(row));
  }
  if (declared_levels < 1) fail(ErrorCode::DataError, "missing '#levels G' header");
  return GranularityHierarchy::from_rows(std::move(rows));
}

GranularityHierarchy load_hierarchy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open hierarchy file " + path.string());
  return parse_hierarchy(in);
}

void write_hierarchy(std::ostream& out, const GranularityHierarchy& h) {
  out << "#levels " << h.levels() << "\n";
  for (const auto& row : h.rows()) {
    for (std::size_t g = 0; g < row.size(); ++g) out << (g ? " " : "") << row[g];
    out << "\n";
  }
}

void save_hierarchy(const std::filesystem::path& path, const GranularityHierarchy& h) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_hierarchy(out, h);
}

LabeledHierarchy hierarchy_from_label_paths(const std::vector<std::vector<std::string>>& paths) {
  if (paths.empty()) fail(ErrorCode::EmptyDataset, "no label paths");
  const std::size_t levels = paths.front().size();
  LabeledHierarchy out;
  out.names.resize(levels);
  std::vector<std::unordered_map<std::string, int>> index(levels);
  std::map<int, std::vector<int>> rows;
  for (const auto& path : paths) {
    if (path.size() != levels) fail(ErrorCode::MissingParent, "label path with wrong depth");
    std::vector<int> row(levels);
    for (std::size_t g = 0; g < levels; ++g) {
      auto [it, inserted] = index[g].try_emplace(path[g], static_cast<int>(out.names[g].size()));
      if (inserted) out.names[g].push_back(path[g]);
      row[g] = it->second;
    }
    auto [it, inserted] = rows.try_emplace(row[0], row);
    if (!inserted && it->second != row) {
      fail(ErrorCode::CycleOrLevelMismatch, "fine label '" + path[0] + "' has inconsistent ancestors");
    }
    out.fine_ids.push_back(row[0]);
  }
  std::vector<std::vector<int>> flat;
  for (auto& [id, row] : rows) flat.push_back(row);
  if (levels == 1) {
    for (auto& row : flat) row.push_back(0);
    out.names.push_back({"root"});
  }
  out.hierarchy = GranularityHierarchy::from_rows(std::move(flat));
  return out;
}

void save_label_names(const std::filesystem::path& path,
                      const std::vector<std::vector<std::string>>& names) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  for (std::size_t g = 0; g < names.size(); ++g) {
    out << "#level " << g << "\n";
    for (std::size_t id = 0; id < names[g].size(); ++id) out << id << "\t" << names[g][id] << "\n";
  }
}

ClassVector class_vector(const GranularityHierarchy& h, int fine_id) {
  if (fine_id < 0 || fine_id >= h.num_fine()) {
    fail(ErrorCode::OutOfRangeClass, "fine class " + std::to_string(fine_id) + " outside [0, " +
                                         std::to_string(h.num_fine()) + ")");
  }
  return h.rows()[fine_id];
}

int class_distance(const GranularityHierarchy& h, int i, int j) {
  const ClassVector a = class_vector(h, i);
  const ClassVector b = class_vector(h, j);
  int differing = 0;
  for (std::size_t g = 0; g < a.size(); ++g) differing += a[g] != b[g];
  return static_cast<int>(a.size()) - differing;
}

Grouping group_by_parent(const GranularityHierarchy& h, std::span<const int> fine_labels, int level) {
  if (level < 0 || level + 1 >= h.levels()) {
    fail(ErrorCode::InvalidLevel, "group_by_parent needs 0 <= g < G-1, got " + std::to_string(level));
  }
  Grouping groups;
  for (std::size_t b = 0; b < fine_labels.size(); ++b) {
    const int fine = fine_labels[b];
    GroupKey key{h.ancestor(fine, level + 1), h.ancestor(fine, level)};
    groups[key].push_back(static_cast<int>(b));
  }
  return groups;
}

std::vector<double> expand_coarse_distribution(const GranularityHierarchy& h,
                                               std::span<const double> coarse_probs, int level) {
  if (level < 1 || level >= h.levels()) {
    fail(ErrorCode::InvalidLevel, "expansion needs a coarse level, got " + std::to_string(level));
  }
  if (static_cast<int>(coarse_probs.size()) != h.num_classes(level)) {
    fail(ErrorCode::NotADistribution, "distribution has " + std::to_string(coarse_probs.size()) +
                                          " entries, level has " + std::to_string(h.num_classes(level)));
  }
  double total = 0.0;
  for (double p : coarse_probs) {
    if (!(p >= 0.0) || !std::isfinite(p)) fail(ErrorCode::NotADistribution, "negative or non-finite probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-6) {
    fail(ErrorCode::NotADistribution, "coarse probabilities sum to " + std::to_string(total));
  }
  std::vector<double> fine(h.num_fine());
  for (int f = 0; f < h.num_fine(); ++f) {
    const int a = h.ancestor(f, level);
    fine[f] = coarse_probs[a] / h.descendant_count(level, a);
  }
  return fine;
}

}  // namespace fsdg
