#pragma once

#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <random>
#include <vector>

#include "fsdg/error.hpp"
#include "fsdg/featurespace.hpp"
#include "fsdg/hierarchy.hpp"
#include "table_iv.hpp"

namespace fsdg::test {

#define CHECK_FSDG_ERROR(expr, expected_code)                   \
  do {                                                          \
    bool caught_ = false;                                       \
    try {                                                       \
      (void)(expr);                                             \
    } catch (const ::fsdg::Error& e_) {                         \
      caught_ = true;                                           \
      CHECK_MESSAGE(e_.code() == (expected_code), e_.what());   \
    }                                                           \
    CHECK_MESSAGE(caught_, "expected " #expected_code);         \
  } while (0)

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(rng_); }
  std::mt19937_64& engine() { return rng_; }

  /// Random tree: 2-4 levels, each class has 1-3 parents' worth of children.
  GranularityHierarchy tree() {
    const int levels = uniform_int(2, 4);
    std::vector<int> parent_count(levels);
    parent_count[levels - 1] = uniform_int(1, 3);
    std::vector<std::vector<int>> parent_of(levels - 1);  // [g][cls] -> parent id
    int count = parent_count[levels - 1];
    for (int g = levels - 2; g >= 0; --g) {
      std::vector<int> parents;
      for (int p = 0; p < count; ++p) {
        const int children = uniform_int(1, 3);
        for (int c = 0; c < children; ++c) parents.push_back(p);
      }
      std::shuffle(parents.begin(), parents.end(), rng_);
      parent_of[g] = parents;
      count = static_cast<int>(parents.size());
    }
    std::vector<std::vector<int>> rows;
    for (int f = 0; f < count; ++f) {
      std::vector<int> row{f};
      int cls = f;
      for (int g = 0; g < levels - 1; ++g) {
        cls = parent_of[g][cls];
        row.push_back(cls);
      }
      rows.push_back(row);
    }
    std::shuffle(rows.begin(), rows.end(), rng_);
    return GranularityHierarchy::from_rows(rows);
  }

  FeatureMap feature_map(int batch, int channels, int spatial) {
    FeatureMap f(batch, channels, spatial);
    for (double& v : f.values()) v = normal();
    return f;
  }

  Matrix matrix(int rows, int cols) {
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) m(i, j) = normal();
    return m;
  }

  std::vector<double> distribution(int n) {
    std::vector<double> p(n);
    double total = 0.0;
    for (double& v : p) total += (v = uniform(0.01, 1.0));
    for (double& v : p) v /= total;
    return p;
  }

 private:
  std::mt19937_64 rng_;
};

}  // namespace fsdg::test
