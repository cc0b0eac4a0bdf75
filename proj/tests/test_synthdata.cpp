#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "fsdg/synthdata.hpp"
#include "support.hpp"

using namespace fsdg;

namespace {

SynthSpec small_spec(std::uint64_t seed = 0) {
  SynthSpec s;
  s.samples_per_class = 6;
  s.image_size = 16;
  s.seed = seed;
  return s;
}

// Mean image of each fine class, flattened.
std::vector<std::vector<double>> class_means(const Dataset& ds, int classes, const std::vector<int>& rows) {
  const std::size_t per = static_cast<std::size_t>(ds.images.c) * ds.images.h * ds.images.w;
  std::vector<std::vector<double>> means(classes, std::vector<double>(per, 0.0));
  std::vector<int> counts(classes, 0);
  for (int i : rows) {
    const int y = ds.fine_labels()[i];
    for (std::size_t p = 0; p < per; ++p) means[y][p] += ds.images.data[i * per + p];
    ++counts[y];
  }
  for (int k = 0; k < classes; ++k)
    for (double& v : means[k]) v /= std::max(1, counts[k]);
  return means;
}

double sq_dist(const double* a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t p = 0; p < b.size(); ++p) s += (a[p] - b[p]) * (a[p] - b[p]);
  return s;
}

}  // namespace

TEST_CASE("default spec counts") {
  SynthSpec s;
  s.image_size = 8;
  const SynthData data = generate(s);
  const GranularityHierarchy& h = data.hierarchy;
  REQUIRE(h.levels() == 4);
  CHECK(h.num_classes(0) == 16);
  CHECK(h.num_classes(1) == 8);
  CHECK(h.num_classes(2) == 4);
  CHECK(h.num_classes(3) == 2);
  REQUIRE(data.domains.size() == 2);
  int total = 0;
  for (const Dataset& ds : data.domains) {
    total += ds.size();
    CHECK(ds.levels() == 4);
    CHECK(ds.images.c == 3);
    CHECK(ds.images.h == 8);
    CHECK_NOTHROW(ds.validate(h));
    std::map<int, int> per_class;
    for (int y : ds.fine_labels()) ++per_class[y];
    CHECK(per_class.size() == 16);
    for (const auto& [k, n] : per_class) CHECK(n == 20);
    for (double v : ds.images.data) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  CHECK(total == 640);
  CHECK(data.domains[0].domains[0] == "photo");
  CHECK(data.domains[1].domains[0] == "painting");
  CHECK(data.domains[1].ids[0] == "painting/c0_0");
}

TEST_CASE("domain shift preserves labels") {
  const SynthData data = generate(small_spec());
  CHECK(data.domains[0].labels == data.domains[1].labels);
  CHECK_FALSE(data.domains[0].images == data.domains[1].images);
}

TEST_CASE("identical styles without noise give identical domains") {
  SynthSpec s = small_spec(3);
  s.noise = 0.0;
  s.domains = {default_domains()[1], default_domains()[1]};
  s.domains[1].name = "copy";
  const SynthData data = generate(s);
  CHECK(data.domains[0].images == data.domains[1].images);
  CHECK(data.domains[0].labels == data.domains[1].labels);

  // With noise the two copies differ only by the pixel noise.
  s.noise = 0.03;
  const SynthData noisy = generate(s);
  double max_diff = 0.0;
  for (std::size_t p = 0; p < noisy.domains[0].images.size(); ++p) {
    max_diff = std::max(max_diff, std::abs(noisy.domains[0].images.data[p] - noisy.domains[1].images.data[p]));
  }
  CHECK(max_diff > 0.0);
  CHECK(max_diff < 12 * 0.03);
}

TEST_CASE("generation is deterministic per seed") {
  const SynthData a = generate(small_spec(7));
  const SynthData b = generate(small_spec(7));
  const SynthData c = generate(small_spec(8));
  for (std::size_t d = 0; d < a.domains.size(); ++d) {
    CHECK(a.domains[d].images == b.domains[d].images);
    CHECK(a.domains[d].labels == b.domains[d].labels);
    CHECK(a.domains[d].ids == b.domains[d].ids);
  }
  CHECK_FALSE(a.domains[0].images == c.domains[0].images);
}

TEST_CASE("nearest pixel centroid beats chance on the clean domain") {
  for (std::uint64_t seed : {0ULL, 1ULL}) {
    SynthSpec s = small_spec(seed);
    s.samples_per_class = 10;
    const SynthData data = generate(s);
    const Dataset& ds = data.domains[0];
    std::vector<int> train, test;
    for (int i = 0; i < ds.size(); ++i) (i % 2 ? test : train).push_back(i);
    const auto means = class_means(ds, 16, train);
    const std::size_t per = means[0].size();
    int correct = 0;
    for (int i : test) {
      int best = 0;
      double best_d = INFINITY;
      for (int k = 0; k < 16; ++k) {
        const double dist = sq_dist(&ds.images.data[i * per], means[k]);
        if (dist < best_d) best_d = dist, best = k;
      }
      correct += best == ds.fine_labels()[i];
    }
    const double acc = static_cast<double>(correct) / test.size();
    MESSAGE("seed " << seed << " nearest-centroid accuracy " << acc);
    CHECK(acc > 2.0 / 16.0);
  }
}

TEST_CASE("siblings look more alike than non-siblings") {
  SynthSpec s = small_spec(2);
  s.samples_per_class = 16;
  s.noise = 0.0;
  const SynthData data = generate(s);
  const Dataset& ds = data.domains[0];
  std::vector<int> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const auto means = class_means(ds, 16, all);
  const GranularityHierarchy& h = data.hierarchy;
  // Mean centroid distance grouped by the number of shared labels.
  std::map<int, std::pair<double, int>> by_shared;
  for (int a = 0; a < 16; ++a) {
    for (int b = 0; b < a; ++b) {
      auto& slot = by_shared[class_distance(h, a, b)];
      slot.first += sq_dist(means[a].data(), means[b]);
      ++slot.second;
    }
  }
  REQUIRE(by_shared.size() == 4);
  double previous = INFINITY;
  for (const auto& [shared, acc] : by_shared) {
    const double mean = acc.first / acc.second;
    MESSAGE(shared << " shared labels: mean centroid distance " << mean);
    // Keys ascend, so distance must fall as more labels are shared.
    if (shared > 0) CHECK(mean < previous);
    previous = mean;
  }
}

TEST_CASE("spec validation") {
  SynthSpec s;
  s.classes_per_level = {16, 6};
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::InconsistentBranching);
  s.classes_per_level = {8, 8};
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::InconsistentBranching);
  s.classes_per_level = {8};
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::InconsistentBranching);
  s.classes_per_level = {8, 0};
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::InconsistentBranching);
  CHECK_FSDG_ERROR(generate(s), ErrorCode::InconsistentBranching);

  s = SynthSpec{};
  s.samples_per_class = 0;
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::ConfigError);
  s = SynthSpec{};
  s.noise = -1.0;
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::ConfigError);
  s = SynthSpec{};
  s.domains[1].name = s.domains[0].name;
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::ConfigError);
  s = SynthSpec{};
  s.domains[0].palette = 7;
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::ConfigError);
  s = SynthSpec{};
  s.domains.clear();
  CHECK_FSDG_ERROR(s.validate(), ErrorCode::ConfigError);
  CHECK_NOTHROW(SynthSpec{}.validate());
}

TEST_CASE("ppm round trip quantizes to 8 bits") {
  const SynthData data = generate(small_spec());
  const Tensor& images = data.domains[1].images;
  const auto dir = std::filesystem::temp_directory_path() / "fsdg_ppm_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "img.ppm").string();
  write_ppm(path, images, 5);
  const Tensor back = read_ppm(path);
  REQUIRE(back.n == 1);
  REQUIRE(back.c == 3);
  REQUIRE(back.h == images.h);
  REQUIRE(back.w == images.w);
  double max_err = 0.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < back.h; ++y)
      for (int x = 0; x < back.w; ++x) max_err = std::max(max_err, std::abs(back.at(0, c, y, x) - images.at(5, c, y, x)));
  CHECK(max_err <= 0.5 / 255.0 + 1e-12);

  // Re-encoding the decoded image is lossless.
  const std::string again = (dir / "again.ppm").string();
  write_ppm(again, back, 0);
  CHECK(read_ppm(again) == back);

  std::ofstream(dir / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_FSDG_ERROR(read_ppm((dir / "bad.ppm").string()), ErrorCode::DataError);
  CHECK_FSDG_ERROR(read_ppm((dir / "missing.ppm").string()), ErrorCode::IoError);
  std::filesystem::remove_all(dir);
}
