#include "fsdg/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "fsdg/error.hpp"

namespace fsdg {

Dataset Dataset::subset(std::span<const int> indices) const {
  Dataset out;
  out.images = images.gather(indices);
  out.labels.resize(labels.size());
  for (int i : indices) {
    for (std::size_t g = 0; g < labels.size(); ++g) out.labels[g].push_back(labels[g][i]);
    out.domains.push_back(domains.empty() ? std::string() : domains[i]);
    out.ids.push_back(ids.empty() ? std::string() : ids[i]);
  }
  return out;
}

Dataset Dataset::filter_domain(const std::string& domain) const {
  std::vector<int> keep;
  for (int i = 0; i < size(); ++i) {
    if (domains[i] == domain) keep.push_back(i);
  }
  return subset(keep);
}

void Dataset::validate(const GranularityHierarchy& h) const {
  if (levels() != h.levels()) {
    fail(ErrorCode::DataError, "dataset has " + std::to_string(levels()) + " label levels, hierarchy has " +
                                   std::to_string(h.levels()));
  }
  for (int i = 0; i < size(); ++i) {
    const int fine = labels[0][i];
    if (fine < 0 || fine >= h.num_fine()) fail(ErrorCode::DataError, "fine label out of range at sample " + std::to_string(i));
    for (int g = 1; g < levels(); ++g) {
      if (labels[g][i] != h.ancestor(fine, g)) {
        fail(ErrorCode::DataError, "sample " + std::to_string(i) + " label vector disagrees with the hierarchy");
      }
    }
  }
}

void write_ppm(const std::string& path, const Tensor& images, int index) {
  if (images.c != 3) fail(ErrorCode::DataError, "PPM output needs 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << "P6\n" << images.w << " " << images.h << "\n255\n";
  std::vector<unsigned char> buf(static_cast<std::size_t>(images.h) * images.w * 3);
  for (int y = 0; y < images.h; ++y) {
    for (int x = 0; x < images.w; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(images.at(index, c, y, x), 0.0, 1.0);
        buf[(static_cast<std::size_t>(y) * images.w + x) * 3 + c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

Tensor read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open image " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  in >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    fail(ErrorCode::DataError, path + ": only 8-bit binary PPM (P6) images are supported");
  }
  in.get();
  std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!in) fail(ErrorCode::DataError, path + ": truncated image");
  Tensor t(1, 3, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < 3; ++c) t.at(0, c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    }
  }
  return t;
}

}  // namespace fsdg
