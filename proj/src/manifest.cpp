#include "fsdg/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fsdg/error.hpp"

namespace fsdg {

namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

int to_label(const std::string& s, int lineno) {
  std::size_t pos = 0;
  int v = -1;
  try {
    v = std::stoi(s, &pos);
  } catch (const std::exception&) {
    pos = std::string::npos;
  }
  if (pos != s.size() || v < 0) {
    fail(ErrorCode::DataError, "manifest line " + std::to_string(lineno) + ": bad label '" + s + "'");
  }
  return v;
}

}  // namespace

DatasetManifest parse_manifest(std::istream& in) {
  DatasetManifest m;
  std::string line;
  int lineno = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const std::string key = "#hierarchy=";
      if (line.rfind(key, 0) == 0) m.hierarchy_path = line.substr(key.size());
      continue;
    }
    if (header.empty()) {
      header = split(line);
      if (header.size() < 3 || header[0] != "path" || header[1] != "domain") {
        fail(ErrorCode::DataError, "manifest header must be path,domain,y0,...");
      }
      for (std::size_t g = 2; g < header.size(); ++g) {
        if (header[g] != "y" + std::to_string(g - 2)) {
          fail(ErrorCode::DataError, "manifest header column " + std::to_string(g) + " must be y" +
                                         std::to_string(g - 2));
        }
      }
      continue;
    }
    const std::vector<std::string> cells = split(line);
    if (cells.size() != header.size()) {
      fail(ErrorCode::DataError, "manifest line " + std::to_string(lineno) + " has " + std::to_string(cells.size()) +
                                     " fields, expected " + std::to_string(header.size()));
    }
    ManifestRecord r{cells[0], cells[1], {}};
    if (r.path.empty()) fail(ErrorCode::DataError, "manifest line " + std::to_string(lineno) + ": empty path");
    for (std::size_t g = 2; g < cells.size(); ++g) r.labels.push_back(to_label(cells[g], lineno));
    m.records.push_back(std::move(r));
  }
  if (m.hierarchy_path.empty()) fail(ErrorCode::DataError, "manifest lacks a #hierarchy= line");
  if (header.empty()) fail(ErrorCode::DataError, "manifest lacks a header");
  return m;
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open manifest " + path.string());
  return parse_manifest(in);
}

void write_manifest(std::ostream& out, const DatasetManifest& m, int levels) {
  out << "#hierarchy=" << m.hierarchy_path << '\n' << "path,domain";
  for (int g = 0; g < levels; ++g) out << ",y" << g;
  out << '\n';
  for (const ManifestRecord& r : m.records) {
    out << r.path << ',' << r.domain;
    for (int y : r.labels) out << ',' << y;
    out << '\n';
  }
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& m, int levels) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path.string());
  write_manifest(out, m, levels);
}

void validate_manifest(const DatasetManifest& m, const GranularityHierarchy& h) {
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const ManifestRecord& r = m.records[i];
    const std::string where = "manifest record " + std::to_string(i) + " (" + r.path + ")";
    if (static_cast<int>(r.labels.size()) != h.levels()) {
      fail(ErrorCode::DataError, where + " has " + std::to_string(r.labels.size()) + " labels, hierarchy has " +
                                     std::to_string(h.levels()) + " levels");
    }
    if (r.labels[0] >= h.num_fine()) fail(ErrorCode::DataError, where + ": fine label out of range");
    for (int g = 1; g < h.levels(); ++g) {
      if (r.labels[g] != h.ancestor(r.labels[0], g)) {
        fail(ErrorCode::DataError, where + ": level " + std::to_string(g) + " label " + std::to_string(r.labels[g]) +
                                       " is not the ancestor of fine class " + std::to_string(r.labels[0]));
      }
    }
  }
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
  const DatasetManifest m = read_manifest(manifest_path);
  const std::filesystem::path base = manifest_path.parent_path();
  auto resolve = [&](const std::string& p) {
    const std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
  };
  LoadedDataset out;
  out.hierarchy = load_hierarchy(resolve(m.hierarchy_path));
  validate_manifest(m, out.hierarchy);
  Dataset& d = out.data;
  d.labels.assign(out.hierarchy.levels(), {});
  for (std::size_t i = 0; i < m.records.size(); ++i) {
    const ManifestRecord& r = m.records[i];
    const Tensor img = read_ppm(resolve(r.path).string());
    if (i == 0) {
      d.images = Tensor(static_cast<int>(m.records.size()), img.c, img.h, img.w);
    } else if (img.h != d.images.h || img.w != d.images.w) {
      fail(ErrorCode::DataError, r.path + ": image size differs from the first image");
    }
    std::copy(img.data.begin(), img.data.end(), d.images.data.begin() + i * img.data.size());
    for (int g = 0; g < out.hierarchy.levels(); ++g) d.labels[g].push_back(r.labels[g]);
    d.domains.push_back(r.domain);
    d.ids.push_back(r.path);
    if (std::find(out.domains.begin(), out.domains.end(), r.domain) == out.domains.end()) {
      out.domains.push_back(r.domain);
    }
  }
  return out;
}

}  // namespace fsdg
