#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fsdg/dataset.hpp"
#include "fsdg/hierarchy.hpp"

namespace fsdg {

struct ManifestRecord {
  std::string path;
  std::string domain;
  std::vector<int> labels;  // y0 (fine) .. y{G-1}
};

/// CSV: a `#hierarchy=<path>` pragma line, then the header
/// `path,domain,y0,...,y{G-1}` and one record per image. Relative paths are
/// resolved against the manifest's directory.
struct DatasetManifest {
  std::string hierarchy_path;
  std::vector<ManifestRecord> records;
};

DatasetManifest parse_manifest(std::istream& in);
DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(std::ostream& out, const DatasetManifest& m, int levels);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& m, int levels);

/// Label check of every record against `h`; throws DataError.
void validate_manifest(const DatasetManifest& m, const GranularityHierarchy& h);

struct LoadedDataset {
  GranularityHierarchy hierarchy;
  Dataset data;
  std::vector<std::string> domains;  // in order of first appearance
};

/// Reads the hierarchy and every image. Throws DataError / IoError.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace fsdg
