#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fsdg/synthdata.hpp"
#include "fsdg/trainer.hpp"

namespace fsdg {

/// Flat `dotted.key = value` settings. Every key must be known; values stay
/// text until read through a typed getter.
class Config {
 public:
  /// Built-in defaults for every key.
  static Config defaults();

  /// Reads `key = value` lines; `#` starts a comment. A `.json` path is read
  /// as a run record and its "config" object is used.
  static Config load(const std::filesystem::path& path);
  static Config parse(std::istream& in, const std::string& source = "<config>");

  /// Throws ConfigError for unknown keys.
  void set(const std::string& key, const std::string& value);
  /// Applies `key=value`.
  void set_assignment(const std::string& assignment);
  void merge(const Config& other);

  bool has(const std::string& key) const { return values_.count(key) > 0; }
  std::string get(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  std::vector<double> get_double_list(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string> values_;
};

bool is_known_key(const std::string& key);

TrainConfig train_config_from(const Config& c);
SynthSpec synth_spec_from(const Config& c);

}  // namespace fsdg
