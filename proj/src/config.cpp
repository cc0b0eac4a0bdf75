#include "fsdg/config.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "fsdg/error.hpp"
#include "fsdg/format.hpp"
#include "fsdg/serialization.hpp"

namespace fsdg {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

const std::map<std::string, std::string>& default_table() {
  static const std::map<std::string, std::string> t = [] {
    std::map<std::string, std::string> m = {
        {"seed", "0"},
        {"data.manifest", ""},
        {"data.train_domains", ""},
        {"data.val_domain", ""},
        {"data.eval_domains", ""},
        {"train.epochs", "10"},
        {"train.batch_size", "32"},
        {"train.lr", "0.003"},
        {"train.momentum", "0.9"},
        {"train.head_lr_multiplier", "10"},
        {"train.lr_start", "1"},
        {"train.lr_end", "0.1"},
        {"train.weight_decay", "0"},
        {"train.balanced_batches", "false"},
        {"objective.mode", "fsdg"},
        {"objective.lambda_cs", "0.05"},
        {"objective.lambda_cd", "0.5"},
        {"objective.lambda_p", "1"},
        {"objective.lambda_dec", "1"},
        {"objective.metric", "cosine"},
        {"objective.epsilon", "ramp:0,1,0.5"},
        {"partition.r_c", "0.5"},
        {"partition.r_p", "0.3"},
        {"partition.r_n", "0.2"},
        {"model.backbone", "dual"},
        {"model.widths", "32,64,128,256"},
        {"model.feature_channels", "256"},
        {"synth.classes", "16,8,4,2"},
        {"synth.samples_per_class", "20"},
        {"synth.image_size", "32"},
        {"synth.noise", "0.03"},
        {"synth.domains", "photo,painting"},
        {"grid.space", "0.005,0.01,0.05,0.1,0.5,1"},
        {"grid.order", "lambda_cs,lambda_cd,lambda_p"},
        {"eval.checkpoint", ""},
        {"explain.checkpoint", ""},
        {"explain.classes", ""},
        {"explain.top_k", "26"},
        {"explain.records", "40"},
        {"sclass.hierarchy", ""},
        {"sclass.classes", ""},
        {"gradcheck.instances", "20"},
        {"gradcheck.metrics", "cosine,euclidean,hsic"},
    };
    for (const DomainStyle& d : default_domains()) {
      const std::string p = "synth.domain." + d.name + ".";
      m[p + "palette"] = std::to_string(d.palette);
      m[p + "texture"] = format_double(d.texture);
      m[p + "blur"] = std::to_string(d.blur);
      m[p + "contrast"] = format_double(d.contrast);
      m[p + "cast"] = format_double(d.cast[0]) + "," + format_double(d.cast[1]) + "," + format_double(d.cast[2]);
    }
    return m;
  }();
  return t;
}

bool is_domain_key(const std::string& key) {
  const std::string prefix = "synth.domain.";
  if (key.rfind(prefix, 0) != 0) return false;
  const auto dot = key.rfind('.');
  if (dot <= prefix.size()) return false;
  const std::string field = key.substr(dot + 1);
  return field == "palette" || field == "texture" || field == "blur" || field == "contrast" || field == "cast";
}

template <typename T, typename F>
T convert(const std::string& key, const std::string& text, F f) {
  try {
    std::size_t pos = 0;
    T v = f(text, &pos);
    if (pos != text.size()) throw std::invalid_argument("trailing text");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::ConfigError, "bad value for " + key + ": '" + text + "'");
  }
}

}  // namespace

bool is_known_key(const std::string& key) { return default_table().count(key) > 0 || is_domain_key(key); }

Config Config::defaults() {
  Config c;
  c.values_ = default_table();
  return c;
}

Config Config::parse(std::istream& in, const std::string& source) {
  Config c;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::ConfigError, source + ":" + std::to_string(lineno) + ": expected key = value");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::ConfigError, "cannot open config " + path.string());
  if (path.extension() == ".json") {
    Json j;
    try {
      j = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::ConfigError, path.string() + ": " + e.what());
    }
    if (!j.contains("config") || !j["config"].is_object()) {
      fail(ErrorCode::ConfigError, path.string() + ": run record has no config object");
    }
    Config c;
    for (const auto& [k, v] : j["config"].items()) {
      if (!v.is_string()) fail(ErrorCode::ConfigError, path.string() + ": config values must be strings");
      c.set(k, v.get<std::string>());
    }
    return c;
  }
  return parse(in, path.string());
}

void Config::set(const std::string& key, const std::string& value) {
  if (!is_known_key(key)) fail(ErrorCode::ConfigError, "unknown config key '" + key + "'");
  values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) fail(ErrorCode::ConfigError, "expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void Config::merge(const Config& other) {
  for (const auto& [k, v] : other.values_) values_[k] = v;
}

std::string Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it != values_.end()) return it->second;
  const auto d = default_table().find(key);
  if (d != default_table().end()) return d->second;
  fail(ErrorCode::ConfigError, "config key '" + key + "' is not set");
}

int Config::get_int(const std::string& key) const {
  return convert<int>(key, get(key), [](const std::string& s, std::size_t* p) { return std::stoi(s, p); });
}

std::uint64_t Config::get_u64(const std::string& key) const {
  const std::string s = get(key);
  if (!s.empty() && s[0] == '-') fail(ErrorCode::ConfigError, key + " must be non-negative");
  return convert<std::uint64_t>(key, s, [](const std::string& t, std::size_t* p) { return std::stoull(t, p); });
}

double Config::get_double(const std::string& key) const {
  return convert<double>(key, get(key), [](const std::string& s, std::size_t* p) { return std::stod(s, p); });
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  fail(ErrorCode::ConfigError, "bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<int> Config::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (const std::string& s : get_list(key)) {
    out.push_back(convert<int>(key, s, [](const std::string& t, std::size_t* p) { return std::stoi(t, p); }));
  }
  return out;
}

std::vector<double> Config::get_double_list(const std::string& key) const {
  std::vector<double> out;
  for (const std::string& s : get_list(key)) {
    out.push_back(convert<double>(key, s, [](const std::string& t, std::size_t* p) { return std::stod(t, p); }));
  }
  return out;
}

void Config::write(std::ostream& out) const {
  for (const auto& [k, v] : values_) out << k << " = " << v << '\n';
}

TrainConfig train_config_from(const Config& c) {
  TrainConfig t;
  t.epochs = c.get_int("train.epochs");
  t.batch_size = c.get_int("train.batch_size");
  t.lr = c.get_double("train.lr");
  t.momentum = c.get_double("train.momentum");
  t.head_lr_multiplier = c.get_double("train.head_lr_multiplier");
  t.lr_start = c.get_double("train.lr_start");
  t.lr_end = c.get_double("train.lr_end");
  t.weight_decay = c.get_double("train.weight_decay");
  t.balanced_batches = c.get_bool("train.balanced_batches");
  t.seed = c.get_u64("seed");
  t.objective.mode = parse_mode(c.get("objective.mode"));
  t.objective.lambda_cs = c.get_double("objective.lambda_cs");
  t.objective.lambda_cd = c.get_double("objective.lambda_cd");
  t.objective.lambda_p = c.get_double("objective.lambda_p");
  t.objective.lambda_dec = c.get_double("objective.lambda_dec");
  t.objective.metric = parse_metric(c.get("objective.metric"));
  t.objective.epsilon = EpsilonSchedule::parse(c.get("objective.epsilon"));
  t.model.mode = parse_backbone_mode(c.get("model.backbone"));
  t.model.widths = c.get_int_list("model.widths");
  t.model.feature_channels = c.get_int("model.feature_channels");
  t.partition = PartitionSpec::make(c.get_double("partition.r_c"), c.get_double("partition.r_p"),
                                    c.get_double("partition.r_n"), t.model.feature_channels);
  return t;
}

SynthSpec synth_spec_from(const Config& c) {
  SynthSpec s;
  s.classes_per_level = c.get_int_list("synth.classes");
  s.samples_per_class = c.get_int("synth.samples_per_class");
  s.image_size = c.get_int("synth.image_size");
  s.noise = c.get_double("synth.noise");
  s.seed = c.get_u64("seed");
  s.domains.clear();
  for (const std::string& name : c.get_list("synth.domains")) {
    const std::string p = "synth.domain." + name + ".";
    if (!c.has(p + "palette") && !default_table().count(p + "palette")) {
      fail(ErrorCode::ConfigError, "domain '" + name + "' has no style keys (" + p + "palette, ...)");
    }
    DomainStyle d;
    d.name = name;
    d.palette = c.get_int(p + "palette");
    d.texture = c.get_double(p + "texture");
    d.blur = c.get_int(p + "blur");
    d.contrast = c.get_double(p + "contrast");
    const std::vector<double> cast = c.get_double_list(p + "cast");
    if (cast.size() != 3) fail(ErrorCode::ConfigError, p + "cast needs three values");
    d.cast = {cast[0], cast[1], cast[2]};
    s.domains.push_back(d);
  }
  s.validate();
  return s;
}

}  // namespace fsdg
