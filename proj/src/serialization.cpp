#include "fsdg/serialization.hpp"

#include "fsdg/error.hpp"

namespace fsdg {

namespace {

template <typename T>
T field(const Json& j, const char* key) {
  if (!j.contains(key)) fail(ErrorCode::DataError, std::string("missing field '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::DataError, std::string("bad field '") + key + "': " + e.what());
  }
}

}  // namespace

Json to_json(const PartitionSpec& s) {
  return {{"r_c", s.r_c}, {"r_p", s.r_p}, {"r_n", s.r_n}, {"d", s.d},
          {"d_c", s.d_c}, {"d_p", s.d_p}, {"d_n", s.d_n}};
}

PartitionSpec partition_from_json(const Json& j) {
  PartitionSpec s = PartitionSpec::make(field<double>(j, "r_c"), field<double>(j, "r_p"),
                                        field<double>(j, "r_n"), field<int>(j, "d"));
  if (s.d_c != field<int>(j, "d_c") || s.d_p != field<int>(j, "d_p")) {
    fail(ErrorCode::DataError, "stored partition counts disagree with the rounding rule");
  }
  return s;
}

Json to_json(const ObjectiveConfig& c) {
  return {{"lambda_cs", c.lambda_cs}, {"lambda_cd", c.lambda_cd},   {"lambda_p", c.lambda_p},
          {"lambda_dec", c.lambda_dec}, {"metric", metric_name(c.metric)},
          {"epsilon", c.epsilon.to_string()}, {"mode", mode_name(c.mode)}};
}

ObjectiveConfig objective_from_json(const Json& j) {
  ObjectiveConfig c;
  c.lambda_cs = field<double>(j, "lambda_cs");
  c.lambda_cd = field<double>(j, "lambda_cd");
  c.lambda_p = field<double>(j, "lambda_p");
  c.lambda_dec = field<double>(j, "lambda_dec");
  c.metric = parse_metric(field<std::string>(j, "metric"));
  c.epsilon = EpsilonSchedule::parse(field<std::string>(j, "epsilon"));
  c.mode = parse_mode(field<std::string>(j, "mode"));
  c.validate();
  return c;
}

Json to_json(const ModelConfig& c) {
  return {{"classes_per_level", c.classes_per_level}, {"widths", c.widths},
          {"feature_channels", c.feature_channels},   {"in_channels", c.in_channels},
          {"image_size", c.image_size},               {"backbone", backbone_mode_name(c.mode)},
          {"backbone_arch", "small_cnn"}};
}

ModelConfig model_config_from_json(const Json& j) {
  ModelConfig c;
  c.classes_per_level = field<std::vector<int>>(j, "classes_per_level");
  c.widths = field<std::vector<int>>(j, "widths");
  c.feature_channels = field<int>(j, "feature_channels");
  c.in_channels = field<int>(j, "in_channels");
  c.image_size = field<int>(j, "image_size");
  c.mode = parse_backbone_mode(field<std::string>(j, "backbone"));
  return c;
}

Json to_json(const GranularityHierarchy& h) {
  return {{"levels", h.levels()}, {"classes_per_level", h.classes_per_level()}, {"rows", h.rows()}};
}

GranularityHierarchy hierarchy_from_json(const Json& j) {
  return GranularityHierarchy::from_rows(field<std::vector<std::vector<int>>>(j, "rows"));
}

}  // namespace fsdg
