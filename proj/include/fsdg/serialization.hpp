#pragma once

#include <json.hpp>

#include "fsdg/featurespace.hpp"
#include "fsdg/hierarchy.hpp"
#include "fsdg/network.hpp"
#include "fsdg/objectives.hpp"

namespace fsdg {

using Json = nlohmann::ordered_json;

Json to_json(const PartitionSpec& s);
PartitionSpec partition_from_json(const Json& j);

Json to_json(const ObjectiveConfig& c);
ObjectiveConfig objective_from_json(const Json& j);

Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j);

Json to_json(const GranularityHierarchy& h);
GranularityHierarchy hierarchy_from_json(const Json& j);

}  // namespace fsdg
