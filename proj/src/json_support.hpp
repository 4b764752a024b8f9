#pragma once

// Internal JSON conversions shared by the serializers. Not installed.

#include <json.hpp>

#include <set>
#include <string>

#include "simgen/data.hpp"

namespace simgen::detail {

using nlohmann::json;

json space_to_json(const ParameterSpace& space);
ParameterSpace space_from_json(const json& j);

json scaling_to_json(const ScalingStats& s);
ScalingStats scaling_from_json(const json& j);

/// Throws SchemaError naming the first key of `j` not in `allowed`.
void require_known_keys(const json& j, const std::set<std::string>& allowed, const std::string& where);

/// Fetches a required key, throwing SchemaError naming it when absent.
const json& require_key(const json& j, const std::string& key, const std::string& where);

}  // namespace simgen::detail
