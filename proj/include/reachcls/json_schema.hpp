#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace reachcls {

struct SchemaViolation {
  std::string path;  // dotted field path, e.g. "learner.train.grad_steps"
  std::string message;
};

/// Validates `doc` against a JSON schema using the keyword subset the shipped
/// schemas rely on: type, enum, const, properties, required,
/// additionalProperties, items, minItems, maxItems, minLength, minimum,
/// maximum, exclusiveMinimum, exclusiveMaximum and local "$ref"s into
/// "#/$defs/...". Unknown keywords are ignored.
std::vector<SchemaViolation> validate_json(const nlohmann::json& schema, const nlohmann::json& doc);

}  // namespace reachcls
