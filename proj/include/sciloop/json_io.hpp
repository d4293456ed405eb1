#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace sciloop {

/// Insertion-ordered JSON; every persisted document uses it so key order is fixed.
using Json = nlohmann::ordered_json;

/// Extracts the first top-level JSON object or array embedded in model output,
/// tolerating surrounding prose and ``` fences. Throws Json::parse_error when
/// nothing parses.
Json parse_embedded_json(const std::string& text);

// Typed field access that throws InvariantError naming the key.
std::string require_string(const Json& j, const char* key);
double require_number(const Json& j, const char* key);
int require_int(const Json& j, const char* key);
std::vector<std::string> string_list(const Json& j, const char* key);

}  // namespace sciloop
