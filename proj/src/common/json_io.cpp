#include "sciloop/json_io.hpp"

#include "sciloop/common.hpp"

namespace sciloop {

Json parse_embedded_json(const std::string& text) {
  // Fast path: the whole reply is JSON.
  Json whole = Json::parse(text, nullptr, false);
  if (!whole.is_discarded() && (whole.is_object() || whole.is_array())) return whole;

  // Otherwise try every opening brace/bracket and find a balanced span.
  for (std::size_t start = 0; start < text.size(); ++start) {
    const char open = text[start];
    if (open != '{' && open != '[') continue;
    const char close = open == '{' ? '}' : ']';
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == open) {
        ++depth;
      } else if (c == close) {
        if (--depth == 0) {
          Json j = Json::parse(text.substr(start, i - start + 1), nullptr, false);
          if (!j.is_discarded()) return j;
          break;
        }
      }
    }
  }
  return Json::parse(text);  // throws with the parser's diagnostics
}

std::string require_string(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_string()) {
    throw InvariantError(std::string("expected string field '") + key + "'");
  }
  return j[key].get<std::string>();
}

double require_number(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number()) {
    throw InvariantError(std::string("expected numeric field '") + key + "'");
  }
  return j[key].get<double>();
}

int require_int(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key) || !j[key].is_number_integer()) {
    throw InvariantError(std::string("expected integer field '") + key + "'");
  }
  return j[key].get<int>();
}

std::vector<std::string> string_list(const Json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.is_object() || !j.contains(key) || j[key].is_null()) return out;
  if (!j[key].is_array()) throw InvariantError(std::string("expected list field '") + key + "'");
  for (const auto& v : j[key]) {
    if (!v.is_string()) throw InvariantError(std::string("non-string entry in '") + key + "'");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace sciloop
