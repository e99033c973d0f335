#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace amem {

enum class FieldKind { String, NonEmptyString, Boolean, Array, StringOrNull };

struct FieldSpec {
    std::string name;
    FieldKind kind;
    bool required = true;
};

// Expected top-level shape of an agent reply.
struct ResponseSchema {
    std::string name;
    std::vector<FieldSpec> fields;
};

// Strips markdown code fences and surrounding prose, returning the first
// balanced {...} object (string literals and escapes respected), or nullopt.
std::optional<std::string> extract_json_object(std::string_view raw);

// Extracts and validates one reply. Throws ParseError naming the first
// missing or mistyped field (field() is empty if no JSON object was found).
nlohmann::json parse_agent_response(std::string_view raw, const ResponseSchema& schema);

namespace schemas {
const ResponseSchema& extraction();
const ResponseSchema& link();
const ResponseSchema& evolution();
const ResponseSchema& ranking();
}  // namespace schemas

}  // namespace amem
