#include "amem/response_parsing.hpp"

#include "amem/errors.hpp"

namespace amem {
namespace {

bool matches(const nlohmann::json& v, FieldKind kind) {
    switch (kind) {
        case FieldKind::String: return v.is_string();
        case FieldKind::NonEmptyString: return v.is_string() && !v.get_ref<const std::string&>().empty();
        case FieldKind::Boolean: return v.is_boolean();
        case FieldKind::Array: return v.is_array();
        case FieldKind::StringOrNull: return v.is_string() || v.is_null();
    }
    return false;
}

std::string_view kind_name(FieldKind kind) {
    switch (kind) {
        case FieldKind::String: return "a string";
        case FieldKind::NonEmptyString: return "a non-empty string";
        case FieldKind::Boolean: return "a boolean";
        case FieldKind::Array: return "an array";
        case FieldKind::StringOrNull: return "a string or null";
    }
    return "?";
}

}  // namespace

std::optional<std::string> extract_json_object(std::string_view raw) {
    // Fences are just prose around the object; scanning for the first
    // balanced object handles ```json blocks and leading chatter alike.
    for (std::size_t start = raw.find('{'); start != std::string_view::npos;
         start = raw.find('{', start + 1)) {
        int depth = 0;
        bool in_string = false;
        bool escaped = false;
        for (std::size_t i = start; i < raw.size(); ++i) {
            const char c = raw[i];
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
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    std::string candidate(raw.substr(start, i - start + 1));
                    if (nlohmann::json::accept(candidate)) {
                        return candidate;
                    }
                    break;
                }
            }
        }
    }
    return std::nullopt;
}

nlohmann::json parse_agent_response(std::string_view raw, const ResponseSchema& schema) {
    const auto object = extract_json_object(raw);
    if (!object) {
        throw ParseError("", schema.name + " reply contains no JSON object", std::string(raw));
    }
    nlohmann::json j = nlohmann::json::parse(*object);
    for (const auto& field : schema.fields) {
        auto it = j.find(field.name);
        if (it == j.end()) {
            if (field.required) {
                throw ParseError(field.name,
                                 schema.name + " reply is missing field '" + field.name + "'",
                                 std::string(raw));
            }
            continue;
        }
        if (!matches(*it, field.kind)) {
            throw ParseError(field.name,
                             schema.name + " reply field '" + field.name + "' is not " +
                                 std::string(kind_name(field.kind)),
                             std::string(raw));
        }
    }
    return j;
}

namespace schemas {

const ResponseSchema& extraction() {
    static const ResponseSchema s{"extraction",
                                  {{"behavior_explanation", FieldKind::NonEmptyString},
                                   {"pattern_description", FieldKind::NonEmptyString}}};
    return s;
}

const ResponseSchema& link() {
    static const ResponseSchema s{"link",
                                  {{"should_link", FieldKind::Boolean},
                                   {"linked_thought_ids", FieldKind::Array},
                                   {"reasoning", FieldKind::String, false}}};
    return s;
}

const ResponseSchema& evolution() {
    static const ResponseSchema s{"evolution",
                                  {{"should_evolve", FieldKind::Boolean},
                                   {"updates", FieldKind::Array}}};
    return s;
}

const ResponseSchema& ranking() {
    static const ResponseSchema s{"ranking",
                                  {{"ranked_item_ids", FieldKind::Array},
                                   {"reasoning", FieldKind::String, false}}};
    return s;
}

}  // namespace schemas
}  // namespace amem
