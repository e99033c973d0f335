#include "amem/prompt_templates.hpp"

#include <fstream>
#include <sstream>
#include <span>

#include "amem/embedded_templates.hpp"
#include "amem/errors.hpp"
#include "amem/hashing.hpp"

namespace amem {
namespace {

constexpr std::string_view k_extract_vars[] = {"interaction_summary"};
constexpr std::string_view k_link_vars[] = {"new_behavior", "new_pattern", "nearest_info"};
constexpr std::string_view k_evolve_vars[] = {"new_behavior", "new_pattern", "mem_info"};
constexpr std::string_view k_rank_vars[] = {"user_profile", "memory_thoughts", "candidate_info",
                                            "n_candidates"};

std::size_t index_of(TemplateId id) {
    return static_cast<std::size_t>(id);
}

bool is_ident_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

}  // namespace

std::string_view to_string(TemplateId id) noexcept {
    switch (id) {
        case TemplateId::Extract: return "extract";
        case TemplateId::Link: return "link";
        case TemplateId::Evolve: return "evolve";
        case TemplateId::Rank: return "rank";
    }
    return "?";
}

std::span<const std::string_view> placeholders_of(TemplateId id) {
    switch (id) {
        case TemplateId::Extract: return k_extract_vars;
        case TemplateId::Link: return k_link_vars;
        case TemplateId::Evolve: return k_evolve_vars;
        case TemplateId::Rank: return k_rank_vars;
    }
    return {};
}

void PromptTemplates::set(TemplateId id, std::string text) {
    for (auto name : placeholders_of(id)) {
        const std::string token = "{" + std::string(name) + "}";
        if (text.find(token) == std::string::npos) {
            throw PreconditionError("template '" + std::string(to_string(id)) +
                                    "' lacks placeholder " + token);
        }
    }
    hashes_[index_of(id)] = sha256_hex(text);
    texts_[index_of(id)] = std::move(text);
}

PromptTemplates PromptTemplates::builtin() {
    PromptTemplates t;
    t.set(TemplateId::Extract, embedded::k_extract_template);
    t.set(TemplateId::Link, embedded::k_link_template);
    t.set(TemplateId::Evolve, embedded::k_evolve_template);
    t.set(TemplateId::Rank, embedded::k_rank_template);
    return t;
}

PromptTemplates PromptTemplates::from_directory(const std::filesystem::path& dir) {
    PromptTemplates t;
    for (TemplateId id : k_all_templates) {
        const auto path = dir / (std::string(to_string(id)) + ".tmpl");
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw IoError("cannot read template " + path.string());
        }
        std::ostringstream buf;
        buf << in.rdbuf();
        t.set(id, buf.str());
    }
    return t;
}

const std::string& PromptTemplates::text(TemplateId id) const {
    return texts_[index_of(id)];
}

const std::string& PromptTemplates::hash(TemplateId id) const {
    return hashes_[index_of(id)];
}

std::string PromptTemplates::render(TemplateId id,
                                    const std::map<std::string, std::string>& vars) const {
    for (auto name : placeholders_of(id)) {
        if (!vars.contains(std::string(name))) {
            throw PreconditionError("no value for placeholder {" + std::string(name) + "}");
        }
    }
    const std::string& src = text(id);
    std::string out;
    out.reserve(src.size() + 256);
    std::size_t i = 0;
    while (i < src.size()) {
        if (src[i] == '{') {
            std::size_t j = i + 1;
            while (j < src.size() && is_ident_char(src[j])) {
                ++j;
            }
            if (j < src.size() && src[j] == '}' && j > i + 1) {
                auto it = vars.find(src.substr(i + 1, j - i - 1));
                if (it != vars.end()) {
                    out += it->second;
                    i = j + 1;
                    continue;
                }
            }
        }
        out.push_back(src[i]);
        ++i;
    }
    return out;
}

}  // namespace amem
