#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

namespace amem {

enum class TemplateId { Extract, Link, Evolve, Rank };

inline constexpr std::array<TemplateId, 4> k_all_templates = {
    TemplateId::Extract, TemplateId::Link, TemplateId::Evolve, TemplateId::Rank};

// "extract", "link", "evolve", "rank"; also the template file stem.
std::string_view to_string(TemplateId id) noexcept;

// The four agent prompts. Placeholders are `{name}` tokens; literal braces in
// the JSON examples of the prompts are left alone because only known
// placeholder names are substituted.
class PromptTemplates {
public:
    // Templates compiled into the library.
    static PromptTemplates builtin();
    // Reads extract.tmpl, link.tmpl, evolve.tmpl, rank.tmpl from dir.
    static PromptTemplates from_directory(const std::filesystem::path& dir);

    const std::string& text(TemplateId id) const;
    // SHA-256 of the template bytes, logged with each run.
    const std::string& hash(TemplateId id) const;

    // Substitutes every placeholder the template declares. Throws
    // PreconditionError if one of them has no value in vars.
    std::string render(TemplateId id, const std::map<std::string, std::string>& vars) const;

private:
    PromptTemplates() = default;
    void set(TemplateId id, std::string text);

    std::array<std::string, 4> texts_;
    std::array<std::string, 4> hashes_;
};

// Placeholder names a template is required to carry.
std::span<const std::string_view> placeholders_of(TemplateId id);

}  // namespace amem
