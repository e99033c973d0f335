#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amem/interaction.hpp"
#include "amem/memory_pool.hpp"
#include "amem/policy.hpp"
#include "amem/prompt_templates.hpp"
#include "amem/response_parsing.hpp"

namespace amem {

// One call to the frozen LLM. `prompt` is the filled template; `inputs` holds
// the same placeholder values as structured JSON (keys are the placeholder
// names) so offline providers need not parse prose.
struct AgentRequest {
    TemplateId template_id = TemplateId::Extract;
    std::string prompt;
    nlohmann::json inputs;
    int attempt = 0;
};

class AgentProvider {
public:
    virtual ~AgentProvider() = default;
    // Returns the raw completion text. Throws TransportError.
    virtual std::string complete(const AgentRequest& request) const = 0;
    virtual std::string name() const = 0;
};

enum class MockRankMode { Overlap, Oracle, Adversarial };

std::string_view to_string(MockRankMode mode) noexcept;
MockRankMode mock_rank_mode_from_string(std::string_view name);

struct MockOptions {
    MockRankMode rank_mode = MockRankMode::Overlap;
    bool link_all = false;  // link every presented candidate
};

// Deterministic offline agent. All rules work on "category tags": a tag is
// '#' + slugify(category), e.g. "Video Games" -> "#video_games".
//
// extract: behavior_explanation = "Interested in #a (2), #b (1)."  (distinct
//          tags, ascending, with window multiplicity);
//          pattern_description = "Sequence #a -> #b -> #a; keywords: k1, k2, k3."
//          (tags in window order; keywords are the first three of the sorted
//          distinct title tokens with >= 4 characters; the clause is omitted
//          when there are none).
// link:    the new memory's dominant tag is the tag occurring most often across
//          both of its texts (ties -> lexicographically smallest). Candidates
//          whose texts contain that tag are linked. link_all links everything.
// evolve:  every presented candidate gets an update. Tags of the new memory
//          missing from the candidate are appended to its pattern_description
//          as " Also #x #y." (ascending); with none missing both fields are null.
// rank:    candidates ordered by the number of distinct alnum tokens (>= 3
//          chars) shared with the history and memory texts, ties by input
//          order. Oracle mode moves `oracle_hint` to the front, adversarial mode
//          to the back.
class MockProvider final : public AgentProvider {
public:
    explicit MockProvider(MockOptions options = {}) : options_(options) {}
    std::string complete(const AgentRequest& request) const override;
    std::string name() const override;

private:
    MockOptions options_;
};

struct HttpProviderConfig {
    std::string endpoint;  // OpenAI-style chat-completions URL
    std::string model;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{1000};
    std::string api_key_env;
    std::optional<double> temperature = 0.0;
};

// POST {"model", "messages":[{"role":"user","content":prompt}], "temperature"}
// and returns choices[0].message.content.
class HttpProvider final : public AgentProvider {
public:
    explicit HttpProvider(HttpProviderConfig config);
    std::string complete(const AgentRequest& request) const override;
    std::string name() const override;

private:
    HttpProviderConfig config_;
};

struct AuditRecord {
    std::string template_id;
    std::string template_hash;
    int attempt = 0;
    std::string prompt;
    std::string raw_response;
    std::string outcome;  // "ok", "parse_error: ...", "transport_error: ..."
};

// Append-only record of every provider call. Thread-safe.
class AuditLog {
public:
    void append(AuditRecord record);
    std::vector<AuditRecord> records() const;
    std::size_t size() const;
    // Calls per template id.
    std::map<std::string, std::size_t> call_counts() const;
    void write_jsonl(const std::filesystem::path& path) const;

private:
    mutable std::mutex mutex_;
    std::vector<AuditRecord> records_;
};

struct LinkCandidate {
    MemoryId id = 0;
    double score = 0.0;
    PatternText pattern;
};

struct LinkVerdict {
    bool should_link = false;
    std::vector<MemoryId> linked_ids;
    std::string reasoning;
    std::size_t dropped = 0;  // out-of-set or duplicate ids removed
};

struct EvolutionUpdate {
    MemoryId id = 0;
    std::optional<std::string> behavior_explanation;  // nullopt keeps the original
    std::optional<std::string> pattern_description;
    std::string reasoning;

    bool changes_text() const noexcept {
        return behavior_explanation.has_value() || pattern_description.has_value();
    }
};

struct EvolutionVerdict {
    bool should_evolve = false;
    std::vector<EvolutionUpdate> updates;  // empty unless should_evolve
    std::size_t dropped = 0;
};

struct RepairStats {
    std::size_t duplicates = 0;
    std::size_t hallucinated = 0;
    std::size_t omitted = 0;

    bool any() const noexcept { return duplicates + hallucinated + omitted > 0; }
    RepairStats& operator+=(const RepairStats& o) noexcept {
        duplicates += o.duplicates;
        hallucinated += o.hallucinated;
        omitted += o.omitted;
        return *this;
    }
};

struct RankingResult {
    std::string user_id;
    std::vector<std::string> ranked_ids;
    std::string reasoning;
    RepairStats repairs;
};

// Forces `proposed` into a permutation of `candidates`: duplicates keep their
// first occurrence, unknown ids are dropped, missing ids are appended in
// candidate order.
std::vector<std::string> repair_ranking(std::span<const std::string> proposed,
                                        std::span<const std::string> candidates,
                                        RepairStats& stats);

struct GatewayOptions {
    std::size_t window_size = 3;
    std::size_t parse_retry_budget = 2;
};

// All LLM traffic: fills templates, calls the provider, enforces the reply
// contracts and writes the audit log. Re-prompts with a JSON reminder on parse
// failure, up to parse_retry_budget extra attempts.
class AgentGateway {
public:
    AgentGateway(std::shared_ptr<const AgentProvider> provider, PromptTemplates templates,
                 GatewayOptions options = {}, std::shared_ptr<AuditLog> audit = nullptr);

    // window: 1..window_size items, each with non-empty title and category.
    PatternText extract_pattern(std::span<const Interaction> window) const;

    // candidates come pre-filtered by update_candidates. Empty candidates
    // short-circuit to "no link" without a provider call.
    LinkVerdict validate_links(const PatternText& new_memory,
                               std::span<const LinkCandidate> candidates,
                               const PolicyDecision& decision) const;

    // One call covering every linked memory.
    EvolutionVerdict evolve_memories(const PatternText& new_memory,
                                     std::span<const MemoryEntry> linked) const;

    // recent_history is most-recent-first. The oracle hint is forwarded to the
    // provider's structured inputs only; it never appears in the prompt text.
    RankingResult rank_candidates(std::span<const Interaction> recent_history,
                                  std::span<const PatternText> memories,
                                  std::span<const ItemInfo> candidates,
                                  const std::optional<std::string>& oracle_hint = {}) const;

    const AuditLog& audit() const noexcept { return *audit_; }
    std::shared_ptr<AuditLog> audit_ptr() const noexcept { return audit_; }
    const PromptTemplates& templates() const noexcept { return templates_; }
    const AgentProvider& provider() const noexcept { return *provider_; }
    const GatewayOptions& options() const noexcept { return options_; }

private:
    nlohmann::json call(TemplateId id, const std::string& prompt, const nlohmann::json& inputs,
                        const ResponseSchema& schema) const;

    std::shared_ptr<const AgentProvider> provider_;
    PromptTemplates templates_;
    GatewayOptions options_;
    std::shared_ptr<AuditLog> audit_;
};

// JSON rendering used for placeholders: indent 2, ASCII-escaped.
std::string render_json(const nlohmann::json& value);

}  // namespace amem
