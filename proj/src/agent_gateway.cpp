#include <algorithm>
#include <charconv>
#include <set>
#include <unordered_set>

#include <spdlog/spdlog.h>

#include "amem/agent.hpp"
#include "amem/errors.hpp"

namespace amem {
namespace {

using nlohmann::json;

constexpr std::string_view k_json_reminder = "\n\nReturn ONLY valid JSON.";

// Memory ids may come back as numbers or numeric strings.
std::optional<MemoryId> as_memory_id(const json& v) {
    if (v.is_number_unsigned()) {
        return v.get<MemoryId>();
    }
    if (v.is_number_integer()) {
        const auto i = v.get<std::int64_t>();
        return i >= 0 ? std::optional<MemoryId>(static_cast<MemoryId>(i)) : std::nullopt;
    }
    if (v.is_string()) {
        const auto& s = v.get_ref<const std::string&>();
        MemoryId id = 0;
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), id);
        if (ec == std::errc() && ptr == s.data() + s.size() && !s.empty()) {
            return id;
        }
    }
    return std::nullopt;
}

json memory_json(const PatternText& p) {
    return {{"behavior_explanation", p.behavior_explanation},
            {"pattern_description", p.pattern_description}};
}

}  // namespace

std::string render_json(const json& value) {
    return value.dump(2, ' ', true);
}

std::vector<std::string> repair_ranking(std::span<const std::string> proposed,
                                        std::span<const std::string> candidates,
                                        RepairStats& stats) {
    const std::unordered_set<std::string> valid(candidates.begin(), candidates.end());
    std::unordered_set<std::string> seen;
    std::vector<std::string> out;
    out.reserve(candidates.size());
    for (const auto& id : proposed) {
        if (!valid.contains(id)) {
            ++stats.hallucinated;
        } else if (!seen.insert(id).second) {
            ++stats.duplicates;
        } else {
            out.push_back(id);
        }
    }
    for (const auto& id : candidates) {
        if (!seen.contains(id)) {
            ++stats.omitted;
            out.push_back(id);
        }
    }
    return out;
}

AgentGateway::AgentGateway(std::shared_ptr<const AgentProvider> provider,
                           PromptTemplates templates, GatewayOptions options,
                           std::shared_ptr<AuditLog> audit)
    : provider_(std::move(provider)),
      templates_(std::move(templates)),
      options_(options),
      audit_(audit ? std::move(audit) : std::make_shared<AuditLog>()) {
    if (!provider_) {
        throw PreconditionError("AgentGateway needs a provider");
    }
    if (options_.window_size == 0) {
        throw PreconditionError("window size must be >= 1");
    }
}

json AgentGateway::call(TemplateId id, const std::string& prompt, const json& inputs,
                        const ResponseSchema& schema) const {
    const std::string tmpl(to_string(id));
    const std::string& hash = templates_.hash(id);
    std::optional<ParseError> last;
    for (std::size_t attempt = 0; attempt <= options_.parse_retry_budget; ++attempt) {
        AgentRequest request;
        request.template_id = id;
        request.prompt = attempt == 0 ? prompt : prompt + std::string(k_json_reminder);
        request.inputs = inputs;
        request.attempt = static_cast<int>(attempt);
        std::string raw;
        try {
            raw = provider_->complete(request);
        } catch (const TransportError& ex) {
            audit_->append({tmpl, hash, request.attempt, request.prompt, "",
                            std::string("transport_error: ") + ex.what()});
            throw;
        }
        try {
            json parsed = parse_agent_response(raw, schema);
            audit_->append({tmpl, hash, request.attempt, request.prompt, raw, "ok"});
            return parsed;
        } catch (const ParseError& ex) {
            audit_->append({tmpl, hash, request.attempt, request.prompt, raw,
                            std::string("parse_error: ") + ex.what()});
            spdlog::warn("{} reply rejected (attempt {}): {}", tmpl, attempt + 1, ex.what());
            last = ex;
        }
    }
    throw ParseError(last->field(),
                     std::string(last->what()) + " (after " +
                         std::to_string(options_.parse_retry_budget + 1) + " attempts)",
                     last->raw_response());
}

PatternText AgentGateway::extract_pattern(std::span<const Interaction> window) const {
    if (window.empty() || window.size() > options_.window_size) {
        throw PreconditionError("extraction window must hold 1.." +
                                std::to_string(options_.window_size) + " items, got " +
                                std::to_string(window.size()));
    }
    json summary = json::array();
    for (const auto& item : window) {
        if (item.title.empty() || item.category.empty()) {
            throw PreconditionError("window item '" + item.item_id +
                                    "' lacks a title or category");
        }
        summary.push_back({{"title", item.title}, {"category", item.category}});
    }
    const json inputs = {{"interaction_summary", summary}};
    const std::string prompt =
        templates_.render(TemplateId::Extract, {{"interaction_summary", render_json(summary)}});
    const json reply = call(TemplateId::Extract, prompt, inputs, schemas::extraction());
    return {reply.at("behavior_explanation").get<std::string>(),
            reply.at("pattern_description").get<std::string>()};
}

LinkVerdict AgentGateway::validate_links(const PatternText& new_memory,
                                         std::span<const LinkCandidate> candidates,
                                         const PolicyDecision& decision) const {
    if (!decision.do_update) {
        throw PreconditionError("validate_links requires an update decision");
    }
    LinkVerdict verdict;
    if (candidates.empty()) {
        verdict.reasoning = "no candidates";
        return verdict;
    }
    json patterns = json::array();
    std::set<MemoryId> presented;
    for (const auto& c : candidates) {
        patterns.push_back({{"thought_id", c.id},
                            {"behavior_explanation", c.pattern.behavior_explanation},
                            {"pattern_description", c.pattern.pattern_description},
                            {"similarity", c.score}});
        presented.insert(c.id);
    }
    const json nearest = {{"strategy", std::string(to_string(decision.strategy))},
                          {"patterns", patterns}};
    const json inputs = {{"new_behavior", new_memory.behavior_explanation},
                         {"new_pattern", new_memory.pattern_description},
                         {"nearest_info", nearest}};
    const std::string prompt = templates_.render(
        TemplateId::Link, {{"new_behavior", new_memory.behavior_explanation},
                           {"new_pattern", new_memory.pattern_description},
                           {"nearest_info", render_json(nearest)}});
    const json reply = call(TemplateId::Link, prompt, inputs, schemas::link());

    verdict.reasoning = reply.value("reasoning", "");
    std::set<MemoryId> taken;
    for (const auto& raw_id : reply.at("linked_thought_ids")) {
        const auto id = as_memory_id(raw_id);
        if (!id || !presented.contains(*id) || !taken.insert(*id).second) {
            spdlog::info("link verdict: dropping id {} not among presented candidates",
                         raw_id.dump());
            ++verdict.dropped;
            continue;
        }
        verdict.linked_ids.push_back(*id);
    }
    if (!reply.at("should_link").get<bool>()) {
        verdict.linked_ids.clear();
    }
    verdict.should_link = !verdict.linked_ids.empty();
    return verdict;
}

EvolutionVerdict AgentGateway::evolve_memories(const PatternText& new_memory,
                                               std::span<const MemoryEntry> linked) const {
    if (linked.empty()) {
        throw PreconditionError("evolve_memories needs at least one linked memory");
    }
    json mem_info = json::array();
    std::set<MemoryId> presented;
    for (const auto& m : linked) {
        mem_info.push_back({{"thought_id", m.id},
                            {"behavior_explanation", m.pattern.behavior_explanation},
                            {"pattern_description", m.pattern.pattern_description},
                            {"evolution_count", m.evolution_count}});
        presented.insert(m.id);
    }
    const json inputs = {{"new_behavior", new_memory.behavior_explanation},
                         {"new_pattern", new_memory.pattern_description},
                         {"mem_info", mem_info}};
    const std::string prompt = templates_.render(
        TemplateId::Evolve, {{"new_behavior", new_memory.behavior_explanation},
                             {"new_pattern", new_memory.pattern_description},
                             {"mem_info", render_json(mem_info)}});
    const json reply = call(TemplateId::Evolve, prompt, inputs, schemas::evolution());

    EvolutionVerdict verdict;
    verdict.should_evolve = reply.at("should_evolve").get<bool>();
    if (!verdict.should_evolve) {
        return verdict;
    }
    std::set<MemoryId> taken;
    const auto text_field = [](const json& u, const char* key) -> std::optional<std::string> {
        auto it = u.find(key);
        if (it == u.end() || !it->is_string() || it->get_ref<const std::string&>().empty()) {
            return std::nullopt;
        }
        return it->get<std::string>();
    };
    for (const auto& u : reply.at("updates")) {
        const auto id = u.is_object() && u.contains("thought_id")
                            ? as_memory_id(u.at("thought_id"))
                            : std::nullopt;
        if (!id || !presented.contains(*id) || !taken.insert(*id).second) {
            spdlog::info("evolution verdict: dropping update {}", u.dump());
            ++verdict.dropped;
            continue;
        }
        EvolutionUpdate update;
        update.id = *id;
        update.behavior_explanation = text_field(u, "behavior_explanation");
        update.pattern_description = text_field(u, "pattern_description");
        update.reasoning = u.value("reasoning", "");
        verdict.updates.push_back(std::move(update));
    }
    return verdict;
}

RankingResult AgentGateway::rank_candidates(std::span<const Interaction> recent_history,
                                            std::span<const PatternText> memories,
                                            std::span<const ItemInfo> candidates,
                                            const std::optional<std::string>& oracle_hint) const {
    if (candidates.empty()) {
        throw PreconditionError("ranking needs at least one candidate");
    }
    std::vector<std::string> candidate_ids;
    std::unordered_set<std::string> unique;
    json candidate_info = json::array();
    for (const auto& c : candidates) {
        if (!unique.insert(c.item_id).second) {
            throw PreconditionError("duplicate candidate id '" + c.item_id + "'");
        }
        candidate_ids.push_back(c.item_id);
        candidate_info.push_back(
            {{"item_id", c.item_id}, {"title", c.title}, {"category", c.category}});
    }
    json profile = json::array();
    for (const auto& h : recent_history) {
        profile.push_back({{"title", h.title}, {"category", h.category}});
    }
    json thoughts = json::array();
    for (const auto& m : memories) {
        thoughts.push_back(memory_json(m));
    }
    json inputs = {{"user_profile", profile},
                   {"memory_thoughts", thoughts},
                   {"candidate_info", candidate_info},
                   {"n_candidates", candidates.size()}};
    if (oracle_hint) {
        inputs["oracle_hint"] = *oracle_hint;
    }
    const std::string prompt =
        templates_.render(TemplateId::Rank, {{"user_profile", render_json(profile)},
                                             {"memory_thoughts", render_json(thoughts)},
                                             {"candidate_info", render_json(candidate_info)},
                                             {"n_candidates", std::to_string(candidates.size())}});
    const json reply = call(TemplateId::Rank, prompt, inputs, schemas::ranking());

    std::vector<std::string> proposed;
    for (const auto& v : reply.at("ranked_item_ids")) {
        if (v.is_string()) {
            proposed.push_back(v.get<std::string>());
        } else if (v.is_number_integer()) {
            proposed.push_back(std::to_string(v.get<std::int64_t>()));
        } else {
            proposed.push_back(v.dump());
        }
    }
    RankingResult result;
    result.ranked_ids = repair_ranking(proposed, candidate_ids, result.repairs);
    result.reasoning = reply.value("reasoning", "");
    if (result.repairs.any()) {
        spdlog::info("ranking repaired: {} duplicate, {} hallucinated, {} omitted",
                     result.repairs.duplicates, result.repairs.hallucinated,
                     result.repairs.omitted);
    }
    return result;
}

}  // namespace amem
