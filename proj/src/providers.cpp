#include <algorithm>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "amem/agent.hpp"
#include "amem/errors.hpp"
#include "amem/text.hpp"
#include "http_client.hpp"

namespace amem {
namespace {

using nlohmann::json;

std::string tag_of(const std::string& category) {
    return "#" + slugify(category);
}

// '#' followed by [a-z0-9_] (and UTF-8 bytes), in text order.
std::vector<std::string> tags_in(std::string_view text) {
    std::vector<std::string> tags;
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] != '#') {
            continue;
        }
        std::size_t j = i + 1;
        while (j < text.size()) {
            const auto c = static_cast<unsigned char>(text[j]);
            if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c >= 0x80) {
                ++j;
            } else {
                break;
            }
        }
        if (j > i + 1) {
            tags.emplace_back(text.substr(i, j - i));
        }
        i = j - 1;
    }
    return tags;
}

std::vector<std::string> tags_of_memory(const json& memory) {
    auto tags = tags_in(memory.value("behavior_explanation", ""));
    auto more = tags_in(memory.value("pattern_description", ""));
    tags.insert(tags.end(), more.begin(), more.end());
    return tags;
}

std::optional<std::string> dominant_tag(const std::vector<std::string>& tags) {
    std::map<std::string, std::size_t> counts;
    for (const auto& t : tags) {
        ++counts[t];
    }
    std::optional<std::string> best;
    std::size_t best_count = 0;
    for (const auto& [tag, n] : counts) {  // ascending, so ties keep the smallest
        if (n > best_count) {
            best = tag;
            best_count = n;
        }
    }
    return best;
}

std::string join(const std::vector<std::string>& parts, std::string_view sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) {
            out += sep;
        }
        out += parts[i];
    }
    return out;
}

json mock_extract(const json& inputs) {
    const auto& window = inputs.at("interaction_summary");
    std::map<std::string, std::size_t> counts;
    std::vector<std::string> sequence;
    std::set<std::string> keywords;
    for (const auto& item : window) {
        const auto tag = tag_of(item.at("category").get<std::string>());
        ++counts[tag];
        sequence.push_back(tag);
        for (auto& tok : alnum_tokens(item.at("title").get<std::string>())) {
            if (tok.size() >= 4) {
                keywords.insert(std::move(tok));
            }
        }
    }
    std::vector<std::string> tally;
    for (const auto& [tag, n] : counts) {
        tally.push_back(tag + " (" + std::to_string(n) + ")");
    }
    std::vector<std::string> top_keywords(keywords.begin(), keywords.end());
    if (top_keywords.size() > 3) {
        top_keywords.resize(3);
    }
    std::string pattern = "Sequence " + join(sequence, " -> ");
    if (!top_keywords.empty()) {
        pattern += "; keywords: " + join(top_keywords, ", ");
    }
    pattern += ".";
    return {{"behavior_explanation", "Interested in " + join(tally, ", ") + "."},
            {"pattern_description", pattern}};
}

json mock_link(const json& inputs, bool link_all) {
    const auto& patterns = inputs.at("nearest_info").at("patterns");
    const json new_memory = {{"behavior_explanation", inputs.at("new_behavior")},
                             {"pattern_description", inputs.at("new_pattern")}};
    const auto dominant = dominant_tag(tags_of_memory(new_memory));
    json linked = json::array();
    for (const auto& candidate : patterns) {
        bool link = link_all;
        if (!link && dominant) {
            const auto tags = tags_of_memory(candidate);
            link = std::find(tags.begin(), tags.end(), *dominant) != tags.end();
        }
        if (link) {
            linked.push_back(candidate.at("thought_id"));
        }
    }
    std::string reasoning = link_all ? "Linked every candidate."
                            : dominant ? "Linked candidates sharing " + *dominant + "."
                                       : "No category tag to share.";
    return {{"should_link", !linked.empty()},
            {"linked_thought_ids", linked},
            {"reasoning", reasoning}};
}

json mock_evolve(const json& inputs) {
    const json new_memory = {{"behavior_explanation", inputs.at("new_behavior")},
                             {"pattern_description", inputs.at("new_pattern")}};
    const auto new_tags_vec = tags_of_memory(new_memory);
    const std::set<std::string> new_tags(new_tags_vec.begin(), new_tags_vec.end());
    json updates = json::array();
    for (const auto& candidate : inputs.at("mem_info")) {
        const auto have_vec = tags_of_memory(candidate);
        const std::set<std::string> have(have_vec.begin(), have_vec.end());
        std::vector<std::string> missing;
        std::set_difference(new_tags.begin(), new_tags.end(), have.begin(), have.end(),
                            std::back_inserter(missing));
        json update = {{"thought_id", candidate.at("thought_id")},
                       {"behavior_explanation", nullptr},
                       {"pattern_description", nullptr}};
        if (!missing.empty()) {
            update["pattern_description"] = candidate.at("pattern_description").get<std::string>() +
                                            " Also " + join(missing, " ") + ".";
            update["reasoning"] = "Adds " + join(missing, " ") + ".";
        } else {
            update["reasoning"] = "Already covers the new tags.";
        }
        updates.push_back(std::move(update));
    }
    return {{"should_evolve", !updates.empty()}, {"updates", updates}};
}

std::set<std::string> rank_tokens(std::string_view text) {
    std::set<std::string> out;
    for (auto& t : alnum_tokens(text)) {
        if (t.size() >= 3) {
            out.insert(std::move(t));
        }
    }
    return out;
}

json mock_rank(const json& inputs, MockRankMode mode) {
    std::set<std::string> context;
    const auto absorb = [&](const std::string& text) {
        auto toks = rank_tokens(text);
        context.insert(toks.begin(), toks.end());
    };
    for (const auto& h : inputs.at("user_profile")) {
        absorb(h.value("title", ""));
        absorb(h.value("category", ""));
    }
    for (const auto& m : inputs.at("memory_thoughts")) {
        absorb(m.value("behavior_explanation", ""));
        absorb(m.value("pattern_description", ""));
    }
    struct Scored {
        std::string id;
        std::size_t overlap;
    };
    std::vector<Scored> scored;
    for (const auto& c : inputs.at("candidate_info")) {
        const auto toks = rank_tokens(c.value("title", "") + " " + c.value("category", ""));
        std::size_t overlap = 0;
        for (const auto& t : toks) {
            overlap += context.count(t);
        }
        scored.push_back({c.at("item_id").get<std::string>(), overlap});
    }
    std::stable_sort(scored.begin(), scored.end(),
                     [](const Scored& a, const Scored& b) { return a.overlap > b.overlap; });
    std::vector<std::string> ids;
    for (auto& s : scored) {
        ids.push_back(std::move(s.id));
    }
    const auto hint = inputs.find("oracle_hint");
    if (mode != MockRankMode::Overlap && hint != inputs.end() && hint->is_string()) {
        const auto target = hint->get<std::string>();
        auto it = std::find(ids.begin(), ids.end(), target);
        if (it != ids.end()) {
            if (mode == MockRankMode::Oracle) {
                std::rotate(ids.begin(), it, it + 1);
            } else {
                std::rotate(it, it + 1, ids.end());
            }
        }
    }
    return {{"ranked_item_ids", ids}, {"reasoning", "Ordered by token overlap with history and memory."}};
}

}  // namespace

std::string_view to_string(MockRankMode mode) noexcept {
    switch (mode) {
        case MockRankMode::Overlap: return "overlap";
        case MockRankMode::Oracle: return "oracle";
        case MockRankMode::Adversarial: return "adversarial";
    }
    return "?";
}

MockRankMode mock_rank_mode_from_string(std::string_view name) {
    if (name == "overlap") return MockRankMode::Overlap;
    if (name == "oracle") return MockRankMode::Oracle;
    if (name == "adversarial") return MockRankMode::Adversarial;
    throw PreconditionError("unknown mock rank mode '" + std::string(name) + "'");
}

std::string MockProvider::complete(const AgentRequest& request) const {
    json reply;
    switch (request.template_id) {
        case TemplateId::Extract: reply = mock_extract(request.inputs); break;
        case TemplateId::Link: reply = mock_link(request.inputs, options_.link_all); break;
        case TemplateId::Evolve: reply = mock_evolve(request.inputs); break;
        case TemplateId::Rank: reply = mock_rank(request.inputs, options_.rank_mode); break;
    }
    return reply.dump();
}

std::string MockProvider::name() const {
    return std::string("mock:") + std::string(to_string(options_.rank_mode)) +
           (options_.link_all ? "+link_all" : "");
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw PreconditionError("http provider needs an endpoint");
    }
}

std::string HttpProvider::name() const {
    return "http:" + config_.model;
}

std::string HttpProvider::complete(const AgentRequest& request) const {
    json body;
    body["model"] = config_.model;
    body["messages"] = json::array({{{"role", "user"}, {"content", request.prompt}}});
    if (config_.temperature) {
        body["temperature"] = *config_.temperature;
    }
    detail::HttpPostOptions opts;
    opts.timeout = config_.timeout;
    opts.max_retries = config_.max_retries;
    opts.initial_backoff = config_.initial_backoff;
    opts.bearer_token = detail::env_secret(config_.api_key_env);
    const std::string raw = detail::post_json(config_.endpoint, body.dump(), opts);
    try {
        const auto j = json::parse(raw);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& ex) {
        throw TransportError(std::string("unexpected chat-completion response: ") + ex.what());
    }
}

void AuditLog::append(AuditRecord record) {
    std::lock_guard lock(mutex_);
    records_.push_back(std::move(record));
}

std::vector<AuditRecord> AuditLog::records() const {
    std::lock_guard lock(mutex_);
    return records_;
}

std::size_t AuditLog::size() const {
    std::lock_guard lock(mutex_);
    return records_.size();
}

std::map<std::string, std::size_t> AuditLog::call_counts() const {
    std::lock_guard lock(mutex_);
    std::map<std::string, std::size_t> counts;
    for (const auto& r : records_) {
        ++counts[r.template_id];
    }
    return counts;
}

void AuditLog::write_jsonl(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open audit log " + path.string());
    }
    std::lock_guard lock(mutex_);
    for (const auto& r : records_) {
        nlohmann::ordered_json j;
        j["template"] = r.template_id;
        j["template_hash"] = r.template_hash;
        j["attempt"] = r.attempt;
        j["prompt"] = r.prompt;
        j["raw_response"] = r.raw_response;
        j["outcome"] = r.outcome;
        out << j.dump() << '\n';
    }
}

}  // namespace amem
