#include "amem/pipeline.hpp"

#include <algorithm>

#include <spdlog/spdlog.h>

#include "amem/errors.hpp"

namespace amem {
namespace {

PolicyDecision choose_strategy(std::span<const double> scores, const RunConfig& config) {
    const auto& ablation = config.ablation;
    if (ablation.no_evolution) {
        // Memories are only ever stored; keep the evidence for the report.
        const ScoreDistribution evidence =
            scores.empty() ? ScoreDistribution{} : score_distribution(scores, config.thresholds);
        return PolicyDecision::make(Strategy::StoreOnly, evidence);
    }
    if (ablation.no_similarity_validator) {
        return decide_unvalidated(scores, config.thresholds);
    }
    return decide(scores, config.thresholds, config.branch);
}

std::vector<MemoryId> ids_of(std::span<const ScoredNeighbor> neighbors) {
    std::vector<MemoryId> ids;
    ids.reserve(neighbors.size());
    for (const auto& n : neighbors) {
        ids.push_back(n.id);
    }
    return ids;
}

void apply_evolution(MemoryPool& pool, const PipelineContext& ctx, const EvolutionVerdict& verdict,
                     WindowTrace& trace) {
    for (const auto& update : verdict.updates) {
        if (!update.changes_text() && !ctx.config.count_null_evolutions) {
            continue;
        }
        const MemoryEntry& current = pool.at(update.id);
        PatternText evolved = current.pattern;
        if (update.behavior_explanation) {
            evolved.behavior_explanation = *update.behavior_explanation;
        }
        if (update.pattern_description) {
            evolved.pattern_description = *update.pattern_description;
        }
        EmbeddingVector embedding = (ctx.config.reencode_on_evolve && evolved != current.pattern)
                                        ? ctx.encoder.encode(evolved.joined())
                                        : current.embedding;
        pool.replace(update.id, evolved, embedding);
        trace.evolved_ids.push_back(update.id);
        trace.mutations.push_back(
            {PoolMutation::Kind::Replace, update.id, std::move(evolved), std::move(embedding), {}});
    }
}

}  // namespace

std::vector<std::span<const Interaction>> sliding_windows(const UserHistory& history,
                                                          std::size_t w) {
    if (w == 0) {
        throw PreconditionError("window size must be >= 1");
    }
    std::vector<std::span<const Interaction>> windows;
    const std::span<const Interaction> items(history.items);
    if (items.empty()) {
        return windows;
    }
    if (items.size() < w) {
        windows.push_back(items);
        return windows;
    }
    for (std::size_t start = 0; start + w <= items.size(); ++start) {
        windows.push_back(items.subspan(start, w));
    }
    return windows;
}

WindowTrace process_window(MemoryPool& pool, const PipelineContext& ctx,
                           const std::string& user_id, std::size_t window_index,
                           std::span<const Interaction> window) {
    const RunConfig& config = ctx.config;
    WindowTrace trace;
    trace.user_id = user_id;
    trace.window_index = window_index;
    try {
        PatternText pattern = ctx.agent.extract_pattern(window);
        trace.pattern = pattern;
        EmbeddingVector embedding = ctx.encoder.encode(pattern.joined());

        if (!pool.empty()) {
            trace.neighbors = top_k(pool, embedding, config.link_top_k);
        }
        const auto scores = scores_of(trace.neighbors);
        trace.decision = choose_strategy(scores, config);

        if (trace.decision.do_update) {
            const auto candidates = config.ablation.no_similarity_validator
                                        ? trace.neighbors
                                        : update_candidates(trace.neighbors, trace.decision,
                                                            config.thresholds);
            trace.update_candidates = ids_of(candidates);

            if (config.ablation.no_semantic_validator) {
                trace.linked_ids = trace.update_candidates;
            } else {
                std::vector<LinkCandidate> presented;
                for (const auto& n : candidates) {
                    presented.push_back({n.id, n.score, pool.at(n.id).pattern});
                }
                trace.linked_ids =
                    ctx.agent.validate_links(pattern, presented, trace.decision).linked_ids;
            }

            if (!trace.linked_ids.empty()) {
                std::vector<MemoryEntry> linked;
                for (MemoryId id : trace.linked_ids) {
                    linked.push_back(pool.at(id));
                }
                const EvolutionVerdict verdict = ctx.agent.evolve_memories(pattern, linked);
                apply_evolution(pool, ctx, verdict, trace);
            }
        }

        if (trace.decision.do_store) {
            Provenance provenance{user_id, window_index};
            const MemoryId id = pool.insert(pattern, embedding, provenance);
            trace.stored_id = id;
            trace.mutations.push_back({PoolMutation::Kind::Insert, id, std::move(pattern),
                                       std::move(embedding), std::move(provenance)});
        }
    } catch (const std::exception& ex) {
        trace.error = ex.what();
        throw WindowError(std::move(trace), "user " + user_id + " window " +
                                                std::to_string(window_index) + ": " + ex.what());
    }
    return trace;
}

TrainingReport train(MemoryPool& pool, std::span<const UserHistory> users,
                     const PipelineContext& ctx, const TrainOptions& options) {
    ctx.config.validate();
    TrainingReport report;
    const auto checkpoint = [&](std::size_t users_done) {
        if (options.checkpoint) {
            options.checkpoint(users_done, pool);
        }
    };
    std::size_t users_done = options.start_user;
    for (std::size_t u = options.start_user; u < users.size(); ++u) {
        if (options.stop_after_users && report.users_processed >= *options.stop_after_users) {
            break;
        }
        const auto& user = users[u];
        const auto windows = sliding_windows(user, ctx.config.window_size);
        for (std::size_t w = 0; w < windows.size(); ++w) {
            WindowTrace trace = process_window(pool, ctx, user.user_id, w, windows[w]);
            ++report.windows;
            ++report.strategy_counts[trace.decision.strategy];
            report.replaces += trace.evolved_ids.size();
            report.inserts += trace.stored_id ? 1 : 0;
            report.traces.push_back(std::move(trace));
        }
        ++report.users_processed;
        users_done = u + 1;
        if (users_done % ctx.config.checkpoint_every == 0) {
            checkpoint(users_done);
        }
    }
    checkpoint(users_done);

    report.provider_calls = ctx.agent.audit().call_counts();
    report.pool_size = pool.size();
    for (const auto& e : pool) {
        report.total_evolutions += e.evolution_count;
        report.max_evolution_count = std::max(report.max_evolution_count, e.evolution_count);
    }
    return report;
}

std::string history_query_text(const UserHistory& history, std::size_t w) {
    std::string query;
    const auto& items = history.items;
    const std::size_t n = std::min(w, items.size());
    for (std::size_t i = 0; i < n; ++i) {
        const auto& item = items[items.size() - 1 - i];
        if (i > 0) {
            query += "; ";
        }
        query += item.title + " (" + item.category + ")";
    }
    return query;
}

RankingResult rank_for_user(const MemoryPool& pool, const PipelineContext& ctx,
                            const UserHistory& history, std::span<const ItemInfo> candidates,
                            const std::optional<std::string>& oracle_hint) {
    const RunConfig& config = ctx.config;
    std::vector<PatternText> memories;
    const std::string query = history_query_text(history, config.window_size);
    if (!pool.empty() && !query.empty()) {
        const EmbeddingVector q = ctx.encoder.encode(query);
        for (const auto& n : top_k(pool, q, config.rank_top_k_memories)) {
            memories.push_back(pool.at(n.id).pattern);
        }
    }
    std::vector<Interaction> recent;
    const auto& items = history.items;
    const std::size_t n = std::min(config.rank_history_items, items.size());
    for (std::size_t i = 0; i < n; ++i) {
        recent.push_back(items[items.size() - 1 - i]);
    }
    RankingResult result = ctx.agent.rank_candidates(recent, memories, candidates, oracle_hint);
    result.user_id = history.user_id;
    return result;
}

MemoryPool replay(std::span<const WindowTrace> traces) {
    MemoryPool pool;
    for (const auto& trace : traces) {
        for (const auto& m : trace.mutations) {
            if (m.kind == PoolMutation::Kind::Insert) {
                const MemoryId id = pool.insert(m.pattern, m.embedding, m.provenance);
                if (id != m.id) {
                    throw Error("replay diverged: insert produced id " + std::to_string(id) +
                                ", trace says " + std::to_string(m.id));
                }
            } else {
                pool.replace(m.id, m.pattern, m.embedding);
            }
        }
    }
    return pool;
}

nlohmann::ordered_json to_json(const WindowTrace& t) {
    nlohmann::ordered_json j;
    j["user_id"] = t.user_id;
    j["window_index"] = t.window_index;
    if (t.pattern) {
        j["pattern"] = {{"behavior_explanation", t.pattern->behavior_explanation},
                        {"pattern_description", t.pattern->pattern_description}};
    }
    auto& nb = j["neighbors"] = nlohmann::ordered_json::array();
    for (const auto& n : t.neighbors) {
        nb.push_back({{"id", n.id}, {"score", n.score}});
    }
    const auto& ev = t.decision.evidence;
    j["decision"] = {{"strategy", std::string(to_string(t.decision.strategy))},
                     {"do_update", t.decision.do_update},
                     {"do_store", t.decision.do_store},
                     {"s_max", ev.s_max},
                     {"p_high", ev.p_high},
                     {"p_medium", ev.p_medium},
                     {"p_low", ev.p_low},
                     {"k", ev.k_effective}};
    j["update_candidates"] = t.update_candidates;
    j["linked_ids"] = t.linked_ids;
    j["evolved_ids"] = t.evolved_ids;
    j["stored_id"] = t.stored_id ? nlohmann::ordered_json(*t.stored_id) : nlohmann::ordered_json(nullptr);
    if (t.error) {
        j["error"] = *t.error;
    }
    return j;
}

nlohmann::ordered_json TrainingReport::to_json(bool include_traces) const {
    nlohmann::ordered_json j;
    j["users_processed"] = users_processed;
    j["windows"] = windows;
    j["inserts"] = inserts;
    j["replaces"] = replaces;
    auto& sc = j["strategy_counts"] = nlohmann::ordered_json::object();
    for (const auto& [s, n] : strategy_counts) {
        sc[std::string(to_string(s))] = n;
    }
    j["provider_calls"] = provider_calls;
    j["pool_size"] = pool_size;
    j["total_evolutions"] = total_evolutions;
    j["max_evolution_count"] = max_evolution_count;
    if (include_traces) {
        auto& tr = j["traces"] = nlohmann::ordered_json::array();
        for (const auto& t : traces) {
            tr.push_back(amem::to_json(t));
        }
    }
    return j;
}

}  // namespace amem
