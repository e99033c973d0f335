#pragma once

#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amem/agent.hpp"
#include "amem/config.hpp"
#include "amem/encoder.hpp"
#include "amem/interaction.hpp"
#include "amem/memory_pool.hpp"
#include "amem/retrieval.hpp"

namespace amem {

// What one training step needs besides the pool.
struct PipelineContext {
    const AgentGateway& agent;
    const Encoder& encoder;
    const RunConfig& config;
};

// Contiguous stride-1 slices of length w: max(0, n - w + 1) of them. A
// non-empty history shorter than w yields one window covering all of it.
std::vector<std::span<const Interaction>> sliding_windows(const UserHistory& history,
                                                          std::size_t w);

struct PoolMutation {
    enum class Kind { Insert, Replace };
    Kind kind = Kind::Insert;
    MemoryId id = 0;
    PatternText pattern;
    EmbeddingVector embedding;
    Provenance provenance;  // inserts only
};

struct WindowTrace {
    std::string user_id;
    std::size_t window_index = 0;
    std::optional<PatternText> pattern;
    std::vector<ScoredNeighbor> neighbors;
    PolicyDecision decision;
    std::vector<MemoryId> update_candidates;
    std::vector<MemoryId> linked_ids;
    std::vector<MemoryId> evolved_ids;
    std::optional<MemoryId> stored_id;
    std::vector<PoolMutation> mutations;  // in application order
    std::optional<std::string> error;
};

// A window failed part-way. trace() holds everything up to the failure; pool
// mutations already listed there were applied.
class WindowError : public Error {
public:
    WindowError(WindowTrace trace, const std::string& what)
        : Error(what), trace_(std::move(trace)) {}
    const WindowTrace& trace() const noexcept { return trace_; }

private:
    WindowTrace trace_;
};

// One pass of the training loop body for a single window:
// extract -> encode -> top_k -> distribution -> decide -> link -> evolve ->
// replace -> insert. Ablation flags in ctx.config alter the middle steps.
WindowTrace process_window(MemoryPool& pool, const PipelineContext& ctx,
                           const std::string& user_id, std::size_t window_index,
                           std::span<const Interaction> window);

struct TrainingReport {
    std::vector<WindowTrace> traces;
    std::size_t users_processed = 0;
    std::size_t windows = 0;
    std::size_t inserts = 0;
    std::size_t replaces = 0;
    std::map<Strategy, std::size_t> strategy_counts;
    std::map<std::string, std::size_t> provider_calls;
    std::size_t pool_size = 0;
    std::uint64_t total_evolutions = 0;
    std::uint64_t max_evolution_count = 0;

    nlohmann::ordered_json to_json(bool include_traces = true) const;
};

struct TrainOptions {
    std::size_t start_user = 0;  // resume offset into users
    std::optional<std::size_t> stop_after_users;
    // Called with (users_done, pool) every config.checkpoint_every users and
    // once when the loop ends.
    std::function<void(std::size_t, const MemoryPool&)> checkpoint;
};

// Single pass over users in order, windows in temporal order. Throws
// WindowError on an unrecoverable failure; no checkpoint is written for the
// partly processed user, so a resume restarts at the last checkpointed user.
TrainingReport train(MemoryPool& pool, std::span<const UserHistory> users,
                     const PipelineContext& ctx, const TrainOptions& options = {});

// "title (category); title (category); ..." over the last w items, most recent first.
std::string history_query_text(const UserHistory& history, std::size_t w);

// Retrieves rank_top_k_memories memories for the user's recent history and
// asks the agent to order the candidates. The pool is only read.
RankingResult rank_for_user(const MemoryPool& pool, const PipelineContext& ctx,
                            const UserHistory& history, std::span<const ItemInfo> candidates,
                            const std::optional<std::string>& oracle_hint = {});

// Re-applies the recorded mutations to an empty pool.
MemoryPool replay(std::span<const WindowTrace> traces);

nlohmann::ordered_json to_json(const WindowTrace& trace);

}  // namespace amem
