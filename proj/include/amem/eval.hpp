#pragma once

#include <array>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "amem/dataset.hpp"
#include "amem/pipeline.hpp"

namespace amem {

inline constexpr std::array<std::size_t, 3> k_default_cutoffs = {1, 5, 10};

// 1-based position of ground_truth in ranked. Throws PreconditionError if absent.
std::size_t rank_of(std::span<const std::string> ranked, std::string_view ground_truth);

// Single-relevant-item NDCG: 1 / log2(r + 1) when the ground truth sits at
// rank r <= k, else 0. The ideal DCG is 1.
double ndcg_at_k(std::span<const std::string> ranked, std::string_view ground_truth,
                 std::size_t k);

struct UserMetrics {
    std::string user_id;
    std::size_t rank = 0;
    std::map<std::size_t, double> ndcg;
    RepairStats repairs;
};

struct UserFailure {
    std::string user_id;
    std::string message;
};

struct MetricsReport {
    std::string config_hash;
    std::vector<std::size_t> cutoffs;
    std::vector<UserMetrics> per_user;  // ascending user id
    std::map<std::size_t, double> mean;  // over successfully ranked users
    std::size_t n_users = 0;
    std::size_t n_failed = 0;
    std::vector<UserFailure> failures;
    RepairStats repairs;
    std::size_t repaired_users = 0;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

// Builds the report from per-user results. Means are summed in ascending user
// id order so they do not depend on evaluation order.
MetricsReport summarize(std::vector<UserMetrics> per_user, std::vector<UserFailure> failures,
                        std::span<const std::size_t> cutoffs, std::string config_hash);

struct EvalOptions {
    std::vector<std::size_t> cutoffs{k_default_cutoffs.begin(), k_default_cutoffs.end()};
    std::size_t jobs = 1;
    // Forward each ground truth to the provider as a test-only oracle hint.
    bool oracle_hint = false;
    std::string config_hash;
};

// rank_for_user per instance (fanned out over `jobs` threads against the
// read-only pool), then NDCG at every cutoff. A failing user is recorded and
// excluded from the means.
MetricsReport evaluate(std::span<const EvalInstance> instances, const MemoryPool& pool,
                       const PipelineContext& ctx, const EvalOptions& options);

struct EvolutionHistogram {
    std::vector<std::uint64_t> lower_edges;  // bucket i covers [edge_i, edge_{i+1})
    std::vector<std::size_t> counts;
    std::size_t total = 0;

    std::string label(std::size_t bucket) const;  // "0", "1-2", "3+"
    nlohmann::ordered_json to_json() const;
};

// lower_edges must start at 0 and increase strictly. An empty pool gives
// all-zero counts.
EvolutionHistogram evolution_histogram(const MemoryPool& pool,
                                       std::span<const std::uint64_t> lower_edges);

struct PoolStats {
    std::size_t size = 0;
    std::size_t evolved_entries = 0;
    std::uint64_t total_evolutions = 0;
    std::uint64_t max_evolution_count = 0;

    nlohmann::ordered_json to_json() const;
};

PoolStats pool_stats(const MemoryPool& pool);

// Header "id\tevolution_count\te0\t...\te{D-1}", then one line per entry.
// Components use shortest round-trip decimal form.
void export_embeddings(const MemoryPool& pool, std::ostream& out);
void export_embeddings(const MemoryPool& pool, const std::filesystem::path& path);

struct AblationVariant {
    std::string name;
    AblationFlags flags;
};

// full, no_similarity_validator, no_semantic_validator, no_evolution.
std::vector<AblationVariant> standard_ablation_variants();

struct AblationOutcome {
    AblationVariant variant;
    TrainingReport training;
    MetricsReport metrics;
    PoolStats stats;
    MemoryPool pool;
    std::optional<std::string> error;
};

struct AblationReport {
    std::vector<AblationOutcome> outcomes;

    nlohmann::ordered_json to_json() const;
    std::string to_table() const;
};

struct AblationInputs {
    std::span<const UserHistory> train_users;
    std::span<const EvalInstance> instances;
};

// Builds a gateway for one variant's run config.
using AgentFactory = std::function<std::shared_ptr<AgentGateway>(const RunConfig&)>;

// Trains a fresh pool and evaluates it for every variant, all on the same
// users and candidate sets. A failing variant is recorded, the rest still run.
AblationReport run_ablation_suite(const AblationInputs& inputs, const RunConfig& base,
                                  std::span<const AblationVariant> variants,
                                  const AgentFactory& make_agent, const Encoder& encoder,
                                  const EvalOptions& options);

}  // namespace amem
