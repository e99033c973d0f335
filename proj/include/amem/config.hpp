#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "amem/agent.hpp"
#include "amem/encoder.hpp"
#include "amem/policy.hpp"

namespace amem {

struct AblationFlags {
    bool no_similarity_validator = false;
    bool no_semantic_validator = false;
    bool no_evolution = false;
    bool operator==(const AblationFlags&) const = default;
};

struct ProviderConfig {
    std::string backend = "mock";  // mock | http
    std::string model;
    std::string endpoint;
    std::int64_t timeout_ms = 60000;
    int max_retries = 3;
    std::int64_t initial_backoff_ms = 1000;
    std::string api_key_env = "AMEM_API_KEY";  // name of the variable, never the secret
    std::optional<double> temperature = 0.0;
    MockOptions mock;
};

struct EncoderConfig {
    std::string backend = "reference";  // reference | http
    Eigen::Index dim = 64;
    std::string model;
    std::string endpoint;
    std::int64_t timeout_ms = 30000;
    int max_retries = 3;
    std::int64_t initial_backoff_ms = 500;
    std::string api_key_env;
    bool memo = true;
};

// Everything that shapes training and ranking.
struct RunConfig {
    std::size_t window_size = 3;
    std::size_t link_top_k = 5;
    std::size_t rank_top_k_memories = 5;
    std::size_t rank_history_items = 10;
    Thresholds thresholds;
    BranchConstants branch;
    AblationFlags ablation;
    std::uint64_t seed = 42;
    bool reencode_on_evolve = true;
    bool count_null_evolutions = true;
    std::size_t parse_retry_budget = 2;
    std::size_t checkpoint_every = 10;
    ProviderConfig provider;
    EncoderConfig encoder;

    void validate() const;
};

struct DatasetConfig {
    std::string path;
    std::string format = "jsonl";  // jsonl | mind_tsv
    std::string behaviors;
    std::string news;
};

struct CohortConfig {
    std::size_t min_interactions = 11;
    std::size_t sample_size = 300;
    bool disjoint_eval_cohort = false;
    std::size_t cold_start_min = 2;
    std::size_t cold_start_max = 3;
};

// The declarative run file. Provider credentials are referenced by
// environment-variable name only.
struct ConfigFile {
    RunConfig run;
    DatasetConfig dataset;
    CohortConfig cohort;
    std::size_t candidates = 20;
    std::string templates_dir;  // empty -> built-in templates
    std::string out_dir = "out";
    std::size_t jobs = 1;

    void validate() const;
};

nlohmann::ordered_json to_json(const RunConfig& c);
nlohmann::ordered_json to_json(const ConfigFile& c);
// Missing keys keep their defaults; unknown keys are rejected.
RunConfig run_config_from_json(const nlohmann::json& j);
ConfigFile config_file_from_json(const nlohmann::json& j);
ConfigFile load_config_file(const std::filesystem::path& path);

// 16 hex chars of SHA-256 over the canonical JSON of everything that affects
// results (output directory and job count excluded).
std::string config_hash(const ConfigFile& c);

std::shared_ptr<const AgentProvider> make_provider(const ProviderConfig& c);
std::shared_ptr<const Encoder> make_encoder(const EncoderConfig& c);

}  // namespace amem
