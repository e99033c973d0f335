#include "amem/config.hpp"

#include <fstream>
#include <set>

#include "amem/errors.hpp"
#include "amem/hashing.hpp"

namespace amem {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

// Reads known keys of one JSON object and complains about the rest.
class ObjectReader {
public:
    ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            throw PreconditionError("config section '" + where_ + "' must be an object");
        }
    }

    template <typename T>
    void get(const std::string& key, T& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        try {
            out = it->get<T>();
        } catch (const json::exception& ex) {
            throw PreconditionError("config key '" + where_ + "." + key + "': " + ex.what());
        }
    }

    template <typename T>
    void get(const std::string& key, std::optional<T>& out) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            return;
        }
        out = it->is_null() ? std::nullopt : std::optional<T>(it->get<T>());
    }

    const json* section(const std::string& key) {
        seen_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, _] : j_.items()) {
            if (!seen_.contains(key)) {
                throw PreconditionError("unknown config key '" + where_ + "." + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string where_;
    std::set<std::string> seen_;
};

ordered_json provider_json(const ProviderConfig& p) {
    ordered_json j;
    j["backend"] = p.backend;
    j["model"] = p.model;
    j["endpoint"] = p.endpoint;
    j["timeout_ms"] = p.timeout_ms;
    j["max_retries"] = p.max_retries;
    j["initial_backoff_ms"] = p.initial_backoff_ms;
    j["api_key_env"] = p.api_key_env;
    j["temperature"] = p.temperature ? ordered_json(*p.temperature) : ordered_json(nullptr);
    j["mock"] = {{"rank_mode", std::string(to_string(p.mock.rank_mode))},
                 {"link_all", p.mock.link_all}};
    return j;
}

ordered_json encoder_json(const EncoderConfig& e) {
    ordered_json j;
    j["backend"] = e.backend;
    j["dim"] = e.dim;
    j["model"] = e.model;
    j["endpoint"] = e.endpoint;
    j["timeout_ms"] = e.timeout_ms;
    j["max_retries"] = e.max_retries;
    j["initial_backoff_ms"] = e.initial_backoff_ms;
    j["api_key_env"] = e.api_key_env;
    j["memo"] = e.memo;
    return j;
}

ProviderConfig provider_from_json(const json& j) {
    ProviderConfig p;
    ObjectReader r(j, "run.provider");
    r.get("backend", p.backend);
    r.get("model", p.model);
    r.get("endpoint", p.endpoint);
    r.get("timeout_ms", p.timeout_ms);
    r.get("max_retries", p.max_retries);
    r.get("initial_backoff_ms", p.initial_backoff_ms);
    r.get("api_key_env", p.api_key_env);
    r.get("temperature", p.temperature);
    if (const json* m = r.section("mock")) {
        ObjectReader mr(*m, "run.provider.mock");
        std::string mode(to_string(p.mock.rank_mode));
        mr.get("rank_mode", mode);
        mr.get("link_all", p.mock.link_all);
        mr.finish();
        p.mock.rank_mode = mock_rank_mode_from_string(mode);
    }
    r.finish();
    return p;
}

EncoderConfig encoder_from_json(const json& j) {
    EncoderConfig e;
    ObjectReader r(j, "run.encoder");
    r.get("backend", e.backend);
    r.get("dim", e.dim);
    r.get("model", e.model);
    r.get("endpoint", e.endpoint);
    r.get("timeout_ms", e.timeout_ms);
    r.get("max_retries", e.max_retries);
    r.get("initial_backoff_ms", e.initial_backoff_ms);
    r.get("api_key_env", e.api_key_env);
    r.get("memo", e.memo);
    r.finish();
    return e;
}

}  // namespace

void RunConfig::validate() const {
    if (window_size < 1 || link_top_k < 1 || rank_top_k_memories < 1) {
        throw PreconditionError("window_size, link_top_k and rank_top_k_memories must be >= 1");
    }
    thresholds.validate();
    if (provider.backend != "mock" && provider.backend != "http") {
        throw PreconditionError("provider backend must be 'mock' or 'http'");
    }
    if (encoder.backend != "reference" && encoder.backend != "http") {
        throw PreconditionError("encoder backend must be 'reference' or 'http'");
    }
    if (checkpoint_every < 1) {
        throw PreconditionError("checkpoint_every must be >= 1");
    }
}

void ConfigFile::validate() const {
    run.validate();
    if (candidates < 1) {
        throw PreconditionError("candidate set size must be >= 1");
    }
    if (dataset.format != "jsonl" && dataset.format != "mind_tsv") {
        throw PreconditionError("dataset format must be 'jsonl' or 'mind_tsv'");
    }
    if (cohort.cold_start_min > cohort.cold_start_max) {
        throw PreconditionError("cold_start_min exceeds cold_start_max");
    }
    if (jobs < 1) {
        throw PreconditionError("jobs must be >= 1");
    }
}

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["window_size"] = c.window_size;
    j["link_top_k"] = c.link_top_k;
    j["rank_top_k_memories"] = c.rank_top_k_memories;
    j["rank_history_items"] = c.rank_history_items;
    j["thresholds"] = {{"tau_low", c.thresholds.tau_low}, {"tau_high", c.thresholds.tau_high}};
    j["branch"] = {{"p_high_min", c.branch.p_high_min}, {"p_low_min", c.branch.p_low_min}};
    j["ablation"] = {{"no_similarity_validator", c.ablation.no_similarity_validator},
                     {"no_semantic_validator", c.ablation.no_semantic_validator},
                     {"no_evolution", c.ablation.no_evolution}};
    j["seed"] = c.seed;
    j["reencode_on_evolve"] = c.reencode_on_evolve;
    j["count_null_evolutions"] = c.count_null_evolutions;
    j["parse_retry_budget"] = c.parse_retry_budget;
    j["checkpoint_every"] = c.checkpoint_every;
    j["provider"] = provider_json(c.provider);
    j["encoder"] = encoder_json(c.encoder);
    return j;
}

ordered_json to_json(const ConfigFile& c) {
    ordered_json j;
    j["run"] = to_json(c.run);
    j["dataset"] = {{"path", c.dataset.path},
                    {"format", c.dataset.format},
                    {"behaviors", c.dataset.behaviors},
                    {"news", c.dataset.news}};
    j["cohort"] = {{"min_interactions", c.cohort.min_interactions},
                   {"sample_size", c.cohort.sample_size},
                   {"disjoint_eval_cohort", c.cohort.disjoint_eval_cohort},
                   {"cold_start_min", c.cohort.cold_start_min},
                   {"cold_start_max", c.cohort.cold_start_max}};
    j["candidates"] = c.candidates;
    j["templates_dir"] = c.templates_dir;
    j["out_dir"] = c.out_dir;
    j["jobs"] = c.jobs;
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    ObjectReader r(j, "run");
    r.get("window_size", c.window_size);
    r.get("link_top_k", c.link_top_k);
    r.get("rank_top_k_memories", c.rank_top_k_memories);
    r.get("rank_history_items", c.rank_history_items);
    if (const json* t = r.section("thresholds")) {
        ObjectReader tr(*t, "run.thresholds");
        tr.get("tau_low", c.thresholds.tau_low);
        tr.get("tau_high", c.thresholds.tau_high);
        tr.finish();
    }
    if (const json* b = r.section("branch")) {
        ObjectReader br(*b, "run.branch");
        br.get("p_high_min", c.branch.p_high_min);
        br.get("p_low_min", c.branch.p_low_min);
        br.finish();
    }
    if (const json* a = r.section("ablation")) {
        ObjectReader ar(*a, "run.ablation");
        ar.get("no_similarity_validator", c.ablation.no_similarity_validator);
        ar.get("no_semantic_validator", c.ablation.no_semantic_validator);
        ar.get("no_evolution", c.ablation.no_evolution);
        ar.finish();
    }
    r.get("seed", c.seed);
    r.get("reencode_on_evolve", c.reencode_on_evolve);
    r.get("count_null_evolutions", c.count_null_evolutions);
    r.get("parse_retry_budget", c.parse_retry_budget);
    r.get("checkpoint_every", c.checkpoint_every);
    if (const json* p = r.section("provider")) {
        c.provider = provider_from_json(*p);
    }
    if (const json* e = r.section("encoder")) {
        c.encoder = encoder_from_json(*e);
    }
    r.finish();
    return c;
}

ConfigFile config_file_from_json(const json& j) {
    ConfigFile c;
    ObjectReader r(j, "config");
    if (const json* run = r.section("run")) {
        c.run = run_config_from_json(*run);
    }
    if (const json* d = r.section("dataset")) {
        ObjectReader dr(*d, "dataset");
        dr.get("path", c.dataset.path);
        dr.get("format", c.dataset.format);
        dr.get("behaviors", c.dataset.behaviors);
        dr.get("news", c.dataset.news);
        dr.finish();
    }
    if (const json* co = r.section("cohort")) {
        ObjectReader cr(*co, "cohort");
        cr.get("min_interactions", c.cohort.min_interactions);
        cr.get("sample_size", c.cohort.sample_size);
        cr.get("disjoint_eval_cohort", c.cohort.disjoint_eval_cohort);
        cr.get("cold_start_min", c.cohort.cold_start_min);
        cr.get("cold_start_max", c.cohort.cold_start_max);
        cr.finish();
    }
    r.get("candidates", c.candidates);
    r.get("templates_dir", c.templates_dir);
    r.get("out_dir", c.out_dir);
    r.get("jobs", c.jobs);
    r.finish();
    return c;
}

ConfigFile load_config_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& ex) {
        throw PreconditionError("config " + path.string() + " is not valid JSON: " + ex.what());
    }
    return config_file_from_json(j);
}

std::string config_hash(const ConfigFile& c) {
    ordered_json j = to_json(c);
    j.erase("out_dir");
    j.erase("jobs");
    // Re-sort keys so the digest does not depend on field declaration order.
    const json canonical = json::parse(j.dump());
    return sha256_hex(canonical.dump()).substr(0, 16);
}

std::shared_ptr<const AgentProvider> make_provider(const ProviderConfig& c) {
    if (c.backend == "mock") {
        return std::make_shared<MockProvider>(c.mock);
    }
    if (c.backend == "http") {
        HttpProviderConfig h;
        h.endpoint = c.endpoint;
        h.model = c.model;
        h.timeout = std::chrono::milliseconds(c.timeout_ms);
        h.max_retries = c.max_retries;
        h.initial_backoff = std::chrono::milliseconds(c.initial_backoff_ms);
        h.api_key_env = c.api_key_env;
        h.temperature = c.temperature;
        return std::make_shared<HttpProvider>(std::move(h));
    }
    throw PreconditionError("unknown provider backend '" + c.backend + "'");
}

std::shared_ptr<const Encoder> make_encoder(const EncoderConfig& c) {
    std::shared_ptr<const Encoder> inner;
    if (c.backend == "reference") {
        inner = std::make_shared<ReferenceEncoder>(c.dim);
    } else if (c.backend == "http") {
        HttpEncoderConfig h;
        h.endpoint = c.endpoint;
        h.model = c.model;
        h.timeout = std::chrono::milliseconds(c.timeout_ms);
        h.max_retries = c.max_retries;
        h.initial_backoff = std::chrono::milliseconds(c.initial_backoff_ms);
        h.api_key_env = c.api_key_env;
        h.dimension = c.dim;
        inner = std::make_shared<HttpEncoder>(std::move(h));
    } else {
        throw PreconditionError("unknown encoder backend '" + c.backend + "'");
    }
    return c.memo ? std::make_shared<MemoEncoder>(std::move(inner)) : inner;
}

}  // namespace amem
