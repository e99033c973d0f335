#include "amem/eval.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "amem/errors.hpp"

namespace amem {
namespace {

std::string shortest(double v) {
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    if (ec != std::errc()) {
        throw Error("cannot format double");
    }
    return std::string(buf.data(), ptr);
}

std::string fixed4(double v) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(4) << v;
    return os.str();
}

nlohmann::ordered_json ndcg_json(const std::map<std::size_t, double>& m) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [k, v] : m) {
        j[std::to_string(k)] = v;
    }
    return j;
}

}  // namespace

std::size_t rank_of(std::span<const std::string> ranked, std::string_view ground_truth) {
    const auto it = std::find(ranked.begin(), ranked.end(), ground_truth);
    if (it == ranked.end()) {
        throw PreconditionError("ground truth '" + std::string(ground_truth) +
                                "' is not in the ranked list");
    }
    return static_cast<std::size_t>(it - ranked.begin()) + 1;
}

double ndcg_at_k(std::span<const std::string> ranked, std::string_view ground_truth,
                 std::size_t k) {
    const std::size_t r = rank_of(ranked, ground_truth);
    return r <= k ? 1.0 / std::log2(static_cast<double>(r) + 1.0) : 0.0;
}

MetricsReport summarize(std::vector<UserMetrics> per_user, std::vector<UserFailure> failures,
                        std::span<const std::size_t> cutoffs, std::string config_hash) {
    MetricsReport report;
    report.config_hash = std::move(config_hash);
    report.cutoffs.assign(cutoffs.begin(), cutoffs.end());
    std::sort(per_user.begin(), per_user.end(),
              [](const UserMetrics& a, const UserMetrics& b) { return a.user_id < b.user_id; });
    std::sort(failures.begin(), failures.end(),
              [](const UserFailure& a, const UserFailure& b) { return a.user_id < b.user_id; });
    for (std::size_t k : cutoffs) {
        double sum = 0.0;
        for (const auto& u : per_user) {
            sum += u.ndcg.at(k);
        }
        report.mean[k] = per_user.empty() ? 0.0 : sum / static_cast<double>(per_user.size());
    }
    for (const auto& u : per_user) {
        report.repairs += u.repairs;
        report.repaired_users += u.repairs.any() ? 1 : 0;
    }
    report.n_users = per_user.size();
    report.n_failed = failures.size();
    report.per_user = std::move(per_user);
    report.failures = std::move(failures);
    return report;
}

MetricsReport evaluate(std::span<const EvalInstance> instances, const MemoryPool& pool,
                       const PipelineContext& ctx, const EvalOptions& options) {
    std::vector<std::optional<UserMetrics>> results(instances.size());
    std::vector<std::optional<UserFailure>> failures(instances.size());
    std::atomic<std::size_t> next{0};

    const auto worker = [&] {
        for (std::size_t i = next++; i < instances.size(); i = next++) {
            const EvalInstance& inst = instances[i];
            try {
                std::optional<std::string> hint;
                if (options.oracle_hint) {
                    hint = inst.ground_truth.item_id;
                }
                const RankingResult ranking =
                    rank_for_user(pool, ctx, inst.train_history, inst.candidates, hint);
                UserMetrics m;
                m.user_id = inst.user_id;
                m.rank = rank_of(ranking.ranked_ids, inst.ground_truth.item_id);
                for (std::size_t k : options.cutoffs) {
                    m.ndcg[k] = ndcg_at_k(ranking.ranked_ids, inst.ground_truth.item_id, k);
                }
                m.repairs = ranking.repairs;
                results[i] = std::move(m);
            } catch (const std::exception& ex) {
                spdlog::warn("ranking failed for user {}: {}", inst.user_id, ex.what());
                failures[i] = UserFailure{inst.user_id, ex.what()};
            }
        }
    };

    const std::size_t jobs = std::max<std::size_t>(1, std::min(options.jobs, instances.size()));
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        for (std::size_t t = 0; t < jobs; ++t) {
            threads.emplace_back(worker);
        }
    }

    std::vector<UserMetrics> ok;
    std::vector<UserFailure> failed;
    for (std::size_t i = 0; i < instances.size(); ++i) {
        if (results[i]) {
            ok.push_back(std::move(*results[i]));
        } else if (failures[i]) {
            failed.push_back(std::move(*failures[i]));
        }
    }
    return summarize(std::move(ok), std::move(failed), options.cutoffs, options.config_hash);
}

nlohmann::ordered_json MetricsReport::to_json() const {
    nlohmann::ordered_json j;
    j["config_hash"] = config_hash;
    j["n_users"] = n_users;
    j["n_failed"] = n_failed;
    j["ndcg"] = ndcg_json(mean);
    j["repairs"] = {{"users", repaired_users},
                    {"duplicates", repairs.duplicates},
                    {"hallucinated", repairs.hallucinated},
                    {"omitted", repairs.omitted}};
    auto& users = j["per_user"] = nlohmann::ordered_json::array();
    for (const auto& u : per_user) {
        users.push_back({{"user_id", u.user_id}, {"rank", u.rank}, {"ndcg", ndcg_json(u.ndcg)}});
    }
    auto& f = j["failures"] = nlohmann::ordered_json::array();
    for (const auto& x : failures) {
        f.push_back({{"user_id", x.user_id}, {"error", x.message}});
    }
    return j;
}

std::string MetricsReport::to_table() const {
    std::ostringstream os;
    os << "users ranked: " << n_users << "  failed: " << n_failed
       << "  repaired: " << repaired_users << "  config: " << config_hash << "\n";
    for (std::size_t k : cutoffs) {
        os << "  NDCG@" << std::left << std::setw(3) << k << " " << fixed4(mean.at(k)) << "\n";
    }
    return os.str();
}

std::string EvolutionHistogram::label(std::size_t bucket) const {
    const auto lo = lower_edges.at(bucket);
    if (bucket + 1 == lower_edges.size()) {
        return std::to_string(lo) + "+";
    }
    const auto hi = lower_edges[bucket + 1] - 1;
    return lo == hi ? std::to_string(lo) : std::to_string(lo) + "-" + std::to_string(hi);
}

nlohmann::ordered_json EvolutionHistogram::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < counts.size(); ++i) {
        j.push_back({{"bucket", label(i)}, {"count", counts[i]}});
    }
    return j;
}

EvolutionHistogram evolution_histogram(const MemoryPool& pool,
                                       std::span<const std::uint64_t> lower_edges) {
    if (lower_edges.empty() || lower_edges.front() != 0) {
        throw PreconditionError("histogram edges must start at 0");
    }
    for (std::size_t i = 1; i < lower_edges.size(); ++i) {
        if (lower_edges[i] <= lower_edges[i - 1]) {
            throw PreconditionError("histogram edges must increase strictly");
        }
    }
    EvolutionHistogram h;
    h.lower_edges.assign(lower_edges.begin(), lower_edges.end());
    h.counts.assign(lower_edges.size(), 0);
    for (const auto& e : pool) {
        const auto it =
            std::upper_bound(lower_edges.begin(), lower_edges.end(), e.evolution_count);
        ++h.counts[static_cast<std::size_t>(it - lower_edges.begin()) - 1];
        ++h.total;
    }
    return h;
}

nlohmann::ordered_json PoolStats::to_json() const {
    return {{"size", size},
            {"evolved_entries", evolved_entries},
            {"total_evolutions", total_evolutions},
            {"max_evolution_count", max_evolution_count}};
}

PoolStats pool_stats(const MemoryPool& pool) {
    PoolStats s;
    s.size = pool.size();
    for (const auto& e : pool) {
        s.total_evolutions += e.evolution_count;
        s.max_evolution_count = std::max(s.max_evolution_count, e.evolution_count);
        s.evolved_entries += e.evolution_count > 0 ? 1 : 0;
    }
    return s;
}

void export_embeddings(const MemoryPool& pool, std::ostream& out) {
    out << "id\tevolution_count";
    for (Eigen::Index d = 0; d < pool.dimension(); ++d) {
        out << "\te" << d;
    }
    out << '\n';
    for (const auto& e : pool) {
        out << e.id << '\t' << e.evolution_count;
        for (Eigen::Index d = 0; d < e.embedding.size(); ++d) {
            out << '\t' << shortest(e.embedding[d]);
        }
        out << '\n';
    }
}

void export_embeddings(const MemoryPool& pool, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    export_embeddings(pool, out);
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

std::vector<AblationVariant> standard_ablation_variants() {
    AblationFlags none;
    AblationFlags no_sim;
    no_sim.no_similarity_validator = true;
    AblationFlags no_sem;
    no_sem.no_semantic_validator = true;
    AblationFlags no_evo;
    no_evo.no_evolution = true;
    return {{"full", none},
            {"no_similarity_validator", no_sim},
            {"no_semantic_validator", no_sem},
            {"no_evolution", no_evo}};
}

AblationReport run_ablation_suite(const AblationInputs& inputs, const RunConfig& base,
                                  std::span<const AblationVariant> variants,
                                  const AgentFactory& make_agent, const Encoder& encoder,
                                  const EvalOptions& options) {
    AblationReport report;
    for (const auto& variant : variants) {
        AblationOutcome outcome;
        outcome.variant = variant;
        try {
            RunConfig config = base;
            config.ablation = variant.flags;
            const auto agent = make_agent(config);
            const PipelineContext ctx{*agent, encoder, config};
            outcome.training = train(outcome.pool, inputs.train_users, ctx);
            outcome.stats = pool_stats(outcome.pool);
            outcome.metrics = evaluate(inputs.instances, outcome.pool, ctx, options);
        } catch (const std::exception& ex) {
            spdlog::error("ablation variant {} failed: {}", variant.name, ex.what());
            outcome.error = ex.what();
        }
        report.outcomes.push_back(std::move(outcome));
    }
    return report;
}

nlohmann::ordered_json AblationReport::to_json() const {
    nlohmann::ordered_json j = nlohmann::ordered_json::array();
    for (const auto& o : outcomes) {
        nlohmann::ordered_json v;
        v["variant"] = o.variant.name;
        v["pool"] = o.stats.to_json();
        v["training"] = o.training.to_json(false);
        v["metrics"] = o.metrics.to_json();
        if (o.error) {
            v["error"] = *o.error;
        }
        j.push_back(std::move(v));
    }
    return j;
}

std::string AblationReport::to_table() const {
    std::ostringstream os;
    os << std::left << std::setw(26) << "variant" << std::setw(8) << "N@1" << std::setw(8)
       << "N@5" << std::setw(8) << "N@10" << std::setw(7) << "pool" << std::setw(9)
       << "replaces" << "max_evo\n";
    for (const auto& o : outcomes) {
        os << std::left << std::setw(26) << o.variant.name;
        if (o.error) {
            os << "FAILED: " << *o.error << "\n";
            continue;
        }
        for (std::size_t k : k_default_cutoffs) {
            const auto it = o.metrics.mean.find(k);
            os << std::setw(8) << (it == o.metrics.mean.end() ? std::string("-") : fixed4(it->second));
        }
        os << std::setw(7) << o.stats.size << std::setw(9) << o.training.replaces
           << o.stats.max_evolution_count << "\n";
    }
    return os.str();
}

}  // namespace amem
