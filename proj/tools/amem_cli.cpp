// amem: train an evolving cross-user memory pool and evaluate memory-augmented
// LLM re-ranking on leave-one-out candidate sets.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "amem/config.hpp"
#include "amem/dataset.hpp"
#include "amem/errors.hpp"
#include "amem/eval.hpp"
#include "amem/pipeline.hpp"
#include "amem/pool_io.hpp"

namespace fs = std::filesystem;
using namespace amem;

namespace {

constexpr int k_exit_failure = 1;
constexpr int k_exit_interrupted = 3;

struct GlobalFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> provider;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> jobs;
    std::optional<std::string> dataset;
    std::optional<std::string> mock_rank;
    bool mock_link_all = false;
    bool verbose = false;
};

ConfigFile resolve_config(const GlobalFlags& g) {
    ConfigFile c = g.config_path.empty() ? ConfigFile{} : load_config_file(g.config_path);
    if (g.seed) c.run.seed = *g.seed;
    if (g.provider) c.run.provider.backend = *g.provider;
    if (g.out_dir) c.out_dir = *g.out_dir;
    if (g.jobs) c.jobs = *g.jobs;
    if (g.dataset) c.dataset.path = *g.dataset;
    if (g.mock_rank) c.run.provider.mock.rank_mode = mock_rank_mode_from_string(*g.mock_rank);
    if (g.mock_link_all) c.run.provider.mock.link_all = true;
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << text;
    if (!out) {
        throw IoError("write failed: " + path.string());
    }
}

void write_json(const fs::path& path, const nlohmann::ordered_json& j) {
    write_text(path, j.dump(2) + "\n");
}

void prepare_out_dir(const ConfigFile& c) {
    fs::create_directories(c.out_dir);
    auto resolved = to_json(c);
    resolved["config_hash"] = config_hash(c);
    write_json(fs::path(c.out_dir) / "resolved_config.json", resolved);
}

Dataset load_dataset(const ConfigFile& c) {
    Dataset d;
    if (c.dataset.format == "mind_tsv") {
        d = load_mind(c.dataset.behaviors, c.dataset.news);
    } else {
        if (c.dataset.path.empty()) {
            throw PreconditionError("no dataset path (set dataset.path or --dataset)");
        }
        d = load_interactions_jsonl(c.dataset.path);
    }
    for (const auto& p : d.problems) {
        spdlog::warn("dataset: {}", p);
    }
    spdlog::info("dataset: {} records, {} users, {} dropped, {} malformed", d.records,
                 d.users.size(), d.dropped, d.malformed);
    return d;
}

PromptTemplates load_templates(const ConfigFile& c) {
    return c.templates_dir.empty() ? PromptTemplates::builtin()
                                   : PromptTemplates::from_directory(c.templates_dir);
}

std::shared_ptr<AgentGateway> make_gateway(const RunConfig& run, const PromptTemplates& templates,
                                           std::shared_ptr<AuditLog> audit) {
    GatewayOptions opts;
    opts.window_size = run.window_size;
    opts.parse_retry_budget = run.parse_retry_budget;
    return std::make_shared<AgentGateway>(make_provider(run.provider), templates, opts,
                                          std::move(audit));
}

struct Cohorts {
    std::vector<UserHistory> train;
    std::vector<UserHistory> eval;
};

Cohorts build_cohorts(const Dataset& d, const ConfigFile& c) {
    Cohorts out;
    out.train = select_cohort(d.users, c.cohort.min_interactions, c.cohort.sample_size,
                              c.run.seed);
    if (!c.cohort.disjoint_eval_cohort) {
        out.eval = out.train;
        return out;
    }
    std::set<std::string> used;
    for (const auto& u : out.train) {
        used.insert(u.user_id);
    }
    std::vector<UserHistory> rest;
    for (const auto& u : d.users) {
        if (!used.contains(u.user_id)) {
            rest.push_back(u);
        }
    }
    out.eval = select_cohort(rest, c.cohort.min_interactions, c.cohort.sample_size,
                             c.run.seed + 1);
    return out;
}

std::vector<UserHistory> training_histories(std::span<const UserHistory> cohort) {
    std::vector<UserHistory> out;
    for (const auto& u : cohort) {
        out.push_back(leave_one_out(u).train);
    }
    return out;
}

std::vector<std::size_t> parse_cutoffs(const std::string& text) {
    std::vector<std::size_t> ks;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        const std::size_t k = std::stoul(part);
        if (k == 0) {
            throw PreconditionError("NDCG cutoff must be >= 1");
        }
        ks.push_back(k);
    }
    if (ks.empty()) {
        throw PreconditionError("no NDCG cutoffs given");
    }
    return ks;
}

std::vector<std::uint64_t> parse_edges(const std::string& text) {
    std::vector<std::uint64_t> edges;
    std::stringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        edges.push_back(std::stoull(part));
    }
    return edges;
}

void apply_ablation_names(const std::vector<std::string>& names, AblationFlags& flags) {
    for (const auto& n : names) {
        if (n == "no_similarity_validator") flags.no_similarity_validator = true;
        else if (n == "no_semantic_validator") flags.no_semantic_validator = true;
        else if (n == "no_evolution") flags.no_evolution = true;
        else throw PreconditionError("unknown ablation '" + n + "'");
    }
}

// ---- ingest ---------------------------------------------------------------

struct IngestArgs {
    std::string format = "jsonl";
    std::string input;
    std::string behaviors;
    std::string news;
    std::string output;
};

int cmd_ingest(const IngestArgs& a) {
    Dataset d;
    if (a.format == "mind_tsv") {
        if (a.behaviors.empty() || a.news.empty()) {
            throw PreconditionError("mind_tsv needs --behaviors and --news");
        }
        d = load_mind(a.behaviors, a.news);
    } else if (a.format == "jsonl") {
        if (a.input.empty()) {
            throw PreconditionError("jsonl needs --input");
        }
        d = load_interactions_jsonl(a.input);
    } else {
        throw PreconditionError("unknown format '" + a.format + "' (jsonl | mind_tsv)");
    }
    for (const auto& p : d.problems) {
        spdlog::warn("{}", p);
    }
    std::ostringstream out;
    write_interactions_jsonl(d, out);
    write_text(a.output, out.str());
    std::cout << "records: " << d.records << "  users: " << d.users.size()
              << "  dropped: " << d.dropped << "  malformed: " << d.malformed << "\n";
    return 0;
}

// ---- train ----------------------------------------------------------------

struct TrainArgs {
    std::vector<std::string> ablations;
    bool resume = false;
    std::optional<std::size_t> stop_after_users;
};

int cmd_train(const GlobalFlags& g, const TrainArgs& a) {
    ConfigFile c = resolve_config(g);
    apply_ablation_names(a.ablations, c.run.ablation);
    c.validate();
    prepare_out_dir(c);
    const fs::path out(c.out_dir);
    const std::string hash = config_hash(c);

    const Dataset d = load_dataset(c);
    const auto cohorts = build_cohorts(d, c);
    const auto users = training_histories(cohorts.train);

    auto audit = std::make_shared<AuditLog>();
    const auto templates = load_templates(c);
    const auto agent = make_gateway(c.run, templates, audit);
    const auto encoder = make_encoder(c.run.encoder);
    const PipelineContext ctx{*agent, *encoder, c.run};

    MemoryPool pool;
    TrainOptions opts;
    opts.stop_after_users = a.stop_after_users;
    const fs::path ckpt_pool = out / "checkpoint.pool.jsonl";
    const fs::path ckpt_meta = out / "checkpoint.json";
    if (a.resume && fs::exists(ckpt_meta)) {
        std::ifstream in(ckpt_meta);
        const auto meta = nlohmann::json::parse(in);
        if (meta.at("config_hash").get<std::string>() != hash) {
            throw PreconditionError("checkpoint was written under config " +
                                    meta.at("config_hash").get<std::string>() +
                                    ", current config is " + hash);
        }
        pool = load_pool(ckpt_pool);
        opts.start_user = meta.at("users_done").get<std::size_t>();
        spdlog::info("resuming after {} users, pool size {}", opts.start_user, pool.size());
    } else if (a.resume) {
        spdlog::warn("no checkpoint in {}, starting from scratch", out.string());
    }
    opts.checkpoint = [&](std::size_t users_done, const MemoryPool& p) {
        save_pool(p, ckpt_pool);
        nlohmann::ordered_json meta;
        meta["users_done"] = users_done;
        meta["config_hash"] = hash;
        write_json(ckpt_meta, meta);
    };

    TrainingReport report;
    try {
        report = train(pool, users, ctx, opts);
    } catch (const WindowError& ex) {
        audit->write_jsonl(out / "audit_train.jsonl");
        std::cerr << "training aborted: " << ex.what()
                  << "\nlast checkpoint kept; rerun with --resume\n";
        return k_exit_failure;
    }
    audit->write_jsonl(out / "audit_train.jsonl");

    auto report_json = report.to_json();
    report_json["config_hash"] = hash;
    report_json["templates"] = nlohmann::ordered_json::object();
    for (TemplateId id : k_all_templates) {
        report_json["templates"][std::string(to_string(id))] = templates.hash(id);
    }
    write_json(out / "training_report.json", report_json);

    const bool finished = opts.start_user + report.users_processed >= users.size();
    if (!finished) {
        std::cerr << "stopped after " << opts.start_user + report.users_processed << " of "
                  << users.size() << " users; checkpoint written, rerun with --resume\n";
        return k_exit_interrupted;
    }
    save_pool(pool, out / "pool.jsonl");
    std::cout << "users: " << users.size() << "  windows: " << report.windows
              << "  inserts: " << report.inserts << "  replaces: " << report.replaces
              << "  pool: " << pool.size() << "  config: " << hash << "\n";
    return 0;
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
    std::string pool_path;
    bool no_memory = false;
    bool cold_start = false;
    std::string cutoffs = "1,5,10";
};

int cmd_eval(const GlobalFlags& g, const EvalArgs& a) {
    ConfigFile c = resolve_config(g);
    c.validate();
    const auto cutoffs = parse_cutoffs(a.cutoffs);
    const fs::path out(c.out_dir);

    MemoryPool pool;
    if (!a.no_memory) {
        const fs::path pool_path = a.pool_path.empty() ? out / "pool.jsonl" : fs::path(a.pool_path);
        if (!fs::exists(pool_path)) {
            throw PreconditionError("pool file " + pool_path.string() +
                                    " not found (train first, or pass --no-memory)");
        }
        pool = load_pool(pool_path);
    }
    prepare_out_dir(c);

    const Dataset d = load_dataset(c);
    const auto universe = d.item_universe();
    std::vector<UserHistory> users;
    if (a.cold_start) {
        users = filter_cold_start(d.users, c.cohort.cold_start_min, c.cohort.cold_start_max);
    } else {
        users = build_cohorts(d, c).eval;
    }
    const auto instances = build_eval_instances(users, universe, c.candidates, c.run.seed);

    auto audit = std::make_shared<AuditLog>();
    const auto agent = make_gateway(c.run, load_templates(c), audit);
    const auto encoder = make_encoder(c.run.encoder);
    const PipelineContext ctx{*agent, *encoder, c.run};

    EvalOptions opts;
    opts.cutoffs = cutoffs;
    opts.jobs = c.jobs;
    opts.config_hash = config_hash(c);
    opts.oracle_hint = c.run.provider.backend == "mock" &&
                       c.run.provider.mock.rank_mode != MockRankMode::Overlap;
    const MetricsReport report = evaluate(instances, pool, ctx, opts);

    const std::string stem = a.cold_start ? "metrics_cold_start" : "metrics";
    audit->write_jsonl(out / ("audit_" + stem + ".jsonl"));
    write_json(out / (stem + ".json"), report.to_json());
    write_text(out / (stem + ".txt"), report.to_table());
    std::cout << report.to_table();
    return 0;
}

// ---- ablate ---------------------------------------------------------------

int cmd_ablate(const GlobalFlags& g) {
    ConfigFile c = resolve_config(g);
    c.validate();
    prepare_out_dir(c);
    const fs::path out = fs::path(c.out_dir) / "ablation";
    fs::create_directories(out);

    const Dataset d = load_dataset(c);
    const auto cohorts = build_cohorts(d, c);
    const auto users = training_histories(cohorts.train);
    const auto instances =
        build_eval_instances(cohorts.eval, d.item_universe(), c.candidates, c.run.seed);

    const auto templates = load_templates(c);
    const auto encoder = make_encoder(c.run.encoder);
    EvalOptions opts;
    opts.jobs = c.jobs;
    opts.config_hash = config_hash(c);
    opts.oracle_hint = c.run.provider.backend == "mock" &&
                       c.run.provider.mock.rank_mode != MockRankMode::Overlap;

    const auto variants = standard_ablation_variants();
    const AgentFactory factory = [&](const RunConfig& run) {
        return make_gateway(run, templates, std::make_shared<AuditLog>());
    };
    const AblationReport report =
        run_ablation_suite({users, instances}, c.run, variants, factory, *encoder, opts);

    bool all_ok = true;
    for (const auto& o : report.outcomes) {
        if (o.error) {
            all_ok = false;
            continue;
        }
        const fs::path dir = out / o.variant.name;
        fs::create_directories(dir);
        save_pool(o.pool, dir / "pool.jsonl");
        write_json(dir / "metrics.json", o.metrics.to_json());
    }
    nlohmann::ordered_json j;
    j["config_hash"] = opts.config_hash;
    j["variants"] = report.to_json();
    write_json(fs::path(c.out_dir) / "ablation_report.json", j);
    write_text(fs::path(c.out_dir) / "ablation_report.txt", report.to_table());
    std::cout << report.to_table();
    return all_ok ? 0 : k_exit_failure;
}

// ---- inspect --------------------------------------------------------------

struct InspectArgs {
    std::string pool_path;
    std::string edges = "0,1,2,3,5,10";
    MemoryId show_id = 0;
    std::string export_path;
};

MemoryPool inspect_pool(const GlobalFlags& g, const InspectArgs& a) {
    if (!a.pool_path.empty()) {
        return load_pool(a.pool_path);
    }
    const ConfigFile c = resolve_config(g);
    return load_pool(fs::path(c.out_dir) / "pool.jsonl");
}

int cmd_inspect_stats(const GlobalFlags& g, const InspectArgs& a) {
    const MemoryPool pool = inspect_pool(g, a);
    const auto edges = parse_edges(a.edges);
    const auto hist = evolution_histogram(pool, edges);
    const auto stats = pool_stats(pool);
    std::cout << "size: " << stats.size << "  dim: " << pool.dimension()
              << "  evolved: " << stats.evolved_entries
              << "  total evolutions: " << stats.total_evolutions
              << "  max evolution count: " << stats.max_evolution_count << "\n";
    std::cout << "evolution count histogram:\n";
    for (std::size_t i = 0; i < hist.counts.size(); ++i) {
        std::cout << "  " << std::left << std::setw(8) << hist.label(i) << hist.counts[i] << "\n";
    }
    return 0;
}

int cmd_inspect_show(const GlobalFlags& g, const InspectArgs& a) {
    const MemoryPool pool = inspect_pool(g, a);
    const MemoryEntry& e = pool.at(a.show_id);
    std::cout << "id: " << e.id << "\n"
              << "behavior_explanation: " << e.pattern.behavior_explanation << "\n"
              << "pattern_description: " << e.pattern.pattern_description << "\n"
              << "evolution_count: " << e.evolution_count << "\n"
              << "source_user: " << e.source_user << "\n"
              << "source_window_index: " << e.source_window_index << "\n"
              << "created_step: " << e.created_step << "\n"
              << "updated_step: " << e.updated_step << "\n";
    return 0;
}

int cmd_inspect_export(const GlobalFlags& g, const InspectArgs& a) {
    const MemoryPool pool = inspect_pool(g, a);
    export_embeddings(pool, fs::path(a.export_path));
    std::cout << "wrote " << pool.size() << " embeddings to " << a.export_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Evolving cross-user memory for LLM re-ranking"};
    app.require_subcommand(1);

    GlobalFlags g;
    app.add_option("--config", g.config_path, "JSON config file")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Sampling seed");
    app.add_option("--provider", g.provider, "Agent backend")
        ->check(CLI::IsMember({"mock", "http"}));
    app.add_option("--out-dir", g.out_dir, "Output directory");
    app.add_option("--jobs", g.jobs, "Parallel ranking calls during evaluation")
        ->check(CLI::PositiveNumber);
    app.add_option("--dataset", g.dataset, "Canonical JSONL interactions file");
    app.add_option("--mock-rank", g.mock_rank, "Mock ranking mode")
        ->check(CLI::IsMember({"overlap", "oracle", "adversarial"}));
    app.add_flag("--mock-link-all", g.mock_link_all, "Mock links every presented candidate");
    app.add_flag("-v,--verbose", g.verbose, "Info-level logging");

    IngestArgs ingest_args;
    auto* ingest = app.add_subcommand("ingest", "Convert a raw dataset to canonical JSONL");
    ingest->add_option("--format", ingest_args.format, "jsonl | mind_tsv");
    ingest->add_option("--input", ingest_args.input, "Input JSONL");
    ingest->add_option("--behaviors", ingest_args.behaviors, "MIND behaviors.tsv");
    ingest->add_option("--news", ingest_args.news, "MIND news.tsv");
    ingest->add_option("-o,--output", ingest_args.output, "Output JSONL")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Build the memory pool");
    train_cmd->add_option("--ablation", train_args.ablations,
                          "no_similarity_validator | no_semantic_validator | no_evolution");
    train_cmd->add_flag("--resume", train_args.resume, "Continue from the last checkpoint");
    train_cmd->add_option("--stop-after-users", train_args.stop_after_users,
                          "Stop (checkpointed) after this many users");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Rank leave-one-out candidate sets, report NDCG");
    eval_cmd->add_option("--pool", eval_args.pool_path, "Pool file (default <out-dir>/pool.jsonl)");
    eval_cmd->add_flag("--no-memory", eval_args.no_memory, "Rank without any memories");
    eval_cmd->add_flag("--cold-start", eval_args.cold_start, "Evaluate users with 2-3 interactions");
    eval_cmd->add_option("--k", eval_args.cutoffs, "NDCG cutoffs")->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "Run full model and the three ablations");

    InspectArgs inspect_args;
    auto* inspect = app.add_subcommand("inspect", "Examine a pool file");
    inspect->add_option("--pool", inspect_args.pool_path, "Pool file (default <out-dir>/pool.jsonl)");
    inspect->require_subcommand(1);
    auto* stats = inspect->add_subcommand("stats", "Size and evolution histogram");
    stats->add_option("--edges", inspect_args.edges, "Histogram bucket lower edges")
        ->capture_default_str();
    auto* show = inspect->add_subcommand("show", "Print one entry");
    show->add_option("id", inspect_args.show_id, "Memory id")->required();
    auto* exp = inspect->add_subcommand("export-embeddings", "Write embeddings as TSV");
    exp->add_option("path", inspect_args.export_path, "Output TSV")->required();

    CLI11_PARSE(app, argc, argv);

    auto logger = spdlog::stderr_color_mt("amem");
    spdlog::set_default_logger(logger);
    spdlog::set_level(g.verbose ? spdlog::level::info : spdlog::level::warn);

    try {
        if (ingest->parsed()) return cmd_ingest(ingest_args);
        if (train_cmd->parsed()) return cmd_train(g, train_args);
        if (eval_cmd->parsed()) return cmd_eval(g, eval_args);
        if (ablate->parsed()) return cmd_ablate(g);
        if (stats->parsed()) return cmd_inspect_stats(g, inspect_args);
        if (show->parsed()) return cmd_inspect_show(g, inspect_args);
        if (exp->parsed()) return cmd_inspect_export(g, inspect_args);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return k_exit_failure;
    }
    return k_exit_failure;
}
