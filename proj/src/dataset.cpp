#include "amem/dataset.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "amem/errors.hpp"
#include "amem/hashing.hpp"

namespace amem {
namespace {

using nlohmann::json;

struct Collector {
    Dataset dataset;
    std::unordered_map<std::string, std::size_t> user_index;

    void add(const std::string& user_id, Interaction item) {
        if (item.title.empty() || item.category.empty()) {
            ++dataset.dropped;
            return;
        }
        auto [it, fresh] = user_index.try_emplace(user_id, dataset.users.size());
        if (fresh) {
            dataset.users.push_back({user_id, {}});
        }
        dataset.catalog.try_emplace(item.item_id,
                                    ItemInfo{item.item_id, item.title, item.category});
        dataset.users[it->second].items.push_back(std::move(item));
        ++dataset.records;
    }

    void malformed(std::size_t line, const std::string& why) {
        ++dataset.malformed;
        dataset.problems.push_back("line " + std::to_string(line) + ": " + why);
    }

    Dataset finish() {
        for (auto& u : dataset.users) {
            std::stable_sort(u.items.begin(), u.items.end(),
                             [](const Interaction& a, const Interaction& b) {
                                 return a.timestamp < b.timestamp;
                             });
        }
        return std::move(dataset);
    }
};

std::string scalar_text(const json& v) {
    if (v.is_string()) {
        return v.get<std::string>();
    }
    if (v.is_number_integer()) {
        return std::to_string(v.get<std::int64_t>());
    }
    if (v.is_null()) {
        return {};
    }
    throw std::runtime_error("expected a string or integer, got " + v.dump());
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) {
        parts.push_back(cur);
    }
    if (!s.empty() && s.back() == sep) {
        parts.emplace_back();
    }
    return parts;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> parts;
    std::istringstream in(s);
    std::string tok;
    while (in >> tok) {
        parts.push_back(tok);
    }
    return parts;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

}  // namespace

std::vector<ItemInfo> Dataset::item_universe() const {
    std::vector<ItemInfo> items;
    items.reserve(catalog.size());
    for (const auto& [_, info] : catalog) {
        items.push_back(info);
    }
    return items;
}

Dataset read_interactions_jsonl(std::istream& in) {
    Collector c;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.find_first_not_of(" \t") == std::string::npos) {
            continue;
        }
        try {
            const json j = json::parse(line);
            Interaction item;
            const std::string user = scalar_text(j.at("user_id"));
            item.item_id = scalar_text(j.at("item_id"));
            if (user.empty() || item.item_id.empty()) {
                throw std::runtime_error("empty user_id or item_id");
            }
            item.title = scalar_text(j.value("title", json()));
            const json category = j.value("category", json());
            if (category.is_array()) {
                item.category = category.empty() ? std::string() : scalar_text(category.back());
            } else {
                item.category = scalar_text(category);
            }
            item.timestamp = j.at("timestamp").get<std::int64_t>();
            c.add(user, std::move(item));
        } catch (const std::exception& ex) {
            c.malformed(line_no, ex.what());
        }
    }
    return c.finish();
}

Dataset load_interactions_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open interactions file " + path.string());
    }
    return read_interactions_jsonl(in);
}

Dataset read_mind(std::istream& behaviors, std::istream& news) {
    std::unordered_map<std::string, ItemInfo> articles;
    std::string line;
    Collector c;
    std::size_t line_no = 0;
    while (std::getline(news, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) {
            continue;
        }
        const auto f = split(line, '\t');
        if (f.size() < 4) {
            c.malformed(line_no, "news line has fewer than 4 fields");
            continue;
        }
        articles.try_emplace(f[0], ItemInfo{f[0], f[3], f[1]});
    }

    struct Pending {
        std::vector<std::string> history;
        std::vector<std::string> clicks;
    };
    std::vector<std::string> order;
    std::unordered_map<std::string, Pending> pending;
    line_no = 0;
    while (std::getline(behaviors, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty()) {
            continue;
        }
        const auto f = split(line, '\t');
        if (f.size() < 5) {
            c.malformed(line_no, "behaviors line has fewer than 5 fields");
            continue;
        }
        auto [it, fresh] = pending.try_emplace(f[1]);
        if (fresh) {
            order.push_back(f[1]);
            it->second.history = split_ws(f[3]);
        }
        for (const auto& imp : split_ws(f[4])) {
            const auto dash = imp.rfind('-');
            if (dash != std::string::npos && imp.substr(dash + 1) == "1") {
                it->second.clicks.push_back(imp.substr(0, dash));
            }
        }
    }

    for (const auto& user : order) {
        const Pending& p = pending.at(user);
        std::int64_t t = 0;
        const auto emit = [&](const std::string& news_id) {
            auto a = articles.find(news_id);
            Interaction item;
            item.item_id = news_id;
            if (a != articles.end()) {
                item.title = a->second.title;
                item.category = a->second.category;
            }
            item.timestamp = t++;
            c.add(user, std::move(item));
        };
        for (const auto& id : p.history) {
            emit(id);
        }
        for (const auto& id : p.clicks) {
            emit(id);
        }
    }
    return c.finish();
}

Dataset load_mind(const std::filesystem::path& behaviors, const std::filesystem::path& news) {
    std::ifstream b(behaviors);
    if (!b) {
        throw IoError("cannot open behaviors file " + behaviors.string());
    }
    std::ifstream n(news);
    if (!n) {
        throw IoError("cannot open news file " + news.string());
    }
    return read_mind(b, n);
}

void write_interactions_jsonl(const Dataset& dataset, std::ostream& out) {
    for (const auto& user : dataset.users) {
        for (const auto& item : user.items) {
            nlohmann::ordered_json j;
            j["user_id"] = user.user_id;
            j["item_id"] = item.item_id;
            j["title"] = item.title;
            j["category"] = item.category;
            j["timestamp"] = item.timestamp;
            out << j.dump() << '\n';
        }
    }
}

std::vector<UserHistory> select_cohort(std::span<const UserHistory> users,
                                       std::size_t min_interactions, std::size_t sample_size,
                                       std::uint64_t seed) {
    std::vector<UserHistory> eligible;
    std::copy_if(users.begin(), users.end(), std::back_inserter(eligible),
                 [&](const UserHistory& u) { return u.size() >= min_interactions; });
    if (eligible.size() <= sample_size) {
        return eligible;
    }
    std::vector<UserHistory> cohort;
    cohort.reserve(sample_size);
    std::mt19937_64 rng(seed);
    std::sample(eligible.begin(), eligible.end(), std::back_inserter(cohort), sample_size, rng);
    return cohort;
}

LeaveOneOutSplit leave_one_out(const UserHistory& history) {
    if (history.size() < 2) {
        throw PreconditionError("leave-one-out needs at least 2 interactions, user '" +
                                history.user_id + "' has " + std::to_string(history.size()));
    }
    LeaveOneOutSplit split;
    split.train.user_id = history.user_id;
    split.train.items.assign(history.items.begin(), history.items.end() - 1);
    split.held_out = history.items.back();
    return split;
}

std::uint64_t user_seed(std::uint64_t seed, std::string_view user_id) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(fnv1a64(user_id)),
                      static_cast<std::uint32_t>(fnv1a64(user_id) >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

std::vector<ItemInfo> build_candidates(const ItemInfo& ground_truth,
                                       std::span<const ItemInfo> universe,
                                       const UserHistory& full_history, std::size_t m,
                                       std::uint64_t seed) {
    if (m < 1) {
        throw PreconditionError("candidate set size must be >= 1");
    }
    std::unordered_set<std::string> seen;
    for (const auto& item : full_history.items) {
        seen.insert(item.item_id);
    }
    seen.insert(ground_truth.item_id);
    std::vector<ItemInfo> pool;
    std::unordered_set<std::string> pooled;
    for (const auto& item : universe) {
        if (!seen.contains(item.item_id) && pooled.insert(item.item_id).second) {
            pool.push_back(item);
        }
    }
    if (pool.size() < m - 1) {
        throw PreconditionError("only " + std::to_string(pool.size()) +
                                " unseen items for user '" + full_history.user_id + "', need " +
                                std::to_string(m - 1));
    }
    std::mt19937_64 rng(user_seed(seed, full_history.user_id));
    std::vector<ItemInfo> candidates;
    candidates.reserve(m);
    std::sample(pool.begin(), pool.end(), std::back_inserter(candidates), m - 1, rng);
    candidates.push_back(ground_truth);
    std::shuffle(candidates.begin(), candidates.end(), rng);
    return candidates;
}

std::vector<UserHistory> filter_cold_start(std::span<const UserHistory> users, std::size_t lo,
                                           std::size_t hi) {
    std::vector<UserHistory> out;
    std::copy_if(users.begin(), users.end(), std::back_inserter(out),
                 [&](const UserHistory& u) { return u.size() >= lo && u.size() <= hi; });
    return out;
}

std::vector<EvalInstance> build_eval_instances(std::span<const UserHistory> users,
                                               std::span<const ItemInfo> universe, std::size_t m,
                                               std::uint64_t seed) {
    std::vector<EvalInstance> instances;
    instances.reserve(users.size());
    for (const auto& user : users) {
        auto split = leave_one_out(user);
        const ItemInfo truth{split.held_out.item_id, split.held_out.title,
                             split.held_out.category};
        EvalInstance inst;
        inst.user_id = user.user_id;
        inst.candidates = build_candidates(truth, universe, user, m, seed);
        inst.ground_truth = truth;
        inst.train_history = std::move(split.train);
        instances.push_back(std::move(inst));
    }
    return instances;
}

}  // namespace amem
