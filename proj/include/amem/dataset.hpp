#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "amem/interaction.hpp"

namespace amem {

struct Dataset {
    // First-appearance order of users in the input.
    std::vector<UserHistory> users;
    // Item metadata by id, first record wins.
    std::map<std::string, ItemInfo> catalog;
    std::size_t records = 0;    // records kept
    std::size_t dropped = 0;    // records without title or category
    std::size_t malformed = 0;  // unparseable lines, skipped
    std::vector<std::string> problems;  // one message per malformed line

    // Catalog items, ascending id.
    std::vector<ItemInfo> item_universe() const;
};

// Canonical JSONL: {"user_id","item_id","title","category","timestamp"} per
// line. A category given as an array is flattened to its last (leaf) element.
// Histories are sorted by timestamp, ties keep file order.
Dataset read_interactions_jsonl(std::istream& in);
Dataset load_interactions_jsonl(const std::filesystem::path& path);

// MIND behaviors.tsv (impression_id, user_id, time, history, impressions) joined
// with news.tsv (news_id, category, subcategory, title, ...). Each user's
// history comes from its first behaviors line, followed by clicked (-1)
// impressions of every line in file order; timestamps are sequence indices.
Dataset read_mind(std::istream& behaviors, std::istream& news);
Dataset load_mind(const std::filesystem::path& behaviors, const std::filesystem::path& news);

// Writes the canonical JSONL, users in dataset order.
void write_interactions_jsonl(const Dataset& dataset, std::ostream& out);

// Users with at least min_interactions items, then min(sample_size, eligible)
// of them drawn uniformly with the seeded generator. Input order is kept.
std::vector<UserHistory> select_cohort(std::span<const UserHistory> users,
                                       std::size_t min_interactions, std::size_t sample_size,
                                       std::uint64_t seed);

struct LeaveOneOutSplit {
    UserHistory train;
    Interaction held_out;
};

// Last item (by timestamp, later file position on ties) is held out. Needs >= 2 items.
LeaveOneOutSplit leave_one_out(const UserHistory& history);

// Per-user generator seed, independent of which other users exist.
std::uint64_t user_seed(std::uint64_t seed, std::string_view user_id);

// m - 1 negatives drawn without replacement from universe items the user never
// touched, plus the ground truth, shuffled. Deterministic per (user, seed).
std::vector<ItemInfo> build_candidates(const ItemInfo& ground_truth,
                                       std::span<const ItemInfo> universe,
                                       const UserHistory& full_history, std::size_t m,
                                       std::uint64_t seed);

std::vector<UserHistory> filter_cold_start(std::span<const UserHistory> users, std::size_t lo = 2,
                                           std::size_t hi = 3);

struct EvalInstance {
    std::string user_id;
    UserHistory train_history;
    ItemInfo ground_truth;
    std::vector<ItemInfo> candidates;
};

// leave_one_out + build_candidates for every user.
std::vector<EvalInstance> build_eval_instances(std::span<const UserHistory> users,
                                               std::span<const ItemInfo> universe, std::size_t m,
                                               std::uint64_t seed);

}  // namespace amem
