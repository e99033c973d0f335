#pragma once

#include <span>
#include <string_view>
#include <vector>

#include "amem/retrieval.hpp"

namespace amem {

// Soft-threshold boundaries. Scores s >= tau_high are "high", s < tau_low are
// "low", everything between is "medium".
struct Thresholds {
    double tau_low = 0.55;
    double tau_high = 0.9;

    // Requires 0 < tau_low < tau_high < 1.
    void validate() const;
};

// Proportion cut-offs of the decision tree's two s_max >= tau_high branches.
struct BranchConstants {
    double p_high_min = 0.6;
    double p_low_min = 0.5;
};

struct ScoreDistribution {
    double s_max = 0.0;
    double p_high = 0.0;
    double p_medium = 0.0;
    double p_low = 0.0;
    std::size_t k_effective = 0;  // 0 only for the empty-pool bootstrap
    bool operator==(const ScoreDistribution&) const = default;
};

enum class Strategy { StoreOnly, UpdateAndStore, UpdateOnly };

std::string_view to_string(Strategy s) noexcept;
Strategy strategy_from_string(std::string_view name);

struct PolicyDecision {
    Strategy strategy = Strategy::StoreOnly;
    bool do_update = false;
    bool do_store = true;
    ScoreDistribution evidence;

    static PolicyDecision make(Strategy strategy, const ScoreDistribution& evidence) noexcept;
    bool operator==(const PolicyDecision&) const = default;
};

// Bucket proportions over a non-empty list of scores in [-1, 1].
ScoreDistribution score_distribution(std::span<const double> scores, const Thresholds& t);

// The similarity validator. Empty input (empty pool) -> StoreOnly. Otherwise,
// first matching case wins:
//   s_max <  tau_low                          -> StoreOnly
//   tau_low <= s_max < tau_high               -> UpdateAndStore
//   s_max >= tau_high and p_high >= p_high_min -> UpdateOnly
//   s_max >= tau_high and p_low  >= p_low_min  -> StoreOnly
//   otherwise                                  -> UpdateAndStore
PolicyDecision decide(std::span<const double> scores, const Thresholds& t,
                      const BranchConstants& branch = {});

// Stand-in used when the similarity validator is ablated: update and store
// whenever there is anything to compare against.
PolicyDecision decide_unvalidated(std::span<const double> scores, const Thresholds& t);

// Neighbours with score >= tau_low, order preserved. Requires decision.do_update.
std::vector<ScoredNeighbor> update_candidates(std::span<const ScoredNeighbor> neighbors,
                                              const PolicyDecision& decision,
                                              const Thresholds& t);

std::vector<double> scores_of(std::span<const ScoredNeighbor> neighbors);

}  // namespace amem
