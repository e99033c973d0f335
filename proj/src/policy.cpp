#include "amem/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "amem/errors.hpp"

namespace amem {
namespace {

constexpr double k_score_slack = 1e-9;

}  // namespace

void Thresholds::validate() const {
    if (!(tau_low > 0.0 && tau_low < 1.0 && tau_high > 0.0 && tau_high < 1.0)) {
        throw PreconditionError("thresholds must lie in (0, 1)");
    }
    if (!(tau_low < tau_high)) {
        throw PreconditionError("tau_low must be below tau_high");
    }
}

std::string_view to_string(Strategy s) noexcept {
    switch (s) {
        case Strategy::StoreOnly: return "STORE_ONLY";
        case Strategy::UpdateAndStore: return "UPDATE_AND_STORE";
        case Strategy::UpdateOnly: return "UPDATE_ONLY";
    }
    return "?";
}

Strategy strategy_from_string(std::string_view name) {
    if (name == "STORE_ONLY") return Strategy::StoreOnly;
    if (name == "UPDATE_AND_STORE") return Strategy::UpdateAndStore;
    if (name == "UPDATE_ONLY") return Strategy::UpdateOnly;
    throw PreconditionError("unknown strategy '" + std::string(name) + "'");
}

PolicyDecision PolicyDecision::make(Strategy strategy, const ScoreDistribution& evidence) noexcept {
    PolicyDecision d;
    d.strategy = strategy;
    d.do_update = strategy != Strategy::StoreOnly;
    d.do_store = strategy != Strategy::UpdateOnly;
    d.evidence = evidence;
    return d;
}

ScoreDistribution score_distribution(std::span<const double> scores, const Thresholds& t) {
    t.validate();
    if (scores.empty()) {
        throw PreconditionError("score distribution of an empty score list");
    }
    std::size_t high = 0;
    std::size_t low = 0;
    double s_max = -std::numeric_limits<double>::infinity();
    for (double s : scores) {
        if (std::isnan(s) || s < -1.0 - k_score_slack || s > 1.0 + k_score_slack) {
            throw PreconditionError("similarity score out of [-1, 1]: " + std::to_string(s));
        }
        s_max = std::max(s_max, s);
        if (s >= t.tau_high) {
            ++high;
        } else if (s < t.tau_low) {
            ++low;
        }
    }
    const std::size_t k = scores.size();
    const std::size_t medium = k - high - low;
    const auto kd = static_cast<double>(k);
    ScoreDistribution d;
    d.s_max = s_max;
    d.p_high = static_cast<double>(high) / kd;
    d.p_medium = static_cast<double>(medium) / kd;
    d.p_low = static_cast<double>(low) / kd;
    d.k_effective = k;
    return d;
}

PolicyDecision decide(std::span<const double> scores, const Thresholds& t,
                      const BranchConstants& branch) {
    t.validate();
    if (scores.empty()) {
        return PolicyDecision::make(Strategy::StoreOnly, {});
    }
    const ScoreDistribution d = score_distribution(scores, t);
    Strategy s = Strategy::UpdateAndStore;
    if (d.s_max < t.tau_low) {
        s = Strategy::StoreOnly;
    } else if (d.s_max < t.tau_high) {
        s = Strategy::UpdateAndStore;
    } else if (d.p_high >= branch.p_high_min) {
        s = Strategy::UpdateOnly;
    } else if (d.p_low >= branch.p_low_min) {
        s = Strategy::StoreOnly;
    }
    return PolicyDecision::make(s, d);
}

PolicyDecision decide_unvalidated(std::span<const double> scores, const Thresholds& t) {
    if (scores.empty()) {
        return PolicyDecision::make(Strategy::StoreOnly, {});
    }
    return PolicyDecision::make(Strategy::UpdateAndStore, score_distribution(scores, t));
}

std::vector<ScoredNeighbor> update_candidates(std::span<const ScoredNeighbor> neighbors,
                                              const PolicyDecision& decision,
                                              const Thresholds& t) {
    if (!decision.do_update) {
        throw PreconditionError("update_candidates called for a decision without update");
    }
    std::vector<ScoredNeighbor> out;
    std::copy_if(neighbors.begin(), neighbors.end(), std::back_inserter(out),
                 [&](const ScoredNeighbor& n) { return n.score >= t.tau_low; });
    return out;
}

std::vector<double> scores_of(std::span<const ScoredNeighbor> neighbors) {
    std::vector<double> out;
    out.reserve(neighbors.size());
    for (const auto& n : neighbors) {
        out.push_back(n.score);
    }
    return out;
}

}  // namespace amem
