#pragma once

#include <cstddef>
#include <vector>

#include "amem/memory_pool.hpp"

namespace amem {

struct ScoredNeighbor {
    MemoryId id = 0;
    double score = 0.0;  // cosine similarity, [-1, 1] up to rounding
    bool operator==(const ScoredNeighbor&) const = default;
};

// Descending score, ascending id on ties.
constexpr bool ranks_before(const ScoredNeighbor& a, const ScoredNeighbor& b) noexcept {
    return a.score != b.score ? a.score > b.score : a.id < b.id;
}

// Exact brute-force k-nearest by cosine similarity. Returns min(k, pool size)
// neighbours ordered by ranks_before. k must be >= 1.
std::vector<ScoredNeighbor> top_k(const MemoryPool& pool, const EmbeddingVector& query,
                                  std::size_t k);

}  // namespace amem
