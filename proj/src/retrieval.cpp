#include "amem/retrieval.hpp"

#include <algorithm>

#include "amem/errors.hpp"

namespace amem {

std::vector<ScoredNeighbor> top_k(const MemoryPool& pool, const EmbeddingVector& query,
                                  std::size_t k) {
    if (k == 0) {
        throw PreconditionError("top_k requires k >= 1");
    }
    std::vector<ScoredNeighbor> scored;
    scored.reserve(pool.size());
    for (const auto& entry : pool) {
        scored.push_back({entry.id, cosine_similarity(query, entry.embedding)});
    }
    const std::size_t keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep),
                      scored.end(), ranks_before);
    scored.resize(keep);
    return scored;
}

}  // namespace amem
