#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "amem/vector.hpp"

namespace amem {

using MemoryId = std::uint64_t;

// The two texts an agent distils from one interaction window.
struct PatternText {
    std::string behavior_explanation;
    std::string pattern_description;

    // Text handed to the encoder: "<behavior_explanation> <pattern_description>".
    std::string joined() const;
    bool complete() const noexcept {
        return !behavior_explanation.empty() && !pattern_description.empty();
    }
    bool operator==(const PatternText&) const = default;
};

struct Provenance {
    std::string source_user;
    std::uint64_t source_window_index = 0;
    bool operator==(const Provenance&) const = default;
};

struct MemoryEntry {
    MemoryId id = 0;
    PatternText pattern;
    EmbeddingVector embedding;
    std::uint64_t evolution_count = 0;
    std::string source_user;
    std::uint64_t source_window_index = 0;
    std::uint64_t created_step = 0;
    std::uint64_t updated_step = 0;

    bool operator==(const MemoryEntry& other) const;
};

// Global cross-user memory store. Ids are dense, assigned in insertion order
// and never reused; iteration is by ascending id. There is no deletion.
//
// Single writer. Concurrent const access is fine once mutation has stopped.
class MemoryPool {
public:
    MemoryPool() = default;

    // Rebuilds a pool from persisted state. Validates id order, uniqueness,
    // dimensions and step invariants.
    static MemoryPool restore(Eigen::Index dim, MemoryId next_id, std::uint64_t step,
                              std::vector<MemoryEntry> entries);

    // Throws PreconditionError on empty pattern text or a non-finite/zero
    // embedding, DimensionMismatch against an established dimension. The
    // first insert fixes the pool dimension.
    MemoryId insert(PatternText pattern, EmbeddingVector embedding, Provenance provenance);

    // Keeps id and provenance, swaps text and embedding, bumps evolution_count.
    const MemoryEntry& replace(MemoryId id, PatternText pattern, EmbeddingVector embedding);

    const MemoryEntry& at(MemoryId id) const;
    const MemoryEntry* find(MemoryId id) const noexcept;
    bool contains(MemoryId id) const noexcept { return find(id) != nullptr; }

    std::span<const MemoryEntry> entries() const noexcept { return entries_; }
    auto begin() const noexcept { return entries_.begin(); }
    auto end() const noexcept { return entries_.end(); }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    // 0 until the first insert.
    Eigen::Index dimension() const noexcept { return dim_; }
    MemoryId next_id() const noexcept { return next_id_; }
    std::uint64_t step() const noexcept { return step_; }

    bool operator==(const MemoryPool& other) const;

private:
    void check_embedding(const EmbeddingVector& embedding) const;
    MemoryEntry* find_mutable(MemoryId id) noexcept;

    std::vector<MemoryEntry> entries_;
    Eigen::Index dim_ = 0;
    MemoryId next_id_ = 0;
    std::uint64_t step_ = 0;
};

}  // namespace amem
