#include "amem/memory_pool.hpp"

#include <algorithm>

#include "amem/errors.hpp"

namespace amem {

std::string PatternText::joined() const {
    return behavior_explanation + " " + pattern_description;
}

bool MemoryEntry::operator==(const MemoryEntry& other) const {
    return id == other.id && pattern == other.pattern &&
           embedding.size() == other.embedding.size() && embedding == other.embedding &&
           evolution_count == other.evolution_count && source_user == other.source_user &&
           source_window_index == other.source_window_index &&
           created_step == other.created_step && updated_step == other.updated_step;
}

bool MemoryPool::operator==(const MemoryPool& other) const {
    return dim_ == other.dim_ && next_id_ == other.next_id_ && step_ == other.step_ &&
           entries_ == other.entries_;
}

MemoryPool MemoryPool::restore(Eigen::Index dim, MemoryId next_id, std::uint64_t step,
                               std::vector<MemoryEntry> entries) {
    if (dim < 0) {
        throw PreconditionError("negative pool dimension");
    }
    if (!entries.empty() && dim == 0) {
        throw PreconditionError("non-empty pool needs a dimension");
    }
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (i > 0 && entries[i - 1].id >= e.id) {
            throw PreconditionError("memory ids must be unique and ascending");
        }
        if (e.id >= next_id) {
            throw PreconditionError("memory id " + std::to_string(e.id) + " is not below next_id");
        }
        if (e.embedding.size() != dim) {
            throw DimensionMismatch(dim, e.embedding.size());
        }
        if (e.updated_step < e.created_step || e.updated_step > step) {
            throw PreconditionError("inconsistent step counters on memory " +
                                    std::to_string(e.id));
        }
    }
    MemoryPool pool;
    pool.entries_ = std::move(entries);
    pool.dim_ = dim;
    pool.next_id_ = next_id;
    pool.step_ = step;
    return pool;
}

void MemoryPool::check_embedding(const EmbeddingVector& embedding) const {
    if (dim_ != 0 && embedding.size() != dim_) {
        throw DimensionMismatch(dim_, embedding.size());
    }
    if (embedding.size() == 0 || !embedding.allFinite() || embedding.isZero(0.0)) {
        throw PreconditionError("embedding must be non-empty, finite and non-zero");
    }
}

MemoryId MemoryPool::insert(PatternText pattern, EmbeddingVector embedding,
                            Provenance provenance) {
    if (!pattern.complete()) {
        throw PreconditionError("memory pattern text must be non-empty");
    }
    check_embedding(embedding);
    if (dim_ == 0) {
        dim_ = embedding.size();
    }
    ++step_;
    MemoryEntry entry;
    entry.id = next_id_++;
    entry.pattern = std::move(pattern);
    entry.embedding = std::move(embedding);
    entry.source_user = std::move(provenance.source_user);
    entry.source_window_index = provenance.source_window_index;
    entry.created_step = step_;
    entry.updated_step = step_;
    entries_.push_back(std::move(entry));
    return entries_.back().id;
}

const MemoryEntry& MemoryPool::replace(MemoryId id, PatternText pattern,
                                       EmbeddingVector embedding) {
    MemoryEntry* entry = find_mutable(id);
    if (entry == nullptr) {
        throw UnknownMemoryId(id);
    }
    if (!pattern.complete()) {
        throw PreconditionError("memory pattern text must be non-empty");
    }
    check_embedding(embedding);
    ++step_;
    entry->pattern = std::move(pattern);
    entry->embedding = std::move(embedding);
    entry->evolution_count += 1;
    entry->updated_step = step_;
    return *entry;
}

const MemoryEntry* MemoryPool::find(MemoryId id) const noexcept {
    auto it = std::lower_bound(entries_.begin(), entries_.end(), id,
                               [](const MemoryEntry& e, MemoryId v) { return e.id < v; });
    return (it != entries_.end() && it->id == id) ? &*it : nullptr;
}

MemoryEntry* MemoryPool::find_mutable(MemoryId id) noexcept {
    return const_cast<MemoryEntry*>(std::as_const(*this).find(id));
}

const MemoryEntry& MemoryPool::at(MemoryId id) const {
    const MemoryEntry* entry = find(id);
    if (entry == nullptr) {
        throw UnknownMemoryId(id);
    }
    return *entry;
}

}  // namespace amem
