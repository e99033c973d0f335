#pragma once

#include <filesystem>
#include <iosfwd>

#include "amem/memory_pool.hpp"

namespace amem {

inline constexpr int k_pool_schema_version = 1;

// Line-oriented pool format:
//   {"schema":1,"dim":D,"next_id":N,"step":S}
//   {"id":..,"behavior_explanation":..,"pattern_description":..,"embedding":[..],
//    "evolution_count":..,"source_user":..,"source_window_index":..,
//    "created_step":..,"updated_step":..}
//   ...
// Doubles are written in shortest round-trip form, so load(save(p)) == p.
void write_pool(const MemoryPool& pool, std::ostream& out);
MemoryPool read_pool(std::istream& in);

// Writes atomically via a sibling temp file.
void save_pool(const MemoryPool& pool, const std::filesystem::path& path);
MemoryPool load_pool(const std::filesystem::path& path);

}  // namespace amem
