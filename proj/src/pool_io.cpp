#include "amem/pool_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "amem/errors.hpp"

namespace amem {
namespace {

using ordered_json = nlohmann::ordered_json;

ordered_json entry_to_json(const MemoryEntry& e) {
    ordered_json j;
    j["id"] = e.id;
    j["behavior_explanation"] = e.pattern.behavior_explanation;
    j["pattern_description"] = e.pattern.pattern_description;
    auto& emb = j["embedding"] = ordered_json::array();
    for (Eigen::Index i = 0; i < e.embedding.size(); ++i) {
        emb.push_back(e.embedding[i]);
    }
    j["evolution_count"] = e.evolution_count;
    j["source_user"] = e.source_user;
    j["source_window_index"] = e.source_window_index;
    j["created_step"] = e.created_step;
    j["updated_step"] = e.updated_step;
    return j;
}

MemoryEntry entry_from_json(const ordered_json& j) {
    MemoryEntry e;
    e.id = j.at("id").get<MemoryId>();
    e.pattern.behavior_explanation = j.at("behavior_explanation").get<std::string>();
    e.pattern.pattern_description = j.at("pattern_description").get<std::string>();
    const auto& emb = j.at("embedding");
    if (!emb.is_array()) {
        throw std::runtime_error("embedding is not an array");
    }
    e.embedding.resize(static_cast<Eigen::Index>(emb.size()));
    for (std::size_t i = 0; i < emb.size(); ++i) {
        e.embedding[static_cast<Eigen::Index>(i)] = emb[i].get<double>();
    }
    e.evolution_count = j.at("evolution_count").get<std::uint64_t>();
    e.source_user = j.at("source_user").get<std::string>();
    e.source_window_index = j.at("source_window_index").get<std::uint64_t>();
    e.created_step = j.at("created_step").get<std::uint64_t>();
    e.updated_step = j.at("updated_step").get<std::uint64_t>();
    return e;
}

}  // namespace

void write_pool(const MemoryPool& pool, std::ostream& out) {
    ordered_json header;
    header["schema"] = k_pool_schema_version;
    header["dim"] = pool.dimension();
    header["next_id"] = pool.next_id();
    header["step"] = pool.step();
    out << header.dump() << '\n';
    for (const auto& e : pool) {
        out << entry_to_json(e).dump() << '\n';
    }
}

MemoryPool read_pool(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) {
        throw CorruptRecord(1, "missing header line");
    }
    ++line_no;
    ordered_json header;
    try {
        header = ordered_json::parse(line);
    } catch (const std::exception& ex) {
        throw CorruptRecord(line_no, std::string("unparseable header: ") + ex.what());
    }
    int schema = 0;
    Eigen::Index dim = 0;
    MemoryId next_id = 0;
    std::uint64_t step = 0;
    try {
        schema = header.at("schema").get<int>();
        dim = header.at("dim").get<Eigen::Index>();
        next_id = header.at("next_id").get<MemoryId>();
        step = header.at("step").get<std::uint64_t>();
    } catch (const std::exception& ex) {
        throw CorruptRecord(line_no, std::string("bad header: ") + ex.what());
    }
    if (schema != k_pool_schema_version) {
        throw SchemaVersionError("pool schema version " + std::to_string(schema) +
                                 " is not supported (expected " +
                                 std::to_string(k_pool_schema_version) + ")");
    }

    std::vector<MemoryEntry> entries;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        try {
            MemoryEntry e = entry_from_json(ordered_json::parse(line));
            if (e.embedding.size() != dim) {
                throw std::runtime_error("embedding has " + std::to_string(e.embedding.size()) +
                                         " components, header says " + std::to_string(dim));
            }
            entries.push_back(std::move(e));
        } catch (const std::exception& ex) {
            throw CorruptRecord(line_no, ex.what());
        }
    }
    try {
        return MemoryPool::restore(dim, next_id, step, std::move(entries));
    } catch (const Error& ex) {
        throw CorruptRecord(line_no, ex.what());
    }
}

void save_pool(const MemoryPool& pool, const std::filesystem::path& path) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp.string() + " for writing");
        }
        write_pool(pool, out);
        out.flush();
        if (!out) {
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
    }
}

MemoryPool load_pool(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open pool file " + path.string());
    }
    return read_pool(in);
}

}  // namespace amem
