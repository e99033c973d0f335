#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <vector>

#include "amem/agent.hpp"
#include "amem/config.hpp"
#include "amem/encoder.hpp"
#include "amem/errors.hpp"
#include "amem/memory_pool.hpp"
#include "amem/pipeline.hpp"
#include "amem/pool_io.hpp"

namespace amem::test {

inline std::filesystem::path data_dir() { return AMEM_TEST_DATA_DIR; }
inline std::filesystem::path fixture_path() { return data_dir() / "fixture_5users.jsonl"; }

// Replays canned replies per template; templates without a queued reply fall
// through to the mock (or throw if there is no fallback). Every request is kept.
class ScriptedProvider final : public AgentProvider {
public:
    explicit ScriptedProvider(std::shared_ptr<const AgentProvider> fallback = nullptr)
        : fallback_(std::move(fallback)) {}

    void push(TemplateId id, std::string reply) {
        std::lock_guard lock(mutex_);
        replies_[id].push_back(std::move(reply));
    }

    std::string complete(const AgentRequest& request) const override {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        auto& queue = replies_[request.template_id];
        if (!queue.empty()) {
            std::string r = std::move(queue.front());
            queue.pop_front();
            return r;
        }
        if (fallback_) {
            return fallback_->complete(request);
        }
        throw TransportError("no scripted reply for " + std::string(to_string(request.template_id)));
    }
    std::string name() const override { return "scripted"; }

    std::vector<AgentRequest> requests() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }
    std::size_t calls(TemplateId id) const {
        std::lock_guard lock(mutex_);
        std::size_t n = 0;
        for (const auto& r : requests_) n += r.template_id == id;
        return n;
    }

private:
    std::shared_ptr<const AgentProvider> fallback_;
    mutable std::mutex mutex_;
    mutable std::map<TemplateId, std::deque<std::string>> replies_;
    mutable std::vector<AgentRequest> requests_;
};

// Same vector for every text: all cosines are 1.
class ConstantEncoder final : public Encoder {
public:
    explicit ConstantEncoder(Eigen::Index dim = 4) : v_(EmbeddingVector::Ones(dim).normalized()) {}
    EmbeddingVector encode(std::string_view) const override { return v_; }
    Eigen::Index dimension() const override { return v_.size(); }
    std::string name() const override { return "constant"; }

private:
    EmbeddingVector v_;
};

// The i-th distinct text gets basis vector e_i: distinct texts are orthogonal.
class BasisEncoder final : public Encoder {
public:
    explicit BasisEncoder(Eigen::Index dim = 16) : dim_(dim) {}
    EmbeddingVector encode(std::string_view text) const override {
        std::lock_guard lock(mutex_);
        auto [it, fresh] = index_.try_emplace(std::string(text), index_.size());
        if (it->second >= static_cast<std::size_t>(dim_)) {
            throw PreconditionError("BasisEncoder ran out of dimensions");
        }
        return EmbeddingVector::Unit(dim_, static_cast<Eigen::Index>(it->second));
    }
    Eigen::Index dimension() const override { return dim_; }
    std::string name() const override { return "basis"; }

private:
    Eigen::Index dim_;
    mutable std::mutex mutex_;
    mutable std::map<std::string, std::size_t> index_;
};

inline Interaction item(std::string id, std::string title, std::string category,
                        std::int64_t ts) {
    return {std::move(id), std::move(title), std::move(category), ts};
}

inline std::shared_ptr<AgentGateway> mock_gateway(MockOptions opts = {},
                                                  std::shared_ptr<AuditLog> audit = nullptr,
                                                  std::size_t window = 3) {
    GatewayOptions g;
    g.window_size = window;
    return std::make_shared<AgentGateway>(std::make_shared<MockProvider>(opts),
                                          PromptTemplates::builtin(), g, std::move(audit));
}

inline std::string pool_bytes(const MemoryPool& pool) {
    std::ostringstream out;
    write_pool(pool, out);
    return out.str();
}

inline EmbeddingVector vec(std::initializer_list<double> xs) {
    EmbeddingVector v(static_cast<Eigen::Index>(xs.size()));
    Eigen::Index i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

}  // namespace amem::test
