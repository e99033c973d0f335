#pragma once

#include <chrono>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "amem/vector.hpp"

namespace amem {

// Text -> embedding. Implementations must be deterministic for a fixed backend
// and safe to call concurrently.
class Encoder {
public:
    virtual ~Encoder() = default;

    virtual EmbeddingVector encode(std::string_view text) const = 0;
    virtual std::vector<EmbeddingVector> encode_batch(std::span<const std::string> texts) const;
    virtual Eigen::Index dimension() const = 0;
    virtual std::string name() const = 0;
};

// Dependency-free hashed bag of n-grams.
//
//   tokens   = alnum_tokens(text)
//   features = "u:" + token for every token,
//              "b:" + token_i + " " + token_{i+1} for every adjacent pair
//   h        = fnv1a64(feature)
//   v[h % D] += ((h >> 32) & 1) ? -1 : +1
//   result   = v / |v|
//
// Empty text, or text whose features cancel to the zero vector, is rejected.
class ReferenceEncoder final : public Encoder {
public:
    explicit ReferenceEncoder(Eigen::Index dimension = 64);

    EmbeddingVector encode(std::string_view text) const override;
    Eigen::Index dimension() const override { return dim_; }
    std::string name() const override;

private:
    Eigen::Index dim_;
};

struct HttpEncoderConfig {
    std::string endpoint;  // full URL, e.g. http://localhost:8080/embed
    std::string model;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds initial_backoff{500};
    std::string api_key_env;  // empty -> no Authorization header
    Eigen::Index dimension = 0;  // 0 -> accept whatever the server returns
};

// POST {"model": m, "texts": [...]} -> {"embeddings": [[...], ...]}
class HttpEncoder final : public Encoder {
public:
    explicit HttpEncoder(HttpEncoderConfig config);

    EmbeddingVector encode(std::string_view text) const override;
    std::vector<EmbeddingVector> encode_batch(std::span<const std::string> texts) const override;
    Eigen::Index dimension() const override { return config_.dimension; }
    std::string name() const override;

private:
    HttpEncoderConfig config_;
};

// In-run memo keyed by exact text.
class MemoEncoder final : public Encoder {
public:
    explicit MemoEncoder(std::shared_ptr<const Encoder> inner);

    EmbeddingVector encode(std::string_view text) const override;
    Eigen::Index dimension() const override { return inner_->dimension(); }
    std::string name() const override { return inner_->name(); }
    std::size_t cache_size() const;

private:
    std::shared_ptr<const Encoder> inner_;
    mutable std::mutex mutex_;
    mutable std::unordered_map<std::string, EmbeddingVector> cache_;
};

}  // namespace amem
