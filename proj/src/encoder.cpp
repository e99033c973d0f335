#include "amem/encoder.hpp"

#include <nlohmann/json.hpp>

#include "amem/errors.hpp"
#include "amem/hashing.hpp"
#include "amem/text.hpp"
#include "http_client.hpp"

namespace amem {

std::vector<EmbeddingVector> Encoder::encode_batch(std::span<const std::string> texts) const {
    std::vector<EmbeddingVector> out;
    out.reserve(texts.size());
    for (const auto& t : texts) {
        out.push_back(encode(t));
    }
    return out;
}

ReferenceEncoder::ReferenceEncoder(Eigen::Index dimension) : dim_(dimension) {
    if (dim_ < 1) {
        throw PreconditionError("encoder dimension must be positive");
    }
}

std::string ReferenceEncoder::name() const {
    return "reference-hash-ngram-" + std::to_string(dim_);
}

EmbeddingVector ReferenceEncoder::encode(std::string_view text) const {
    if (text.empty()) {
        throw PreconditionError("cannot encode empty text");
    }
    EmbeddingVector v = EmbeddingVector::Zero(dim_);
    const auto add = [&](const std::string& feature) {
        const std::uint64_t h = fnv1a64(feature);
        const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim_));
        v[bucket] += ((h >> 32) & 1U) ? -1.0 : 1.0;
    };
    const auto tokens = alnum_tokens(text);
    for (std::size_t i = 0; i < tokens.size(); ++i) {
        add("u:" + tokens[i]);
        if (i + 1 < tokens.size()) {
            add("b:" + tokens[i] + " " + tokens[i + 1]);
        }
    }
    const double norm = v.norm();
    if (norm == 0.0) {
        throw PreconditionError("text encodes to the zero vector: \"" + std::string(text) + "\"");
    }
    return v / norm;
}

HttpEncoder::HttpEncoder(HttpEncoderConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) {
        throw PreconditionError("http encoder needs an endpoint");
    }
}

std::string HttpEncoder::name() const {
    return "http:" + config_.model;
}

EmbeddingVector HttpEncoder::encode(std::string_view text) const {
    const std::string t(text);
    return encode_batch(std::span<const std::string>(&t, 1)).front();
}

std::vector<EmbeddingVector> HttpEncoder::encode_batch(std::span<const std::string> texts) const {
    for (const auto& t : texts) {
        if (t.empty()) {
            throw PreconditionError("cannot encode empty text");
        }
    }
    nlohmann::json body;
    body["model"] = config_.model;
    body["texts"] = std::vector<std::string>(texts.begin(), texts.end());

    detail::HttpPostOptions opts;
    opts.timeout = config_.timeout;
    opts.max_retries = config_.max_retries;
    opts.initial_backoff = config_.initial_backoff;
    opts.bearer_token = detail::env_secret(config_.api_key_env);
    const std::string raw = detail::post_json(config_.endpoint, body.dump(), opts);

    std::vector<EmbeddingVector> out;
    try {
        const auto j = nlohmann::json::parse(raw);
        const auto& rows = j.at("embeddings");
        if (rows.size() != texts.size()) {
            throw TransportError("embedding service returned " + std::to_string(rows.size()) +
                                 " vectors for " + std::to_string(texts.size()) + " texts");
        }
        for (const auto& row : rows) {
            EmbeddingVector v(static_cast<Eigen::Index>(row.size()));
            for (std::size_t i = 0; i < row.size(); ++i) {
                v[static_cast<Eigen::Index>(i)] = row[i].get<double>();
            }
            if (config_.dimension != 0 && v.size() != config_.dimension) {
                throw DimensionMismatch(config_.dimension, v.size());
            }
            if (!v.allFinite() || v.isZero(0.0)) {
                throw PreconditionError("embedding service returned a zero or non-finite vector");
            }
            out.push_back(std::move(v));
        }
    } catch (const nlohmann::json::exception& ex) {
        throw TransportError(std::string("malformed embedding response: ") + ex.what());
    }
    return out;
}

MemoEncoder::MemoEncoder(std::shared_ptr<const Encoder> inner) : inner_(std::move(inner)) {
    if (!inner_) {
        throw PreconditionError("MemoEncoder needs an inner encoder");
    }
}

EmbeddingVector MemoEncoder::encode(std::string_view text) const {
    std::string key(text);
    {
        std::lock_guard lock(mutex_);
        if (auto it = cache_.find(key); it != cache_.end()) {
            return it->second;
        }
    }
    EmbeddingVector v = inner_->encode(text);
    std::lock_guard lock(mutex_);
    return cache_.try_emplace(std::move(key), std::move(v)).first->second;
}

std::size_t MemoEncoder::cache_size() const {
    std::lock_guard lock(mutex_);
    return cache_.size();
}

}  // namespace amem
