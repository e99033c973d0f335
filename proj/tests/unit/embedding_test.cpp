#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <random>
#include <thread>

#include <nlohmann/json.hpp>

#include "amem/retrieval.hpp"
#include "amem/text.hpp"
#include "amem/vector.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals.
#include <httplib.h>

using namespace amem;
using amem::test::vec;

namespace {

// Written out independently of the library: FNV-1a 64 over the feature bytes,
// bucket h mod D, sign from bit 32.
std::vector<double> oracle_projection(const std::vector<std::string>& features, std::size_t dim) {
    std::vector<double> v(dim, 0.0);
    for (const auto& f : features) {
        std::uint64_t h = 14695981039346656037ULL;
        for (unsigned char c : f) {
            h = (h ^ c) * 1099511628211ULL;
        }
        v[h % dim] += ((h >> 32) & 1U) ? -1.0 : 1.0;
    }
    double n = 0;
    for (double x : v) n += x * x;
    for (double& x : v) x /= std::sqrt(n);
    return v;
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / std::sqrt(na * nb);
}

}  // namespace

TEST_SUITE("embedding") {

TEST_CASE("reference encoder is bitwise deterministic") {
    const ReferenceEncoder enc;
    const std::string t = "Interested in #action (2), #shooter (1). Sequence #action -> #shooter";
    const auto a = enc.encode(t);
    const auto b = ReferenceEncoder().encode(t);
    REQUIRE(a.size() == 64);
    CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * 64) == 0);
}

TEST_CASE("reference encoder output has unit norm") {
    const ReferenceEncoder enc(32);
    for (const char* t : {"a", "doom eternal", "Interested in #rpg (3).", "x y z w v u t s"}) {
        CHECK(std::abs(enc.encode(t).norm() - 1.0) < 1e-9);
    }
}

TEST_CASE("encode(a) and encode(b) differ, matching the hand-computed projection") {
    const ReferenceEncoder enc;
    const auto a = enc.encode("a");
    const auto b = enc.encode("b");
    const auto oa = oracle_projection({"u:a"}, 64);
    const auto ob = oracle_projection({"u:b"}, 64);
    for (int i = 0; i < 64; ++i) {
        CHECK(a[i] == oa[i]);
        CHECK(b[i] == ob[i]);
    }
    CHECK(oracle_cosine(oa, ob) < 1.0);
    CHECK(cosine_similarity(a, b) < 1.0);
}

TEST_CASE("multi-token text matches the oracle with unigrams and bigrams") {
    const ReferenceEncoder enc(64);
    const auto v = enc.encode("Doom, ETERNAL  doom!");
    const auto o = oracle_projection(
        {"u:doom", "u:eternal", "u:doom", "b:doom eternal", "b:eternal doom"}, 64);
    for (int i = 0; i < 64; ++i) CHECK(v[i] == doctest::Approx(o[i]).epsilon(1e-15));
}

TEST_CASE("empty or separator-only text is rejected") {
    const ReferenceEncoder enc;
    CHECK_THROWS_AS(enc.encode(""), PreconditionError);
    CHECK_THROWS_AS(enc.encode("  ,;! "), PreconditionError);
    CHECK_THROWS_AS(ReferenceEncoder(0), PreconditionError);
}

TEST_CASE("tokenizer and slug rules") {
    CHECK(alnum_tokens("Doom_Eternal: 2 GOTY!") ==
          std::vector<std::string>{"doom", "eternal", "2", "goty"});
    CHECK(slugify("Action & Adventure") == "action_adventure");
    CHECK(slugify("  Video Games ") == "video_games");
}

TEST_CASE("cosine similarity examples") {
    const auto v = vec({0.3, -1.2, 4.0});
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_similarity(vec({1, 0}), vec({0, 1})) == 0.0);
    CHECK(cosine_similarity(vec({1, 2, 2}), vec({2, 1, 2})) == doctest::Approx(8.0 / 9.0).epsilon(1e-15));
    CHECK_THROWS_AS(cosine_similarity(vec({1, 0}), vec({1, 0, 0})), DimensionMismatch);
    CHECK_THROWS_AS(cosine_similarity(vec({0, 0}), vec({1, 0})), PreconditionError);
}

TEST_CASE("cosine is symmetric and scale invariant") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> n;
    for (int trial = 0; trial < 200; ++trial) {
        EmbeddingVector a(8), b(8);
        for (int i = 0; i < 8; ++i) {
            a[i] = n(rng);
            b[i] = n(rng);
        }
        const double s = cosine_similarity(a, b);
        CHECK(s == doctest::Approx(cosine_similarity(b, a)).epsilon(1e-14));
        CHECK(s == doctest::Approx(cosine_similarity(EmbeddingVector(3.5 * a), b)).epsilon(1e-12));
        CHECK(s <= 1.0 + 1e-12);
        CHECK(s >= -1.0 - 1e-12);
    }
}

TEST_CASE("memo encoder caches by text and matches the inner encoder") {
    auto inner = std::make_shared<ReferenceEncoder>(16);
    MemoEncoder memo(inner);
    const auto a = memo.encode("doom eternal");
    const auto b = memo.encode("doom eternal");
    memo.encode("halo");
    CHECK(memo.cache_size() == 2);
    CHECK(a == b);
    CHECK(a == inner->encode("doom eternal"));
}

TEST_CASE("http encoder wire format, auth header and retry on 5xx") {
    httplib::Server server;
    int hits = 0;
    std::string seen_auth;
    nlohmann::json seen_body;
    server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        if (hits == 1) {
            res.status = 503;
            return;
        }
        seen_auth = req.get_header_value("Authorization");
        seen_body = nlohmann::json::parse(req.body);
        nlohmann::json out;
        out["embeddings"] = nlohmann::json::array();
        for (std::size_t i = 0; i < seen_body["texts"].size(); ++i) {
            out["embeddings"].push_back({1.0 + double(i), 2.0, 2.0});
        }
        res.set_content(out.dump(), "application/json");
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("AMEM_TEST_EMBED_KEY", "sekret", 1);
    HttpEncoderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/embed";
    cfg.model = "tiny";
    cfg.api_key_env = "AMEM_TEST_EMBED_KEY";
    cfg.initial_backoff = std::chrono::milliseconds(1);
    cfg.dimension = 3;
    HttpEncoder enc(cfg);
    const auto v = enc.encode("hello");
    CHECK(hits == 2);
    CHECK(seen_auth == "Bearer sekret");
    CHECK(seen_body["model"] == "tiny");
    CHECK(seen_body["texts"] == nlohmann::json::array({"hello"}));
    REQUIRE(v.size() == 3);
    CHECK(v[0] == 1.0);

    const std::vector<std::string> batch{"a", "b"};
    const auto vs = enc.encode_batch(batch);
    REQUIRE(vs.size() == 2);
    CHECK(vs[1][0] == 2.0);

    HttpEncoderConfig wrong = cfg;
    wrong.dimension = 5;
    CHECK_THROWS_AS(HttpEncoder(wrong).encode("x"), DimensionMismatch);

    server.stop();
    th.join();
}

TEST_CASE("http encoder surfaces transport failure after retries") {
    HttpEncoderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:1/embed";
    cfg.max_retries = 1;
    cfg.initial_backoff = std::chrono::milliseconds(1);
    cfg.timeout = std::chrono::milliseconds(200);
    CHECK_THROWS_AS(HttpEncoder(cfg).encode("x"), TransportError);
}

}  // TEST_SUITE
