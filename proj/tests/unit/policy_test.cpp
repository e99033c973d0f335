#include <doctest.h>

#include <algorithm>
#include <random>

#include "amem/policy.hpp"
#include "amem/retrieval.hpp"
#include "support.hpp"

using namespace amem;
using amem::test::vec;

namespace {

PolicyDecision run(std::vector<double> s, Thresholds t = {}) { return decide(s, t); }

std::vector<ScoredNeighbor> exhaustive(const MemoryPool& pool, const EmbeddingVector& q,
                                       std::size_t k) {
    std::vector<ScoredNeighbor> all;
    for (const auto& e : pool) {
        all.push_back({e.id, e.embedding.dot(q) / (e.embedding.norm() * q.norm())});
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) {
        if (a.score > b.score) return true;
        if (a.score < b.score) return false;
        return a.id < b.id;
    });
    if (all.size() > k) all.resize(k);
    return all;
}

MemoryPool pool_of(const std::vector<EmbeddingVector>& vs) {
    MemoryPool pool;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        pool.insert({"b" + std::to_string(i), "p"}, vs[i], {"u", i});
    }
    return pool;
}

}  // namespace

TEST_SUITE("similarity_policy") {

TEST_CASE("score distribution: four high and one medium") {
    const std::vector<double> s{0.95, 0.93, 0.92, 0.91, 0.60};
    const auto d = score_distribution(s, {});
    CHECK(d.p_high == doctest::Approx(0.8));
    CHECK(d.p_medium == doctest::Approx(0.2));
    CHECK(d.p_low == 0.0);
    CHECK(d.s_max == 0.95);
    CHECK(d.k_effective == 5);
}

TEST_CASE("score distribution: one high and four low") {
    const std::vector<double> s{0.95, 0.50, 0.40, 0.30, 0.20};
    const auto d = score_distribution(s, {});
    CHECK(d.p_high == doctest::Approx(0.2));
    CHECK(d.p_medium == 0.0);
    CHECK(d.p_low == doctest::Approx(0.8));
}

TEST_CASE("scores equal to tau_high count as high; equal to tau_low count as medium") {
    const std::vector<double> hi{0.9, 0.9, 0.9};
    CHECK(score_distribution(hi, {}).p_high == 1.0);
    const std::vector<double> lo{0.55, 0.55};
    const auto d = score_distribution(lo, {});
    CHECK(d.p_medium == 1.0);
    CHECK(d.p_low == 0.0);
}

TEST_CASE("proportions sum to one") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> s(1 + trial % 10);
        for (double& x : s) x = u(rng);
        const auto d = score_distribution(s, {});
        CHECK(d.p_high + d.p_medium + d.p_low == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("decide: high mass gives UPDATE_ONLY") {
    const auto d = run({0.95, 0.93, 0.92, 0.91, 0.60});
    CHECK(d.strategy == Strategy::UpdateOnly);
    CHECK(d.do_update);
    CHECK_FALSE(d.do_store);
}

TEST_CASE("decide: one outlier over mostly low gives STORE_ONLY") {
    const auto d = run({0.95, 0.50, 0.40, 0.30, 0.20});
    CHECK(d.strategy == Strategy::StoreOnly);
    CHECK_FALSE(d.do_update);
    CHECK(d.do_store);
}

TEST_CASE("decide: max below tau_low gives STORE_ONLY") {
    CHECK(run({0.30, 0.20, 0.10}).strategy == Strategy::StoreOnly);
}

TEST_CASE("decide: max in the middle band gives UPDATE_AND_STORE") {
    const auto d = run({0.70, 0.60, 0.20});
    CHECK(d.strategy == Strategy::UpdateAndStore);
    CHECK(d.do_update);
    CHECK(d.do_store);
}

TEST_CASE("decide: high max without a dominant bucket falls through") {
    CHECK(run({0.95, 0.92, 0.60, 0.50, 0.40}).strategy == Strategy::UpdateAndStore);
}

TEST_CASE("decide: empty score list bootstraps to STORE_ONLY") {
    const auto d = run({});
    CHECK(d.strategy == Strategy::StoreOnly);
    CHECK(d.evidence.k_effective == 0);
    CHECK(decide_unvalidated(std::vector<double>{}, {}).strategy == Strategy::StoreOnly);
    CHECK(decide_unvalidated(std::vector<double>{0.1}, {}).strategy == Strategy::UpdateAndStore);
}

TEST_CASE("decide: threshold and score validation") {
    CHECK_THROWS_AS(run({0.5}, {0.9, 0.55}), PreconditionError);
    CHECK_THROWS_AS(run({0.5}, {0.0, 0.5}), PreconditionError);
    CHECK_THROWS_AS(run({0.5}, {0.5, 1.0}), PreconditionError);
    CHECK_THROWS_AS(run({1.5}), PreconditionError);
    CHECK_THROWS_AS(run({std::nan("")}), PreconditionError);
    CHECK(run({1.0 + 1e-12}).strategy == Strategy::UpdateOnly);
}

TEST_CASE("strategy names round-trip") {
    for (auto s : {Strategy::StoreOnly, Strategy::UpdateAndStore, Strategy::UpdateOnly}) {
        CHECK(strategy_from_string(to_string(s)) == s);
    }
    CHECK(to_string(Strategy::UpdateAndStore) == "UPDATE_AND_STORE");
    CHECK_THROWS(strategy_from_string("MAYBE"));
}

TEST_CASE("update candidates keep neighbours at or above tau_low") {
    const std::vector<ScoredNeighbor> n{{4, 0.7}, {1, 0.6}, {2, 0.2}};
    const auto d = decide(scores_of(n), {});
    const auto kept = update_candidates(n, d, {});
    CHECK(kept == std::vector<ScoredNeighbor>{{4, 0.7}, {1, 0.6}});

    const std::vector<ScoredNeighbor> all_high{{0, 0.8}, {1, 0.55}};
    CHECK(update_candidates(all_high, decide(scores_of(all_high), {}), {}) == all_high);

    const std::vector<ScoredNeighbor> low{{0, 0.3}};
    CHECK_THROWS_AS(update_candidates(low, decide(scores_of(low), {}), {}), PreconditionError);
}

TEST_CASE("top_k returns the whole pool when k exceeds it") {
    const auto pool = pool_of({vec({1, 0}), vec({0, 1}), vec({1, 1})});
    CHECK(top_k(pool, vec({1, 0}), 5).size() == 3);
}

TEST_CASE("top_k breaks equal scores by lower id") {
    const auto pool = pool_of({vec({0, 1}), vec({1, 0}), vec({2, 0}), vec({3, 0})});
    const auto r = top_k(pool, vec({1, 0}), 2);
    REQUIRE(r.size() == 2);
    CHECK(r[0].id == 1);
    CHECK(r[1].id == 2);
}

TEST_CASE("top_k matches an exhaustive sort on a random 50-entry pool") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n;
    std::vector<EmbeddingVector> vs;
    for (int i = 0; i < 50; ++i) {
        EmbeddingVector v(64);
        for (int j = 0; j < 64; ++j) v[j] = n(rng);
        vs.push_back(v);
    }
    const auto pool = pool_of(vs);
    EmbeddingVector q(64);
    for (int j = 0; j < 64; ++j) q[j] = n(rng);
    CHECK(top_k(pool, q, 5) == exhaustive(pool, q, 5));
}

TEST_CASE("top_k edge cases") {
    MemoryPool empty;
    CHECK(top_k(empty, vec({1, 0}), 3).empty());
    const auto pool = pool_of({vec({1, 0})});
    CHECK_THROWS_AS(top_k(pool, vec({1, 0}), 0), PreconditionError);
    CHECK_THROWS_AS(top_k(pool, vec({1, 0, 0}), 1), DimensionMismatch);
}

}  // TEST_SUITE
