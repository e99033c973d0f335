#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "amem/response_parsing.hpp"
#include "support.hpp"

// After Eigen: <resolv.h> defines a _res macro that clashes with Eigen internals.
#include <httplib.h>

using namespace amem;
using amem::test::item;
using amem::test::ScriptedProvider;
using nlohmann::json;

namespace {

const std::vector<Interaction> k_shooter_window{
    item("g1", "Doom Eternal", "Action", 1),
    item("g2", "Halo Infinite", "Shooter", 2),
    item("g3", "Doom 64", "Action", 3),
};

// What the mock produces for k_shooter_window, worked out by hand.
const PatternText k_shooter_pattern{
    "Interested in #action (2), #shooter (1).",
    "Sequence #action -> #shooter -> #action; keywords: doom, eternal, halo.",
};

AgentGateway scripted_gateway(std::shared_ptr<ScriptedProvider> p,
                              std::shared_ptr<AuditLog> audit = nullptr,
                              std::size_t retry_budget = 2) {
    GatewayOptions g;
    g.parse_retry_budget = retry_budget;
    return AgentGateway(std::move(p), PromptTemplates::builtin(), g, std::move(audit));
}

PolicyDecision update_decision() {
    const std::vector<double> s{0.7};
    return decide(s, {});
}

std::vector<ItemInfo> twenty_items() {
    std::vector<ItemInfo> out;
    for (int i = 0; i < 20; ++i) {
        out.push_back({"i" + std::to_string(i), "Title " + std::to_string(i), "Cat"});
    }
    return out;
}

std::string rank_reply(const std::vector<std::string>& ids) {
    return json{{"ranked_item_ids", ids}, {"reasoning", "r"}}.dump();
}

std::vector<std::string> ids_of(const std::vector<ItemInfo>& items) {
    std::vector<std::string> out;
    for (const auto& i : items) out.push_back(i.item_id);
    return out;
}

}  // namespace

TEST_SUITE("agent_gateway") {

TEST_CASE("mock extraction follows the category-multiset rule") {
    const auto gw = test::mock_gateway();
    CHECK(gw->extract_pattern(k_shooter_window) == k_shooter_pattern);
}

TEST_CASE("mock extraction is deterministic") {
    const auto gw = test::mock_gateway();
    CHECK(gw->extract_pattern(k_shooter_window) == gw->extract_pattern(k_shooter_window));
}

TEST_CASE("extraction without keywords omits the clause") {
    const auto gw = test::mock_gateway();
    const std::vector<Interaction> w{item("x", "Q", "Video Games", 0)};
    CHECK(gw->extract_pattern(w) ==
          PatternText{"Interested in #video_games (1).", "Sequence #video_games."});
}

TEST_CASE("empty title is rejected before any provider call") {
    auto p = std::make_shared<ScriptedProvider>();
    const auto gw = scripted_gateway(p);
    std::vector<Interaction> w = k_shooter_window;
    w[1].title.clear();
    CHECK_THROWS_AS(gw.extract_pattern(w), PreconditionError);
    CHECK(p->requests().empty());
    const std::vector<Interaction> too_long{w[0], w[0], w[0], w[0]};
    CHECK_THROWS_AS(gw.extract_pattern(too_long), PreconditionError);
    CHECK(p->requests().empty());
}

TEST_CASE("extraction prompt carries the window as indented JSON") {
    auto p = std::make_shared<ScriptedProvider>(std::make_shared<MockProvider>());
    const auto gw = scripted_gateway(p);
    gw.extract_pattern(k_shooter_window);
    const auto req = p->requests().at(0);
    CHECK(req.prompt.find("{interaction_summary}") == std::string::npos);
    CHECK(req.prompt.find("    \"category\": \"Action\",\n    \"title\": \"Doom Eternal\"") !=
          std::string::npos);
}

TEST_CASE("empty candidate list links nothing without a provider call") {
    auto p = std::make_shared<ScriptedProvider>();
    const auto gw = scripted_gateway(p);
    const auto v = gw.validate_links(k_shooter_pattern, {}, update_decision());
    CHECK_FALSE(v.should_link);
    CHECK(v.linked_ids.empty());
    CHECK(p->requests().empty());
}

TEST_CASE("mock links exactly the candidates sharing the dominant tag") {
    const auto gw = test::mock_gateway();
    const std::vector<LinkCandidate> c{
        {3, 0.80, {"Interested in #action (3).", "Sequence #action."}},
        {5, 0.75, {"Interested in #racing (1).", "Sequence #racing."}},
        {7, 0.70, {"Interested in #shooter (1), #action (1).", "Sequence #shooter -> #action."}},
        {9, 0.60, {"Likes #strategy.", "Then #action again."}},
    };
    const auto v = gw->validate_links(k_shooter_pattern, c, update_decision());
    CHECK(v.should_link);
    CHECK(v.linked_ids == std::vector<MemoryId>{3, 7, 9});
}

TEST_CASE("link-all mock links everything") {
    const auto gw = test::mock_gateway({MockRankMode::Overlap, true});
    const std::vector<LinkCandidate> c{{1, 0.8, {"a", "b"}}, {2, 0.7, {"c", "d"}}};
    CHECK(gw->validate_links(k_shooter_pattern, c, update_decision()).linked_ids ==
          std::vector<MemoryId>{1, 2});
}

TEST_CASE("link verdict drops ids that were not presented") {
    auto p = std::make_shared<ScriptedProvider>();
    p->push(TemplateId::Link,
            R"({"should_link": true, "linked_thought_ids": [2, 99, "4", 2], "reasoning": "x"})");
    const auto gw = scripted_gateway(p);
    const std::vector<LinkCandidate> c{{2, 0.8, {"a", "b"}}, {4, 0.7, {"c", "d"}}};
    const auto v = gw.validate_links(k_shooter_pattern, c, update_decision());
    CHECK(v.should_link);
    CHECK(v.linked_ids == std::vector<MemoryId>{2, 4});
    CHECK(v.dropped == 2);
    CHECK(v.reasoning == "x");
}

TEST_CASE("should_link=false clears the list") {
    auto p = std::make_shared<ScriptedProvider>();
    p->push(TemplateId::Link, R"({"should_link": false, "linked_thought_ids": [2]})");
    const auto gw = scripted_gateway(p);
    const std::vector<LinkCandidate> c{{2, 0.8, {"a", "b"}}};
    const auto v = gw.validate_links(k_shooter_pattern, c, update_decision());
    CHECK_FALSE(v.should_link);
    CHECK(v.linked_ids.empty());
}

TEST_CASE("link prompt carries the policy strategy") {
    auto p = std::make_shared<ScriptedProvider>(std::make_shared<MockProvider>());
    const auto gw = scripted_gateway(p);
    const std::vector<LinkCandidate> c{{2, 0.8, {"a", "b"}}};
    gw.validate_links(k_shooter_pattern, c, update_decision());
    const auto req = p->requests().at(0);
    CHECK(req.inputs["nearest_info"]["strategy"] == "UPDATE_AND_STORE");
    CHECK(req.prompt.find("\"strategy\": \"UPDATE_AND_STORE\"") != std::string::npos);
    CHECK(req.prompt.find(k_shooter_pattern.behavior_explanation) != std::string::npos);
}

TEST_CASE("should_evolve=false yields no updates") {
    auto p = std::make_shared<ScriptedProvider>();
    p->push(TemplateId::Evolve, R"({"should_evolve": false, "updates": [{"thought_id": 0}]})");
    const auto gw = scripted_gateway(p);
    MemoryEntry e;
    e.pattern = {"x", "y"};
    const std::vector<MemoryEntry> linked{e};
    const auto v = gw.evolve_memories(k_shooter_pattern, linked);
    CHECK_FALSE(v.should_evolve);
    CHECK(v.updates.empty());
}

TEST_CASE("mock evolution appends the missing tags") {
    const auto gw = test::mock_gateway();
    MemoryEntry a;
    a.id = 4;
    a.pattern = {"Interested in #action (1).", "Sequence #action."};
    MemoryEntry b;
    b.id = 6;
    b.pattern = {"Interested in #action (1), #shooter (1).", "Sequence #shooter -> #action."};
    MemoryEntry c;
    c.id = 8;
    c.pattern = {"Interested in #rpg (2).", "Sequence #rpg -> #rpg."};
    const std::vector<MemoryEntry> linked{a, b, c};
    const auto v = gw->evolve_memories(k_shooter_pattern, linked);
    REQUIRE(v.updates.size() == 3);
    CHECK(v.updates[0].id == 4);
    CHECK_FALSE(v.updates[0].behavior_explanation);
    CHECK(v.updates[0].pattern_description == std::optional<std::string>("Sequence #action. Also #shooter."));
    CHECK(v.updates[1].id == 6);
    CHECK_FALSE(v.updates[1].changes_text());
    CHECK(v.updates[2].pattern_description ==
          std::optional<std::string>("Sequence #rpg -> #rpg. Also #action #shooter."));
}

TEST_CASE("evolution verdict drops unknown and duplicate ids") {
    auto p = std::make_shared<ScriptedProvider>();
    p->push(TemplateId::Evolve, R"({"should_evolve": true, "updates": [
        {"thought_id": 1, "behavior_explanation": "B", "pattern_description": null},
        {"thought_id": 1, "behavior_explanation": "again"},
        {"thought_id": 42, "pattern_description": "ghost"}]})");
    const auto gw = scripted_gateway(p);
    MemoryEntry e;
    e.id = 1;
    e.pattern = {"x", "y"};
    const std::vector<MemoryEntry> linked{e};
    const auto v = gw.evolve_memories(k_shooter_pattern, linked);
    REQUIRE(v.updates.size() == 1);
    CHECK(v.updates[0].behavior_explanation == std::optional<std::string>("B"));
    CHECK_FALSE(v.updates[0].pattern_description);
    CHECK(v.dropped == 2);
}

TEST_CASE("oracle mock ranks the ground truth first, adversarial last") {
    const auto items = twenty_items();
    const std::vector<Interaction> hist{item("h", "Title 3", "Cat", 0)};
    const auto oracle = test::mock_gateway({MockRankMode::Oracle, false});
    CHECK(oracle->rank_candidates(hist, {}, items, std::string("i13")).ranked_ids.front() == "i13");
    const auto adv = test::mock_gateway({MockRankMode::Adversarial, false});
    CHECK(adv->rank_candidates(hist, {}, items, std::string("i3")).ranked_ids.back() == "i3");
}

TEST_CASE("oracle hint never reaches the prompt text") {
    auto p = std::make_shared<ScriptedProvider>(
        std::make_shared<MockProvider>(MockOptions{MockRankMode::Oracle, false}));
    const auto gw = scripted_gateway(p);
    auto items = twenty_items();
    items[7].item_id = "SECRET_GT";
    gw.rank_candidates({}, {}, items, std::string("i5"));
    const auto req = p->requests().at(0);
    CHECK(req.inputs["oracle_hint"] == "i5");
    CHECK(req.prompt.find("\"i5\"") != std::string::npos);  // as a candidate only
    CHECK(req.prompt.find("oracle") == std::string::npos);
}

TEST_CASE("ranking with 20 valid ids is passed through unchanged") {
    auto p = std::make_shared<ScriptedProvider>();
    const auto items = twenty_items();
    auto order = ids_of(items);
    std::reverse(order.begin(), order.end());
    p->push(TemplateId::Rank, rank_reply(order));
    const auto r = scripted_gateway(p).rank_candidates({}, {}, items);
    CHECK(r.ranked_ids == order);
    CHECK_FALSE(r.repairs.any());
}

TEST_CASE("omitted ids are appended in candidate order") {
    auto p = std::make_shared<ScriptedProvider>();
    const auto items = twenty_items();
    auto order = ids_of(items);
    std::reverse(order.begin(), order.end());
    // drop i4 and i11
    order.erase(std::remove(order.begin(), order.end(), "i4"), order.end());
    order.erase(std::remove(order.begin(), order.end(), "i11"), order.end());
    p->push(TemplateId::Rank, rank_reply(order));
    const auto r = scripted_gateway(p).rank_candidates({}, {}, items);
    REQUIRE(r.ranked_ids.size() == 20);
    CHECK(r.ranked_ids[18] == "i4");
    CHECK(r.ranked_ids[19] == "i11");
    CHECK(r.repairs.omitted == 2);
}

TEST_CASE("repair handles duplicates, hallucinations and omissions together") {
    const std::vector<std::string> cands{"a", "b", "c", "d"};
    const std::vector<std::string> proposed{"c", "zz", "c", "a", "yy", "a"};
    RepairStats st;
    CHECK(repair_ranking(proposed, cands, st) == std::vector<std::string>{"c", "a", "b", "d"});
    CHECK(st.duplicates == 2);
    CHECK(st.hallucinated == 2);
    CHECK(st.omitted == 2);
}

TEST_CASE("numeric ranked ids are read as strings") {
    auto p = std::make_shared<ScriptedProvider>();
    p->push(TemplateId::Rank, R"({"ranked_item_ids": [2, 1]})");
    const std::vector<ItemInfo> items{{"1", "t", "c"}, {"2", "u", "c"}};
    CHECK(scripted_gateway(p).rank_candidates({}, {}, items).ranked_ids ==
          std::vector<std::string>{"2", "1"});
}

TEST_CASE("fenced JSON and prose-wrapped JSON are parsed") {
    const auto fenced = "```json\n{\"behavior_explanation\": \"b\", \"pattern_description\": \"p\"}\n```";
    CHECK(parse_agent_response(fenced, schemas::extraction())["pattern_description"] == "p");
    const auto prose =
        "Sure! Here is the analysis {as requested}:\n{\"behavior_explanation\": \"b {x}\", "
        "\"pattern_description\": \"p \\\"q\\\" }\"}\nHope that helps.";
    const auto j = parse_agent_response(prose, schemas::extraction());
    CHECK(j["behavior_explanation"] == "b {x}");
    CHECK(j["pattern_description"] == "p \"q\" }");
}

TEST_CASE("schema violations name the field") {
    try {
        parse_agent_response(R"({"behavior_explanation": "b"})", schemas::extraction());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.field() == "pattern_description");
    }
    try {
        parse_agent_response(R"({"should_link": "yes", "linked_thought_ids": []})", schemas::link());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.field() == "should_link");
    }
    try {
        parse_agent_response("no json here", schemas::ranking());
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.field().empty());
        CHECK(e.raw_response() == "no json here");
    }
}

TEST_CASE("parse failure re-prompts with a JSON reminder then succeeds") {
    auto p = std::make_shared<ScriptedProvider>();
    p->push(TemplateId::Extract, "I think they like shooters.");
    p->push(TemplateId::Extract, R"({"behavior_explanation": "b", "pattern_description": "p"})");
    auto audit = std::make_shared<AuditLog>();
    const auto gw = scripted_gateway(p, audit);
    CHECK(gw.extract_pattern(k_shooter_window) == PatternText{"b", "p"});
    const auto reqs = p->requests();
    REQUIRE(reqs.size() == 2);
    CHECK(reqs[1].attempt == 1);
    CHECK(reqs[1].prompt == reqs[0].prompt + "\n\nReturn ONLY valid JSON.");
    const auto recs = audit->records();
    REQUIRE(recs.size() == 2);
    CHECK(recs[0].outcome.rfind("parse_error", 0) == 0);
    CHECK(recs[0].raw_response == "I think they like shooters.");
    CHECK(recs[1].outcome == "ok");
    CHECK(recs[1].template_hash == PromptTemplates::builtin().hash(TemplateId::Extract));
}

TEST_CASE("missing field after the retry budget is a parse error naming it") {
    auto p = std::make_shared<ScriptedProvider>();
    for (int i = 0; i < 3; ++i) {
        p->push(TemplateId::Extract, R"({"behavior_explanation": "b"})");
    }
    const auto gw = scripted_gateway(p);
    try {
        gw.extract_pattern(k_shooter_window);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.field() == "pattern_description");
        CHECK(e.raw_response() == R"({"behavior_explanation": "b"})");
    }
    CHECK(p->calls(TemplateId::Extract) == 3);
}

TEST_CASE("transport errors are audited and rethrown") {
    auto p = std::make_shared<ScriptedProvider>();  // no replies, no fallback
    auto audit = std::make_shared<AuditLog>();
    const auto gw = scripted_gateway(p, audit);
    CHECK_THROWS_AS(gw.extract_pattern(k_shooter_window), TransportError);
    REQUIRE(audit->size() == 1);
    CHECK(audit->records()[0].outcome.rfind("transport_error", 0) == 0);
}

TEST_CASE("audit log writes one JSON object per call") {
    auto audit = std::make_shared<AuditLog>();
    const auto gw = test::mock_gateway({}, audit);
    gw->extract_pattern(k_shooter_window);
    gw->extract_pattern(k_shooter_window);
    const auto path = std::filesystem::temp_directory_path() / "amem_audit_test.jsonl";
    audit->write_jsonl(path);
    std::ifstream in(path);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        const auto j = json::parse(line);
        CHECK(j["template"] == "extract");
        CHECK(j["outcome"] == "ok");
        ++n;
    }
    CHECK(n == 2);
    CHECK(audit->call_counts().at("extract") == 2);
    std::filesystem::remove(path);
}

TEST_CASE("built-in templates equal the shipped template files") {
    const auto builtin = PromptTemplates::builtin();
    const auto disk = PromptTemplates::from_directory(AMEM_TEMPLATE_DIR);
    for (TemplateId id : k_all_templates) {
        CHECK(builtin.text(id) == disk.text(id));
        CHECK(builtin.hash(id).size() == 64);
        for (auto ph : placeholders_of(id)) {
            CHECK(builtin.text(id).find("{" + std::string(ph) + "}") != std::string::npos);
        }
    }
    CHECK(builtin.text(TemplateId::Rank).find("Collaborative Memory Insights") != std::string::npos);
}

TEST_CASE("render substitutes declared placeholders only, once") {
    const auto t = PromptTemplates::builtin();
    const auto out = t.render(TemplateId::Extract, {{"interaction_summary", "{interaction_summary} X"}});
    CHECK(out.find("{interaction_summary} X") != std::string::npos);
    CHECK_THROWS_AS(t.render(TemplateId::Link, {{"new_behavior", "b"}}), PreconditionError);
}

TEST_CASE("template directory missing a placeholder is rejected") {
    const auto dir = std::filesystem::temp_directory_path() / "amem_bad_templates";
    std::filesystem::create_directories(dir);
    for (TemplateId id : k_all_templates) {
        std::filesystem::copy_file(std::filesystem::path(AMEM_TEMPLATE_DIR) / (std::string(to_string(id)) + ".tmpl"),
                                   dir / (std::string(to_string(id)) + ".tmpl"),
                                   std::filesystem::copy_options::overwrite_existing);
    }
    std::ofstream(dir / "rank.tmpl") << "rank these: {candidate_info}";
    CHECK_THROWS_AS(PromptTemplates::from_directory(dir), PreconditionError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("http provider wire format and retries") {
    httplib::Server server;
    int hits = 0;
    json seen;
    std::string auth;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        ++hits;
        if (hits == 1) {
            res.status = 429;
            return;
        }
        seen = json::parse(req.body);
        auth = req.get_header_value("Authorization");
        const json reply = {{"behavior_explanation", "b"}, {"pattern_description", "p"}};
        res.set_content(json{{"choices", {{{"message", {{"role", "assistant"},
                                                        {"content", "```json\n" + reply.dump() + "\n```"}}}}}}}
                            .dump(),
                        "application/json");
    });
    server.Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread th([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    ::setenv("AMEM_TEST_LLM_KEY", "k-123", 1);
    HttpProviderConfig cfg;
    cfg.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
    cfg.model = "some-model";
    cfg.api_key_env = "AMEM_TEST_LLM_KEY";
    cfg.initial_backoff = std::chrono::milliseconds(1);
    AgentGateway gw(std::make_shared<HttpProvider>(cfg), PromptTemplates::builtin());
    CHECK(gw.extract_pattern(k_shooter_window) == PatternText{"b", "p"});
    CHECK(hits == 2);
    CHECK(auth == "Bearer k-123");
    CHECK(seen["model"] == "some-model");
    CHECK(seen["temperature"] == 0.0);
    CHECK(seen["messages"][0]["role"] == "user");
    CHECK(seen["messages"][0]["content"].get<std::string>().find("Doom Eternal") != std::string::npos);

    hits = 0;
    HttpProviderConfig bad = cfg;
    bad.endpoint = "http://127.0.0.1:" + std::to_string(port) + "/bad";
    AgentGateway gw_bad(std::make_shared<HttpProvider>(bad), PromptTemplates::builtin());
    CHECK_THROWS_AS(gw_bad.extract_pattern(k_shooter_window), TransportError);
    CHECK(hits == 1);  // 4xx other than 429 is not retried

    server.stop();
    th.join();
}

}  // TEST_SUITE
