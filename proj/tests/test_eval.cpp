#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "socbench/eval.hpp"

using namespace socbench;

namespace {

std::string fixture(const std::string& name) { return std::string(SOCBENCH_FIXTURES) + "/" + name; }

const EvalDataset& harness_data() {
    static const EvalDataset d = [] {
        EvalDataset d;
        std::ifstream a(fixture("harness_ir.jsonl")), b(fixture("harness_iip.jsonl"));
        load_dataset_jsonl(a, d);
        load_dataset_jsonl(b, d);
        return d;
    }();
    return d;
}

std::vector<nlohmann::json> harness_responses() {
    std::ifstream in(fixture("harness_responses.jsonl"));
    std::vector<nlohmann::json> out;
    std::string line;
    while (std::getline(in, line)) out.push_back(nlohmann::json::parse(line));
    return out;
}

template <class Inst>
std::vector<Inst> subset(const std::vector<Inst>& all, const std::vector<nlohmann::json>& resp, int shots) {
    std::set<std::string> ids;
    for (auto& r : resp)
        if (r["shots"] == shots) ids.insert(r["item_id"].get<std::string>());
    std::vector<Inst> out;
    for (auto& i : all)
        if (ids.count(i.id)) out.push_back(i);
    return out;
}

PreferenceLabel L(std::string_view s) { return parse_label(s); }

// Random answer shapes: an ordered partition of a random subset, the rest undetermined.
PreferenceLabel random_label(std::mt19937_64& rng) {
    std::vector<char> t(kTruckLabels.begin(), kTruckLabels.end());
    std::shuffle(t.begin(), t.end(), rng);
    size_t covered = 1 + rng() % 5;
    PreferenceLabel l;
    for (size_t i = 0; i < covered;) {
        size_t g = 1 + rng() % (covered - i);
        TruckSet s;
        for (size_t k = 0; k < g; ++k) s.insert(t[i + k]);
        l.chain.push_back(s);
        i += g;
    }
    for (size_t i = covered; i < 5; ++i) l.undetermined.insert(t[i]);
    return l;
}

} // namespace

TEST(ParseIrAnswer, AnswerSheetExamples) {
    auto a = parse_ir_answer("N>Y>{X,Z,M}");
    ASSERT_TRUE(a.ok());
    EXPECT_EQ(a.label->chain, (std::vector<TruckSet>{TruckSet{'N'}, TruckSet{'Y'}, TruckSet{'X', 'Z', 'M'}}));
    EXPECT_TRUE(a.label->undetermined.empty());

    auto b = parse_ir_answer("Z > {M,X,Y}, {N}");
    ASSERT_TRUE(b.ok());
    EXPECT_EQ(b.label->chain, (std::vector<TruckSet>{TruckSet{'Z'}, TruckSet{'M', 'X', 'Y'}}));
    EXPECT_EQ(b.label->undetermined, TruckSet{'N'});

    auto c = parse_ir_answer("the answer is probably X>Y>Z>M>N.");
    ASSERT_TRUE(c.ok());
    EXPECT_EQ(*c.label, L("X>Y>Z>M>N"));
    EXPECT_EQ(c.raw_text, "the answer is probably X>Y>Z>M>N.");
}

TEST(ParseIrAnswer, LastExpressionWinsAndProseIsSkipped) {
    EXPECT_EQ(*parse_ir_answer("Maybe Y>X>Z>M>N? No: X > {M,N,Y,Z}").label, L("X > {M,N,Y,Z}"));
    // Trailing prose mentioning a truck does not override the expression.
    EXPECT_EQ(*parse_ir_answer("X>Y>Z>M>N. Note that M is close.").label, L("X>Y>Z>M>N"));
    EXPECT_EQ(*parse_ir_answer("Y>{X,Z}").label, L("Y>{X,Z}, {M,N}"));
    EXPECT_EQ(*parse_ir_answer("  Y ").label, L("Y, {X,Z,M,N}"));
    EXPECT_FALSE(parse_ir_answer("").ok());
    EXPECT_FALSE(parse_ir_answer("Mexico > Nepal").ok());
    EXPECT_FALSE(parse_ir_answer("Z>>M").ok());
    EXPECT_FALSE(parse_ir_answer("X>X>Y").ok());
    EXPECT_FALSE(parse_ir_answer("I do not know").error.empty());
}

TEST(ScoreIr, RuleExamples) {
    auto last = L("Y>{X,Z,M},{N}");
    EXPECT_TRUE(score_ir(last, last, 'N', Criterion::Strict));
    auto p = L("Y>{X,Z,M,N}");
    EXPECT_TRUE(score_ir(p, last, 'N', Criterion::Visible));
    EXPECT_FALSE(score_ir(p, last, 'N', Criterion::Strict));
    auto inter = L("X>{M,N,Y,Z}");
    EXPECT_TRUE(score_ir(L("X>Y>Z>M>N"), inter, 'N', Criterion::Favorite));
    EXPECT_FALSE(score_ir(L("X>Y>Z>M>N"), inter, 'N', Criterion::Strict));
    EXPECT_FALSE(score_ir(L("X>Y>Z>M>N"), inter, 'N', Criterion::Visible));
    // Possible-top sets: Last {pick, absent}, Previsited {absent}.
    EXPECT_TRUE(score_ir(L("Y>{X,Z,M}, {N}"), L("Y>{M,X,Z},{N}"), 'N', Criterion::Favorite));
    EXPECT_TRUE(score_ir(L("N>{X,Y,Z,M}"), L("N>X>{Y,Z,M}"), 'N', Criterion::Favorite));
    EXPECT_FALSE(score_ir(L("Y>{X,Z,M,N}"), L("Z>{X,Y,M},{N}"), 'N', Criterion::Favorite));
}

TEST(ScoreIr, CriteriaAreMonotone) {
    std::mt19937_64 rng(17);
    auto& data = harness_data().ir;
    auto ir = generate_ir_dataset({10, 10, 10}, 3, 1);
    ir.insert(ir.end(), data.begin(), data.end());
    int strict = 0, visible = 0, favorite = 0;
    for (auto& inst : ir) {
        std::vector<PreferenceLabel> answers{inst.label, inst.label.without(inst.scene.absent)};
        for (int i = 0; i < 300; ++i) answers.push_back(random_label(rng));
        for (auto& a : answers) {
            if (a.covered() != TruckSet::all()) a.undetermined |= TruckSet::all() - a.covered();
            bool s = score_ir(a, inst.label, inst.scene.absent, Criterion::Strict);
            bool v = score_ir(a, inst.label, inst.scene.absent, Criterion::Visible);
            bool f = score_ir(a, inst.label, inst.scene.absent, Criterion::Favorite);
            EXPECT_TRUE(!s || v) << render_label(a) << " vs " << render_label(inst.label);
            EXPECT_TRUE(!v || f) << render_label(a) << " vs " << render_label(inst.label);
            strict += s;
            visible += v;
            favorite += f;
        }
    }
    EXPECT_GT(strict, 0);
    EXPECT_GT(visible, strict);
    EXPECT_GT(favorite, visible);
}

TEST(ParseIipAnswer, Forms) {
    EXPECT_EQ(parse_iip_answer("Route C"), 'C');
    EXPECT_EQ(parse_iip_answer("A"), 'A');
    EXPECT_EQ(parse_iip_answer("(B)."), 'B');
    EXPECT_EQ(parse_iip_answer("Answer: D"), 'D');
    EXPECT_EQ(parse_iip_answer("A good pick is Route B, not Route C... final: Route D"), 'D');
    EXPECT_EQ(parse_iip_answer("A careful student takes C"), 'C');
    EXPECT_EQ(parse_iip_answer("Route E"), std::nullopt);
    EXPECT_EQ(parse_iip_answer("A student walks"), std::nullopt);
    EXPECT_EQ(parse_iip_answer(""), std::nullopt);
}

TEST(ScoreIip, ShufflingDoesNotChangeStyleDistribution) {
    auto data = harness_data().iip;
    std::vector<ItemResult> a, b;
    std::mt19937_64 rng(4);
    for (auto& inst : data) {
        RouteStyle wanted = kRouteStyles[rng() % 4];
        a.push_back(score_iip_response(inst, std::string("Route ") + inst.letter_of(wanted), 0));
        IipInstance re = inst;
        std::shuffle(re.shuffled_order.begin(), re.shuffled_order.end(), rng);
        b.push_back(score_iip_response(re, std::string("Route ") + re.letter_of(wanted), 0));
        EXPECT_EQ(a.back().style, wanted);
    }
    EXPECT_EQ(aggregate(a).iip, aggregate(b).iip);
}

TEST(EndpointConfig, ParsesAndRejectsSecrets) {
    auto c = parse_endpoint_config(
        "# comment\n[endpoint]\nbase_url = \"http://localhost:9\"\nmodel = \"gpt-4-0613\"\n"
        "temperature = 0.5 # inline\nsystem_prompt = \"be \\\"brief\\\"\"\nmax_attempts = 3\n");
    EXPECT_EQ(c.base_url, "http://localhost:9");
    EXPECT_EQ(c.model, "gpt-4-0613");
    EXPECT_EQ(c.temperature, 0.5);
    EXPECT_EQ(c.system_prompt, "be \"brief\"");
    EXPECT_EQ(c.max_attempts, 3);
    EXPECT_EQ(EndpointConfig{}.temperature, 0);
    EXPECT_TRUE(EndpointConfig{}.system_prompt.empty());
    EXPECT_THROW(parse_endpoint_config("api_key = \"sk-123\""), InputError);
    EXPECT_THROW(parse_endpoint_config("colour = \"red\""), InputError);
    EXPECT_THROW(parse_endpoint_config("model = gpt"), InputError);
    EXPECT_THROW(parse_endpoint_config("max_attempts = many"), InputError);
    EXPECT_THROW(parse_endpoint_config("base_url = \"ftp://x\""), InputError);
    EXPECT_THROW(parse_endpoint_config("[other]"), InputError);
}

TEST(LlmClient, EchoesScriptedAnswerAndSendsKeyOnlyInHeader) {
    MockLlmServer mock;
    mock.default_answer = "N>Y>{X,Z,M}";
    auto cfg = mock.config();
    cfg.api_key_env = "SOCBENCH_TEST_API_KEY";
    cfg.system_prompt = "sys";
    ::setenv("SOCBENCH_TEST_API_KEY", "sk-test-secret-123", 1);
    LlmClient client(cfg);
    ::unsetenv("SOCBENCH_TEST_API_KEY");
    auto c = client.complete("hello");
    EXPECT_EQ(c.text, "N>Y>{X,Z,M}");
    EXPECT_EQ(c.model, "mock-llm");
    ASSERT_EQ(c.attempts.size(), 1u);
    EXPECT_EQ(c.attempts[0].status, 200);
    EXPECT_FALSE(c.requested_at.empty());
    EXPECT_FALSE(c.received_at.empty());
    EXPECT_EQ(mock.last_authorization(), "Bearer sk-test-secret-123");
    auto req = mock.last_request();
    EXPECT_EQ(req["temperature"], 0);
    EXPECT_EQ(req["messages"][0]["content"], "sys");
    EXPECT_EQ(req["messages"][1]["content"], "hello");
    // The key never reaches anything that gets logged.
    EXPECT_EQ(cfg.to_json().dump().find("sk-test"), std::string::npos);
    mock.fail_next(401);
    try {
        client.complete("x");
        FAIL();
    } catch (const UpstreamFailure& e) {
        EXPECT_EQ(std::string(e.what()).find("sk-test"), std::string::npos);
        ASSERT_EQ(e.attempts().size(), 1u);  // not retried
        EXPECT_EQ(e.attempts()[0].status, 401);
    }
}

TEST(LlmClient, RetriesRateLimitTwiceThenSucceeds) {
    MockLlmServer mock;
    mock.default_answer = "Route B";
    mock.fail_next(429, 2);
    LlmClient client(mock.config());
    auto c = client.complete("p");
    EXPECT_EQ(c.text, "Route B");
    ASSERT_EQ(c.attempts.size(), 3u);
    EXPECT_EQ(c.attempts[0].status, 429);
    EXPECT_EQ(c.attempts[1].status, 429);
    EXPECT_EQ(c.attempts[2].status, 200);
    EXPECT_EQ(c.attempts[2].number, 3);
    EXPECT_EQ(mock.requests(), 3);
}

TEST(LlmClient, ServerErrorsExhaustAttempts) {
    MockLlmServer mock;
    mock.fail_next(503, 10);
    LlmClient client(mock.config());
    try {
        client.complete("p");
        FAIL();
    } catch (const UpstreamFailure& e) {
        EXPECT_EQ(e.attempts().size(), 4u);
        EXPECT_EQ(mock.requests(), 4);
    }
}

TEST(LlmClient, UnreachableHostFailsWithFullAttemptLog) {
    int port;
    {
        MockLlmServer gone;  // grab a free port, then release it
        port = gone.port();
    }
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    cfg.max_attempts = 3;
    cfg.backoff_ms = 1;
    cfg.timeout_s = 2;
    LlmClient client(cfg);
    try {
        client.complete("p");
        FAIL();
    } catch (const UpstreamFailure& e) {
        ASSERT_EQ(e.attempts().size(), 3u);
        for (int i = 0; i < 3; ++i) {
            EXPECT_EQ(e.attempts()[i].number, i + 1);
            EXPECT_EQ(e.attempts()[i].status, 0);
            EXPECT_NE(e.attempts()[i].error.find("transport"), std::string::npos);
        }
        EXPECT_NE(std::string(e.what()).find("attempt 3"), std::string::npos);
    }
}

TEST(LlmClient, MalformedBodyIsAnError) {
    httplib::Server srv;
    srv.Post("/v1/chat/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[]})", "application/json");
    });
    int port = srv.bind_to_any_port("127.0.0.1");
    std::thread t([&] { srv.listen_after_bind(); });
    srv.wait_until_ready();
    EndpointConfig cfg;
    cfg.base_url = "http://127.0.0.1:" + std::to_string(port);
    EXPECT_THROW(LlmClient(cfg).complete("p"), UpstreamError);
    srv.stop();
    t.join();
}

// The mock is scripted with the hand-tallied answers; the report must equal
// the hand-written table, and each item must score as annotated.
TEST(Harness, MockRoundTripMatchesHandTalliedFixture) {
    auto& data = harness_data();
    ASSERT_EQ(data.ir.size(), 20u);
    ASSERT_EQ(data.iip.size(), 20u);
    auto resp = harness_responses();
    MockLlmServer mock;
    std::map<std::string, nlohmann::json> by_id;
    for (auto& r : resp) {
        std::string id = r["item_id"];
        by_id[id] = r;
        int shots = r["shots"];
        std::string prompt;
        for (auto& i : data.ir)
            if (i.id == id) prompt = serialize_ir_prompt(i, shots);
        for (auto& i : data.iip)
            if (i.id == id) prompt = serialize_iip_prompt(i, shots);
        ASSERT_FALSE(prompt.empty()) << id;
        mock.script(prompt, r["raw_response"]);
    }
    LlmClient client(mock.config());
    std::vector<ItemResult> items;
    for (int shots : {0, 1}) {
        EvalOptions opt{shots, "mock", 3};
        auto a = run_eval(subset(data.ir, resp, shots), &client, opt);
        auto b = run_eval(subset(data.iip, resp, shots), &client, opt);
        items.insert(items.end(), a.items.begin(), a.items.end());
        items.insert(items.end(), b.items.begin(), b.items.end());
    }
    ASSERT_EQ(items.size(), 40u);

    // Per-item annotations, and an independent tally of them.
    std::map<std::pair<std::string, int>, std::map<std::string, int>> tally;
    for (auto& it : items) {
        auto& e = by_id.at(it.item_id)["expect"];
        EXPECT_EQ(it.raw_response, by_id[it.item_id]["raw_response"]);
        EXPECT_EQ(it.model, "mock-llm");
        EXPECT_EQ(it.prompt_hash.size(), 64u);
        for (const std::string& key : {kOverall, it.type}) {
            auto& t = tally[{it.task == Task::IR ? "ir:" + key : "iip:" + key, it.shots}];
            ++t["n"];
            if (it.task == Task::IR) {
                EXPECT_EQ(it.parsed_ok, e["parsed"].get<bool>()) << it.item_id;
                for (Criterion c : kCriteria) {
                    EXPECT_EQ(it.ir_scores[static_cast<int>(c)], e[to_string(c)].get<bool>()) << it.item_id << " " << to_string(c);
                    t[to_string(c)] += e[to_string(c)].get<bool>();
                }
                t["unparseable"] += !e["parsed"].get<bool>();
                EXPECT_TRUE(!it.ir_scores[2] || it.ir_scores[1]) << it.item_id;
                EXPECT_TRUE(!it.ir_scores[1] || it.ir_scores[0]) << it.item_id;
            } else {
                std::string want = e["style"].is_null() ? "Unparseable" : e["style"].get<std::string>();
                EXPECT_EQ(it.style ? to_string(*it.style) : "Unparseable", want) << it.item_id;
                ++t[want];
            }
        }
    }

    auto rep = aggregate(items);
    std::ifstream ef(fixture("harness_expected_report.json"));
    auto expected = nlohmann::json::parse(ef);
    ASSERT_EQ(rep.ir.size(), expected["ir"].size());
    ASSERT_EQ(rep.iip.size(), expected["iip"].size());
    for (auto& row : expected["ir"]) {
        std::pair<std::string, int> key{row["type"], row["shots"]};
        ASSERT_TRUE(rep.ir.count(key)) << key.first;
        auto& c = rep.ir.at(key);
        auto& t = tally[{"ir:" + key.first, key.second}];
        EXPECT_EQ(c.n, row["n"]);
        EXPECT_EQ(t["n"], row["n"]);
        EXPECT_EQ(c.unparseable, row["unparseable"]);
        EXPECT_EQ(t["unparseable"], row["unparseable"]);
        for (Criterion k : kCriteria) {
            EXPECT_EQ(c.correct[static_cast<int>(k)], row[to_string(k)]) << key.first << key.second << to_string(k);
            EXPECT_EQ(t[to_string(k)], row[to_string(k)]);
            EXPECT_DOUBLE_EQ(c.accuracy(k), row[to_string(k)].get<double>() / row["n"].get<double>());
        }
    }
    for (auto& row : expected["iip"]) {
        std::pair<std::string, int> key{row["type"], row["shots"]};
        ASSERT_TRUE(rep.iip.count(key)) << key.first;
        auto& c = rep.iip.at(key);
        auto& t = tally[{"iip:" + key.first, key.second}];
        EXPECT_EQ(c.n, row["n"]);
        for (int i = 0; i < 4; ++i) {
            EXPECT_EQ(c.counts[i], row[to_string(kRouteStyles[i])]) << key.first << key.second;
            EXPECT_EQ(t[to_string(kRouteStyles[i])], row[to_string(kRouteStyles[i])]);
        }
        EXPECT_EQ(c.unparseable, row["Unparseable"]);
        auto d = c.distribution();
        EXPECT_NEAR(d[0] + d[1] + d[2] + d[3] + d[4], 1.0, 1e-12);
    }

    // Replaying the same answers from a response file gives the same report.
    ResponseFile rf;
    for (auto& r : resp) rf.add(r["item_id"], r["shots"], r["raw_response"]);
    std::vector<ItemResult> replay;
    for (int shots : {0, 1}) {
        auto a = run_eval(subset(data.ir, resp, shots), &rf, {shots});
        auto b = run_eval(subset(data.iip, resp, shots), &rf, {shots});
        replay.insert(replay.end(), a.items.begin(), a.items.end());
        replay.insert(replay.end(), b.items.begin(), b.items.end());
    }
    EXPECT_EQ(aggregate(replay), rep);
}

TEST(Harness, AllCorrectAndAllShortest) {
    auto& data = harness_data();
    ResponseFile rf;
    for (auto& i : data.ir) rf.add(i.id, -1, render_label(i.label));
    for (auto& i : data.iip) rf.add(i.id, -1, std::string("Route ") + i.letter_of(RouteStyle::Shortest));
    for (int shots : {0, 1}) {
        auto ir = run_eval(data.ir, &rf, {shots});
        for (auto& [key, c] : ir.report.ir)
            for (Criterion k : kCriteria) EXPECT_EQ(c.accuracy(k), 1.0) << key.first;
        auto iip = run_eval(data.iip, &rf, {shots});
        for (auto& [key, c] : iip.report.iip) {
            auto d = c.distribution();
            EXPECT_EQ(d, (std::array<double, 5>{1, 0, 0, 0, 0})) << key.first;
        }
    }
    EXPECT_THROW(run_eval(data.ir, &rf, {4}), InputError);
    EXPECT_THROW(run_eval(data.iip, &rf, {2}), InputError);
    ResponseFile empty;
    EXPECT_THROW(run_eval(data.ir, &empty, {0}), InputError);
}

TEST(Harness, ScoringIsPureAndLogRescores) {
    auto& data = harness_data();
    auto resp = harness_responses();
    ResponseFile rf;
    for (auto& r : resp) rf.add(r["item_id"], r["shots"], r["raw_response"]);
    auto zero = subset(data.ir, resp, 0);
    auto a = run_eval(zero, &rf, {0, "h1"});
    auto b = run_eval(zero, &rf, {0, "h1", 4});
    EXPECT_EQ(a.report, b.report);
    std::stringstream log;
    for (auto& it : a.items) log << to_json(it).dump() << "\n";
    auto first = to_json(a.items[0]);
    for (auto key : {"item_id", "subject", "shots", "prompt_hash", "raw_response", "parsed", "scores", "timestamps"})
        EXPECT_TRUE(first.contains(key)) << key;
    EXPECT_EQ(first["subject"], "h1");
    auto again = rescore(log, data);
    EXPECT_EQ(aggregate(again), a.report);
    EXPECT_EQ(to_json(again[3]), to_json(a.items[3]));
    std::stringstream bad("{\"item_id\":\"nope\",\"raw_response\":\"X\"}\n");
    EXPECT_THROW(rescore(bad, data), InputError);
}

TEST(Report, JsonAndCsvShapes) {
    auto& data = harness_data();
    ResponseFile rf;
    for (auto& i : data.ir) rf.add(i.id, -1, "X>Y>Z>M>N");
    for (auto& i : data.iip) rf.add(i.id, -1, "Route A");
    auto r = aggregate(run_eval(data.ir, &rf, {0}).items);
    auto iip = run_eval(data.iip, &rf, {0}).items;
    auto rep = aggregate(iip);
    rep.ir = r.ir;
    auto j = to_json(rep);
    EXPECT_EQ(j["ir"].size(), 4u);   // Overall + three types
    EXPECT_EQ(j["iip"].size(), 5u);  // Overall + four types
    for (auto& row : j["iip"]) {
        double sum = 0;
        for (auto& [k, v] : row["distribution"].items()) sum += v.get<double>();
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
    for (auto& row : j["ir"])
        for (auto& [k, v] : row["accuracy"].items()) {
            EXPECT_GE(v.get<double>(), 0);
            EXPECT_LE(v.get<double>(), 1);
        }
    std::ostringstream csv;
    write_report_csv(rep, csv);
    auto text = csv.str();
    EXPECT_EQ(text.rfind("task,type,shots,metric,value,n\n", 0), 0u);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1 + 4 * 4 + 5 * 5);
}

TEST(FewShot, VariantsInsertFixedExamplesInOrder) {
    auto& data = harness_data().ir;
    auto k0 = few_shot_variants(data, 0);
    ASSERT_EQ(k0.size(), data.size());
    EXPECT_EQ(k0[0].prompt, serialize_ir_prompt(data[0]));
    auto count = [](const std::string& s, const std::string& what) {
        size_t n = 0;
        for (size_t p = s.find(what); p != std::string::npos; p = s.find(what, p + 1)) ++n;
        return n;
    };
    auto k1 = few_shot_variants(data, 1)[0].prompt;
    EXPECT_EQ(count(k1, "Answer 1:"), 1u);
    EXPECT_EQ(count(k1, "Answer 2:"), 0u);
    auto& ex = canonical_ir_examples();
    EXPECT_EQ(ex[0].type, IrType::Previsited);
    EXPECT_EQ(ex[1].type, IrType::Intermediate);
    EXPECT_EQ(ex[2].type, IrType::Last);
    auto k3 = few_shot_variants(data, 3)[0].prompt;
    size_t a1 = k3.find("Answer 1: \n" + render_label(ex[0].label));
    size_t a2 = k3.find("Answer 2: \n" + render_label(ex[1].label));
    size_t a3 = k3.find("Answer 3: \n" + render_label(ex[2].label));
    ASSERT_NE(a1, std::string::npos);
    ASSERT_NE(a2, std::string::npos);
    ASSERT_NE(a3, std::string::npos);
    EXPECT_LT(a1, a2);
    EXPECT_LT(a2, a3);
    EXPECT_THROW(few_shot_variants(data, 4), InputError);
}

TEST(Shortcut, IrFormat) {
    // Layout and opening trajectory lines of a published neutralized IR sample.
    IrScene s = make_ir_scene(parse_layout("*W*ZA\n*W***\n*X***\n*WWWM\n*Y***"));
    EXPECT_EQ(flatten_layout(s.scene), "*W*ZA*W****X****WWWM*Y***");
    auto t = build_trajectory(s, {{4, 0}, {4, 1}, {4, 2}}, 'Z');
    EXPECT_EQ(trajectory_line(t.steps[0], std::nullopt), "(4, 0) view Z; memory Z");
    EXPECT_EQ(trajectory_line(t.steps[1], std::nullopt), "(4, 1) view Z; memory Z");
    EXPECT_EQ(trajectory_line(t.steps[2], std::nullopt), "(4, 2) view M; memory Z,M");

    auto data = generate_ir_dataset({30, 12, 18}, 8, 1);
    auto out = export_shortcut_dataset(data, 5);
    ASSERT_EQ(out.size(), data.size());
    std::map<std::string, std::map<std::string, int>> per_type;
    for (size_t i = 0; i < out.size(); ++i) {
        auto& smp = out[i];
        EXPECT_EQ(smp.input.substr(0, 26), flatten_layout(data[i].scene.scene) + "\n");
        EXPECT_EQ(smp.input.find("campus"), std::string::npos);
        EXPECT_EQ(smp.input.find("Trajector"), std::string::npos);
        EXPECT_EQ(std::count(smp.input.begin(), smp.input.end(), '\n'), static_cast<long>(data[i].trajectory.steps.size()));
        EXPECT_NE(smp.input.rfind(std::string("; pick ") + data[i].trajectory.pick), std::string::npos);
        EXPECT_EQ(smp.target, render_label(data[i].label));
        ++per_type[smp.type][smp.split];
    }
    // Per type: round(n / 6) held out.
    EXPECT_EQ(per_type["Intermediate"]["test"], 5);
    EXPECT_EQ(per_type["Intermediate"]["train"], 25);
    EXPECT_EQ(per_type["Last"]["test"], 2);
    EXPECT_EQ(per_type["Previsited"]["test"], 3);
    auto again = export_shortcut_dataset(data, 5);
    for (size_t i = 0; i < out.size(); ++i) EXPECT_EQ(to_json(out[i]), to_json(again[i]));
    auto other = export_shortcut_dataset(data, 6);
    bool differs = false;
    for (size_t i = 0; i < out.size(); ++i) differs |= out[i].split != other[i].split;
    EXPECT_TRUE(differs);
}

TEST(Shortcut, IipFormat) {
    auto data = generate_iip_dataset({12, 6, 12, 18}, 9, 1);
    auto out = export_shortcut_dataset(data, 1);
    ASSERT_EQ(out.size(), 4 * data.size());
    std::map<std::string, std::map<std::string, int>> per_type;
    for (size_t i = 0; i < data.size(); ++i) {
        std::set<std::string> targets, splits;
        for (int k = 0; k < 4; ++k) {
            auto& smp = out[4 * i + k];
            EXPECT_EQ(smp.instance_id, data[i].id);
            EXPECT_EQ(smp.input.substr(0, 25), flatten_layout(data[i].scene.scene));
            RouteStyle st = parse_route_style(smp.target);
            EXPECT_EQ(st, data[i].shuffled_order[k]);
            EXPECT_EQ(std::count(smp.input.begin(), smp.input.end(), '\n'),
                      static_cast<long>(data[i].route(st).moves()));
            EXPECT_EQ(smp.input.find("Route"), std::string::npos);
            targets.insert(smp.target);
            splits.insert(smp.split);
        }
        EXPECT_EQ(targets.size(), 4u);
        EXPECT_EQ(splits.size(), 1u);
        ++per_type[out[4 * i].type][out[4 * i].split];
    }
    EXPECT_EQ(per_type["I"]["test"], 2);
    EXPECT_EQ(per_type["II"]["test"], 1);
    EXPECT_EQ(per_type["III"]["test"], 2);
    EXPECT_EQ(per_type["IV"]["test"], 3);
    EXPECT_EQ(per_type["IV"]["train"], 15);
}

TEST(Dataset, LoadErrorsNameTheLine) {
    EvalDataset d;
    std::stringstream in("{\"_meta\":{}}\n\n{\"foo\":1}\n");
    try {
        load_dataset_jsonl(in, d, "d.jsonl");
        FAIL();
    } catch (const InputError& e) {
        EXPECT_NE(std::string(e.what()).find("d.jsonl line 3"), std::string::npos);
    }
    std::stringstream bad("not json\n");
    EXPECT_THROW(load_dataset_jsonl(bad, d), InputError);
}
