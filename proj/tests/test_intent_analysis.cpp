#include <fstream>
#include <map>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "nqs/error.hpp"
#include "nqs/intent_analysis.hpp"

using namespace nqs;

namespace {

Transition transition(const testing::IntentCase& c) {
    Transition t;
    t.context.current_query = c.query;
    t.context.current_response = c.response;
    t.next_question = c.next;
    return t;
}

ChatSession session(const std::string& id, std::vector<std::pair<std::string, std::string>> turns,
                    Timestamp start = *parse_timestamp("2024-03-01T09:00:00Z")) {
    ChatSession s;
    s.session_id = id;
    s.user_id = "u";
    int i = 0;
    for (auto& [q, r] : turns) {
        ++i;
        s.turns.push_back({i, q, r, {}, start + std::chrono::minutes(i)});
    }
    return s;
}

}  // namespace

TEST_CASE("heuristic matches the hand-labelled fixture") {
    const auto& cases = testing::intent_cases();
    REQUIRE(cases.size() == 12);
    int agree = 0;
    for (const auto& c : cases) {
        CAPTURE(c.next);
        const auto label = classify_heuristic(transition(c));
        CHECK(label.value == c.expected);
        CHECK(label.method == LabelMethod::Heuristic);
        if (label.value == c.expected) ++agree;
    }
    CHECK(agree == 12);
}

TEST_CASE("aggregate examples") {
    const std::vector<IntentLabel> one_each = {{IntentValue::Unrelated, 1, LabelMethod::Heuristic},
                                               {IntentValue::Expansion, 1, LabelMethod::Heuristic},
                                               {IntentValue::FollowUp, 1, LabelMethod::Heuristic},
                                               {IntentValue::Others, 1, LabelMethod::Heuristic}};
    auto report = aggregate_intents(one_each);
    for (const auto v : kAllIntentValues) CHECK(report.proportions.at(v) == 0.25);

    report = aggregate_intents(std::vector<IntentLabel>{});
    CHECK(report.n_total == 0);
    for (const auto v : kAllIntentValues) CHECK(report.proportions.at(v) == 0.0);

    std::vector<IntentLabel> table;
    const std::pair<IntentValue, int> counts[] = {{IntentValue::Unrelated, 36},
                                                  {IntentValue::Expansion, 30},
                                                  {IntentValue::FollowUp, 11},
                                                  {IntentValue::Others, 23}};
    for (const auto& [v, n] : counts)
        for (int i = 0; i < n; ++i) table.push_back({v, 1.0, LabelMethod::Manual});
    report = aggregate_intents(table);
    CHECK(report.n_total == 100);
    CHECK(report.proportions.at(IntentValue::Unrelated) == 0.36);
    CHECK(report.proportions.at(IntentValue::Expansion) == 0.30);
    CHECK(report.proportions.at(IntentValue::FollowUp) == 0.11);
    CHECK(report.proportions.at(IntentValue::Others) == 0.23);

    const auto j = report_to_json(report);
    CHECK(j["n_total"] == 100);
    CHECK(j["counts"]["Unrelated"] == 36);
}

TEST_CASE("aggregate equals brute-force counting") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 20; ++round) {
        std::vector<IntentLabel> labels(rng() % 1001);
        for (auto& l : labels) l.value = kAllIntentValues[rng() % 4];
        const auto report = aggregate_intents(labels);
        std::int64_t sum = 0;
        double psum = 0;
        for (const auto v : kAllIntentValues) {
            std::int64_t brute = 0;
            for (const auto& l : labels)
                if (l.value == v) ++brute;
            CHECK(report.counts.at(v) == brute);
            sum += report.counts.at(v);
            psum += report.proportions.at(v);
        }
        CHECK(sum == static_cast<std::int64_t>(labels.size()));
        CHECK(report.n_total == sum);
        if (!labels.empty()) CHECK(psum == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("registry derivation keeps the primary categories") {
    IntentReport report;
    report.proportions = {{IntentValue::Unrelated, 0.36},
                          {IntentValue::Expansion, 0.30},
                          {IntentValue::FollowUp, 0.11},
                          {IntentValue::Others, 0.23}};
    const auto names = [](const std::vector<QuestionCategory>& reg) {
        std::vector<CategoryName> out;
        for (const auto& c : reg) out.push_back(c.name);
        return out;
    };
    const std::vector<CategoryName> both = {CategoryName::Expansion, CategoryName::FollowUp};
    CHECK(names(derive_category_registry(report, 0.1)) == both);
    CHECK(names(derive_category_registry(report, 1.0)) == both);
    report.proportions[IntentValue::FollowUp] = 0.0;
    CHECK(names(derive_category_registry(report, 0.1)) == both);
    CHECK_THROWS_AS(derive_category_registry(report, 1.5), Error);
    CHECK_THROWS_AS(derive_category_registry(report, -0.1), Error);
}

TEST_CASE("transitions skip the first question of each session") {
    const std::vector<ChatSession> sessions = {
        session("a", {{"q1", "r1"}, {"q2", "r2"}, {"q3", "r3"}}),
        session("b", {{"only", "one"}}),
    };
    const auto ts = extract_transitions(sessions);
    REQUIRE(ts.size() == 2);
    CHECK(ts[0].context.current_query == "q1");
    CHECK(ts[0].next_question == "q2");
    CHECK(ts[0].next_turn_index == 2);
    CHECK(ts[1].context.prior_queries == std::vector<std::string>{"q1"});

    TimeWindow w;
    w.from = *parse_timestamp("2024-03-01T09:02:30Z");
    const auto late = extract_transitions(sessions, w);
    REQUIRE(late.size() == 1);
    CHECK(late[0].next_question == "q3");
}

TEST_CASE("judge reply mapping") {
    CHECK(parse_judge_reply("Expansion").value == IntentValue::Expansion);
    CHECK(parse_judge_reply(" follow-up\n").value == IntentValue::FollowUp);
    CHECK(parse_judge_reply("Follow up").value == IntentValue::FollowUp);
    CHECK(parse_judge_reply("unrelated.").value == IntentValue::Unrelated);
    const auto bad = parse_judge_reply("I am not sure");
    CHECK(bad.value == IntentValue::Others);
    CHECK(bad.confidence == 0.0);
    CHECK(bad.method == LabelMethod::Judge);
}

TEST_CASE("judge backend through the gateway") {
    auto mock = std::make_shared<MockBackend>();
    Gateway gw(mock);
    const auto t = transition(testing::intent_cases()[1]);
    mock->add(build_judge_prompt(t), "FollowUp");
    CHECK(classify_transition(t, ClassifierBackend::Judge, &gw).value == IntentValue::FollowUp);
    CHECK_THROWS_AS(classify_transition(t, ClassifierBackend::Judge, nullptr), Error);
    // The mock fallback is not a label.
    CHECK(classify_transition(transition(testing::intent_cases()[0]), ClassifierBackend::Judge, &gw).value ==
          IntentValue::Others);
}

TEST_CASE("full analysis with manual overrides") {
    const std::vector<ChatSession> sessions = {
        session("a", {{"What is profile richness?", "Compared with your entitlement."},
                      {"What are the implications of exceeding the entitlement?", "Overage fees."},
                      {"How do I delete a dataset?", "Use the Datasets page."}}),
    };
    testing::TempDir dir;
    std::ofstream(dir / "manual.jsonl") << R"({"session_id":"a","turn_index":3,"label":"Others"})" << "\n";
    const auto manual = load_manual_labels(dir / "manual.jsonl");
    IntentAnalysisOptions opts;
    opts.manual = &manual;
    const auto analysis = analyze_intents(sessions, opts);
    REQUIRE(analysis.labeled.size() == 2);
    CHECK(analysis.labeled[0].label.value == IntentValue::FollowUp);
    CHECK(analysis.labeled[1].label.value == IntentValue::Others);
    CHECK(analysis.labeled[1].label.method == LabelMethod::Manual);
    CHECK(analysis.report.n_total == 2);
    CHECK(analysis.registry.size() == 2);
}
