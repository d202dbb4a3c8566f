// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "nqs/core_model.hpp"
#include "nqs/error.hpp"
#include "nqs/eval_harness.hpp"
#include "nqs/intent_analysis.hpp"
#include "nqs/llm_gateway.hpp"
#include "nqs/log.hpp"
#include "nqs/retrieval.hpp"
#include "nqs/suggestion_engine.hpp"

using namespace nqs;

namespace {

struct Verdict {
    bool ok = true;
    std::vector<std::string> notes;

    void require(bool cond, const std::string& note) {
        if (!cond) {
            ok = false;
            notes.push_back(note);
        }
    }
};

struct AcceptanceCriterion {
    int number;
    const char* title;
    double limit_seconds;  // 0 = no runtime bound
    std::function<Verdict()> run;
};

std::string fmt3(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3f", v);
    return buf;
}

Verdict table3_replay() {
    Verdict out;
    const auto pairs = testing::make_pairs(134);
    const auto tasks = create_tasks(pairs, 2024);
    std::vector<AnnotationRecord> records;
    for (const auto& row : testing::per_annotator_rows()) {
        const auto part = testing::records_for(tasks, row.annotator, row.role, row.criterion, row.counts);
        records.insert(records.end(), part.begin(), part.end());
    }
    const auto report = aggregate(records, tasks, StratifyBy::Annotator);
    int rows_ok = 0;
    for (const auto& row : testing::per_annotator_rows()) {
        const auto* stratum = report.find(row.annotator);
        if (stratum == nullptr) {
            out.require(false, std::string("missing stratum ") + row.annotator);
            continue;
        }
        const auto& stats = stratum->criteria.at(row.criterion);
        std::string emitted, reference;
        bool row_ok = true;
        for (std::size_t o = 0; o < 4; ++o) {
            const double got = stats.proportion(kAllOutcomes[o]).rounded(3);
            row_ok = row_ok && std::fabs(got - row.reference[o]) <= 0.0005 + 1e-12;
            emitted += (o ? "/" : "") + fmt3(got);
            reference += (o ? "/" : "") + fmt3(row.reference[o]);
        }
        if (row_ok) {
            ++rows_ok;
        } else {
            out.require(false, std::string(to_string(row.criterion)) + " " + row.annotator + ": n=" +
                                   std::to_string(stats.n) + " (reference denominator " +
                                   std::to_string(row.denominator) + ") emits " + emitted + ", reference " +
                                   reference);
        }
    }
    out.notes.insert(out.notes.begin(), std::to_string(rows_ok) + "/20 rows reproduced");
    return out;
}

Verdict table2_replay() {
    Verdict out;
    const auto pairs = testing::make_pairs(testing::kPooledDenominator);
    const auto tasks = create_tasks(pairs, 7);
    std::vector<AnnotationRecord> records;
    for (const auto& row : testing::pooled_rows()) {
        const auto part = testing::records_for(tasks, "pool", "Engineer", row.criterion, row.counts);
        records.insert(records.end(), part.begin(), part.end());
    }
    const auto report = aggregate(records, tasks);
    const auto* all = report.find("all");
    out.require(all != nullptr, "no unstratified stratum");
    if (all == nullptr) return out;
    for (const auto& row : testing::pooled_rows()) {
        const auto& stats = all->criteria.at(row.criterion);
        std::int64_t num_sum = 0;
        for (std::size_t o = 0; o < 4; ++o) {
            const auto ratio = stats.proportion(kAllOutcomes[o]);
            num_sum += ratio.num;
            out.require(ratio.den == testing::kPooledDenominator, "unexpected denominator");
            out.require(std::fabs(ratio.rounded(3) - row.reference[o]) <= 0.001 + 1e-12,
                        std::string(to_string(row.criterion)) + " cell " + std::to_string(o) + " emits " +
                            fmt3(ratio.rounded(3)) + ", reference " + fmt3(row.reference[o]));
        }
        out.require(num_sum == stats.n, std::string(to_string(row.criterion)) + " row does not sum to 1");
    }
    out.notes.insert(out.notes.begin(), "n=" + std::to_string(testing::kPooledDenominator) + " per criterion");
    return out;
}

Verdict table1_replay() {
    Verdict out;
    std::vector<IntentLabel> labels;
    const std::pair<IntentValue, int> counts[] = {{IntentValue::Unrelated, 36},
                                                  {IntentValue::Expansion, 30},
                                                  {IntentValue::FollowUp, 11},
                                                  {IntentValue::Others, 23}};
    for (const auto& [v, n] : counts)
        for (int i = 0; i < n; ++i) labels.push_back({v, 1.0, LabelMethod::Manual});
    const auto report = aggregate_intents(labels);
    out.require(report.n_total == 100, "n_total != 100");
    out.require(report.proportions.at(IntentValue::Unrelated) == 0.36, "Unrelated != 0.36");
    out.require(report.proportions.at(IntentValue::Expansion) == 0.30, "Expansion != 0.30");
    out.require(report.proportions.at(IntentValue::FollowUp) == 0.11, "FollowUp != 0.11");
    out.require(report.proportions.at(IntentValue::Others) == 0.23, "Others != 0.23");
    return out;
}

Verdict randomization() {
    Verdict out;
    const auto pairs = testing::make_pairs(10000);
    const auto tasks = create_tasks(pairs, 20240917);
    long baseline_a = 0;
    for (const auto& t : tasks) {
        if (t.assignment == Assignment::BaselineIsA) ++baseline_a;
        out.require(t.baseline().mode == Mode::Baseline && t.enhanced().mode == Mode::Enhanced,
                    "task sides do not follow the assignment");
        if (!out.ok) break;
    }
    out.require(baseline_a >= 4850 && baseline_a <= 5150,
                "BaselineIsA count " + std::to_string(baseline_a) + " outside [4850, 5150]");
    const auto again = create_tasks(pairs, 20240917);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        if (again[i].assignment != tasks[i].assignment) {
            out.require(false, "assignment differs between runs with the same seed");
            break;
        }
    }
    int identities = 0;
    for (const auto o : kAllOutcomes)
        for (const auto a : {Assignment::BaselineIsA, Assignment::BaselineIsB})
            if (derandomize(encode(o, a), a) == o) ++identities;
    out.require(identities == 8, std::to_string(identities) + "/8 combinations round-trip");
    out.notes.push_back("BaselineIsA " + std::to_string(baseline_a) + "/10000");
    return out;
}

Verdict end_to_end_suggestions() {
    Verdict out;
    SessionStore sessions;
    auto mock = std::make_shared<MockBackend>();
    Gateway gateway(mock);
    const auto tmpl = PromptTemplate::default_template();
    SuggestionEngine engine(sessions, gateway, tmpl, default_registry());

    const auto id = sessions.create_session("acceptance").session_id;
    sessions.append_turn(id, "What is the Real-Time Customer Profile?", "A unified view of each customer.", {});
    sessions.append_turn(id, "What is profile richness?", "The amount of profile data stored.", {});
    sessions.append_turn(id, "How is profile richness calculated?",
                         "Total profile data divided by the number of profiles.",
                         {{"richness", "Profile richness", "Profile richness is calculated ...", {}}});
    const auto prompt = build_enhanced_prompt(sessions.context_for_suggestion(id), tmpl, default_registry());
    mock->add(prompt,
              "What are the implications of exceeding the Profile Richness entitlement? (Expansion)\n"
              "What are the steps to monitor and manage Profile Richness effectively? (Follow-up)\n");

    const auto set = engine.suggest_next_questions(id, Mode::Enhanced);
    const auto has = [&](CategoryName c) {
        return std::any_of(set.suggestions.begin(), set.suggestions.end(),
                           [c](const Suggestion& s) { return s.category == c; });
    };
    out.require(set.mode == Mode::Enhanced, "set is not Enhanced");
    out.require(has(CategoryName::Expansion), "no Expansion suggestion");
    out.require(has(CategoryName::FollowUp), "no FollowUp suggestion");
    out.require(!set.degraded, "set flagged degraded");
    for (const auto& s : set.suggestions) {
        const auto again = parse_suggestions(render_suggestion(s), default_registry());
        out.require(again.suggestions.size() == 1 && again.suggestions[0] == s, "line does not re-parse: " + s.text);
    }

    std::mt19937_64 rng(31337);
    int round_trips = 0;
    for (int i = 0; i < 1000; ++i) {
        Suggestion s;
        s.text = testing::random_suggestion_text(rng);
        s.category = static_cast<CategoryName>(rng() % 3);
        s.word_count = word_count(s.text);
        try {
            const auto parsed = parse_suggestions(render_suggestion(s), default_registry());
            if (parsed.suggestions.size() == 1 && parsed.suggestions[0] == s) ++round_trips;
        } catch (const Error&) {
        }
    }
    out.require(round_trips == 1000, std::to_string(round_trips) + "/1000 random lines round-trip");
    out.notes.push_back(std::to_string(set.suggestions.size()) + " suggestions, " + std::to_string(round_trips) +
                        "/1000 round-trips");
    return out;
}

Verdict prompt_contract() {
    Verdict out;
    const auto tmpl = PromptTemplate::default_template();
    const auto registry = default_registry();
    std::mt19937_64 rng(4);
    int prompts = 0;
    for (int i = 0; i < 20; ++i) {
        SessionContext ctx;
        ctx.current_query = "Question " + std::to_string(i) + ": " + testing::random_suggestion_text(rng);
        ctx.current_response = "Answer " + std::to_string(i);
        const auto history = static_cast<std::size_t>(i % 6);
        for (std::size_t h = 0; h < history; ++h)
            ctx.prior_queries.push_back("Earlier " + std::to_string(h) + " " + testing::random_suggestion_text(rng));
        for (int d = 0; d < i % 4; ++d)
            ctx.retrieved.push_back({"doc-" + std::to_string(i) + "-" + std::to_string(d), "Title",
                                     "Content " + std::to_string(d), {}});

        const auto enhanced = build_enhanced_prompt(ctx, tmpl, registry);
        const auto baseline = build_baseline_prompt(ctx.current_query, ctx.retrieved);
        prompts += 2;
        const std::string tag = " (prompt " + std::to_string(i) + ")";
        for (const auto& q : ctx.prior_queries)
            out.require(enhanced.find(q) != std::string::npos, "prior query missing from enhanced prompt" + tag);
        for (const auto& d : ctx.retrieved)
            out.require(enhanced.find("[" + d.doc_id + "]") != std::string::npos, "doc id missing" + tag);
        if (ctx.prior_queries.empty()) {
            const auto header = enhanced.find(kHistoryHeader);
            out.require(header != std::string::npos &&
                            enhanced.find(kNoHistoryMarker, header) != std::string::npos,
                        "empty history lacks the (none) marker" + tag);
        }
        out.require(baseline.find(kHistoryHeader) == std::string::npos, "baseline has a history section" + tag);
        out.require(baseline.find(kCategoriesHeader) == std::string::npos, "baseline has a category section" + tag);
        for (const auto& c : registry)
            out.require(baseline.find(c.description) == std::string::npos,
                        "baseline contains a category definition" + tag);
        for (const auto& q : ctx.prior_queries)
            out.require(baseline.find(q) == std::string::npos, "baseline contains a prior query" + tag);
    }
    out.notes.push_back(std::to_string(prompts) + " prompts checked");
    return out;
}

Verdict heuristic_intents() {
    Verdict out;
    int agree = 0;
    for (const auto& c : testing::intent_cases()) {
        Transition t;
        t.context.current_query = c.query;
        t.context.current_response = c.response;
        t.next_question = c.next;
        if (classify_heuristic(t).value == c.expected) {
            ++agree;
        } else {
            out.require(false, std::string("disagrees on: ") + c.next);
        }
    }
    out.require(testing::intent_cases().size() == 12, "fixture is not 12 cases");

    std::mt19937_64 rng(77);
    std::vector<IntentLabel> labels(1000);
    for (auto& l : labels) l.value = kAllIntentValues[rng() % 4];
    const auto report = aggregate_intents(labels);
    for (const auto v : kAllIntentValues) {
        std::int64_t brute = 0;
        for (const auto& l : labels)
            if (l.value == v) ++brute;
        out.require(report.counts.at(v) == brute, std::string("count mismatch for ") + std::string(to_string(v)));
    }
    out.notes.push_back(std::to_string(agree) + "/12 agree");
    return out;
}

Verdict retrieval_sanity() {
    Verdict out;
    const auto index = CorpusIndex::build(testing::toy_corpus());
    const auto first = retrieve(index, "profile richness", 10);
    const auto second = retrieve(index, "profile richness", 10);
    out.require(first.size() == second.size(), "repeat query changed result size");
    for (std::size_t i = 0; i < std::min(first.size(), second.size()); ++i)
        out.require(first[i].doc.doc_id == second[i].doc.doc_id && first[i].score == second[i].score,
                    "repeat query changed ranking");

    const auto single = CorpusIndex::build({{"solo", "Sandboxes", "Sandboxes isolate environments.", {}}});
    const auto hits = retrieve(single, "what do sandboxes do", 3);
    out.require(hits.size() == 1 && hits[0].doc.doc_id == "solo" && hits[0].rank == 1,
                "singleton corpus did not return its document at rank 1");

    const auto& expected = testing::toy_profile_richness_scores();
    out.require(first.size() == expected.size(), "toy corpus returned the wrong number of hits");
    for (std::size_t i = 0; i < std::min(first.size(), expected.size()); ++i) {
        out.require(first[i].doc.doc_id == expected[i].first, "toy ordering differs at rank " + std::to_string(i + 1));
        out.require(std::fabs(first[i].score - expected[i].second) < 1e-9,
                    "toy score differs at rank " + std::to_string(i + 1));
    }
    return out;
}

}  // namespace

int main() {
    log::set_level(log::Level::Warn);
    const std::vector<AcceptanceCriterion> criteria = {
        {1, "Per-annotator table replay within 0.0005", 1.0, table3_replay},
        {2, "Pooled table replay within 0.001, rows sum to 1", 1.0, table2_replay},
        {3, "Intent table replay 0.36/0.30/0.11/0.23", 1.0, table1_replay},
        {4, "Randomization balance and de-randomization identity", 5.0, randomization},
        {5, "End-to-end mock suggestions and round-trip", 5.0, end_to_end_suggestions},
        {6, "Prompt construction contract", 0.0, prompt_contract},
        {7, "Heuristic intent oracle and aggregate equivalence", 0.0, heuristic_intents},
        {8, "Retrieval determinism and toy-corpus ordering", 0.0, retrieval_sanity},
    };
    int failures = 0;
    for (const auto& c : criteria) {
        const auto start = std::chrono::steady_clock::now();
        Verdict result;
        try {
            result = c.run();
        } catch (const std::exception& e) {
            result.ok = false;
            result.notes.push_back(std::string("exception: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (c.limit_seconds > 0 && seconds >= c.limit_seconds) {
            result.ok = false;
            result.notes.push_back("runtime limit " + fmt3(c.limit_seconds) + " s exceeded");
        }
        if (!result.ok) ++failures;
        std::printf("%s  criterion %d  %s  [%.3f s]\n", result.ok ? "PASS" : "FAIL", c.number, c.title, seconds);
        for (const auto& note : result.notes) std::printf("      %s\n", note.c_str());
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
    std::fflush(stdout);
    return failures == 0 ? 0 : 1;
}
