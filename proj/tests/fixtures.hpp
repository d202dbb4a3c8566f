#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "nqs/eval_harness.hpp"
#include "nqs/intent_analysis.hpp"
#include "nqs/suggestion_engine.hpp"
#include "nqs/text.hpp"

namespace nqs::testing {

// Removes the directory when it goes out of scope.
class TempDir {
public:
    TempDir() : path_(std::filesystem::temp_directory_path() / ("nqs_test_" + text::random_id(6))) {
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

// Column order: Equally Good, Baseline Better, Ours Better, Both Bad.
using Row = std::array<double, 4>;
using Counts = std::array<int, 4>;

struct AnnotatorRow {
    Criterion criterion;
    const char* annotator;
    const char* role;
    Row reference;
    // Counts inverted from the reference proportions at the annotator's
    // apparent denominator (60/32/102/134), nearest integer per cell.
    Counts counts;
    int denominator;
};

// Reference per-annotator proportions with the inverted counts.
inline const std::vector<AnnotatorRow>& per_annotator_rows() {
    static const std::vector<AnnotatorRow> rows = {
        {Criterion::Relatedness, "E1", "Engineer", {0.517, 0.183, 0.233, 0.067}, {31, 11, 14, 4}, 60},
        {Criterion::Relatedness, "E2", "Engineer", {0.375, 0.313, 0.281, 0.000}, {12, 10, 9, 0}, 32},
        {Criterion::Relatedness, "P1", "Product", {0.206, 0.216, 0.578, 0.000}, {21, 22, 59, 0}, 102},
        {Criterion::Relatedness, "P2", "Product", {0.701, 0.119, 0.157, 0.022}, {94, 16, 21, 3}, 134},
        {Criterion::Validness, "E1", "Engineer", {0.800, 0.100, 0.067, 0.017}, {48, 6, 4, 1}, 60},
        {Criterion::Validness, "E2", "Engineer", {0.750, 0.094, 0.125, 0.000}, {24, 3, 4, 0}, 32},
        {Criterion::Validness, "P1", "Product", {0.588, 0.108, 0.304, 0.000}, {60, 11, 31, 0}, 102},
        {Criterion::Validness, "P2", "Product", {0.709, 0.127, 0.149, 0.015}, {95, 17, 20, 2}, 134},
        {Criterion::Usefulness, "E1", "Engineer", {0.133, 0.400, 0.433, 0.033}, {8, 24, 26, 2}, 60},
        {Criterion::Usefulness, "E2", "Engineer", {0.063, 0.500, 0.406, 0.000}, {2, 16, 13, 0}, 32},
        {Criterion::Usefulness, "P1", "Product", {0.206, 0.225, 0.569, 0.000}, {21, 23, 58, 0}, 102},
        {Criterion::Usefulness, "P2", "Product", {0.672, 0.157, 0.157, 0.015}, {90, 21, 21, 2}, 134},
        {Criterion::Diversity, "E1", "Engineer", {0.483, 0.183, 0.317, 0.017}, {29, 11, 19, 1}, 60},
        {Criterion::Diversity, "E2", "Engineer", {0.281, 0.250, 0.406, 0.031}, {9, 8, 13, 1}, 32},
        {Criterion::Diversity, "P1", "Product", {0.794, 0.088, 0.118, 0.000}, {81, 9, 12, 0}, 102},
        {Criterion::Diversity, "P2", "Product", {0.746, 0.134, 0.112, 0.007}, {100, 18, 15, 1}, 134},
        {Criterion::Discoverability, "E1", "Engineer", {0.133, 0.250, 0.617, 0.000}, {8, 15, 37, 0}, 60},
        {Criterion::Discoverability, "E2", "Engineer", {0.250, 0.344, 0.375, 0.000}, {8, 11, 12, 0}, 32},
        {Criterion::Discoverability, "P1", "Product", {0.225, 0.216, 0.559, 0.000}, {23, 22, 57, 0}, 102},
        {Criterion::Discoverability, "P2", "Product", {0.679, 0.127, 0.172, 0.022}, {91, 17, 23, 3}, 134},
    };
    return rows;
}

struct PooledRow {
    Criterion criterion;
    Row reference;
    Counts counts;
};

// Pooled proportions with counts at denominator 576, the smallest n for
// which every cell's 3-decimal rounding is within 0.001 of the reference
// value (exhaustive search over n).
inline constexpr int kPooledDenominator = 576;

inline const std::vector<PooledRow>& pooled_rows() {
    static const std::vector<PooledRow> rows = {
        {Criterion::Relatedness, {0.464, 0.215, 0.297, 0.022}, {268, 124, 171, 13}},
        {Criterion::Validness, {0.685, 0.134, 0.167, 0.009}, {395, 78, 97, 6}},
        {Criterion::Usefulness, {0.351, 0.278, 0.354, 0.015}, {203, 160, 204, 9}},
        {Criterion::Diversity, {0.620, 0.171, 0.197, 0.009}, {357, 99, 114, 6}},
        {Criterion::Discoverability, {0.401, 0.232, 0.334, 0.030}, {231, 134, 193, 18}},
    };
    return rows;
}

inline SuggestionSet make_set(Mode mode, const std::string& text) {
    SuggestionSet s;
    s.mode = mode;
    s.suggestions.push_back({text, mode == Mode::Enhanced ? CategoryName::Expansion : CategoryName::Other,
                             word_count(text), {}});
    return s;
}

inline std::vector<ComparisonPair> make_pairs(std::size_t n) {
    std::vector<ComparisonPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ComparisonPair p;
        p.context.current_query = "question " + std::to_string(i);
        p.context.current_response = "answer " + std::to_string(i);
        p.baseline = make_set(Mode::Baseline, "What else is there to know about item " + std::to_string(i) + "?");
        p.enhanced = make_set(Mode::Enhanced, "Which related features extend item " + std::to_string(i) + "?");
        p.session_id = "s" + std::to_string(i);
        p.turn_index = 1;
        pairs.push_back(std::move(p));
    }
    return pairs;
}

// One record per task (starting at tasks[0]) expressing the given outcome
// counts; the blinded choice is derived from each task's side assignment.
inline std::vector<AnnotationRecord> records_for(const std::vector<ComparisonTask>& tasks, const std::string& annotator,
                                                 const std::string& role, Criterion criterion, const Counts& counts) {
    std::vector<AnnotationRecord> out;
    std::size_t next = 0;
    for (std::size_t o = 0; o < 4; ++o) {
        for (int k = 0; k < counts[o]; ++k) {
            const auto& task = tasks.at(next++);
            AnnotationRecord r;
            r.task_id = task.task_id;
            r.criterion = criterion;
            r.choice = encode(kAllOutcomes[o], task.assignment);
            r.annotator_id = annotator;
            r.role = role;
            out.push_back(std::move(r));
        }
    }
    return out;
}

// Round half-up to three decimals using only decimal arithmetic on the
// count ratio, independent of Ratio::rounded.
inline double round3_reference(int num, int den) {
    const long long thousandths_x2 = 2000LL * num / den;  // floor(2000 num / den)
    return static_cast<double>((thousandths_x2 + 1) / 2) / 1000.0;
}

// Random question-like line text; never starts with a list marker.
inline std::string random_suggestion_text(std::mt19937_64& rng) {
    static const std::vector<std::string> first = {"What", "How", "Which", "Can", "Why", "Where", "Is", "Explain"};
    static const std::vector<std::string> words = {
        "profile", "richness", "entitlement", "segments", "(streaming)", "data", "lake", "schema", "sandbox",
        "Web",     "SDK",      "v2.1",        "caf\xC3\xA9", "merge", "policy", "rules", "e.g.", "destinations",
        "identity", "graph",   "a",           "the",   "of",  "to",  "and", "my", "API", "x-ray", "2024"};
    static const std::vector<std::string> endings = {"?", "", ".", "?!", " (beta)?"};
    std::string s = first[rng() % first.size()];
    const auto n = 2 + rng() % 16;
    for (std::size_t i = 0; i < n; ++i) s += (rng() % 10 == 0 ? "  " : " ") + words[rng() % words.size()];
    return s + endings[rng() % endings.size()];
}

// Three documents; only "a" contains both "profile" and "richness".
inline std::vector<DocumentRef> toy_corpus() {
    return {
        {"a", "Profile richness", "Profile richness is the amount of profile data stored per profile.", {}},
        {"b", "Profile merge policies", "Merge policies decide which profile fragments are combined.", {}},
        {"c", "Data richness in datasets", "Datasets can vary in richness depending on ingestion.", {}},
    };
}

// BM25 scores for "profile richness" over toy_corpus() (k1=1.2, b=0.75),
// from an independent script.
inline const std::vector<std::pair<std::string, double>>& toy_profile_richness_scores() {
    static const std::vector<std::pair<std::string, double>> scores = {
        {"a", 1.407054890068995}, {"c", 0.6671019253810443}, {"b", 0.6462549902128865}};
    return scores;
}

struct IntentCase {
    const char* query;
    const char* response;
    const char* next;
    IntentValue expected;
};

// Labels were assigned by hand from the rule order, reading off the
// content tokens of each question and answer.
inline const std::vector<IntentCase>& intent_cases() {
    static const std::vector<IntentCase> cases = {
        {"What is profile richness?", "Profile richness measures stored profile data against your license metrics.",
         "How do I delete a dataset?", IntentValue::Unrelated},
        {"What is profile richness?", "Profile richness is compared with your entitlement each month.",
         "What are the implications of exceeding the Profile Richness entitlement?", IntentValue::FollowUp},
        {"What is profile richness?", "It measures stored data per profile.", "What is profile richness used for?",
         IntentValue::Expansion},
        {"How do I create a segment?", "Open Segments, click Create segment and define rules.",
         "Can I schedule a segment evaluation?", IntentValue::Expansion},
        {"How do I create a segment?", "Open Segments, click Create segment and define rules.",
         "How do I define rules for streaming?", IntentValue::FollowUp},
        {"Explain identity namespaces", "Namespaces group identity values like email or phone.", "What is a sandbox?",
         IntentValue::Unrelated},
        {"Explain identity namespaces", "Namespaces group identity values like email or phone.",
         "Which identity namespaces support phone numbers?", IntentValue::FollowUp},
        {"Explain identity namespaces", "Namespaces group identity values like email or phone.",
         "Explain identity namespaces again", IntentValue::Expansion},
        {"What is a destination?", "A destination receives activated audiences.", "Where do I see destination errors?",
         IntentValue::Expansion},
        {"What is a destination?", "A destination receives activated audiences.",
         "Which audiences were activated yesterday?", IntentValue::FollowUp},
        {"What is a destination?", "A destination receives activated audiences.", "Thanks!", IntentValue::Unrelated},
        {"What is a destination?", "A destination receives activated audiences.", "What is it?",
         IntentValue::Unrelated},
    };
    return cases;
}

}  // namespace nqs::testing
