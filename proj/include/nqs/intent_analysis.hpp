#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "nqs/clock.hpp"
#include "nqs/core_model.hpp"
#include "nqs/llm_gateway.hpp"
#include "nqs/suggestion_engine.hpp"

namespace nqs {

enum class IntentValue { Unrelated, Expansion, FollowUp, Others };
enum class LabelMethod { Heuristic, Judge, Manual };
enum class ClassifierBackend { Heuristic, Judge };

inline constexpr IntentValue kAllIntentValues[] = {IntentValue::Unrelated, IntentValue::Expansion,
                                                   IntentValue::FollowUp, IntentValue::Others};

std::string_view to_string(IntentValue v);
std::string_view to_string(LabelMethod m);
std::optional<IntentValue> intent_from_string(std::string_view s);
ClassifierBackend classifier_from_string(std::string_view s);

struct IntentLabel {
    IntentValue value = IntentValue::Others;
    double confidence = 0.0;
    LabelMethod method = LabelMethod::Heuristic;

    bool operator==(const IntentLabel&) const = default;
};

// A user's next question together with the turn it followed.
struct Transition {
    SessionContext context;
    std::string next_question;
    std::string session_id;
    int next_turn_index = 0;
    Timestamp timestamp{};
};

struct TimeWindow {
    std::optional<Timestamp> from;
    std::optional<Timestamp> to;

    bool contains(Timestamp t) const { return (!from || t >= *from) && (!to || t <= *to); }
};

struct IntentReport {
    std::map<IntentValue, std::int64_t> counts;
    std::map<IntentValue, double> proportions;
    std::int64_t n_total = 0;
    TimeWindow window;
};

// Every (turn t, turn t+1) pair whose second turn falls inside `window`.
// A session's first question has no conditioning turn and is skipped.
std::vector<Transition> extract_transitions(const std::vector<ChatSession>& sessions, const TimeWindow& window = {},
                                            std::size_t context_window = kDefaultContextWindow);

// Lexical rule: no overlap with query or response -> Unrelated; overlap with
// response-only tokens -> FollowUp; overlap with query tokens -> Expansion.
IntentLabel classify_heuristic(const Transition& t);

std::string build_judge_prompt(const Transition& t);
IntentLabel parse_judge_reply(std::string_view reply);
IntentLabel classify_judge(const Transition& t, Gateway& gateway);

// `gateway` is required for the Judge backend.
IntentLabel classify_transition(const Transition& t, ClassifierBackend backend, Gateway* gateway = nullptr);

IntentReport aggregate_intents(std::span<const IntentLabel> labels, const TimeWindow& window = {});

// Actionable categories (Expansion, FollowUp) with share >= min_share; the
// two primary categories are always kept.
std::vector<QuestionCategory> derive_category_registry(const IntentReport& report, double min_share);

nlohmann::json report_to_json(const IntentReport& report);

// Manual labels keyed by (session_id, next_turn_index); they take
// precedence over machine labels.
using ManualLabels = std::map<std::pair<std::string, int>, IntentValue>;

// JSON Lines of {session_id, turn_index, label}.
ManualLabels load_manual_labels(const std::filesystem::path& path);

struct LabeledTransition {
    Transition transition;
    IntentLabel label;
};

struct IntentAnalysis {
    std::vector<LabeledTransition> labeled;
    IntentReport report;
    std::vector<QuestionCategory> registry;
};

struct IntentAnalysisOptions {
    TimeWindow window;
    ClassifierBackend backend = ClassifierBackend::Heuristic;
    double min_share = 0.1;
    std::size_t workers = 4;
    const ManualLabels* manual = nullptr;
};

IntentAnalysis analyze_intents(const std::vector<ChatSession>& sessions, const IntentAnalysisOptions& options,
                               Gateway* gateway = nullptr);

}  // namespace nqs
