#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "nqs/append_log.hpp"
#include "nqs/clock.hpp"
#include "nqs/core_model.hpp"
#include "nqs/suggestion_engine.hpp"

namespace nqs {

enum class Criterion { Relatedness, Validness, Usefulness, Diversity, Discoverability };

inline constexpr Criterion kAllCriteria[] = {Criterion::Relatedness, Criterion::Validness, Criterion::Usefulness,
                                             Criterion::Diversity, Criterion::Discoverability};

std::string_view to_string(Criterion c);
std::optional<Criterion> criterion_from_string(std::string_view s);
// Short guidance shown to annotators.
std::string_view definition(Criterion c);

enum class Assignment { BaselineIsA, BaselineIsB };
// What the annotator picked between the blinded sides S1 (= side A) and S2.
enum class Choice { S1Better, S2Better, EquallyGood, BothBad };
// De-randomized outcome; enumerator order is the report column order.
enum class Outcome { EquallyGood, BaselineBetter, OursBetter, BothBad };

inline constexpr Outcome kAllOutcomes[] = {Outcome::EquallyGood, Outcome::BaselineBetter, Outcome::OursBetter,
                                           Outcome::BothBad};
inline constexpr Choice kAllChoices[] = {Choice::S1Better, Choice::S2Better, Choice::EquallyGood, Choice::BothBad};

std::string_view to_string(Assignment a);
std::string_view to_string(Choice c);
std::string_view to_string(Outcome o);
std::optional<Assignment> assignment_from_string(std::string_view s);
std::optional<Choice> choice_from_string(std::string_view s);

Outcome derandomize(Choice choice, Assignment assignment);
// Inverse of derandomize: the blinded choice that expresses `outcome`.
Choice encode(Outcome outcome, Assignment assignment);

struct ComparisonTask {
    std::string task_id;
    SessionContext context;
    SuggestionSet side_a;
    SuggestionSet side_b;
    Assignment assignment = Assignment::BaselineIsA;
    std::uint64_t rng_seed = 0;
    // Where the context came from, when built from the interaction log.
    std::string session_id;
    int turn_index = 0;

    const SuggestionSet& baseline() const { return assignment == Assignment::BaselineIsA ? side_a : side_b; }
    const SuggestionSet& enhanced() const { return assignment == Assignment::BaselineIsA ? side_b : side_a; }
};

struct ComparisonPair {
    SessionContext context;
    SuggestionSet baseline;
    SuggestionSet enhanced;
    std::string session_id;
    int turn_index = 0;
};

// One fair coin per task from mt19937_64(seed), in input order. Throws
// ModeMismatch when a pair's sets are not Baseline + Enhanced.
std::vector<ComparisonTask> create_tasks(std::span<const ComparisonPair> pairs, std::uint64_t seed);

// Uniform sample of `n` distinct (session_id, turn_index) points without
// replacement; deterministic for a given seed. Fewer when fewer turns exist.
std::vector<std::pair<std::string, int>> sample_turns(const std::vector<ChatSession>& sessions, std::size_t n,
                                                      std::uint64_t seed);

inline constexpr std::string_view kRoleEngineer = "Engineer";
inline constexpr std::string_view kRoleProduct = "Product";

struct AnnotationRecord {
    std::string task_id;
    Criterion criterion = Criterion::Relatedness;
    Choice choice = Choice::EquallyGood;
    std::string annotator_id;
    std::string role;
    Timestamp recorded_at{};

    bool operator==(const AnnotationRecord&) const = default;
};

void to_json(nlohmann::json& j, const ComparisonTask& t);
void from_json(const nlohmann::json& j, ComparisonTask& t);
void to_json(nlohmann::json& j, const AnnotationRecord& r);
void from_json(const nlohmann::json& j, AnnotationRecord& r);

struct Progress {
    std::size_t completed = 0;
    std::size_t total = 0;
};

// Tasks and annotations, each in an append-only JSON Lines file
// (tasks.jsonl, annotations.jsonl) under `dir`; empty dir = in memory.
// Annotations upsert on (task_id, criterion, annotator_id).
class EvalStore {
public:
    explicit EvalStore(std::filesystem::path dir = {});

    void add_tasks(const std::vector<ComparisonTask>& tasks);
    std::optional<ComparisonTask> task(const std::string& task_id) const;
    std::vector<ComparisonTask> tasks() const;

    AnnotationRecord record_annotation(AnnotationRecord record);
    std::vector<AnnotationRecord> annotations() const;

    // First task, in creation order, on which the annotator has not yet
    // answered every criterion.
    std::optional<ComparisonTask> next_task_for(const std::string& annotator_id) const;
    Progress progress(const std::string& annotator_id) const;

private:
    using Key = std::tuple<std::string, Criterion, std::string>;

    void apply(AnnotationRecord record);
    bool complete_for(const std::string& task_id, const std::string& annotator_id) const;

    std::unique_ptr<AppendLog> task_log_;
    std::unique_ptr<AppendLog> annotation_log_;
    mutable std::shared_mutex mutex_;
    std::vector<ComparisonTask> tasks_;
    std::map<std::string, std::size_t> task_index_;
    std::map<Key, AnnotationRecord> annotations_;
};

struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 0;

    double value() const { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }
    // num/den rounded half-up to `digits` decimals, computed exactly.
    double rounded(int digits) const;
};

struct CriterionStats {
    std::array<std::int64_t, 4> counts{};
    std::int64_t n = 0;

    std::int64_t count(Outcome o) const { return counts[static_cast<std::size_t>(o)]; }
    Ratio proportion(Outcome o) const { return {count(o), n}; }
};

enum class StratifyBy { Annotator, Role };

std::string_view to_string(StratifyBy s);
StratifyBy stratify_from_string(std::string_view s);

struct EvalStratum {
    std::string key;  // "all" when unstratified
    std::map<Criterion, CriterionStats> criteria;
};

struct EvalReport {
    std::optional<StratifyBy> stratify;
    std::vector<EvalStratum> strata;  // ordered by key

    const EvalStratum* find(std::string_view key) const;
};

// Throws OrphanRecord when a record references a task not in `tasks`.
EvalReport aggregate(std::span<const AnnotationRecord> records, std::span<const ComparisonTask> tasks,
                     std::optional<StratifyBy> stratify_by = std::nullopt);

nlohmann::json report_to_json(const EvalReport& report);

// Aligned table; columns Equally Good, Baseline Better, Ours Better, Both Bad
// at three decimals, plus the stratum key when stratified.
std::string format_report_table(const EvalReport& report);

}  // namespace nqs
