#include "nqs/eval_harness.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "nqs/error.hpp"
#include "nqs/log.hpp"
#include "nqs/text.hpp"

namespace nqs {

using nlohmann::json;

namespace {

std::string fold(std::string_view s) {
    std::string out;
    for (const char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalnum(c) != 0) out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

}  // namespace

std::string_view to_string(Criterion c) {
    switch (c) {
        case Criterion::Relatedness: return "Relatedness";
        case Criterion::Validness: return "Validness";
        case Criterion::Usefulness: return "Usefulness";
        case Criterion::Diversity: return "Diversity";
        case Criterion::Discoverability: return "Discoverability";
    }
    return "";
}

std::optional<Criterion> criterion_from_string(std::string_view s) {
    const auto f = fold(s);
    if (f == "validity") return Criterion::Validness;
    for (const auto c : kAllCriteria) {
        if (f == fold(to_string(c))) return c;
    }
    return std::nullopt;
}

std::string_view definition(Criterion c) {
    switch (c) {
        case Criterion::Relatedness:
            return "Are the suggested questions relevant to both the user's current question and the assistant's "
                   "answer?";
        case Criterion::Validness:
            return "Are the suggested questions sensible questions about the platform, and answerable where that can "
                   "be judged?";
        case Criterion::Usefulness:
            return "How likely is the user to pick at least one suggested question as their next question?";
        case Criterion::Diversity:
            return "Are the suggested questions different from each other and spread over several topics?";
        case Criterion::Discoverability:
            return "Do the suggested questions point the user to features, capabilities or information they may "
                   "not know about?";
    }
    return "";
}

std::string_view to_string(Assignment a) { return a == Assignment::BaselineIsA ? "BaselineIsA" : "BaselineIsB"; }

std::string_view to_string(Choice c) {
    switch (c) {
        case Choice::S1Better: return "S1Better";
        case Choice::S2Better: return "S2Better";
        case Choice::EquallyGood: return "EquallyGood";
        case Choice::BothBad: return "BothBad";
    }
    return "";
}

std::string_view to_string(Outcome o) {
    switch (o) {
        case Outcome::EquallyGood: return "EquallyGood";
        case Outcome::BaselineBetter: return "BaselineBetter";
        case Outcome::OursBetter: return "OursBetter";
        case Outcome::BothBad: return "BothBad";
    }
    return "";
}

std::optional<Assignment> assignment_from_string(std::string_view s) {
    const auto f = fold(s);
    if (f == "baselineisa") return Assignment::BaselineIsA;
    if (f == "baselineisb") return Assignment::BaselineIsB;
    return std::nullopt;
}

std::optional<Choice> choice_from_string(std::string_view s) {
    const auto f = fold(s);
    for (const auto c : kAllChoices) {
        if (f == fold(to_string(c))) return c;
    }
    return std::nullopt;
}

Outcome derandomize(Choice choice, Assignment assignment) {
    switch (choice) {
        case Choice::S1Better:
            return assignment == Assignment::BaselineIsA ? Outcome::BaselineBetter : Outcome::OursBetter;
        case Choice::S2Better:
            return assignment == Assignment::BaselineIsA ? Outcome::OursBetter : Outcome::BaselineBetter;
        case Choice::EquallyGood: return Outcome::EquallyGood;
        case Choice::BothBad: return Outcome::BothBad;
    }
    return Outcome::BothBad;
}

Choice encode(Outcome outcome, Assignment assignment) {
    const bool baseline_first = assignment == Assignment::BaselineIsA;
    switch (outcome) {
        case Outcome::BaselineBetter: return baseline_first ? Choice::S1Better : Choice::S2Better;
        case Outcome::OursBetter: return baseline_first ? Choice::S2Better : Choice::S1Better;
        case Outcome::EquallyGood: return Choice::EquallyGood;
        case Outcome::BothBad: return Choice::BothBad;
    }
    return Choice::BothBad;
}

std::vector<ComparisonTask> create_tasks(std::span<const ComparisonPair> pairs, std::uint64_t seed) {
    std::vector<ComparisonTask> tasks;
    tasks.reserve(pairs.size());
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (p.baseline.mode != Mode::Baseline || p.enhanced.mode != Mode::Enhanced) {
            throw Error(ErrorCode::ModeMismatch, "pair " + std::to_string(i) + " is " +
                                                     std::string(to_string(p.baseline.mode)) + "/" +
                                                     std::string(to_string(p.enhanced.mode)));
        }
        ComparisonTask t;
        t.task_id = "task-" + text::random_id(8);
        t.context = p.context;
        t.rng_seed = seed;
        t.session_id = p.session_id;
        t.turn_index = p.turn_index;
        t.assignment = (rng() >> 63) == 0 ? Assignment::BaselineIsA : Assignment::BaselineIsB;
        t.side_a = t.assignment == Assignment::BaselineIsA ? p.baseline : p.enhanced;
        t.side_b = t.assignment == Assignment::BaselineIsA ? p.enhanced : p.baseline;
        tasks.push_back(std::move(t));
    }
    return tasks;
}

namespace {

// Unbiased draw from [0, bound) using only the engine's raw output, which is
// identical across standard library implementations.
std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

}  // namespace

std::vector<std::pair<std::string, int>> sample_turns(const std::vector<ChatSession>& sessions, std::size_t n,
                                                      std::uint64_t seed) {
    std::vector<std::pair<std::string, int>> all;
    for (const auto& s : sessions) {
        for (const auto& t : s.turns) all.emplace_back(s.session_id, t.turn_index);
    }
    std::sort(all.begin(), all.end());
    std::mt19937_64 rng(seed);
    const auto take = std::min(n, all.size());
    for (std::size_t i = 0; i < take; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_below(rng, all.size() - i));
        std::swap(all[i], all[j]);
    }
    all.resize(take);
    return all;
}

void to_json(json& j, const ComparisonTask& t) {
    j = json{{"task_id", t.task_id},         {"context", t.context},   {"side_a", t.side_a},
             {"side_b", t.side_b},           {"assignment", to_string(t.assignment)},
             {"rng_seed", t.rng_seed},       {"session_id", t.session_id},
             {"turn_index", t.turn_index}};
}

void from_json(const json& j, ComparisonTask& t) {
    t.task_id = j.at("task_id").get<std::string>();
    t.context = j.at("context").get<SessionContext>();
    t.side_a = j.at("side_a").get<SuggestionSet>();
    t.side_b = j.at("side_b").get<SuggestionSet>();
    const auto a = assignment_from_string(j.at("assignment").get<std::string>());
    if (!a) throw Error(ErrorCode::InvalidRequest, "bad assignment in task " + t.task_id);
    t.assignment = *a;
    t.rng_seed = j.value("rng_seed", std::uint64_t{0});
    t.session_id = j.value("session_id", std::string{});
    t.turn_index = j.value("turn_index", 0);
}

void to_json(json& j, const AnnotationRecord& r) {
    j = json{{"task_id", r.task_id},           {"criterion", to_string(r.criterion)},
             {"choice", to_string(r.choice)},  {"annotator_id", r.annotator_id},
             {"role", r.role},                 {"recorded_at", format_timestamp(r.recorded_at)}};
}

void from_json(const json& j, AnnotationRecord& r) {
    r.task_id = j.at("task_id").get<std::string>();
    const auto raw_criterion = j.at("criterion").get<std::string>();
    const auto criterion = criterion_from_string(raw_criterion);
    if (!criterion) throw Error(ErrorCode::InvalidRequest, "unknown criterion " + raw_criterion);
    r.criterion = *criterion;
    const auto raw_choice = j.at("choice").get<std::string>();
    const auto choice = choice_from_string(raw_choice);
    if (!choice) throw Error(ErrorCode::InvalidRequest, "unknown choice " + raw_choice);
    r.choice = *choice;
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.role = j.value("role", std::string{});
    r.recorded_at = Timestamp{};
    if (auto it = j.find("recorded_at"); it != j.end() && it->is_string()) {
        r.recorded_at = parse_timestamp(it->get<std::string>()).value_or(Timestamp{});
    }
}

EvalStore::EvalStore(std::filesystem::path dir) {
    if (dir.empty()) return;
    std::filesystem::create_directories(dir);
    std::size_t skipped = 0;
    for (const auto& line : AppendLog::read_lines(dir / "tasks.jsonl")) {
        try {
            auto t = json::parse(line).get<ComparisonTask>();
            if (task_index_.count(t.task_id) != 0) continue;
            task_index_[t.task_id] = tasks_.size();
            tasks_.push_back(std::move(t));
        } catch (const std::exception&) {
            ++skipped;
        }
    }
    for (const auto& line : AppendLog::read_lines(dir / "annotations.jsonl")) {
        try {
            apply(json::parse(line).get<AnnotationRecord>());
        } catch (const std::exception&) {
            ++skipped;
        }
    }
    if (skipped > 0) log::warn("eval store: skipped " + std::to_string(skipped) + " unreadable lines");
    task_log_ = std::make_unique<AppendLog>(dir / "tasks.jsonl");
    annotation_log_ = std::make_unique<AppendLog>(dir / "annotations.jsonl");
}

void EvalStore::add_tasks(const std::vector<ComparisonTask>& tasks) {
    std::unique_lock lock(mutex_);
    std::set<std::string> incoming;
    for (const auto& t : tasks) {
        if (t.task_id.empty() || task_index_.count(t.task_id) != 0 || !incoming.insert(t.task_id).second) {
            throw Error(ErrorCode::InvalidRequest, "duplicate or empty task id '" + t.task_id + "'");
        }
    }
    for (const auto& t : tasks) {
        if (task_log_) task_log_->append(json(t).dump());
        task_index_[t.task_id] = tasks_.size();
        tasks_.push_back(t);
    }
}

std::optional<ComparisonTask> EvalStore::task(const std::string& task_id) const {
    std::shared_lock lock(mutex_);
    const auto it = task_index_.find(task_id);
    if (it == task_index_.end()) return std::nullopt;
    return tasks_[it->second];
}

std::vector<ComparisonTask> EvalStore::tasks() const {
    std::shared_lock lock(mutex_);
    return tasks_;
}

void EvalStore::apply(AnnotationRecord record) {
    Key key{record.task_id, record.criterion, record.annotator_id};
    annotations_.insert_or_assign(std::move(key), std::move(record));
}

AnnotationRecord EvalStore::record_annotation(AnnotationRecord record) {
    if (record.annotator_id.empty()) throw Error(ErrorCode::InvalidRequest, "annotator_id must be nonempty");
    if (record.recorded_at == Timestamp{}) record.recorded_at = now_utc();
    std::unique_lock lock(mutex_);
    if (task_index_.count(record.task_id) == 0) throw Error(ErrorCode::UnknownTask, record.task_id);
    if (annotation_log_) annotation_log_->append(json(record).dump());
    apply(record);
    return record;
}

std::vector<AnnotationRecord> EvalStore::annotations() const {
    std::shared_lock lock(mutex_);
    std::vector<AnnotationRecord> out;
    out.reserve(annotations_.size());
    for (const auto& [key, r] : annotations_) out.push_back(r);
    return out;
}

bool EvalStore::complete_for(const std::string& task_id, const std::string& annotator_id) const {
    return std::all_of(std::begin(kAllCriteria), std::end(kAllCriteria), [&](Criterion c) {
        return annotations_.count(Key{task_id, c, annotator_id}) != 0;
    });
}

std::optional<ComparisonTask> EvalStore::next_task_for(const std::string& annotator_id) const {
    std::shared_lock lock(mutex_);
    for (const auto& t : tasks_) {
        if (!complete_for(t.task_id, annotator_id)) return t;
    }
    return std::nullopt;
}

Progress EvalStore::progress(const std::string& annotator_id) const {
    std::shared_lock lock(mutex_);
    Progress p;
    p.total = tasks_.size();
    for (const auto& t : tasks_) {
        if (complete_for(t.task_id, annotator_id)) ++p.completed;
    }
    return p;
}

double Ratio::rounded(int digits) const {
    if (den == 0) return 0.0;
    std::int64_t scale = 1;
    for (int i = 0; i < digits; ++i) scale *= 10;
    // floor(num/den * scale + 1/2) with integers only.
    const std::int64_t units = (2 * num * scale + den) / (2 * den);
    return static_cast<double>(units) / static_cast<double>(scale);
}

std::string_view to_string(StratifyBy s) { return s == StratifyBy::Annotator ? "annotator" : "role"; }

StratifyBy stratify_from_string(std::string_view s) {
    const auto f = fold(s);
    if (f == "annotator" || f == "annotatorid") return StratifyBy::Annotator;
    if (f == "role") return StratifyBy::Role;
    throw Error(ErrorCode::InvalidArgument, "unknown stratification key " + std::string(s));
}

const EvalStratum* EvalReport::find(std::string_view key) const {
    for (const auto& s : strata) {
        if (s.key == key) return &s;
    }
    return nullptr;
}

EvalReport aggregate(std::span<const AnnotationRecord> records, std::span<const ComparisonTask> tasks,
                     std::optional<StratifyBy> stratify_by) {
    std::map<std::string_view, Assignment> assignments;
    for (const auto& t : tasks) assignments.emplace(t.task_id, t.assignment);

    std::map<std::string, EvalStratum> strata;
    for (const auto& r : records) {
        const auto it = assignments.find(r.task_id);
        if (it == assignments.end()) throw Error(ErrorCode::OrphanRecord, "task " + r.task_id);
        std::string key = "all";
        if (stratify_by == StratifyBy::Annotator) key = r.annotator_id;
        if (stratify_by == StratifyBy::Role) key = r.role;
        auto& stratum = strata[key];
        stratum.key = key;
        auto& stats = stratum.criteria[r.criterion];
        ++stats.counts[static_cast<std::size_t>(derandomize(r.choice, it->second))];
        ++stats.n;
    }
    EvalReport report;
    report.stratify = stratify_by;
    for (auto& [key, stratum] : strata) {
        for (const auto c : kAllCriteria) stratum.criteria.try_emplace(c);
        report.strata.push_back(std::move(stratum));
    }
    return report;
}

json report_to_json(const EvalReport& report) {
    json strata = json::array();
    for (const auto& s : report.strata) {
        json criteria = json::array();
        for (const auto& [criterion, stats] : s.criteria) {
            json counts = json::object();
            json proportions = json::object();
            json rounded = json::object();
            for (const auto o : kAllOutcomes) {
                const auto name = std::string(to_string(o));
                counts[name] = stats.count(o);
                proportions[name] = stats.proportion(o).value();
                rounded[name] = stats.proportion(o).rounded(3);
            }
            criteria.push_back(json{{"criterion", to_string(criterion)},
                                    {"n", stats.n},
                                    {"counts", counts},
                                    {"proportions", proportions},
                                    {"rounded", rounded}});
        }
        strata.push_back(json{{"key", s.key}, {"criteria", criteria}});
    }
    return json{{"stratify", report.stratify ? json(std::string(to_string(*report.stratify))) : json(nullptr)},
                {"strata", strata}};
}

std::string format_report_table(const EvalReport& report) {
    const bool stratified = report.stratify.has_value();
    const char* stratum_header = report.stratify == StratifyBy::Role ? "Role" : "Annotator ID";
    std::ostringstream out;
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %12s %15s %11s %8s", "", "Equally Good", "Baseline Better",
                  "Ours Better", "Both Bad");
    out << line;
    if (stratified) out << "  " << stratum_header;
    out << "  n\n";
    // Group rows by criterion first, strata within, as in a per-annotator table.
    for (const auto c : kAllCriteria) {
        for (const auto& s : report.strata) {
            const auto& stats = s.criteria.at(c);
            std::snprintf(line, sizeof(line), "%-16s %12.3f %15.3f %11.3f %8.3f", std::string(to_string(c)).c_str(),
                          stats.proportion(Outcome::EquallyGood).rounded(3),
                          stats.proportion(Outcome::BaselineBetter).rounded(3),
                          stats.proportion(Outcome::OursBetter).rounded(3),
                          stats.proportion(Outcome::BothBad).rounded(3));
            out << line;
            if (stratified) {
                std::snprintf(line, sizeof(line), "  %-*s", static_cast<int>(std::string_view(stratum_header).size()),
                              s.key.c_str());
                out << line;
            }
            out << "  " << stats.n << "\n";
        }
    }
    return out.str();
}

}  // namespace nqs
