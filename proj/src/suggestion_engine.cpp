#include "nqs/suggestion_engine.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "nqs/error.hpp"
#include "nqs/text.hpp"

namespace nqs {

using nlohmann::json;

std::string_view canonical_name(CategoryName c) {
    switch (c) {
        case CategoryName::Expansion: return "Expansion";
        case CategoryName::FollowUp: return "FollowUp";
        case CategoryName::Other: return "Other";
    }
    return "Other";
}

std::string_view display_name(CategoryName c) {
    switch (c) {
        case CategoryName::Expansion: return "Expansion";
        case CategoryName::FollowUp: return "Follow-up";
        case CategoryName::Other: return "Other";
    }
    return "Other";
}

namespace {

std::string fold_name(std::string_view raw) {
    std::string out;
    for (const char ch : raw) {
        const auto c = static_cast<unsigned char>(ch);
        if (c == '-' || c == '_' || std::isspace(c) != 0) continue;
        out.push_back(static_cast<char>(std::tolower(c)));
    }
    return out;
}

}  // namespace

std::optional<CategoryName> category_from_string(std::string_view raw) {
    const auto folded = fold_name(raw);
    for (const auto c : {CategoryName::Expansion, CategoryName::FollowUp, CategoryName::Other}) {
        if (folded == fold_name(canonical_name(c))) return c;
    }
    return std::nullopt;
}

std::string default_description(CategoryName c) {
    switch (c) {
        case CategoryName::Expansion:
            return "Broaden the current topic with closely related concepts or details the user may not know yet.";
        case CategoryName::FollowUp:
            return "Continue from the assistant's answer, for example the next step when the answer describes a "
                   "multi-step task, or what to check or decide afterwards.";
        case CategoryName::Other:
            return "Anything else that helps the user understand the platform but fits neither category above.";
    }
    return {};
}

std::vector<QuestionCategory> default_registry() {
    return {{CategoryName::Expansion, default_description(CategoryName::Expansion)},
            {CategoryName::FollowUp, default_description(CategoryName::FollowUp)},
            {CategoryName::Other, default_description(CategoryName::Other)}};
}

std::vector<QuestionCategory> normalize_registry(std::vector<QuestionCategory> registry) {
    std::vector<QuestionCategory> out;
    std::set<CategoryName> seen;
    for (auto& c : registry) {
        if (!seen.insert(c.name).second) continue;
        if (c.description.empty()) c.description = default_description(c.name);
        out.push_back(std::move(c));
    }
    for (const auto name : {CategoryName::Expansion, CategoryName::FollowUp, CategoryName::Other}) {
        if (seen.count(name) == 0) out.push_back({name, default_description(name)});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.name < b.name; });
    return out;
}

std::vector<QuestionCategory> required_categories() {
    return {{CategoryName::Expansion, default_description(CategoryName::Expansion)},
            {CategoryName::FollowUp, default_description(CategoryName::FollowUp)}};
}

void to_json(json& j, const QuestionCategory& c) {
    j = json{{"name", canonical_name(c.name)}, {"description", c.description}};
}

void from_json(const json& j, QuestionCategory& c) {
    const auto raw = j.at("name").get<std::string>();
    const auto name = category_from_string(raw);
    if (!name) throw Error(ErrorCode::InvalidRequest, "unknown category " + raw);
    c.name = *name;
    c.description = j.value("description", std::string{});
}

std::vector<QuestionCategory> load_registry(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read registry " + path.string());
    try {
        json j;
        in >> j;
        const auto& list = j.is_object() ? j.at("categories") : j;
        return normalize_registry(list.get<std::vector<QuestionCategory>>());
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, "registry " + path.string() + ": " + e.what());
    }
}

void save_registry(const std::filesystem::path& path, const std::vector<QuestionCategory>& registry) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write registry " + path.string());
    out << json{{"categories", registry}}.dump(2) << '\n';
}

std::string_view to_string(SuggestionWarning w) {
    switch (w) {
        case SuggestionWarning::TooShort: return "TooShort";
        case SuggestionWarning::TooLong: return "TooLong";
        case SuggestionWarning::NotInterrogative: return "NotInterrogative";
    }
    return "";
}

std::string render_suggestion(const Suggestion& s) {
    return s.text + " (" + std::string(display_name(s.category)) + ")";
}

std::string_view to_string(Mode m) { return m == Mode::Baseline ? "Baseline" : "Enhanced"; }

Mode mode_from_string(std::string_view s) {
    const auto lower = text::to_lower(s);
    if (lower == "baseline") return Mode::Baseline;
    if (lower == "enhanced") return Mode::Enhanced;
    throw Error(ErrorCode::InvalidArgument, "unknown mode " + std::string(s));
}

void to_json(json& j, const Suggestion& s) {
    std::vector<std::string> warnings;
    for (const auto w : s.warnings) warnings.emplace_back(to_string(w));
    j = json{{"text", s.text},
             {"category", canonical_name(s.category)},
             {"word_count", s.word_count},
             {"warnings", warnings}};
}

void from_json(const json& j, Suggestion& s) {
    s.text = j.at("text").get<std::string>();
    s.category = category_from_string(j.at("category").get<std::string>()).value_or(CategoryName::Other);
    s.word_count = j.value("word_count", word_count(s.text));
    s.warnings.clear();
    for (const auto& w : j.value("warnings", std::vector<std::string>{})) {
        for (const auto cand :
             {SuggestionWarning::TooShort, SuggestionWarning::TooLong, SuggestionWarning::NotInterrogative}) {
            if (w == to_string(cand)) s.warnings.push_back(cand);
        }
    }
}

void to_json(json& j, const SuggestionSet& s) {
    j = json{{"mode", to_string(s.mode)},
             {"prompt_fingerprint", s.prompt_fingerprint},
             {"raw_completion", s.raw_completion},
             {"degraded", s.degraded},
             {"suggestions", s.suggestions},
             {"rejects", s.rejects}};
}

void from_json(const json& j, SuggestionSet& s) {
    s.mode = mode_from_string(j.at("mode").get<std::string>());
    s.prompt_fingerprint = j.value("prompt_fingerprint", std::string{});
    s.raw_completion = j.value("raw_completion", std::string{});
    s.degraded = j.value("degraded", false);
    s.suggestions = j.value("suggestions", std::vector<Suggestion>{});
    s.rejects = j.value("rejects", std::vector<std::string>{});
}

// ---------------------------------------------------------------------------
// Prompt construction

namespace {

constexpr std::string_view kRequiredPlaceholders[] = {"{documents}", "{query_history}", "{query}", "{response}"};

std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t count = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + 1)) {
        ++count;
    }
    return count;
}

// Single pass so that substituted values are never re-expanded.
std::string substitute(std::string_view body, const std::map<std::string, std::string, std::less<>>& values) {
    std::string out;
    out.reserve(body.size() * 2);
    std::size_t i = 0;
    while (i < body.size()) {
        if (body[i] == '{') {
            const auto close = body.find('}', i);
            if (close != std::string_view::npos) {
                const auto it = values.find(body.substr(i, close - i + 1));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(body[i++]);
    }
    return out;
}

const char* const kDefaultBody = R"(Act as a specialist for the platform the user is working with. Your job is to propose questions the user could ask next.

## Context
The user asked the AI assistant a question and received an answer. The documents below were retrieved while answering; some of them may be partial or off topic:
{documents}

## Earlier questions from this chat session
Listed oldest first. Consult them only when they help; the list can be empty:
{query_history}

## Goal
Propose next questions of several kinds that help the user learn more about the platform and what it can do, building on the user's question and the assistant's answer.

## Categories for Suggested Questions
{categories}

## Requirements for Suggested Questions
1. Keep every question short and plain.
2. Use between 8 and 15 words per question.
3. End every question with its category name in parentheses, for example (Expansion).
4. Write one question per line without numbering or bullets.

## Examples
Each example may show only some of the categories.
{examples}

Now write suggested questions for the current user question.
<CURRENT QUERY>: {query}
<AI ASSISTANT RESPONSE>: {response}
<QUERY SUGGESTIONS>:
)";

const char* const kDefaultExample = R"(<CURRENT QUERY>: How do I schedule a recurring dataset export?
<AI ASSISTANT RESPONSE>: Open the dataset, choose Export, pick a destination and then set a daily or weekly schedule...
<QUERY SUGGESTIONS>:
Which destinations support scheduled dataset exports and what limits do they have? (Expansion)
How can I check whether last night's scheduled export finished without errors? (Follow-up))";

}  // namespace

PromptTemplate PromptTemplate::default_template() {
    return {kDefaultBody, {kDefaultExample}, nqs::required_categories()};
}

PromptTemplate PromptTemplate::from_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot read template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto tmpl = default_template();
    tmpl.body = ss.str();
    tmpl.check();
    return tmpl;
}

void PromptTemplate::check() const {
    for (const auto placeholder : kRequiredPlaceholders) {
        const auto n = count_occurrences(body, placeholder);
        if (n != 1) {
            throw Error(ErrorCode::MalformedTemplate, std::string(placeholder) + " occurs " + std::to_string(n) +
                                                          " times, expected exactly once");
        }
    }
}

std::string render_documents(const std::vector<DocumentRef>& docs, std::size_t max_docs, std::size_t char_limit) {
    const auto n = std::min(max_docs, docs.size());
    if (n == 0) return std::string(kNoDocumentsMarker);
    std::string out;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) out += "\n\n";
        out += "[" + docs[i].doc_id + "] " + docs[i].title + "\n" + text::truncate_utf8(docs[i].content, char_limit);
    }
    return out;
}

std::string render_history(const std::vector<std::string>& prior_queries) {
    if (prior_queries.empty()) return std::string(kNoHistoryMarker);
    std::string out;
    for (std::size_t i = 0; i < prior_queries.size(); ++i) {
        if (i > 0) out += "\n";
        out += std::to_string(i + 1) + ". " + prior_queries[i];
    }
    return out;
}

std::string render_categories(const std::vector<QuestionCategory>& registry,
                              const std::vector<QuestionCategory>& required) {
    std::string names;
    for (std::size_t i = 0; i < required.size(); ++i) {
        if (i > 0) names += ", ";
        names += display_name(required[i].name);
    }
    std::string out = "Write at least one question for each of these categories: " + names +
                      ". Add questions from the remaining categories only when they are useful.";
    int number = 1;
    for (const auto& c : registry) {
        out += "\n" + std::to_string(number++) + ". " + std::string(display_name(c.name)) + ": " + c.description;
    }
    return out;
}

std::string build_enhanced_prompt(const SessionContext& ctx, const PromptTemplate& tmpl,
                                  const std::vector<QuestionCategory>& registry, std::size_t max_docs) {
    tmpl.check();
    const auto required = tmpl.required_categories.empty() ? required_categories() : tmpl.required_categories;
    const auto categories = render_categories(normalize_registry(registry), required);

    std::string body = tmpl.body;
    if (body.find("{categories}") == std::string::npos) {
        // Put the category section right before the line holding {query}.
        const auto q = body.find("{query}");
        const auto line_start = body.rfind('\n', q);
        const auto at = line_start == std::string::npos ? 0 : line_start + 1;
        body.insert(at, "## " + std::string(kCategoriesHeader) + "\n{categories}\n\n");
    }

    std::string examples;
    for (std::size_t i = 0; i < tmpl.few_shot_examples.size(); ++i) {
        if (i > 0) examples += "\n\n";
        examples += "EXAMPLE " + std::to_string(i + 1) + ":\n" + tmpl.few_shot_examples[i];
    }

    return substitute(body, {{"{documents}", render_documents(ctx.retrieved, max_docs)},
                             {"{query_history}", render_history(ctx.prior_queries)},
                             {"{query}", ctx.current_query},
                             {"{response}", ctx.current_response},
                             {"{categories}", categories},
                             {"{examples}", examples}});
}

std::string build_baseline_prompt(const std::string& query, const std::vector<DocumentRef>& docs,
                                  std::size_t max_docs) {
    if (query.empty()) throw Error(ErrorCode::EmptyQuery, "baseline prompt needs a query");
    std::string out =
        "Act as a specialist for the platform the user is working with. Answer the user's question using the "
        "documents below, then propose a few questions the user could ask next.\n\n"
        "## Documents\n";
    out += render_documents(docs, max_docs);
    out += "\n\n## Question\n" + query + "\n\n";
    out += "Write the answer first. Then write a line containing only ";
    out += kSuggestionsMarker;
    out += " followed by one suggested question per line.\n";
    return out;
}

// ---------------------------------------------------------------------------
// Parsing and validation

namespace {

std::string strip_terminal_punctuation(std::string_view s) {
    auto t = text::trim(s);
    while (!t.empty() && std::string_view(".?!,;:").find(t.back()) != std::string_view::npos) {
        t.pop_back();
        while (!t.empty() && std::isspace(static_cast<unsigned char>(t.back())) != 0) t.pop_back();
    }
    return t;
}

std::string strip_list_marker(std::string_view line) {
    static const std::regex marker(R"(^\s*(?:[-*]|\xE2\x80\xA2|\d{1,2}[.)])\s+)");
    return text::trim(std::regex_replace(std::string(line), marker, "", std::regex_constants::format_first_only));
}

bool starts_with_interrogative(std::string_view text) {
    static const std::set<std::string> words = {
        "how",   "what",   "why",  "when", "where", "which", "who",  "whom",  "whose", "can",
        "could", "should", "would", "will", "is",   "are",   "do",   "does",  "did",   "may",
        "might", "shall",  "was",   "were", "has",  "have",  "am",   "must",
    };
    const auto tokens = text::split_whitespace(text);
    if (tokens.empty()) return false;
    std::string first;
    for (const char ch : tokens.front()) {
        if (std::isalpha(static_cast<unsigned char>(ch)) != 0) first.push_back(static_cast<char>(std::tolower(ch)));
    }
    return words.count(first) != 0;
}

bool in_registry(CategoryName c, const std::vector<QuestionCategory>& registry) {
    return std::any_of(registry.begin(), registry.end(), [c](const auto& r) { return r.name == c; });
}

struct TaggedLine {
    std::string text;
    std::string tag;
};

std::optional<TaggedLine> split_tag(const std::string& line) {
    static const std::regex grammar(R"(^(.*\S)\s*\(([^()]*)\)\s*$)");
    std::smatch m;
    if (!std::regex_match(line, m, grammar)) return std::nullopt;
    return TaggedLine{text::trim(m[1].str()), text::trim(m[2].str())};
}

}  // namespace

int word_count(std::string_view text) {
    return static_cast<int>(text::split_whitespace(strip_terminal_punctuation(text)).size());
}

SuggestionSet parse_suggestions(std::string_view raw, const std::vector<QuestionCategory>& registry) {
    SuggestionSet set;
    set.mode = Mode::Enhanced;
    set.raw_completion = std::string(raw);
    for (const auto& line : text::split_lines(raw)) {
        const auto cleaned = strip_list_marker(line);
        if (cleaned.empty()) continue;
        const auto tagged = split_tag(cleaned);
        const auto category = tagged ? category_from_string(tagged->tag) : std::nullopt;
        if (!tagged || tagged->text.empty() || !category || !in_registry(*category, registry)) {
            set.rejects.push_back(text::trim(line));
            continue;
        }
        set.suggestions.push_back({tagged->text, *category, word_count(tagged->text), {}});
    }
    if (set.suggestions.empty()) {
        throw Error(ErrorCode::NoSuggestionsParsed, std::to_string(set.rejects.size()) + " lines, none matched");
    }
    return set;
}

SuggestionSet parse_baseline_suggestions(std::string_view raw, const std::vector<QuestionCategory>& registry) {
    SuggestionSet set;
    set.mode = Mode::Baseline;
    set.raw_completion = std::string(raw);
    std::string_view tail = raw;
    if (const auto pos = raw.rfind(kSuggestionsMarker); pos != std::string_view::npos) {
        tail = raw.substr(pos + kSuggestionsMarker.size());
    }
    for (const auto& line : text::split_lines(tail)) {
        const auto cleaned = strip_list_marker(line);
        if (cleaned.empty()) continue;
        if (const auto tagged = split_tag(cleaned)) {
            const auto category = category_from_string(tagged->tag);
            if (category && in_registry(*category, registry) && !tagged->text.empty()) {
                set.suggestions.push_back({tagged->text, *category, word_count(tagged->text), {}});
                continue;
            }
        }
        if (cleaned.back() == '?') {
            set.suggestions.push_back({cleaned, CategoryName::Other, word_count(cleaned), {}});
        } else {
            set.rejects.push_back(text::trim(line));
        }
    }
    if (set.suggestions.empty()) {
        throw Error(ErrorCode::NoSuggestionsParsed, "no suggested questions in baseline completion");
    }
    return set;
}

SuggestionSet validate_suggestions(SuggestionSet set, const std::vector<QuestionCategory>& required) {
    for (auto& s : set.suggestions) {
        s.word_count = word_count(s.text);
        s.warnings.clear();
        if (s.word_count < kMinSuggestionWords) s.warnings.push_back(SuggestionWarning::TooShort);
        if (s.word_count > kMaxSuggestionWords) s.warnings.push_back(SuggestionWarning::TooLong);
        const auto trimmed = text::trim(s.text);
        const bool question_mark = !trimmed.empty() && trimmed.back() == '?';
        if (!question_mark && !starts_with_interrogative(trimmed)) {
            s.warnings.push_back(SuggestionWarning::NotInterrogative);
        }
    }
    set.degraded = std::any_of(required.begin(), required.end(), [&](const QuestionCategory& c) {
        return std::none_of(set.suggestions.begin(), set.suggestions.end(),
                            [&](const Suggestion& s) { return s.category == c.name; });
    });
    return set;
}

std::vector<Suggestion> surface_suggestions(const SuggestionSet& set, std::size_t count,
                                            const std::vector<QuestionCategory>& required) {
    std::vector<bool> taken(set.suggestions.size(), false);
    std::vector<std::size_t> picked;
    for (const auto& c : required) {
        if (picked.size() >= count) break;
        for (std::size_t i = 0; i < set.suggestions.size(); ++i) {
            if (!taken[i] && set.suggestions[i].category == c.name) {
                taken[i] = true;
                picked.push_back(i);
                break;
            }
        }
    }
    for (std::size_t i = 0; i < set.suggestions.size() && picked.size() < count; ++i) {
        if (!taken[i]) {
            taken[i] = true;
            picked.push_back(i);
        }
    }
    std::sort(picked.begin(), picked.end());
    std::vector<Suggestion> out;
    out.reserve(picked.size());
    for (const auto i : picked) out.push_back(set.suggestions[i]);
    return out;
}

// ---------------------------------------------------------------------------
// Persistence

SuggestionStore::SuggestionStore(std::filesystem::path file) {
    if (file.empty()) return;
    for (const auto& line : AppendLog::read_lines(file)) {
        try {
            const auto j = json::parse(line);
            auto set = j.at("set").get<SuggestionSet>();
            const Key key{j.at("session_id").get<std::string>(), j.at("turn_index").get<int>(), set.mode};
            sets_.insert_or_assign(key, std::move(set));
        } catch (const std::exception&) {
            // Torn trailing line; ignore.
        }
    }
    log_ = std::make_unique<AppendLog>(std::move(file));
}

void SuggestionStore::put(const std::string& session_id, int turn_index, const SuggestionSet& set) {
    std::unique_lock lock(mutex_);
    if (log_) {
        log_->append(json{{"session_id", session_id}, {"turn_index", turn_index}, {"set", set}}.dump());
    }
    sets_.insert_or_assign(Key{session_id, turn_index, set.mode}, set);
}

std::optional<SuggestionSet> SuggestionStore::get(const std::string& session_id, int turn_index, Mode mode) const {
    std::shared_lock lock(mutex_);
    const auto it = sets_.find(Key{session_id, turn_index, mode});
    if (it == sets_.end()) return std::nullopt;
    return it->second;
}

std::vector<StoredSuggestionSet> SuggestionStore::for_session(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    std::vector<StoredSuggestionSet> out;
    for (auto it = sets_.lower_bound(Key{session_id, 0, Mode::Baseline});
         it != sets_.end() && std::get<0>(it->first) == session_id; ++it) {
        out.push_back({session_id, std::get<1>(it->first), it->second});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Engine

SuggestionEngine::SuggestionEngine(SessionStore& sessions, Gateway& gateway, PromptTemplate tmpl,
                                   std::vector<QuestionCategory> registry, SuggestionStore* store,
                                   EngineConfig config)
    : sessions_(sessions),
      gateway_(gateway),
      template_(std::move(tmpl)),
      registry_(normalize_registry(std::move(registry))),
      store_(store),
      config_(config) {
    template_.check();
}

void SuggestionEngine::set_registry(std::vector<QuestionCategory> registry) {
    auto normalized = normalize_registry(std::move(registry));
    std::unique_lock lock(registry_mutex_);
    registry_ = std::move(normalized);
}

std::vector<QuestionCategory> SuggestionEngine::registry() const {
    std::shared_lock lock(registry_mutex_);
    return registry_;
}

SuggestionSet SuggestionEngine::generate(const SessionContext& ctx, Mode mode, std::size_t k_docs) {
    const auto reg = registry();
    const auto prompt = mode == Mode::Enhanced ? build_enhanced_prompt(ctx, template_, reg, k_docs)
                                               : build_baseline_prompt(ctx.current_query, ctx.retrieved, k_docs);
    CompletionRequest request;
    request.prompt = prompt;
    request.max_tokens = config_.max_tokens;
    request.temperature = config_.temperature;
    const auto completion = gateway_.complete(request);

    SuggestionSet set;
    if (mode == Mode::Enhanced) {
        set = validate_suggestions(parse_suggestions(completion.text, reg), template_.required_categories);
    } else {
        set = parse_baseline_suggestions(completion.text, reg);
    }
    set.prompt_fingerprint = text::fingerprint(prompt);
    return set;
}

SuggestionSet SuggestionEngine::suggest_at(const std::string& session_id, std::size_t turn_index, Mode mode,
                                           std::optional<std::size_t> k_docs) {
    const auto ctx = sessions_.context_at(session_id, turn_index, config_.window);
    auto set = generate(ctx, mode, k_docs.value_or(config_.k_docs));
    if (store_) store_->put(session_id, static_cast<int>(turn_index), set);
    return set;
}

SuggestionSet SuggestionEngine::suggest_next_questions(const std::string& session_id, Mode mode,
                                                       std::optional<std::size_t> k_docs) {
    const auto session = sessions_.get(session_id);
    if (session.turns.empty()) {
        throw Error(ErrorCode::NoInteractionYet, "session " + session_id + " has no turns");
    }
    return suggest_at(session_id, session.turns.size(), mode, k_docs);
}

SuggestionSet SuggestionEngine::suggest_baseline(const std::string& query, const std::vector<DocumentRef>& docs,
                                                 std::optional<std::size_t> k_docs) {
    SessionContext ctx;
    ctx.current_query = query;
    ctx.retrieved = docs;
    return generate(ctx, Mode::Baseline, k_docs.value_or(config_.k_docs));
}

}  // namespace nqs
