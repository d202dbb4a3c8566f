#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "nqs/append_log.hpp"
#include "nqs/core_model.hpp"
#include "nqs/llm_gateway.hpp"

namespace nqs {

enum class CategoryName { Expansion, FollowUp, Other };

struct QuestionCategory {
    CategoryName name = CategoryName::Other;
    std::string description;

    bool operator==(const QuestionCategory&) const = default;
};

// Canonical identifier ("FollowUp") and the label used in prompts and
// suggestion tags ("Follow-up").
std::string_view canonical_name(CategoryName c);
std::string_view display_name(CategoryName c);

// Case-, space-, hyphen- and underscore-insensitive match against the three
// known names.
std::optional<CategoryName> category_from_string(std::string_view raw);

std::string default_description(CategoryName c);

// Expansion, FollowUp and Other with their default descriptions.
std::vector<QuestionCategory> default_registry();

// Deduplicates by name and guarantees Expansion, FollowUp and Other exist.
std::vector<QuestionCategory> normalize_registry(std::vector<QuestionCategory> registry);

// The categories every Enhanced set must cover.
std::vector<QuestionCategory> required_categories();

void to_json(nlohmann::json& j, const QuestionCategory& c);
void from_json(const nlohmann::json& j, QuestionCategory& c);

std::vector<QuestionCategory> load_registry(const std::filesystem::path& path);
void save_registry(const std::filesystem::path& path, const std::vector<QuestionCategory>& registry);

enum class SuggestionWarning { TooShort, TooLong, NotInterrogative };

std::string_view to_string(SuggestionWarning w);

inline constexpr int kMinSuggestionWords = 8;
inline constexpr int kMaxSuggestionWords = 15;

struct Suggestion {
    std::string text;
    CategoryName category = CategoryName::Other;
    int word_count = 0;
    std::vector<SuggestionWarning> warnings;

    bool operator==(const Suggestion&) const = default;
};

// "<text> (<category label>)"
std::string render_suggestion(const Suggestion& s);

enum class Mode { Baseline, Enhanced };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

struct SuggestionSet {
    std::vector<Suggestion> suggestions;
    Mode mode = Mode::Enhanced;
    std::string prompt_fingerprint;
    std::string raw_completion;
    std::vector<std::string> rejects;
    bool degraded = false;

    bool operator==(const SuggestionSet&) const = default;
};

void to_json(nlohmann::json& j, const Suggestion& s);
void from_json(const nlohmann::json& j, Suggestion& s);
void to_json(nlohmann::json& j, const SuggestionSet& s);
void from_json(const nlohmann::json& j, SuggestionSet& s);

struct PromptTemplate {
    std::string body;
    std::vector<std::string> few_shot_examples;
    std::vector<QuestionCategory> required_categories;

    static PromptTemplate default_template();
    // Body from a UTF-8 file; examples and required categories from the default.
    static PromptTemplate from_file(const std::filesystem::path& path);

    // Throws MalformedTemplate unless {documents}, {query_history}, {query}
    // and {response} each occur exactly once.
    void check() const;
};

inline constexpr std::size_t kDefaultPromptDocs = 4;
inline constexpr std::size_t kDocCharLimit = 1500;

// Section headers that distinguish the two prompt styles.
inline constexpr std::string_view kHistoryHeader = "Earlier questions from this chat session";
inline constexpr std::string_view kCategoriesHeader = "Categories for Suggested Questions";
inline constexpr std::string_view kNoHistoryMarker = "(none)";
inline constexpr std::string_view kNoDocumentsMarker = "(no documents retrieved)";
inline constexpr std::string_view kSuggestionsMarker = "<QUERY SUGGESTIONS>:";

std::string render_documents(const std::vector<DocumentRef>& docs, std::size_t max_docs,
                             std::size_t char_limit = kDocCharLimit);
std::string render_history(const std::vector<std::string>& prior_queries);
std::string render_categories(const std::vector<QuestionCategory>& registry,
                              const std::vector<QuestionCategory>& required);

std::string build_enhanced_prompt(const SessionContext& ctx, const PromptTemplate& tmpl,
                                  const std::vector<QuestionCategory>& registry,
                                  std::size_t max_docs = kDefaultPromptDocs);

// Combined answer + suggestions prompt without history or categories.
std::string build_baseline_prompt(const std::string& query, const std::vector<DocumentRef>& docs,
                                  std::size_t max_docs = kDefaultPromptDocs);

// Whitespace tokens after stripping terminal punctuation.
int word_count(std::string_view text);

// Strict grammar: "<text> (<category>)" per line. Throws NoSuggestionsParsed
// when nothing matches.
SuggestionSet parse_suggestions(std::string_view raw, const std::vector<QuestionCategory>& registry);

// Lenient parse of a combined answer + suggestions completion.
SuggestionSet parse_baseline_suggestions(std::string_view raw, const std::vector<QuestionCategory>& registry);

// Attaches word counts and warnings and flags missing required categories.
// Never removes suggestions; idempotent.
SuggestionSet validate_suggestions(SuggestionSet set, const std::vector<QuestionCategory>& required);

// Picks up to `count` suggestions for display: first the earliest suggestion
// of each required category, then the remaining ones in order.
std::vector<Suggestion> surface_suggestions(const SuggestionSet& set, std::size_t count,
                                            const std::vector<QuestionCategory>& required = required_categories());

struct StoredSuggestionSet {
    std::string session_id;
    int turn_index = 0;
    SuggestionSet set;
};

// Generated sets keyed by (session_id, turn_index, mode); latest write wins.
class SuggestionStore {
public:
    explicit SuggestionStore(std::filesystem::path file = {});

    void put(const std::string& session_id, int turn_index, const SuggestionSet& set);
    std::optional<SuggestionSet> get(const std::string& session_id, int turn_index, Mode mode) const;
    std::vector<StoredSuggestionSet> for_session(const std::string& session_id) const;

private:
    using Key = std::tuple<std::string, int, Mode>;
    std::unique_ptr<AppendLog> log_;
    mutable std::shared_mutex mutex_;
    std::map<Key, SuggestionSet> sets_;
};

struct EngineConfig {
    std::size_t window = kDefaultContextWindow;
    std::size_t k_docs = kDefaultPromptDocs;
    std::size_t surfaced = 2;
    int max_tokens = 512;
    double temperature = 0.2;
};

class SuggestionEngine {
public:
    SuggestionEngine(SessionStore& sessions, Gateway& gateway, PromptTemplate tmpl,
                     std::vector<QuestionCategory> registry, SuggestionStore* store = nullptr,
                     EngineConfig config = {});

    // Suggestions for the latest turn of the session.
    SuggestionSet suggest_next_questions(const std::string& session_id, Mode mode,
                                         std::optional<std::size_t> k_docs = std::nullopt);

    // Suggestions as they would have been generated right after `turn_index`.
    SuggestionSet suggest_at(const std::string& session_id, std::size_t turn_index, Mode mode,
                             std::optional<std::size_t> k_docs = std::nullopt);

    // Baseline generation for a query that is not (yet) part of a session.
    SuggestionSet suggest_baseline(const std::string& query, const std::vector<DocumentRef>& docs,
                                   std::optional<std::size_t> k_docs = std::nullopt);

    // Runs the prompt for a context without touching the session store.
    SuggestionSet generate(const SessionContext& ctx, Mode mode, std::size_t k_docs);

    void set_registry(std::vector<QuestionCategory> registry);
    std::vector<QuestionCategory> registry() const;
    const EngineConfig& config() const noexcept { return config_; }

private:
    SessionStore& sessions_;
    Gateway& gateway_;
    PromptTemplate template_;
    mutable std::shared_mutex registry_mutex_;
    std::vector<QuestionCategory> registry_;
    SuggestionStore* store_;
    EngineConfig config_;
};

}  // namespace nqs
