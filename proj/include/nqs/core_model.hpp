#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "json.hpp"
#include "nqs/append_log.hpp"
#include "nqs/clock.hpp"

namespace nqs {

struct DocumentRef {
    std::string doc_id;
    std::string title;
    std::string content;
    std::optional<std::string> source_uri;

    bool operator==(const DocumentRef&) const = default;
};

struct InteractionTurn {
    int turn_index = 0;
    std::string query;
    std::string response;
    std::vector<DocumentRef> retrieved;
    Timestamp timestamp{};

    bool operator==(const InteractionTurn&) const = default;
};

struct ChatSession {
    std::string session_id;
    std::string user_id;
    std::vector<InteractionTurn> turns;
    Timestamp created_at{};

    std::size_t turn_count() const noexcept { return turns.size(); }
};

// Within-session inputs for suggestion generation: the latest turn plus the
// queries that preceded it (oldest first, bounded by the window).
struct SessionContext {
    std::string current_query;
    std::string current_response;
    std::vector<std::string> prior_queries;
    std::vector<DocumentRef> retrieved;

    bool operator==(const SessionContext&) const = default;
};

inline constexpr std::size_t kDefaultContextWindow = 5;

// Builds the context for the turn at `turn_index` (1-based) using only the
// given session's turns.
SessionContext make_context(const ChatSession& session, std::size_t turn_index, std::size_t window);

void to_json(nlohmann::json& j, const DocumentRef& d);
void from_json(const nlohmann::json& j, DocumentRef& d);
void to_json(nlohmann::json& j, const SessionContext& c);
void from_json(const nlohmann::json& j, SessionContext& c);

// One line of the interaction log: {session_id, user_id, turn_index, query,
// response, retrieved_doc_ids, timestamp}. Extra fields are ignored on read.
struct InteractionLogRecord {
    std::string session_id;
    std::string user_id;
    int turn_index = 0;
    std::string query;
    std::string response;
    std::vector<std::string> retrieved_doc_ids;
    Timestamp timestamp{};
};

nlohmann::json to_log_json(const ChatSession& session, const InteractionTurn& turn);
InteractionLogRecord parse_log_record(const nlohmann::json& j);

using DocumentResolver = std::function<std::optional<DocumentRef>(const std::string& doc_id)>;

// Session store backed by two append-only JSON Lines files in `data_dir`
// (sessions.jsonl, interactions.jsonl). The in-memory index is rebuilt from
// them on construction. An empty path keeps everything in memory.
//
// Thread safety: appends to one session are serialized; different sessions
// proceed independently; readers get a consistent snapshot.
class SessionStore {
public:
    explicit SessionStore(std::filesystem::path data_dir = {});
    ~SessionStore();

    SessionStore(const SessionStore&) = delete;
    SessionStore& operator=(const SessionStore&) = delete;

    ChatSession create_session(const std::string& user_id);

    InteractionTurn append_turn(const std::string& session_id, const std::string& query,
                                const std::string& response, std::vector<DocumentRef> retrieved);

    SessionContext context_for_suggestion(const std::string& session_id,
                                          std::size_t window = kDefaultContextWindow) const;

    SessionContext context_at(const std::string& session_id, std::size_t turn_index,
                              std::size_t window = kDefaultContextWindow) const;

    std::optional<ChatSession> find(const std::string& session_id) const;
    ChatSession get(const std::string& session_id) const;

    // Snapshot of every session, ordered by session_id.
    std::vector<ChatSession> sessions() const;

    std::size_t session_count() const;

    // Imports external log records. Records are grouped by session and must
    // continue each session contiguously. Doc ids the resolver cannot
    // resolve are dropped. Returns the number of turns imported.
    std::size_t import_records(std::vector<InteractionLogRecord> records, const DocumentResolver& resolver);

private:
    struct Entry {
        mutable std::shared_mutex mutex;
        ChatSession session;
    };

    std::shared_ptr<Entry> entry(const std::string& session_id) const;
    std::shared_ptr<Entry> entry_or_create(const std::string& session_id, const std::string& user_id,
                                           Timestamp created_at, bool persist_header);
    void replay();

    std::filesystem::path data_dir_;
    std::unique_ptr<AppendLog> session_log_;
    std::unique_ptr<AppendLog> turn_log_;
    mutable std::shared_mutex index_mutex_;
    std::map<std::string, std::shared_ptr<Entry>> index_;
};

}  // namespace nqs
