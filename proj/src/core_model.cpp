#include "nqs/core_model.hpp"

#include <algorithm>
#include <mutex>

#include "nqs/error.hpp"
#include "nqs/log.hpp"
#include "nqs/text.hpp"

namespace nqs {

using nlohmann::json;

void to_json(json& j, const DocumentRef& d) {
    j = json{{"doc_id", d.doc_id}, {"title", d.title}, {"content", d.content}};
    if (d.source_uri) j["source_uri"] = *d.source_uri;
}

void from_json(const json& j, DocumentRef& d) {
    d.doc_id = j.at("doc_id").get<std::string>();
    d.title = j.value("title", std::string{});
    d.content = j.value("content", std::string{});
    if (auto it = j.find("source_uri"); it != j.end() && it->is_string()) {
        d.source_uri = it->get<std::string>();
    } else {
        d.source_uri.reset();
    }
}

void to_json(json& j, const SessionContext& c) {
    j = json{{"current_query", c.current_query},
             {"current_response", c.current_response},
             {"prior_queries", c.prior_queries},
             {"retrieved", c.retrieved}};
}

void from_json(const json& j, SessionContext& c) {
    c.current_query = j.at("current_query").get<std::string>();
    c.current_response = j.value("current_response", std::string{});
    c.prior_queries = j.value("prior_queries", std::vector<std::string>{});
    c.retrieved = j.value("retrieved", std::vector<DocumentRef>{});
}

SessionContext make_context(const ChatSession& session, std::size_t turn_index, std::size_t window) {
    if (session.turns.empty()) {
        throw Error(ErrorCode::NoInteractionYet, "session " + session.session_id + " has no turns");
    }
    if (turn_index < 1 || turn_index > session.turns.size()) {
        throw Error(ErrorCode::InvalidArgument, "turn index " + std::to_string(turn_index) + " out of range");
    }
    const auto& current = session.turns[turn_index - 1];
    SessionContext ctx;
    ctx.current_query = current.query;
    ctx.current_response = current.response;
    ctx.retrieved = current.retrieved;
    // Prior turns are max(1, t - window) .. t - 1.
    const std::size_t first = turn_index > window ? turn_index - window : 1;
    for (std::size_t i = first; i < turn_index; ++i) {
        ctx.prior_queries.push_back(session.turns[i - 1].query);
    }
    return ctx;
}

json to_log_json(const ChatSession& session, const InteractionTurn& turn) {
    std::vector<std::string> ids;
    ids.reserve(turn.retrieved.size());
    for (const auto& d : turn.retrieved) ids.push_back(d.doc_id);
    return json{{"session_id", session.session_id},
                {"user_id", session.user_id},
                {"turn_index", turn.turn_index},
                {"query", turn.query},
                {"response", turn.response},
                {"retrieved_doc_ids", ids},
                {"timestamp", format_timestamp(turn.timestamp)}};
}

InteractionLogRecord parse_log_record(const json& j) {
    InteractionLogRecord r;
    try {
        r.session_id = j.at("session_id").get<std::string>();
        r.user_id = j.value("user_id", std::string{});
        r.turn_index = j.at("turn_index").get<int>();
        r.query = j.at("query").get<std::string>();
        r.response = j.value("response", std::string{});
        r.retrieved_doc_ids = j.value("retrieved_doc_ids", std::vector<std::string>{});
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, std::string("malformed interaction record: ") + e.what());
    }
    if (auto it = j.find("timestamp"); it != j.end() && it->is_string()) {
        auto ts = parse_timestamp(it->get<std::string>());
        if (!ts) throw Error(ErrorCode::InvalidRequest, "bad timestamp " + it->get<std::string>());
        r.timestamp = *ts;
    }
    return r;
}

SessionStore::SessionStore(std::filesystem::path data_dir) : data_dir_(std::move(data_dir)) {
    if (data_dir_.empty()) return;
    std::filesystem::create_directories(data_dir_);
    replay();
    session_log_ = std::make_unique<AppendLog>(data_dir_ / "sessions.jsonl");
    turn_log_ = std::make_unique<AppendLog>(data_dir_ / "interactions.jsonl");
}

SessionStore::~SessionStore() = default;

void SessionStore::replay() {
    std::size_t skipped = 0;
    for (const auto& line : AppendLog::read_lines(data_dir_ / "sessions.jsonl")) {
        try {
            const auto j = json::parse(line);
            auto ts = parse_timestamp(j.value("created_at", std::string{}));
            entry_or_create(j.at("session_id").get<std::string>(), j.value("user_id", std::string{}),
                            ts.value_or(Timestamp{}), false);
        } catch (const std::exception&) {
            ++skipped;
        }
    }
    for (const auto& line : AppendLog::read_lines(data_dir_ / "interactions.jsonl")) {
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception&) {
            ++skipped;  // torn trailing write
            continue;
        }
        const auto rec = parse_log_record(j);
        auto e = entry_or_create(rec.session_id, rec.user_id, rec.timestamp, false);
        InteractionTurn turn;
        turn.turn_index = rec.turn_index;
        turn.query = rec.query;
        turn.response = rec.response;
        turn.timestamp = rec.timestamp;
        turn.retrieved = j.value("retrieved_docs", std::vector<DocumentRef>{});
        if (static_cast<std::size_t>(turn.turn_index) != e->session.turns.size() + 1) {
            throw Error(ErrorCode::Io, "interaction log out of order for session " + rec.session_id);
        }
        e->session.turns.push_back(std::move(turn));
    }
    if (skipped > 0) log::warn("session store: skipped " + std::to_string(skipped) + " unreadable log lines");
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry(const std::string& session_id) const {
    std::shared_lock lock(index_mutex_);
    const auto it = index_.find(session_id);
    if (it == index_.end()) throw Error(ErrorCode::UnknownSession, session_id);
    return it->second;
}

std::shared_ptr<SessionStore::Entry> SessionStore::entry_or_create(const std::string& session_id,
                                                                   const std::string& user_id,
                                                                   Timestamp created_at, bool persist_header) {
    std::unique_lock lock(index_mutex_);
    auto [it, inserted] = index_.try_emplace(session_id);
    if (inserted) {
        it->second = std::make_shared<Entry>();
        it->second->session.session_id = session_id;
        it->second->session.user_id = user_id;
        it->second->session.created_at = created_at;
        if (persist_header && session_log_) {
            session_log_->append(json{{"session_id", session_id},
                                      {"user_id", user_id},
                                      {"created_at", format_timestamp(created_at)}}
                                     .dump());
        }
    }
    return it->second;
}

ChatSession SessionStore::create_session(const std::string& user_id) {
    if (user_id.empty()) throw Error(ErrorCode::EmptyUserId, "user_id must be nonempty");
    std::string id;
    {
        std::shared_lock lock(index_mutex_);
        do {
            id = text::random_id();
        } while (index_.count(id) != 0);
    }
    auto e = entry_or_create(id, user_id, now_utc(), true);
    std::shared_lock lock(e->mutex);
    return e->session;
}

InteractionTurn SessionStore::append_turn(const std::string& session_id, const std::string& query,
                                          const std::string& response, std::vector<DocumentRef> retrieved) {
    if (query.empty()) throw Error(ErrorCode::EmptyQuery, "query must be nonempty");
    auto e = entry(session_id);
    std::unique_lock lock(e->mutex);
    InteractionTurn turn;
    turn.turn_index = static_cast<int>(e->session.turns.size()) + 1;
    turn.query = query;
    turn.response = response;
    turn.retrieved = std::move(retrieved);
    turn.timestamp = now_utc();
    if (turn_log_) {
        auto j = to_log_json(e->session, turn);
        j["retrieved_docs"] = turn.retrieved;
        turn_log_->append(j.dump());
    }
    e->session.turns.push_back(turn);
    return turn;
}

SessionContext SessionStore::context_for_suggestion(const std::string& session_id, std::size_t window) const {
    auto e = entry(session_id);
    std::shared_lock lock(e->mutex);
    return make_context(e->session, e->session.turns.size(), window);
}

SessionContext SessionStore::context_at(const std::string& session_id, std::size_t turn_index,
                                        std::size_t window) const {
    auto e = entry(session_id);
    std::shared_lock lock(e->mutex);
    return make_context(e->session, turn_index, window);
}

std::optional<ChatSession> SessionStore::find(const std::string& session_id) const {
    std::shared_ptr<Entry> e;
    {
        std::shared_lock lock(index_mutex_);
        const auto it = index_.find(session_id);
        if (it == index_.end()) return std::nullopt;
        e = it->second;
    }
    std::shared_lock lock(e->mutex);
    return e->session;
}

ChatSession SessionStore::get(const std::string& session_id) const {
    auto e = entry(session_id);
    std::shared_lock lock(e->mutex);
    return e->session;
}

std::vector<ChatSession> SessionStore::sessions() const {
    std::vector<std::shared_ptr<Entry>> entries;
    {
        std::shared_lock lock(index_mutex_);
        entries.reserve(index_.size());
        for (const auto& [id, e] : index_) entries.push_back(e);
    }
    std::vector<ChatSession> out;
    out.reserve(entries.size());
    for (const auto& e : entries) {
        std::shared_lock lock(e->mutex);
        out.push_back(e->session);
    }
    return out;
}

std::size_t SessionStore::session_count() const {
    std::shared_lock lock(index_mutex_);
    return index_.size();
}

std::size_t SessionStore::import_records(std::vector<InteractionLogRecord> records,
                                         const DocumentResolver& resolver) {
    std::stable_sort(records.begin(), records.end(), [](const auto& a, const auto& b) {
        return a.session_id != b.session_id ? a.session_id < b.session_id : a.turn_index < b.turn_index;
    });
    std::size_t imported = 0;
    std::size_t dropped_docs = 0;
    for (const auto& rec : records) {
        if (rec.session_id.empty()) throw Error(ErrorCode::InvalidRequest, "record without session_id");
        if (rec.query.empty()) throw Error(ErrorCode::EmptyQuery, "session " + rec.session_id);
        auto e = entry_or_create(rec.session_id, rec.user_id, rec.timestamp, true);
        std::unique_lock lock(e->mutex);
        const auto expected = static_cast<int>(e->session.turns.size()) + 1;
        if (rec.turn_index != expected) {
            throw Error(ErrorCode::InvalidRequest, "session " + rec.session_id + " expected turn " +
                                                       std::to_string(expected) + ", got " +
                                                       std::to_string(rec.turn_index));
        }
        InteractionTurn turn;
        turn.turn_index = rec.turn_index;
        turn.query = rec.query;
        turn.response = rec.response;
        turn.timestamp = rec.timestamp;
        for (const auto& id : rec.retrieved_doc_ids) {
            auto doc = resolver ? resolver(id) : std::nullopt;
            if (doc) {
                turn.retrieved.push_back(std::move(*doc));
            } else {
                ++dropped_docs;
            }
        }
        if (turn_log_) {
            auto j = to_log_json(e->session, turn);
            j["retrieved_doc_ids"] = rec.retrieved_doc_ids;
            j["retrieved_docs"] = turn.retrieved;
            turn_log_->append(j.dump());
        }
        e->session.turns.push_back(std::move(turn));
        ++imported;
    }
    if (dropped_docs > 0) {
        log::warn("import: " + std::to_string(dropped_docs) + " retrieved doc ids not found in corpus");
    }
    return imported;
}

}  // namespace nqs
