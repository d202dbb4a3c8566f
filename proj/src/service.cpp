#include "nqs/service.hpp"

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <pthread.h>
#include <thread>

#include "httplib.h"
#include "nqs/error.hpp"
#include "nqs/log.hpp"
#include "nqs/text.hpp"

namespace nqs {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

namespace {

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = {
        "listen_host",  "listen_port",    "data_dir",          "corpus_path",        "template_path",
        "registry_path", "ui_dir",        "answerer",          "window",             "k_docs",
        "surfaced",     "min_share",      "eval_seed",         "gateway.kind",       "gateway.url",
        "gateway.api_key_env",            "gateway.timeout_ms", "gateway.in_flight_cap", "gateway.mock_script",
    };
    return keys;
}

std::string env_name(const std::string& key) {
    std::string out = "NQS_";
    for (const char ch : key) {
        out.push_back(ch == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
    }
    return out;
}

long long to_integer(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const auto v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, key + " must be an integer, got '" + value + "'");
    }
}

double to_real(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const auto v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw Error(ErrorCode::InvalidArgument, key + " must be a number, got '" + value + "'");
    }
}

void apply_setting(ServiceConfig& c, const std::string& key, const std::string& value) {
    if (key == "listen_host") c.listen_host = value;
    else if (key == "listen_port") c.listen_port = static_cast<int>(to_integer(key, value));
    else if (key == "data_dir") c.data_dir = value;
    else if (key == "corpus_path") c.corpus_path = value;
    else if (key == "template_path") c.template_path = value;
    else if (key == "registry_path") c.registry_path = value;
    else if (key == "ui_dir") c.ui_dir = value;
    else if (key == "answerer") c.answerer = value;
    else if (key == "window") c.window = static_cast<std::size_t>(to_integer(key, value));
    else if (key == "k_docs") c.k_docs = static_cast<std::size_t>(to_integer(key, value));
    else if (key == "surfaced") c.surfaced = static_cast<std::size_t>(to_integer(key, value));
    else if (key == "min_share") c.min_share = to_real(key, value);
    else if (key == "eval_seed") c.eval_seed = static_cast<std::uint64_t>(to_integer(key, value));
    else if (key == "gateway.kind") c.gateway.kind = value;
    else if (key == "gateway.url") c.gateway.remote_url = value;
    else if (key == "gateway.api_key_env") c.gateway.api_key_env = value;
    else if (key == "gateway.timeout_ms") c.gateway.timeout = std::chrono::milliseconds(to_integer(key, value));
    else if (key == "gateway.in_flight_cap") c.gateway.in_flight_cap = static_cast<int>(to_integer(key, value));
    else if (key == "gateway.mock_script") c.gateway.mock_script = value;
    else throw Error(ErrorCode::InvalidArgument, "unknown config key " + key);
}

}  // namespace

std::filesystem::path ServiceConfig::effective_registry_path() const {
    return registry_path.empty() ? data_dir / "registry.json" : registry_path;
}

void ServiceConfig::validate() const {
    const auto require = [](bool ok, const std::string& what) {
        if (!ok) throw Error(ErrorCode::InvalidArgument, what);
    };
    require(listen_port >= 0 && listen_port <= 65535, "listen_port must be within 0..65535");
    require(window <= 50, "window must be within 0..50");
    require(k_docs <= 50, "k_docs must be within 0..50");
    require(surfaced >= 1 && surfaced <= 10, "surfaced must be within 1..10");
    require(min_share >= 0.0 && min_share <= 1.0, "min_share must be within [0, 1]");
    require(gateway.in_flight_cap >= 1 && gateway.in_flight_cap <= 256, "gateway.in_flight_cap must be within 1..256");
    require(gateway.timeout.count() > 0, "gateway.timeout_ms must be positive");
    require(gateway.kind == "mock" || gateway.kind == "remote", "gateway.kind must be mock or remote");
    require(gateway.kind != "remote" || !gateway.remote_url.empty(), "gateway.url is required for remote");
    require(answerer == "stub" || answerer == "gateway", "answerer must be stub or gateway");
    require(!data_dir.empty(), "data_dir must be set");
    for (const auto* p : {&corpus_path, &template_path, &registry_path, &ui_dir, &gateway.mock_script}) {
        require(p->empty() || std::filesystem::exists(*p), "path does not exist: " + p->string());
    }
}

ServiceConfig load_config(const std::optional<std::filesystem::path>& file,
                          const std::map<std::string, std::string>& overrides) {
    ServiceConfig config;
    if (file) {
        std::ifstream in(*file);
        if (!in) throw Error(ErrorCode::Io, "cannot read config " + file->string());
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const auto hash = line.find('#');
            const auto content = text::trim(hash == std::string::npos ? line : line.substr(0, hash));
            if (content.empty()) continue;
            const auto eq = content.find('=');
            if (eq == std::string::npos) {
                throw Error(ErrorCode::InvalidArgument,
                            file->string() + ":" + std::to_string(line_no) + ": expected key = value");
            }
            auto value = text::trim(content.substr(eq + 1));
            if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
            apply_setting(config, text::trim(content.substr(0, eq)), value);
        }
    }
    for (const auto& key : config_keys()) {
        if (const char* v = std::getenv(env_name(key).c_str())) apply_setting(config, key, v);
    }
    for (const auto& [key, value] : overrides) apply_setting(config, key, value);
    return config;
}

int exit_code_for(const std::exception& e) {
    if (const auto* err = dynamic_cast<const Error*>(&e)) {
        switch (classify(err->code())) {
            case ErrorClass::NotFound:
            case ErrorClass::Validation: return 2;
            case ErrorClass::Backend: return 3;
            case ErrorClass::Internal: return 1;
        }
    }
    // Malformed input files.
    if (dynamic_cast<const nlohmann::json::exception*>(&e) != nullptr) return 2;
    return 1;
}

std::optional<Timestamp> parse_window_bound(const std::string& value, bool is_end) {
    if (value.empty()) return std::nullopt;
    auto ts = parse_timestamp(value);
    if (!ts) throw Error(ErrorCode::InvalidArgument, "bad time bound '" + value + "'");
    if (is_end && value.size() == 10) *ts += std::chrono::days{1} - std::chrono::milliseconds{1};
    return ts;
}

// ---------------------------------------------------------------------------
// App

namespace {

PromptTemplate template_for(const ServiceConfig& c) {
    return c.template_path.empty() ? PromptTemplate::default_template() : PromptTemplate::from_file(c.template_path);
}

std::vector<QuestionCategory> registry_for(const ServiceConfig& c) {
    const auto path = c.effective_registry_path();
    return std::filesystem::exists(path) ? load_registry(path) : default_registry();
}

EngineConfig engine_config_for(const ServiceConfig& c) {
    EngineConfig e;
    e.window = c.window;
    e.k_docs = c.k_docs;
    e.surfaced = c.surfaced;
    return e;
}

}  // namespace

App::App(ServiceConfig config)
    : config_((config.validate(), std::move(config))),
      sessions_(config_.data_dir),
      corpus_(config_.data_dir / "corpus.jsonl"),
      retriever_(CorpusIndex::build(corpus_.documents())),
      gateway_(make_gateway(config_.gateway)),
      suggestion_store_(config_.data_dir / "suggestions.jsonl"),
      engine_(sessions_, *gateway_, template_for(config_), registry_for(config_), &suggestion_store_,
              engine_config_for(config_)),
      eval_(config_.data_dir / "eval") {
    if (!config_.corpus_path.empty()) ingest(load_corpus(config_.corpus_path));
}

std::size_t App::ingest(const std::vector<DocumentRef>& docs) {
    // Reject duplicate ids inside one batch before touching the store.
    (void)CorpusIndex::build(docs);
    const auto changed = corpus_.upsert(docs);
    retriever_.swap_index(CorpusIndex::build(corpus_.documents()));
    return changed;
}

std::size_t App::import_log(const std::filesystem::path& file) {
    if (!std::filesystem::exists(file)) throw Error(ErrorCode::Io, "log not found: " + file.string());
    std::vector<InteractionLogRecord> records;
    std::size_t line_no = 0;
    for (const auto& line : AppendLog::read_lines(file)) {
        ++line_no;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidRequest, file.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
        records.push_back(parse_log_record(j));
    }
    return sessions_.import_records(std::move(records),
                                    [this](const std::string& id) { return retriever_.find(id); });
}

std::string App::answer(const std::string& query, const std::vector<RetrievalHit>& hits) {
    if (config_.answerer == "gateway") {
        CompletionRequest req;
        req.prompt = "Answer the user's question using only the documents below.\n\n## Documents\n";
        std::vector<DocumentRef> docs;
        for (const auto& h : hits) docs.push_back(h.doc);
        req.prompt += render_documents(docs, docs.size()) + "\n\n## Question\n" + query + "\n\n## Answer\n";
        return gateway_->complete(req).text;
    }
    if (hits.empty()) return "I could not find documentation that covers this question.";
    std::string out;
    for (const auto& h : hits) {
        if (!out.empty()) out += "\n\n";
        out += h.doc.title + ": " + text::truncate_utf8(text::trim(h.doc.content), 400);
    }
    return out;
}

TurnResult App::post_turn(const std::string& session_id, const std::string& query, Mode mode) {
    if (query.empty()) throw Error(ErrorCode::EmptyQuery, "query must be nonempty");
    (void)sessions_.get(session_id);
    auto hits = retriever_.retrieve(query, config_.k_docs);
    const auto response = answer(query, hits);
    std::vector<DocumentRef> docs;
    docs.reserve(hits.size());
    for (auto& h : hits) docs.push_back(std::move(h.doc));
    TurnResult result;
    result.turn = sessions_.append_turn(session_id, query, response, std::move(docs));
    result.set = engine_.suggest_at(session_id, static_cast<std::size_t>(result.turn.turn_index), mode);
    result.surfaced = surface_suggestions(result.set, config_.surfaced);
    return result;
}

IntentAnalysis App::analyze_intents(const TimeWindow& window, ClassifierBackend backend, const ManualLabels* manual) {
    IntentAnalysisOptions options;
    options.window = window;
    options.backend = backend;
    options.min_share = config_.min_share;
    options.workers = static_cast<std::size_t>(config_.gateway.in_flight_cap);
    options.manual = manual;
    return nqs::analyze_intents(sessions_.sessions(), options, gateway_.get());
}

IntentAnalysis App::analyze_and_publish(const TimeWindow& window, ClassifierBackend backend,
                                        const std::filesystem::path& report_path, const ManualLabels* manual) {
    auto analysis = analyze_intents(window, backend, manual);
    if (report_path.has_parent_path()) std::filesystem::create_directories(report_path.parent_path());
    {
        std::ofstream out(report_path, std::ios::trunc);
        if (!out) throw Error(ErrorCode::Io, "cannot write " + report_path.string());
        out << report_to_json(analysis.report).dump(2) << '\n';
    }
    const auto registry = normalize_registry(analysis.registry);
    save_registry(config_.effective_registry_path(), registry);
    engine_.set_registry(registry);
    return analysis;
}

std::vector<ComparisonTask> App::build_eval_tasks(std::size_t sample, std::uint64_t seed) {
    std::vector<ComparisonPair> pairs;
    for (const auto& [session_id, turn_index] : sample_turns(sessions_.sessions(), sample, seed)) {
        const auto t = static_cast<std::size_t>(turn_index);
        try {
            ComparisonPair p;
            p.context = sessions_.context_at(session_id, t, config_.window);
            p.baseline = engine_.suggest_at(session_id, t, Mode::Baseline);
            p.enhanced = engine_.suggest_at(session_id, t, Mode::Enhanced);
            p.session_id = session_id;
            p.turn_index = turn_index;
            pairs.push_back(std::move(p));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::NoSuggestionsParsed) throw;
            log::warn("skipping " + session_id + "#" + std::to_string(turn_index) + ": no suggestions parsed");
        }
    }
    auto tasks = create_tasks(pairs, seed);
    eval_.add_tasks(tasks);
    return tasks;
}

json task_payload(const ComparisonTask& task, const Progress& progress) {
    const auto side = [](const SuggestionSet& s) {
        json list = json::array();
        for (const auto& sg : s.suggestions) list.push_back(sg.text);
        return list;
    };
    json criteria = json::array();
    for (const auto c : kAllCriteria) criteria.push_back(json{{"name", to_string(c)}, {"definition", definition(c)}});
    json choices = json::array();
    for (const auto c : kAllChoices) choices.push_back(to_string(c));
    return json{{"task_id", task.task_id},
                {"context",
                 {{"current_query", task.context.current_query},
                  {"current_response", task.context.current_response},
                  {"prior_queries", task.context.prior_queries}}},
                {"s1", side(task.side_a)},
                {"s2", side(task.side_b)},
                {"criteria", criteria},
                {"choices", choices},
                {"progress", {{"completed", progress.completed}, {"total", progress.total}}}};
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

int status_for(const Error& e) {
    switch (classify(e.code())) {
        case ErrorClass::NotFound: return 404;
        case ErrorClass::Validation: return 422;
        case ErrorClass::Backend: return 503;
        case ErrorClass::Internal: return 500;
    }
    return 500;
}

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, std::string("request body is not JSON: ") + e.what());
    }
}

template <typename T>
T field(const json& body, const char* name) {
    const auto it = body.find(name);
    if (it == body.end()) throw Error(ErrorCode::InvalidRequest, std::string("missing field ") + name);
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw Error(ErrorCode::InvalidRequest, std::string("field ") + name + " has the wrong type");
    }
}

using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

// Maps module errors onto HTTP statuses.
Handler guarded(Handler inner) {
    return [inner = std::move(inner)](const httplib::Request& req, httplib::Response& res) {
        try {
            inner(req, res);
        } catch (const Error& e) {
            send_json(res, status_for(e), json{{"error", to_string(e.code())}, {"message", e.what()}});
        } catch (const json::exception& e) {
            send_json(res, 422, json{{"error", "InvalidRequest"}, {"message", e.what()}});
        } catch (const std::exception& e) {
            log::error(std::string("request failed: ") + e.what());
            send_json(res, 500, json{{"error", "Internal"}, {"message", "internal error"}});
        }
    };
}

json session_json(const ChatSession& s) {
    json turns = json::array();
    for (const auto& t : s.turns) {
        std::vector<std::string> ids;
        for (const auto& d : t.retrieved) ids.push_back(d.doc_id);
        turns.push_back(json{{"turn_index", t.turn_index},
                             {"query", t.query},
                             {"response", t.response},
                             {"retrieved_doc_ids", ids},
                             {"timestamp", format_timestamp(t.timestamp)}});
    }
    return json{{"session_id", s.session_id},
                {"user_id", s.user_id},
                {"created_at", format_timestamp(s.created_at)},
                {"turns", turns}};
}

json surfaced_json(const std::vector<Suggestion>& list) {
    json out = json::array();
    for (const auto& s : list) out.push_back(json{{"text", s.text}, {"category", canonical_name(s.category)}});
    return out;
}

std::vector<AnnotationRecord> annotation_records_from(const json& body) {
    const auto task_id = field<std::string>(body, "task_id");
    const auto annotator = field<std::string>(body, "annotator_id");
    const auto role = body.value("role", std::string{});
    const auto make = [&](const std::string& criterion, const std::string& choice) {
        AnnotationRecord r;
        r.task_id = task_id;
        r.annotator_id = annotator;
        r.role = role;
        const auto c = criterion_from_string(criterion);
        if (!c) throw Error(ErrorCode::InvalidRequest, "unknown criterion " + criterion);
        const auto ch = choice_from_string(choice);
        if (!ch) throw Error(ErrorCode::InvalidRequest, "unknown choice " + choice);
        r.criterion = *c;
        r.choice = *ch;
        return r;
    };
    std::vector<AnnotationRecord> records;
    if (const auto it = body.find("choices"); it != body.end()) {
        if (!it->is_object()) throw Error(ErrorCode::InvalidRequest, "choices must be an object");
        for (const auto& [criterion, choice] : it->items()) {
            if (!choice.is_string()) throw Error(ErrorCode::InvalidRequest, "choice must be a string");
            records.push_back(make(criterion, choice.get<std::string>()));
        }
    } else {
        records.push_back(make(field<std::string>(body, "criterion"), field<std::string>(body, "choice")));
    }
    return records;
}

}  // namespace

void register_routes(httplib::Server& server, App& app) {
    server.Get("/healthz", guarded([&app](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, json{{"status", "ok"},
                                 {"corpus_size", app.retriever().snapshot()->size()},
                                 {"sessions", app.sessions().session_count()},
                                 {"backend", app.gateway().backend().id()}});
    }));

    server.Post("/sessions", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        send_json(res, 201, session_json(app.sessions().create_session(field<std::string>(body, "user_id"))));
    }));

    server.Get(R"(/sessions/([^/]+))", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        send_json(res, 200, session_json(app.sessions().get(req.matches[1].str())));
    }));

    server.Post(R"(/sessions/([^/]+)/turns)", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto mode = mode_from_string(body.value("mode", std::string("Enhanced")));
        const auto result = app.post_turn(req.matches[1].str(), field<std::string>(body, "query"), mode);
        std::vector<std::string> ids;
        for (const auto& d : result.turn.retrieved) ids.push_back(d.doc_id);
        send_json(res, 200, json{{"turn_index", result.turn.turn_index},
                                 {"response", result.turn.response},
                                 {"retrieved_doc_ids", ids},
                                 {"mode", to_string(result.set.mode)},
                                 {"degraded", result.set.degraded},
                                 {"suggestions", surfaced_json(result.surfaced)}});
    }));

    server.Post("/corpus/docs", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto& list = body.is_array() ? body : body.at("docs");
        std::vector<DocumentRef> docs;
        for (const auto& d : list) docs.push_back(d.get<DocumentRef>());
        const auto changed = app.ingest(docs);
        send_json(res, 200, json{{"upserted", changed}, {"corpus_size", app.retriever().snapshot()->size()}});
    }));

    server.Get("/intent/report", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        TimeWindow window;
        window.from = parse_window_bound(req.get_param_value("from"), false);
        window.to = parse_window_bound(req.get_param_value("to"), true);
        const auto backend =
            req.has_param("backend") ? classifier_from_string(req.get_param_value("backend")) : ClassifierBackend::Heuristic;
        const auto analysis = app.analyze_intents(window, backend);
        auto body = report_to_json(analysis.report);
        body["registry"] = analysis.registry;
        send_json(res, 200, body);
    }));

    server.Post("/eval/tasks", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto sample = field<long long>(body, "sample");
        if (sample < 0) throw Error(ErrorCode::InvalidRequest, "sample must be >= 0");
        const auto seed = body.value("seed", app.config().eval_seed);
        const auto tasks = app.build_eval_tasks(static_cast<std::size_t>(sample), seed);
        json ids = json::array();
        for (const auto& t : tasks) ids.push_back(t.task_id);
        send_json(res, 201, json{{"created", tasks.size()}, {"seed", seed}, {"task_ids", ids}});
    }));

    server.Get("/eval/tasks/next", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        const auto annotator = req.get_param_value("annotator");
        if (annotator.empty()) throw Error(ErrorCode::InvalidRequest, "annotator query parameter is required");
        const auto task = app.eval().next_task_for(annotator);
        if (!task) {
            res.status = 204;
            return;
        }
        send_json(res, 200, task_payload(*task, app.eval().progress(annotator)));
    }));

    server.Post("/eval/annotations", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req);
        const auto records = annotation_records_from(body);
        const auto task_id = field<std::string>(body, "task_id");
        if (!app.eval().task(task_id)) throw Error(ErrorCode::UnknownTask, task_id);
        for (const auto& r : records) app.eval().record_annotation(r);
        send_json(res, 200, json{{"stored", records.size()}});
    }));

    server.Get("/eval/report", guarded([&app](const httplib::Request& req, httplib::Response& res) {
        std::optional<StratifyBy> stratify;
        if (req.has_param("stratify")) stratify = stratify_from_string(req.get_param_value("stratify"));
        const auto records = app.eval().annotations();
        const auto tasks = app.eval().tasks();
        const auto report = aggregate(records, tasks, stratify);
        if (req.get_param_value("format") == "text") {
            res.status = 200;
            res.set_content(format_report_table(report), "text/plain");
            return;
        }
        send_json(res, 200, report_to_json(report));
    }));

    if (!app.config().ui_dir.empty()) server.set_mount_point("/ui", app.config().ui_dir.string());
}

int serve(App& app) {
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    httplib::Server server;
    register_routes(server, app);
    if (!server.bind_to_port(app.config().listen_host, app.config().listen_port)) {
        throw Error(ErrorCode::Io, "cannot bind " + app.config().listen_host + ":" +
                                       std::to_string(app.config().listen_port));
    }
    std::jthread waiter([&server, signals]() {
        int sig = 0;
        sigwait(&signals, &sig);
        log::info("shutting down");
        server.stop();
    });
    log::info("listening on " + app.config().listen_host + ":" + std::to_string(app.config().listen_port));
    server.listen_after_bind();
    // listen_after_bind returns once stop() drained in-flight requests; wake
    // the waiter if we stopped for another reason.
    pthread_kill(waiter.native_handle(), SIGTERM);
    return 0;
}

}  // namespace nqs
