#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nqs/core_model.hpp"
#include "nqs/eval_harness.hpp"
#include "nqs/intent_analysis.hpp"
#include "nqs/llm_gateway.hpp"
#include "nqs/retrieval.hpp"
#include "nqs/suggestion_engine.hpp"

namespace httplib {
class Server;
}

namespace nqs {

struct ServiceConfig {
    std::string listen_host = "127.0.0.1";
    int listen_port = 8080;
    std::filesystem::path data_dir = "data";
    std::filesystem::path corpus_path;    // ingested at startup when set
    std::filesystem::path template_path;  // built-in template when empty
    std::filesystem::path registry_path;  // <data_dir>/registry.json when empty
    std::filesystem::path ui_dir;         // static annotation UI bundle, optional
    GatewayConfig gateway;
    std::string answerer = "stub";  // stub | gateway
    std::size_t window = kDefaultContextWindow;
    std::size_t k_docs = kDefaultPromptDocs;
    std::size_t surfaced = 2;
    double min_share = 0.1;
    std::uint64_t eval_seed = 42;

    std::filesystem::path effective_registry_path() const;

    // Throws InvalidArgument for out-of-range values or unresolvable paths.
    void validate() const;
};

// Flat `key = value` file (# comments). Keys: listen_host, listen_port,
// data_dir, corpus_path, template_path, registry_path, ui_dir, answerer,
// window, k_docs, surfaced, min_share, eval_seed, gateway.kind, gateway.url,
// gateway.api_key_env, gateway.timeout_ms, gateway.in_flight_cap,
// gateway.mock_script. Every key can be overridden by the environment
// variable NQS_<KEY> with dots replaced by underscores, upper-cased.
ServiceConfig load_config(const std::optional<std::filesystem::path>& file,
                          const std::map<std::string, std::string>& overrides = {});

// 0 success, 2 validation or malformed input, 3 backend failure, 1 anything else.
int exit_code_for(const std::exception& e);

struct TurnResult {
    InteractionTurn turn;
    SuggestionSet set;
    std::vector<Suggestion> surfaced;
};

// Wires the modules together over one data directory.
class App {
public:
    explicit App(ServiceConfig config);

    const ServiceConfig& config() const noexcept { return config_; }

    SessionStore& sessions() noexcept { return sessions_; }
    LexicalRetriever& retriever() noexcept { return retriever_; }
    Gateway& gateway() noexcept { return *gateway_; }
    SuggestionStore& suggestion_store() noexcept { return suggestion_store_; }
    SuggestionEngine& engine() noexcept { return engine_; }
    EvalStore& eval() noexcept { return eval_; }

    // Retrieve, answer, append the turn and generate suggestions for it.
    TurnResult post_turn(const std::string& session_id, const std::string& query, Mode mode = Mode::Enhanced);

    std::size_t ingest(const std::vector<DocumentRef>& docs);
    std::size_t import_log(const std::filesystem::path& file);

    IntentAnalysis analyze_intents(const TimeWindow& window, ClassifierBackend backend,
                                   const ManualLabels* manual = nullptr);
    // Runs the analysis, writes the report JSON and registry file, and
    // switches the engine to the new registry.
    IntentAnalysis analyze_and_publish(const TimeWindow& window, ClassifierBackend backend,
                                       const std::filesystem::path& report_path, const ManualLabels* manual = nullptr);

    std::vector<ComparisonTask> build_eval_tasks(std::size_t sample, std::uint64_t seed);

    std::string answer(const std::string& query, const std::vector<RetrievalHit>& hits);

private:
    ServiceConfig config_;
    SessionStore sessions_;
    CorpusStore corpus_;
    LexicalRetriever retriever_;
    std::shared_ptr<Gateway> gateway_;
    SuggestionStore suggestion_store_;
    SuggestionEngine engine_;
    EvalStore eval_;
};

// Blinded view of a task for annotators: no assignment, modes or category
// tags.
nlohmann::json task_payload(const ComparisonTask& task, const Progress& progress);

// Parses --from/--to style bounds; a date-only `to` covers the whole day.
std::optional<Timestamp> parse_window_bound(const std::string& value, bool is_end);

void register_routes(httplib::Server& server, App& app);

// Blocks until SIGINT/SIGTERM.
int serve(App& app);

}  // namespace nqs
