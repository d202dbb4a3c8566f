// Command-line entry point: service, ingestion, intent analysis, suggestion
// and evaluation workflows over one data directory.

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "nqs/error.hpp"
#include "nqs/log.hpp"
#include "nqs/service.hpp"

using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_file;
    std::string data_dir;
    std::string gateway;
    std::string mock_script;
    bool verbose = false;
};

nqs::ServiceConfig make_config(const GlobalOptions& g, std::map<std::string, std::string> overrides = {}) {
    if (!g.data_dir.empty()) overrides["data_dir"] = g.data_dir;
    if (!g.gateway.empty()) overrides["gateway.kind"] = g.gateway;
    if (!g.mock_script.empty()) overrides["gateway.mock_script"] = g.mock_script;
    std::optional<std::filesystem::path> file;
    if (!g.config_file.empty()) file = g.config_file;
    return nqs::load_config(file, overrides);
}

json suggestion_output(const nqs::SuggestionSet& set, std::size_t surfaced) {
    json out = set;
    json shown = json::array();
    for (const auto& s : nqs::surface_suggestions(set, surfaced)) shown.push_back(s);
    out["surfaced"] = shown;
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App cli{"Context-aware next-question suggestions: service, intent analysis and pairwise evaluation"};
    cli.require_subcommand(1);
    GlobalOptions g;
    cli.add_option("-c,--config", g.config_file, "Config file (key = value lines)");
    cli.add_option("-d,--data-dir", g.data_dir, "Data directory");
    cli.add_option("--gateway", g.gateway, "Completion backend: mock | remote");
    cli.add_option("--mock-script", g.mock_script, "Mock backend script (JSON fingerprint -> completion)");
    cli.add_flag("-v,--verbose", g.verbose, "Debug logging");

    auto* serve = cli.add_subcommand("serve", "Run the HTTP service");
    std::string host;
    int port = -1;
    std::string ui_dir;
    serve->add_option("--host", host, "Listen address");
    serve->add_option("--port", port, "Listen port");
    serve->add_option("--ui-dir", ui_dir, "Static annotation UI bundle, served under /ui");

    auto* ingest = cli.add_subcommand("ingest-corpus", "Add documents from a directory or JSON Lines file");
    std::string corpus_path;
    ingest->add_option("path", corpus_path, "Directory of .txt/.md files or .jsonl file")->required();

    auto* import_log = cli.add_subcommand("import-log", "Import an interaction log (JSON Lines)");
    std::string log_path;
    import_log->add_option("file", log_path, "Interaction log")->required();

    auto* new_session = cli.add_subcommand("new-session", "Create a chat session");
    std::string user_id;
    new_session->add_option("--user", user_id, "User id")->required();

    auto* turn = cli.add_subcommand("turn", "Ask a question in a session and print suggestions");
    std::string turn_session;
    std::string turn_query;
    bool turn_baseline = false;
    turn->add_option("--session", turn_session, "Session id")->required();
    turn->add_option("--query", turn_query, "User question")->required();
    turn->add_flag("--baseline", turn_baseline, "Use the combined baseline prompt");

    auto* analyze = cli.add_subcommand("analyze-intents", "Label next-question intents and derive the category registry");
    std::string from;
    std::string to;
    std::string backend = "heuristic";
    std::string manual;
    std::string report_out;
    analyze->add_option("--from", from, "Start of window (YYYY-MM-DD or ISO-8601)");
    analyze->add_option("--to", to, "End of window, inclusive");
    analyze->add_option("--backend", backend, "heuristic | judge")->check(CLI::IsMember({"heuristic", "judge"}));
    analyze->add_option("--manual", manual, "Manual labels (JSON Lines) that override machine labels");
    analyze->add_option("--out", report_out, "Report path (default <data-dir>/intent_report.json)");

    auto* suggest = cli.add_subcommand("suggest", "Generate suggestions for the latest turn of a session");
    std::string suggest_session;
    bool suggest_baseline = false;
    int k_docs = -1;
    suggest->add_option("--session", suggest_session, "Session id")->required();
    suggest->add_flag("--baseline", suggest_baseline, "Use the combined baseline prompt");
    suggest->add_option("--k-docs", k_docs, "Documents included in the prompt");

    auto* eval = cli.add_subcommand("eval", "Pairwise evaluation workflow");
    eval->require_subcommand(1);
    auto* build_tasks = eval->add_subcommand("build-tasks", "Sample turns and create blinded comparison tasks");
    std::size_t sample = 0;
    std::optional<std::uint64_t> seed;
    build_tasks->add_option("--sample", sample, "Number of interactions to sample")->required();
    build_tasks->add_option("--seed", seed, "Sampling and side-assignment seed");
    auto* report = eval->add_subcommand("report", "Aggregate annotations");
    std::string stratify;
    bool report_json = false;
    report->add_option("--stratify", stratify, "role | annotator")->check(CLI::IsMember({"role", "annotator"}));
    report->add_flag("--json", report_json, "Emit JSON instead of a table");
    auto* import_ann = eval->add_subcommand("import-annotations", "Import annotation records (JSON Lines)");
    std::string ann_path;
    import_ann->add_option("file", ann_path, "Annotation records")->required();
    auto* export_ann = eval->add_subcommand("export-annotations", "Write annotation records as JSON Lines");
    std::string export_path;
    export_ann->add_option("--out", export_path, "Output file (stdout when omitted)");

    CLI11_PARSE(cli, argc, argv);
    nqs::log::set_level(g.verbose ? nqs::log::Level::Debug : nqs::log::Level::Warn);

    try {
        if (serve->parsed()) {
            std::map<std::string, std::string> overrides;
            if (!host.empty()) overrides["listen_host"] = host;
            if (port >= 0) overrides["listen_port"] = std::to_string(port);
            if (!ui_dir.empty()) overrides["ui_dir"] = ui_dir;
            nqs::log::set_level(g.verbose ? nqs::log::Level::Debug : nqs::log::Level::Info);
            nqs::App app(make_config(g, overrides));
            return nqs::serve(app);
        }

        nqs::App app(make_config(g));

        if (ingest->parsed()) {
            const auto docs = nqs::load_corpus(corpus_path);
            const auto changed = app.ingest(docs);
            std::cout << json{{"read", docs.size()}, {"upserted", changed},
                              {"corpus_size", app.retriever().snapshot()->size()}}
                             .dump()
                      << '\n';
        } else if (import_log->parsed()) {
            const auto n = app.import_log(log_path);
            std::cout << json{{"imported_turns", n}, {"sessions", app.sessions().session_count()}}.dump() << '\n';
        } else if (new_session->parsed()) {
            std::cout << app.sessions().create_session(user_id).session_id << '\n';
        } else if (turn->parsed()) {
            const auto result =
                app.post_turn(turn_session, turn_query, turn_baseline ? nqs::Mode::Baseline : nqs::Mode::Enhanced);
            json out{{"turn_index", result.turn.turn_index}, {"response", result.turn.response}};
            out["suggestions"] = suggestion_output(result.set, app.config().surfaced);
            std::cout << out.dump(2) << '\n';
        } else if (analyze->parsed()) {
            nqs::TimeWindow window;
            window.from = nqs::parse_window_bound(from, false);
            window.to = nqs::parse_window_bound(to, true);
            std::optional<nqs::ManualLabels> labels;
            if (!manual.empty()) labels = nqs::load_manual_labels(manual);
            const auto out_path =
                report_out.empty() ? app.config().data_dir / "intent_report.json" : std::filesystem::path(report_out);
            const auto analysis = app.analyze_and_publish(window, nqs::classifier_from_string(backend), out_path,
                                                          labels ? &*labels : nullptr);
            auto body = nqs::report_to_json(analysis.report);
            body["registry"] = analysis.registry;
            body["report_path"] = out_path.string();
            body["registry_path"] = app.config().effective_registry_path().string();
            std::cout << body.dump(2) << '\n';
        } else if (suggest->parsed()) {
            const auto mode = suggest_baseline ? nqs::Mode::Baseline : nqs::Mode::Enhanced;
            std::optional<std::size_t> k;
            if (k_docs >= 0) k = static_cast<std::size_t>(k_docs);
            const auto set = app.engine().suggest_next_questions(suggest_session, mode, k);
            std::cout << suggestion_output(set, app.config().surfaced).dump(2) << '\n';
        } else if (build_tasks->parsed()) {
            const auto s = seed.value_or(app.config().eval_seed);
            const auto tasks = app.build_eval_tasks(sample, s);
            json ids = json::array();
            for (const auto& t : tasks) ids.push_back(t.task_id);
            std::cout << json{{"created", tasks.size()}, {"seed", s}, {"task_ids", ids}}.dump() << '\n';
        } else if (report->parsed()) {
            std::optional<nqs::StratifyBy> by;
            if (!stratify.empty()) by = nqs::stratify_from_string(stratify);
            const auto records = app.eval().annotations();
            const auto tasks = app.eval().tasks();
            const auto r = nqs::aggregate(records, tasks, by);
            if (report_json) {
                std::cout << nqs::report_to_json(r).dump(2) << '\n';
            } else {
                std::cout << nqs::format_report_table(r);
            }
        } else if (import_ann->parsed()) {
            std::size_t n = 0;
            for (const auto& line : nqs::AppendLog::read_lines(ann_path)) {
                app.eval().record_annotation(json::parse(line).get<nqs::AnnotationRecord>());
                ++n;
            }
            std::cout << json{{"imported", n}}.dump() << '\n';
        } else if (export_ann->parsed()) {
            std::ofstream file;
            if (!export_path.empty()) {
                file.open(export_path, std::ios::trunc);
                if (!file) throw nqs::Error(nqs::ErrorCode::Io, "cannot write " + export_path);
            }
            std::ostream& out = export_path.empty() ? std::cout : file;
            for (const auto& r : app.eval().annotations()) out << json(r).dump() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return nqs::exit_code_for(e);
    }
    return 0;
}
