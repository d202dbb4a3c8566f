#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "nqs/eval_harness.hpp"

using namespace nqs;
using nlohmann::json;

namespace {

struct Run {
    int code = -1;
    std::string out;
};

Run nqs_cli(const std::string& args) {
    const std::string cmd = std::string(NQS_CLI_PATH) + " " + args + " 2>/dev/null";
    Run r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

std::string data_arg(const testing::TempDir& dir) { return "-d " + quote(dir / "data"); }

std::string log_line(const std::string& session, int turn, const std::string& q, const std::string& r) {
    return json{{"session_id", session},
                {"user_id", "u1"},
                {"turn_index", turn},
                {"query", q},
                {"response", r},
                {"retrieved_doc_ids", json::array()},
                {"timestamp", "2024-03-0" + std::to_string(turn) + "T10:00:00Z"}}
        .dump();
}

}  // namespace

TEST_CASE("analyze-intents over a four-transition log") {
    testing::TempDir dir;
    {
        std::ofstream log(dir / "log.jsonl");
        log << log_line("s1", 1, "What is a destination?", "A destination receives activated audiences.") << "\n"
            << log_line("s1", 2, "Which audiences were activated yesterday?", "Three audiences were activated.") << "\n"
            << log_line("s1", 3, "Which audiences exist?", "Five audiences exist in this sandbox.") << "\n"
            << log_line("s1", 4, "How do I rotate API keys?", "Use the developer console.") << "\n"
            << log_line("s1", 5, "Is the developer console free?", "Yes.") << "\n";
        std::ofstream(dir / "manual.jsonl") << R"({"session_id":"s1","turn_index":5,"label":"Others"})" << "\n";
    }
    auto r = nqs_cli(data_arg(dir) + " import-log " + quote(dir / "log.jsonl"));
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["imported_turns"] == 5);

    r = nqs_cli(data_arg(dir) + " analyze-intents --manual " + quote(dir / "manual.jsonl"));
    REQUIRE(r.code == 0);
    const auto report = json::parse(r.out);
    CHECK(report["n_total"] == 4);
    for (const auto* k : {"Unrelated", "Expansion", "FollowUp", "Others"}) CHECK(report["proportions"][k] == 0.25);
    CHECK(std::filesystem::exists(dir / "data" / "registry.json"));
    CHECK(std::filesystem::exists(dir / "data" / "intent_report.json"));

    // Window excludes everything before the fourth turn.
    r = nqs_cli(data_arg(dir) + " analyze-intents --from 2024-03-04 --to 2024-03-05");
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["n_total"] == 2);
}

TEST_CASE("eval report over the per-annotator fixture") {
    testing::TempDir dir;
    std::vector<ComparisonTask> tasks;
    {
        const auto pairs = testing::make_pairs(134);
        tasks = create_tasks(pairs, 17);
        EvalStore store(dir / "data" / "eval");
        store.add_tasks(tasks);
        std::ofstream out(dir / "ann.jsonl");
        for (const auto& row : testing::per_annotator_rows())
            for (const auto& rec : testing::records_for(tasks, row.annotator, row.role, row.criterion, row.counts))
                out << json(rec).dump() << "\n";
    }
    auto r = nqs_cli(data_arg(dir) + " eval import-annotations " + quote(dir / "ann.jsonl"));
    REQUIRE(r.code == 0);

    r = nqs_cli(data_arg(dir) + " eval report --stratify annotator");
    REQUIRE(r.code == 0);
    std::map<std::pair<std::string, std::string>, std::vector<double>> printed;
    std::istringstream lines(r.out);
    std::string line;
    std::getline(lines, line);
    CHECK(line.find("Annotator ID") != std::string::npos);
    while (std::getline(lines, line)) {
        std::istringstream fields(line);
        std::string criterion, annotator;
        std::vector<double> values(4);
        int n = 0;
        fields >> criterion >> values[0] >> values[1] >> values[2] >> values[3] >> annotator >> n;
        printed[{criterion, annotator}] = values;
    }
    CHECK(printed.size() == 20);

    int reference_matches = 0;
    for (const auto& row : testing::per_annotator_rows()) {
        const auto key = std::pair{std::string(to_string(row.criterion)), std::string(row.annotator)};
        REQUIRE(printed.count(key) == 1);
        const auto& values = printed[key];
        const int n = row.counts[0] + row.counts[1] + row.counts[2] + row.counts[3];
        bool all_match = true;
        for (std::size_t o = 0; o < 4; ++o) {
            CHECK(values[o] == testing::round3_reference(row.counts[o], n));
            all_match = all_match && values[o] == row.reference[o];
        }
        // Rows whose inverted counts add up to the apparent denominator
        // reproduce the reference values exactly.
        if (n == row.denominator) CHECK(all_match);
        if (all_match) ++reference_matches;
    }
    CHECK(reference_matches == 14);
}

TEST_CASE("turn and suggest from the command line") {
    testing::TempDir dir;
    std::ofstream(dir / "corpus.jsonl")
        << R"({"doc_id":"richness","title":"Profile richness","content":"Profile richness is stored profile data."})"
        << "\n";
    REQUIRE(nqs_cli(data_arg(dir) + " ingest-corpus " + quote(dir / "corpus.jsonl")).code == 0);
    auto r = nqs_cli(data_arg(dir) + " new-session --user alice");
    REQUIRE(r.code == 0);
    const auto session = text::trim(r.out);

    r = nqs_cli(data_arg(dir) + " turn --session " + session + " --query 'How is profile richness calculated?'");
    REQUIRE(r.code == 0);
    auto out = json::parse(r.out);
    CHECK(out["turn_index"] == 1);
    CHECK(out["suggestions"]["mode"] == "Enhanced");
    CHECK(out["suggestions"]["surfaced"].size() == 2);

    r = nqs_cli(data_arg(dir) + " suggest --baseline --session " + session);
    REQUIRE(r.code == 0);
    out = json::parse(r.out);
    CHECK(out["mode"] == "Baseline");
    CHECK(out["degraded"] == false);

    r = nqs_cli(data_arg(dir) + " eval build-tasks --sample 1 --seed 3");
    REQUIRE(r.code == 0);
    CHECK(json::parse(r.out)["created"] == 1);
}

TEST_CASE("exit codes") {
    testing::TempDir dir;
    CHECK(nqs_cli(data_arg(dir) + " suggest --session missing").code == 2);
    CHECK(nqs_cli(data_arg(dir) + " new-session --user ''").code == 2);
    std::ofstream(dir / "bad.jsonl") << "{not json\n";
    CHECK(nqs_cli(data_arg(dir) + " eval import-annotations " + quote(dir / "bad.jsonl")).code == 2);

    const auto session = text::trim(nqs_cli(data_arg(dir) + " new-session --user bob").out);
    CHECK(nqs_cli(data_arg(dir) + " --gateway remote -c /dev/null turn --session " + session + " --query hi").code ==
          2);  // remote without a URL is a configuration error
    const auto remote = "NQS_GATEWAY_URL=http://127.0.0.1:9/complete NQS_GATEWAY_TIMEOUT_MS=200 ";
    const std::string cmd = std::string(remote) + NQS_CLI_PATH + " " + data_arg(dir) +
                            " --gateway remote turn --session " + session + " --query hi 2>/dev/null";
    const int status = std::system(cmd.c_str());
    CHECK(WEXITSTATUS(status) == 3);
}
