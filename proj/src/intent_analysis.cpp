#include "nqs/intent_analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <exception>
#include <mutex>
#include <thread>

#include "nqs/error.hpp"
#include "nqs/text.hpp"

namespace nqs {

using nlohmann::json;

std::string_view to_string(IntentValue v) {
    switch (v) {
        case IntentValue::Unrelated: return "Unrelated";
        case IntentValue::Expansion: return "Expansion";
        case IntentValue::FollowUp: return "FollowUp";
        case IntentValue::Others: return "Others";
    }
    return "Others";
}

std::string_view to_string(LabelMethod m) {
    switch (m) {
        case LabelMethod::Heuristic: return "Heuristic";
        case LabelMethod::Judge: return "Judge";
        case LabelMethod::Manual: return "Manual";
    }
    return "Heuristic";
}

std::optional<IntentValue> intent_from_string(std::string_view s) {
    std::string folded;
    for (const char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        if (std::isalpha(c) != 0) folded.push_back(static_cast<char>(std::tolower(c)));
    }
    if (folded == "unrelated") return IntentValue::Unrelated;
    if (folded == "expansion") return IntentValue::Expansion;
    if (folded == "followup") return IntentValue::FollowUp;
    if (folded == "others" || folded == "other") return IntentValue::Others;
    return std::nullopt;
}

ClassifierBackend classifier_from_string(std::string_view s) {
    const auto lower = text::to_lower(s);
    if (lower == "heuristic") return ClassifierBackend::Heuristic;
    if (lower == "judge") return ClassifierBackend::Judge;
    throw Error(ErrorCode::InvalidArgument, "unknown classifier backend " + std::string(s));
}

std::vector<Transition> extract_transitions(const std::vector<ChatSession>& sessions, const TimeWindow& window,
                                            std::size_t context_window) {
    std::vector<Transition> out;
    for (const auto& session : sessions) {
        for (std::size_t t = 1; t < session.turns.size(); ++t) {
            const auto& next = session.turns[t];
            if (!window.contains(next.timestamp)) continue;
            Transition tr;
            tr.context = make_context(session, t, context_window);
            tr.next_question = next.query;
            tr.session_id = session.session_id;
            tr.next_turn_index = next.turn_index;
            tr.timestamp = next.timestamp;
            out.push_back(std::move(tr));
        }
    }
    return out;
}

IntentLabel classify_heuristic(const Transition& t) {
    if (t.next_question.empty()) throw Error(ErrorCode::EmptyQuery, "transition without next question");
    const auto query = text::token_set(t.context.current_query);
    const auto response = text::token_set(t.context.current_response);
    const auto next = text::token_set(t.next_question);

    bool hits_query = false;
    bool hits_response_only = false;
    for (const auto& tok : next) {
        const bool in_q = query.count(tok) != 0;
        hits_query = hits_query || in_q;
        hits_response_only = hits_response_only || (!in_q && response.count(tok) != 0);
    }
    IntentValue value = IntentValue::Others;
    if (!hits_query && !hits_response_only) {
        value = IntentValue::Unrelated;
    } else if (hits_response_only) {
        value = IntentValue::FollowUp;
    } else if (hits_query) {
        value = IntentValue::Expansion;
    }
    return {value, 1.0, LabelMethod::Heuristic};
}

std::string build_judge_prompt(const Transition& t) {
    std::string out =
        "You label why a user asked their next question in a chat with an AI assistant.\n"
        "Choose exactly one label:\n"
        "Unrelated - the next question has nothing to do with the previous exchange.\n"
        "Expansion - it broadens the previous topic with related concepts or details.\n"
        "FollowUp - it continues from the assistant's answer, such as a next step it described.\n"
        "Others - it relates to the exchange in some other way.\n\n";
    out += "Earlier questions in the session (oldest first):\n" + render_history(t.context.prior_queries) + "\n\n";
    out += "Previous question: " + t.context.current_query + "\n";
    out += "Assistant answer: " + t.context.current_response + "\n";
    out += "Next question: " + t.next_question + "\n\n";
    out += "Reply with the label only.\n";
    return out;
}

IntentLabel parse_judge_reply(std::string_view reply) {
    const auto words = text::split_whitespace(reply);
    if (!words.empty()) {
        if (const auto v = intent_from_string(words.front())) return {*v, 1.0, LabelMethod::Judge};
        // "Follow up" split across two tokens.
        if (words.size() >= 2) {
            if (const auto v = intent_from_string(words[0] + words[1]); v == IntentValue::FollowUp) {
                return {*v, 1.0, LabelMethod::Judge};
            }
        }
    }
    return {IntentValue::Others, 0.0, LabelMethod::Judge};
}

IntentLabel classify_judge(const Transition& t, Gateway& gateway) {
    if (t.next_question.empty()) throw Error(ErrorCode::EmptyQuery, "transition without next question");
    CompletionRequest req;
    req.prompt = build_judge_prompt(t);
    req.max_tokens = 4;
    req.temperature = 0.0;
    return parse_judge_reply(gateway.complete(req).text);
}

IntentLabel classify_transition(const Transition& t, ClassifierBackend backend, Gateway* gateway) {
    if (backend == ClassifierBackend::Heuristic) return classify_heuristic(t);
    if (gateway == nullptr) throw Error(ErrorCode::InvalidArgument, "judge classifier needs a gateway");
    return classify_judge(t, *gateway);
}

IntentReport aggregate_intents(std::span<const IntentLabel> labels, const TimeWindow& window) {
    IntentReport report;
    report.window = window;
    for (const auto v : kAllIntentValues) report.counts[v] = 0;
    for (const auto& l : labels) ++report.counts[l.value];
    report.n_total = static_cast<std::int64_t>(labels.size());
    for (const auto v : kAllIntentValues) {
        report.proportions[v] = report.n_total == 0 ? 0.0
                                                    : static_cast<double>(report.counts[v]) /
                                                          static_cast<double>(report.n_total);
    }
    return report;
}

std::vector<QuestionCategory> derive_category_registry(const IntentReport& report, double min_share) {
    if (!(min_share >= 0.0 && min_share <= 1.0)) {
        throw Error(ErrorCode::InvalidArgument, "min_share must lie within [0, 1]");
    }
    const auto share = [&](IntentValue v) {
        const auto it = report.proportions.find(v);
        return it == report.proportions.end() ? 0.0 : it->second;
    };
    struct Actionable {
        IntentValue intent;
        CategoryName category;
        bool primary;
    };
    // Unrelated and Others are not actionable as suggestion categories.
    static constexpr Actionable kActionable[] = {{IntentValue::Expansion, CategoryName::Expansion, true},
                                                 {IntentValue::FollowUp, CategoryName::FollowUp, true}};
    std::vector<QuestionCategory> registry;
    for (const auto& a : kActionable) {
        if (a.primary || share(a.intent) >= min_share) {
            registry.push_back({a.category, default_description(a.category)});
        }
    }
    return registry;
}

namespace {

json window_json(const TimeWindow& w) {
    json j = json::object();
    j["from"] = w.from ? json(format_timestamp(*w.from)) : json(nullptr);
    j["to"] = w.to ? json(format_timestamp(*w.to)) : json(nullptr);
    return j;
}

}  // namespace

json report_to_json(const IntentReport& report) {
    json counts = json::object();
    json proportions = json::object();
    for (const auto v : kAllIntentValues) {
        const auto c = report.counts.find(v);
        const auto p = report.proportions.find(v);
        counts[std::string(to_string(v))] = c == report.counts.end() ? 0 : c->second;
        proportions[std::string(to_string(v))] = p == report.proportions.end() ? 0.0 : p->second;
    }
    return json{{"window", window_json(report.window)},
                {"n_total", report.n_total},
                {"counts", counts},
                {"proportions", proportions}};
}

ManualLabels load_manual_labels(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw Error(ErrorCode::Io, "manual labels not found: " + path.string());
    ManualLabels labels;
    for (const auto& line : AppendLog::read_lines(path)) {
        try {
            const auto j = json::parse(line);
            const auto raw = j.at("label").get<std::string>();
            const auto value = intent_from_string(raw);
            if (!value) throw Error(ErrorCode::InvalidRequest, "unknown intent label " + raw);
            labels[{j.at("session_id").get<std::string>(), j.at("turn_index").get<int>()}] = *value;
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidRequest, "manual label line: " + std::string(e.what()));
        }
    }
    return labels;
}

IntentAnalysis analyze_intents(const std::vector<ChatSession>& sessions, const IntentAnalysisOptions& options,
                               Gateway* gateway) {
    IntentAnalysis result;
    auto transitions = extract_transitions(sessions, options.window);
    std::vector<IntentLabel> labels(transitions.size());

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        if (options.manual != nullptr) {
            const auto it = options.manual->find({transitions[i].session_id, transitions[i].next_turn_index});
            if (it != options.manual->end()) {
                labels[i] = {it->second, 1.0, LabelMethod::Manual};
                continue;
            }
        }
        pending.push_back(i);
    }

    if (options.backend == ClassifierBackend::Heuristic || pending.size() < 2) {
        for (const auto i : pending) labels[i] = classify_transition(transitions[i], options.backend, gateway);
    } else {
        std::atomic<std::size_t> next{0};
        std::exception_ptr failure;
        std::mutex failure_mutex;
        {
            std::vector<std::jthread> workers;
            const auto n_workers = std::max<std::size_t>(1, std::min(options.workers, pending.size()));
            for (std::size_t w = 0; w < n_workers; ++w) {
                workers.emplace_back([&] {
                    for (auto k = next++; k < pending.size(); k = next++) {
                        try {
                            labels[pending[k]] = classify_transition(transitions[pending[k]], options.backend, gateway);
                        } catch (...) {
                            std::lock_guard lock(failure_mutex);
                            if (!failure) failure = std::current_exception();
                            next = pending.size();
                        }
                    }
                });
            }
        }
        if (failure) std::rethrow_exception(failure);
    }

    result.report = aggregate_intents(labels, options.window);
    result.registry = derive_category_registry(result.report, options.min_share);
    result.labeled.reserve(transitions.size());
    for (std::size_t i = 0; i < transitions.size(); ++i) {
        result.labeled.push_back({std::move(transitions[i]), labels[i]});
    }
    return result;
}

}  // namespace nqs
