#include "nqs/llm_gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "nqs/error.hpp"
#include "nqs/log.hpp"
#include "nqs/text.hpp"

namespace nqs {

using nlohmann::json;

void CompletionRequest::validate() const {
    if (prompt.empty()) throw Error(ErrorCode::InvalidRequest, "prompt must be nonempty");
    if (max_tokens < 1) throw Error(ErrorCode::InvalidRequest, "max_tokens must be >= 1");
    if (!(temperature >= 0.0 && temperature <= 2.0)) {
        throw Error(ErrorCode::InvalidRequest, "temperature must be within [0, 2]");
    }
}

MockBackend::MockBackend(std::map<std::string, std::string> script) : script_(std::move(script)) {}

std::unique_ptr<MockBackend> MockBackend::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read mock script " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidRequest, "mock script " + path.string() + ": " + e.what());
    }
    return std::make_unique<MockBackend>(j.get<std::map<std::string, std::string>>());
}

void MockBackend::add(const std::string& prompt, std::string completion) {
    add_fingerprint(text::fingerprint(prompt), std::move(completion));
}

void MockBackend::add_fingerprint(const std::string& fingerprint, std::string completion) {
    std::lock_guard lock(mutex_);
    script_[fingerprint] = std::move(completion);
}

const std::string& MockBackend::fallback_text() {
    static const std::string text =
        "What related capabilities could help me go further with this topic? (Expansion)\n"
        "What should I do next to put this answer into practice? (Follow-up)\n";
    return text;
}

CompletionResult MockBackend::complete(const CompletionRequest& request) {
    const auto key = text::fingerprint(request.prompt);
    std::lock_guard lock(mutex_);
    const auto it = script_.find(key);
    return {it != script_.end() ? it->second : fallback_text(), id(), 0};
}

RemoteBackend::RemoteBackend(RemoteConfig config) : config_(std::move(config)) {
    const auto scheme_end = config_.url.find("://");
    const auto host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    const auto path_start = config_.url.find('/', host_start);
    host_ = config_.url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/complete" : config_.url.substr(path_start);
    if (host_.size() <= host_start) throw Error(ErrorCode::InvalidArgument, "bad remote url: " + config_.url);
    if (!config_.retry.sleep) {
        config_.retry.sleep = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    }
}

CompletionResult RemoteBackend::complete(const CompletionRequest& request) {
    json body{{"prompt", request.prompt}, {"max_tokens", request.max_tokens}, {"temperature", request.temperature}};
    if (!request.stop_sequences.empty()) body["stop"] = request.stop_sequences;
    const auto payload = body.dump();

    httplib::Client client(host_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    const auto started = std::chrono::steady_clock::now();
    auto backoff = config_.retry.base_backoff;
    std::string last_error;
    for (int attempt = 1; attempt <= config_.retry.attempts; ++attempt) {
        auto res = client.Post(path_, headers, payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            log::warn("remote backend attempt " + std::to_string(attempt) + " failed: " + last_error);
            if (attempt < config_.retry.attempts) {
                config_.retry.sleep(backoff);
                backoff *= 2;
            }
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw Error(ErrorCode::BackendRefused, "status " + std::to_string(res->status));
        }
        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::exception&) {
            throw Error(ErrorCode::BackendRefused, "response is not JSON");
        }
        if (!reply.contains("text") || !reply["text"].is_string()) {
            throw Error(ErrorCode::BackendRefused, "response lacks a text field");
        }
        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - started);
        return {reply["text"].get<std::string>(), id(), elapsed.count()};
    }
    throw Error(ErrorCode::BackendUnavailable,
                std::to_string(config_.retry.attempts) + " attempts failed, last error: " + last_error);
}

Gateway::Gateway(std::shared_ptr<LlmBackend> backend, std::ptrdiff_t in_flight_cap)
    : backend_(std::move(backend)), slots_(in_flight_cap) {
    if (!backend_) throw Error(ErrorCode::InvalidArgument, "gateway needs a backend");
    if (in_flight_cap < 1) throw Error(ErrorCode::InvalidArgument, "in-flight cap must be >= 1");
}

CompletionResult Gateway::complete(const CompletionRequest& request) {
    request.validate();
    slots_.acquire();
    struct Release {
        std::counting_semaphore<>& s;
        ~Release() { s.release(); }
    } release{slots_};

    const auto started = std::chrono::steady_clock::now();
    auto result = backend_->complete(request);
    for (const auto& stop : request.stop_sequences) {
        if (stop.empty()) continue;
        if (const auto pos = result.text.find(stop); pos != std::string::npos) result.text.resize(pos);
    }
    if (result.latency_ms == 0) {
        result.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                std::chrono::steady_clock::now() - started)
                                .count();
    }
    log::info("completion backend=" + result.backend_id + " prompt_bytes=" + std::to_string(request.prompt.size()) +
              " completion_bytes=" + std::to_string(result.text.size()) +
              " latency_ms=" + std::to_string(result.latency_ms));
    return result;
}

std::shared_ptr<Gateway> make_gateway(const GatewayConfig& config) {
    std::shared_ptr<LlmBackend> backend;
    if (config.kind == "mock") {
        if (config.mock_script.empty()) {
            backend = std::make_shared<MockBackend>();
        } else {
            backend = MockBackend::from_file(config.mock_script);
        }
    } else if (config.kind == "remote") {
        RemoteConfig rc;
        rc.url = config.remote_url;
        rc.timeout = config.timeout;
        if (const char* key = std::getenv(config.api_key_env.c_str())) rc.api_key = key;
        backend = std::make_shared<RemoteBackend>(std::move(rc));
    } else {
        throw Error(ErrorCode::InvalidArgument, "unknown gateway kind: " + config.kind);
    }
    return std::make_shared<Gateway>(std::move(backend), config.in_flight_cap);
}

}  // namespace nqs
