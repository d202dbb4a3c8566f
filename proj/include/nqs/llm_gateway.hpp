#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>
#include <vector>

namespace nqs {

struct CompletionRequest {
    std::string prompt;
    int max_tokens = 512;
    double temperature = 0.2;
    std::vector<std::string> stop_sequences;

    // Throws InvalidRequest when prompt is empty, max_tokens < 1 or
    // temperature is outside [0, 2].
    void validate() const;
};

struct CompletionResult {
    std::string text;
    std::string backend_id;
    std::int64_t latency_ms = 0;
};

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual CompletionResult complete(const CompletionRequest& request) = 0;
    virtual std::string id() const = 0;
};

// Deterministic backend: scripted completions keyed by the prompt
// fingerprint, with a canned suggestion list for anything unscripted.
class MockBackend final : public LlmBackend {
public:
    explicit MockBackend(std::map<std::string, std::string> script = {});

    // JSON object mapping prompt fingerprint -> completion text.
    static std::unique_ptr<MockBackend> from_file(const std::filesystem::path& path);

    void add(const std::string& prompt, std::string completion);
    void add_fingerprint(const std::string& fingerprint, std::string completion);

    CompletionResult complete(const CompletionRequest& request) override;
    std::string id() const override { return "mock"; }

    static const std::string& fallback_text();

private:
    mutable std::mutex mutex_;
    std::map<std::string, std::string> script_;
};

struct RetryPolicy {
    int attempts = 3;
    std::chrono::milliseconds base_backoff{200};
    // Injected for tests; defaults to std::this_thread::sleep_for.
    std::function<void(std::chrono::milliseconds)> sleep;
};

struct RemoteConfig {
    // e.g. http://127.0.0.1:8088/complete ; path defaults to /complete.
    std::string url;
    std::string api_key;
    std::chrono::milliseconds timeout{30000};
    RetryPolicy retry;
};

// Speaks {prompt, max_tokens, temperature[, stop]} -> {text} over HTTP POST.
class RemoteBackend final : public LlmBackend {
public:
    explicit RemoteBackend(RemoteConfig config);

    CompletionResult complete(const CompletionRequest& request) override;
    std::string id() const override { return "remote:" + host_; }

private:
    RemoteConfig config_;
    std::string host_;
    std::string path_;
};

// Front door for every completion: validates, bounds concurrency, applies
// stop sequences and logs metadata only (never prompt or completion text).
class Gateway {
public:
    explicit Gateway(std::shared_ptr<LlmBackend> backend, std::ptrdiff_t in_flight_cap = 8);

    CompletionResult complete(const CompletionRequest& request);

    const LlmBackend& backend() const noexcept { return *backend_; }

private:
    std::shared_ptr<LlmBackend> backend_;
    std::counting_semaphore<> slots_;
};

struct GatewayConfig {
    std::string kind = "mock";  // mock | remote
    std::string remote_url;
    std::string api_key_env = "NQS_API_KEY";
    std::chrono::milliseconds timeout{30000};
    int in_flight_cap = 8;
    std::filesystem::path mock_script;
};

std::shared_ptr<Gateway> make_gateway(const GatewayConfig& config);

}  // namespace nqs
