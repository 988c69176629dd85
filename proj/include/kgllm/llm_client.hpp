#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <stop_token>
#include <string>
#include <string_view>
#include <vector>

#include "kgllm/prompt.hpp"

namespace kgllm {

enum class Envelope : std::uint8_t { completion, chat };
enum class StubPolicy : std::uint8_t { oracle, constant_no, constant_yes, echo };

std::string_view to_string(Envelope envelope);
std::string_view to_string(StubPolicy policy);
std::optional<Envelope> parse_envelope(std::string_view text);
std::optional<StubPolicy> parse_stub_policy(std::string_view text);

struct ClientConfig {
    std::string endpoint;  // e.g. http://localhost:8000/v1/completions
    std::string model;
    std::string token_env = "KGLLM_API_TOKEN";
    std::chrono::milliseconds timeout{60'000};
    std::size_t max_retries = 2;
    std::size_t max_in_flight = 4;
    std::chrono::milliseconds backoff{200};  // doubled after each failed attempt
    double temperature = 0.0;
    std::size_t max_tokens = 256;
    Envelope envelope = Envelope::completion;
};

/// Base of all client failures.
class ClientError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-2xx status (after retries) or a connection-level failure.
class TransportError : public ClientError {
public:
    TransportError(std::string message, int status, std::string body_excerpt);

    int status() const noexcept { return status_; }  // 0 when no response arrived
    const std::string& body_excerpt() const noexcept { return body_excerpt_; }

private:
    int status_;
    std::string body_excerpt_;
};

class TimeoutError : public ClientError {
public:
    using ClientError::ClientError;
};

/// 401 / 403 responses; never retried.
class AuthError : public ClientError {
public:
    using ClientError::ClientError;
};

/// 2xx response whose JSON envelope lacks the expected text field.
class EnvelopeError : public ClientError {
public:
    using ClientError::ClientError;
};

/// One prompt to complete. `record` is visible to stub backends only; HTTP
/// requests are built from `prompt` alone.
struct CompletionRequest {
    std::uint64_t id = 0;
    std::string prompt;
    const PromptRecord* record = nullptr;
};

class CompletionBackend {
public:
    virtual ~CompletionBackend() = default;
    virtual std::string complete(const CompletionRequest& request) = 0;
};

/// JSON request body for the configured envelope.
std::string build_request_body(std::string_view prompt, const ClientConfig& config);

/// Extracts the generated text from a response body.
std::string parse_response_body(std::string_view body, Envelope envelope);

class HttpBackend final : public CompletionBackend {
public:
    explicit HttpBackend(ClientConfig config);
    ~HttpBackend() override;

    std::string complete(const CompletionRequest& request) override;

private:
    struct Endpoint;
    ClientConfig config_;
    std::unique_ptr<Endpoint> endpoint_;
};

/// Deterministic test doubles: oracle returns the record's expected output,
/// the constant policies always answer one class, echo returns the prompt.
class StubBackend final : public CompletionBackend {
public:
    explicit StubBackend(StubPolicy policy) : policy_(policy) {}
    std::string complete(const CompletionRequest& request) override;

private:
    StubPolicy policy_;
};

/// Single-prompt convenience over HttpBackend.
std::string complete(std::string_view prompt, const ClientConfig& config);

struct BatchResult {
    std::uint64_t id = 0;
    std::optional<std::string> response;
    std::string error;  // set when response is empty
    bool cancelled = false;
};

/// Runs the requests with at most `max_in_flight` concurrent calls. Results
/// come back in input order; a failing request yields an error entry rather
/// than aborting the batch. When `stop` is requested, pending requests are
/// marked cancelled and every worker is joined before returning.
std::vector<BatchResult> run_batch(std::span<const CompletionRequest> requests,
                                   CompletionBackend& backend, std::size_t max_in_flight,
                                   std::stop_token stop = {});

}  // namespace kgllm
