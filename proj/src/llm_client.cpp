#include "kgllm/llm_client.hpp"

#include <atomic>
#include <cstdlib>
#include <regex>
#include <thread>

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

namespace kgllm {

std::string_view to_string(Envelope envelope) {
    return envelope == Envelope::completion ? "completion" : "chat";
}

std::string_view to_string(StubPolicy policy) {
    switch (policy) {
        case StubPolicy::oracle: return "oracle";
        case StubPolicy::constant_no: return "constant_no";
        case StubPolicy::constant_yes: return "constant_yes";
        case StubPolicy::echo: return "echo";
    }
    return "oracle";
}

std::optional<Envelope> parse_envelope(std::string_view text) {
    if (text == "completion") return Envelope::completion;
    if (text == "chat") return Envelope::chat;
    return std::nullopt;
}

std::optional<StubPolicy> parse_stub_policy(std::string_view text) {
    if (text == "oracle") return StubPolicy::oracle;
    if (text == "constant_no") return StubPolicy::constant_no;
    if (text == "constant_yes") return StubPolicy::constant_yes;
    if (text == "echo") return StubPolicy::echo;
    return std::nullopt;
}

TransportError::TransportError(std::string message, int status, std::string body_excerpt)
    : ClientError(std::move(message)), status_(status), body_excerpt_(std::move(body_excerpt)) {}

std::string build_request_body(std::string_view prompt, const ClientConfig& config) {
    nlohmann::ordered_json j;
    j["model"] = config.model;
    if (config.envelope == Envelope::completion) {
        j["prompt"] = prompt;
    } else {
        j["messages"] = nlohmann::ordered_json::array(
            {{{"role", "user"}, {"content", std::string(prompt)}}});
    }
    j["temperature"] = config.temperature;
    j["max_tokens"] = config.max_tokens;
    return j.dump();
}

std::string parse_response_body(std::string_view body, Envelope envelope) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded()) throw EnvelopeError("response body is not JSON");
    try {
        const auto& choice = j.at("choices").at(0);
        if (envelope == Envelope::completion) return choice.at("text").get<std::string>();
        return choice.at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw EnvelopeError(fmt::format("unexpected {} envelope: {}", to_string(envelope), e.what()));
    }
}

struct HttpBackend::Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

HttpBackend::HttpBackend(ClientConfig config)
    : config_(std::move(config)), endpoint_(std::make_unique<Endpoint>()) {
    static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(config_.endpoint, m, url)) {
        throw std::invalid_argument(fmt::format("invalid endpoint URL '{}'", config_.endpoint));
    }
    endpoint_->origin = m[1].str();
    endpoint_->path = m[2].matched ? m[2].str() : "/";
}

HttpBackend::~HttpBackend() = default;

namespace {

std::string excerpt(std::string_view body) {
    constexpr std::size_t kMax = 200;
    return std::string(body.substr(0, kMax));
}

bool transient_status(int status) { return status == 429 || status >= 500; }

}  // namespace

std::string HttpBackend::complete(const CompletionRequest& request) {
    httplib::Client client(endpoint_->origin);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    httplib::Headers headers;
    if (const char* token = std::getenv(config_.token_env.c_str()); token && *token) {
        headers.emplace("Authorization", fmt::format("Bearer {}", token));
    }
    const std::string body = build_request_body(request.prompt, config_);

    std::string last_error;
    int last_status = 0;
    std::string last_body;
    bool last_timed_out = false;
    for (std::size_t attempt = 0; attempt <= config_.max_retries; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(config_.backoff * (1LL << (attempt - 1)));

        const auto started = std::chrono::steady_clock::now();
        auto res = client.Post(endpoint_->path, headers, body, "application/json");
        if (!res) {
            const auto elapsed = std::chrono::steady_clock::now() - started;
            last_timed_out = res.error() == httplib::Error::ConnectionTimeout ||
                             elapsed >= config_.timeout;
            last_status = 0;
            last_body.clear();
            last_error = httplib::to_string(res.error());
            continue;
        }
        last_timed_out = false;
        if (res->status == 401 || res->status == 403) {
            throw AuthError(fmt::format("{} rejected credentials (status {}; token from ${})",
                                        config_.endpoint, res->status, config_.token_env));
        }
        if (res->status >= 200 && res->status < 300) {
            return parse_response_body(res->body, config_.envelope);
        }
        last_status = res->status;
        last_body = res->body;
        last_error = fmt::format("status {}", res->status);
        if (!transient_status(res->status)) break;
    }

    const std::size_t attempts_made = config_.max_retries + 1;
    if (last_timed_out) {
        throw TimeoutError(fmt::format("{} timed out after {} attempt(s)", config_.endpoint,
                                       attempts_made));
    }
    throw TransportError(fmt::format("{} failed: {}", config_.endpoint, last_error), last_status,
                         excerpt(last_body));
}

std::string StubBackend::complete(const CompletionRequest& request) {
    switch (policy_) {
        case StubPolicy::oracle:
            if (!request.record) throw ClientError("oracle stub needs the prompt record");
            return request.record->output;
        case StubPolicy::constant_no: return "The answer is no.";
        case StubPolicy::constant_yes: return "The answer is yes.";
        case StubPolicy::echo: return request.prompt;
    }
    return {};
}

std::string complete(std::string_view prompt, const ClientConfig& config) {
    HttpBackend backend(config);
    return backend.complete(CompletionRequest{0, std::string(prompt), nullptr});
}

std::vector<BatchResult> run_batch(std::span<const CompletionRequest> requests,
                                   CompletionBackend& backend, std::size_t max_in_flight,
                                   std::stop_token stop) {
    if (max_in_flight == 0) throw std::invalid_argument("max_in_flight must be at least 1");
    std::vector<BatchResult> results(requests.size());
    std::vector<char> done(requests.size(), 0);
    std::atomic<std::size_t> cursor{0};

    auto worker = [&] {
        while (!stop.stop_requested()) {
            const std::size_t i = cursor++;
            if (i >= requests.size()) return;
            BatchResult& r = results[i];
            r.id = requests[i].id;
            try {
                r.response = backend.complete(requests[i]);
            } catch (const std::exception& e) {
                r.error = e.what();
            }
            done[i] = 1;
        }
    };

    {
        const std::size_t n = std::min(max_in_flight, requests.size());
        std::vector<std::jthread> pool;
        pool.reserve(n);
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    }

    for (std::size_t i = 0; i < requests.size(); ++i) {
        if (!done[i]) {
            results[i].id = requests[i].id;
            results[i].cancelled = true;
            results[i].error = "cancelled";
        }
    }
    return results;
}

}  // namespace kgllm
