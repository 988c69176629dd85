#include <doctest.h>

#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <mutex>
#include <thread>

#include "kgllm/llm_client.hpp"

using namespace kgllm;
using namespace std::chrono_literals;

namespace {

/// Local HTTP server on an ephemeral port, stopped on destruction.
class LocalServer {
public:
    LocalServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url(std::string_view path) const {
        return "http://127.0.0.1:" + std::to_string(port_) + std::string(path);
    }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion_body(std::string_view text) {
    nlohmann::json j;
    j["choices"] = nlohmann::json::array({{{"text", text}}});
    return j.dump();
}

ClientConfig fast_config(std::string endpoint) {
    ClientConfig c;
    c.endpoint = std::move(endpoint);
    c.model = "test-model";
    c.backoff = 1ms;
    c.timeout = 2000ms;
    return c;
}

/// Counts concurrent calls and answers with the prompt after a short pause.
class SlowEcho final : public CompletionBackend {
public:
    std::string complete(const CompletionRequest& request) override {
        const int now = ++active_;
        int seen = peak_.load();
        while (now > seen && !peak_.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(2ms);
        --active_;
        if (request.prompt == "fail") throw ClientError("boom");
        return "re:" + request.prompt;
    }
    int peak() const { return peak_; }

private:
    std::atomic<int> active_{0};
    std::atomic<int> peak_{0};
};

}  // namespace

TEST_CASE("envelope and stub names round-trip") {
    for (auto e : {Envelope::completion, Envelope::chat}) {
        CHECK(parse_envelope(to_string(e)) == std::optional<Envelope>(e));
    }
    for (auto p : {StubPolicy::oracle, StubPolicy::constant_no, StubPolicy::constant_yes,
                   StubPolicy::echo}) {
        CHECK(parse_stub_policy(to_string(p)) == std::optional<StubPolicy>(p));
    }
    CHECK_FALSE(parse_envelope("grpc").has_value());
}

TEST_CASE("request bodies follow the envelope") {
    ClientConfig c;
    c.model = "m";
    c.max_tokens = 32;
    auto j = nlohmann::json::parse(build_request_body("hello", c));
    CHECK(j["model"] == "m");
    CHECK(j["prompt"] == "hello");
    CHECK(j["max_tokens"] == 32);
    CHECK(j["temperature"] == 0.0);
    c.envelope = Envelope::chat;
    j = nlohmann::json::parse(build_request_body("hello", c));
    CHECK_FALSE(j.contains("prompt"));
    CHECK(j["messages"][0]["role"] == "user");
    CHECK(j["messages"][0]["content"] == "hello");
}

TEST_CASE("response bodies are read per envelope") {
    CHECK(parse_response_body(completion_body("The answer is yes."), Envelope::completion) ==
          "The answer is yes.");
    CHECK(parse_response_body(R"({"choices":[{"message":{"role":"assistant","content":"no"}}]})",
                              Envelope::chat) == "no");
    CHECK_THROWS_AS((void)parse_response_body("{}", Envelope::completion), EnvelopeError);
    CHECK_THROWS_AS((void)parse_response_body("not json", Envelope::chat), EnvelopeError);
    CHECK_THROWS_AS((void)parse_response_body(completion_body("x"), Envelope::chat), EnvelopeError);
}

TEST_CASE("http backend posts the prompt with a bearer token and reads the reply") {
    LocalServer local;
    std::mutex mu;
    std::string seen_auth, seen_body;
    local.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        std::lock_guard lock(mu);
        seen_auth = req.get_header_value("Authorization");
        seen_body = req.body;
        res.set_content(completion_body("The answer is yes."), "application/json");
    });
    local.server().Post("/v1/chat/completions",
                        [&](const httplib::Request&, httplib::Response& res) {
                            res.set_content(R"({"choices":[{"message":{"content":"chat ok"}}]})",
                                            "application/json");
                        });

    ::setenv("KGLLM_TEST_TOKEN", "sekrit", 1);
    auto config = fast_config(local.url("/v1/completions"));
    config.token_env = "KGLLM_TEST_TOKEN";
    HttpBackend backend(config);

    PromptRecord record;
    record.output = "GOLD-ANSWER-MARKER";
    record.meta.label = Label::positive;
    const std::string reply = backend.complete(CompletionRequest{1, "prompt text", &record});
    CHECK(reply == "The answer is yes.");
    std::lock_guard lock(mu);
    CHECK(seen_auth == "Bearer sekrit");
    CHECK(nlohmann::json::parse(seen_body)["prompt"] == "prompt text");
    CHECK(seen_body.find("GOLD-ANSWER-MARKER") == std::string::npos);
    CHECK(seen_body.find("positive") == std::string::npos);

    auto chat = fast_config(local.url("/v1/chat/completions"));
    chat.envelope = Envelope::chat;
    CHECK(complete("hi", chat) == "chat ok");
}

TEST_CASE("server errors are retried up to the limit") {
    LocalServer local;
    std::atomic<int> hits{0};
    local.server().Post("/fail", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 500;
        res.set_content("internal trouble", "text/plain");
    });
    auto config = fast_config(local.url("/fail"));
    config.max_retries = 2;
    HttpBackend backend(config);
    try {
        (void)backend.complete({1, "p", nullptr});
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.status() == 500);
        CHECK(e.body_excerpt().find("internal trouble") != std::string::npos);
    }
    CHECK(hits == 3);
}

TEST_CASE("a 429 followed by success returns the success") {
    LocalServer local;
    std::atomic<int> hits{0};
    local.server().Post("/flaky", [&](const httplib::Request&, httplib::Response& res) {
        if (hits++ == 0) {
            res.status = 429;
            return;
        }
        res.set_content(completion_body("The answer is no."), "application/json");
    });
    HttpBackend backend(fast_config(local.url("/flaky")));
    CHECK(backend.complete({1, "p", nullptr}) == "The answer is no.");
    CHECK(hits == 2);
}

TEST_CASE("auth failures are not retried") {
    LocalServer local;
    std::atomic<int> hits{0};
    local.server().Post("/auth", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 401;
    });
    HttpBackend backend(fast_config(local.url("/auth")));
    CHECK_THROWS_AS((void)backend.complete({1, "p", nullptr}), AuthError);
    CHECK(hits == 1);
}

TEST_CASE("a malformed envelope is an envelope error") {
    LocalServer local;
    local.server().Post("/bad", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"result":"yes"})", "application/json");
    });
    HttpBackend backend(fast_config(local.url("/bad")));
    CHECK_THROWS_AS((void)backend.complete({1, "p", nullptr}), EnvelopeError);
}

TEST_CASE("a slow server is a timeout") {
    LocalServer local;
    local.server().Post("/slow", [&](const httplib::Request&, httplib::Response& res) {
        std::this_thread::sleep_for(600ms);
        res.set_content(completion_body("late"), "application/json");
    });
    auto config = fast_config(local.url("/slow"));
    config.timeout = 100ms;
    config.max_retries = 0;
    HttpBackend backend(config);
    CHECK_THROWS_AS((void)backend.complete({1, "p", nullptr}), TimeoutError);
}

TEST_CASE("an unreachable endpoint is a transport error") {
    // nothing listens on the privileged port 1, so the connection is refused
    auto config = fast_config("http://127.0.0.1:1/v1/completions");
    config.max_retries = 1;
    HttpBackend backend(config);
    CHECK_THROWS_AS((void)backend.complete({1, "p", nullptr}), TransportError);
    CHECK_THROWS_AS(HttpBackend(fast_config("localhost:80")), std::invalid_argument);
}

TEST_CASE("stub policies") {
    PromptRecord record;
    record.output = "The answer is yes.";
    StubBackend oracle(StubPolicy::oracle);
    CHECK(oracle.complete({1, "p", &record}) == record.output);
    CHECK_THROWS_AS((void)oracle.complete({1, "p", nullptr}), ClientError);
    StubBackend no(StubPolicy::constant_no);
    CHECK(no.complete({1, "p", &record}) == "The answer is no.");
    StubBackend echo(StubPolicy::echo);
    CHECK(echo.complete({1, "prompt", nullptr}) == "prompt");
}

TEST_CASE("run_batch keeps input order and bounds concurrency") {
    std::vector<CompletionRequest> requests;
    for (std::uint64_t i = 0; i < 40; ++i) {
        requests.push_back({i * 10, i == 7 ? "fail" : "p" + std::to_string(i), nullptr});
    }
    SlowEcho serial_backend;
    const auto serial = run_batch(requests, serial_backend, 1);
    CHECK(serial_backend.peak() == 1);
    SlowEcho parallel_backend;
    const auto parallel = run_batch(requests, parallel_backend, 8);
    CHECK(parallel_backend.peak() <= 8);
    CHECK(parallel_backend.peak() > 1);

    REQUIRE(serial.size() == requests.size());
    REQUIRE(parallel.size() == requests.size());
    for (std::size_t i = 0; i < requests.size(); ++i) {
        CHECK(serial[i].id == requests[i].id);
        CHECK(parallel[i].id == requests[i].id);
        CHECK(serial[i].response == parallel[i].response);
        CHECK(serial[i].error == parallel[i].error);
    }
    CHECK_FALSE(serial[7].response.has_value());
    CHECK(serial[7].error == "boom");
    CHECK(serial[8].response == std::optional<std::string>("re:p8"));
    CHECK_THROWS_AS((void)run_batch(requests, serial_backend, 0), std::invalid_argument);
}

TEST_CASE("run_batch stops handing out work once stop is requested") {
    std::vector<CompletionRequest> requests(200);
    for (std::uint64_t i = 0; i < requests.size(); ++i) requests[i] = {i, "p", nullptr};
    std::stop_source source;
    SlowEcho backend;
    std::thread stopper([&] {
        std::this_thread::sleep_for(20ms);
        source.request_stop();
    });
    const auto results = run_batch(requests, backend, 2, source.get_token());
    stopper.join();
    std::size_t cancelled = 0;
    for (const auto& r : results) {
        if (r.cancelled) {
            ++cancelled;
            CHECK_FALSE(r.response.has_value());
            CHECK(r.error == "cancelled");
        } else {
            CHECK(r.response.has_value());
        }
    }
    CHECK(cancelled > 0);
    CHECK(cancelled < requests.size());

    source = std::stop_source{};
    source.request_stop();
    for (const auto& r : run_batch(requests, backend, 4, source.get_token())) CHECK(r.cancelled);
}
