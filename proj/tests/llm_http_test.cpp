#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace mpe;

namespace {

// Local chat-completions endpoint whose behaviour is scripted per test.
class FakeServer {
public:
    using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

    explicit FakeServer(Handler h) : handler_(std::move(h)) {
        server_.Post("/prefix/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            ++hits;
            last_auth = req.get_header_value("Authorization");
            last_body = req.body;
            handler_(req, res);
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }

    [[nodiscard]] std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/prefix/"; }

    std::atomic<int> hits{0};
    std::string last_auth;
    std::string last_body;

private:
    Handler handler_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string completion(const std::string& content, const std::string& finish = "stop") {
    nlohmann::json j;
    j["choices"] = nlohmann::json::array({{{"message", {{"role", "assistant"}, {"content", content}}},
                                           {"finish_reason", finish}}});
    j["usage"] = {{"prompt_tokens", 12}, {"completion_tokens", 5}};
    return j.dump();
}

BackendConfig config_for(const FakeServer& s, int retries = 2) {
    BackendConfig c;
    c.base_url = s.base_url();
    c.api_key = "test-key";
    c.timeout_s = 5;
    c.max_retries = retries;
    c.retry_backoff_s = 0.01;
    return c;
}

ChatRequest simple(const std::string& content) {
    ChatRequest r;
    r.messages.push_back({Role::user, content});
    return r;
}

}  // namespace

TEST(HttpBackend, SendsWireBodyAndBearer) {
    FakeServer server([](const auto&, auto& res) { res.set_content(completion("[pickup] 1"), "application/json"); });
    HttpChatBackend backend(config_for(server));
    auto resp = backend.complete(simple("hello"));
    EXPECT_EQ(resp.content, "[pickup] 1");
    EXPECT_EQ(resp.finish_reason, FinishReason::stop);
    EXPECT_EQ(resp.usage, (TokenUsage{12, 5}));
    EXPECT_EQ(server.last_auth, "Bearer test-key");
    auto body = nlohmann::json::parse(server.last_body);
    EXPECT_EQ(body["model"], "gpt-4");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["messages"][0]["content"], "hello");
    EXPECT_FALSE(body.contains("max_tokens"));
}

TEST(HttpBackend, RetriesTransientStatusThenSucceeds) {
    std::atomic<int> n{0};
    FakeServer server([&](const auto&, auto& res) {
        if (++n < 3) {
            res.status = n == 1 ? 429 : 503;
            return;
        }
        res.set_content(completion("ok"), "application/json");
    });
    HttpChatBackend backend(config_for(server, 3));
    EXPECT_EQ(backend.complete(simple("x")).content, "ok");
    EXPECT_EQ(server.hits, 3);
}

TEST(HttpBackend, ExhaustedRetriesAreTransportError) {
    FakeServer server([](const auto&, auto& res) { res.status = 500; });
    HttpChatBackend backend(config_for(server, 2));
    EXPECT_THROW(backend.complete(simple("x")), TransportError);
    EXPECT_EQ(server.hits, 3);
}

TEST(HttpBackend, ClientErrorIsTerminal) {
    FakeServer server([](const auto&, auto& res) {
        res.status = 401;
        res.set_content(R"({"error": "bad key"})", "application/json");
    });
    HttpChatBackend backend(config_for(server, 3));
    try {
        backend.complete(simple("x"));
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.status(), 401);
        EXPECT_NE(e.body().find("bad key"), std::string::npos);
    }
    EXPECT_EQ(server.hits, 1);
}

TEST(HttpBackend, MalformedBodiesAreProtocolErrors) {
    EXPECT_THROW(parse_wire_response(200, "not json"), ProtocolError);
    EXPECT_THROW(parse_wire_response(200, R"({"choices": []})"), ProtocolError);
    EXPECT_THROW(parse_wire_response(200, completion("")), ProtocolError);
    auto truncated = parse_wire_response(200, completion("[pickup] 5", "length"));
    EXPECT_EQ(truncated.finish_reason, FinishReason::length);
}

TEST(HttpBackend, UnreachableHostIsTransportError) {
    BackendConfig c;
    c.base_url = "http://127.0.0.1:1";
    c.timeout_s = 1;
    c.max_retries = 1;
    c.retry_backoff_s = 0.01;
    HttpChatBackend backend(c);
    EXPECT_THROW(backend.complete(simple("x")), TransportError);
    c.base_url = "127.0.0.1";
    EXPECT_THROW(HttpChatBackend{c}, ConfigError);
}

TEST(HttpBackend, CacheInFrontServesRepeatsLocally) {
    FakeServer server([](const auto&, auto& res) { res.set_content(completion("cached"), "application/json"); });
    auto dir = test::scratch_dir("http-cache");
    auto cached = with_cache(std::make_shared<HttpChatBackend>(config_for(server)), dir);
    cached->complete(simple("x"));
    cached->complete(simple("x"));
    EXPECT_EQ(server.hits, 1);
    std::filesystem::remove_all(dir);
}
