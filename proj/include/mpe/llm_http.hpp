#pragma once

// Live chat-completions backend over HTTP(S).

#include "mpe/llm_gateway.hpp"

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

namespace mpe {

/// JSON body for POST {base_url}/v1/chat/completions.
inline nlohmann::ordered_json wire_body(const ChatRequest& req) {
    nlohmann::ordered_json body;
    body["model"] = req.model;
    body["temperature"] = req.temperature;
    auto msgs = nlohmann::ordered_json::array();
    for (const auto& m : req.messages)
        msgs.push_back({{"role", std::string(to_string(m.role))}, {"content", m.content}});
    body["messages"] = std::move(msgs);
    if (req.max_tokens) body["max_tokens"] = *req.max_tokens;
    return body;
}

/// Takes the first choice's message content from a completions response.
inline ChatResponse parse_wire_response(int status, const std::string& body) {
    try {
        auto j = nlohmann::json::parse(body);
        const auto& choice = j.at("choices").at(0);
        ChatResponse r;
        const auto& content = choice.at("message").at("content");
        r.content = content.is_null() ? std::string{} : content.get<std::string>();
        auto fr = choice.find("finish_reason");
        r.finish_reason = (fr != choice.end() && fr->is_string()) ? parse_finish_reason(fr->get<std::string>())
                                                                  : FinishReason::stop;
        if (auto u = j.find("usage"); u != j.end() && u->is_object()) {
            r.usage.prompt = u->value("prompt_tokens", 0LL);
            r.usage.completion = u->value("completion_tokens", 0LL);
        }
        if (r.finish_reason == FinishReason::stop && r.content.empty())
            throw ProtocolError(status, "empty content with finish_reason=stop");
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(status, std::string("unparseable completion body (") + e.what() + "): " + body);
    }
}

class HttpChatBackend : public ChatBackend {
public:
    explicit HttpChatBackend(BackendConfig config) : config_(std::move(config)) {
        config_.validate();
        // Split "scheme://host[:port]/prefix" so the prefix can be prepended to the endpoint path.
        auto scheme_end = config_.base_url.find("://");
        if (scheme_end == std::string::npos) throw ConfigError("backend base_url needs a scheme: " + config_.base_url);
        auto path_start = config_.base_url.find('/', scheme_end + 3);
        origin_ = config_.base_url.substr(0, path_start);
        if (path_start != std::string::npos) prefix_ = config_.base_url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
    }

    ChatResponse complete(const ChatRequest& request) override {
        request.validate();
        const auto body = wire_body(request).dump();
        const auto path = prefix_ + "/v1/chat/completions";
        httplib::Headers headers{{"Authorization", "Bearer " + config_.api_key}};

        std::string last_failure;
        double backoff = config_.retry_backoff_s;
        for (int attempt = 0; attempt <= config_.max_retries; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(std::chrono::duration<double>(backoff));
                backoff *= 2.0;
            }
            httplib::Client cli(origin_);
            const auto t = std::chrono::duration<double>(config_.timeout_s);
            cli.set_connection_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            cli.set_read_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            cli.set_write_timeout(std::chrono::duration_cast<std::chrono::microseconds>(t));
            auto res = cli.Post(path, headers, body, "application/json");
            if (!res) {
                last_failure = "transport failure: " + httplib::to_string(res.error());
                continue;
            }
            if (res->status >= 200 && res->status < 300) return parse_wire_response(res->status, res->body);
            if (res->status == 429 || res->status >= 500) {
                last_failure = "HTTP " + std::to_string(res->status);
                continue;
            }
            throw ProtocolError(res->status, res->body);
        }
        throw TransportError("chat backend failed after " + std::to_string(config_.max_retries + 1) +
                             " attempts; last: " + last_failure);
    }

    [[nodiscard]] std::string identity() const override { return "http:" + config_.base_url; }

private:
    BackendConfig config_;
    std::string origin_;
    std::string prefix_;
};

}  // namespace mpe
