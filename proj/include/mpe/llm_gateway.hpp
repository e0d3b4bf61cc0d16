#pragma once

// Backend-agnostic chat completion. Every LLM-dependent stage talks to a
// ChatBackend; concrete backends are the scripted mock (offline replay), the
// content-addressed cache overlay and the HTTP client in llm_http.hpp.

#include "mpe/core.hpp"

#include <json.hpp>

#include <atomic>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <thread>

namespace mpe {

enum class Role { system, user, assistant };

inline std::string_view to_string(Role r) {
    switch (r) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "?";
}

inline Role parse_role(std::string_view s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw ArgumentError("unknown chat role '" + std::string(s) + "'");
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
    std::string model = "gpt-4";
    double temperature = 0.0;
    std::vector<ChatMessage> messages;
    std::optional<int> max_tokens;

    void validate() const {
        if (model.empty()) throw ArgumentError("chat request needs a model");
        if (!(temperature >= 0.0 && temperature <= 2.0)) throw ArgumentError("temperature must lie in [0, 2]");
        if (messages.empty()) throw ArgumentError("chat request needs at least one message");
        for (const auto& m : messages)
            if (m.content.empty()) throw ArgumentError("chat message content must be non-empty");
        if (max_tokens && *max_tokens <= 0) throw ArgumentError("max_tokens must be positive");
    }

    /// All message contents joined by newlines; what substring scripts match on.
    [[nodiscard]] std::string prompt_text() const {
        std::string s;
        for (std::size_t i = 0; i < messages.size(); ++i) {
            if (i) s += '\n';
            s += messages[i].content;
        }
        return s;
    }

    bool operator==(const ChatRequest&) const = default;
};

enum class FinishReason { stop, length, error };

inline std::string_view to_string(FinishReason f) {
    switch (f) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "?";
}

inline FinishReason parse_finish_reason(std::string_view s) {
    if (s == "length") return FinishReason::length;
    if (s == "stop") return FinishReason::stop;
    return FinishReason::error;
}

struct TokenUsage {
    long long prompt = 0;
    long long completion = 0;

    bool operator==(const TokenUsage&) const = default;
};

struct ChatResponse {
    std::string content;
    FinishReason finish_reason = FinishReason::stop;
    TokenUsage usage;

    bool operator==(const ChatResponse&) const = default;
};

struct BackendConfig {
    std::string base_url = "https://api.openai.com";
    std::string api_key;
    double timeout_s = 60.0;
    int max_retries = 3;
    double retry_backoff_s = 2.0;  // doubled after every failed attempt

    void validate() const {
        if (!(timeout_s > 0.0)) throw ConfigError("backend timeout_s must be positive");
        if (max_retries < 0 || max_retries > 10) throw ConfigError("backend max_retries must lie in [0, 10]");
        if (!(retry_backoff_s > 0.0)) throw ConfigError("backend retry_backoff_s must be positive");
        if (base_url.empty()) throw ConfigError("backend base_url must be set");
    }

    /// Reads the bearer token from LLM_API_KEY.
    static std::string api_key_from_env() {
        const char* v = std::getenv("LLM_API_KEY");
        return v ? std::string(v) : std::string{};
    }
};

// ---------------------------------------------------------------------------
// Canonical form and digest
// ---------------------------------------------------------------------------

/// Canonical request serialization: keys in the fixed order model,
/// temperature, messages, max_tokens; messages as {role, content}; no
/// insignificant whitespace; absent max_tokens written as null.
inline nlohmann::ordered_json canonical_request(const ChatRequest& req) {
    nlohmann::ordered_json j;
    j["model"] = req.model;
    j["temperature"] = req.temperature;
    auto msgs = nlohmann::ordered_json::array();
    for (const auto& m : req.messages) {
        nlohmann::ordered_json mj;
        mj["role"] = std::string(to_string(m.role));
        mj["content"] = m.content;
        msgs.push_back(std::move(mj));
    }
    j["messages"] = std::move(msgs);
    j["max_tokens"] = req.max_tokens ? nlohmann::ordered_json(*req.max_tokens) : nlohmann::ordered_json(nullptr);
    return j;
}

inline std::string canonical_request_text(const ChatRequest& req) { return canonical_request(req).dump(); }

inline std::string cache_key(const ChatRequest& req) { return sha256_hex(canonical_request_text(req)); }

/// Reads a request from JSON in any key order.
inline ChatRequest request_from_json(const nlohmann::json& j) {
    try {
        ChatRequest req;
        req.model = j.at("model").get<std::string>();
        req.temperature = j.value("temperature", 0.0);
        for (const auto& m : j.at("messages"))
            req.messages.push_back({parse_role(m.at("role").get<std::string>()), m.at("content").get<std::string>()});
        if (auto it = j.find("max_tokens"); it != j.end() && !it->is_null()) req.max_tokens = it->get<int>();
        return req;
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("malformed chat request JSON: ") + e.what());
    }
}

inline nlohmann::ordered_json response_to_json(const ChatResponse& r) {
    nlohmann::ordered_json j;
    j["content"] = r.content;
    j["finish_reason"] = std::string(to_string(r.finish_reason));
    j["usage"] = {{"prompt_tokens", r.usage.prompt}, {"completion_tokens", r.usage.completion}};
    return j;
}

inline ChatResponse response_from_json(const nlohmann::json& j) {
    ChatResponse r;
    r.content = j.at("content").get<std::string>();
    r.finish_reason = parse_finish_reason(j.at("finish_reason").get<std::string>());
    if (auto it = j.find("usage"); it != j.end()) {
        r.usage.prompt = it->value("prompt_tokens", 0LL);
        r.usage.completion = it->value("completion_tokens", 0LL);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Backends
// ---------------------------------------------------------------------------

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual ChatResponse complete(const ChatRequest& request) = 0;
    /// Short description recorded in run manifests.
    [[nodiscard]] virtual std::string identity() const = 0;
};

using BackendHandle = std::shared_ptr<ChatBackend>;

inline ChatResponse complete(const BackendHandle& backend, const ChatRequest& request) {
    if (!backend) throw ArgumentError("no chat backend configured");
    request.validate();
    return backend->complete(request);
}

/// Replies looked up by request digest, or by a literal prompt substring that
/// must match exactly one entry. Unknown requests are refused.
class ScriptedMockBackend : public ChatBackend {
public:
    ScriptedMockBackend() = default;

    /// Script document: {"digests": {hex: reply}, "substrings": {text: reply}}.
    static std::shared_ptr<ScriptedMockBackend> from_json_text(std::string_view text) {
        nlohmann::json doc;
        try {
            doc = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(std::string("mock script is not valid JSON: ") + e.what());
        }
        if (!doc.is_object()) throw ConfigError("mock script must be a JSON object");
        auto mock = std::make_shared<ScriptedMockBackend>();
        try {
            if (auto it = doc.find("digests"); it != doc.end())
                for (auto& [k, v] : it->items()) mock->by_digest_[k] = v.get<std::string>();
            if (auto it = doc.find("substrings"); it != doc.end())
                for (auto& [k, v] : it->items()) mock->by_substring_.emplace_back(k, v.get<std::string>());
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("mock script replies must be strings: ") + e.what());
        }
        mock->source_digest_ = sha256_hex(text);
        return mock;
    }

    static std::shared_ptr<ScriptedMockBackend> from_file(const std::filesystem::path& path) {
        try {
            return from_json_text(read_file(path));
        } catch (const TransportError&) {
            throw ConfigError("cannot read mock script " + path.string());
        }
    }

    void register_reply(const ChatRequest& request, std::string reply) {
        std::lock_guard lock(mu_);
        by_digest_[cache_key(request)] = std::move(reply);
    }
    void register_digest(std::string digest, std::string reply) {
        std::lock_guard lock(mu_);
        by_digest_[std::move(digest)] = std::move(reply);
    }
    void register_substring(std::string needle, std::string reply) {
        std::lock_guard lock(mu_);
        by_substring_.emplace_back(std::move(needle), std::move(reply));
    }

    ChatResponse complete(const ChatRequest& request) override {
        request.validate();
        calls_.fetch_add(1);
        const auto key = cache_key(request);
        std::string reply;
        {
            std::lock_guard lock(mu_);
            if (auto it = by_digest_.find(key); it != by_digest_.end()) {
                reply = it->second;
            } else {
                const auto text = request.prompt_text();
                const std::string* match = nullptr;
                std::size_t hits = 0;
                for (const auto& [needle, r] : by_substring_) {
                    if (text.find(needle) != std::string::npos) {
                        ++hits;
                        match = &r;
                    }
                }
                if (hits == 0) throw MissingScriptError(key, "not registered");
                if (hits > 1) throw MissingScriptError(key, std::to_string(hits) + " substring entries match");
                reply = *match;
            }
        }
        ChatResponse resp;
        resp.usage.prompt = static_cast<long long>(split_whitespace(request.prompt_text()).size());
        resp.usage.completion = static_cast<long long>(split_whitespace(reply).size());
        resp.content = std::move(reply);
        resp.finish_reason = FinishReason::stop;
        return resp;
    }

    [[nodiscard]] std::string identity() const override {
        return "mock:" + (source_digest_.empty() ? std::string("in-memory") : source_digest_);
    }

    [[nodiscard]] std::size_t calls() const { return calls_.load(); }

    [[nodiscard]] std::string to_json_text() const {
        std::lock_guard lock(mu_);
        nlohmann::ordered_json doc;
        doc["digests"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : by_digest_) doc["digests"][k] = v;
        doc["substrings"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : by_substring_) doc["substrings"][k] = v;
        return doc.dump(1) + "\n";
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, std::string> by_digest_;
    std::vector<std::pair<std::string, std::string>> by_substring_;
    std::string source_digest_;
    std::atomic<std::size_t> calls_{0};
};

/// Decorator that counts calls and remembers every (digest -> reply) it
/// forwarded. Used to verify cache behaviour and to record mock scripts.
class RecordingBackend : public ChatBackend {
public:
    explicit RecordingBackend(BackendHandle inner) : inner_(std::move(inner)) {}

    ChatResponse complete(const ChatRequest& request) override {
        auto resp = inner_->complete(request);
        std::lock_guard lock(mu_);
        ++calls_;
        auto key = cache_key(request);
        keys_.insert(key);
        replies_[key] = resp.content;
        return resp;
    }

    [[nodiscard]] std::string identity() const override { return inner_->identity(); }

    [[nodiscard]] std::size_t calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }
    [[nodiscard]] std::size_t distinct_requests() const {
        std::lock_guard lock(mu_);
        return keys_.size();
    }
    [[nodiscard]] std::map<std::string, std::string> replies() const {
        std::lock_guard lock(mu_);
        return replies_;
    }

    /// The recorded exchanges as a mock script.
    [[nodiscard]] std::string to_mock_script() const {
        ScriptedMockBackend mock;
        for (auto& [k, v] : replies()) mock.register_digest(k, v);
        return mock.to_json_text();
    }

private:
    BackendHandle inner_;
    mutable std::mutex mu_;
    std::size_t calls_ = 0;
    std::set<std::string> keys_;
    std::map<std::string, std::string> replies_;
};

/// Inner backend for replay-only runs: every request is a miss.
class NullBackend : public ChatBackend {
public:
    ChatResponse complete(const ChatRequest& request) override {
        throw MissingScriptError(cache_key(request), "cache miss in replay-only mode");
    }
    [[nodiscard]] std::string identity() const override { return "replay-only"; }
};

/// Content-addressed response cache in front of another backend. Entries
/// live at <store>/sha256/<first-2-hex>/<digest>.json and hold the canonical
/// request plus the response. Unreadable or inconsistent entries count as
/// misses and are overwritten.
class CachedBackend : public ChatBackend {
public:
    CachedBackend(BackendHandle inner, std::filesystem::path store) : inner_(std::move(inner)), store_(std::move(store)) {
        namespace fs = std::filesystem;
        if (!inner_) throw ConfigError("cache overlay needs an inner backend");
        std::error_code ec;
        fs::create_directories(store_ / "sha256", ec);
        if (ec) throw ConfigError("cache store " + store_.string() + " is not writable: " + ec.message());
        try {
            auto probe = store_ / "sha256" / ".write-probe";
            write_file_atomic(probe, "ok");
            fs::remove(probe);
        } catch (const Error& e) {
            throw ConfigError("cache store " + store_.string() + " is not writable: " + e.what());
        }
    }

    [[nodiscard]] std::filesystem::path entry_path(const std::string& digest) const {
        return store_ / "sha256" / digest.substr(0, 2) / (digest + ".json");
    }

    ChatResponse complete(const ChatRequest& request) override {
        request.validate();
        const auto canonical = canonical_request(request);
        const auto digest = sha256_hex(canonical.dump());
        const auto path = entry_path(digest);
        std::promise<ChatResponse> promise;
        std::unique_lock lock(mutex_);
        if (auto hit = load(path, canonical)) {
            hits_.fetch_add(1);
            return *hit;
        }
        // Identical request already in flight: wait for its reply.
        if (auto it = in_flight_.find(digest); it != in_flight_.end()) {
            auto pending = it->second;
            lock.unlock();
            hits_.fetch_add(1);
            return pending.get();
        }
        in_flight_.emplace(digest, promise.get_future().share());
        misses_.fetch_add(1);
        lock.unlock();
        try {
            auto resp = inner_->complete(request);
            if (resp.finish_reason != FinishReason::error) {
                nlohmann::ordered_json entry;
                entry["digest"] = digest;
                entry["request"] = canonical;
                entry["response"] = response_to_json(resp);
                write_file_atomic(path, entry.dump(2) + "\n");
            }
            settle(digest, [&] { promise.set_value(resp); });
            return resp;
        } catch (...) {
            settle(digest, [&] { promise.set_exception(std::current_exception()); });
            throw;
        }
    }

    [[nodiscard]] std::string identity() const override { return "cache(" + inner_->identity() + ")"; }
    [[nodiscard]] std::size_t hits() const { return hits_.load(); }
    [[nodiscard]] std::size_t misses() const { return misses_.load(); }

private:
    static std::optional<ChatResponse> load(const std::filesystem::path& path, const nlohmann::ordered_json& canonical) {
        std::error_code ec;
        if (!std::filesystem::exists(path, ec)) return std::nullopt;
        try {
            auto j = nlohmann::ordered_json::parse(read_file(path));
            if (j.at("request").dump() != canonical.dump()) return std::nullopt;
            return response_from_json(j.at("response"));
        } catch (const std::exception&) {
            return std::nullopt;
        }
    }

    template <typename Fn>
    void settle(const std::string& digest, Fn&& fn) {
        std::lock_guard lock(mutex_);
        fn();
        in_flight_.erase(digest);
    }

    BackendHandle inner_;
    std::filesystem::path store_;
    std::mutex mutex_;
    std::map<std::string, std::shared_future<ChatResponse>> in_flight_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

inline BackendHandle with_cache(BackendHandle inner, const std::filesystem::path& store) {
    return std::make_shared<CachedBackend>(std::move(inner), store);
}

// ---------------------------------------------------------------------------
// Bounded concurrency
// ---------------------------------------------------------------------------

/// Runs fn(i) for i in [0, n) on at most `max_in_flight` threads. Results are
/// written by index, so output order never depends on scheduling. The first
/// exception (lowest index) is rethrown after all workers finish.
template <typename Fn>
void for_each_bounded(std::size_t n, std::size_t max_in_flight, Fn&& fn) {
    if (n == 0) return;
    max_in_flight = std::clamp<std::size_t>(max_in_flight, 1, n);
    if (max_in_flight == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(n);
    std::vector<std::thread> workers;
    workers.reserve(max_in_flight);
    for (std::size_t w = 0; w < max_in_flight; ++w) {
        workers.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
                try {
                    fn(i);
                } catch (...) {
                    errors[i] = std::current_exception();
                }
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace mpe
