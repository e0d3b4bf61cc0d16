#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace mpe;

namespace {

ChatRequest simple(const std::string& content) {
    ChatRequest r;
    r.messages.push_back({Role::user, content});
    return r;
}

// Counts calls and echoes the prompt; optionally fails.
class EchoBackend : public ChatBackend {
public:
    ChatResponse complete(const ChatRequest& request) override {
        ++calls;
        std::this_thread::sleep_for(delay);
        if (fail) throw TransportError("down");
        return {"echo:" + request.messages.back().content, finish, {}};
    }
    [[nodiscard]] std::string identity() const override { return "echo"; }
    std::atomic<int> calls{0};
    bool fail = false;
    FinishReason finish = FinishReason::stop;
    std::chrono::milliseconds delay{0};
};

}  // namespace

TEST(CanonicalRequest, FrozenDigest) {
    auto req = simple("Predict demand.");
    EXPECT_EQ(canonical_request_text(req),
              R"({"model":"gpt-4","temperature":0.0,"messages":[{"role":"user","content":"Predict demand."}],)"
              R"("max_tokens":null})");
    EXPECT_EQ(cache_key(req), "b81217158c8ad9f36dd53fdd00d43b3295b3b40e93fbd90d1aa44170600e76d0");
}

TEST(CanonicalRequest, KeyOrderOfSourceDoesNotMatter) {
    auto a = request_from_json(nlohmann::json::parse(
        R"({"max_tokens": null, "messages": [{"content": "Predict demand.", "role": "user"}], "model": "gpt-4"})"));
    EXPECT_EQ(cache_key(a), cache_key(simple("Predict demand.")));
    auto b = simple("Predict demand.");
    b.max_tokens = 64;
    EXPECT_NE(cache_key(b), cache_key(a));
    b = simple("Predict demand. ");
    EXPECT_NE(cache_key(b), cache_key(a));
    EXPECT_THROW(request_from_json(nlohmann::json::parse(R"({"model": "x"})")), ArgumentError);
    EXPECT_THROW(request_from_json(nlohmann::json::parse(R"({"model":"x","messages":[{"role":"bot","content":"y"}]})")),
                 ArgumentError);
}

TEST(ChatRequest, Validation) {
    ChatRequest r;
    EXPECT_THROW(r.validate(), ArgumentError);
    r = simple("");
    EXPECT_THROW(r.validate(), ArgumentError);
    r = simple("x");
    r.temperature = 2.5;
    EXPECT_THROW(r.validate(), ArgumentError);
    r = simple("x");
    r.max_tokens = 0;
    EXPECT_THROW(r.validate(), ArgumentError);
    EXPECT_THROW(complete(nullptr, simple("x")), ArgumentError);
}

TEST(BackendConfig, Validation) {
    BackendConfig c;
    EXPECT_NO_THROW(c.validate());
    c.max_retries = 11;
    EXPECT_THROW(c.validate(), ConfigError);
    c = {};
    c.timeout_s = 0;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(ScriptedMock, DigestAndSubstringLookup) {
    auto mock = ScriptedMockBackend::from_json_text(R"({
      "digests": {"b81217158c8ad9f36dd53fdd00d43b3295b3b40e93fbd90d1aa44170600e76d0": "[pickup] 1 [dropoff] 2"},
      "substrings": {"Nets": "nets reply", "Mavericks": "mavs reply", "Katy": "katy reply"}
    })");
    EXPECT_EQ(mock->complete(simple("Predict demand.")).content, "[pickup] 1 [dropoff] 2");
    EXPECT_EQ(mock->complete(simple("Katy Perry")).content, "katy reply");
    EXPECT_THROW(mock->complete(simple("Nets vs. Mavericks")), MissingScriptError);
    try {
        mock->complete(simple("unknown"));
        FAIL();
    } catch (const MissingScriptError& e) {
        EXPECT_EQ(e.digest(), cache_key(simple("unknown")));
    }
    EXPECT_EQ(mock->calls(), 4u);
    EXPECT_EQ(mock->identity().rfind("mock:", 0), 0u);
}

TEST(ScriptedMock, ScriptErrorsAreConfigErrors) {
    EXPECT_THROW(ScriptedMockBackend::from_json_text("[1"), ConfigError);
    EXPECT_THROW(ScriptedMockBackend::from_json_text("[]"), ConfigError);
    EXPECT_THROW(ScriptedMockBackend::from_json_text(R"({"digests": {"x": 3}})"), ConfigError);
    EXPECT_THROW(ScriptedMockBackend::from_file("/nonexistent/mock.json"), ConfigError);
}

TEST(ScriptedMock, ScriptRoundTrip) {
    ScriptedMockBackend m;
    m.register_reply(simple("a"), "A");
    m.register_substring("needle", "N");
    auto copy = ScriptedMockBackend::from_json_text(m.to_json_text());
    EXPECT_EQ(copy->complete(simple("a")).content, "A");
    EXPECT_EQ(copy->complete(simple("hay needle hay")).content, "N");
}

TEST(RecordingBackend, CountsCallsAndDistinctRequests) {
    auto echo = std::make_shared<EchoBackend>();
    auto rec = std::make_shared<RecordingBackend>(echo);
    rec->complete(simple("a"));
    rec->complete(simple("a"));
    rec->complete(simple("b"));
    EXPECT_EQ(rec->calls(), 3u);
    EXPECT_EQ(rec->distinct_requests(), 2u);
    auto replay = ScriptedMockBackend::from_json_text(rec->to_mock_script());
    EXPECT_EQ(replay->complete(simple("b")).content, "echo:b");
}

TEST(CachedBackend, HitsSkipTheInnerBackend) {
    auto dir = test::scratch_dir("cache");
    auto echo = std::make_shared<EchoBackend>();
    auto cache = std::make_shared<CachedBackend>(echo, dir);
    auto first = cache->complete(simple("a"));
    auto second = cache->complete(simple("a"));
    EXPECT_EQ(first, second);
    EXPECT_EQ(echo->calls, 1);
    EXPECT_EQ(cache->hits(), 1u);
    EXPECT_EQ(cache->misses(), 1u);

    const auto path = cache->entry_path(cache_key(simple("a")));
    EXPECT_TRUE(std::filesystem::exists(path));
    EXPECT_EQ(path.parent_path().filename(), cache_key(simple("a")).substr(0, 2));

    // A fresh overlay over the same store replays without the inner backend.
    auto offline = std::make_shared<CachedBackend>(std::make_shared<NullBackend>(), dir);
    EXPECT_EQ(offline->complete(simple("a")).content, "echo:a");
    EXPECT_THROW(offline->complete(simple("b")), MissingScriptError);
    std::filesystem::remove_all(dir);
}

TEST(CachedBackend, CorruptEntriesAreMissesAndOverwritten) {
    auto dir = test::scratch_dir("cache-corrupt");
    auto echo = std::make_shared<EchoBackend>();
    auto cache = std::make_shared<CachedBackend>(echo, dir);
    const auto path = cache->entry_path(cache_key(simple("a")));
    write_file_atomic(path, "{not json");
    EXPECT_EQ(cache->complete(simple("a")).content, "echo:a");
    EXPECT_EQ(cache->misses(), 1u);
    EXPECT_NO_THROW((void)nlohmann::json::parse(read_file(path)));

    // An entry whose stored request differs (digest collision stand-in) is a miss.
    auto doc = nlohmann::json::parse(read_file(path));
    doc["request"]["model"] = "other";
    write_file_atomic(path, doc.dump());
    cache->complete(simple("a"));
    EXPECT_EQ(cache->misses(), 2u);
    std::filesystem::remove_all(dir);
}

TEST(CachedBackend, ErrorsAreNotCached) {
    auto dir = test::scratch_dir("cache-errors");
    auto echo = std::make_shared<EchoBackend>();
    auto cache = std::make_shared<CachedBackend>(echo, dir);
    echo->fail = true;
    EXPECT_THROW(cache->complete(simple("a")), TransportError);
    echo->fail = false;
    echo->finish = FinishReason::error;
    cache->complete(simple("a"));
    EXPECT_FALSE(std::filesystem::exists(cache->entry_path(cache_key(simple("a")))));
    std::filesystem::remove_all(dir);
}

TEST(CachedBackend, ConcurrentIdenticalRequestsReachTheInnerOnce) {
    auto dir = test::scratch_dir("cache-coalesce");
    auto echo = std::make_shared<EchoBackend>();
    echo->delay = std::chrono::milliseconds(20);
    auto cache = std::make_shared<CachedBackend>(echo, dir);
    std::vector<std::string> out(8);
    for_each_bounded(out.size(), 8, [&](std::size_t i) { out[i] = cache->complete(simple("a")).content; });
    EXPECT_EQ(echo->calls, 1);
    EXPECT_EQ(cache->misses(), 1u);
    EXPECT_EQ(cache->hits(), 7u);
    for (const auto& c : out) EXPECT_EQ(c, "echo:a");

    echo->fail = true;
    auto failing = std::make_shared<CachedBackend>(echo, dir);
    std::atomic<int> errors{0};
    for_each_bounded(4, 4, [&](std::size_t) {
        try {
            failing->complete(simple("b"));
        } catch (const TransportError&) {
            ++errors;
        }
    });
    EXPECT_EQ(errors, 4);
    std::filesystem::remove_all(dir);
}

TEST(CachedBackend, UnwritableStoreIsConfigError) {
    EXPECT_THROW(CachedBackend(std::make_shared<NullBackend>(), "/proc/mpe-cache"), ConfigError);
    EXPECT_THROW(CachedBackend(nullptr, test::scratch_dir("cache-null")), ConfigError);
}

TEST(BoundedConcurrency, ResultsByIndexAndLimit) {
    std::atomic<int> in_flight{0}, peak{0};
    std::vector<int> out(50, -1);
    for_each_bounded(out.size(), 4, [&](std::size_t i) {
        int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::microseconds(200));
        out[i] = static_cast<int>(i) * 2;
        --in_flight;
    });
    for (std::size_t i = 0; i < out.size(); ++i) EXPECT_EQ(out[i], static_cast<int>(i) * 2);
    EXPECT_LE(peak.load(), 4);
}

TEST(BoundedConcurrency, LowestIndexErrorWins) {
    try {
        for_each_bounded(20, 3, [](std::size_t i) {
            if (i == 7 || i == 13) throw ArgumentError("fail " + std::to_string(i));
        });
        FAIL();
    } catch (const ArgumentError& e) {
        EXPECT_STREQ(e.what(), "fail 7");
    }
    for_each_bounded(0, 4, [](std::size_t) { FAIL(); });
}
