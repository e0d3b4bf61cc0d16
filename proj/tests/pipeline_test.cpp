#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace mpe;

namespace {

namespace fs = std::filesystem;

// 75 synthetic days from 2014-03-01; tests on the last two weeks.
nlohmann::json small_dataset(const fs::path& dir) {
    SyntheticSpec spec;
    spec.start = Date{2014, 3, 1};
    spec.days = 75;
    spec.scale = 0.5;
    auto world = generate_synthetic_world(spec);
    VenueConfig venue{"Barclays Center", GeoPoint{40.68265, -73.97469}};
    write_file_atomic(dir / "trips.csv", render_trip_csv(world, venue, 7));
    write_file_atomic(dir / "events.json", serialize_event_records(world.events));
    nlohmann::json cfg;
    cfg["trip_source"] = "trips.csv";
    cfg["event_source"] = "events.json";
    cfg["train_range"] = {{"first", "2014-03-01"}, {"last", "2014-04-30"}};
    cfg["test_range"] = {{"first", "2014-05-01"}, {"last", "2014-05-14"}};
    cfg["backend"] = {{"kind", "heuristic"}, {"max_in_flight", 2}};
    cfg["output_dir"] = "out";
    cfg["baselines"] = {{"gbdt", {{"n_trees", 20}}}};
    write_file_atomic(dir / "config.json", cfg.dump(2));
    return cfg;
}

// Heuristic for event formatting, `reply` for every prediction prompt.
class BrokenPredictor : public ChatBackend {
public:
    explicit BrokenPredictor(std::string reply) : reply_(std::move(reply)) {}
    ChatResponse complete(const ChatRequest& request) override {
        ++calls;
        if (request.messages.front().content.find("Next day to predict") != std::string::npos) return {reply_, {}, {}};
        return inner_.complete(request);
    }
    [[nodiscard]] std::string identity() const override { return "broken:" + reply_; }
    std::atomic<int> calls{0};

private:
    std::string reply_;
    HeuristicBackend inner_;
};

std::map<std::string, std::string> read_tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file() && e.path().filename() != "manifest.json")
            out[fs::relative(e.path(), root).generic_string()] = read_file(e.path());
    return out;
}

}  // namespace

TEST(PipelineConfig, RejectsBadConfigurations) {
    auto dir = test::scratch_dir("cfg");
    auto good = small_dataset(dir);
    EXPECT_NO_THROW(PipelineConfig::from_json(good, dir));

    auto bad = good;
    bad["surprise"] = 1;
    EXPECT_THROW(PipelineConfig::from_json(bad, dir), ConfigError);
    bad = good;
    bad.erase("trip_source");
    EXPECT_THROW(PipelineConfig::from_json(bad, dir), ConfigError);
    bad = good;
    bad["ablation"] = "everything";
    EXPECT_THROW(PipelineConfig::from_json(bad, dir), ConfigError);
    bad = good;
    bad["test_range"]["first"] = "2014-04-01";
    EXPECT_THROW(PipelineConfig::from_json(bad, dir), ConfigError);
    bad = good;
    bad["T"] = 0;
    EXPECT_THROW(PipelineConfig::from_json(bad, dir), ConfigError);
    bad = good;
    bad["backend"]["kind"] = "oracle";
    EXPECT_THROW(PipelineConfig::from_json(bad, dir), ConfigError);
    bad = good;
    bad["train_range"]["first"] = "2014-13-01";
    EXPECT_THROW(PipelineConfig::from_json(bad, dir), ConfigError);

    write_file_atomic(dir / "broken.json", "{");
    EXPECT_THROW(PipelineConfig::load(dir / "broken.json"), ConfigError);
    EXPECT_THROW(PipelineConfig::load(dir / "absent.json"), ConfigError);
    fs::remove_all(dir);
}

TEST(PipelineConfig, DigestIgnoresLocations) {
    auto dir = test::scratch_dir("digest");
    auto cfg = small_dataset(dir);
    auto a = PipelineConfig::from_json(cfg, dir);
    auto b = a;
    b.output_dir = "elsewhere";
    b.cache_dir = "cache";
    b.backend.kind = "mock";
    EXPECT_EQ(a.digest(), b.digest());
    b.T = 7;
    EXPECT_NE(a.digest(), b.digest());
    fs::remove_all(dir);
}

TEST(FormatCatalog, FallsBackAfterTwoMalformedReplies) {
    auto mock = std::make_shared<ScriptedMockBackend>();
    mock->register_substring("Brooklyn Nets", "I think it is basketball.");
    mock->register_substring("Katy Perry", test::kNetsReply);
    std::vector<EventRecord> events{
        {"Brooklyn Nets vs. Dallas Mavericks", std::nullopt, Date{2014, 11, 21}, {19, 30}, {22, 30}},
        {"Katy Perry", std::nullopt, Date{2014, 7, 24}, {19, 30}, {22, 30}},
        {"Katy Perry", std::nullopt, Date{2014, 7, 24}, {19, 30}, {22, 30}}};
    auto fo = format_catalog(events, PromptBuilder{}, mock, 2);
    EXPECT_EQ(fo.by_key.size(), 2u);
    EXPECT_EQ(fo.fallbacks, 1u);
    ASSERT_EQ(fo.failures.size(), 2u);
    EXPECT_EQ(fo.failures[0].reason, "missing [Category] tag");
    const auto& nets = fo.by_key.at(event_key(events[0]));
    EXPECT_TRUE(nets.fallback);
    EXPECT_EQ(nets.event.category, "Other Event");
    EXPECT_EQ(nets.event.summary, "Brooklyn Nets vs. Dallas Mavericks");
    EXPECT_EQ(mock->calls(), 3u) << "duplicates are formatted once";

    auto round = parse_formatted_events(formatted_events_json(events, fo), events);
    EXPECT_EQ(round.at(event_key(events[1])).category, "NBA Basketball Game");
}

TEST(PredictNextDay, FallsBackToTheRoundedBaseline) {
    auto f = test::make_prompt_fixture();
    auto broken = std::make_shared<BrokenPredictor>("no idea");
    auto day = predict_next_day(f.context(), f.target, AblationConfig{}, PromptBuilder{}, broken);
    EXPECT_TRUE(day.fallback);
    EXPECT_EQ(broken->calls, 2);
    ASSERT_EQ(day.failures.size(), 2u);
    EXPECT_EQ(day.failures[0].reason, "missing [pickup] tag");
    const auto base = weekday_baseline(f.demand, f.calendar, f.target);
    EXPECT_EQ(static_cast<long long>(day.result.pickup), round_half_up(base.outflow));
    EXPECT_EQ(static_cast<long long>(day.result.dropoff), round_half_up(base.inflow));
    EXPECT_EQ(day.result.reasoning, "fallback: baseline");

    auto ok = predict_next_day(f.context(), f.target, AblationConfig{}, PromptBuilder{},
                               std::make_shared<HeuristicBackend>());
    EXPECT_FALSE(ok.fallback);
    EXPECT_TRUE(ok.failures.empty());
}

TEST(PredictNextDay, SecondAttemptCanRecover) {
    class Stubborn : public ChatBackend {
    public:
        ChatResponse complete(const ChatRequest& r) override {
            return {r.messages.size() > 1 ? "[pickup] 7 [dropoff] 8" : "seven and eight", {}, {}};
        }
        [[nodiscard]] std::string identity() const override { return "stubborn"; }
    };
    auto f = test::make_prompt_fixture();
    auto day = predict_next_day(f.context(), f.target, AblationConfig{}, PromptBuilder{}, std::make_shared<Stubborn>());
    EXPECT_FALSE(day.fallback);
    EXPECT_EQ(day.result.pickup, 7u);
    EXPECT_EQ(day.failures.size(), 1u);
}

TEST(Pipeline, StagesRequireTheirInputs) {
    auto dir = test::scratch_dir("pre");
    small_dataset(dir);
    Pipeline pipe(PipelineConfig::load(dir / "config.json"));
    try {
        pipe.run(Stage::predict);
        FAIL();
    } catch (const PreconditionError& e) {
        EXPECT_EQ(e.required_stage(), "decompose");
    }
    EXPECT_THROW(pipe.run(Stage::report), PreconditionError);
    pipe.run(Stage::ingest);
    EXPECT_THROW(pipe.run(Stage::evaluate), PreconditionError);
    pipe.run(Stage::decompose);
    EXPECT_THROW(pipe.run(Stage::predict), PreconditionError) << "formatted events are needed at c_t_h_prime";
    EXPECT_THROW(pipe.run(Stage::ablate), PreconditionError);
    fs::remove_all(dir);
}

TEST(Pipeline, RunsEndToEndAndSkipsUpToDateStages) {
    auto dir = test::scratch_dir("e2e");
    small_dataset(dir);
    auto config = PipelineConfig::load(dir / "config.json");
    {
        Pipeline pipe(config);
        for (const auto& o : pipe.run_all()) EXPECT_FALSE(o.skipped) << to_string(o.stage);
    }
    const auto out = dir / "out";
    for (const char* f : {"daily_demand.csv", "ingest_rejections.csv", "formatted_events.json", "decomposition.csv",
                          "report.csv", "ablation.csv", "summary.md", "manifest.json",
                          "predictions/LLM-MPE_c_t_h_prime+r_i.csv"})
        EXPECT_TRUE(fs::exists(out / f)) << f;
    auto first = read_tree(out);
    EXPECT_NE(first["ingest_rejections.csv"].find("null-island sentinel"), std::string::npos);

    auto report = parse_csv(first["report.csv"]);
    std::set<std::string> models;
    for (const auto& row : report.rows) models.insert(row[0]);
    EXPECT_EQ(models, (std::set<std::string>{"LLM-MPE", "HA", "LR", "GBDT"}));

    {
        Pipeline again(config);
        for (const auto& o : again.run_all()) EXPECT_TRUE(o.skipped) << to_string(o.stage);
    }
    EXPECT_EQ(read_tree(out), first);

    // A damaged output forces its stage to rerun and restores the bytes.
    write_file_atomic(out / "decomposition.csv", "tampered");
    {
        Pipeline third(config);
        EXPECT_FALSE(third.run(Stage::decompose).skipped);
        EXPECT_TRUE(third.run(Stage::predict).skipped);
    }
    EXPECT_EQ(read_tree(out), first);
    fs::remove_all(dir);
}

TEST(Pipeline, FallbackBudgetIsEnforced) {
    auto dir = test::scratch_dir("budget");
    small_dataset(dir);
    auto config = PipelineConfig::load(dir / "config.json");
    Pipeline pipe(config, std::make_shared<BrokenPredictor>("n/a"));
    for (auto s : {Stage::ingest, Stage::format_events, Stage::decompose}) pipe.run(s);
    try {
        pipe.run(Stage::predict);
        FAIL();
    } catch (const FallbackBudgetError& e) {
        EXPECT_EQ(e.rate(), 1.0);
        EXPECT_EQ(e.budget(), 0.2);
    }
    EXPECT_TRUE(fs::exists(dir / "out" / "parse_failures" / "LLM-MPE_c_t_h_prime+r_i.jsonl"));
    fs::remove_all(dir);
}

TEST(Pipeline, InvalidEventSourceAborts) {
    auto dir = test::scratch_dir("badevents");
    small_dataset(dir);
    write_file_atomic(dir / "events.json", R"([{"title": "x", "date": "2014-03-05", "start_time": "9", "end_time": "10:00"}])");
    Pipeline pipe(PipelineConfig::load(dir / "config.json"));
    EXPECT_THROW(pipe.run(Stage::format_events), SchemaError);
    fs::remove_all(dir);
}

TEST(Pipeline, PlanTouchesNothing) {
    auto dir = test::scratch_dir("plan");
    small_dataset(dir);
    Pipeline pipe(PipelineConfig::load(dir / "config.json"));
    auto plan = pipe.plan();
    EXPECT_NE(plan.find("14 one-step-ahead predictions at c_t_h_prime+r_i"), std::string::npos);
    EXPECT_FALSE(fs::exists(dir / "out"));
    EXPECT_EQ(parse_stage("format-events"), Stage::format_events);
    EXPECT_THROW(parse_stage("train"), ConfigError);
    fs::remove_all(dir);
}
