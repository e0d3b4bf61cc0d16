#include "fixtures.hpp"

#include <gtest/gtest.h>

using namespace mpe;
using test::check_snapshot;

namespace {

const test::PromptFixture& fixture() {
    static const auto f = test::make_prompt_fixture();
    return f;
}

EventRecord charlie_wilson() {
    return {"Charlie Wilson", test::kCharlieWilsonDescription, Date{2014, 3, 29}, {20, 0}, {23, 0}};
}

}  // namespace

TEST(AblationConfig, ParseAndName) {
    for (const auto& a : canonical_ablation_grid()) EXPECT_EQ(AblationConfig::parse(a.name()), a);
    EXPECT_EQ(AblationConfig::parse("c_t").name(), "c_t+r_i");
    EXPECT_EQ(AblationConfig::parse("NA+o").name(), "NA+o");
    EXPECT_THROW(AblationConfig::parse("c+t"), ConfigError);
    EXPECT_THROW(AblationConfig::parse("c_t+x"), ConfigError);
    EXPECT_EQ(canonical_ablation_grid().size(), 6u);
}

TEST(PromptSnapshots, EventFormat) {
    PromptBuilder b;
    auto r = b.event_format_prompt(charlie_wilson());
    ASSERT_EQ(r.messages.size(), 1u);
    auto c = check_snapshot("event_format_charlie_wilson", r.messages[0].content);
    EXPECT_TRUE(c.ok) << c.detail;
    EventRecord nets{"Brooklyn Nets vs. Dallas Mavericks", std::nullopt, Date{2014, 11, 21}, {19, 30}, {22, 30}};
    c = check_snapshot("event_format_nets", b.event_format_prompt(nets).messages[0].content);
    EXPECT_TRUE(c.ok) << c.detail;
}

TEST(PromptSnapshots, PredictionForEveryAblation) {
    for (const auto& a : canonical_ablation_grid()) {
        auto c = check_snapshot("prediction_" + a.name(), test::fixture_prediction_prompt(fixture(), a));
        EXPECT_TRUE(c.ok) << c.detail;
    }
}

TEST(PredictionPrompt, HistoryLineCountEqualsT) {
    for (std::size_t T : {1u, 7u, 28u}) {
        auto prompt = test::fixture_prediction_prompt(fixture(), {}, T);
        EXPECT_EQ(test::history_line_count(prompt), T);
        EXPECT_NE(prompt.find("Past " + std::to_string(T) + " days"), std::string::npos);
    }
}

TEST(PredictionPrompt, NaHasNoEventTokens) {
    for (auto d : {DemandFeatures::r_i, DemandFeatures::o}) {
        auto prompt = to_lower_ascii(test::fixture_prediction_prompt(fixture(), {EventFeatures::NA, d}));
        EXPECT_EQ(prompt.find("event"), std::string::npos);
        for (const char* tok : {"[time]", "[title]", "[description]", "[category]", "[summary]", "katy", "nets"})
            EXPECT_EQ(prompt.find(tok), std::string::npos) << tok;
    }
}

TEST(PredictionPrompt, RicherEventSetsExtendPoorerOnes) {
    for (const auto& e : fixture().events) {
        auto day = fixture().calendar.day(e.date);
        std::vector<FormattedEvent> fm;
        for (const auto& ev : day.events) fm.push_back(fixture().formatted.at(event_key(ev)));
        auto block = [&](EventFeatures f) { return render_event_block(day.events, fm, {f, DemandFeatures::r_i}); };
        EXPECT_EQ(block(EventFeatures::NA), "");
        const auto c = block(EventFeatures::c), ct = block(EventFeatures::c_t);
        EXPECT_EQ(ct.rfind(c, 0), 0u);
        EXPECT_EQ(block(EventFeatures::c_t_h).rfind(ct, 0), 0u);
        EXPECT_EQ(block(EventFeatures::c_t_h_prime).rfind(ct, 0), 0u);
    }
    EXPECT_EQ(render_event_block({}, {}, {EventFeatures::c_t_h, DemandFeatures::r_i}), "no event");
}

TEST(PredictionPrompt, DuplicateFormattedSummariesRenderOnce) {
    const Date d{2014, 7, 19};
    auto day = fixture().calendar.day(d);
    ASSERT_EQ(day.events.size(), 2u);
    std::vector<FormattedEvent> fm;
    for (const auto& ev : day.events) fm.push_back(fixture().formatted.at(event_key(ev)));
    auto text = render_event_block(day.events, fm, {});
    EXPECT_EQ(text.rfind("2 events: [time] 11:00-13:00, 19:00-21:00 [Category] Family Show [Summary]", 0), 0u);
    EXPECT_EQ(text.find("[Category]"), text.rfind("[Category]"));
}

TEST(PredictionPrompt, DecompositionShownOnlyUnderRi) {
    auto ri = test::fixture_prediction_prompt(fixture(), {EventFeatures::c, DemandFeatures::r_i});
    auto o = test::fixture_prediction_prompt(fixture(), {EventFeatures::c, DemandFeatures::o});
    EXPECT_NE(ri.find("| historical average: pickup"), std::string::npos);
    EXPECT_NE(ri.find("| deviation: pickup +"), std::string::npos);
    EXPECT_EQ(o.find("deviation"), std::string::npos);
    EXPECT_NE(o.find("| demand: pickup"), std::string::npos);
}

TEST(PredictionPrompt, IsCausal) {
    for (const auto& a : canonical_ablation_grid()) {
        auto prompt = test::fixture_prediction_prompt(fixture(), a);
        EXPECT_TRUE(future_dates_in_prompt(prompt, fixture().target).empty()) << a.name();
    }
    EXPECT_EQ(future_dates_in_prompt("seen 2014-07-30 here", Date{2014, 7, 29}),
              std::vector<std::string>{"2014-07-30"});
}

TEST(PredictionPrompt, RejectsInvalidWindows) {
    const auto& f = fixture();
    auto ctx = f.context();
    AblationConfig a;
    auto window = history_window(ctx, f.target, a);
    auto target = day_context(ctx, f.target, false, a);
    PromptBuilder b;
    auto base = weekday_baseline(f.demand, f.calendar, f.target);

    auto gap = window;
    gap.days.erase(gap.days.begin() + 5);
    EXPECT_THROW(b.prediction_prompt(gap, target, base, a), ArgumentError);

    auto leaky = target;
    leaky.decomposition = window.days.back().decomposition;
    EXPECT_THROW(b.prediction_prompt(window, leaky, base, a), ArgumentError);

    auto shifted = target;
    shifted.date = f.target + 1;
    EXPECT_THROW(b.prediction_prompt(window, shifted, base, a), ArgumentError);

    auto unformatted = target;
    unformatted.formatted.clear();
    EXPECT_THROW(b.prediction_prompt(window, unformatted, base, a), ArgumentError);

    EXPECT_THROW(b.prediction_prompt(HistoryWindow{}, target, base, a), ArgumentError);
}

TEST(PredictionPrompt, DescriptionTruncation) {
    EXPECT_EQ(truncate_words("a b  c", 3), "a b  c");
    EXPECT_EQ(truncate_words("a b c d", 2), "a b [...]");
    PromptOptions opts;
    opts.max_description_words = 10;
    auto text = PromptBuilder(opts).event_format_prompt(charlie_wilson()).messages[0].content;
    EXPECT_NE(text.find("Event description: Charlie Wilson is bringing his nationwide In It to Win [...]\n"),
              std::string::npos);
}

TEST(PredictionPrompt, FormatReminderAppendsTurns) {
    PromptBuilder b;
    auto req = b.event_format_prompt(charlie_wilson());
    auto again = b.with_format_reminder(req, "", false);
    ASSERT_EQ(again.messages.size(), 3u);
    EXPECT_EQ(again.messages[1].role, Role::assistant);
    EXPECT_EQ(again.messages[1].content, "(empty reply)");
    EXPECT_NE(again.messages[2].content.find("[Category]"), std::string::npos);
    EXPECT_NE(cache_key(again), cache_key(req));
}

TEST(PromptTemplates, OverridesFromDirectory) {
    auto dir = test::scratch_dir("templates");
    write_file_atomic(dir / "event_format.txt", "Title={{title}} Desc={{description}}\n");
    auto t = PromptTemplates::load_overrides(dir);
    auto r = PromptBuilder({}, t).event_format_prompt(charlie_wilson());
    EXPECT_EQ(r.messages[0].content.rfind("Title=Charlie Wilson Desc=Charlie", 0), 0u);
    EXPECT_NE(t.digest(), PromptTemplates{}.digest());
    write_file_atomic(dir / "evnet_format.txt", "typo");
    EXPECT_THROW(PromptTemplates::load_overrides(dir), ConfigError);
    EXPECT_THROW(PromptTemplates::load_overrides(dir / "absent"), ConfigError);
    std::filesystem::remove_all(dir);
}
