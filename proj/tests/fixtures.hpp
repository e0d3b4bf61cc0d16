#pragma once

// Shared fixtures for the unit and acceptance suites.

#include "mpe/mpe.hpp"

#include <cstdlib>
#include <fstream>

namespace mpe::test {

inline std::filesystem::path source_dir() { return MPE_SOURCE_DIR; }
inline std::filesystem::path data_dir() { return source_dir() / "tests" / "data"; }
inline std::filesystem::path snapshot_dir() { return source_dir() / "prompts" / "snapshots"; }

inline nlohmann::json load_json(const std::string& name) { return nlohmann::json::parse(read_file(data_dir() / name)); }

/// Fresh, empty scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() / ("mpe-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

// Listing text as published for the Charlie Wilson concert.
inline const std::string kCharlieWilsonDescription =
    "Charlie Wilson is bringing his nationwide In It to Win It Tour to Barclays Center on March 29 with special "
    "guests Fantasia and Johnny Gill. Every ticket purchased online will come with one physical copy of "
    "Charlie’s new, upcoming In It To Win It album. Customers will receive a redemption email from "
    "Ticketmaster shortly after their purchase with instructions on how to secure their CD copy of Charlie’s "
    "new album. Any album redemption submitted before the album release date will be received by the customer on "
    "the official album release date. “I am excited about being on the road with my friends Grammy-Award "
    "winner, Fantasia, and four-time Grammy-Award nominee, Johnny Gill,” stated Wilson. “As usual, folks "
    "should come prepared for a party. I am looking forward to performing my new single, “Chills,” "
    "together with some music from my new album and my classic hits.”";

inline const std::string kKatyPerryReply =
    "[pickup] 562 [dropoff] 353 [reasoning] The event is a popular pop music concert by Katy Perry, which is likely "
    "to attract a large crowd. Looking at the historical data, on 2014-07-24, a similar event by the same artist led "
    "to a significant increase in both pickup and dropoff numbers. The pickup demand increased by 231 and the "
    "dropoff demand increased by 146 compared to the historical average. Considering that the event on the next day "
    "is similar, we can expect a similar increase in demand. Therefore, the predicted pickup demand is 331 "
    "(historical average) + 231 (increase due to event) = 562. The predicted dropoff demand is 207 (historical "
    "average) + 146 (increase due to event) = 353.";

inline const std::string kAllStarReply =
    "[pickup] 850 [dropoff] 600 [reasoning] First, we note that the event is an NBA All-Star Event, which is likely "
    "to draw a large crowd due to the popularity of the NBA and the star power involved. Looking at similar days, we "
    "see that NBA games consistently increase taxi demand significantly. For example, 15 days ago, an NBA game "
    "increased pickup demand by 410 and dropoff demand by 206. 12 days ago, another NBA game increased pickup "
    "demand by 238 and dropoff demand by 141. Yesterday, an NBA game increased pickup demand by 307 and dropoff "
    "demand by 249. Given that the All-Star Event is likely to be even more popular than a regular game, we can "
    "expect an even larger increase in demand. Therefore, we predict that the pickup demand will increase by around "
    "296 (average of 410, 238, and 307) from the historical average of 554, and the dropoff demand will increase by "
    "around 293 (average of 206, 141, and 249) from the historical average of 307.";

inline const std::string kNetsReply =
    "[Category] NBA Basketball Game [Summary] A popular match between the Brooklyn Nets and Dallas Mavericks.";

// ---------------------------------------------------------------------------
// Frozen prompt fixture: 90 days of demand ending the day before 2014-07-29.
// ---------------------------------------------------------------------------

struct PromptFixture {
    DemandSeries demand;
    std::vector<EventRecord> events;
    EventCalendar calendar;
    std::vector<DemandDecomposition> decomposition;
    std::map<Date, DemandDecomposition> decomposition_by_date;
    std::map<std::string, FormattedEvent> formatted;
    Date target{2014, 7, 29};

    [[nodiscard]] PredictionContext context(std::size_t T = 28) const {
        return PredictionContext{&demand, &decomposition_by_date, &calendar, &formatted, T, {}};
    }
};

inline PromptFixture make_prompt_fixture() {
    PromptFixture f;
    auto ev = [&](const char* title, std::optional<std::string> desc, Date d, TimeOfDay s, TimeOfDay e,
                  const char* category, const char* summary) {
        EventRecord r{title, std::move(desc), d, s, e};
        f.events.push_back(r);
        f.formatted.emplace(event_key(r), FormattedEvent{category, summary, r});
    };
    const std::string katy_desc =
        "International superstar Katy Perry brings THE PRISMATIC WORLD TOUR to Barclays Center in support of her "
        "album PRISM, which debuted at number one on The Billboard 200. Special guest Capital Cities. Tickets on "
        "sale now at the box office.";
    ev("Charlie Wilson", kCharlieWilsonDescription, Date{2014, 7, 5}, {20, 0}, {23, 0}, "Concert",
       "Charlie Wilson's In It to Win It Tour features special guests Fantasia and Johnny Gill. Every ticket "
       "includes a copy of his new album.");
    ev("Brooklyn Nets vs. Dallas Mavericks", std::nullopt, Date{2014, 7, 10}, {19, 30}, {22, 30},
       "NBA Basketball Game", "A popular match between the Brooklyn Nets and Dallas Mavericks.");
    ev("Disney On Ice presents Frozen", "Skate along with Anna, Elsa and Olaf.", Date{2014, 7, 19}, {11, 0},
       {13, 0}, "Family Show", "Disney characters skate through the story of Frozen.");
    ev("Disney On Ice presents Frozen", "Skate along with Anna, Elsa and Olaf.", Date{2014, 7, 19}, {19, 0},
       {21, 0}, "Family Show", "Disney characters skate through the story of Frozen.");
    ev("Katy Perry: The Prismatic World Tour", katy_desc, Date{2014, 7, 24}, {19, 30}, {22, 30},
       "Pop Music Concert",
       "International superstar Katy Perry's PRISMATIC WORLD TOUR supports her PRISM album. Special guest is "
       "Capital Cities.");
    ev("Katy Perry: The Prismatic World Tour", katy_desc, f.target, {19, 30}, {22, 30}, "Pop Music Concert",
       "International superstar Katy Perry's PRISMATIC WORLD TOUR supports her PRISM album. Special guest is "
       "Capital Cities.");

    const Date first{2014, 4, 30};
    std::map<Date, std::pair<int, int>> bumps{{Date{2014, 7, 5}, {260, 190}},
                                              {Date{2014, 7, 10}, {230, 210}},
                                              {Date{2014, 7, 19}, {120, 140}},
                                              {Date{2014, 7, 24}, {231, 146}}};
    for (Date d = first; d < f.target; d = d + 1) {
        const auto k = static_cast<std::uint64_t>(d - first);
        std::uint64_t out = 310 + 12 * d.weekday_index() + (k * 37) % 23;
        std::uint64_t in = 200 + 9 * d.weekday_index() + (k * 53) % 19;
        if (auto it = bumps.find(d); it != bumps.end()) {
            out += static_cast<std::uint64_t>(it->second.first);
            in += static_cast<std::uint64_t>(it->second.second);
        }
        f.demand.emplace(d, DailyDemand{d, out, in});
    }
    f.calendar = EventCalendar(f.events, DateRange{first, f.target});
    f.decomposition = decompose_series(f.demand, f.calendar);
    f.decomposition_by_date = decomposition_index(f.decomposition);
    return f;
}

inline std::string fixture_prediction_prompt(const PromptFixture& f, const AblationConfig& ablation,
                                             std::size_t T = 28) {
    auto ctx = f.context(T);
    auto window = history_window(ctx, f.target, ablation);
    auto target = day_context(ctx, f.target, false, ablation);
    auto baseline = weekday_baseline(f.demand, f.calendar, f.target);
    return PromptBuilder{}.prediction_prompt(window, target, baseline, ablation).messages.front().content;
}

struct SnapshotCheck {
    bool ok = false;
    std::string detail;
};

/// Compares `actual` with prompts/snapshots/<name>.txt byte for byte. With
/// MPE_UPDATE_SNAPSHOTS=1 in the environment the file is rewritten instead.
inline SnapshotCheck check_snapshot(const std::string& name, const std::string& actual) {
    const auto path = snapshot_dir() / (name + ".txt");
    if (const char* u = std::getenv("MPE_UPDATE_SNAPSHOTS"); u && std::string(u) == "1") {
        std::filesystem::create_directories(path.parent_path());
        write_file_atomic(path, actual);
        return {true, "updated " + path.string()};
    }
    if (!std::filesystem::exists(path)) return {false, "missing snapshot " + path.string()};
    const auto expected = read_file(path);
    if (expected == actual) return {true, {}};
    std::size_t i = 0;
    while (i < expected.size() && i < actual.size() && expected[i] == actual[i]) ++i;
    return {false, name + " differs at byte " + std::to_string(i) + " (expected " + std::to_string(expected.size()) +
                       " bytes, got " + std::to_string(actual.size()) + ")"};
}

/// Counts lines of the history block in a rendered prediction prompt.
inline std::size_t history_line_count(const std::string& prompt) {
    auto begin = prompt.find("days (oldest first):\n");
    auto end = prompt.find("\nNext day to predict:");
    if (begin == std::string::npos || end == std::string::npos) return 0;
    begin = prompt.find('\n', begin) + 1;
    std::size_t n = 0;
    for (std::size_t i = begin; i < end; ++i)
        if (prompt[i] == '\n') ++n;
    return n;
}

// ---------------------------------------------------------------------------
// Random fixtures
// ---------------------------------------------------------------------------

/// Random daily series with random event days, starting `first`.
inline std::pair<DemandSeries, std::vector<EventRecord>> random_series(std::mt19937_64& rng, Date first,
                                                                        int days, double event_p = 0.2) {
    std::uniform_int_distribution<std::uint64_t> count(0, 2000);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DemandSeries s;
    std::vector<EventRecord> events;
    for (int k = 0; k < days; ++k) {
        Date d = first + k;
        s.emplace(d, DailyDemand{d, count(rng), count(rng)});
        if (u(rng) < event_p) events.push_back({"Event " + std::to_string(k), std::nullopt, d, {19, 0}, {22, 0}});
    }
    return {s, events};
}

}  // namespace mpe::test
