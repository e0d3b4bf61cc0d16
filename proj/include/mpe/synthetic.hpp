#pragma once

// Synthetic venue world with planted event effects: a weekday/seasonal demand
// pattern, an event schedule modelled on an arena calendar, and additive
// per-category effects. Also renders the world as raw trip records so the
// full pipeline, ingestion included, can be exercised.

#include "mpe/trip_ingest.hpp"
#include "mpe/event_catalog.hpp"

#include <numbers>

namespace mpe {

/// Platform-independent random source: the engine is fully specified by the
/// standard, the distributions are written out here.
class PortableRng {
public:
    explicit PortableRng(std::uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Integer in [lo, hi].
    long long uniform_int(long long lo, long long hi) {
        return lo + static_cast<long long>(std::floor(uniform() * static_cast<double>(hi - lo + 1)));
    }

    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    bool chance(double p) { return uniform() < p; }

    template <typename T>
    const T& pick(const std::vector<T>& v) {
        return v[static_cast<std::size_t>(uniform_int(0, static_cast<long long>(v.size()) - 1))];
    }

private:
    std::mt19937_64 eng_;
};

struct SyntheticSpec {
    Date start{2013, 7, 1};
    int days = 730;
    std::uint64_t seed = 20140701;
    double scale = 1.0;        // multiplies every count before rounding
    double noise_frac = 0.06;  // day-level noise sd as a fraction of the regular level
};

struct SyntheticWorld {
    DemandSeries demand;
    std::vector<EventRecord> events;
    std::map<std::string, DemandPair> category_effect;  // scale-1 effect per event
    std::map<Date, DemandPair> planted;                 // total planted effect per day, after scaling
};

namespace synth {

struct Performer {
    std::string name;
    std::string category;
};

inline const std::vector<Performer>& performers() {
    static const std::vector<Performer> v{
        {"Jay-Z", "Hip-Hop Concert"},           {"Kanye West", "Hip-Hop Concert"},
        {"Drake", "Hip-Hop Concert"},           {"Nicki Minaj", "Hip-Hop Concert"},
        {"Arcade Fire", "Rock Concert"},        {"The Rolling Stones", "Rock Concert"},
        {"Bruce Springsteen", "Rock Concert"},  {"Foo Fighters", "Rock Concert"},
        {"Barbra Streisand", "Pop Music Concert"}, {"Justin Timberlake", "Pop Music Concert"},
        {"Lady Gaga", "Pop Music Concert"},     {"Katy Perry", "Pop Music Concert"},
    };
    return v;
}

inline const std::map<std::string, DemandPair>& mean_effects() {
    static const std::map<std::string, DemandPair> m{
        {"NBA Basketball Game", {240, 220}}, {"Hip-Hop Concert", {460, 420}},   {"Rock Concert", {380, 350}},
        {"Pop Music Concert", {420, 400}},   {"Family Show", {110, 130}},       {"Boxing Match", {300, 270}},
        {"Graduation Ceremony", {170, 190}},
    };
    return m;
}

inline const std::vector<std::string> kOpponents{
    "Miami Heat",        "New York Knicks",    "Chicago Bulls",         "Boston Celtics",   "Toronto Raptors",
    "Indiana Pacers",    "Washington Wizards", "Atlanta Hawks",         "Cleveland Cavaliers", "Detroit Pistons",
    "Philadelphia 76ers", "Orlando Magic",     "Los Angeles Lakers",    "San Antonio Spurs", "Golden State Warriors"};

inline const std::vector<std::string> kFamilyShows{"Ringling Bros. and Barnum & Bailey Circus",
                                                   "Disney on Ice: Frozen", "Sesame Street Live: Make a New Friend"};

inline const std::vector<std::string> kBoxers{"Danny Garcia", "Peter Quillin", "Paulie Malignaggi", "Adrien Broner",
                                              "Keith Thurman", "Daniel Jacobs"};

inline const std::vector<std::string> kSchools{"Brooklyn College", "New York City College of Technology",
                                               "St. Francis College", "Pratt Institute"};

inline const std::vector<std::string> kFiller{
    "Get ready for an unforgettable night of live entertainment in the heart of Brooklyn.",
    "Doors open one hour before the show and fans are encouraged to arrive early.",
    "Premium seating, hospitality packages and group discounts are available at the box office.",
    "The arena is steps from the Atlantic Avenue subway hub and the Long Island Rail Road.",
    "Tickets start at 39 dollars plus applicable fees and are limited to eight per household.",
    "Special guests will be announced closer to the date, so stay tuned for updates.",
    "All ages are welcome and children under two enter free on a parent's lap.",
    "Merchandise stands on the main concourse open at the same time as the doors.",
};

inline std::string promo_paragraph(PortableRng& rng, int sentences) {
    std::string s;
    for (int i = 0; i < sentences; ++i) s += (i ? " " : "") + rng.pick(kFiller);
    return s;
}

struct Planned {
    EventRecord record;
    std::string category;
    double popularity = 1.0;
};

}  // namespace synth

inline SyntheticWorld generate_synthetic_world(const SyntheticSpec& spec) {
    if (spec.days <= 0) throw ArgumentError("synthetic world needs a positive number of days");
    if (!(spec.scale > 0.0)) throw ArgumentError("synthetic scale must be positive");
    PortableRng rng(spec.seed);
    SyntheticWorld world;

    for (const auto& [cat, mean] : synth::mean_effects()) {
        const double m = rng.uniform(0.85, 1.15);
        world.category_effect[cat] = {mean.outflow * m, mean.inflow * m};
    }
    std::map<std::string, double> popularity;
    for (const auto& p : synth::performers()) popularity[p.name] = rng.uniform(0.8, 1.2);

    static constexpr std::array<double, 7> kOut{620, 600, 610, 640, 720, 690, 560};
    static constexpr std::array<double, 7> kIn{590, 575, 585, 610, 700, 700, 540};

    std::string family_title;
    int family_days_left = 0;
    for (int t = 0; t < spec.days; ++t) {
        const Date d = spec.start + t;
        const auto ymd = std::chrono::year_month_day{d.sys_days()};
        const unsigned month = static_cast<unsigned>(ymd.month());
        const unsigned wd = d.weekday_index();
        const bool weekend = wd >= 5;

        std::vector<synth::Planned> today;
        auto add = [&](std::string title, std::optional<std::string> desc, TimeOfDay s, TimeOfDay e,
                       std::string category, double pop = 1.0) {
            today.push_back({EventRecord{std::move(title), std::move(desc), d, s, e}, std::move(category), pop});
        };

        if (family_days_left > 0) {
            add(family_title, std::nullopt, {11, 0}, {13, 0}, "Family Show");
            if (weekend) add(family_title, std::nullopt, {19, 0}, {21, 0}, "Family Show");
            --family_days_left;
        } else {
            const bool nba_season = month >= 11 || month <= 4;
            if (nba_season && rng.chance(0.30)) {
                auto opp = rng.pick(synth::kOpponents);
                std::optional<std::string> desc;
                if (rng.chance(0.5))
                    desc = "The Brooklyn Nets host the " + opp + " at Barclays Center. " +
                           synth::promo_paragraph(rng, static_cast<int>(rng.uniform_int(1, 4)));
                if (weekend)
                    add("Brooklyn Nets vs. " + opp, desc, {18, 0}, {20, 30}, "NBA Basketball Game");
                else
                    add("Brooklyn Nets vs. " + opp, desc, {19, 30}, {22, 30}, "NBA Basketball Game");
            } else if (rng.chance(nba_season ? 0.12 : 0.22)) {
                const double kind = rng.uniform();
                if (kind < 0.5 || (kind >= 0.9 && !(month == 5 || month == 6))) {
                    const auto& p = rng.pick(synth::performers());
                    std::string title = rng.chance(0.6) ? p.name : p.name + " - World Tour " + std::to_string(
                                                                                               static_cast<int>(ymd.year()));
                    std::optional<std::string> desc;
                    const double r = rng.uniform();
                    if (r < 0.3)
                        desc = p.name + " performs live at Barclays Center.";
                    else if (r < 0.6)
                        desc = p.name + " brings the tour to Brooklyn for one night only. " +
                               synth::promo_paragraph(rng, static_cast<int>(rng.uniform_int(6, 14)));
                    add(std::move(title), std::move(desc), {20, 0}, {23, 0}, p.category, popularity[p.name]);
                } else if (kind < 0.7) {
                    family_title = rng.pick(synth::kFamilyShows);
                    family_days_left = static_cast<int>(rng.uniform_int(2, 4));
                    add(family_title, std::nullopt, {11, 0}, {13, 0}, "Family Show");
                    add(family_title, std::nullopt, {19, 0}, {21, 0}, "Family Show");
                } else if (kind < 0.9) {
                    auto a = rng.pick(synth::kBoxers), b = rng.pick(synth::kBoxers);
                    if (a == b) b = "Jorge Linares";
                    add("Premier Boxing Champions: " + a + " vs. " + b,
                        std::optional<std::string>("A championship boxing card headlined by " + a + " and " + b + "."),
                        {19, 0}, {23, 0}, "Boxing Match");
                } else {
                    add(rng.pick(synth::kSchools) + " Commencement", std::nullopt, {10, 0}, {13, 0},
                        "Graduation Ceremony");
                }
            }
        }

        const double season = 1.0 + 0.08 * std::sin(2.0 * std::numbers::pi * (static_cast<double>(d.days_since_epoch()) - 100.0) / 365.25);
        const double growth = 1.0 + 0.00015 * t;
        DemandPair base{kOut[wd] * season * growth, kIn[wd] * season * growth};
        DemandPair effect{0, 0};
        for (const auto& p : today) {
            const auto& ce = world.category_effect.at(p.category);
            const double jitter = p.popularity * (1.0 + 0.08 * rng.normal());
            effect = effect + DemandPair{ce.outflow * jitter, ce.inflow * jitter};
            world.events.push_back(p.record);
        }
        const double n_out = rng.normal() * spec.noise_frac * base.outflow;
        const double n_in = rng.normal() * spec.noise_frac * base.inflow;
        auto count = [&](double v) { return static_cast<std::uint64_t>(std::max(0LL, round_half_up(v * spec.scale))); };
        world.demand[d] = {d, count(base.outflow + n_out + effect.outflow), count(base.inflow + n_in + effect.inflow)};
        if (!today.empty()) world.planted[d] = {effect.outflow * spec.scale, effect.inflow * spec.scale};
    }
    return world;
}

// ---------------------------------------------------------------------------
// Trip rendering
// ---------------------------------------------------------------------------

namespace synth {

inline constexpr double kMetersPerDegree = 111'194.93;

inline GeoPoint offset_point(const GeoPoint& c, double meters, double bearing) {
    const double dlat = meters * std::cos(bearing) / kMetersPerDegree;
    const double dlon = meters * std::sin(bearing) / (kMetersPerDegree * std::cos(c.lat() * std::numbers::pi / 180.0));
    return {c.lat() + dlat, c.lon() + dlon};
}

inline std::string timestamp(Date d, long long minute, int second) {
    d = d + static_cast<int>(std::floor(static_cast<double>(minute) / 1440.0));
    minute = ((minute % 1440) + 1440) % 1440;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s %02lld:%02lld:%02d", d.str().c_str(), minute / 60, minute % 60, second);
    return buf;
}

inline std::string coord(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace synth

/// Trip CSV whose aggregation over the world's date range reproduces
/// `world.demand` exactly. Each venue trip has exactly one end inside
/// 0.8 x radius and the other at least 2 km away; background trips stay
/// clear of the venue; a handful of malformed rows exercise rejection.
inline std::string render_trip_csv(const SyntheticWorld& world, const VenueConfig& venue, std::uint64_t seed,
                                   double background_frac = 0.2) {
    PortableRng rng(seed);
    std::string out;
    for (std::size_t i = 0; i < kTripColumns.size(); ++i) out += (i ? "," : "") + std::string(kTripColumns[i]);
    out += "\n";
    auto near = [&] { return synth::offset_point(venue.center, rng.uniform(0, 0.8 * venue.radius_m), rng.uniform(0, 6.283185307179586)); };
    auto far = [&] { return synth::offset_point(venue.center, rng.uniform(2000, 8000), rng.uniform(0, 6.283185307179586)); };
    auto row = [&](Date d, long long pick_min, long long drop_min, const GeoPoint& p, const GeoPoint& q) {
        out += synth::timestamp(d, pick_min, static_cast<int>(rng.uniform_int(0, 59))) + "," +
               synth::timestamp(d, drop_min, static_cast<int>(rng.uniform_int(0, 59))) + "," + synth::coord(p.lon()) +
               "," + synth::coord(p.lat()) + "," + synth::coord(q.lon()) + "," + synth::coord(q.lat()) + "\n";
    };
    for (const auto& [d, day] : world.demand) {
        for (std::uint64_t k = 0; k < day.outflow; ++k) {
            const long long m = rng.uniform_int(0, 1439);
            row(d, m, m + rng.uniform_int(4, 45), near(), far());
        }
        for (std::uint64_t k = 0; k < day.inflow; ++k) {
            const long long m = rng.uniform_int(0, 1439);
            row(d, m - rng.uniform_int(4, 45), m, far(), near());
        }
        const auto background = static_cast<long long>(background_frac * static_cast<double>(day.outflow + day.inflow));
        for (long long k = 0; k < background; ++k) {
            const long long m = rng.uniform_int(0, 1439);
            row(d, m, m + rng.uniform_int(4, 45), far(), far());
        }
    }
    const Date d0 = world.demand.begin()->first;
    out += d0.str() + " 25:00:00," + d0.str() + " 10:10:00,-73.97,40.68,-73.97,40.68\n";
    out += d0.str() + " 10:00:00," + d0.str() + " 10:10:00,0,0,-73.90,40.70\n";
    out += d0.str() + " 10:00:00," + d0.str() + " 09:10:00,-73.97,40.68,-73.90,40.70\n";
    out += d0.str() + " 10:00:00," + d0.str() + " 10:10:00,abc,40.68,-73.90,40.70\n";
    out += d0.str() + " 10:00:00\n";
    return out;
}

}  // namespace mpe
