#pragma once

// Taxi trip ingestion: parse trip CSV rows, filter trip ends to a radius
// around the venue and aggregate them into a dense daily (outflow, inflow)
// series.

#include "mpe/core.hpp"

#include <istream>
#include <map>
#include <numbers>
#include <span>

namespace mpe {

class GeoPoint {
public:
    GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
        if (!(lat >= -90.0 && lat <= 90.0) || !(lon >= -180.0 && lon <= 180.0))
            throw ArgumentError("coordinate out of range (" + format_fixed(lat) + ", " + format_fixed(lon) + ")");
    }

    [[nodiscard]] double lat() const noexcept { return lat_; }
    [[nodiscard]] double lon() const noexcept { return lon_; }
    [[nodiscard]] bool is_null_island() const noexcept { return lat_ == 0.0 && lon_ == 0.0; }

    bool operator==(const GeoPoint&) const = default;

private:
    double lat_;
    double lon_;
};

inline constexpr double kEarthRadiusM = 6'371'000.0;

/// Great-circle distance in meters (haversine).
inline double haversine_m(const GeoPoint& a, const GeoPoint& b) noexcept {
    constexpr double rad = std::numbers::pi / 180.0;
    const double dlat = (b.lat() - a.lat()) * rad;
    const double dlon = (b.lon() - a.lon()) * rad;
    const double s1 = std::sin(dlat / 2.0);
    const double s2 = std::sin(dlon / 2.0);
    double h = s1 * s1 + std::cos(a.lat() * rad) * std::cos(b.lat() * rad) * s2 * s2;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

/// Wall-clock timestamp in the venue's local time, minute precision.
struct LocalTimestamp {
    Date date;
    int minute_of_day = 0;

    /// "YYYY-MM-DD HH:MM:SS" (seconds are truncated) or "YYYY-MM-DD HH:MM".
    static std::optional<LocalTimestamp> try_parse(std::string_view s) {
        s = trim(s);
        if (s.size() < 16 || (s[10] != ' ' && s[10] != 'T')) return std::nullopt;
        auto date = Date::try_parse(s.substr(0, 10));
        if (!date) return std::nullopt;
        auto tod = TimeOfDay::try_parse(s.substr(11, 5));
        if (!tod) return std::nullopt;
        if (s.size() > 16) {
            if (s.size() != 19 || s[16] != ':') return std::nullopt;
            int sec = 0;
            auto r = std::from_chars(s.data() + 17, s.data() + 19, sec);
            if (r.ec != std::errc{} || r.ptr != s.data() + 19 || sec < 0 || sec > 60) return std::nullopt;
        }
        return LocalTimestamp{*date, tod->minutes()};
    }

    [[nodiscard]] long long total_minutes() const { return date.days_since_epoch() * 1440 + minute_of_day; }

    auto operator<=>(const LocalTimestamp&) const = default;
};

inline constexpr long long kMaxTripMinutes = 12 * 60;

struct TripRecord {
    LocalTimestamp pickup_time;
    LocalTimestamp dropoff_time;
    GeoPoint pickup_point;
    GeoPoint dropoff_point;

    bool operator==(const TripRecord&) const = default;
};

struct VenueConfig {
    std::string name;
    GeoPoint center;
    double radius_m = 220.0;
    std::string timezone = "America/New_York";

    VenueConfig(std::string venue_name, GeoPoint venue_center, double radius = 220.0,
                std::string tz = "America/New_York")
        : name(std::move(venue_name)), center(venue_center), radius_m(radius), timezone(std::move(tz)) {
        if (!(radius_m > 0.0)) throw ArgumentError("venue radius must be positive");
        if (timezone.empty()) throw ArgumentError("venue timezone must be set");
    }
};

struct DailyDemand {
    Date date;
    std::uint64_t outflow = 0;
    std::uint64_t inflow = 0;

    [[nodiscard]] DemandPair pair() const {
        return {static_cast<double>(outflow), static_cast<double>(inflow)};
    }
    bool operator==(const DailyDemand&) const = default;
};

using DemandSeries = std::map<Date, DailyDemand>;

inline DemandSeries to_series(std::span<const DailyDemand> days) {
    DemandSeries s;
    for (const auto& d : days) s.insert_or_assign(d.date, d);
    return s;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct RowRejection {
    std::size_t line = 0;  // 1-based line number in the source; the header is line 1
    std::string reason;

    bool operator==(const RowRejection&) const = default;
};

struct TripParseResult {
    std::vector<TripRecord> records;
    std::vector<RowRejection> rejections;
};

inline constexpr std::array<std::string_view, 6> kTripColumns{
    "pickup_datetime",  "dropoff_datetime",  "pickup_longitude",
    "pickup_latitude",  "dropoff_longitude", "dropoff_latitude"};

namespace detail {

inline std::optional<double> parse_double(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    double v = 0.0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

// Returns the trip or a rejection reason.
inline std::variant<TripRecord, std::string> parse_trip_fields(const std::vector<std::string>& f,
                                                               const std::array<std::size_t, 6>& col) {
    std::size_t needed = *std::max_element(col.begin(), col.end());
    if (f.size() <= needed) return std::string("wrong field count");
    auto pu = LocalTimestamp::try_parse(f[col[0]]);
    auto dou = LocalTimestamp::try_parse(f[col[1]]);
    if (!pu || !dou) return std::string("bad timestamp");
    std::array<std::optional<double>, 4> v{parse_double(f[col[2]]), parse_double(f[col[3]]),
                                           parse_double(f[col[4]]), parse_double(f[col[5]])};
    for (const auto& x : v)
        if (!x) return std::string("bad coordinate");
    const double plon = *v[0], plat = *v[1], dlon = *v[2], dlat = *v[3];
    if ((plat == 0.0 && plon == 0.0) || (dlat == 0.0 && dlon == 0.0)) return std::string("null-island sentinel");
    if (std::abs(plat) > 90 || std::abs(dlat) > 90 || std::abs(plon) > 180 || std::abs(dlon) > 180)
        return std::string("coordinate out of range");
    if (*dou < *pu) return std::string("dropoff before pickup");
    if (dou->total_minutes() - pu->total_minutes() > kMaxTripMinutes) return std::string("trip longer than 12 hours");
    return TripRecord{*pu, *dou, GeoPoint{plat, plon}, GeoPoint{dlat, dlon}};
}

}  // namespace detail

/// Streams trip rows from a CSV source. Malformed rows are skipped and
/// reported; a header lacking any required column is fatal.
inline TripParseResult parse_trip_records(std::istream& in) {
    if (!in) throw TransportError("trip source is not readable");
    TripParseResult out;
    std::string line;
    std::size_t lineno = 0;
    std::optional<std::array<std::size_t, 6>> col;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!col) {
            if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
            if (trim(line).empty()) throw SchemaError("trip CSV is missing its header row");
            auto header = split_csv_line(line);
            std::array<std::size_t, 6> idx{};
            for (std::size_t k = 0; k < kTripColumns.size(); ++k) {
                auto it = std::find_if(header.begin(), header.end(),
                                       [&](const std::string& h) { return trim(h) == kTripColumns[k]; });
                if (it == header.end())
                    throw SchemaError("trip CSV header lacks required column '" + std::string(kTripColumns[k]) + "'");
                idx[k] = static_cast<std::size_t>(it - header.begin());
            }
            col = idx;
            continue;
        }
        if (trim(line).empty()) continue;
        auto parsed = detail::parse_trip_fields(split_csv_line(line), *col);
        if (auto* trip = std::get_if<TripRecord>(&parsed))
            out.records.push_back(*trip);
        else
            out.rejections.push_back({lineno, std::get<std::string>(parsed)});
    }
    if (in.bad()) throw TransportError("error while reading trip source");
    if (!col) throw SchemaError("trip CSV is missing its header row");
    return out;
}

inline TripParseResult parse_trip_records(std::string_view text) {
    std::istringstream in{std::string(text)};
    return parse_trip_records(in);
}

inline TripParseResult parse_trip_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TransportError("cannot open trip source " + path.string());
    return parse_trip_records(in);
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

/// Per-day counters over a fixed range. Accumulators built over disjoint
/// chunks of the input can be merged in any order.
class DemandAccumulator {
public:
    DemandAccumulator(const VenueConfig& venue, DateRange range)
        : center_(venue.center), radius_m_(venue.radius_m), range_(range), out_(range.size()), in_(range.size()) {}

    void add(const TripRecord& trip) {
        // Each end is attributed to the calendar day of its own local timestamp.
        if (range_.contains(trip.pickup_time.date) && haversine_m(trip.pickup_point, center_) <= radius_m_)
            ++out_[index(trip.pickup_time.date)];
        if (range_.contains(trip.dropoff_time.date) && haversine_m(trip.dropoff_point, center_) <= radius_m_)
            ++in_[index(trip.dropoff_time.date)];
    }

    void add(std::span<const TripRecord> trips) {
        for (const auto& t : trips) add(t);
    }

    void merge(const DemandAccumulator& other) {
        if (!(other.range_ == range_)) throw ArgumentError("cannot merge accumulators over different ranges");
        for (std::size_t i = 0; i < out_.size(); ++i) {
            out_[i] += other.out_[i];
            in_[i] += other.in_[i];
        }
    }

    [[nodiscard]] std::vector<DailyDemand> result() const {
        std::vector<DailyDemand> days;
        days.reserve(out_.size());
        for (std::size_t i = 0; i < out_.size(); ++i)
            days.push_back({range_.first + static_cast<int>(i), out_[i], in_[i]});
        return days;
    }

private:
    [[nodiscard]] std::size_t index(Date d) const { return static_cast<std::size_t>(d - range_.first); }

    GeoPoint center_;
    double radius_m_;
    DateRange range_;
    std::vector<std::uint64_t> out_;
    std::vector<std::uint64_t> in_;
};

/// One DailyDemand per day of `range`, zero-filled where no trip qualifies.
inline std::vector<DailyDemand> aggregate_daily_demand(std::span<const TripRecord> trips, const VenueConfig& venue,
                                                       DateRange range) {
    DemandAccumulator acc(venue, range);
    acc.add(trips);
    return acc.result();
}

// ---------------------------------------------------------------------------
// Daily-demand CSV
// ---------------------------------------------------------------------------

inline std::string daily_demand_csv(std::span<const DailyDemand> days) {
    std::string out = "date,outflow,inflow\n";
    for (const auto& d : days)
        out += d.date.str() + "," + std::to_string(d.outflow) + "," + std::to_string(d.inflow) + "\n";
    return out;
}

inline std::vector<DailyDemand> parse_daily_demand_csv(std::string_view text) {
    auto table = parse_csv(text);
    auto c_date = table.column("date"), c_out = table.column("outflow"), c_in = table.column("inflow");
    std::vector<DailyDemand> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto bad = [&] { return SchemaError("daily-demand CSV row " + std::to_string(r + 2) + " is malformed"); };
        if (row.size() <= std::max({c_date, c_out, c_in})) throw bad();
        auto date = Date::try_parse(row[c_date]);
        std::uint64_t o = 0, i = 0;
        auto so = trim(row[c_out]), si = trim(row[c_in]);
        auto r1 = std::from_chars(so.data(), so.data() + so.size(), o);
        auto r2 = std::from_chars(si.data(), si.data() + si.size(), i);
        if (!date || r1.ec != std::errc{} || r2.ec != std::errc{} || r1.ptr != so.data() + so.size() ||
            r2.ptr != si.data() + si.size())
            throw bad();
        out.push_back({*date, o, i});
    }
    return out;
}

inline std::string rejections_csv(std::span<const RowRejection> rejections) {
    std::string out = "line,reason\n";
    for (const auto& r : rejections) out += std::to_string(r.line) + "," + csv_escape(r.reason) + "\n";
    return out;
}

}  // namespace mpe
