#pragma once

// Regular/irregular split of daily demand. The regular part is a same-weekday
// historical average over prior days without events; the irregular part is
// what remains.

#include "mpe/event_catalog.hpp"
#include "mpe/trip_ingest.hpp"

namespace mpe {

enum class BaselineFallback { expand_window, all_history, global_weekday_mean };

inline std::string_view to_string(BaselineFallback f) {
    switch (f) {
        case BaselineFallback::expand_window: return "expand_window";
        case BaselineFallback::all_history: return "all_history";
        case BaselineFallback::global_weekday_mean: return "global_weekday_mean";
    }
    return "?";
}

inline BaselineFallback parse_baseline_fallback(std::string_view s) {
    if (s == "expand_window") return BaselineFallback::expand_window;
    if (s == "all_history") return BaselineFallback::all_history;
    if (s == "global_weekday_mean") return BaselineFallback::global_weekday_mean;
    throw ConfigError("unknown baseline fallback '" + std::string(s) + "'");
}

struct BaselineConfig {
    int lookback_weeks = 8;
    int min_samples = 2;
    BaselineFallback fallback = BaselineFallback::expand_window;

    void validate() const {
        if (lookback_weeks < 1) throw ArgumentError("lookback_weeks must be >= 1");
        if (min_samples < 1) throw ArgumentError("min_samples must be >= 1");
    }
};

enum class BaselineSource { window, expanded_window, all_history, global_weekday_mean, all_prior_days };

struct BaselineEstimate {
    DemandPair value;
    std::size_t samples = 0;
    BaselineSource source = BaselineSource::window;
};

namespace detail {

struct PairSum {
    std::uint64_t out = 0, in = 0;
    std::size_t n = 0;

    void add(const DailyDemand& d) {
        out += d.outflow;
        in += d.inflow;
        ++n;
    }
    [[nodiscard]] DemandPair mean() const {
        return {static_cast<double>(out) / static_cast<double>(n), static_cast<double>(in) / static_cast<double>(n)};
    }
};

}  // namespace detail

/// Same-weekday, event-free historical average for `target`, reading only
/// days strictly before it. Days missing from `history` are skipped.
///
/// When fewer than `min_samples` days qualify inside the lookback window the
/// configured fallback applies, cascading expand_window -> all_history ->
/// global_weekday_mean -> every prior day. Fallbacks accept fewer than
/// min_samples days rather than fail, as long as at least one exists.
inline BaselineEstimate weekday_baseline_detail(const DemandSeries& history, const EventCalendar& calendar,
                                                Date target, const BaselineConfig& config) {
    config.validate();
    if (history.empty()) throw ArgumentError("weekday_baseline: empty history");
    if (history.begin()->first >= target)
        throw ArgumentError("weekday_baseline: no history before " + target.str());
    const Date earliest = history.begin()->first;
    const auto min_n = static_cast<std::size_t>(config.min_samples);

    auto qualifies = [&](Date d) {
        auto it = history.find(d);
        return it != history.end() && !calendar.is_event_day(d) ? &it->second : nullptr;
    };

    detail::PairSum window;
    for (int k = 1; k <= config.lookback_weeks; ++k)
        if (auto* day = qualifies(target - 7 * k)) window.add(*day);
    if (window.n >= min_n) return {window.mean(), window.n, BaselineSource::window};

    auto fallback = config.fallback;
    if (fallback == BaselineFallback::expand_window) {
        detail::PairSum expanded = window;
        for (int k = config.lookback_weeks + 1; target - 7 * k >= earliest && expanded.n < min_n; ++k)
            if (auto* day = qualifies(target - 7 * k)) expanded.add(*day);
        if (expanded.n > 0) return {expanded.mean(), expanded.n, BaselineSource::expanded_window};
        fallback = BaselineFallback::all_history;
    }
    if (fallback == BaselineFallback::all_history) {
        detail::PairSum all;
        for (auto it = history.begin(); it != history.end() && it->first < target; ++it)
            if (!calendar.is_event_day(it->first)) all.add(it->second);
        if (all.n > 0) return {all.mean(), all.n, BaselineSource::all_history};
    }
    detail::PairSum weekday;
    for (auto it = history.begin(); it != history.end() && it->first < target; ++it)
        if (it->first.weekday_index() == target.weekday_index()) weekday.add(it->second);
    if (weekday.n > 0) return {weekday.mean(), weekday.n, BaselineSource::global_weekday_mean};

    detail::PairSum prior;
    for (auto it = history.begin(); it != history.end() && it->first < target; ++it) prior.add(it->second);
    return {prior.mean(), prior.n, BaselineSource::all_prior_days};
}

inline DemandPair weekday_baseline(const DemandSeries& history, const EventCalendar& calendar, Date target,
                                   const BaselineConfig& config = {}) {
    return weekday_baseline_detail(history, calendar, target, config).value;
}

struct DemandDecomposition {
    Date date;
    DailyDemand actual;
    DemandPair baseline;
    DemandPair deviation;

    bool operator==(const DemandDecomposition&) const = default;
};

namespace detail {

// Baselines are snapped to a 2^-20 grid. For counts below 2^32 the
// subtraction actual - baseline is then exact in double precision, so
// baseline + deviation reproduces actual bit-for-bit.
inline double snap_baseline(double v) {
    constexpr double scale = 1048576.0;
    return std::round(v * scale) / scale;
}

}  // namespace detail

inline DemandDecomposition decompose(const DailyDemand& actual, DemandPair baseline) {
    if (!(baseline.outflow >= 0.0) || !(baseline.inflow >= 0.0))
        throw ArgumentError("decompose: baseline components must be non-negative");
    DemandPair snapped{detail::snap_baseline(baseline.outflow), detail::snap_baseline(baseline.inflow)};
    return {actual.date, actual, snapped, actual.pair() - snapped};
}

inline DemandPair recompose(const DemandDecomposition& d) { return d.baseline + d.deviation; }

/// Decomposes every day of `series` that has at least one prior day, using
/// only data before that day for its baseline.
inline std::vector<DemandDecomposition> decompose_series(const DemandSeries& series, const EventCalendar& calendar,
                                                         const BaselineConfig& config = {}) {
    std::vector<DemandDecomposition> out;
    if (series.empty()) return out;
    const Date first = series.begin()->first;
    for (const auto& [date, day] : series) {
        if (date == first) continue;
        out.push_back(decompose(day, weekday_baseline(series, calendar, date, config)));
    }
    return out;
}

inline std::string decomposition_csv(std::span<const DemandDecomposition> rows) {
    std::string out = "date,actual_out,actual_in,baseline_out,baseline_in,dev_out,dev_in\n";
    for (const auto& r : rows) {
        out += r.date.str() + "," + std::to_string(r.actual.outflow) + "," + std::to_string(r.actual.inflow) + "," +
               format_fixed(r.baseline.outflow) + "," + format_fixed(r.baseline.inflow) + "," +
               format_fixed(r.deviation.outflow) + "," + format_fixed(r.deviation.inflow) + "\n";
    }
    return out;
}

}  // namespace mpe
