#pragma once

// Error metrics, event/non-event segmentation and the ablation driver.

#include "mpe/prompt_builder.hpp"

#include <functional>

namespace mpe {

struct Metrics {
    double rmse = 0.0;
    double mae = 0.0;
    std::optional<double> mape;  // fraction; absent when every y_true is zero
    std::optional<double> r2;    // absent when y_true is constant
    std::size_t n = 0;
    std::size_t mape_excluded = 0;  // samples with y_true == 0 left out of MAPE
    double sse = 0.0;
};

/// RMSE, MAE, MAPE and R-squared with the mean taken over `y_true` itself.
inline Metrics compute_metrics(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.empty()) throw ArgumentError("compute_metrics: empty input");
    if (y_true.size() != y_pred.size()) throw ArgumentError("compute_metrics: length mismatch");
    const std::size_t n = y_true.size();
    Metrics m;
    m.n = n;
    double abs_sum = 0.0, pct_sum = 0.0, y_sum = 0.0;
    std::size_t pct_n = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double e = y_true[i] - y_pred[i];
        m.sse += e * e;
        abs_sum += std::abs(e);
        y_sum += y_true[i];
        if (y_true[i] != 0.0) {
            pct_sum += std::abs(e) / std::abs(y_true[i]);
            ++pct_n;
        }
    }
    const double nd = static_cast<double>(n);
    m.rmse = std::sqrt(m.sse / nd);
    m.mae = abs_sum / nd;
    m.mape_excluded = n - pct_n;
    if (pct_n > 0) m.mape = pct_sum / static_cast<double>(pct_n);
    const double mean = y_sum / nd;
    double sst = 0.0;
    for (double y : y_true) sst += (y - mean) * (y - mean);
    if (sst > 0.0) m.r2 = 1.0 - m.sse / sst;
    return m;
}

struct PredictionRecord {
    Date date;
    DailyDemand truth;
    DemandPair predicted;
};

struct SegmentMetrics {
    std::optional<Metrics> pooled;  // absent for an empty segment
    std::optional<Metrics> outflow;
    std::optional<Metrics> inflow;
};

struct MetricsReport {
    SegmentMetrics all_days;
    SegmentMetrics event_days;
    SegmentMetrics non_event_days;
    std::string model_name;
    AblationConfig ablation;
    bool applicable = true;  // false: the configuration does not apply to this model
};

namespace detail {

inline SegmentMetrics segment_metrics(const std::vector<const PredictionRecord*>& rows) {
    SegmentMetrics s;
    if (rows.empty()) return s;
    std::vector<double> yt, yp, ot, op, it, ip;
    for (const auto* r : rows) {
        ot.push_back(static_cast<double>(r->truth.outflow));
        op.push_back(r->predicted.outflow);
        it.push_back(static_cast<double>(r->truth.inflow));
        ip.push_back(r->predicted.inflow);
    }
    yt = ot;
    yt.insert(yt.end(), it.begin(), it.end());
    yp = op;
    yp.insert(yp.end(), ip.begin(), ip.end());
    s.pooled = compute_metrics(yt, yp);
    s.outflow = compute_metrics(ot, op);
    s.inflow = compute_metrics(it, ip);
    return s;
}

}  // namespace detail

/// Pools pickup and dropoff residuals per segment, so n = 2 x days.
inline MetricsReport segment_report(std::span<const PredictionRecord> records, const EventCalendar& calendar,
                                    std::string model_name, AblationConfig ablation) {
    if (records.empty()) throw ArgumentError("segment_report: no records");
    std::vector<const PredictionRecord*> all, ev, non;
    for (const auto& r : records) {
        if (!calendar.covers(r.date))
            throw ArgumentError("segment_report: " + r.date.str() + " is outside the event calendar");
        all.push_back(&r);
        (calendar.is_event_day(r.date) ? ev : non).push_back(&r);
    }
    MetricsReport rep;
    rep.all_days = detail::segment_metrics(all);
    rep.event_days = detail::segment_metrics(ev);
    rep.non_event_days = detail::segment_metrics(non);
    rep.model_name = std::move(model_name);
    rep.ablation = ablation;
    return rep;
}

inline MetricsReport absent_report(std::string model_name, AblationConfig ablation) {
    MetricsReport rep;
    rep.model_name = std::move(model_name);
    rep.ablation = ablation;
    rep.applicable = false;
    return rep;
}

class AblationRunError : public Error {
public:
    AblationRunError(AblationConfig config, const std::string& what)
        : Error("ablation " + config.name() + " failed: " + what), config_(config) {}
    [[nodiscard]] const AblationConfig& config() const { return config_; }

private:
    AblationConfig config_;
};

/// Returns nullopt for configurations that do not apply to the model.
using AblationRunner = std::function<std::optional<std::vector<PredictionRecord>>(const AblationConfig&)>;

inline std::vector<MetricsReport> run_ablation(std::span<const AblationConfig> grid, const AblationRunner& runner,
                                               const EventCalendar& calendar, const std::string& model_name) {
    if (grid.empty()) throw ArgumentError("run_ablation: empty grid");
    std::vector<MetricsReport> out;
    for (const auto& config : grid) {
        std::optional<std::vector<PredictionRecord>> records;
        try {
            records = runner(config);
        } catch (const std::exception& e) {
            throw AblationRunError(config, e.what());
        }
        if (!records)
            out.push_back(absent_report(model_name, config));
        else
            out.push_back(segment_report(*records, calendar, model_name, config));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV output
// ---------------------------------------------------------------------------

namespace detail {

inline std::string opt_fixed(const std::optional<double>& v) { return v ? format_fixed(*v) : std::string{}; }

inline std::string metrics_fields(const std::optional<Metrics>& m) {
    if (!m) return ",,,,";
    return std::to_string(m->n) + "," + format_fixed(m->rmse) + "," + format_fixed(m->mae) + "," +
           opt_fixed(m->mape) + "," + opt_fixed(m->r2);
}

inline constexpr std::array<std::string_view, 3> kSegmentNames{"all", "event", "non_event"};

inline std::array<const SegmentMetrics*, 3> segments(const MetricsReport& r) {
    return {&r.all_days, &r.event_days, &r.non_event_days};
}

}  // namespace detail

/// `model,ablation,segment,n,rmse,mae,mape,r2`. Absent metrics are empty cells.
inline std::string report_csv(std::span<const MetricsReport> reports) {
    std::string out = "model,ablation,segment,n,rmse,mae,mape,r2\n";
    for (const auto& r : reports) {
        auto segs = detail::segments(r);
        for (std::size_t s = 0; s < 3; ++s)
            out += csv_escape(r.model_name) + "," + r.ablation.name() + "," + std::string(detail::kSegmentNames[s]) +
                   "," + detail::metrics_fields(segs[s]->pooled) + "\n";
    }
    return out;
}

/// Per-flow breakdown with the MAPE exclusion tally.
inline std::string report_flows_csv(std::span<const MetricsReport> reports) {
    std::string out = "model,ablation,segment,flow,n,rmse,mae,mape,r2,mape_excluded\n";
    for (const auto& r : reports) {
        auto segs = detail::segments(r);
        for (std::size_t s = 0; s < 3; ++s) {
            const std::array<std::pair<const char*, const std::optional<Metrics>*>, 3> flows{
                {{"pooled", &segs[s]->pooled}, {"pickup", &segs[s]->outflow}, {"dropoff", &segs[s]->inflow}}};
            for (const auto& [flow, m] : flows)
                out += csv_escape(r.model_name) + "," + r.ablation.name() + "," +
                       std::string(detail::kSegmentNames[s]) + "," + flow + "," + detail::metrics_fields(*m) + "," +
                       (*m ? std::to_string((*m)->mape_excluded) : std::string{}) + "\n";
        }
    }
    return out;
}

/// `date,true_out,true_in,pred_out,pred_in,is_event_day`
inline std::string plot_csv(std::span<const PredictionRecord> records, const EventCalendar& calendar) {
    std::string out = "date,true_out,true_in,pred_out,pred_in,is_event_day\n";
    for (const auto& r : records)
        out += r.date.str() + "," + std::to_string(r.truth.outflow) + "," + std::to_string(r.truth.inflow) + "," +
               format_fixed(r.predicted.outflow) + "," + format_fixed(r.predicted.inflow) + "," +
               (calendar.is_event_day(r.date) ? "1" : "0") + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// Prediction exchange files
// ---------------------------------------------------------------------------

struct ExternalPrediction {
    Date date;
    DemandPair predicted;
    std::string model_name;
};

/// `date,pred_out,pred_in,model_name`
inline std::string prediction_csv(std::span<const ExternalPrediction> rows) {
    std::string out = "date,pred_out,pred_in,model_name\n";
    for (const auto& r : rows)
        out += r.date.str() + "," + format_fixed(r.predicted.outflow) + "," + format_fixed(r.predicted.inflow) + "," +
               csv_escape(r.model_name) + "\n";
    return out;
}

inline std::vector<ExternalPrediction> parse_prediction_csv(std::string_view text) {
    auto table = parse_csv(text);
    auto c_date = table.column("date"), c_out = table.column("pred_out"), c_in = table.column("pred_in"),
         c_model = table.column("model_name");
    std::vector<ExternalPrediction> out;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        auto bad = [&] { return SchemaError("prediction CSV row " + std::to_string(r + 2) + " is malformed"); };
        if (row.size() <= std::max({c_date, c_out, c_in, c_model})) throw bad();
        auto date = Date::try_parse(row[c_date]);
        auto po = detail::parse_double(row[c_out]);
        auto pi = detail::parse_double(row[c_in]);
        if (!date || !po || !pi) throw bad();
        out.push_back({*date, {*po, *pi}, row[c_model]});
    }
    return out;
}

/// Joins predictions with observed demand; predictions for dates without an
/// observation are an error.
inline std::vector<PredictionRecord> join_with_truth(std::span<const ExternalPrediction> predictions,
                                                     const DemandSeries& truth) {
    std::vector<PredictionRecord> out;
    out.reserve(predictions.size());
    for (const auto& p : predictions) {
        auto it = truth.find(p.date);
        if (it == truth.end()) throw ArgumentError("no observed demand for predicted date " + p.date.str());
        out.push_back({p.date, it->second, p.predicted});
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
    return out;
}

}  // namespace mpe
