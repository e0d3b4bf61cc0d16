#pragma once

// End-to-end orchestration: the one-step-ahead predictor, the classical
// comparators over the same data, and the stage runner with its manifest.

#include "mpe/baseline_models.hpp"
#include "mpe/evaluation.hpp"
#include "mpe/heuristic_backend.hpp"
#include "mpe/llm_http.hpp"
#include "mpe/synthetic.hpp"
#include "mpe/response_parser.hpp"

#include <ctime>
#include <iostream>

namespace mpe {

// ---------------------------------------------------------------------------
// Event formatting
// ---------------------------------------------------------------------------

struct FormattedCatalogEntry {
    FormattedEvent event;
    bool fallback = false;
};

struct FormatOutcome {
    std::map<std::string, FormattedCatalogEntry> by_key;  // keyed by event_key
    std::vector<ParseFailure> failures;
    std::size_t fallbacks = 0;
};

inline constexpr std::string_view kFallbackCategory = "Other Event";

/// Formats every distinct event once. A malformed reply gets one re-prompt;
/// a second failure yields category "Other Event" with the title as summary.
inline FormatOutcome format_catalog(std::span<const EventRecord> events, const PromptBuilder& builder,
                                    const BackendHandle& backend, std::size_t max_in_flight = 4) {
    std::vector<const EventRecord*> unique;
    std::set<std::string> seen;
    for (const auto& e : events)
        if (seen.insert(event_key(e)).second) unique.push_back(&e);

    std::vector<FormattedCatalogEntry> results(unique.size());
    std::vector<std::vector<ParseFailure>> failures(unique.size());
    for_each_bounded(unique.size(), max_in_flight, [&](std::size_t i) {
        const auto& e = *unique[i];
        auto req = builder.event_format_prompt(e);
        for (int attempt = 0; attempt < 2; ++attempt) {
            auto reply = complete(backend, req).content;
            try {
                results[i] = {parse_formatted_event(reply, e), false};
                return;
            } catch (const MalformedReplyError& err) {
                failures[i].push_back({"event_format", e.date, cache_key(req), err.reason(), reply});
                req = builder.with_format_reminder(req, reply, false);
            }
        }
        results[i] = {FormattedEvent{std::string(kFallbackCategory), collapse_whitespace(e.title), e}, true};
    });

    FormatOutcome out;
    for (std::size_t i = 0; i < unique.size(); ++i) {
        if (results[i].fallback) ++out.fallbacks;
        out.by_key.emplace(event_key(*unique[i]), std::move(results[i]));
        for (auto& f : failures[i]) out.failures.push_back(std::move(f));
    }
    return out;
}

inline std::string formatted_events_json(std::span<const EventRecord> catalog, const FormatOutcome& fo) {
    auto arr = nlohmann::ordered_json::array();
    std::set<std::string> done;
    for (const auto& e : catalog) {
        auto key = event_key(e);
        if (!done.insert(key).second) continue;
        const auto& entry = fo.by_key.at(key);
        nlohmann::ordered_json j;
        j["key"] = key;
        j["date"] = e.date.str();
        j["title"] = e.title;
        j["category"] = entry.event.category;
        j["summary"] = entry.event.summary;
        j["fallback"] = entry.fallback;
        arr.push_back(std::move(j));
    }
    return arr.dump(2) + "\n";
}

/// Reads formatted_events.json back against the catalog it was built from.
inline std::map<std::string, FormattedEvent> parse_formatted_events(std::string_view text,
                                                                    std::span<const EventRecord> catalog) {
    std::map<std::string, const EventRecord*> by_key;
    for (const auto& e : catalog) by_key.emplace(event_key(e), &e);
    std::map<std::string, FormattedEvent> out;
    try {
        for (const auto& j : nlohmann::json::parse(text)) {
            auto key = j.at("key").get<std::string>();
            auto it = by_key.find(key);
            if (it == by_key.end()) continue;
            out.emplace(key, FormattedEvent{j.at("category").get<std::string>(), j.at("summary").get<std::string>(),
                                            *it->second});
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("formatted events file is malformed: ") + e.what());
    }
    return out;
}

// ---------------------------------------------------------------------------
// One-step-ahead prediction
// ---------------------------------------------------------------------------

/// Everything observed up to the end of the data range. Functions taking a
/// target date only read entries strictly before it (plus the target's
/// scheduled events).
struct PredictionContext {
    const DemandSeries* demand = nullptr;
    const std::map<Date, DemandDecomposition>* decomposition = nullptr;
    const EventCalendar* calendar = nullptr;
    const std::map<std::string, FormattedEvent>* formatted = nullptr;  // needed only for h'
    std::size_t T = 28;
    BaselineConfig baseline;
};

inline std::map<Date, DemandDecomposition> decomposition_index(std::span<const DemandDecomposition> rows) {
    std::map<Date, DemandDecomposition> m;
    for (const auto& r : rows) m.emplace(r.date, r);
    return m;
}

inline DayContext day_context(const PredictionContext& ctx, Date date, bool history, const AblationConfig& ablation) {
    DayContext day;
    day.date = date;
    day.events = ctx.calendar->day(date).events;
    if (ablation.uses_formatted_text()) {
        if (!ctx.formatted) throw ArgumentError("formatted events are required for " + ablation.name());
        for (const auto& e : day.events) {
            auto it = ctx.formatted->find(event_key(e));
            if (it == ctx.formatted->end())
                throw ArgumentError("event '" + e.title + "' on " + date.str() + " has not been formatted");
            day.formatted.push_back(it->second);
        }
    }
    if (history) {
        auto it = ctx.decomposition->find(date);
        if (it == ctx.decomposition->end())
            throw ArgumentError("insufficient history: no decomposed demand for " + date.str());
        day.decomposition = it->second;
    }
    return day;
}

inline HistoryWindow history_window(const PredictionContext& ctx, Date target, const AblationConfig& ablation) {
    HistoryWindow w;
    for (std::size_t k = ctx.T; k >= 1; --k) w.days.push_back(day_context(ctx, target - static_cast<int>(k), true, ablation));
    return w;
}

struct DayPrediction {
    PredictionResult result;
    bool fallback = false;
    std::string request_digest;
    DemandPair baseline;
    std::vector<ParseFailure> failures;
};

/// Baseline, window, prompt, completion, parse. One re-prompt on a malformed
/// reply, then the rounded baseline with reasoning "fallback: baseline".
inline DayPrediction predict_next_day(const PredictionContext& ctx, Date target, const AblationConfig& ablation,
                                      const PromptBuilder& builder, const BackendHandle& backend) {
    auto window = history_window(ctx, target, ablation);
    const auto baseline = weekday_baseline(*ctx.demand, *ctx.calendar, target, ctx.baseline);
    auto target_day = day_context(ctx, target, false, ablation);
    auto req = builder.prediction_prompt(window, target_day, baseline, ablation);
    if (auto leaks = future_dates_in_prompt(req.messages.front().content, target); !leaks.empty())
        throw Error("causality violation: prompt for " + target.str() + " mentions " + leaks.front());

    DayPrediction out;
    out.baseline = baseline;
    out.request_digest = cache_key(req);
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = complete(backend, req).content;
        try {
            out.result = parse_prediction(reply, target);
            return out;
        } catch (const MalformedReplyError& e) {
            out.failures.push_back({"prediction", target, cache_key(req), e.reason(), reply});
            req = builder.with_format_reminder(req, reply, true);
        }
    }
    out.fallback = true;
    out.result = {target, static_cast<std::uint64_t>(std::max(0LL, round_half_up(baseline.outflow))),
                  static_cast<std::uint64_t>(std::max(0LL, round_half_up(baseline.inflow))), "fallback: baseline", ""};
    return out;
}

struct PredictOutcome {
    std::vector<DayPrediction> days;  // date order
    std::size_t fallbacks = 0;

    [[nodiscard]] double fallback_rate() const {
        return days.empty() ? 0.0 : static_cast<double>(fallbacks) / static_cast<double>(days.size());
    }
};

inline PredictOutcome predict_range(const PredictionContext& ctx, std::span<const Date> dates,
                                    const AblationConfig& ablation, const PromptBuilder& builder,
                                    const BackendHandle& backend, std::size_t max_in_flight = 4) {
    PredictOutcome out;
    out.days.resize(dates.size());
    for_each_bounded(dates.size(), max_in_flight,
                     [&](std::size_t i) { out.days[i] = predict_next_day(ctx, dates[i], ablation, builder, backend); });
    for (const auto& d : out.days) out.fallbacks += d.fallback ? 1 : 0;
    return out;
}

inline std::vector<PredictionRecord> to_records(const PredictOutcome& po, const DemandSeries& truth) {
    std::vector<PredictionRecord> out;
    for (const auto& d : po.days)
        out.push_back({d.result.date, truth.at(d.result.date),
                       {static_cast<double>(d.result.pickup), static_cast<double>(d.result.dropoff)}});
    return out;
}

// ---------------------------------------------------------------------------
// Classical comparators
// ---------------------------------------------------------------------------

struct ClassicalSettings {
    double ridge_lambda = 1.0;
    GbdtParams gbdt;
    std::size_t time_bins = 24;
    std::size_t text_dim = 32;
};

enum class ClassicalKind { historical_average, linear, gbdt };

inline std::string_view to_string(ClassicalKind k) {
    switch (k) {
        case ClassicalKind::historical_average: return "HA";
        case ClassicalKind::linear: return "LR";
        case ClassicalKind::gbdt: return "GBDT";
    }
    return "?";
}

struct ClassicalFit {
    std::vector<PredictionRecord> records;
    std::vector<std::pair<std::string, nlohmann::ordered_json>> models;  // (flow, document)
};

/// Trains on `train_dates`, predicts `test_dates`. Under r_i the target is the
/// deviation and the prediction is baseline + predicted deviation.
inline ClassicalFit fit_classical(ClassicalKind kind, const PredictionContext& ctx, std::span<const Date> train_dates,
                                  std::span<const Date> test_dates, const AblationConfig& ablation,
                                  const ClassicalSettings& settings) {
    ClassicalFit fit;
    auto target_decomp = [&](Date d) -> const DemandDecomposition& {
        auto it = ctx.decomposition->find(d);
        if (it == ctx.decomposition->end()) throw ArgumentError("no decomposition for " + d.str());
        return it->second;
    };
    if (kind == ClassicalKind::historical_average) {
        for (auto d : test_dates) fit.records.push_back({d, ctx.demand->at(d), target_decomp(d).baseline});
        return fit;
    }

    FeaturizerConfig fc{ctx.T, settings.time_bins, settings.text_dim, ablation};
    auto features = [&](Date d) {
        auto window = history_window(ctx, d, ablation);
        auto target = day_context(ctx, d, false, ablation);
        return featurize_day(window, DayEvents{d, target.events}, fc, target.formatted);
    };
    FeatureMatrix X;
    std::vector<double> y_out, y_in;
    for (auto d : train_dates) {
        X.push_back(features(d));
        const auto& dec = target_decomp(d);
        const DemandPair y = ablation.decomposed() ? dec.deviation : dec.actual.pair();
        y_out.push_back(y.outflow);
        y_in.push_back(y.inflow);
    }
    std::function<double(const FeatureVector&)> f_out, f_in;
    if (kind == ClassicalKind::linear) {
        auto m_out = fit_linear(X, y_out, settings.ridge_lambda), m_in = fit_linear(X, y_in, settings.ridge_lambda);
        fit.models = {{"pickup", to_json(m_out)}, {"dropoff", to_json(m_in)}};
        f_out = [m_out](const FeatureVector& x) { return predict_linear(m_out, x); };
        f_in = [m_in](const FeatureVector& x) { return predict_linear(m_in, x); };
    } else {
        auto m_out = fit_gbdt(X, y_out, settings.gbdt), m_in = fit_gbdt(X, y_in, settings.gbdt);
        fit.models = {{"pickup", to_json(m_out)}, {"dropoff", to_json(m_in)}};
        f_out = [m_out](const FeatureVector& x) { return predict_gbdt(m_out, x); };
        f_in = [m_in](const FeatureVector& x) { return predict_gbdt(m_in, x); };
    }
    for (auto d : test_dates) {
        auto x = features(d);
        DemandPair p{f_out(x), f_in(x)};
        if (ablation.decomposed()) p = p + target_decomp(d).baseline;
        fit.records.push_back({d, ctx.demand->at(d), p});
    }
    return fit;
}

/// Classical models consume raw text only; formatted descriptions are an
/// LLM-side feature.
inline bool classical_applies(const AblationConfig& a) { return !a.uses_formatted_text(); }

/// Grid for the classical comparators: the canonical grid with the
/// formatted-text rows absent, plus original demand at raw text.
inline std::vector<AblationConfig> classical_ablation_grid() {
    auto g = canonical_ablation_grid();
    g.push_back({EventFeatures::c_t_h, DemandFeatures::o});
    return g;
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct BackendSettings {
    std::string kind = "mock";  // mock | live | cache | heuristic
    std::filesystem::path mock_script;
    std::string base_url = "https://api.openai.com";
    std::string model = "gpt-4";
    double timeout_s = 60.0;
    int max_retries = 3;
    double retry_backoff_s = 2.0;
    std::size_t max_in_flight = 4;
};

struct PipelineConfig {
    std::filesystem::path base_dir;
    VenueConfig venue{"Barclays Center", GeoPoint{40.68265, -73.97469}};
    std::filesystem::path trip_source;
    std::filesystem::path event_source;
    DateRange train_range{Date{2013, 7, 1}, Date{2014, 6, 30}};
    DateRange test_range{Date{2014, 7, 1}, Date{2015, 6, 30}};
    std::size_t T = 28;
    BaselineConfig baseline;
    BackendSettings backend;
    std::filesystem::path cache_dir;
    std::filesystem::path output_dir;
    AblationConfig ablation;
    double fallback_budget = 0.2;
    std::size_t max_description_words = 500;
    std::optional<std::filesystem::path> template_dir;
    ClassicalSettings classical;
    std::vector<std::filesystem::path> external_predictions;

    [[nodiscard]] DateRange data_range() const { return {train_range.first, test_range.last}; }

    [[nodiscard]] std::filesystem::path resolve(const std::filesystem::path& p) const {
        return p.is_absolute() || p.empty() ? p : base_dir / p;
    }

    void validate() const {
        if (T == 0) throw ConfigError("T must be positive");
        if (!(train_range.last < test_range.first))
            throw ConfigError("train_range must end before test_range begins");
        if (train_range.size() < T + 2)
            throw ConfigError("train_range must hold at least T + 2 days so every model has a full window");
        if (!(fallback_budget >= 0.0 && fallback_budget <= 1.0)) throw ConfigError("fallback_budget must lie in [0, 1]");
        if (trip_source.empty()) throw ConfigError("trip_source is required");
        if (event_source.empty()) throw ConfigError("event_source is required");
        if (output_dir.empty()) throw ConfigError("output_dir is required");
        static const std::set<std::string> kinds{"mock", "live", "cache", "heuristic"};
        if (!kinds.count(backend.kind)) throw ConfigError("unknown backend kind '" + backend.kind + "'");
        if (backend.kind == "mock" && backend.mock_script.empty())
            throw ConfigError("backend kind 'mock' needs backend.mock_script");
        if (backend.kind == "cache" && cache_dir.empty()) throw ConfigError("backend kind 'cache' needs cache_dir");
        if (backend.max_in_flight == 0) throw ConfigError("backend.max_in_flight must be positive");
        if (!(classical.ridge_lambda >= 0.0)) throw ConfigError("ridge_lambda must be non-negative");
        try {
            baseline.validate();
        } catch (const ArgumentError& e) {
            throw ConfigError(e.what());
        }
    }

    /// Settings that determine outputs. Output and cache locations and the
    /// backend choice are excluded; the backend is recorded separately.
    [[nodiscard]] nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["venue"] = {{"name", venue.name},
                      {"lat", venue.center.lat()},
                      {"lon", venue.center.lon()},
                      {"radius_m", venue.radius_m},
                      {"timezone", venue.timezone}};
        j["trip_source"] = trip_source.generic_string();
        j["event_source"] = event_source.generic_string();
        j["train_range"] = {{"first", train_range.first.str()}, {"last", train_range.last.str()}};
        j["test_range"] = {{"first", test_range.first.str()}, {"last", test_range.last.str()}};
        j["T"] = T;
        j["baseline"] = {{"lookback_weeks", baseline.lookback_weeks},
                         {"min_samples", baseline.min_samples},
                         {"fallback", std::string(to_string(baseline.fallback))}};
        j["model"] = backend.model;
        j["ablation"] = ablation.name();
        j["fallback_budget"] = fallback_budget;
        j["prompt"] = {{"max_description_words", max_description_words},
                       {"template_dir", template_dir ? template_dir->generic_string() : std::string{}}};
        j["baselines"] = {{"ridge_lambda", classical.ridge_lambda},
                          {"time_bins", classical.time_bins},
                          {"text_dim", classical.text_dim},
                          {"gbdt",
                           {{"n_trees", classical.gbdt.n_trees},
                            {"max_depth", classical.gbdt.max_depth},
                            {"learning_rate", classical.gbdt.learning_rate},
                            {"min_leaf", classical.gbdt.min_leaf}}}};
        auto ext = nlohmann::ordered_json::array();
        for (const auto& p : external_predictions) ext.push_back(p.generic_string());
        j["external_predictions"] = ext;
        return j;
    }

    [[nodiscard]] std::string digest() const { return sha256_hex(to_json().dump()); }

    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
        static const std::set<std::string> known{"venue",        "trip_source",    "event_source", "train_range",
                                                 "test_range",   "T",              "baseline",     "backend",
                                                 "cache_dir",    "output_dir",     "ablation",     "fallback_budget",
                                                 "prompt",       "baselines",      "external_predictions"};
        if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
        for (auto& [k, v] : j.items())
            if (!known.count(k)) throw ConfigError("unknown configuration key '" + k + "'");
        try {
            PipelineConfig c;
            c.base_dir = base_dir;
            if (auto v = j.find("venue"); v != j.end())
                c.venue = VenueConfig(v->value("name", std::string("Barclays Center")),
                                      GeoPoint(v->at("lat").get<double>(), v->at("lon").get<double>()),
                                      v->value("radius_m", 220.0), v->value("timezone", std::string("America/New_York")));
            c.trip_source = j.at("trip_source").get<std::string>();
            c.event_source = j.at("event_source").get<std::string>();
            auto range = [](const nlohmann::json& r) {
                return DateRange(Date::parse(r.at("first").get<std::string>()), Date::parse(r.at("last").get<std::string>()));
            };
            c.train_range = range(j.at("train_range"));
            c.test_range = range(j.at("test_range"));
            c.T = j.value("T", std::size_t{28});
            if (auto b = j.find("baseline"); b != j.end()) {
                c.baseline.lookback_weeks = b->value("lookback_weeks", 8);
                c.baseline.min_samples = b->value("min_samples", 2);
                c.baseline.fallback = parse_baseline_fallback(b->value("fallback", std::string("expand_window")));
            }
            if (auto b = j.find("backend"); b != j.end()) {
                auto& s = c.backend;
                s.kind = b->value("kind", s.kind);
                if (b->contains("mock_script")) s.mock_script = b->at("mock_script").get<std::string>();
                s.base_url = b->value("base_url", s.base_url);
                s.model = b->value("model", s.model);
                s.timeout_s = b->value("timeout_s", s.timeout_s);
                s.max_retries = b->value("max_retries", s.max_retries);
                s.retry_backoff_s = b->value("retry_backoff_s", s.retry_backoff_s);
                s.max_in_flight = b->value("max_in_flight", s.max_in_flight);
            }
            c.cache_dir = j.value("cache_dir", std::string{});
            c.output_dir = j.value("output_dir", std::string("out"));
            c.ablation = AblationConfig::parse(j.value("ablation", std::string("c_t_h_prime+r_i")));
            c.fallback_budget = j.value("fallback_budget", 0.2);
            if (auto p = j.find("prompt"); p != j.end()) {
                c.max_description_words = p->value("max_description_words", std::size_t{500});
                if (auto t = p->find("template_dir"); t != p->end() && !t->is_null() && !t->get<std::string>().empty())
                    c.template_dir = t->get<std::string>();
            }
            if (auto b = j.find("baselines"); b != j.end()) {
                c.classical.ridge_lambda = b->value("ridge_lambda", 1.0);
                c.classical.time_bins = b->value("time_bins", std::size_t{24});
                c.classical.text_dim = b->value("text_dim", std::size_t{32});
                if (auto g = b->find("gbdt"); g != b->end()) {
                    c.classical.gbdt.n_trees = g->value("n_trees", 200);
                    c.classical.gbdt.max_depth = g->value("max_depth", 3);
                    c.classical.gbdt.learning_rate = g->value("learning_rate", 0.05);
                    c.classical.gbdt.min_leaf = g->value("min_leaf", 5);
                }
            }
            if (auto e = j.find("external_predictions"); e != j.end())
                for (const auto& p : *e) c.external_predictions.emplace_back(p.get<std::string>());
            c.validate();
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("configuration: ") + e.what());
        } catch (const ArgumentError& e) {
            throw ConfigError(std::string("configuration: ") + e.what());
        }
    }

    static PipelineConfig load(const std::filesystem::path& path) {
        std::string text;
        try {
            text = read_file(path);
        } catch (const TransportError&) {
            throw ConfigError("cannot read configuration " + path.string());
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError("configuration is not valid JSON: " + std::string(e.what()));
        }
        auto base = std::filesystem::absolute(path).parent_path();
        return from_json(j, base);
    }
};

// ---------------------------------------------------------------------------
// Stages
// ---------------------------------------------------------------------------

enum class Stage { ingest, format_events, decompose, predict, evaluate, ablate, report };

inline constexpr std::array<Stage, 7> kAllStages{Stage::ingest,   Stage::format_events, Stage::decompose,
                                                 Stage::predict,  Stage::evaluate,      Stage::ablate,
                                                 Stage::report};

inline std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::format_events: return "format_events";
        case Stage::decompose: return "decompose";
        case Stage::predict: return "predict";
        case Stage::evaluate: return "evaluate";
        case Stage::ablate: return "ablate";
        case Stage::report: return "report";
    }
    return "?";
}

inline Stage parse_stage(std::string_view s) {
    for (auto st : kAllStages)
        if (to_string(st) == s) return st;
    if (s == "format-events") return Stage::format_events;
    throw ConfigError("unknown stage '" + std::string(s) + "'");
}

class FallbackBudgetError : public Error {
public:
    FallbackBudgetError(const std::string& what, double rate, double budget)
        : Error(what), rate_(rate), budget_(budget) {}
    [[nodiscard]] double rate() const { return rate_; }
    [[nodiscard]] double budget() const { return budget_; }

private:
    double rate_;
    double budget_;
};

struct StageOutcome {
    Stage stage;
    bool skipped = false;
    std::vector<std::string> outputs;  // relative to output_dir
    std::string message;
};

inline std::string utc_timestamp() {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline constexpr std::string_view kLlmModelName = "LLM-MPE";

class Pipeline {
public:
    /// `backend_override`, when given, replaces the configured backend (it is
    /// still wrapped by the cache when cache_dir is set).
    explicit Pipeline(PipelineConfig config, BackendHandle backend_override = nullptr)
        : config_(std::move(config)), override_(std::move(backend_override)) {
        config_.validate();
        out_ = config_.resolve(config_.output_dir);
        PromptOptions opts;
        opts.venue_name = config_.venue.name;
        opts.max_description_words = config_.max_description_words;
        opts.model = config_.backend.model;
        templates_ = config_.template_dir ? PromptTemplates::load_overrides(config_.resolve(*config_.template_dir))
                                          : PromptTemplates{};
        builder_ = PromptBuilder(opts, templates_);
    }

    [[nodiscard]] const PipelineConfig& config() const { return config_; }
    [[nodiscard]] const std::filesystem::path& output_dir() const { return out_; }
    [[nodiscard]] const PromptBuilder& builder() const { return builder_; }

    StageOutcome run(Stage stage) {
        switch (stage) {
            case Stage::ingest: return run_ingest();
            case Stage::format_events: return run_format_events();
            case Stage::decompose: return run_decompose();
            case Stage::predict: return run_predict();
            case Stage::evaluate: return run_evaluate();
            case Stage::ablate: return run_ablate();
            case Stage::report: return run_report();
        }
        throw ArgumentError("unknown stage");
    }

    std::vector<StageOutcome> run_all() {
        std::vector<StageOutcome> out;
        for (auto s : kAllStages) out.push_back(run(s));
        return out;
    }

    /// Human-readable plan for --dry-run; touches nothing on disk.
    [[nodiscard]] std::string plan(std::optional<Stage> only = std::nullopt) const {
        std::string s = "config digest " + config_.digest() + "\noutput dir " + out_.string() + "\n";
        for (auto st : kAllStages) {
            if (only && st != *only) continue;
            s += std::string(to_string(st)) + ": ";
            switch (st) {
                case Stage::ingest:
                    s += "read " + config_.resolve(config_.trip_source).string() + " -> daily_demand.csv, ingest_rejections.csv";
                    break;
                case Stage::format_events:
                    s += "format each distinct event via backend '" + config_.backend.kind + "' -> formatted_events.json";
                    break;
                case Stage::decompose: s += "daily_demand.csv + events -> decomposition.csv"; break;
                case Stage::predict:
                    s += std::to_string(config_.test_range.size()) + " one-step-ahead predictions at " +
                         config_.ablation.name() + " -> predictions/, reasoning/";
                    break;
                case Stage::evaluate: s += "fit HA, LR, GBDT; score all models -> report.csv, plots/, models/"; break;
                case Stage::ablate: s += "canonical feature grid for LLM-MPE, LR, GBDT -> ablation.csv"; break;
                case Stage::report: s += "report.csv, ablation.csv -> summary.md"; break;
            }
            s += "\n";
        }
        return s;
    }

    /// The backend stack in use (created on first need).
    BackendHandle backend() {
        if (backend_) return backend_;
        BackendHandle inner = override_;
        if (!inner) {
            const auto& b = config_.backend;
            if (b.kind == "mock") {
                inner = ScriptedMockBackend::from_file(config_.resolve(b.mock_script));
            } else if (b.kind == "heuristic") {
                inner = std::make_shared<HeuristicBackend>();
            } else if (b.kind == "cache") {
                inner = std::make_shared<NullBackend>();
            } else {
                BackendConfig hc;
                hc.base_url = b.base_url;
                hc.api_key = BackendConfig::api_key_from_env();
                hc.timeout_s = b.timeout_s;
                hc.max_retries = b.max_retries;
                hc.retry_backoff_s = b.retry_backoff_s;
                inner = std::make_shared<HttpChatBackend>(hc);
            }
        }
        if (!config_.cache_dir.empty()) {
            auto cached = std::make_shared<CachedBackend>(inner, config_.resolve(config_.cache_dir));
            cache_ = cached;
            backend_ = cached;
        } else {
            backend_ = inner;
        }
        return backend_;
    }

    [[nodiscard]] std::shared_ptr<CachedBackend> cache() const { return cache_; }

private:
    using path = std::filesystem::path;

    // ---- inputs ---------------------------------------------------------

    [[nodiscard]] path p(const std::string& rel) const { return out_ / rel; }

    void require(Stage stage, Stage prerequisite, const std::string& rel) const {
        if (!std::filesystem::exists(p(rel)))
            throw PreconditionError(std::string(to_string(stage)), std::string(to_string(prerequisite)),
                                    rel + " not found in " + out_.string());
    }

    std::vector<EventRecord> load_catalog() const {
        const auto src = config_.resolve(config_.event_source);
        std::string text;
        try {
            text = read_file(src);
        } catch (const TransportError&) {
            throw ConfigError("cannot read event source " + src.string());
        }
        auto parsed = parse_event_records(text);
        if (!parsed.errors.empty()) {
            std::string msg = "event source has " + std::to_string(parsed.errors.size()) + " invalid record(s):";
            for (std::size_t i = 0; i < std::min<std::size_t>(5, parsed.errors.size()); ++i)
                msg += " [" + std::to_string(parsed.errors[i].index) + "] " + parsed.errors[i].reason + ";";
            throw SchemaError(msg);
        }
        std::vector<EventRecord> in_range;
        const auto range = config_.data_range();
        for (auto& e : parsed.records)
            if (range.contains(e.date)) in_range.push_back(std::move(e));
        std::stable_sort(in_range.begin(), in_range.end(), [](const EventRecord& a, const EventRecord& b) {
            return std::tie(a.date, a.start_time, a.title) < std::tie(b.date, b.start_time, b.title);
        });
        return in_range;
    }

    struct Loaded {
        std::vector<EventRecord> catalog;
        EventCalendar calendar;
        DemandSeries demand;
        std::vector<DemandDecomposition> decomposition_rows;
        std::map<Date, DemandDecomposition> decomposition;
        std::map<std::string, FormattedEvent> formatted;
        bool has_formatted = false;

        [[nodiscard]] PredictionContext context(const PipelineConfig& c) const {
            PredictionContext ctx;
            ctx.demand = &demand;
            ctx.decomposition = &decomposition;
            ctx.calendar = &calendar;
            ctx.formatted = has_formatted ? &formatted : nullptr;
            ctx.T = c.T;
            ctx.baseline = c.baseline;
            return ctx;
        }
    };

    // Demand and decomposition, verified against the decompose stage output.
    std::unique_ptr<Loaded> load_for(Stage stage, bool need_formatted) const {
        require(stage, Stage::ingest, "daily_demand.csv");
        require(stage, Stage::decompose, "decomposition.csv");
        if (need_formatted) require(stage, Stage::format_events, "formatted_events.json");
        auto L = std::make_unique<Loaded>();
        L->catalog = load_catalog();
        L->calendar = EventCalendar(L->catalog, config_.data_range());
        auto days = parse_daily_demand_csv(read_file(p("daily_demand.csv")));
        L->demand = to_series(days);
        L->decomposition_rows = decompose_series(L->demand, L->calendar, config_.baseline);
        if (decomposition_csv(L->decomposition_rows) != read_file(p("decomposition.csv")))
            throw PreconditionError(std::string(to_string(stage)), "decompose",
                                    "decomposition.csv is stale relative to daily_demand.csv and the configuration");
        L->decomposition = decomposition_index(L->decomposition_rows);
        if (need_formatted) {
            L->formatted = parse_formatted_events(read_file(p("formatted_events.json")), L->catalog);
            L->has_formatted = true;
        }
        return L;
    }

    [[nodiscard]] std::vector<Date> test_dates() const { return config_.test_range.days(); }

    [[nodiscard]] std::vector<Date> train_dates(const Loaded& L) const {
        std::vector<Date> out;
        if (L.decomposition.empty()) return out;
        const Date first_full = L.decomposition.begin()->first + static_cast<int>(config_.T);
        for (auto d : config_.train_range.days())
            if (d >= first_full) out.push_back(d);
        if (out.size() < 2) throw ConfigError("train_range leaves fewer than 2 days with a full history window");
        return out;
    }

    // ---- manifest -------------------------------------------------------

    [[nodiscard]] path manifest_path() const { return out_ / "manifest.json"; }

    [[nodiscard]] nlohmann::ordered_json load_manifest() const {
        if (std::filesystem::exists(manifest_path())) {
            try {
                return nlohmann::ordered_json::parse(read_file(manifest_path()));
            } catch (const nlohmann::json::exception&) {
            }
        }
        nlohmann::ordered_json m;
        m["format_version"] = 1;
        m["stages"] = nlohmann::ordered_json::object();
        return m;
    }

    struct StageInputs {
        std::vector<std::pair<std::string, path>> files;  // (label, path)
        bool uses_backend = false;
    };

    std::string stage_key(Stage stage, const StageInputs& in, nlohmann::ordered_json& digests) {
        std::string material = std::string(to_string(stage)) + "\n" + config_.digest() + "\n" + templates_.digest() + "\n";
        if (in.uses_backend) material += "backend " + backend()->identity() + "\n";
        for (const auto& [label, file] : in.files) {
            auto d = file_sha256(file);
            digests[label] = d;
            material += label + " " + d + "\n";
        }
        return sha256_hex(material);
    }

    bool up_to_date(Stage stage, const std::string& key) const {
        auto m = load_manifest();
        auto it = m["stages"].find(std::string(to_string(stage)));
        if (it == m["stages"].end() || it->value("key", "") != key) return false;
        for (auto& [rel, digest] : it->at("outputs").items()) {
            if (!std::filesystem::exists(p(rel))) return false;
            if (file_sha256(p(rel)) != digest.get<std::string>()) return false;
        }
        return true;
    }

    void record(Stage stage, const std::string& key, const nlohmann::ordered_json& input_digests,
                const std::vector<std::string>& outputs, const nlohmann::ordered_json& extra = {}) {
        auto m = load_manifest();
        m["config_digest"] = config_.digest();
        m["template_digest"] = templates_.digest();
        if (backend_) m["backend_identity"] = backend_->identity();
        nlohmann::ordered_json s;
        s["key"] = key;
        s["inputs"] = input_digests;
        nlohmann::ordered_json outs = nlohmann::ordered_json::object();
        for (const auto& rel : outputs) outs[rel] = file_sha256(p(rel));
        s["outputs"] = outs;
        if (!extra.is_null()) s["details"] = extra;
        s["completed_at"] = utc_timestamp();
        m["stages"][std::string(to_string(stage))] = s;
        write_file_atomic(manifest_path(), m.dump(2) + "\n");
    }

    template <typename Body>
    StageOutcome guarded(Stage stage, const StageInputs& inputs, Body&& body) {
        nlohmann::ordered_json digests = nlohmann::ordered_json::object();
        const auto key = stage_key(stage, inputs, digests);
        if (up_to_date(stage, key)) {
            StageOutcome o{stage, true, {}, "up to date"};
            return o;
        }
        nlohmann::ordered_json extra;
        StageOutcome o{stage, false, body(extra), {}};
        record(stage, key, digests, o.outputs, extra);
        return o;
    }

    void write(const std::string& rel, std::string_view content) const { write_file_atomic(p(rel), content); }

    // ---- stage bodies ---------------------------------------------------

    StageOutcome run_ingest() {
        const auto src = config_.resolve(config_.trip_source);
        if (!std::filesystem::exists(src)) throw ConfigError("trip source not found: " + src.string());
        return guarded(Stage::ingest, {{{"trip_source", src}}, false}, [&](nlohmann::ordered_json& extra) {
            std::ifstream in(src, std::ios::binary);
            if (!in) throw ConfigError("cannot open trip source " + src.string());
            auto parsed = parse_trip_records(in);
            auto days = aggregate_daily_demand(parsed.records, config_.venue, config_.data_range());
            write("daily_demand.csv", daily_demand_csv(days));
            write("ingest_rejections.csv", rejections_csv(parsed.rejections));
            extra["trips_parsed"] = parsed.records.size();
            extra["rows_rejected"] = parsed.rejections.size();
            return std::vector<std::string>{"daily_demand.csv", "ingest_rejections.csv"};
        });
    }

    StageOutcome run_format_events() {
        const auto src = config_.resolve(config_.event_source);
        if (!std::filesystem::exists(src)) throw ConfigError("event source not found: " + src.string());
        return guarded(Stage::format_events, {{{"event_source", src}}, true}, [&](nlohmann::ordered_json& extra) {
            auto catalog = load_catalog();
            auto fo = format_catalog(catalog, builder_, backend(), config_.backend.max_in_flight);
            write("formatted_events.json", formatted_events_json(catalog, fo));
            std::string log;
            for (const auto& f : fo.failures) log += parse_failure_jsonl(f);
            write("event_format_failures.jsonl", log);
            extra["events"] = fo.by_key.size();
            extra["fallbacks"] = fo.fallbacks;
            return std::vector<std::string>{"formatted_events.json", "event_format_failures.jsonl"};
        });
    }

    StageOutcome run_decompose() {
        require(Stage::decompose, Stage::ingest, "daily_demand.csv");
        const auto src = config_.resolve(config_.event_source);
        return guarded(Stage::decompose, {{{"daily_demand.csv", p("daily_demand.csv")}, {"event_source", src}}, false},
                       [&](nlohmann::ordered_json&) {
                           auto catalog = load_catalog();
                           EventCalendar cal(catalog, config_.data_range());
                           auto series = to_series(parse_daily_demand_csv(read_file(p("daily_demand.csv"))));
                           write("decomposition.csv", decomposition_csv(decompose_series(series, cal, config_.baseline)));
                           return std::vector<std::string>{"decomposition.csv"};
                       });
    }

    static std::string prediction_file(const std::string& model, const AblationConfig& a) {
        return "predictions/" + model + "_" + a.name() + ".csv";
    }

    // Writes predictions, reasoning and failure logs for one ablation.
    std::vector<std::string> write_llm_outputs(const PredictOutcome& po, const AblationConfig& a,
                                               nlohmann::ordered_json& extra) {
        std::vector<ExternalPrediction> rows;
        std::string reasoning, failures;
        for (const auto& d : po.days) {
            rows.push_back({d.result.date,
                            {static_cast<double>(d.result.pickup), static_cast<double>(d.result.dropoff)},
                            std::string(kLlmModelName)});
            nlohmann::ordered_json j;
            j["date"] = d.result.date.str();
            j["pickup"] = d.result.pickup;
            j["dropoff"] = d.result.dropoff;
            j["fallback"] = d.fallback;
            j["request_digest"] = d.request_digest;
            j["reasoning"] = d.result.reasoning;
            reasoning += j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
            for (const auto& f : d.failures) failures += parse_failure_jsonl(f);
        }
        const std::string stem = std::string(kLlmModelName) + "_" + a.name();
        std::vector<std::string> outs{prediction_file(std::string(kLlmModelName), a), "reasoning/" + stem + ".jsonl",
                                      "parse_failures/" + stem + ".jsonl"};
        write(outs[0], prediction_csv(rows));
        write(outs[1], reasoning);
        write(outs[2], failures);
        extra[a.name()] = {{"days", po.days.size()}, {"fallbacks", po.fallbacks}, {"fallback_rate", po.fallback_rate()}};
        return outs;
    }

    void check_budget(const PredictOutcome& po, const AblationConfig& a) const {
        if (po.fallback_rate() > config_.fallback_budget)
            throw FallbackBudgetError("parse-fallback rate " + format_fixed(po.fallback_rate(), 3) + " at " + a.name() +
                                          " exceeds the budget of " + format_fixed(config_.fallback_budget, 3),
                                      po.fallback_rate(), config_.fallback_budget);
    }

    StageOutcome run_predict() {
        const bool need_fmt = config_.ablation.uses_formatted_text();
        require(Stage::predict, Stage::decompose, "decomposition.csv");
        StageInputs in{{{"decomposition.csv", p("decomposition.csv")},
                        {"daily_demand.csv", p("daily_demand.csv")},
                        {"event_source", config_.resolve(config_.event_source)}},
                       true};
        if (need_fmt) {
            require(Stage::predict, Stage::format_events, "formatted_events.json");
            in.files.emplace_back("formatted_events.json", p("formatted_events.json"));
        }
        std::optional<PredictOutcome> po;
        auto outcome = guarded(Stage::predict, in, [&](nlohmann::ordered_json& extra) {
            auto L = load_for(Stage::predict, need_fmt);
            auto dates = test_dates();
            po = predict_range(L->context(config_), dates, config_.ablation, builder_, backend(),
                               config_.backend.max_in_flight);
            auto outs = write_llm_outputs(*po, config_.ablation, extra);
            check_budget(*po, config_.ablation);
            return outs;
        });
        return outcome;
    }

    std::vector<PredictionRecord> llm_records(const Loaded& L, const AblationConfig& a, Stage stage) const {
        const auto rel = prediction_file(std::string(kLlmModelName), a);
        if (!std::filesystem::exists(p(rel)))
            throw PreconditionError(std::string(to_string(stage)), "predict", rel + " not found");
        return join_with_truth(parse_prediction_csv(read_file(p(rel))), L.demand);
    }

    StageOutcome run_evaluate() {
        const bool need_fmt = config_.ablation.uses_formatted_text();
        require(Stage::evaluate, Stage::decompose, "decomposition.csv");
        const auto llm_rel = prediction_file(std::string(kLlmModelName), config_.ablation);
        if (!std::filesystem::exists(p(llm_rel)))
            throw PreconditionError("evaluate", "predict", llm_rel + " not found");
        StageInputs in{{{"decomposition.csv", p("decomposition.csv")},
                        {"daily_demand.csv", p("daily_demand.csv")},
                        {"event_source", config_.resolve(config_.event_source)},
                        {llm_rel, p(llm_rel)}},
                       false};
        if (need_fmt) in.files.emplace_back("formatted_events.json", p("formatted_events.json"));
        for (const auto& e : config_.external_predictions) in.files.emplace_back(e.generic_string(), config_.resolve(e));

        return guarded(Stage::evaluate, in, [&](nlohmann::ordered_json& extra) {
            auto L = load_for(Stage::evaluate, need_fmt);
            auto ctx = L->context(config_);
            const auto train = train_dates(*L);
            const auto test = test_dates();
            std::vector<std::string> outs;
            std::vector<MetricsReport> reports;

            auto emit = [&](const std::string& model, const AblationConfig& a, const std::vector<PredictionRecord>& recs) {
                reports.push_back(segment_report(recs, L->calendar, model, a));
                const auto rel = "plots/" + model + "_" + a.name() + ".csv";
                write(rel, plot_csv(recs, L->calendar));
                outs.push_back(rel);
            };
            emit(std::string(kLlmModelName), config_.ablation, llm_records(*L, config_.ablation, Stage::evaluate));

            AblationConfig classical_ab = config_.ablation;
            if (!classical_applies(classical_ab)) classical_ab.event_features = EventFeatures::c_t_h;
            extra["classical_ablation"] = classical_ab.name();
            for (auto kind : {ClassicalKind::linear, ClassicalKind::gbdt, ClassicalKind::historical_average}) {
                const std::string name(to_string(kind));
                auto fit = fit_classical(kind, ctx, train, test, classical_ab, config_.classical);
                std::vector<ExternalPrediction> rows;
                for (const auto& r : fit.records) rows.push_back({r.date, r.predicted, name});
                const auto rel = prediction_file(name, classical_ab);
                write(rel, prediction_csv(rows));
                outs.push_back(rel);
                for (const auto& [flow, doc] : fit.models) {
                    const auto mrel = "models/" + name + "_" + classical_ab.name() + "_" + flow + ".json";
                    write(mrel, doc.dump(1) + "\n");
                    outs.push_back(mrel);
                }
                emit(name, classical_ab, fit.records);
            }
            for (const auto& e : config_.external_predictions) {
                auto preds = parse_prediction_csv(read_file(config_.resolve(e)));
                if (preds.empty()) continue;
                emit(preds.front().model_name, config_.ablation, join_with_truth(preds, L->demand));
            }
            write("report.csv", report_csv(reports));
            write("report_flows.csv", report_flows_csv(reports));
            outs.insert(outs.begin(), {"report.csv", "report_flows.csv"});
            return outs;
        });
    }

    StageOutcome run_ablate() {
        require(Stage::ablate, Stage::decompose, "decomposition.csv");
        require(Stage::ablate, Stage::format_events, "formatted_events.json");
        StageInputs in{{{"decomposition.csv", p("decomposition.csv")},
                        {"daily_demand.csv", p("daily_demand.csv")},
                        {"event_source", config_.resolve(config_.event_source)},
                        {"formatted_events.json", p("formatted_events.json")}},
                       true};
        return guarded(Stage::ablate, in, [&](nlohmann::ordered_json& extra) {
            auto L = load_for(Stage::ablate, true);
            auto ctx = L->context(config_);
            const auto train = train_dates(*L);
            const auto test = test_dates();
            std::vector<std::string> outs;
            std::vector<MetricsReport> reports;
            std::vector<std::pair<AblationConfig, PredictOutcome>> llm_runs;

            const auto grid = canonical_ablation_grid();
            auto llm = run_ablation(
                grid,
                [&](const AblationConfig& a) -> std::optional<std::vector<PredictionRecord>> {
                    auto po = predict_range(ctx, test, a, builder_, backend(), config_.backend.max_in_flight);
                    auto recs = to_records(po, L->demand);
                    llm_runs.emplace_back(a, std::move(po));
                    return recs;
                },
                L->calendar, std::string(kLlmModelName));
            reports.insert(reports.end(), llm.begin(), llm.end());
            nlohmann::ordered_json stats = nlohmann::ordered_json::object();
            for (const auto& [a, po] : llm_runs) {
                auto o = write_llm_outputs(po, a, stats);
                outs.insert(outs.end(), o.begin(), o.end());
            }
            extra["llm"] = stats;

            const auto cgrid = classical_ablation_grid();
            for (auto kind : {ClassicalKind::linear, ClassicalKind::gbdt}) {
                auto r = run_ablation(
                    cgrid,
                    [&](const AblationConfig& a) -> std::optional<std::vector<PredictionRecord>> {
                        if (!classical_applies(a)) return std::nullopt;
                        return fit_classical(kind, ctx, train, test, a, config_.classical).records;
                    },
                    L->calendar, std::string(to_string(kind)));
                reports.insert(reports.end(), r.begin(), r.end());
            }
            write("ablation.csv", report_csv(reports));
            write("ablation_flows.csv", report_flows_csv(reports));
            outs.insert(outs.begin(), {"ablation.csv", "ablation_flows.csv"});
            for (const auto& [a, po] : llm_runs) check_budget(po, a);
            return outs;
        });
    }

    StageOutcome run_report() {
        require(Stage::report, Stage::evaluate, "report.csv");
        StageInputs in{{{"report.csv", p("report.csv")}}, false};
        const bool has_ablation = std::filesystem::exists(p("ablation.csv"));
        if (has_ablation) in.files.emplace_back("ablation.csv", p("ablation.csv"));
        return guarded(Stage::report, in, [&](nlohmann::ordered_json&) {
            std::string md = "# Prediction report: " + config_.venue.name + "\n\n";
            md += "Test range " + config_.test_range.first.str() + " to " + config_.test_range.last.str() +
                  ", history window T = " + std::to_string(config_.T) + ", configured features " +
                  config_.ablation.name() + ".\n\n";
            auto table = [](const CsvTable& t, bool event_only) {
                std::string s = "| model | features | segment | n | RMSE | MAE | MAPE | R2 |\n";
                s += "|---|---|---|---|---|---|---|---|\n";
                for (const auto& row : t.rows) {
                    if (row.size() < 8) continue;
                    if (event_only && row[2] != "event") continue;
                    s += "|";
                    for (std::size_t i = 0; i < 8; ++i) s += " " + (row[i].empty() ? std::string("-") : row[i]) + " |";
                    s += "\n";
                }
                return s;
            };
            md += "## Model comparison\n\n" + table(parse_csv(read_file(p("report.csv"))), false) + "\n";
            if (has_ablation)
                md += "## Feature ablation (event days)\n\n" + table(parse_csv(read_file(p("ablation.csv"))), true) + "\n";
            md += "Absent cells (-) mark undefined metrics or configurations that do not apply to a model.\n";
            write("summary.md", md);
            return std::vector<std::string>{"summary.md"};
        });
    }

    PipelineConfig config_;
    BackendHandle override_;
    BackendHandle backend_;
    std::shared_ptr<CachedBackend> cache_;
    std::filesystem::path out_;
    PromptTemplates templates_;
    PromptBuilder builder_;
};

// ---------------------------------------------------------------------------
// Bundled dataset
// ---------------------------------------------------------------------------

struct SyntheticDatasetSpec {
    SyntheticSpec world;
    DateRange train{Date{2014, 3, 1}, Date{2014, 5, 31}};
    DateRange test{Date{2014, 6, 1}, Date{2014, 6, 30}};
};

/// Writes trips.csv, events.json, config.json and a mock script recorded
/// from the heuristic backend, so the directory runs end to end offline.
inline void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDatasetSpec& spec) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    auto world = generate_synthetic_world(spec.world);
    VenueConfig venue{"Barclays Center", GeoPoint{40.68265, -73.97469}};
    write_file_atomic(dir / "trips.csv", render_trip_csv(world, venue, spec.world.seed + 1));
    write_file_atomic(dir / "events.json", serialize_event_records(world.events));

    nlohmann::ordered_json cfg;
    cfg["venue"] = {{"name", venue.name}, {"lat", venue.center.lat()}, {"lon", venue.center.lon()},
                    {"radius_m", venue.radius_m}, {"timezone", venue.timezone}};
    cfg["trip_source"] = "trips.csv";
    cfg["event_source"] = "events.json";
    cfg["train_range"] = {{"first", spec.train.first.str()}, {"last", spec.train.last.str()}};
    cfg["test_range"] = {{"first", spec.test.first.str()}, {"last", spec.test.last.str()}};
    cfg["T"] = 28;
    cfg["baseline"] = {{"lookback_weeks", 8}, {"min_samples", 2}, {"fallback", "expand_window"}};
    cfg["backend"] = {{"kind", "mock"}, {"mock_script", "mock_script.json"}, {"model", "gpt-4"}, {"max_in_flight", 4}};
    cfg["cache_dir"] = "cache";
    cfg["output_dir"] = "out";
    cfg["ablation"] = "c_t_h_prime+r_i";
    cfg["fallback_budget"] = 0.2;
    cfg["baselines"] = {{"ridge_lambda", 1.0}, {"time_bins", 24}, {"text_dim", 32},
                        {"gbdt", {{"n_trees", 200}, {"max_depth", 3}, {"learning_rate", 0.05}, {"min_leaf", 5}}}};
    write_file_atomic(dir / "config.json", cfg.dump(2) + "\n");

    // Record the script in a scratch output directory.
    auto scratch = fs::temp_directory_path() / ("mpe-record-" + sha256_hex(dir.string()).substr(0, 12));
    fs::remove_all(scratch);
    auto config = PipelineConfig::load(dir / "config.json");
    config.output_dir = scratch;
    config.cache_dir.clear();
    auto recorder = std::make_shared<RecordingBackend>(std::make_shared<HeuristicBackend>());
    Pipeline pipe(config, recorder);
    for (auto s : {Stage::ingest, Stage::format_events, Stage::decompose, Stage::predict, Stage::ablate}) pipe.run(s);
    write_file_atomic(dir / "mock_script.json", recorder->to_mock_script());
    fs::remove_all(scratch);
}

}  // namespace mpe
