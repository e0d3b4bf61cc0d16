#pragma once

// Prompt rendering for the two LLM tasks: standardizing an event listing and
// predicting next-day demand from a history window. Rendering is a pure
// function of its inputs; the frozen wording lives in PromptTemplates and can
// be overridden from a directory of plain-text files.

#include "mpe/decomposition.hpp"
#include "mpe/llm_gateway.hpp"

namespace mpe {

// ---------------------------------------------------------------------------
// Ablation configuration
// ---------------------------------------------------------------------------

/// Event feature sets: none, count, count+timing, count+timing+raw text,
/// count+timing+formatted text.
enum class EventFeatures { NA, c, c_t, c_t_h, c_t_h_prime };

/// Demand features: original demand (o) or regular baseline + irregular
/// deviation (r_i).
enum class DemandFeatures { o, r_i };

struct AblationConfig {
    EventFeatures event_features = EventFeatures::c_t_h_prime;
    DemandFeatures demand_features = DemandFeatures::r_i;

    [[nodiscard]] bool uses_events() const { return event_features != EventFeatures::NA; }
    [[nodiscard]] bool uses_timing() const { return event_features >= EventFeatures::c_t; }
    [[nodiscard]] bool uses_raw_text() const { return event_features == EventFeatures::c_t_h; }
    [[nodiscard]] bool uses_formatted_text() const { return event_features == EventFeatures::c_t_h_prime; }
    [[nodiscard]] bool decomposed() const { return demand_features == DemandFeatures::r_i; }

    [[nodiscard]] std::string name() const {
        static constexpr std::array<std::string_view, 5> ev{"NA", "c", "c_t", "c_t_h", "c_t_h_prime"};
        return std::string(ev[static_cast<std::size_t>(event_features)]) + "+" +
               (demand_features == DemandFeatures::r_i ? "r_i" : "o");
    }

    /// Accepts "<events>[+<demand>]", e.g. "c_t", "NA+o", "c_t_h_prime+r_i".
    static AblationConfig parse(std::string_view s) {
        AblationConfig a;
        auto plus = s.find('+');
        auto ev = trim(s.substr(0, plus));
        if (ev == "NA") a.event_features = EventFeatures::NA;
        else if (ev == "c") a.event_features = EventFeatures::c;
        else if (ev == "c_t") a.event_features = EventFeatures::c_t;
        else if (ev == "c_t_h") a.event_features = EventFeatures::c_t_h;
        else if (ev == "c_t_h_prime") a.event_features = EventFeatures::c_t_h_prime;
        else throw ConfigError("unknown event feature set '" + std::string(ev) + "'");
        if (plus != std::string_view::npos) {
            auto dm = trim(s.substr(plus + 1));
            if (dm == "o") a.demand_features = DemandFeatures::o;
            else if (dm == "r_i") a.demand_features = DemandFeatures::r_i;
            else throw ConfigError("unknown demand feature set '" + std::string(dm) + "'");
        }
        return a;
    }

    bool operator==(const AblationConfig&) const = default;
};

/// The five event-feature sets under r_i, then original demand at the full
/// event set.
inline std::vector<AblationConfig> canonical_ablation_grid() {
    return {{EventFeatures::NA, DemandFeatures::r_i},          {EventFeatures::c, DemandFeatures::r_i},
            {EventFeatures::c_t, DemandFeatures::r_i},         {EventFeatures::c_t_h, DemandFeatures::r_i},
            {EventFeatures::c_t_h_prime, DemandFeatures::r_i}, {EventFeatures::c_t_h_prime, DemandFeatures::o}};
}

// ---------------------------------------------------------------------------
// Inputs
// ---------------------------------------------------------------------------

/// One day as shown to the model. `formatted`, when non-empty, is parallel
/// to `events`. History days carry a decomposition; the target day does not.
struct DayContext {
    Date date;
    std::vector<EventRecord> events;
    std::vector<FormattedEvent> formatted;
    std::optional<DemandDecomposition> decomposition;

    [[nodiscard]] std::string_view weekday() const { return date.weekday_name(); }
};

struct HistoryWindow {
    std::vector<DayContext> days;

    /// Throws unless the window holds exactly `T` consecutive days ending the
    /// day before `target`, each with a decomposition.
    void validate(Date target, std::size_t T) const {
        if (T == 0) throw ArgumentError("history window length must be positive");
        if (days.size() != T)
            throw ArgumentError("history window has " + std::to_string(days.size()) + " days, expected " +
                                std::to_string(T));
        for (std::size_t i = 0; i < days.size(); ++i) {
            const Date expected = target - static_cast<int>(T - i);
            if (days[i].date != expected)
                throw ArgumentError("history window day " + std::to_string(i) + " is " + days[i].date.str() +
                                    ", expected " + expected.str());
            if (!days[i].decomposition)
                throw ArgumentError("history day " + days[i].date.str() + " lacks a decomposition");
        }
    }
};

struct PromptOptions {
    std::string venue_name = "Barclays Center";
    std::size_t max_description_words = 500;
    std::string model = "gpt-4";
    double temperature = 0.0;
    std::optional<int> max_tokens;
};

// ---------------------------------------------------------------------------
// Templates
// ---------------------------------------------------------------------------

/// Named template pieces with {{placeholder}} slots.
class PromptTemplates {
public:
    PromptTemplates() {
        pieces_["event_format"] =
            "You are given information about a public event held at {{venue}}. Raw event listings vary widely in "
            "structure and length: some consist of a bare title, others of long promotional text. Standardize the "
            "event into a concise format.\n"
            "\n"
            "Event title: {{title}}\n"
            "Event description: {{description}}\n"
            "\n"
            "Based on your knowledge, identify the category of the event (for example NBA Basketball Game, Pop Music "
            "Concert or Family Show) and summarize, in one or two sentences, the information most relevant to the "
            "size of the crowd it will attract, such as the performers or teams and their popularity. Omit ticketing "
            "and promotional details.\n"
            "\n"
            "Reply exactly in the following form and nothing else:\n"
            "[Category] <event category> [Summary] <one or two sentences>";
        pieces_["prediction_instruction"] =
            "You are an expert in urban mobility analysis. Your task is to predict the daily taxi travel demand in "
            "the vicinity of {{venue}} for the next day: the number of pickups (trips departing from the area) and "
            "dropoffs (trips arriving in the area). You are given the travel demand and the public events at the "
            "venue over the past {{T}} days, followed by the events scheduled for the next day.\n"
            "{{demand_note}}\n"
            "Reply exactly in the following form:\n"
            "[pickup] <integer> [dropoff] <integer> [reasoning] <your step-by-step reasoning>";
        pieces_["prediction_instruction_no_events"] =
            "You are an expert in urban mobility analysis. Your task is to predict the daily taxi travel demand in "
            "the vicinity of {{venue}} for the next day: the number of pickups (trips departing from the area) and "
            "dropoffs (trips arriving in the area). You are given the travel demand over the past {{T}} days.\n"
            "{{demand_note}}\n"
            "Reply exactly in the following form:\n"
            "[pickup] <integer> [dropoff] <integer> [reasoning] <your step-by-step reasoning>";
        pieces_["demand_note_r_i"] =
            "Each past day's demand is split into the historical average of the same weekday on days without "
            "events (the regular pattern) and the deviation of the actual demand from that average (the irregular, "
            "event-related part).";
        pieces_["demand_note_r_i_no_events"] =
            "Each past day's demand is split into the historical average of the same weekday (the regular pattern) "
            "and the deviation of the actual demand from that average.";
        pieces_["demand_note_o"] = "Each past day's demand is given as the actual numbers of pickups and dropoffs.";
        pieces_["guidelines"] =
            "Guidelines:\n"
            "1. Make the prediction by considering both positive and negative factors affecting travel demand, "
            "including date, time, event category, and performer popularity.\n"
            "2. Make the prediction by learning from similar historical days, such as days with events of the same "
            "category or by the same performers.\n"
            "3. Please think step-by-step before making the prediction, and give your reasoning after [reasoning].";
        pieces_["guidelines_no_events"] =
            "Guidelines:\n"
            "1. Make the prediction by considering both positive and negative factors affecting travel demand, "
            "including date and day of the week.\n"
            "2. Make the prediction by learning from similar historical days.\n"
            "3. Please think step-by-step before making the prediction, and give your reasoning after [reasoning].";
        pieces_["prediction_format_reminder"] =
            "Your previous reply did not follow the required format. Reply again exactly in the form:\n"
            "[pickup] <integer> [dropoff] <integer> [reasoning] <your step-by-step reasoning>";
        pieces_["event_format_reminder"] =
            "Your previous reply did not follow the required format. Reply again exactly in the form:\n"
            "[Category] <event category> [Summary] <one or two sentences>";
    }

    /// Replaces pieces with `<name>.txt` files found in `dir`. Unknown file
    /// names are rejected so a typo does not silently fall back to defaults.
    static PromptTemplates load_overrides(const std::filesystem::path& dir) {
        PromptTemplates t;
        std::error_code ec;
        if (!std::filesystem::is_directory(dir, ec)) throw ConfigError("template directory not found: " + dir.string());
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
            auto name = entry.path().stem().string();
            if (!t.pieces_.count(name)) throw ConfigError("unknown template override '" + name + "'");
            auto text = read_file(entry.path());
            while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
            t.pieces_[name] = std::move(text);
        }
        return t;
    }

    [[nodiscard]] const std::string& piece(const std::string& name) const {
        auto it = pieces_.find(name);
        if (it == pieces_.end()) throw ArgumentError("no template piece '" + name + "'");
        return it->second;
    }

    [[nodiscard]] std::string render(const std::string& name,
                                     const std::vector<std::pair<std::string, std::string>>& vars) const {
        std::string out = piece(name);
        for (const auto& [key, value] : vars) {
            const std::string slot = "{{" + key + "}}";
            for (auto pos = out.find(slot); pos != std::string::npos; pos = out.find(slot, pos + value.size()))
                out.replace(pos, slot.size(), value);
        }
        return out;
    }

    /// Digest over every piece, recorded in run manifests.
    [[nodiscard]] std::string digest() const {
        std::string all;
        for (const auto& [k, v] : pieces_) {
            all += k;
            all += '\0';
            all += v;
            all += '\0';
        }
        return sha256_hex(all);
    }

private:
    std::map<std::string, std::string> pieces_;
};

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline constexpr std::string_view kTruncationMarker = "[...]";

/// Verbatim when within `cap` words; otherwise the first `cap` words joined by
/// single spaces followed by the truncation marker.
inline std::string truncate_words(std::string_view text, std::size_t cap) {
    auto words = split_whitespace(text);
    if (words.size() <= cap) return std::string(text);
    std::string out;
    for (std::size_t i = 0; i < cap; ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    out += ' ';
    out += kTruncationMarker;
    return out;
}

namespace detail {

inline std::string plural_events(std::size_t n) {
    if (n == 0) return "no event";
    return std::to_string(n) + (n == 1 ? " event" : " events");
}

inline std::string pair_text(long long pickup, long long dropoff) {
    return "pickup " + std::to_string(pickup) + ", dropoff " + std::to_string(dropoff);
}

inline std::string signed_pair_text(long long pickup, long long dropoff) {
    return "pickup " + signed_int(pickup) + ", dropoff " + signed_int(dropoff);
}

}  // namespace detail

/// Event description for one day under the given feature set. Empty under
/// NA. Each richer set extends the text of the poorer one it builds on.
inline std::string render_event_block(const std::vector<EventRecord>& events,
                                      const std::vector<FormattedEvent>& formatted, const AblationConfig& ablation,
                                      std::size_t max_description_words = 500) {
    if (!ablation.uses_events()) return {};
    std::string out = detail::plural_events(events.size());
    if (events.empty() || !ablation.uses_timing()) return out;
    out += ": [time] ";
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i) out += ", ";
        out += events[i].start_time.str() + "-" + events[i].end_time.str();
    }
    if (ablation.uses_raw_text()) {
        for (const auto& e : events) {
            out += " [Title] " + collapse_whitespace(e.title);
            if (e.description)
                out += " [Description] " + collapse_whitespace(truncate_words(*e.description, max_description_words));
        }
    } else if (ablation.uses_formatted_text()) {
        if (formatted.size() != events.size())
            throw ArgumentError("formatted events missing for " + events.front().date.str());
        std::vector<std::pair<std::string, std::string>> seen;
        for (const auto& f : formatted) {
            auto item = std::make_pair(collapse_whitespace(f.category), collapse_whitespace(f.summary));
            if (std::find(seen.begin(), seen.end(), item) != seen.end()) continue;
            out += " [Category] " + item.first + " [Summary] " + item.second;
            seen.push_back(std::move(item));
        }
    }
    return out;
}

/// One history day: date, weekday, rounded demand figures and the event
/// block allowed by the ablation.
inline std::string render_history_line(const DayContext& day, const AblationConfig& ablation,
                                       std::size_t max_description_words = 500) {
    if (!day.decomposition) throw ArgumentError("history day " + day.date.str() + " lacks a decomposition");
    const auto& d = *day.decomposition;
    std::string line = day.date.str() + " " + std::string(day.weekday());
    if (ablation.decomposed()) {
        line += " | historical average: " +
                detail::pair_text(round_half_up(d.baseline.outflow), round_half_up(d.baseline.inflow));
        line += " | deviation: " +
                detail::signed_pair_text(round_half_up(d.deviation.outflow), round_half_up(d.deviation.inflow));
    } else {
        line += " | demand: " + detail::pair_text(static_cast<long long>(d.actual.outflow),
                                                   static_cast<long long>(d.actual.inflow));
    }
    if (ablation.uses_events())
        line += " | " + render_event_block(day.events, day.formatted, ablation, max_description_words);
    return line;
}

class PromptBuilder {
public:
    PromptBuilder() = default;
    explicit PromptBuilder(PromptOptions options, PromptTemplates templates = {})
        : options_(std::move(options)), templates_(std::move(templates)) {}

    [[nodiscard]] const PromptOptions& options() const { return options_; }
    [[nodiscard]] const PromptTemplates& templates() const { return templates_; }

    [[nodiscard]] ChatRequest event_format_prompt(const EventRecord& event) const {
        const std::string description =
            event.description ? truncate_words(*event.description, options_.max_description_words) : "NA";
        return single_message(templates_.render(
            "event_format", {{"venue", options_.venue_name}, {"title", event.title}, {"description", description}}));
    }

    [[nodiscard]] ChatRequest prediction_prompt(const HistoryWindow& window, const DayContext& target,
                                                DemandPair baseline, const AblationConfig& ablation) const {
        if (window.days.empty()) throw ArgumentError("history window is empty");
        if (target.date != window.days.back().date + 1)
            throw ArgumentError("target " + target.date.str() + " does not follow the window ending " +
                                window.days.back().date.str());
        window.validate(target.date, window.days.size());
        if (target.decomposition) throw ArgumentError("target day must not carry observed demand");

        const bool events = ablation.uses_events();
        const std::string T = std::to_string(window.days.size());
        std::string note_name = ablation.decomposed() ? (events ? "demand_note_r_i" : "demand_note_r_i_no_events")
                                                      : "demand_note_o";
        std::string prompt = templates_.render(
            events ? "prediction_instruction" : "prediction_instruction_no_events",
            {{"venue", options_.venue_name}, {"T", T}, {"demand_note", templates_.piece(note_name)}});

        prompt += "\n\nPast " + T + " days (oldest first):\n";
        for (const auto& day : window.days)
            prompt += render_history_line(day, ablation, options_.max_description_words) + "\n";

        prompt += "\nNext day to predict:\n";
        prompt += target.date.str() + " " + std::string(target.weekday());
        if (events)
            prompt += " | " + render_event_block(target.events, target.formatted, ablation,
                                                 options_.max_description_words);
        prompt += "\n";
        if (ablation.decomposed()) {
            prompt += events ? "Expected demand if no event occurs (historical average): "
                             : "Expected demand from the historical average of this weekday: ";
            prompt += detail::pair_text(round_half_up(baseline.outflow), round_half_up(baseline.inflow)) + "\n";
        }
        prompt += "\n" + templates_.piece(events ? "guidelines" : "guidelines_no_events");
        return single_message(std::move(prompt));
    }

    /// Follow-up request after a reply that could not be parsed.
    [[nodiscard]] ChatRequest with_format_reminder(const ChatRequest& original, const std::string& bad_reply,
                                                   bool prediction) const {
        ChatRequest r = original;
        r.messages.push_back({Role::assistant, bad_reply.empty() ? std::string("(empty reply)") : bad_reply});
        r.messages.push_back(
            {Role::user, templates_.piece(prediction ? "prediction_format_reminder" : "event_format_reminder")});
        return r;
    }

private:
    [[nodiscard]] ChatRequest single_message(std::string content) const {
        ChatRequest r;
        r.model = options_.model;
        r.temperature = options_.temperature;
        r.max_tokens = options_.max_tokens;
        r.messages.push_back({Role::user, std::move(content)});
        return r;
    }

    PromptOptions options_;
    PromptTemplates templates_;
};

inline ChatRequest build_event_format_prompt(const EventRecord& event, const PromptOptions& options = {}) {
    return PromptBuilder(options).event_format_prompt(event);
}

inline ChatRequest build_prediction_prompt(const HistoryWindow& window, const DayContext& target, DemandPair baseline,
                                           const AblationConfig& ablation, const PromptOptions& options = {}) {
    return PromptBuilder(options).prediction_prompt(window, target, baseline, ablation);
}

/// ISO dates in `prompt` that are on or after `target`, ignoring the
/// target's own header line. Empty means the prompt is causal.
inline std::vector<std::string> future_dates_in_prompt(std::string_view prompt, Date target) {
    std::vector<std::string> violations;
    const std::string target_header = "\nNext day to predict:\n" + target.str();
    auto header_pos = prompt.find(target_header);
    const std::size_t skip_at =
        header_pos == std::string_view::npos ? std::string_view::npos : header_pos + target_header.size() - 10;
    for (std::size_t i = 0; i + 10 <= prompt.size(); ++i) {
        if (i == skip_at) continue;
        if (auto d = Date::try_parse(prompt.substr(i, 10)); d && *d >= target) violations.push_back(d->str());
    }
    return violations;
}

}  // namespace mpe
