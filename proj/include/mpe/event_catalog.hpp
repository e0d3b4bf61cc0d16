#pragma once

// Event listings: typed records parsed from a JSON catalog, per-day lookup
// and the LLM-standardized form of an event.

#include "mpe/core.hpp"

#include <json.hpp>

#include <map>
#include <span>

namespace mpe {

struct EventRecord {
    std::string title;
    std::optional<std::string> description;
    Date date;
    TimeOfDay start_time;
    TimeOfDay end_time;

    bool operator==(const EventRecord&) const = default;
};

/// Stable identity of an event, used to join formatted summaries back onto
/// catalog entries.
inline std::string event_key(const EventRecord& e) {
    std::string k = e.date.str() + '|' + e.start_time.str() + '|' + e.end_time.str() + '|' + e.title + '|';
    if (e.description) k += "D:" + *e.description;
    return sha256_hex(k);
}

struct FormattedEvent {
    std::string category;
    std::string summary;
    EventRecord source;

    bool operator==(const FormattedEvent&) const = default;
};

struct DayEvents {
    Date date;
    std::vector<EventRecord> events;

    [[nodiscard]] bool is_event_day() const noexcept { return !events.empty(); }
};

inline void sort_day_events(std::vector<EventRecord>& events) {
    std::stable_sort(events.begin(), events.end(), [](const EventRecord& a, const EventRecord& b) {
        if (a.start_time != b.start_time) return a.start_time < b.start_time;
        return a.title < b.title;
    });
}

// ---------------------------------------------------------------------------
// Catalog document
// ---------------------------------------------------------------------------

struct RecordError {
    std::size_t index = 0;  // 0-based position in the catalog array
    std::string reason;
};

struct EventParseResult {
    std::vector<EventRecord> records;
    std::vector<RecordError> errors;
};

/// Parses the catalog document: a JSON array of event objects. Entries that
/// violate record invariants are reported by index; a document that is not
/// a JSON array of objects is fatal (SchemaError).
inline EventParseResult parse_event_records(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(std::string("event catalog is not valid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw SchemaError("event catalog must be a JSON array");

    EventParseResult out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& obj = doc[i];
        if (!obj.is_object()) throw SchemaError("event catalog entry " + std::to_string(i) + " is not an object");
        auto fail = [&](std::string why) { out.errors.push_back({i, std::move(why)}); };
        auto str_field = [&](const char* key) -> std::optional<std::string> {
            auto it = obj.find(key);
            if (it == obj.end() || !it->is_string()) return std::nullopt;
            return it->get<std::string>();
        };

        auto title = str_field("title");
        if (!title) {
            fail("missing title");
            continue;
        }
        if (trim(*title).empty()) {
            fail("empty title");
            continue;
        }
        auto date_text = str_field("date");
        if (!date_text) {
            fail("missing date");
            continue;
        }
        auto date = Date::try_parse(*date_text);
        if (!date) {
            fail("invalid date '" + *date_text + "'");
            continue;
        }
        auto start_text = str_field("start_time"), end_text = str_field("end_time");
        if (!start_text || !end_text) {
            fail("missing start_time or end_time");
            continue;
        }
        auto start = TimeOfDay::try_parse(*start_text), end = TimeOfDay::try_parse(*end_text);
        if (!start || !end) {
            fail("invalid time of day");
            continue;
        }
        if (*end < *start) {
            fail("end_time before start_time");
            continue;
        }
        std::optional<std::string> description;
        if (auto it = obj.find("description"); it != obj.end() && !it->is_null()) {
            if (!it->is_string()) {
                fail("description must be a string or null");
                continue;
            }
            auto d = it->get<std::string>();
            if (!d.empty()) description = std::move(d);
        }
        out.records.push_back({std::string(trim(*title)), std::move(description), *date, *start, *end});
    }
    return out;
}

inline nlohmann::ordered_json event_to_json(const EventRecord& e) {
    nlohmann::ordered_json j;
    j["title"] = e.title;
    j["description"] = e.description ? nlohmann::ordered_json(*e.description) : nlohmann::ordered_json(nullptr);
    j["date"] = e.date.str();
    j["start_time"] = e.start_time.str();
    j["end_time"] = e.end_time.str();
    return j;
}

inline std::string serialize_event_records(std::span<const EventRecord> records) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& e : records) arr.push_back(event_to_json(e));
    return arr.dump(2) + "\n";
}

/// All events of `catalog` on `date`, ordered by start time then title.
inline DayEvents events_for_day(std::span<const EventRecord> catalog, Date date) {
    DayEvents day{date, {}};
    for (const auto& e : catalog)
        if (e.date == date) day.events.push_back(e);
    sort_day_events(day.events);
    return day;
}

/// Whitespace-delimited token count; an absent description counts 0.
inline std::size_t description_word_count(const std::optional<std::string>& description) {
    return description ? split_whitespace(*description).size() : 0;
}

/// Date-indexed view of a catalog. When constructed with a coverage range,
/// `covers()` distinguishes "no events that day" from "outside the catalog".
class EventCalendar {
public:
    EventCalendar() = default;

    explicit EventCalendar(std::span<const EventRecord> catalog, std::optional<DateRange> coverage = std::nullopt)
        : coverage_(coverage) {
        for (const auto& e : catalog) by_date_[e.date].push_back(e);
        for (auto& [d, evs] : by_date_) sort_day_events(evs);
    }

    [[nodiscard]] bool covers(Date d) const { return !coverage_ || coverage_->contains(d); }

    [[nodiscard]] DayEvents day(Date d) const {
        auto it = by_date_.find(d);
        return {d, it == by_date_.end() ? std::vector<EventRecord>{} : it->second};
    }

    [[nodiscard]] bool is_event_day(Date d) const { return by_date_.count(d) != 0; }

    [[nodiscard]] std::size_t event_day_count() const { return by_date_.size(); }

    [[nodiscard]] std::size_t event_count() const {
        std::size_t n = 0;
        for (const auto& [d, evs] : by_date_) n += evs.size();
        return n;
    }

    [[nodiscard]] const std::optional<DateRange>& coverage() const { return coverage_; }

private:
    std::map<Date, std::vector<EventRecord>> by_date_;
    std::optional<DateRange> coverage_;
};

}  // namespace mpe
