#pragma once

// Extraction of structured values from free-form LLM replies. Tags are
// matched case-insensitively with optional whitespace inside the brackets;
// the first occurrence of each tag wins. Every failure is reported as a
// MalformedReplyError carrying the raw text.

#include "mpe/event_catalog.hpp"

#include <json.hpp>

namespace mpe {

struct TagSpan {
    std::size_t begin = 0;  // position of '['
    std::size_t end = 0;    // one past ']'
};

/// First `[name]` tag at or after `from`, tolerating whitespace and case.
inline std::optional<TagSpan> find_tag(std::string_view text, std::string_view name, std::size_t from = 0) {
    for (std::size_t i = text.find('[', from); i != std::string_view::npos; i = text.find('[', i + 1)) {
        std::size_t j = i + 1;
        while (j < text.size() && is_space(text[j])) ++j;
        if (j + name.size() > text.size()) return std::nullopt;
        bool match = true;
        for (std::size_t k = 0; k < name.size(); ++k) {
            char c = text[j + k];
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            if (c != name[k]) {
                match = false;
                break;
            }
        }
        if (!match) continue;
        j += name.size();
        while (j < text.size() && is_space(text[j])) ++j;
        if (j < text.size() && text[j] == ']') return TagSpan{i, j + 1};
    }
    return std::nullopt;
}

/// Parses "[Category] <label> [Summary] <text>". Both sections are trimmed
/// and have internal whitespace runs collapsed.
inline FormattedEvent parse_formatted_event(std::string_view reply, const EventRecord& source) {
    const std::string raw(reply);
    auto cat = find_tag(reply, "category");
    if (!cat) throw MalformedReplyError("missing [Category] tag", raw);
    auto sum = find_tag(reply, "summary", cat->end);
    if (!sum) throw MalformedReplyError("missing [Summary] tag after [Category]", raw);
    auto category = collapse_whitespace(reply.substr(cat->end, sum->begin - cat->end));
    auto summary = collapse_whitespace(reply.substr(sum->end));
    if (category.empty()) throw MalformedReplyError("empty category", raw);
    if (summary.empty()) throw MalformedReplyError("empty summary", raw);
    return {std::move(category), std::move(summary), source};
}

struct PredictionResult {
    Date date;
    std::uint64_t pickup = 0;
    std::uint64_t dropoff = 0;
    std::string reasoning;
    std::string raw_response;

    bool operator==(const PredictionResult&) const = default;
};

namespace detail {

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline constexpr std::array<std::string_view, 3> kPredictionTags{"pickup", "dropoff", "reasoning"};

// Start of the earliest prediction tag after `from`, or npos.
inline std::size_t next_prediction_tag(std::string_view text, std::size_t from) {
    std::size_t best = std::string_view::npos;
    for (auto name : kPredictionTags)
        if (auto t = find_tag(text, name, from); t && t->begin < best) best = t->begin;
    return best;
}

// First integer in text[from, next tag). Accepts "1,024"-style grouping and
// a zero fractional part ("562.0").
inline std::uint64_t integer_after(std::string_view text, const TagSpan& tag, std::string_view name,
                                   const std::string& raw) {
    const std::size_t stop = std::min(next_prediction_tag(text, tag.end), text.size());
    std::size_t i = tag.end;
    while (i < stop && !is_digit(text[i])) ++i;
    if (i >= stop) throw MalformedReplyError("no number after [" + std::string(name) + "]", raw);

    bool negative = false;
    for (std::size_t k = i; k > tag.end; --k) {
        char c = text[k - 1];
        if (c == '-') {
            negative = true;
            break;
        }
        if (!is_space(c)) break;
    }
    if (negative) throw MalformedReplyError("negative value for [" + std::string(name) + "]", raw);

    std::string digits;
    std::size_t j = i;
    while (j < stop && is_digit(text[j])) digits += text[j++];
    // Comma groups: only when exactly three digits follow each comma.
    while (j + 3 < stop && text[j] == ',' && is_digit(text[j + 1]) && is_digit(text[j + 2]) &&
           is_digit(text[j + 3]) && !(j + 4 < stop && is_digit(text[j + 4]))) {
        digits.append(text.substr(j + 1, 3));
        j += 4;
    }
    if (j + 1 < stop && text[j] == '.' && is_digit(text[j + 1])) {
        std::size_t f = j + 1;
        while (f < stop && is_digit(text[f])) {
            if (text[f] != '0')
                throw MalformedReplyError("non-integer value for [" + std::string(name) + "]", raw);
            ++f;
        }
    }
    if (digits.size() > 15) throw MalformedReplyError("value out of range for [" + std::string(name) + "]", raw);
    std::uint64_t v = 0;
    std::from_chars(digits.data(), digits.data() + digits.size(), v);
    return v;
}

}  // namespace detail

/// Parses "[pickup] <int> [dropoff] <int> [reasoning] <text>". Reasoning is
/// the trimmed text after the first [reasoning] tag, or the whole reply when
/// that tag is absent.
inline PredictionResult parse_prediction(std::string_view reply, Date date) {
    const std::string raw(reply);
    auto p = find_tag(reply, "pickup");
    if (!p) throw MalformedReplyError("missing [pickup] tag", raw);
    auto d = find_tag(reply, "dropoff");
    if (!d) throw MalformedReplyError("missing [dropoff] tag", raw);
    PredictionResult r;
    r.date = date;
    r.pickup = detail::integer_after(reply, *p, "pickup", raw);
    r.dropoff = detail::integer_after(reply, *d, "dropoff", raw);
    if (auto t = find_tag(reply, "reasoning"))
        r.reasoning = std::string(trim(reply.substr(t->end)));
    else
        r.reasoning = raw;
    r.raw_response = raw;
    return r;
}

/// Canonical reply form of a prediction.
inline std::string render_prediction_reply(std::uint64_t pickup, std::uint64_t dropoff, std::string_view reasoning) {
    return "[pickup] " + std::to_string(pickup) + " [dropoff] " + std::to_string(dropoff) + " [reasoning] " +
           std::string(reasoning);
}

struct ParseFailure {
    std::string kind;  // "prediction" or "event_format"
    Date date;
    std::string request_digest;
    std::string reason;
    std::string raw_reply;
};

/// One line of parse_failures.jsonl.
inline std::string parse_failure_jsonl(const ParseFailure& f) {
    nlohmann::ordered_json j;
    j["kind"] = f.kind;
    j["date"] = f.date.str();
    j["request_digest"] = f.request_digest;
    j["reason"] = f.reason;
    j["raw_reply"] = f.raw_reply;
    return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
}

}  // namespace mpe
