#pragma once

// Deterministic rule-based stand-in for the LLM. It reads the same prompts a
// live model would see and answers in the same tagged formats, so the whole
// pipeline can run offline. Its replies are also what the bundled mock
// scripts are recorded from.
//
// Event formatting: keyword and performer lookup on title and description.
// Prediction: the regular level (given under r_i, estimated from
// same-weekday quiet days under o) plus the mean deviation of history days
// whose events share the most specific available key with the target's.

#include "mpe/llm_gateway.hpp"
#include "mpe/response_parser.hpp"

#include <functional>

namespace mpe {

namespace heuristic {

struct CategoryRule {
    std::string_view needle;  // lowercase substring
    std::string_view category;
};

// Order matters: team names before generic words such as "vs.".
inline constexpr std::array<CategoryRule, 21> kKeywordRules{{
    {"nets", "NBA Basketball Game"},
    {"nba", "NBA Basketball Game"},
    {"basketball", "NBA Basketball Game"},
    {"islanders", "NHL Hockey Game"},
    {"hockey", "NHL Hockey Game"},
    {"boxing", "Boxing Match"},
    {"title fight", "Boxing Match"},
    {"circus", "Family Show"},
    {"disney on ice", "Family Show"},
    {"sesame street", "Family Show"},
    {"family show", "Family Show"},
    {"commencement", "Graduation Ceremony"},
    {"graduation", "Graduation Ceremony"},
    {"hip-hop", "Hip-Hop Concert"},
    {"hip hop", "Hip-Hop Concert"},
    {"rap ", "Hip-Hop Concert"},
    {"rock band", "Rock Concert"},
    {"rock concert", "Rock Concert"},
    {"pop star", "Pop Music Concert"},
    {"concert", "Pop Music Concert"},
    {"tour", "Pop Music Concert"},
}};

// Stand-in for the model's background knowledge of performers.
inline constexpr std::array<CategoryRule, 12> kPerformers{{
    {"jay-z", "Hip-Hop Concert"},
    {"kanye west", "Hip-Hop Concert"},
    {"drake", "Hip-Hop Concert"},
    {"nicki minaj", "Hip-Hop Concert"},
    {"arcade fire", "Rock Concert"},
    {"the rolling stones", "Rock Concert"},
    {"bruce springsteen", "Rock Concert"},
    {"foo fighters", "Rock Concert"},
    {"barbra streisand", "Pop Music Concert"},
    {"justin timberlake", "Pop Music Concert"},
    {"lady gaga", "Pop Music Concert"},
    {"katy perry", "Pop Music Concert"},
}};

inline std::optional<std::string> match_rules(std::string_view lower, std::span<const CategoryRule> rules) {
    for (const auto& r : rules)
        if (lower.find(r.needle) != std::string_view::npos) return std::string(r.category);
    return std::nullopt;
}

inline std::string classify_event(std::string_view title, std::string_view description) {
    const auto t = to_lower_ascii(title), d = to_lower_ascii(description);
    if (auto c = match_rules(t, kPerformers)) return *c;
    if (auto c = match_rules(t, kKeywordRules)) return *c;
    if (auto c = match_rules(d, kPerformers)) return *c;
    if (auto c = match_rules(d, kKeywordRules)) return *c;
    return "Other Event";
}

// Title plus the first sentence of the description, at most 30 words.
inline std::string summarize_event(std::string_view title, std::string_view description) {
    std::string s = collapse_whitespace(title);
    auto d = collapse_whitespace(description);
    if (!d.empty() && d != "NA") {
        auto stop = d.find(". ");
        if (stop != std::string::npos) d = d.substr(0, stop + 1);
        s += ": " + d;
    }
    auto words = split_whitespace(s);
    if (words.size() > 30) {
        std::string cut;
        for (std::size_t i = 0; i < 30; ++i) cut += (i ? " " : "") + std::string(words[i]);
        s = cut;
    }
    if (s.back() != '.') s += '.';
    return s;
}

struct DayEventInfo {
    bool shown = false;  // false when the prompt carries no event field
    long long count = 0;
    std::string times;
    std::vector<std::string> titles;
    std::vector<std::string> categories;
};

struct PromptDay {
    Date date;
    std::optional<DemandPair> baseline;  // r_i lines
    DemandPair deviation{0, 0};          // r_i lines
    std::optional<DemandPair> demand;    // o lines
    DayEventInfo events;
};

// Text between tag `name` and the next '[' tag, trimmed.
inline std::vector<std::string> tag_values(std::string_view block, std::string_view name) {
    std::vector<std::string> out;
    std::size_t from = 0;
    while (auto t = find_tag(block, name, from)) {
        auto next = block.find(" [", t->end);
        out.push_back(std::string(trim(block.substr(t->end, next == std::string_view::npos ? next : next - t->end))));
        from = t->end;
    }
    return out;
}

inline DayEventInfo parse_event_field(std::string_view field) {
    DayEventInfo info;
    info.shown = true;
    field = trim(field);
    if (field.rfind("no event", 0) == 0) return info;
    std::from_chars(field.data(), field.data() + field.size(), info.count);
    if (auto t = find_tag(field, "time")) {
        auto next = field.find(" [", t->end);
        info.times = std::string(trim(field.substr(t->end, next == std::string_view::npos ? next : next - t->end)));
    }
    info.titles = tag_values(field, "title");
    info.categories = tag_values(field, "category");
    return info;
}

// "pickup 812, dropoff -35" (signs optional)
inline std::optional<DemandPair> parse_pair(std::string_view s) {
    auto grab = [&](std::string_view key) -> std::optional<double> {
        auto p = s.find(key);
        if (p == std::string_view::npos) return std::nullopt;
        p += key.size();
        while (p < s.size() && s[p] == ' ') ++p;
        if (p < s.size() && s[p] == '+') ++p;
        long long v = 0;
        auto [end, ec] = std::from_chars(s.data() + p, s.data() + s.size(), v);
        if (ec != std::errc{}) return std::nullopt;
        return static_cast<double>(v);
    };
    auto a = grab("pickup"), b = grab("dropoff");
    if (!a || !b) return std::nullopt;
    return DemandPair{*a, *b};
}

inline std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (auto p = line.find(" | "); p != std::string_view::npos; p = line.find(" | ", start)) {
        out.push_back(line.substr(start, p - start));
        start = p + 3;
    }
    out.push_back(line.substr(start));
    return out;
}

inline std::optional<PromptDay> parse_day_line(std::string_view line) {
    if (line.size() < 10) return std::nullopt;
    auto date = Date::try_parse(line.substr(0, 10));
    if (!date) return std::nullopt;
    PromptDay day;
    day.date = *date;
    auto fields = split_fields(line);
    std::size_t next = 1;
    if (fields.size() > 1 && fields[1].rfind("historical average:", 0) == 0) {
        day.baseline = parse_pair(fields[1]);
        if (fields.size() > 2) day.deviation = parse_pair(fields[2]).value_or(DemandPair{0, 0});
        next = 3;
    } else if (fields.size() > 1 && fields[1].rfind("demand:", 0) == 0) {
        day.demand = parse_pair(fields[1]);
        next = 2;
    }
    if (fields.size() > next) day.events = parse_event_field(line.substr(fields[next].data() - line.data()));
    return day;
}

struct ParsedPrediction {
    std::vector<PromptDay> history;
    PromptDay target;
    std::optional<DemandPair> expected;
};

inline std::optional<ParsedPrediction> parse_prediction_prompt(std::string_view prompt) {
    ParsedPrediction p;
    auto head = prompt.find("days (oldest first):\n");
    auto tgt = prompt.find("\nNext day to predict:\n");
    if (head == std::string_view::npos || tgt == std::string_view::npos) return std::nullopt;
    std::size_t pos = prompt.find('\n', head) + 1;
    while (pos < tgt) {
        auto eol = prompt.find('\n', pos);
        auto d = parse_day_line(prompt.substr(pos, eol - pos));
        if (d && (d->baseline || d->demand)) p.history.push_back(std::move(*d));
        pos = eol + 1;
    }
    pos = tgt + std::string_view("\nNext day to predict:\n").size();
    auto eol = prompt.find('\n', pos);
    auto target = parse_day_line(prompt.substr(pos, eol - pos));
    if (!target || p.history.empty()) return std::nullopt;
    p.target = std::move(*target);
    if (auto e = prompt.find("\nExpected demand", eol); e != std::string_view::npos) {
        auto colon = prompt.find(':', e);
        auto end = prompt.find('\n', colon);
        p.expected = parse_pair(prompt.substr(colon + 1, end - colon - 1));
    }
    return p;
}

inline bool quiet(const PromptDay& d) { return !d.events.shown || d.events.count == 0; }

inline DemandPair observed(const PromptDay& d) {
    if (d.demand) return *d.demand;
    return *d.baseline + d.deviation;
}

// Mean demand of same-weekday quiet days in the window, excluding `skip`.
inline DemandPair window_level(const std::vector<PromptDay>& history, Date target, std::optional<Date> skip) {
    DemandPair sum{0, 0};
    int n = 0;
    auto pass = [&](bool weekday_only) {
        for (const auto& d : history) {
            if (skip && d.date == *skip) continue;
            if (!quiet(d) || (weekday_only && d.date.weekday_index() != target.weekday_index())) continue;
            sum = sum + observed(d);
            ++n;
        }
    };
    pass(true);
    if (n == 0) pass(false);
    if (n == 0) {
        for (const auto& d : history) sum = sum + observed(d);
        n = static_cast<int>(history.size());
    }
    return {sum.outflow / n, sum.inflow / n};
}

inline DemandPair residual(const PromptDay& d, const std::vector<PromptDay>& history) {
    if (d.baseline) return d.deviation;
    return observed(d) - window_level(history, d.date, d.date);
}

inline bool shares_any(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    for (const auto& x : a)
        if (std::find(b.begin(), b.end(), x) != b.end()) return true;
    return false;
}

inline std::string predict_reply(const ParsedPrediction& p) {
    const auto& t = p.target;
    DemandPair level = p.expected ? *p.expected : window_level(p.history, t.date, std::nullopt);
    std::string why = "Regular level for " + std::string(t.date.weekday_name()) + " is pickup " +
                      std::to_string(round_half_up(level.outflow)) + ", dropoff " +
                      std::to_string(round_half_up(level.inflow)) + ".";

    DemandPair effect{0, 0};
    if (t.events.shown && t.events.count > 0) {
        using Pred = std::function<bool(const PromptDay&)>;
        std::vector<std::pair<std::string, Pred>> keys;
        const auto& te = t.events;
        if (!te.categories.empty())
            keys.emplace_back("same category",
                              [&](const PromptDay& d) { return shares_any(d.events.categories, te.categories); });
        if (!te.titles.empty())
            keys.emplace_back("same title", [&](const PromptDay& d) { return shares_any(d.events.titles, te.titles); });
        if (!te.times.empty())
            keys.emplace_back("same time slot", [&](const PromptDay& d) { return d.events.times == te.times; });
        keys.emplace_back("any event", [](const PromptDay& d) { return d.events.count > 0; });

        for (const auto& [label, match] : keys) {
            DemandPair sum{0, 0};
            int n = 0;
            for (const auto& d : p.history)
                if (d.events.shown && d.events.count > 0 && match(d)) {
                    sum = sum + residual(d, p.history);
                    ++n;
                }
            if (n > 0) {
                effect = {sum.outflow / n, sum.inflow / n};
                why += " Past days with an event of the " + label + " (" + std::to_string(n) +
                       ") deviated by pickup " + signed_int(round_half_up(effect.outflow)) + ", dropoff " +
                       signed_int(round_half_up(effect.inflow)) + " on average.";
                break;
            }
        }
        if (effect.outflow == 0 && effect.inflow == 0) why += " No comparable event in the window.";
    } else if (t.events.shown) {
        why += " No event is scheduled.";
    }

    const auto out = std::max(0LL, round_half_up(level.outflow + effect.outflow));
    const auto in = std::max(0LL, round_half_up(level.inflow + effect.inflow));
    return render_prediction_reply(static_cast<std::uint64_t>(out), static_cast<std::uint64_t>(in), why);
}

inline std::optional<std::string> format_reply(std::string_view prompt) {
    constexpr std::string_view kTitle = "Event title: ", kDesc = "\nEvent description: ",
                               kEnd = "\n\nBased on your knowledge";
    auto t = prompt.find(kTitle);
    auto d = prompt.find(kDesc, t);
    if (t == std::string_view::npos || d == std::string_view::npos) return std::nullopt;
    auto e = prompt.find(kEnd, d);
    auto title = prompt.substr(t + kTitle.size(), d - t - kTitle.size());
    auto desc = prompt.substr(d + kDesc.size(), e == std::string_view::npos ? e : e - d - kDesc.size());
    return "[Category] " + classify_event(title, desc) + " [Summary] " + summarize_event(title, desc);
}

}  // namespace heuristic

class HeuristicBackend : public ChatBackend {
public:
    ChatResponse complete(const ChatRequest& request) override {
        request.validate();
        const auto& prompt = request.messages.front().content;
        std::optional<std::string> reply;
        if (prompt.find("\nNext day to predict:\n") != std::string::npos) {
            if (auto p = heuristic::parse_prediction_prompt(prompt)) reply = heuristic::predict_reply(*p);
        } else {
            reply = heuristic::format_reply(prompt);
        }
        if (!reply) throw MissingScriptError(cache_key(request), "heuristic backend does not recognise the prompt");
        ChatResponse r;
        r.content = std::move(*reply);
        return r;
    }

    [[nodiscard]] std::string identity() const override { return "heuristic"; }
};

}  // namespace mpe
