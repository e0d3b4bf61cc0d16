#pragma once

// Shared vocabulary for the event-demand pipeline: calendar dates, times of
// day, demand pairs, the error hierarchy, hashing and small text/file helpers.

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

namespace mpe {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller passed a value outside an operation's precondition.
class ArgumentError : public Error {
public:
    using Error::Error;
};

/// Input document is structurally unusable (missing columns, not JSON, ...).
class SchemaError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

/// I/O or network failure, including exhausted retries.
class TransportError : public Error {
public:
    using Error::Error;
};

/// Terminal non-2xx HTTP status from a chat backend.
class ProtocolError : public Error {
public:
    ProtocolError(int status, std::string body)
        : Error("backend returned HTTP " + std::to_string(status) + ": " + body),
          status_(status),
          body_(std::move(body)) {}

    [[nodiscard]] int status() const noexcept { return status_; }
    [[nodiscard]] const std::string& body() const noexcept { return body_; }

private:
    int status_;
    std::string body_;
};

/// The scripted mock was asked for a request it has no reply for.
class MissingScriptError : public Error {
public:
    MissingScriptError(std::string digest, const std::string& why)
        : Error("no scripted reply for request " + digest + ": " + why), digest_(std::move(digest)) {}

    [[nodiscard]] const std::string& digest() const noexcept { return digest_; }

private:
    std::string digest_;
};

/// An LLM reply that does not follow the requested output form.
class MalformedReplyError : public Error {
public:
    MalformedReplyError(const std::string& reason, std::string raw)
        : Error("malformed reply: " + reason), reason_(reason), raw_(std::move(raw)) {}

    [[nodiscard]] const std::string& reason() const noexcept { return reason_; }
    [[nodiscard]] const std::string& raw() const noexcept { return raw_; }

private:
    std::string reason_;
    std::string raw_;
};

/// A pipeline stage was run before one of its prerequisites.
class PreconditionError : public Error {
public:
    PreconditionError(const std::string& stage, const std::string& required, const std::string& detail)
        : Error("stage '" + stage + "' requires '" + required + "' to run first (" + detail + ")"),
          required_stage_(required) {}

    [[nodiscard]] const std::string& required_stage() const noexcept { return required_stage_; }

private:
    std::string required_stage_;
};

// ---------------------------------------------------------------------------
// Text helpers
// ---------------------------------------------------------------------------

inline bool is_space(char c) noexcept {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline std::string_view trim(std::string_view s) noexcept {
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

inline std::string to_lower_ascii(std::string_view s) {
    std::string out(s);
    for (char& c : out) {
        if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
    }
    return out;
}

inline std::vector<std::string_view> split_whitespace(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && is_space(s[i])) ++i;
        std::size_t j = i;
        while (j < s.size() && !is_space(s[j])) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

/// Joins whitespace-separated tokens with single spaces.
inline std::string collapse_whitespace(std::string_view s) {
    std::string out;
    for (auto tok : split_whitespace(s)) {
        if (!out.empty()) out += ' ';
        out += tok;
    }
    return out;
}

/// Fixed-point rendering used by every report writer, so output bytes do not
/// depend on stream state.
inline std::string format_fixed(double v, int decimals = 6) {
    if (v == 0.0) v = 0.0;  // folds -0
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
    return buf;
}

/// Integer rounding with ties toward +infinity.
inline long long round_half_up(double v) { return static_cast<long long>(std::floor(v + 0.5)); }

inline std::string signed_int(long long v) { return (v >= 0 ? "+" : "") + std::to_string(v); }

// ---------------------------------------------------------------------------
// Calendar
// ---------------------------------------------------------------------------

/// A calendar day. Ordered, hashable through days_since_epoch().
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::chrono::sys_days d) : days_(d) {}
    constexpr Date(int y, unsigned m, unsigned d)
        : days_(std::chrono::year_month_day{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}}) {}

    /// Parses "YYYY-MM-DD"; returns nullopt on anything else, including
    /// impossible dates such as 2014-02-30.
    static std::optional<Date> try_parse(std::string_view s) {
        s = trim(s);
        if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
        int y = 0;
        unsigned m = 0, d = 0;
        auto num = [&](std::string_view part, auto& out) {
            auto [p, ec] = std::from_chars(part.data(), part.data() + part.size(), out);
            return ec == std::errc{} && p == part.data() + part.size();
        };
        if (!num(s.substr(0, 4), y) || !num(s.substr(5, 2), m) || !num(s.substr(8, 2), d)) return std::nullopt;
        std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
        if (!ymd.ok()) return std::nullopt;
        return Date{std::chrono::sys_days{ymd}};
    }

    static Date parse(std::string_view s) {
        if (auto d = try_parse(s)) return *d;
        throw ArgumentError("invalid date '" + std::string(s) + "' (expected YYYY-MM-DD)");
    }

    [[nodiscard]] std::string str() const {
        std::chrono::year_month_day ymd{days_};
        char buf[16];
        std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                      static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
        return buf;
    }

    /// Monday = 0 ... Sunday = 6.
    [[nodiscard]] unsigned weekday_index() const {
        return std::chrono::weekday{days_}.iso_encoding() - 1;
    }

    [[nodiscard]] std::string_view weekday_name() const {
        static constexpr std::array<std::string_view, 7> names{"Monday", "Tuesday", "Wednesday", "Thursday",
                                                               "Friday", "Saturday", "Sunday"};
        return names[weekday_index()];
    }

    [[nodiscard]] constexpr long long days_since_epoch() const { return days_.time_since_epoch().count(); }
    [[nodiscard]] constexpr std::chrono::sys_days sys_days() const { return days_; }

    constexpr Date operator+(int n) const { return Date{days_ + std::chrono::days{n}}; }
    constexpr Date operator-(int n) const { return Date{days_ - std::chrono::days{n}}; }
    constexpr long long operator-(Date other) const { return (days_ - other.days_).count(); }

    constexpr auto operator<=>(const Date&) const = default;

private:
    std::chrono::sys_days days_{};
};

/// Inclusive interval of calendar days.
struct DateRange {
    Date first;
    Date last;

    DateRange(Date a, Date b) : first(a), last(b) {
        if (b < a) throw ArgumentError("empty date range " + a.str() + " .. " + b.str());
    }

    [[nodiscard]] bool contains(Date d) const noexcept { return first <= d && d <= last; }
    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(last - first) + 1; }

    [[nodiscard]] std::vector<Date> days() const {
        std::vector<Date> out;
        out.reserve(size());
        for (Date d = first; d <= last; d = d + 1) out.push_back(d);
        return out;
    }

    bool operator==(const DateRange&) const = default;
};

/// Minutes after midnight, 0..1439.
class TimeOfDay {
public:
    constexpr TimeOfDay() = default;
    constexpr TimeOfDay(int hour, int minute) : minutes_(hour * 60 + minute) {}

    static std::optional<TimeOfDay> try_parse(std::string_view s) {
        s = trim(s);
        auto colon = s.find(':');
        if (colon == std::string_view::npos || colon == 0 || colon > 2 || s.size() - colon - 1 != 2)
            return std::nullopt;
        int h = 0, m = 0;
        auto hs = s.substr(0, colon), ms = s.substr(colon + 1);
        auto r1 = std::from_chars(hs.data(), hs.data() + hs.size(), h);
        auto r2 = std::from_chars(ms.data(), ms.data() + ms.size(), m);
        if (r1.ec != std::errc{} || r1.ptr != hs.data() + hs.size()) return std::nullopt;
        if (r2.ec != std::errc{} || r2.ptr != ms.data() + ms.size()) return std::nullopt;
        if (h < 0 || h > 23 || m < 0 || m > 59) return std::nullopt;
        return TimeOfDay{h, m};
    }

    [[nodiscard]] constexpr int minutes() const noexcept { return minutes_; }

    [[nodiscard]] std::string str() const {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%02d:%02d", minutes_ / 60, minutes_ % 60);
        return buf;
    }

    constexpr auto operator<=>(const TimeOfDay&) const = default;

private:
    int minutes_ = 0;
};

/// Real-valued (outflow, inflow) pair; outflow = pickups, inflow = dropoffs.
struct DemandPair {
    double outflow = 0.0;
    double inflow = 0.0;

    friend DemandPair operator+(DemandPair a, DemandPair b) { return {a.outflow + b.outflow, a.inflow + b.inflow}; }
    friend DemandPair operator-(DemandPair a, DemandPair b) { return {a.outflow - b.outflow, a.inflow - b.inflow}; }
    bool operator==(const DemandPair&) const = default;
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

inline std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
        throw Error("SHA-256 digest failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xF];
    }
    return out;
}

/// FNV-1a, 64-bit. Stable across processes and platforms.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
    std::uint64_t h = 14695981039346656037ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ULL;
    }
    return h;
}

// ---------------------------------------------------------------------------
// Files
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw TransportError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw TransportError("error while reading " + path.string());
    return ss.str();
}

/// Writes to a sibling temporary file and renames it over the target, so
/// readers never observe a partially written file.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    static thread_local std::mt19937_64 rng{std::random_device{}()};
    auto tmp = path;
    tmp += ".tmp" + std::to_string(rng());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw TransportError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw TransportError("short write to " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp);
        throw TransportError("cannot rename onto " + path.string() + ": " + ec.message());
    }
}

inline std::string file_sha256(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

/// Splits one CSV record. Handles double-quoted fields with "" escapes; does
/// not handle newlines embedded in quoted fields.
inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string csv_escape(std::string_view field) {
    if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

/// Reads a CSV document with a header row into (header, rows). Blank lines
/// are skipped; CRLF line endings are accepted.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    [[nodiscard]] std::size_t column(std::string_view name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw SchemaError("missing CSV column '" + std::string(name) + "'");
    }
};

inline CsvTable parse_csv(std::string_view text) {
    CsvTable table;
    bool have_header = false;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!trim(line).empty()) {
            auto fields = split_csv_line(line);
            if (!have_header) {
                for (auto& f : fields) f = std::string(trim(f));
                table.header = std::move(fields);
                have_header = true;
            } else {
                table.rows.push_back(std::move(fields));
            }
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (!have_header) throw SchemaError("CSV document has no header row");
    return table;
}

}  // namespace mpe
