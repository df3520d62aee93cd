#ifndef DEID_DATES_HPP
#define DEID_DATES_HPP

#include <array>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <optional>
#include <regex>
#include <string>
#include <string_view>

namespace deid {

/// Textual shape of a date, enough to write another date the same way.
struct DateFormat {
    enum class Kind { Numeric, MonthName, Decade };
    enum class Order { MDY, DMY, YMD };
    enum class MonthStyle { Full, Abbrev, AbbrevDot };
    enum class Case { Title, Upper, Lower };

    Kind kind = Kind::Numeric;
    Order order = Order::MDY;
    char separator = '/';
    int year_digits = 4;
    bool pad_month = true;
    bool pad_day = true;
    // MonthName
    MonthStyle month_style = MonthStyle::Full;
    Case month_case = Case::Title;
    bool comma = true;
    bool day_first = false;  // "5 May 2023" rather than "May 5, 2023"
    // Decade
    bool apostrophe = false;
    std::string apostrophe_text = "'";

    friend bool operator==(const DateFormat&, const DateFormat&) = default;
};

struct ParsedDate {
    std::chrono::year_month_day date{};
    int decade = 0;  // Decade kind only: 1990, or 80 for two-digit forms
    DateFormat format;
};

namespace detail {

inline constexpr std::array<std::string_view, 12> kMonthNames = {
    "January", "February", "March",     "April",   "May",      "June",
    "July",    "August",   "September", "October", "November", "December"};

inline std::string ascii_lower(std::string_view s) {
    std::string out(s);
    for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

inline int expand_year(int y, int digits) {
    if (digits == 4) return y;
    return y < 50 ? 2000 + y : 1900 + y;
}

inline std::optional<std::pair<unsigned, DateFormat::MonthStyle>> parse_month_name(std::string_view word) {
    const std::string w = ascii_lower(word);
    for (unsigned m = 0; m < 12; ++m) {
        const std::string full = ascii_lower(kMonthNames[m]);
        if (w == full) return std::pair{m + 1, DateFormat::MonthStyle::Full};
        if (w == full.substr(0, 3) || (m == 8 && w == "sept")) return std::pair{m + 1, DateFormat::MonthStyle::Abbrev};
    }
    return std::nullopt;
}

inline DateFormat::Case case_of(std::string_view word) {
    bool all_upper = true;
    bool all_lower = true;
    for (char c : word) {
        if (std::isupper(static_cast<unsigned char>(c))) all_lower = false;
        if (std::islower(static_cast<unsigned char>(c))) all_upper = false;
    }
    if (all_upper && word.size() > 1) return DateFormat::Case::Upper;
    if (all_lower) return DateFormat::Case::Lower;
    return DateFormat::Case::Title;
}

inline std::string month_word(unsigned month, const DateFormat& f) {
    std::string w(kMonthNames[month - 1]);
    if (f.month_style != DateFormat::MonthStyle::Full) w = w.substr(0, 3);
    if (f.month_case == DateFormat::Case::Upper) {
        for (auto& c : w) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    } else if (f.month_case == DateFormat::Case::Lower) {
        w = ascii_lower(w);
    }
    if (f.month_style == DateFormat::MonthStyle::AbbrevDot) w += '.';
    return w;
}

inline std::string pad(unsigned v, bool padded) {
    char buf[16];
    std::snprintf(buf, sizeof buf, padded ? "%02u" : "%u", v);
    return buf;
}

/// A two-digit field is padded; a one-digit field is not. A two-digit value
/// of 10 or more says nothing, so the other field decides.
inline std::pair<bool, bool> infer_padding(std::string_view a, std::string_view b) {
    auto known = [](std::string_view f) -> std::optional<bool> {
        if (f.size() == 1) return false;
        if (f[0] == '0') return true;
        return std::nullopt;
    };
    const auto ka = known(a);
    const auto kb = known(b);
    const bool fallback = ka ? *ka : (kb ? *kb : true);
    return {ka.value_or(fallback), kb.value_or(fallback)};
}

}  // namespace detail

/// Recognizes MM/DD/YYYY, DD/MM/YYYY (also 2-digit years and '-' or '.'
/// separators), YYYY-MM-DD, "Month D, YYYY", "D Month YYYY" and decade forms
/// such as "1990s" and "80's". Ambiguous day/month order follows
/// `prefer_dmy`.
inline std::optional<ParsedDate> parse_date(std::string_view text, bool prefer_dmy = false) {
    using namespace std::chrono;
    static const std::regex numeric(R"(^(\d{1,4})([/.\-])(\d{1,2})\2(\d{1,4})$)");
    static const std::regex month_first(R"(^([A-Za-z]+)(\.?) (\d{1,2})(,?) (\d{4})$)");
    static const std::regex day_first(R"(^(\d{1,2}) ([A-Za-z]+)(\.?),? (\d{4})$)");
    static const std::regex decade(R"(^(\d{4}|\d{2})('|’)?s$)");
    const std::string s(text);
    std::smatch m;
    ParsedDate out;
    if (std::regex_match(s, m, numeric)) {
        const std::string a = m[1], b = m[3], c = m[4];
        DateFormat& f = out.format;
        f.kind = DateFormat::Kind::Numeric;
        f.separator = m[2].str()[0];
        int y = 0;
        unsigned mo = 0;
        unsigned d = 0;
        if (a.size() == 4) {
            if (c.size() > 2) return std::nullopt;
            f.order = DateFormat::Order::YMD;
            f.year_digits = 4;
            y = std::stoi(a);
            mo = static_cast<unsigned>(std::stoi(b));
            d = static_cast<unsigned>(std::stoi(c));
            std::tie(f.pad_month, f.pad_day) = detail::infer_padding(b, c);
        } else {
            if (a.size() > 2 || (c.size() != 2 && c.size() != 4)) return std::nullopt;
            f.year_digits = static_cast<int>(c.size());
            y = detail::expand_year(std::stoi(c), f.year_digits);
            const unsigned va = static_cast<unsigned>(std::stoi(a));
            const unsigned vb = static_cast<unsigned>(std::stoi(b));
            bool dmy = prefer_dmy;
            if (va > 12) dmy = true;
            if (vb > 12) dmy = false;
            f.order = dmy ? DateFormat::Order::DMY : DateFormat::Order::MDY;
            mo = dmy ? vb : va;
            d = dmy ? va : vb;
            auto [pa, pb] = detail::infer_padding(a, b);
            f.pad_month = dmy ? pb : pa;
            f.pad_day = dmy ? pa : pb;
        }
        out.date = year_month_day{year{y}, month{mo}, day{d}};
        if (!out.date.ok()) return std::nullopt;
        return out;
    }
    auto month_name_date = [&](const std::string& word, const std::string& dot, const std::string& day_text,
                               const std::string& year_text, bool comma, bool is_day_first) -> std::optional<ParsedDate> {
        auto mon = detail::parse_month_name(word);
        if (!mon) return std::nullopt;
        DateFormat& f = out.format;
        f.kind = DateFormat::Kind::MonthName;
        f.month_style = mon->second;
        if (!dot.empty()) {
            if (f.month_style == DateFormat::MonthStyle::Full && word.size() == 3) f.month_style = DateFormat::MonthStyle::Abbrev;
            if (f.month_style != DateFormat::MonthStyle::Abbrev) return std::nullopt;
            f.month_style = DateFormat::MonthStyle::AbbrevDot;
        }
        f.month_case = detail::case_of(word);
        f.comma = comma;
        f.day_first = is_day_first;
        f.pad_day = day_text.size() == 2 && day_text[0] == '0';
        f.year_digits = 4;
        out.date = year_month_day{year{std::stoi(year_text)}, month{mon->first},
                                  day{static_cast<unsigned>(std::stoi(day_text))}};
        if (!out.date.ok()) return std::nullopt;
        return out;
    };
    if (std::regex_match(s, m, month_first)) {
        return month_name_date(m[1], m[2], m[3], m[5], m[4].length() > 0, false);
    }
    if (std::regex_match(s, m, day_first)) {
        return month_name_date(m[2], m[3], m[1], m[4], false, true);
    }
    if (std::regex_match(s, m, decade)) {
        const std::string digits = m[1];
        if (digits.back() != '0') return std::nullopt;
        DateFormat& f = out.format;
        f.kind = DateFormat::Kind::Decade;
        f.year_digits = static_cast<int>(digits.size());
        f.apostrophe = m[2].matched;
        if (f.apostrophe) f.apostrophe_text = m[2];
        out.decade = std::stoi(digits);
        return out;
    }
    return std::nullopt;
}

inline std::string format_date(const std::chrono::year_month_day& ymd, const DateFormat& f) {
    const int y = static_cast<int>(ymd.year());
    const unsigned mo = static_cast<unsigned>(ymd.month());
    const unsigned d = static_cast<unsigned>(ymd.day());
    char ybuf[16];
    if (f.year_digits == 2) {
        std::snprintf(ybuf, sizeof ybuf, "%02d", ((y % 100) + 100) % 100);
    } else {
        std::snprintf(ybuf, sizeof ybuf, "%04d", y);
    }
    const std::string sep(1, f.separator);
    switch (f.kind) {
        case DateFormat::Kind::Numeric:
            switch (f.order) {
                case DateFormat::Order::MDY:
                    return detail::pad(mo, f.pad_month) + sep + detail::pad(d, f.pad_day) + sep + ybuf;
                case DateFormat::Order::DMY:
                    return detail::pad(d, f.pad_day) + sep + detail::pad(mo, f.pad_month) + sep + ybuf;
                case DateFormat::Order::YMD:
                    return std::string(ybuf) + sep + detail::pad(mo, f.pad_month) + sep + detail::pad(d, f.pad_day);
            }
            break;
        case DateFormat::Kind::MonthName:
            if (f.day_first) return detail::pad(d, f.pad_day) + " " + detail::month_word(mo, f) + " " + ybuf;
            return detail::month_word(mo, f) + " " + detail::pad(d, f.pad_day) + (f.comma ? ", " : " ") + ybuf;
        case DateFormat::Kind::Decade:
            break;
    }
    return {};
}

inline std::string format_decade(int decade, const DateFormat& f) {
    char buf[16];
    std::snprintf(buf, sizeof buf, f.year_digits == 2 ? "%02d" : "%04d", f.year_digits == 2 ? ((decade % 100) + 100) % 100 : decade);
    return std::string(buf) + (f.apostrophe ? f.apostrophe_text : "") + "s";
}

/// Shifts a recognized calendar date by `days`, keeping its format.
/// Decade forms and unrecognized text return nullopt.
inline std::optional<std::string> shift_date(std::string_view text, int days, bool prefer_dmy = false) {
    auto parsed = parse_date(text, prefer_dmy);
    if (!parsed || parsed->format.kind == DateFormat::Kind::Decade) return std::nullopt;
    const auto shifted = std::chrono::year_month_day{std::chrono::sys_days{parsed->date} + std::chrono::days{days}};
    return format_date(shifted, parsed->format);
}

}  // namespace deid

#endif  // DEID_DATES_HPP
