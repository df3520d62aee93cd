#ifndef DEID_RULE_ENGINE_HPP
#define DEID_RULE_ENGINE_HPP

#include "deid/annotation.hpp"
#include "deid/errors.hpp"
#include "deid/label_set.hpp"
#include "deid/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace deid {

/// Declarative rule as read from a rule file.
struct RulePattern {
    std::string label;
    std::string pattern;
    std::string validator;  // empty = none
    int priority = 0;       // larger wins ties
    /// Optional trigger: the match is kept only if one of the
    /// `context_window` word-punct tokens before it fully matches this regex
    /// (case-insensitive). The span covers the value only.
    std::string context;
    int context_window = 3;
    bool case_insensitive = false;
    /// Capture group that forms the span; 0 is the whole match. Lets a
    /// pattern consume a left boundary, since lookbehind is unavailable.
    int group = 0;
};

namespace validators {

inline bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

inline std::string digits_only(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (std::isdigit(static_cast<unsigned char>(c))) out.push_back(c);
    }
    return out;
}

/// US SSN structure: area not 000, 666 or 9xx; group not 00; serial not 0000.
inline bool ssn(std::string_view text) {
    const std::string d = digits_only(text);
    if (d.size() != 9) return false;
    const int area = std::stoi(d.substr(0, 3));
    const int group = std::stoi(d.substr(3, 2));
    const int serial = std::stoi(d.substr(5, 4));
    return area != 0 && area != 666 && area < 900 && group != 0 && serial != 0;
}

inline bool ipv4(std::string_view text) {
    int parts = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto dot = text.find('.', pos);
        const auto part = text.substr(pos, dot == std::string_view::npos ? std::string_view::npos : dot - pos);
        if (part.empty() || part.size() > 3 || !all_digits(part)) return false;
        if (std::stoi(std::string(part)) > 255) return false;
        ++parts;
        if (dot == std::string_view::npos) break;
        pos = dot + 1;
    }
    return parts == 4;
}

inline bool ipv6(std::string_view text) {
    const auto dbl = text.find("::");
    if (dbl != std::string_view::npos && text.find("::", dbl + 1) != std::string_view::npos) return false;
    auto count_groups = [](std::string_view s, int& groups) {
        if (s.empty()) return true;
        std::size_t pos = 0;
        for (;;) {
            const auto colon = s.find(':', pos);
            const auto g = s.substr(pos, colon == std::string_view::npos ? std::string_view::npos : colon - pos);
            if (g.empty() || g.size() > 4) return false;
            if (!std::all_of(g.begin(), g.end(), [](unsigned char c) { return std::isxdigit(c); })) return false;
            ++groups;
            if (colon == std::string_view::npos) return true;
            pos = colon + 1;
        }
    };
    int groups = 0;
    if (dbl == std::string_view::npos) {
        return count_groups(text, groups) && groups == 8;
    }
    if (!count_groups(text.substr(0, dbl), groups) || !count_groups(text.substr(dbl + 2), groups)) return false;
    return groups >= 2 && groups <= 7;
}

inline int vin_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    static const std::string_view letters = "ABCDEFGHJKLMNPRSTUVWXYZ";
    static const int values[] = {1, 2, 3, 4, 5, 6, 7, 8, 1, 2, 3, 4, 5, 7, 9, 2, 3, 4, 5, 6, 7, 8, 9};
    const auto pos = letters.find(c);
    return pos == std::string_view::npos ? -1 : values[pos];
}

/// 17 characters, no I/O/Q, at least one letter and one digit.
inline bool vin(std::string_view text) {
    if (text.size() != 17) return false;
    bool letter = false;
    bool digit = false;
    for (char c : text) {
        if (vin_value(c) < 0) return false;
        letter |= std::isalpha(static_cast<unsigned char>(c)) != 0;
        digit |= std::isdigit(static_cast<unsigned char>(c)) != 0;
    }
    return letter && digit;
}

/// ISO 3779 / North American check digit in position 9.
inline bool vin_checksum(std::string_view text) {
    if (!vin(text)) return false;
    static const int weights[] = {8, 7, 6, 5, 4, 3, 2, 10, 0, 9, 8, 7, 6, 5, 4, 3, 2};
    int sum = 0;
    for (std::size_t i = 0; i < 17; ++i) sum += vin_value(text[i]) * weights[i];
    const int check = sum % 11;
    return text[8] == (check == 10 ? 'X' : static_cast<char>('0' + check));
}

inline bool has_digit(std::string_view text) {
    return std::any_of(text.begin(), text.end(), [](unsigned char c) { return std::isdigit(c); });
}

using Validator = std::function<bool(std::string_view)>;

inline const std::map<std::string, Validator, std::less<>>& registry() {
    static const std::map<std::string, Validator, std::less<>> table{
        {"ssn", ssn}, {"ipv4", ipv4}, {"ipv6", ipv6}, {"vin", vin}, {"vin_checksum", vin_checksum},
        {"has_digit", has_digit},
    };
    return table;
}

}  // namespace validators

/// Shipped US-centric defaults for the ten rule labels.
inline std::vector<RulePattern> default_rules() {
    const std::string phone = R"((?:\+?\d{1,3}[ .-]?)?(?:\(\d{3}\)|\d{3})[ .-]?\d{3}[ .-]?\d{4}\b)";
    return {
        {"EMAIL", R"(\b[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)*\.[A-Za-z]{2,}\b)", "", 50},
        {"URL", R"((?:(?:https?|ftp)://|www\.)[^\s<>"']*[^\s<>"'.,;:!?)\]])", "", 40},
        {"IP", R"((?:^|[^\d.])((?:\d{1,3}\.){3}\d{1,3})(?![\d.]*\d))", "ipv4", 30, "", 3, false, 1},
        {"IP", R"((?:^|[^0-9A-Fa-f:])((?:[0-9A-Fa-f]{1,4}:|::)(?:[0-9A-Fa-f]{0,4}:){1,6}[0-9A-Fa-f]{0,4})(?![0-9A-Fa-f:]))",
         "ipv6", 30, "", 3, false, 1},
        {"SSN", R"(\b\d{3}-\d{2}-\d{4}\b)", "ssn", 60},
        {"SSN", R"(\b\d{9}\b)", "ssn", 20},
        {"VIN", R"(\b[A-HJ-NPR-Z0-9]{17}\b)", "vin", 45},
        {"FAX", phone, "", 35, R"(fax|telefax|facsimile)", 3, false},
        {"ACCOUNT", R"(\b[A-Za-z0-9][A-Za-z0-9-]{4,}[A-Za-z0-9]\b)", "has_digit", 25,
         R"(acct|account|a/c)", 3, false},
        {"DLN", R"(\b[A-Za-z0-9]{5,15}\b)", "has_digit", 25, R"(dl|dln|driver'?s?)", 3, false},
        {"LICENSE", R"(\b[A-Za-z0-9][A-Za-z0-9-]{3,}[A-Za-z0-9]\b)", "has_digit", 24,
         R"(license|licence|lic|certificate|cert)", 3, false},
        {"PLATE", R"(\b[A-Z0-9]{2,4}[- ]?[A-Z0-9]{2,4}\b)", "has_digit", 23, R"(plate|tag|registration)", 3,
         false},
    };
}

inline RulePattern rule_from_json(const nlohmann::json& j) {
    RulePattern r;
    r.label = j.at("label").get<std::string>();
    r.pattern = j.at("pattern").get<std::string>();
    r.validator = j.value("validator", std::string());
    r.priority = j.value("priority", 0);
    r.context = j.value("context", std::string());
    r.context_window = j.value("context_window", 3);
    r.case_insensitive = j.value("case_insensitive", false);
    r.group = j.value("group", 0);
    return r;
}

inline nlohmann::json rule_to_json(const RulePattern& r) {
    nlohmann::json j{{"label", r.label}, {"pattern", r.pattern}, {"priority", r.priority}};
    if (!r.validator.empty()) j["validator"] = r.validator;
    if (!r.context.empty()) {
        j["context"] = r.context;
        j["context_window"] = r.context_window;
    }
    if (r.case_insensitive) j["case_insensitive"] = true;
    if (r.group != 0) j["group"] = r.group;
    return j;
}

/// Reads a rule file: {"language": ..., "rules": [{label, pattern, validator, priority, ...}]}.
inline std::vector<RulePattern> load_rule_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open rule file: " + path);
    try {
        nlohmann::json j;
        in >> j;
        std::vector<RulePattern> rules;
        for (const auto& item : j.at("rules")) rules.push_back(rule_from_json(item));
        return rules;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

/// Immutable compiled rule set. Construction reports every invalid rule at
/// once through PatternCompileError; detection never throws for patterns.
class RuleSet {
public:
    struct Compiled {
        RulePattern source;
        std::regex value;
        std::optional<std::regex> context;
        validators::Validator validator;
    };

    RuleSet(std::vector<RulePattern> rules, const LabelSet& labels) {
        std::vector<std::string> problems;
        for (auto& r : rules) {
            const std::string where = r.label + " /" + r.pattern + "/";
            if (!labels.is_rule_label(r.label)) {
                problems.push_back(where + ": label is not a rule label of the '" + labels.language_code() +
                                   "' label set");
                continue;
            }
            if (r.pattern.find("(?<") != std::string::npos) {
                problems.push_back(where + ": lookbehind is not supported");
                continue;
            }
            if (has_backreference(r.pattern)) {
                problems.push_back(where + ": backreferences are not supported");
                continue;
            }
            validators::Validator validator;
            if (!r.validator.empty()) {
                auto it = validators::registry().find(r.validator);
                if (it == validators::registry().end()) {
                    problems.push_back(where + ": unknown validator '" + r.validator + "'");
                    continue;
                }
                validator = it->second;
            }
            try {
                auto flags = std::regex::ECMAScript | std::regex::optimize;
                if (r.case_insensitive) flags |= std::regex::icase;
                std::regex value(r.pattern, flags);
                if (r.group < 0 || static_cast<std::size_t>(r.group) > value.mark_count()) {
                    problems.push_back(where + ": group " + std::to_string(r.group) + " does not exist");
                    continue;
                }
                std::optional<std::regex> context;
                if (!r.context.empty()) {
                    context.emplace("^(?:" + r.context + ")$", std::regex::ECMAScript | std::regex::icase);
                }
                compiled_.push_back(Compiled{r, std::move(value), std::move(context),
                                             std::move(validator)});
            } catch (const std::regex_error& e) {
                problems.push_back(where + ": " + e.what());
            }
        }
        if (!problems.empty()) throw PatternCompileError(std::move(problems));
    }

    const std::vector<Compiled>& rules() const noexcept { return compiled_; }

private:
    static bool has_backreference(const std::string& p) {
        for (std::size_t i = 0; i + 1 < p.size(); ++i) {
            if (p[i] == '\\') {
                if (p[i + 1] >= '1' && p[i + 1] <= '9') return true;
                ++i;
            }
        }
        return false;
    }

    std::vector<Compiled> compiled_;
};

struct RuleMatch {
    EntitySpan span;
    int priority = 0;
    std::size_t rule_index = 0;
};

/// Every candidate match of every rule that passes its validator and context
/// check, before overlap resolution.
inline std::vector<RuleMatch> rule_candidates(const Document& doc, const RuleSet& rules) {
    std::vector<RuleMatch> out;
    const std::string& text = doc.text();
    std::vector<Token> tokens;
    bool tokenized = false;
    for (std::size_t ri = 0; ri < rules.rules().size(); ++ri) {
        const auto& rule = rules.rules()[ri];
        for (auto it = std::sregex_iterator(text.begin(), text.end(), rule.value); it != std::sregex_iterator();
             ++it) {
            const auto& m = *it;
            const auto g = static_cast<std::size_t>(rule.source.group);
            if (!m[g].matched || m.length(g) == 0) continue;
            const auto byte_start = static_cast<std::size_t>(m.position(g));
            const auto byte_end = byte_start + static_cast<std::size_t>(m.length(g));
            const std::string_view matched(text.data() + byte_start, byte_end - byte_start);
            if (rule.validator && !rule.validator(matched)) continue;
            const std::size_t start = doc.codepoint_at_byte(byte_start);
            const std::size_t end = doc.codepoint_at_byte(byte_end);
            if (rule.context) {
                if (!tokenized) {
                    tokens = word_punct_tokenize(text);
                    tokenized = true;
                }
                auto first_after = std::lower_bound(tokens.begin(), tokens.end(), start,
                                                    [](const Token& t, std::size_t s) { return t.end <= s; });
                // A trigger is one token or a run of adjacent tokens such as "a/c".
                bool found = false;
                int seen = 0;
                for (auto t = first_after; t != tokens.begin() && seen < rule.source.context_window && !found;
                     ++seen) {
                    --t;
                    std::string run = t->text;
                    found = std::regex_match(run, *rule.context);
                    for (auto u = t + 1; !found && u != first_after && u->start == (u - 1)->end; ++u) {
                        run += u->text;
                        found = std::regex_match(run, *rule.context);
                    }
                }
                if (!found) continue;
            }
            out.push_back(RuleMatch{EntitySpan{rule.source.label, start, end, Source::Rule, 1.0},
                                    rule.source.priority, ri});
        }
    }
    return out;
}

/// Resolves overlaps: longest first, then higher priority, then earlier start.
inline std::vector<EntitySpan> resolve_rule_matches(std::vector<RuleMatch> candidates) {
    std::sort(candidates.begin(), candidates.end(), [](const RuleMatch& a, const RuleMatch& b) {
        const auto la = a.span.length();
        const auto lb = b.span.length();
        if (la != lb) return la > lb;
        if (a.priority != b.priority) return a.priority > b.priority;
        if (a.span.start != b.span.start) return a.span.start < b.span.start;
        return a.rule_index < b.rule_index;
    });
    std::vector<EntitySpan> kept;
    for (const auto& c : candidates) {
        const bool clash =
            std::any_of(kept.begin(), kept.end(), [&](const EntitySpan& k) { return overlaps(k, c.span); });
        if (!clash) kept.push_back(c.span);
    }
    sort_by_start(kept);
    return kept;
}

/// Regex detection for the rule tier. Output is non-overlapping, sorted by
/// start, source=RULE, confidence=1.
inline std::vector<EntitySpan> detect_rules(const Document& doc, const RuleSet& rules) {
    return resolve_rule_matches(rule_candidates(doc, rules));
}

}  // namespace deid

#endif  // DEID_RULE_ENGINE_HPP
