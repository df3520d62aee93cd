#ifndef DEID_DEID_PIPELINE_HPP
#define DEID_DEID_PIPELINE_HPP

#include "deid/annotation.hpp"
#include "deid/augmenter.hpp"
#include "deid/backend_client.hpp"
#include "deid/dates.hpp"
#include "deid/detail/rng.hpp"
#include "deid/detail/utf8.hpp"
#include "deid/errors.hpp"
#include "deid/label_set.hpp"
#include "deid/rule_engine.hpp"
#include "deid/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

namespace deid {

// ---------------------------------------------------------------------------
// Merge

enum class MergeStrategy { RulePriority, ModelPriority, Longest };

inline std::string_view to_string(MergeStrategy s) {
    switch (s) {
        case MergeStrategy::RulePriority: return "RULE_PRIORITY";
        case MergeStrategy::ModelPriority: return "MODEL_PRIORITY";
        case MergeStrategy::Longest: return "LONGEST";
    }
    return "RULE_PRIORITY";
}

inline MergeStrategy merge_strategy_from_string(std::string_view s) {
    if (s == "RULE_PRIORITY") return MergeStrategy::RulePriority;
    if (s == "MODEL_PRIORITY") return MergeStrategy::ModelPriority;
    if (s == "LONGEST") return MergeStrategy::Longest;
    throw ConfigError("unknown merge policy '" + std::string(s) + "'");
}

struct MergePolicy {
    MergeStrategy strategy = MergeStrategy::RulePriority;
};

namespace detail {

/// Smaller key wins.
inline auto merge_key(const EntitySpan& s, const MergePolicy& policy, const LabelSet& labels) {
    const int rule_first = s.source == Source::Rule ? 0 : 1;
    int tier = 0;
    if (policy.strategy == MergeStrategy::RulePriority) tier = rule_first;
    if (policy.strategy == MergeStrategy::ModelPriority) tier = 1 - rule_first;
    const auto neg_len = -static_cast<std::int64_t>(s.length());
    return std::make_tuple(tier, neg_len, labels.rank(s.label), s.start, rule_first, static_cast<int>(s.source));
}

}  // namespace detail

/// Greedy resolution: candidates in policy order, each kept unless it
/// overlaps one already kept. Output sorted by start.
inline std::vector<EntitySpan> merge_spans(std::vector<EntitySpan> candidates, const MergePolicy& policy,
                                           const LabelSet& labels) {
    candidates.erase(std::remove_if(candidates.begin(), candidates.end(),
                                    [](const EntitySpan& s) { return s.start >= s.end; }),
                     candidates.end());
    std::stable_sort(candidates.begin(), candidates.end(), [&](const EntitySpan& a, const EntitySpan& b) {
        return detail::merge_key(a, policy, labels) < detail::merge_key(b, policy, labels);
    });
    std::map<std::size_t, std::size_t> kept;  // start -> end
    std::vector<EntitySpan> out;
    for (const auto& c : candidates) {
        auto it = kept.upper_bound(c.start);
        if (it != kept.end() && it->first < c.end) continue;
        if (it != kept.begin() && std::prev(it)->second > c.start) continue;
        kept.emplace(c.start, c.end);
        out.push_back(c);
    }
    sort_by_start(out);
    return out;
}

// ---------------------------------------------------------------------------
// Detection

struct DetectOptions {
    MergePolicy merge;
    bool rule_only = false;
    std::size_t max_batch = 64;  // sentences per predict request
};

/// Rule spans plus backend spans, merged. `backend` may be null only in
/// rule-only mode.
inline std::vector<EntitySpan> detect(const Document& doc, const LabelSet& labels, const RuleSet& rules,
                                      BackendClient* backend, SplitterPlugin& splitter, const DetectOptions& opt = {}) {
    std::vector<EntitySpan> candidates = detect_rules(doc, rules);
    if (!opt.rule_only) {
        if (!backend) throw BackendUnavailableError("no backend configured and rule-only mode is off");
        const auto sentences = split_sentences(doc, splitter);
        const std::size_t batch = std::max<std::size_t>(1, opt.max_batch);
        for (std::size_t first = 0; first < sentences.size(); first += batch) {
            const std::vector<Sentence> part(sentences.begin() + static_cast<std::ptrdiff_t>(first),
                                             sentences.begin() + static_cast<std::ptrdiff_t>(std::min(first + batch, sentences.size())));
            std::vector<Sentence> nonempty;
            for (const auto& s : part) {
                if (!s.tokens.empty()) nonempty.push_back(s);
            }
            if (nonempty.empty()) continue;
            const auto resp = backend->predict(make_request(doc, nonempty));
            auto spans = response_spans(nonempty, resp, labels);
            candidates.insert(candidates.end(), spans.begin(), spans.end());
        }
    }
    return merge_spans(std::move(candidates), opt.merge, labels);
}

// ---------------------------------------------------------------------------
// Rewriting

/// One replacement. Offsets are code points in the input and output text.
struct AuditEntry {
    std::string label;
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t out_start = 0;
    std::size_t out_end = 0;
    std::string replacement;

    friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

inline nlohmann::ordered_json to_json(const std::vector<AuditEntry>& audit) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& a : audit) {
        arr.push_back(nlohmann::ordered_json{{"label", a.label},
                                             {"start", a.start},
                                             {"end", a.end},
                                             {"out_start", a.out_start},
                                             {"out_end", a.out_end},
                                             {"replacement", a.replacement}});
    }
    return arr;
}

struct RewriteResult {
    std::string text;
    std::vector<AuditEntry> audit;
};

namespace detail {

inline std::vector<EntitySpan> sorted_disjoint(const Document& doc, std::vector<EntitySpan> spans) {
    sort_by_start(spans);
    for (std::size_t i = 0; i < spans.size(); ++i) {
        if (spans[i].start >= spans[i].end || spans[i].end > doc.size()) {
            throw AlignmentError("span " + spans[i].label + " [" + std::to_string(spans[i].start) + "," +
                                 std::to_string(spans[i].end) + ") is empty or out of range");
        }
        if (i > 0 && spans[i].start < spans[i - 1].end) {
            throw OverlapError("spans " + spans[i - 1].label + " and " + spans[i].label + " overlap");
        }
    }
    return spans;
}

template <class Replace>
RewriteResult rewrite(const Document& doc, const std::vector<EntitySpan>& spans, Replace&& replace) {
    RewriteResult out;
    std::size_t cursor = 0;
    std::size_t out_cp = 0;
    for (const auto& s : sorted_disjoint(doc, spans)) {
        const auto gap = doc.slice(cursor, s.start);
        out.text += gap;
        out_cp += s.start - cursor;
        const std::string replacement = replace(s);
        const std::size_t len = codepoint_length(replacement);
        out.text += replacement;
        out.audit.push_back(AuditEntry{s.label, s.start, s.end, out_cp, out_cp + len, replacement});
        out_cp += len;
        cursor = s.end;
    }
    out.text += doc.slice(cursor, doc.size());
    return out;
}

}  // namespace detail

/// Replaces each span by `format` with "{label}" substituted, "[{label}]"
/// by default. Text between spans is copied byte for byte.
inline RewriteResult mask(const Document& doc, const std::vector<EntitySpan>& spans,
                          const std::string& format = "[{label}]") {
    return detail::rewrite(doc, spans, [&](const EntitySpan& s) {
        std::string out = format;
        for (auto pos = out.find("{label}"); pos != std::string::npos; pos = out.find("{label}", pos + s.label.size())) {
            out.replace(pos, 7, s.label);
        }
        return out;
    });
}

// ---------------------------------------------------------------------------
// Leak check

struct Leak {
    std::size_t chunk_index = 0;  // into the chunk list given to leak_check
    std::size_t start = 0;        // code points in the checked text
    std::size_t end = 0;

    friend bool operator==(const Leak&, const Leak&) = default;
};

inline constexpr std::size_t kMinLeakLength = 4;

/// Occurrences of any chunk (normalized length >= 4) in `text`, compared
/// case-insensitively with whitespace runs collapsed.
inline std::vector<Leak> leak_check(std::string_view text, const std::vector<std::string>& chunks) {
    const std::u32string cps = detail::decode(text);
    std::u32string norm;
    std::vector<std::size_t> origin;  // norm index -> cps index
    std::vector<std::size_t> origin_end;
    for (std::size_t i = 0; i < cps.size();) {
        if (detail::is_space(cps[i])) {
            std::size_t j = i;
            while (j < cps.size() && detail::is_space(cps[j])) ++j;
            norm.push_back(U' ');
            origin.push_back(i);
            origin_end.push_back(j);
            i = j;
        } else {
            norm.push_back(detail::to_lower(cps[i]));
            origin.push_back(i);
            origin_end.push_back(i + 1);
            ++i;
        }
    }
    std::vector<Leak> out;
    std::set<std::u32string> seen;
    for (std::size_t c = 0; c < chunks.size(); ++c) {
        const std::u32string needle = detail::normalize_chunk(detail::decode(chunks[c]));
        if (needle.size() < kMinLeakLength || !seen.insert(needle).second) continue;
        for (auto pos = norm.find(needle); pos != std::u32string::npos; pos = norm.find(needle, pos + 1)) {
            out.push_back(Leak{c, origin[pos], origin_end[pos + needle.size() - 1]});
        }
    }
    std::sort(out.begin(), out.end(), [](const Leak& a, const Leak& b) {
        return std::tie(a.start, a.end, a.chunk_index) < std::tie(b.start, b.end, b.chunk_index);
    });
    return out;
}

inline std::vector<std::string> span_chunks(const Document& doc, const std::vector<EntitySpan>& spans) {
    std::vector<std::string> out;
    out.reserve(spans.size());
    for (const auto& s : spans) out.push_back(span_text(doc, s));
    return out;
}

// ---------------------------------------------------------------------------
// Obfuscation

enum class AgeOver89Policy { None, Aggregate };

struct ObfuscateOptions {
    AgeOver89Policy age_over_89 = AgeOver89Policy::None;
    bool prefer_dmy = false;
    int max_redraws = 64;
};

/// Document-scoped surrogate assignments. Re-identifying by design.
struct SurrogateMap {
    int date_shift_days = 0;
    std::map<std::pair<std::string, std::string>, std::string> entries;  // (label, normalized chunk) -> surrogate

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json list = nlohmann::ordered_json::array();
        for (const auto& [key, surrogate] : entries) {
            list.push_back(nlohmann::ordered_json{{"label", key.first}, {"chunk", key.second}, {"surrogate", surrogate}});
        }
        nlohmann::ordered_json j;
        j["date_shift_days"] = date_shift_days;
        j["entries"] = std::move(list);
        return j;
    }
};

struct ObfuscateResult {
    std::string text;
    SurrogateMap surrogates;
    std::vector<AuditEntry> audit;
};

/// Signed shift in +-[30, 365] days.
inline int draw_date_shift(detail::Rng& rng) {
    const auto magnitude = static_cast<int>(rng.between(30, 365));
    return rng.coin() ? magnitude : -magnitude;
}

namespace detail {

inline std::string randomize_digits(std::string_view s, Rng& rng) {
    std::string out(s);
    for (auto& c : out) {
        if (c >= '0' && c <= '9') c = static_cast<char>('0' + rng.below(10));
    }
    return out;
}

inline bool has_ascii_digit(std::string_view s) {
    return std::any_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

/// Number at the start of an AGE chunk and the rest of the chunk.
inline std::optional<std::pair<int, std::string>> leading_number(std::string_view s) {
    std::size_t i = 0;
    while (i < s.size() && s[i] >= '0' && s[i] <= '9') ++i;
    if (i == 0 || i > 3) return std::nullopt;
    return std::pair{std::stoi(std::string(s.substr(0, i))), std::string(s.substr(i))};
}

inline bool is_decade_suffix(std::string_view rest) { return rest == "s" || rest == "'s" || rest == "’s"; }

class SurrogateDrawer {
public:
    SurrogateDrawer(const FakeChunkTable& table, Rng& rng, int shift_days, const ObfuscateOptions& opt)
        : table_(table), rng_(rng), shift_days_(shift_days), opt_(opt) {}

    /// `attempt` 0 is the natural surrogate; later attempts are redraws.
    std::string draw(const std::string& label, const std::string& chunk, int attempt) {
        if (label == "DATE") {
            if (auto d = date(chunk, attempt)) return *d;
        } else if (label == "AGE") {
            if (auto a = age(chunk)) return *a;
        }
        return table_.generate(label, rng_, chunk);
    }

private:
    std::optional<std::string> date(const std::string& chunk, int attempt) {
        auto parsed = parse_date(chunk, opt_.prefer_dmy);
        if (parsed && parsed->format.kind == DateFormat::Kind::Decade) {
            int k = 0;
            while (k == 0) k = static_cast<int>(rng_.between(-3, 3));
            int decade = parsed->decade + 10 * k;
            if (parsed->format.year_digits == 2) decade = ((decade % 100) + 100) % 100;
            if (decade < 0) decade = parsed->decade + 10 * -k;
            return format_decade(decade, parsed->format);
        }
        if (parsed && attempt == 0) return shift_date(chunk, shift_days_, opt_.prefer_dmy);
        if (parsed) {
            const int extra = static_cast<int>(rng_.between(1, 28));
            return shift_date(chunk, shift_days_ + (shift_days_ < 0 ? -extra : extra), opt_.prefer_dmy);
        }
        if (has_ascii_digit(chunk)) return randomize_digits(chunk, rng_);
        return std::nullopt;
    }

    std::optional<std::string> age(const std::string& chunk) {
        auto num = leading_number(chunk);
        if (!num) return std::nullopt;
        const auto [n, rest] = *num;
        if (is_decade_suffix(rest)) {
            int k = 0;
            while (k == 0 || n / 10 * 10 + 10 * k < 0) k = static_cast<int>(rng_.between(-2, 2));
            return std::to_string(n / 10 * 10 + 10 * k) + rest;
        }
        if (n > 89 && opt_.age_over_89 == AgeOver89Policy::Aggregate) return "90+" + rest;
        const int lo = n / 10 * 10;
        int m = n;
        while (m == n) m = static_cast<int>(rng_.between(lo, lo + 9));
        return std::to_string(m) + rest;
    }

    const FakeChunkTable& table_;
    Rng& rng_;
    int shift_days_;
    const ObfuscateOptions& opt_;
};

}  // namespace detail

/// Replaces each span by a surrogate of its label. Equal (label, normalized
/// chunk) pairs share one surrogate; dates move by one per-document shift;
/// ages stay in their decade. A surrogate that would reproduce any original
/// chunk of the document is redrawn.
inline ObfuscateResult obfuscate(const Document& doc, const std::vector<EntitySpan>& spans,
                                 const FakeChunkTable& table, std::uint64_t seed, const ObfuscateOptions& opt = {}) {
    for (const auto& s : spans) {
        const bool handled_natively = s.label == "DATE" || s.label == "AGE";
        if (!handled_natively && !table.covers(s.label)) throw MissingLabelError(s.label);
    }
    ObfuscateResult result;
    detail::Rng rng(detail::mix_seed(seed, detail::fnv1a(doc.doc_id())));
    result.surrogates.date_shift_days = draw_date_shift(rng);
    detail::SurrogateDrawer drawer(table, rng, result.surrogates.date_shift_days, opt);
    const auto originals = span_chunks(doc, spans);

    auto rewritten = detail::rewrite(doc, spans, [&](const EntitySpan& s) {
        const std::string chunk = span_text(doc, s);
        const auto key = std::make_pair(s.label, detail::normalize_chunk(chunk));
        if (auto it = result.surrogates.entries.find(key); it != result.surrogates.entries.end()) return it->second;
        for (int attempt = 0; attempt <= opt.max_redraws; ++attempt) {
            std::string candidate = drawer.draw(s.label, chunk, attempt);
            if (candidate.empty()) continue;
            if (detail::normalize_chunk(candidate) == key.second) continue;
            if (!leak_check(candidate, originals).empty()) continue;
            result.surrogates.entries.emplace(key, candidate);
            return candidate;
        }
        throw Error("no surrogate for " + s.label + " avoids the original text after " +
                    std::to_string(opt.max_redraws + 1) + " draws");
    });
    result.text = std::move(rewritten.text);
    result.audit = std::move(rewritten.audit);
    return result;
}

}  // namespace deid

#endif  // DEID_DEID_PIPELINE_HPP
