#ifndef DEID_AUGMENTER_HPP
#define DEID_AUGMENTER_HPP

#include "deid/annotation.hpp"
#include "deid/conll.hpp"
#include "deid/dates.hpp"
#include "deid/detail/parallel.hpp"
#include "deid/detail/rng.hpp"
#include "deid/detail/subprocess.hpp"
#include "deid/detail/utf8.hpp"
#include "deid/errors.hpp"
#include "deid/label_set.hpp"
#include "deid/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace deid {

// ---------------------------------------------------------------------------
// Fake chunk table

namespace fake {

struct Literal {
    std::string text;
};

/// Digit/letter pattern: \d digit, \L upper, \l lower, \w upper or digit,
/// {n} and {m,n} repeat the previous atom, \x escapes x, other characters
/// are literal.
struct Pattern {
    std::string spec;
};

/// Random date in [from, to] written with tokens YYYY YY MM M DD D Month Mon.
struct Date {
    std::string format;
    std::chrono::sys_days from;
    std::chrono::sys_days to;
};

struct Pool {
    std::string name;
};

/// Text with {pool} references, e.g. "{first_names} {last_names}".
struct Compose {
    std::string text;
};

/// The slot's own original chunk.
struct Original {};

using Template = std::variant<Literal, Pattern, Date, Pool, Compose, Original>;

}  // namespace fake

namespace detail {

inline bool has_placeholder_delimiter(std::string_view s) { return s.find("__") != std::string_view::npos; }

inline std::chrono::sys_days parse_iso_day(const std::string& s) {
    auto p = parse_date(s);
    if (!p || p->format.kind != DateFormat::Kind::Numeric || p->format.order != DateFormat::Order::YMD) {
        throw ConfigError("expected YYYY-MM-DD date, got '" + s + "'");
    }
    return std::chrono::sys_days{p->date};
}

inline char32_t random_char(Rng& rng, char kind) {
    static constexpr std::string_view upper = "ABCDEFGHIJKLMNOPQRSTUVWXYZ";
    static constexpr std::string_view lower = "abcdefghijklmnopqrstuvwxyz";
    static constexpr std::string_view alnum = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
    switch (kind) {
        case 'd': return static_cast<char32_t>('0' + rng.below(10));
        case 'L': return static_cast<char32_t>(upper[rng.below(upper.size())]);
        case 'l': return static_cast<char32_t>(lower[rng.below(lower.size())]);
        default: return static_cast<char32_t>(alnum[rng.below(alnum.size())]);
    }
}

inline std::string expand_pattern(const std::string& spec, Rng& rng) {
    const std::u32string s = decode(spec);
    struct Atom {
        char kind;  // 0 = literal
        char32_t literal;
    };
    std::string out;
    std::optional<Atom> last;
    auto emit = [&](const Atom& a) { append_utf8(out, a.kind ? random_char(rng, a.kind) : a.literal); };
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == U'\\' && i + 1 < s.size()) {
            const char32_t c = s[++i];
            Atom a{(c == U'd' || c == U'L' || c == U'l' || c == U'w') ? static_cast<char>(c) : char(0), c};
            emit(a);
            last = a;
        } else if (s[i] == U'{' && last) {
            const auto close = s.find(U'}', i);
            if (close == std::u32string::npos) throw ConfigError("unterminated repeat in pattern '" + spec + "'");
            const std::string body = encode(s.substr(i + 1, close - i - 1));
            const auto comma = body.find(',');
            int lo = 0;
            int hi = 0;
            try {
                lo = std::stoi(body.substr(0, comma));
                hi = comma == std::string::npos ? lo : std::stoi(body.substr(comma + 1));
            } catch (const std::exception&) {
                throw ConfigError("bad repeat '{" + body + "}' in pattern '" + spec + "'");
            }
            if (lo < 1 || hi < lo) throw ConfigError("bad repeat '{" + body + "}' in pattern '" + spec + "'");
            const auto count = rng.between(lo, hi);
            for (std::int64_t k = 1; k < count; ++k) emit(*last);
            i = close;
        } else {
            Atom a{0, s[i]};
            emit(a);
            last = a;
        }
    }
    return out;
}

inline std::string format_with_tokens(const std::string& fmt, const std::chrono::year_month_day& ymd) {
    const int y = static_cast<int>(ymd.year());
    const unsigned m = static_cast<unsigned>(ymd.month());
    const unsigned d = static_cast<unsigned>(ymd.day());
    static const std::pair<std::string_view, int> tokens[] = {{"YYYY", 0}, {"Month", 1}, {"Mon", 2}, {"YY", 3},
                                                              {"MM", 4},   {"DD", 5},    {"M", 6},   {"D", 7}};
    std::string out;
    char buf[16];
    for (std::size_t i = 0; i < fmt.size();) {
        bool matched = false;
        for (const auto& [tok, id] : tokens) {
            if (fmt.compare(i, tok.size(), tok) != 0) continue;
            switch (id) {
                case 0: std::snprintf(buf, sizeof buf, "%04d", y); out += buf; break;
                case 1: out += kMonthNames[m - 1]; break;
                case 2: out += kMonthNames[m - 1].substr(0, 3); break;
                case 3: std::snprintf(buf, sizeof buf, "%02d", y % 100); out += buf; break;
                case 4: out += pad(m, true); break;
                case 5: out += pad(d, true); break;
                case 6: out += pad(m, false); break;
                case 7: out += pad(d, false); break;
            }
            i += tok.size();
            matched = true;
            break;
        }
        if (!matched) out += fmt[i++];
    }
    return out;
}

}  // namespace detail

/// Per-label surface-form templates used for augmentation and surrogates.
class FakeChunkTable {
public:
    FakeChunkTable() = default;

    explicit FakeChunkTable(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const noexcept { return seed_; }

    void add_pool(const std::string& name, std::vector<std::string> values) {
        if (values.empty()) throw ConfigError("pool '" + name + "' is empty");
        for (const auto& v : values) check_chunk(v, "pool " + name);
        pools_[name] = std::move(values);
    }

    void add(const std::string& label, fake::Template t) {
        if (auto* lit = std::get_if<fake::Literal>(&t)) check_chunk(lit->text, "label " + label);
        templates_[label].push_back(std::move(t));
    }

    bool covers(const std::string& label) const { return templates_.count(label) > 0; }

    std::vector<std::string> labels() const {
        std::vector<std::string> out;
        for (const auto& [l, _] : templates_) out.push_back(l);
        return out;
    }

    /// True when every template of `label` is Original.
    bool originals_only(const std::string& label) const {
        auto it = templates_.find(label);
        return it != templates_.end() && std::all_of(it->second.begin(), it->second.end(), [](const auto& t) {
                   return std::holds_alternative<fake::Original>(t);
               });
    }

    /// One chunk for `label`. `original` feeds Original templates.
    std::string generate(const std::string& label, detail::Rng& rng, std::string_view original = {}) const {
        auto it = templates_.find(label);
        if (it == templates_.end() || it->second.empty()) throw MissingLabelError(label);
        const auto& t = it->second[rng.below(it->second.size())];
        std::string out = std::visit([&](const auto& v) { return render(v, rng, original); }, t);
        if (out.empty() && !std::holds_alternative<fake::Original>(t)) {
            throw ConfigError("template for " + label + " produced an empty chunk");
        }
        if (detail::has_placeholder_delimiter(out) && !std::holds_alternative<fake::Original>(t)) {
            throw ConfigError("template for " + label + " produced a chunk containing \"__\"");
        }
        return out;
    }

    /// {"seed": n, "pools": {name: [..]}, "labels": {LABEL: [template, ..]}}
    /// where a template is a string (literal) or one of {"literal": s},
    /// {"pattern": s}, {"date": fmt, "from": iso, "to": iso}, {"pool": name},
    /// {"compose": s}, {"original": true}.
    static FakeChunkTable from_json(const nlohmann::json& j) {
        try {
            FakeChunkTable t(j.value("seed", std::uint64_t{0}));
            const auto pools = j.value("pools", nlohmann::json::object());
            for (const auto& [name, values] : pools.items()) {
                t.add_pool(name, values.get<std::vector<std::string>>());
            }
            for (const auto& [label, list] : j.at("labels").items()) {
                if (!list.is_array() || list.empty()) throw ConfigError("label " + label + " needs a template list");
                for (const auto& item : list) t.add(label, parse_template(item));
            }
            for (const auto& [label, list] : t.templates_) {
                for (const auto& tpl : list) t.check_refs(label, tpl);
            }
            return t;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("fake-chunk table: ") + e.what());
        }
    }

    static FakeChunkTable load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw IOError("cannot open " + path);
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }

    /// A table whose every label returns the slot's original chunk.
    static FakeChunkTable originals(const std::vector<std::string>& labels) {
        FakeChunkTable t;
        for (const auto& l : labels) t.add(l, fake::Original{});
        return t;
    }

private:
    static void check_chunk(const std::string& s, const std::string& where) {
        if (s.empty()) throw ConfigError(where + ": empty chunk");
        if (detail::has_placeholder_delimiter(s)) throw ConfigError(where + ": chunk '" + s + "' contains \"__\"");
    }

    static fake::Template parse_template(const nlohmann::json& item) {
        if (item.is_string()) return fake::Literal{item.get<std::string>()};
        if (item.contains("literal")) return fake::Literal{item.at("literal").get<std::string>()};
        if (item.contains("pattern")) return fake::Pattern{item.at("pattern").get<std::string>()};
        if (item.contains("date")) {
            fake::Date d{item.at("date").get<std::string>(),
                         detail::parse_iso_day(item.value("from", std::string("1950-01-01"))),
                         detail::parse_iso_day(item.value("to", std::string("2030-12-31")))};
            if (d.to < d.from) throw ConfigError("date template range is empty");
            return d;
        }
        if (item.contains("pool")) return fake::Pool{item.at("pool").get<std::string>()};
        if (item.contains("compose")) return fake::Compose{item.at("compose").get<std::string>()};
        if (item.value("original", false)) return fake::Original{};
        throw ConfigError("unrecognized template: " + item.dump());
    }

    void check_refs(const std::string& label, const fake::Template& t) const {
        if (auto* p = std::get_if<fake::Pool>(&t)) {
            if (!pools_.count(p->name)) throw ConfigError(label + ": unknown pool '" + p->name + "'");
        } else if (auto* c = std::get_if<fake::Compose>(&t)) {
            for (const auto& ref : compose_refs(c->text)) {
                if (!pools_.count(ref)) throw ConfigError(label + ": unknown pool '" + ref + "'");
            }
        } else if (auto* pat = std::get_if<fake::Pattern>(&t)) {
            detail::Rng probe(0);
            check_chunk(detail::expand_pattern(pat->spec, probe), label + " pattern");
        }
    }

    static std::vector<std::string> compose_refs(const std::string& text) {
        std::vector<std::string> refs;
        for (std::size_t i = text.find('{'); i != std::string::npos; i = text.find('{', i + 1)) {
            const auto close = text.find('}', i);
            if (close == std::string::npos) throw ConfigError("unterminated reference in '" + text + "'");
            refs.push_back(text.substr(i + 1, close - i - 1));
        }
        return refs;
    }

    std::string render(const fake::Literal& l, detail::Rng&, std::string_view) const { return l.text; }

    std::string render(const fake::Pattern& p, detail::Rng& rng, std::string_view) const {
        return detail::expand_pattern(p.spec, rng);
    }

    std::string render(const fake::Date& d, detail::Rng& rng, std::string_view) const {
        const auto span = (d.to - d.from).count();
        const auto day = d.from + std::chrono::days{rng.between(0, span)};
        return detail::format_with_tokens(d.format, std::chrono::year_month_day{day});
    }

    std::string render(const fake::Pool& p, detail::Rng& rng, std::string_view) const {
        const auto& values = pools_.at(p.name);
        return values[rng.below(values.size())];
    }

    std::string render(const fake::Compose& c, detail::Rng& rng, std::string_view) const {
        std::string out;
        std::size_t i = 0;
        while (i < c.text.size()) {
            if (c.text[i] == '{') {
                const auto close = c.text.find('}', i);
                const auto& values = pools_.at(c.text.substr(i + 1, close - i - 1));
                out += values[rng.below(values.size())];
                i = close + 1;
            } else {
                out += c.text[i++];
            }
        }
        return out;
    }

    std::string render(const fake::Original&, detail::Rng&, std::string_view original) const {
        return std::string(original);
    }

    std::uint64_t seed_ = 0;
    std::map<std::string, std::vector<fake::Template>> templates_;
    std::map<std::string, std::vector<std::string>> pools_;
};

// ---------------------------------------------------------------------------
// Candidates and placeholders

struct Candidate {
    std::size_t record = 0;
    std::size_t sentence = 0;
    RenderedSentence rendered;
    std::vector<EntitySpan> spans;
};

/// Sentences that contain at least one span with a target label.
inline std::vector<Candidate> extract_candidates(const ConllRecords& records, const std::set<std::string>& targets) {
    std::vector<Candidate> out;
    if (targets.empty()) return out;
    for (std::size_t r = 0; r < records.size(); ++r) {
        for (std::size_t s = 0; s < records[r].sentences.size(); ++s) {
            const auto& cs = records[r].sentences[s];
            auto rendered = render_sentence(cs);
            auto spans = bio_to_spans(rendered.sentence, cs.tags, Repair::Relaxed);
            const bool hit = std::any_of(spans.begin(), spans.end(),
                                         [&](const EntitySpan& e) { return targets.count(e.label) > 0; });
            if (hit) out.push_back(Candidate{r, s, std::move(rendered), std::move(spans)});
        }
    }
    return out;
}

/// Target labels used for a language: the English preset augments three
/// sparse labels, other languages augment every model label.
inline std::set<std::string> augmentation_preset(const LabelSet& labels) {
    if (labels.language_code() == "en") return {"ORGANIZATION", "PROFESSION", "LOCATION-OTHER"};
    return {labels.model_labels().begin(), labels.model_labels().end()};
}

struct PlaceholderSlot {
    std::string id;
    std::string label;
    std::string original;

    friend bool operator==(const PlaceholderSlot&, const PlaceholderSlot&) = default;
};

struct PlaceholderDoc {
    std::string text;
    std::vector<PlaceholderSlot> slots;
};

inline std::string placeholder_id(const std::string& label, std::size_t k) {
    std::string name = label;
    std::replace(name.begin(), name.end(), ' ', '_');
    return "__" + name + "_" + std::to_string(k) + "__";
}

/// Replaces every span with `__LABEL_k__`, k counting per label from 1.
inline PlaceholderDoc to_placeholders(const std::string& text, std::vector<EntitySpan> spans) {
    sort_by_start(spans);
    for (std::size_t i = 1; i < spans.size(); ++i) {
        if (spans[i].start < spans[i - 1].end) {
            throw OverlapError("spans " + spans[i - 1].label + " and " + spans[i].label + " overlap");
        }
    }
    const Document doc("", text);
    PlaceholderDoc out;
    std::map<std::string, std::size_t> ordinal;
    std::size_t cursor = 0;
    for (const auto& s : spans) {
        if (s.end > doc.size() || s.start >= s.end) throw AlignmentError("span out of range for " + s.label);
        out.text += doc.slice(cursor, s.start);
        PlaceholderSlot slot{placeholder_id(s.label, ++ordinal[s.label]), s.label, std::string(doc.slice(s.start, s.end))};
        out.text += slot.id;
        out.slots.push_back(std::move(slot));
        cursor = s.end;
    }
    out.text += doc.slice(cursor, doc.size());
    return out;
}

// ---------------------------------------------------------------------------
// Translation

class TranslatorPlugin {
public:
    virtual ~TranslatorPlugin() = default;
    virtual std::string name() const = 0;
    virtual std::string translate(const std::string& text) = 0;

    virtual std::vector<std::string> translate_batch(const std::vector<std::string>& texts) {
        std::vector<std::string> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(translate(t));
        return out;
    }
};

class IdentityTranslator : public TranslatorPlugin {
public:
    std::string name() const override { return "identity"; }
    std::string translate(const std::string& text) override { return text; }
};

/// Word-for-word replacement over word-punct tokens; whitespace and
/// unlisted tokens pass through.
class DictionaryTranslator : public TranslatorPlugin {
public:
    explicit DictionaryTranslator(std::map<std::string, std::string> dictionary)
        : dictionary_(std::move(dictionary)) {}

    std::string name() const override { return "dictionary"; }

    std::string translate(const std::string& text) override {
        const std::u32string cps = detail::decode(text);
        std::string out;
        std::size_t cursor = 0;
        for (const auto& tok : word_punct_tokenize(cps)) {
            out += detail::encode(std::u32string_view(cps).substr(cursor, tok.start - cursor));
            auto it = dictionary_.find(tok.text);
            out += it == dictionary_.end() ? tok.text : it->second;
            cursor = tok.end;
        }
        out += detail::encode(std::u32string_view(cps).substr(cursor));
        return out;
    }

private:
    std::map<std::string, std::string> dictionary_;
};

/// External executable: text on stdin, translation on stdout, one document
/// per invocation. In batch mode a single invocation reads NDJSON lines
/// {"text": ...} and answers one {"text": ...} line per input line.
class ExternalTranslator : public TranslatorPlugin {
public:
    explicit ExternalTranslator(std::string command, bool batch = false,
                                std::chrono::milliseconds timeout = std::chrono::seconds(60))
        : command_(std::move(command)), batch_(batch), timeout_(timeout) {}

    std::string name() const override { return "external:" + command_; }

    std::string translate(const std::string& text) override {
        if (batch_) return translate_batch({text}).front();
        auto result = run(text);
        if (!result.output.empty() && result.output.back() == '\n' && (text.empty() || text.back() != '\n')) {
            result.output.pop_back();
        }
        return result.output;
    }

    std::vector<std::string> translate_batch(const std::vector<std::string>& texts) override {
        if (!batch_) return TranslatorPlugin::translate_batch(texts);
        std::string input;
        for (const auto& t : texts) input += nlohmann::json{{"text", t}}.dump() + "\n";
        const auto result = run(input);
        std::vector<std::string> out;
        std::size_t pos = 0;
        while (pos < result.output.size()) {
            auto nl = result.output.find('\n', pos);
            if (nl == std::string::npos) nl = result.output.size();
            const std::string line = result.output.substr(pos, nl - pos);
            pos = nl + 1;
            if (line.empty()) continue;
            try {
                out.push_back(nlohmann::json::parse(line).at("text").get<std::string>());
            } catch (const nlohmann::json::exception& e) {
                throw PluginError("translator " + command_ + ": bad NDJSON line: " + e.what());
            }
        }
        if (out.size() != texts.size()) {
            throw PluginError("translator " + command_ + " returned " + std::to_string(out.size()) + " lines for " +
                              std::to_string(texts.size()) + " inputs");
        }
        return out;
    }

private:
    detail::FilterResult run(const std::string& input) {
        detail::FilterResult result;
        try {
            result = detail::run_filter(command_, input, timeout_);
        } catch (const Error& e) {
            throw PluginError("translator " + command_ + ": " + e.what());
        }
        if (result.exit_code != 0) {
            throw PluginError("translator " + command_ + " exited with status " + std::to_string(result.exit_code));
        }
        return result;
    }

    std::string command_;
    bool batch_;
    std::chrono::milliseconds timeout_;
};

namespace detail {

inline std::size_t count_occurrences(std::string_view text, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
    return n;
}

inline void verify_placeholders(const PlaceholderDoc& doc) {
    std::vector<std::string> missing;
    std::vector<std::string> duplicated;
    for (const auto& slot : doc.slots) {
        const auto n = count_occurrences(doc.text, slot.id);
        if (n == 0) missing.push_back(slot.id);
        if (n > 1) duplicated.push_back(slot.id);
    }
    if (!missing.empty() || !duplicated.empty()) throw PlaceholderLostError(missing, duplicated);
}

}  // namespace detail

/// Runs the translator and checks that every placeholder survives once.
inline PlaceholderDoc translate(const PlaceholderDoc& doc, TranslatorPlugin& translator) {
    PlaceholderDoc out{translator.translate(doc.text), doc.slots};
    detail::verify_placeholders(out);
    return out;
}

inline std::vector<PlaceholderDoc> translate_all(const std::vector<PlaceholderDoc>& docs, TranslatorPlugin& translator) {
    std::vector<std::string> texts;
    texts.reserve(docs.size());
    for (const auto& d : docs) texts.push_back(d.text);
    auto translated = translator.translate_batch(texts);
    std::vector<PlaceholderDoc> out;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        out.push_back(PlaceholderDoc{std::move(translated[i]), docs[i].slots});
        detail::verify_placeholders(out.back());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Refill and BIO emission

struct SyntheticSentence {
    std::string text;
    std::vector<EntitySpan> spans;
};

/// Replaces each placeholder with a generated chunk of its label. Spans are
/// code-point offsets of the injected chunks.
inline SyntheticSentence refill(const PlaceholderDoc& doc, const FakeChunkTable& table, std::uint64_t seed) {
    for (const auto& slot : doc.slots) {
        if (!table.covers(slot.label)) throw MissingLabelError(slot.label);
    }
    std::vector<std::pair<std::size_t, const PlaceholderSlot*>> order;
    for (const auto& slot : doc.slots) {
        const auto pos = doc.text.find(slot.id);
        if (pos == std::string::npos) throw PlaceholderLostError({slot.id}, {});
        order.emplace_back(pos, &slot);
    }
    std::sort(order.begin(), order.end());
    detail::Rng rng(seed);
    SyntheticSentence out;
    std::size_t cursor = 0;
    std::size_t cp = 0;
    for (const auto& [pos, slot] : order) {
        const std::string_view before = std::string_view(doc.text).substr(cursor, pos - cursor);
        out.text += before;
        cp += detail::codepoint_length(before);
        const std::string chunk = table.generate(slot->label, rng, slot->original);
        const std::size_t len = detail::codepoint_length(chunk);
        out.text += chunk;
        out.spans.push_back(EntitySpan{slot->label, cp, cp + len, Source::Synth, 1.0});
        cp += len;
        cursor = pos + slot->id.size();
    }
    out.text += std::string_view(doc.text).substr(cursor);
    return out;
}

/// Word-punct tokenizes each sentence and tags it from its spans.
inline ConllSentence to_conll_sentence(const SyntheticSentence& s) {
    const std::u32string cps = detail::decode(s.text);
    Sentence sent;
    sent.tokens = word_punct_tokenize(cps);
    sent.start = 0;
    sent.end = cps.size();
    ConllSentence out;
    for (const auto& t : sent.tokens) out.tokens.push_back(t.text);
    out.tags = spans_to_bio(sent, s.spans);
    return out;
}

inline ConllRecords emit_bio(const std::vector<SyntheticSentence>& pairs) {
    ConllRecords out;
    if (pairs.empty()) return out;
    out.emplace_back();
    for (const auto& p : pairs) out.back().sentences.push_back(to_conll_sentence(p));
    return out;
}

// ---------------------------------------------------------------------------
// Full loop

struct AugmentOptions {
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
};

/// extract -> placeholders -> translate -> refill -> BIO. Output keeps the
/// record structure (and doc_id) of the sentences it came from; records
/// without candidates are dropped. Sentence i draws from seed mixed with i.
inline ConllRecords augment(const ConllRecords& corpus, const std::set<std::string>& targets,
                            TranslatorPlugin& translator, const FakeChunkTable& table, const AugmentOptions& opt = {}) {
    const auto candidates = extract_candidates(corpus, targets);
    std::vector<PlaceholderDoc> placeholders;
    placeholders.reserve(candidates.size());
    for (const auto& c : candidates) placeholders.push_back(to_placeholders(c.rendered.text, c.spans));
    const auto translated = translate_all(placeholders, translator);
    std::vector<ConllSentence> sentences(candidates.size());
    detail::parallel_for(candidates.size(), opt.jobs, [&](std::size_t i) {
        sentences[i] = to_conll_sentence(refill(translated[i], table, detail::mix_seed(opt.seed, i)));
    });
    ConllRecords out;
    std::optional<std::size_t> current;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (!current || *current != candidates[i].record) {
            current = candidates[i].record;
            out.push_back(ConllRecord{{}, corpus[*current].doc_id});
        }
        out.back().sentences.push_back(std::move(sentences[i]));
    }
    return out;
}

}  // namespace deid

#endif  // DEID_AUGMENTER_HPP
