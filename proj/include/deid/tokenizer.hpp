#ifndef DEID_TOKENIZER_HPP
#define DEID_TOKENIZER_HPP

#include "deid/annotation.hpp"
#include "deid/detail/subprocess.hpp"
#include "deid/detail/utf8.hpp"
#include "deid/errors.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace deid {

/// Word-punct tokenization: maximal runs of word characters (Alphabetic, Nd,
/// underscore) or of non-space non-word characters. `base` is added to every
/// offset so callers can tokenize a slice of a larger document.
inline std::vector<Token> word_punct_tokenize(std::u32string_view text, std::size_t base = 0) {
    std::vector<Token> tokens;
    std::size_t i = 0;
    while (i < text.size()) {
        if (detail::is_space(text[i])) {
            ++i;
            continue;
        }
        const bool word = detail::is_word_char(text[i]);
        std::size_t j = i + 1;
        while (j < text.size() && !detail::is_space(text[j]) && detail::is_word_char(text[j]) == word) ++j;
        tokens.push_back(Token{detail::encode(text.substr(i, j - i)), base + i, base + j});
        i = j;
    }
    return tokens;
}

inline std::vector<Token> word_punct_tokenize(std::string_view utf8_text) {
    return word_punct_tokenize(detail::decode(utf8_text));
}

using SentenceRange = std::pair<std::size_t, std::size_t>;

/// Sentence splitter. Implementations that are not safe for concurrent calls
/// return false from concurrent_safe(); split_sentences serializes them.
class SplitterPlugin {
public:
    virtual ~SplitterPlugin() = default;
    virtual std::string name() const = 0;
    virtual std::vector<SentenceRange> split(const Document& doc) = 0;
    virtual bool concurrent_safe() const { return true; }

    std::mutex& call_mutex() { return mutex_; }

private:
    std::mutex mutex_;
};

namespace detail {

inline const std::set<std::u32string>& abbreviations(std::string_view language) {
    static const std::map<std::string, std::set<std::u32string>, std::less<>> table{
        {"en", {U"Mr", U"Mrs", U"Ms", U"Dr", U"Prof", U"Sr", U"Jr", U"St", U"Mt", U"No", U"vs", U"Inc", U"Ltd",
                U"Co", U"Dept", U"approx", U"Jan", U"Feb", U"Mar", U"Apr", U"Jun", U"Jul", U"Aug", U"Sep",
                U"Sept", U"Oct", U"Nov", U"Dec", U"e.g", U"i.e", U"Fig", U"pt"}},
        {"de", {U"Dr", U"Prof", U"Hr", U"Fr", U"Nr", U"bzw", U"ca", U"usw", U"z.B", U"Str", U"Tel"}},
        {"fr", {U"M", U"Mme", U"Mlle", U"Dr", U"Pr", U"av", U"bd", U"env", U"Tél"}},
        {"it", {U"Sig", U"Sig.ra", U"Dott", U"Dott.ssa", U"Prof", U"Dr", U"ecc", U"Tel"}},
        {"es", {U"Sr", U"Sra", U"Srta", U"Dr", U"Dra", U"Prof", U"Av", U"Tel", U"etc"}},
        {"ro", {U"Dl", U"Dna", U"Dr", U"Prof", U"Str", U"Nr", U"Tel"}},
        {"tr", {U"Dr", U"Prof", U"Doç", U"Uzm", U"Sn", U"Cad", U"Sok", U"No", U"Tel"}},
        {"ar", {U"د"}},
    };
    auto it = table.find(language);
    return it == table.end() ? table.at("en") : it->second;
}

inline bool is_terminator(char32_t c) { return c == U'.' || c == U'!' || c == U'?' || c == U'؟'; }

inline bool is_closer(char32_t c) {
    return c == U'"' || c == U'\'' || c == U')' || c == U']' || c == U'”' || c == U'’' ||
           c == U'»';
}

inline bool is_opener(char32_t c) {
    return c == U'"' || c == U'\'' || c == U'(' || c == U'[' || c == U'“' || c == U'‘' ||
           c == U'«';
}

}  // namespace detail

/// Dependency-free splitter: a terminator (. ! ? ؟) followed by whitespace and
/// an uppercase letter, digit, opening quote or caseless-script letter ends a
/// sentence, unless the word before a '.' is a known abbreviation or a single
/// capital initial.
class DefaultSplitter : public SplitterPlugin {
public:
    explicit DefaultSplitter(std::string language = "en") : language_(std::move(language)) {}

    std::string name() const override { return "default:" + language_; }

    std::vector<SentenceRange> split(const Document& doc) override {
        return split_text(detail::decode(doc.text()));
    }

    std::vector<SentenceRange> split_text(std::u32string_view text) const {
        std::vector<SentenceRange> out;
        const auto& abbrev = detail::abbreviations(language_);
        std::size_t i = 0;
        const std::size_t n = text.size();
        while (i < n && detail::is_space(text[i])) ++i;
        std::size_t start = i;
        for (; i < n; ++i) {
            if (!detail::is_terminator(text[i])) continue;
            std::size_t j = i + 1;
            while (j < n && (detail::is_terminator(text[j]) || detail::is_closer(text[j]))) ++j;
            if (j >= n || !detail::is_space(text[j])) continue;
            std::size_t k = j;
            while (k < n && detail::is_space(text[k])) ++k;
            if (k >= n) continue;
            const char32_t next = text[k];
            if (!(detail::is_upper(next) || detail::is_digit(next) || detail::is_opener(next) ||
                  detail::is_caseless_letter(next))) {
                continue;
            }
            if (text[i] == U'.' && guarded(text, i, abbrev)) continue;
            out.emplace_back(start, j);
            start = k;
            i = k - 1;
        }
        std::size_t end = n;
        while (end > start && detail::is_space(text[end - 1])) --end;
        if (end > start) out.emplace_back(start, end);
        return out;
    }

private:
    static bool guarded(std::u32string_view text, std::size_t dot, const std::set<std::u32string>& abbrev) {
        std::size_t w = dot;
        while (w > 0 && (detail::is_word_char(text[w - 1]) || text[w - 1] == U'.')) --w;
        std::u32string word(text.substr(w, dot - w));
        if (word.empty()) return false;
        if (abbrev.count(word)) return true;
        // Single capital initial such as "J." in "J. Smith".
        return word.size() == 1 && detail::is_upper(word[0]);
    }

    std::string language_;
};

/// Splitter backed by an external executable: the document text goes to the
/// child's stdin as UTF-8; the child prints "start<TAB>end" lines.
class ExternalSplitter : public SplitterPlugin {
public:
    explicit ExternalSplitter(std::string command, bool concurrent = false,
                              std::chrono::milliseconds timeout = std::chrono::seconds(30))
        : command_(std::move(command)), concurrent_(concurrent), timeout_(timeout) {}

    std::string name() const override { return "external:" + command_; }
    bool concurrent_safe() const override { return concurrent_; }

    std::vector<SentenceRange> split(const Document& doc) override {
        detail::FilterResult result;
        try {
            result = detail::run_filter(command_, doc.text(), timeout_);
        } catch (const TransportError& e) {
            throw PluginError(std::string("splitter: ") + e.what());
        }
        if (result.exit_code != 0) {
            throw PluginError("splitter '" + command_ + "' exited with " + std::to_string(result.exit_code));
        }
        std::vector<SentenceRange> ranges;
        std::string_view rest = result.output;
        std::size_t line_no = 0;
        while (!rest.empty()) {
            const auto nl = rest.find('\n');
            std::string_view line = rest.substr(0, nl);
            rest = nl == std::string_view::npos ? std::string_view() : rest.substr(nl + 1);
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            if (line.empty()) continue;
            const auto tab = line.find('\t');
            std::size_t a = 0;
            std::size_t b = 0;
            if (tab == std::string_view::npos ||
                std::from_chars(line.data(), line.data() + tab, a).ec != std::errc() ||
                std::from_chars(line.data() + tab + 1, line.data() + line.size(), b).ec != std::errc()) {
                throw PluginError("splitter output line " + std::to_string(line_no) + " is not 'start<TAB>end'");
            }
            ranges.emplace_back(a, b);
        }
        return ranges;
    }

private:
    std::string command_;
    bool concurrent_;
    std::chrono::milliseconds timeout_;
};

/// Splits `doc` with `plugin`, validates the ranges and tokenizes each sentence.
inline std::vector<Sentence> split_sentences(const Document& doc, SplitterPlugin& plugin) {
    std::vector<SentenceRange> ranges;
    if (plugin.concurrent_safe()) {
        ranges = plugin.split(doc);
    } else {
        std::lock_guard lock(plugin.call_mutex());
        ranges = plugin.split(doc);
    }
    const std::u32string text = detail::decode(doc.text());
    std::size_t prev_end = 0;
    for (const auto& [a, b] : ranges) {
        if (a >= b || b > text.size()) {
            throw PluginError(plugin.name() + ": invalid range [" + std::to_string(a) + "," + std::to_string(b) +
                              ")");
        }
        if (a < prev_end) throw PluginError(plugin.name() + ": overlapping or unordered sentence ranges");
        for (std::size_t k = prev_end; k < a; ++k) {
            if (!detail::is_space(text[k])) {
                throw PluginError(plugin.name() + ": non-whitespace text at " + std::to_string(k) +
                                  " is outside every sentence");
            }
        }
        prev_end = b;
    }
    for (std::size_t k = prev_end; k < text.size(); ++k) {
        if (!detail::is_space(text[k])) {
            throw PluginError(plugin.name() + ": non-whitespace text at " + std::to_string(k) +
                              " is outside every sentence");
        }
    }
    std::vector<Sentence> out;
    out.reserve(ranges.size());
    for (const auto& [a, b] : ranges) {
        out.push_back(Sentence{word_punct_tokenize(std::u32string_view(text).substr(a, b - a), a), a, b});
    }
    return out;
}

inline std::vector<Sentence> split_sentences(const Document& doc) {
    DefaultSplitter splitter(doc.language_code());
    return split_sentences(doc, splitter);
}

/// Whole document as one sentence; used where sentence structure is irrelevant.
inline Sentence as_single_sentence(const Document& doc) {
    return Sentence{word_punct_tokenize(doc.text()), 0, doc.size()};
}

}  // namespace deid

#endif  // DEID_TOKENIZER_HPP
