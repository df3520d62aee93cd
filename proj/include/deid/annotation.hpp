#ifndef DEID_ANNOTATION_HPP
#define DEID_ANNOTATION_HPP

#include "deid/detail/utf8.hpp"
#include "deid/errors.hpp"
#include "deid/label_set.hpp"

#include <algorithm>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

namespace deid {

// Offsets everywhere are Unicode code-point indices into the original
// document text, half-open.

enum class Source { Rule, Model, Llm, Gold, Synth };

inline std::string_view to_string(Source s) {
    switch (s) {
        case Source::Rule: return "RULE";
        case Source::Model: return "MODEL";
        case Source::Llm: return "LLM";
        case Source::Gold: return "GOLD";
        case Source::Synth: return "SYNTH";
    }
    return "GOLD";
}

inline Source source_from_string(std::string_view s) {
    if (s == "RULE") return Source::Rule;
    if (s == "MODEL") return Source::Model;
    if (s == "LLM") return Source::Llm;
    if (s == "GOLD") return Source::Gold;
    if (s == "SYNTH") return Source::Synth;
    throw Error("unknown span source: " + std::string(s));
}

class Document {
public:
    Document() : Document("", "") {}

    Document(std::string doc_id, std::string text, std::string language_code = "en")
        : doc_id_(std::move(doc_id)),
          text_(std::move(text)),
          language_code_(std::move(language_code)),
          offsets_(detail::codepoint_byte_offsets(text_)) {}

    const std::string& doc_id() const noexcept { return doc_id_; }
    const std::string& text() const noexcept { return text_; }
    const std::string& language_code() const noexcept { return language_code_; }

    /// Ingestion-time normalization applied to the text ("none" or "NFC").
    const std::string& normalization() const noexcept { return normalization_; }
    void set_normalization(std::string form) { normalization_ = std::move(form); }

    /// Length in code points.
    std::size_t size() const noexcept { return offsets_.size() - 1; }

    std::size_t byte_offset(std::size_t cp) const {
        if (cp > size()) throw std::out_of_range("code point offset past end of document");
        return offsets_[cp];
    }

    /// Code-point index of the character starting at `byte`. Bytes inside a
    /// multi-byte sequence map to the following code point.
    std::size_t codepoint_at_byte(std::size_t byte) const {
        return static_cast<std::size_t>(std::lower_bound(offsets_.begin(), offsets_.end(), byte) - offsets_.begin());
    }

    std::string_view slice(std::size_t start, std::size_t end) const {
        if (start > end || end > size()) throw std::out_of_range("slice out of range");
        return std::string_view(text_).substr(offsets_[start], offsets_[end] - offsets_[start]);
    }

private:
    std::string doc_id_;
    std::string text_;
    std::string language_code_;
    std::string normalization_ = "none";
    std::vector<std::size_t> offsets_;
};

struct Token {
    std::string text;
    std::size_t start = 0;
    std::size_t end = 0;

    friend bool operator==(const Token&, const Token&) = default;
};

struct Sentence {
    std::vector<Token> tokens;
    std::size_t start = 0;
    std::size_t end = 0;

    friend bool operator==(const Sentence&, const Sentence&) = default;
};

struct EntitySpan {
    std::string label;
    std::size_t start = 0;
    std::size_t end = 0;
    Source source = Source::Gold;
    double confidence = 1.0;

    std::size_t length() const noexcept { return end - start; }

    friend bool operator==(const EntitySpan&, const EntitySpan&) = default;
};

/// (label, start, end) equality, ignoring provenance.
inline bool same_extent(const EntitySpan& a, const EntitySpan& b) {
    return a.label == b.label && a.start == b.start && a.end == b.end;
}

inline bool overlaps(const EntitySpan& a, const EntitySpan& b) { return a.start < b.end && b.start < a.end; }

inline void sort_by_start(std::vector<EntitySpan>& spans) {
    std::sort(spans.begin(), spans.end(), [](const EntitySpan& a, const EntitySpan& b) {
        return std::tie(a.start, a.end, a.label) < std::tie(b.start, b.end, b.label);
    });
}

using TagSequence = std::vector<std::string>;

enum class Repair { Strict, Relaxed };

struct ParsedTag {
    char prefix = 'O';  // 'O', 'B' or 'I'
    std::string label;
};

/// Parses "O", "B-L" or "I-L". Returns nullopt for anything else.
inline std::optional<ParsedTag> parse_tag(std::string_view tag) {
    if (tag == "O") return ParsedTag{};
    if (tag.size() < 3 || tag[1] != '-' || (tag[0] != 'B' && tag[0] != 'I')) return std::nullopt;
    return ParsedTag{tag[0], std::string(tag.substr(2))};
}

namespace detail {

/// Index of the token starting / ending exactly at a span boundary.
inline std::pair<std::size_t, std::size_t> token_range_for(const Sentence& sentence, const EntitySpan& span) {
    const auto& toks = sentence.tokens;
    auto first = std::find_if(toks.begin(), toks.end(), [&](const Token& t) { return t.start == span.start; });
    auto last = std::find_if(toks.begin(), toks.end(), [&](const Token& t) { return t.end == span.end; });
    if (first == toks.end() || last == toks.end() || last < first) {
        throw AlignmentError("span [" + std::to_string(span.start) + "," + std::to_string(span.end) + ") " +
                             span.label + " does not align with token boundaries");
    }
    return {static_cast<std::size_t>(first - toks.begin()), static_cast<std::size_t>(last - toks.begin())};
}

}  // namespace detail

/// Projects token-aligned, non-overlapping spans onto IOB2 tags.
inline TagSequence spans_to_bio(const Sentence& sentence, const std::vector<EntitySpan>& spans) {
    TagSequence tags(sentence.tokens.size(), "O");
    std::vector<bool> owned(sentence.tokens.size(), false);
    for (const auto& span : spans) {
        if (span.start >= span.end) throw AlignmentError("empty span for label " + span.label);
        auto [first, last] = detail::token_range_for(sentence, span);
        for (std::size_t i = first; i <= last; ++i) {
            if (owned[i]) throw OverlapError("two spans share token " + std::to_string(i));
            owned[i] = true;
            tags[i] = (i == first ? "B-" : "I-") + span.label;
        }
    }
    return tags;
}

/// Collapses B-L (I-L)* runs into spans. In Relaxed mode an I-L that does not
/// continue a same-label chunk opens a new chunk; in Strict mode it throws.
/// Malformed tags throw in Strict mode and are read as O in Relaxed mode.
inline std::vector<EntitySpan> bio_to_spans(const Sentence& sentence, const TagSequence& tags, Repair repair,
                                            const LabelSet* labels = nullptr, Source source = Source::Gold) {
    if (tags.size() != sentence.tokens.size()) {
        throw AlignmentError("tag count " + std::to_string(tags.size()) + " != token count " +
                             std::to_string(sentence.tokens.size()));
    }
    std::vector<EntitySpan> out;
    std::optional<EntitySpan> open;
    auto close = [&] {
        if (open) out.push_back(*std::exchange(open, std::nullopt));
    };
    for (std::size_t i = 0; i < tags.size(); ++i) {
        auto parsed = parse_tag(tags[i]);
        if (!parsed) {
            if (repair == Repair::Strict) throw InvalidTagError("malformed tag '" + tags[i] + "'", i);
            parsed = ParsedTag{};
        }
        if (parsed->prefix != 'O' && labels && !labels->contains(parsed->label)) {
            throw UnknownLabelError(parsed->label);
        }
        const auto& tok = sentence.tokens[i];
        if (parsed->prefix == 'O') {
            close();
        } else if (parsed->prefix == 'I' && open && open->label == parsed->label) {
            open->end = tok.end;
        } else {
            if (parsed->prefix == 'I' && repair == Repair::Strict) {
                throw InvalidTagError("I-" + parsed->label + " at position " + std::to_string(i) +
                                          " does not continue a chunk",
                                      i);
            }
            close();
            open = EntitySpan{parsed->label, tok.start, tok.end, source, 1.0};
        }
    }
    close();
    return out;
}

inline std::vector<EntitySpan> bio_to_spans(const Sentence& sentence, const TagSequence& tags, Repair repair,
                                            const LabelSet& labels, Source source = Source::Gold) {
    return bio_to_spans(sentence, tags, repair, &labels, source);
}

/// True when `tags` is well-formed IOB2.
inline bool is_valid_iob2(const TagSequence& tags) {
    std::string open;
    for (const auto& t : tags) {
        auto p = parse_tag(t);
        if (!p) return false;
        if (p->prefix == 'I' && p->label != open) return false;
        open = p->prefix == 'O' ? std::string() : p->label;
    }
    return true;
}

struct Violation {
    enum class Kind { OutOfBounds, EmptySpan, Overlap, UnknownLabel, CrossSentence };
    Kind kind;
    std::size_t span_index = 0;
    std::string detail;
};

inline std::string_view to_string(Violation::Kind k) {
    switch (k) {
        case Violation::Kind::OutOfBounds: return "OutOfBounds";
        case Violation::Kind::EmptySpan: return "EmptySpan";
        case Violation::Kind::Overlap: return "Overlap";
        case Violation::Kind::UnknownLabel: return "UnknownLabel";
        case Violation::Kind::CrossSentence: return "CrossSentence";
    }
    return "Unknown";
}

/// Reports bounds, overlap and label problems. An empty result means valid.
inline std::vector<Violation> validate_spans(const Document& doc, const std::vector<EntitySpan>& spans,
                                             const LabelSet* labels = nullptr,
                                             const std::vector<Sentence>* sentences = nullptr) {
    std::vector<Violation> out;
    for (std::size_t i = 0; i < spans.size(); ++i) {
        const auto& s = spans[i];
        if (s.end > doc.size()) {
            out.push_back({Violation::Kind::OutOfBounds, i,
                           "end " + std::to_string(s.end) + " > length " + std::to_string(doc.size())});
        }
        if (s.start >= s.end) out.push_back({Violation::Kind::EmptySpan, i, "start >= end"});
        if (labels && !labels->contains(s.label)) {
            out.push_back({Violation::Kind::UnknownLabel, i, "label '" + s.label + "'"});
        }
        if (sentences && s.start < s.end) {
            const bool inside = std::any_of(sentences->begin(), sentences->end(), [&](const Sentence& sent) {
                return sent.start <= s.start && s.end <= sent.end;
            });
            if (!inside) out.push_back({Violation::Kind::CrossSentence, i, "span crosses a sentence boundary"});
        }
    }
    std::vector<std::size_t> order(spans.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return std::tie(spans[a].start, spans[a].end) < std::tie(spans[b].start, spans[b].end);
    });
    std::size_t reach = 0;
    std::optional<std::size_t> reach_owner;
    for (std::size_t idx : order) {
        const auto& s = spans[idx];
        if (reach_owner && s.start < reach) {
            out.push_back({Violation::Kind::Overlap, idx, "overlaps span " + std::to_string(*reach_owner)});
        }
        if (s.end > reach) {
            reach = s.end;
            reach_owner = idx;
        }
    }
    return out;
}

/// Text covered by a span, taken from the original document.
inline std::string span_text(const Document& doc, const EntitySpan& span) {
    return std::string(doc.slice(span.start, span.end));
}

}  // namespace deid

#endif  // DEID_ANNOTATION_HPP
