#ifndef DEID_CONLL_HPP
#define DEID_CONLL_HPP

#include "deid/annotation.hpp"
#include "deid/detail/utf8.hpp"
#include "deid/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <iterator>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace deid {

struct ConllSentence {
    std::vector<std::string> tokens;
    TagSequence tags;

    friend bool operator==(const ConllSentence&, const ConllSentence&) = default;
};

struct ConllRecord {
    std::vector<ConllSentence> sentences;
    std::optional<std::string> doc_id;

    friend bool operator==(const ConllRecord&, const ConllRecord&) = default;
};

using ConllRecords = std::vector<ConllRecord>;

inline constexpr std::string_view kDocStart = "-DOCSTART-";

namespace detail {

inline bool is_blank_field_char(char c) { return c == ' ' || c == '\t'; }

inline std::vector<std::string_view> split_columns(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && is_blank_field_char(line[i])) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && !is_blank_field_char(line[j])) ++j;
        cols.push_back(line.substr(i, j - i));
        i = j;
    }
    return cols;
}

/// Last column, or the trailing "B-"/"I-" columns rejoined with single spaces
/// when the label itself contains spaces ("B-MEDICAL RECORD").
inline std::string last_tag(const std::vector<std::string_view>& cols) {
    auto label_word = [](std::string_view w) {
        return std::all_of(w.begin(), w.end(), [](char c) {
            return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
        });
    };
    if (parse_tag(cols.back()) || !label_word(cols.back())) return std::string(cols.back());
    for (std::size_t k = cols.size() - 1; k-- > 1;) {
        if (parse_tag(cols[k]) && cols[k] != "O") {
            std::string tag(cols[k]);
            for (std::size_t i = k + 1; i < cols.size(); ++i) tag.append(" ").append(cols[i]);
            return tag;
        }
        if (!label_word(cols[k])) break;
    }
    return std::string(cols.back());
}

/// Tags may contain single spaces only inside a valid label name.
inline bool writable_tag(std::string_view tag) {
    if (tag.empty()) return false;
    const auto cps = decode(tag);
    if (std::none_of(cps.begin(), cps.end(), [](char32_t c) { return is_space(c); })) return true;
    const auto parsed = parse_tag(tag);
    return parsed && parsed->prefix != 'O' && is_valid_label_name(parsed->label) &&
           parsed->label.find("  ") == std::string::npos;
}

inline void check_sentence_tags(const ConllSentence& s, Repair repair, std::size_t first_line) {
    if (repair != Repair::Strict) return;
    std::string open;
    for (std::size_t i = 0; i < s.tags.size(); ++i) {
        const auto parsed = parse_tag(s.tags[i]);
        if (!parsed) throw InvalidTagError("line " + std::to_string(first_line + i) + ": malformed tag '" + s.tags[i] + "'", first_line + i);
        if (parsed->prefix == 'I' && parsed->label != open) {
            throw InvalidTagError("line " + std::to_string(first_line + i) + ": " + s.tags[i] +
                                      " does not continue a chunk",
                                  first_line + i);
        }
        open = parsed->prefix == 'O' ? std::string() : parsed->label;
    }
}

}  // namespace detail

/// Reads CoNLL-style BIO data. Blank lines separate sentences, the first
/// column is the token and the last is the tag, and "-DOCSTART-" lines open
/// a new record whose optional second column (other than "-X-") is the
/// doc_id. Tags with unknown labels are kept verbatim.
inline ConllRecords read_conll(std::string_view data, Repair repair = Repair::Relaxed) {
    ConllRecords records;
    ConllSentence current;
    std::size_t current_first_line = 0;
    auto flush_sentence = [&] {
        if (current.tokens.empty()) return;
        detail::check_sentence_tags(current, repair, current_first_line);
        if (records.empty()) records.emplace_back();
        records.back().sentences.push_back(std::move(current));
        current = {};
    };
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < data.size()) {
        const auto nl = data.find('\n', pos);
        std::string_view line = data.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? data.size() : nl + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (!detail::is_valid_utf8(line)) throw FormatError("invalid UTF-8", line_no);
        const auto cols = detail::split_columns(line);
        if (cols.empty()) {
            flush_sentence();
            continue;
        }
        if (cols.front() == kDocStart) {
            flush_sentence();
            ConllRecord rec;
            if (cols.size() >= 2 && cols[1] != "-X-") rec.doc_id = std::string(cols[1]);
            records.push_back(std::move(rec));
            continue;
        }
        if (cols.size() < 2) throw FormatError("expected at least 2 columns (token and tag)", line_no);
        if (current.tokens.empty()) current_first_line = line_no;
        current.tokens.emplace_back(cols.front());
        current.tags.push_back(detail::last_tag(cols));
    }
    flush_sentence();
    return records;
}

inline ConllRecords read_conll_file(const std::string& path, Repair repair = Repair::Relaxed) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("cannot open " + path);
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_conll(data, repair);
}

/// Canonical writer: "token<SPACE>tag" lines, one blank line after each
/// sentence, LF endings. A "-DOCSTART-" line precedes every record except a
/// leading one that has no doc_id and at least one sentence.
inline std::string write_conll(const ConllRecords& records) {
    auto has_space = [](std::string_view s) {
        const auto cps = detail::decode(s);
        for (char32_t c : cps) {
            if (detail::is_space(c)) return true;
        }
        return false;
    };
    std::string out;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (r > 0 || rec.doc_id || rec.sentences.empty()) {
            out += kDocStart;
            if (rec.doc_id) {
                if (rec.doc_id->empty() || has_space(*rec.doc_id) || *rec.doc_id == "-X-") {
                    throw IOError("doc_id '" + *rec.doc_id + "' cannot be written to CoNLL");
                }
                out += ' ';
                out += *rec.doc_id;
            }
            out += "\n\n";
        }
        for (const auto& s : rec.sentences) {
            if (s.tokens.size() != s.tags.size()) throw IOError("token/tag count mismatch");
            if (s.tokens.empty()) throw IOError("empty sentence cannot be written to CoNLL");
            for (std::size_t i = 0; i < s.tokens.size(); ++i) {
                if (s.tokens[i].empty() || has_space(s.tokens[i])) {
                    throw IOError("token '" + s.tokens[i] + "' is empty or contains whitespace");
                }
                if (!detail::writable_tag(s.tags[i])) {
                    throw IOError("tag '" + s.tags[i] + "' is empty or contains whitespace outside a label name");
                }
                if (i == 0 && s.tokens[i] == kDocStart) throw IOError("token may not be -DOCSTART-");
                out += s.tokens[i];
                out += ' ';
                out += s.tags[i];
                out += '\n';
            }
            out += '\n';
        }
    }
    return out;
}

/// A CoNLL sentence rendered as text: tokens joined by single spaces, with
/// the matching Sentence (offsets into that text).
struct RenderedSentence {
    std::string text;
    Sentence sentence;
};

inline RenderedSentence render_sentence(const ConllSentence& s) {
    RenderedSentence out;
    std::size_t cp = 0;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        if (i > 0) {
            out.text += ' ';
            ++cp;
        }
        const std::size_t len = detail::codepoint_length(s.tokens[i]);
        out.sentence.tokens.push_back(Token{s.tokens[i], cp, cp + len});
        out.text += s.tokens[i];
        cp += len;
    }
    out.sentence.start = 0;
    out.sentence.end = cp;
    return out;
}

// ---------------------------------------------------------------------------
// Span-JSON: {doc_id, text, spans:[{label,start,end,source,confidence}]}

struct AnnotatedDocument {
    Document doc;
    std::vector<EntitySpan> spans;
};

inline nlohmann::json span_to_json(const EntitySpan& s) {
    return {{"label", s.label},
            {"start", s.start},
            {"end", s.end},
            {"source", std::string(to_string(s.source))},
            {"confidence", s.confidence}};
}

inline EntitySpan span_from_json(const nlohmann::json& j) {
    EntitySpan s;
    s.label = j.at("label").get<std::string>();
    s.start = j.at("start").get<std::size_t>();
    s.end = j.at("end").get<std::size_t>();
    s.source = source_from_string(j.value("source", std::string("GOLD")));
    s.confidence = j.value("confidence", 1.0);
    return s;
}

inline nlohmann::ordered_json to_span_json(const AnnotatedDocument& a) {
    nlohmann::ordered_json spans = nlohmann::ordered_json::array();
    for (const auto& s : a.spans) {
        spans.push_back(nlohmann::ordered_json{{"label", s.label},
                                               {"start", s.start},
                                               {"end", s.end},
                                               {"source", std::string(to_string(s.source))},
                                               {"confidence", s.confidence}});
    }
    nlohmann::ordered_json j;
    j["doc_id"] = a.doc.doc_id();
    j["text"] = a.doc.text();
    j["spans"] = std::move(spans);
    return j;
}

inline AnnotatedDocument from_span_json(const nlohmann::json& j, const std::string& language = "en") {
    try {
        AnnotatedDocument a{Document(j.at("doc_id").get<std::string>(), j.at("text").get<std::string>(),
                                     j.value("language", language)),
                            {}};
        for (const auto& s : j.value("spans", nlohmann::json::array())) a.spans.push_back(span_from_json(s));
        return a;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("span-JSON: ") + e.what(), 0);
    }
}

/// Accepts a single document object or an array of them.
inline std::vector<AnnotatedDocument> read_span_json(std::string_view data, const std::string& language = "en") {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(data);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("span-JSON: ") + e.what(), 0);
    }
    std::vector<AnnotatedDocument> out;
    if (j.is_array()) {
        for (const auto& item : j) out.push_back(from_span_json(item, language));
    } else {
        out.push_back(from_span_json(j, language));
    }
    return out;
}

inline std::string write_span_json(const std::vector<AnnotatedDocument>& docs) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& d : docs) arr.push_back(to_span_json(d));
    return arr.dump(2) + "\n";
}

/// CoNLL projection of annotated documents: each document becomes a record,
/// each sentence a CoNLL sentence tagged from the document's spans.
inline ConllRecords to_conll(const std::vector<AnnotatedDocument>& docs,
                             const std::vector<std::vector<Sentence>>& sentences) {
    ConllRecords out;
    for (std::size_t d = 0; d < docs.size(); ++d) {
        ConllRecord rec;
        if (!docs[d].doc.doc_id().empty()) rec.doc_id = docs[d].doc.doc_id();
        for (const auto& sent : sentences[d]) {
            std::vector<EntitySpan> inside;
            for (const auto& s : docs[d].spans) {
                if (s.start >= sent.start && s.end <= sent.end) inside.push_back(s);
            }
            ConllSentence cs;
            for (const auto& t : sent.tokens) cs.tokens.push_back(t.text);
            cs.tags = spans_to_bio(sent, inside);
            if (!cs.tokens.empty()) rec.sentences.push_back(std::move(cs));
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace deid

#endif  // DEID_CONLL_HPP
