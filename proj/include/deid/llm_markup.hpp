#ifndef DEID_LLM_MARKUP_HPP
#define DEID_LLM_MARKUP_HPP

#include "deid/annotation.hpp"
#include "deid/detail/utf8.hpp"
#include "deid/label_set.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace deid {

// ---------------------------------------------------------------------------
// Prompt

struct LabelDefinition {
    std::string display;  // name written in the prompt and in markers
    std::string text;     // parenthesised definition
};

/// Definition lines per canonical label. LOCATION-OTHER and MEDICAL RECORD
/// are presented to the model as LOCATION and MEDICALRECORD.
inline const std::map<std::string, LabelDefinition, std::less<>>& label_definitions() {
    static const std::map<std::string, LabelDefinition, std::less<>> defs{
        {"AGE",
         {"AGE",
          "Identifies the age number or age-related information. Example: In \"88 years old,\" 88 would be "
          "marked as AGE. In \"in his 50's,\"50's would be marked as AGE."}},
        {"CITY", {"CITY", "Identifies the name of a city."}},
        {"COUNTRY", {"COUNTRY", "Identifies the name of a country."}},
        {"DATE",
         {"DATE",
          "Identifies specific dates or years. Example: In \"He was admitted on 03/29/2089,\" 03/29/2089 would "
          "be marked as DATE. In \"His surgery was in the 1980's,\" 1980's would be marked as DATE. In \"His "
          "record was marked on 2089-08-24\" 2089-08-24 would be marked at DATE."}},
        {"DEVICE",
         {"DEVICE",
          "Identifies serial numbers, item code or product code of a medical device mentioned. Example: In "
          "\"The AA 737 pacemaker was implanted,\" AA 737 would be marked as DEVICE."}},
        {"DOCTOR",
         {"DOCTOR",
          "Identifies the name of a doctor or healthcare professional. Only the name should be marked, not the "
          "title such as \"Dr.\", \"M.D.\"."}},
        {"HOSPITAL", {"HOSPITAL", "Identifies the name of a hospital or nursing home."}},
        {"IDNUM", {"IDNUM", "Identifies identification numbers such as medical record or patient numbers."}},
        {"LOCATION", {"LOCATION", "Identifies specific locations related to healthcare, excluding city or country."}},
        {"LOCATION-OTHER",
         {"LOCATION", "Identifies specific locations related to healthcare, excluding city or country."}},
        {"MEDICAL RECORD", {"MEDICALRECORD", "Identifies medical record numbers or similar identifiers."}},
        {"ORGANIZATION", {"ORGANIZATION", "Identifies names of organizations or institutions."}},
        {"PATIENT",
         {"PATIENT",
          "Identifies the patient's name. Only the name should be marked, not titles like \"Mr.\" or \"Mrs.\""}},
        {"PHONE", {"PHONE", "Identifies phone numbers, including fax numbers."}},
        {"PROFESSION", {"PROFESSION", "Identifies professions or job titles."}},
        {"STATE", {"STATE", "Identifies the name of a state or region."}},
        {"STREET", {"STREET", "Identifies street addresses."}},
        {"USERNAME", {"USERNAME", "Identifies usernames or account IDs."}},
        {"ZIP", {"ZIP", "Identifies postal or zip codes."}},
        // Labels used only by non-English sets or the rule tier.
        {"EMAIL", {"EMAIL", "Identifies email addresses."}},
        {"FAX", {"FAX", "Identifies fax numbers."}},
        {"SSN", {"SSN", "Identifies social security numbers."}},
        {"ID", {"ID", "Identifies national or personal identity numbers."}},
        {"SEX", {"SEX", "Identifies the sex or gender of a person."}},
        {"FAMILY", {"FAMILY", "Identifies names or mentions of family members."}},
        {"URL", {"URL", "Identifies web addresses."}},
        {"IP", {"IP", "Identifies IP addresses."}},
        {"ACCOUNT", {"ACCOUNT", "Identifies account numbers."}},
        {"DLN", {"DLN", "Identifies driver's license numbers."}},
        {"LICENSE", {"LICENSE", "Identifies certificate or license numbers."}},
        {"PLATE", {"PLATE", "Identifies vehicle license plates."}},
        {"VIN", {"VIN", "Identifies vehicle identification numbers."}},
    };
    return defs;
}

namespace detail {

inline constexpr std::string_view kPromptHead =
    "You are tasked with extracting Protected Health Information (PHI) from clinical notes. Your job is to "
    "identify and mark specific entities within the text. Here are the entities you need to look for:\n"
    "\n"
    "<entities>\n";

inline constexpr std::string_view kPromptBeforeNote =
    "</entities>\n"
    "\n"
    "I will provide you with a clinical note. Your task is to process this note and mark all instances of the "
    "PHI entities listed above.\n"
    "\n"
    "Here is the clinical note:\n"
    "\n";

inline constexpr std::string_view kPromptAfterNote =
    "\n"
    "\n"
    "Instructions for marking PHI entities:\n"
    "* Carefully read through the entire clinical note.\n"
    "*  Identify any text that matches one of the PHI entity types listed above.\n"
    "* For each identified PHI entity, mark the beginning and end of the relevant text chunk using the "
    "following format:\n"
    "BEGINER_ LABEL CHUNK ENDNER where ENTITY LABEL is one of the entity types from the list, and CHUNK is the "
    "actual text containing the PHI.\n"
    "* While marking, DO NOT EDIT OR CHANGE the original clinical text, only put marks described above.\n"
    "\n"
    "Here are few examples of correct markup:\n"
    "\n"
    "Original text:\n"
    "Mrs. Linda Martinez, a 45-year-old architect, having MR#: 2775283 for an evaluation on 2023-05-10. Her "
    "insulin pump model ZX900 was assessed by Dr. Michael Brown, M.D. The patient's condition has improved "
    "since the 1990s, but she mentioned feeling unwell for past 6 months. MF381/1183 was referenced during her "
    "visit, which lasted approximately 5 hours and concluded at 10:05:03. She was discharged on 20/10/2023.\n"
    "\n"
    "Marked text:\n"
    "Mrs. BEGINER_PATIENT Linda Martinez ENDNER, a BEGINER_AGE 45 ENDNER year-old BEGINER_PROFESSION architect "
    "ENDNER, having MR#: BEGINER_MEDICALRECORD 2775283 ENDNER for an evaluation on BEGINER_DATE 2023-05-10 "
    "ENDNER. Her insulin pump model BEGINER_DEVICE ZX900 ENDNER was assessed by Dr. BEGINER_DOCTOR Michael "
    "Brown ENDNER, M.D. The patient's condition has improved since the BEGINER_DATE 1990s ENDNER, but she "
    "mentioned feeling unwell for past 6 months. BEGINER_IDNUM MF381/1183 ENDNER was referenced during her "
    "visit, which lasted approximately 5 hours and concluded at 10:05:03. She was discharged on BEGINER_DATE "
    "20/10/2023 ENDNER.\n"
    "\n"
    "Important notes:\n"
    "* Be sure to process the entire clinical note and mark all instances of PHI entities.\n"
    "* If a chunk of text could belong to multiple entity types, choose the most specific or appropriate one.\n"
    "* Do not mark information that is not part of the specified PHI entity types.\n"
    "* Preserve the original text exactly as it appears, including any spelling errors or formatting.\n"
    "* Label the data, ensuring that professional titles or suffixes such as 'M.D.', 'Ph.D.', or similar are "
    "not removed. These titles must be preserved exactly as they appear in the text, without alteration or "
    "omission and should NEVER be inside the label.\n"
    "* Apostrophe 's' ('s) should not be included within the label when associated with Names. Only the "
    "person's name should be inside the label, and the apostrophe 's' should remain outside the marked text. "
    "However, apostrophe 's' is allowed within the DATE label when referring to a decade (e.g., 80's).\n"
    "* Mark only specific calendar dates as DATE. Do not mark relative time expressions like \"6 months,\" \"1 "
    "year ago,\" \"5 weeks,\" \"5 wks,\" \"yesterday,\" \"today,\" \"days,\" or similar units of time (months, "
    "years, weeks), as they do not represent actual dates.\n"
    "* Mark only actual dates as DATE. Do not mark time-related expressions such as \"10:05:03,\" \"10am,\" or "
    "durations like \"5 hours\" as DATE, since they refer to times or durations rather than specific calendar "
    "dates.\n"
    "* Fax numbers should be treated as PHONE entities and marked the same way as phone numbers.\n"
    "Please process the provided clinical note and return it with all PHI entities appropriately marked.\n";

inline std::string squash_label(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c != ' ' && c != '_' && c != '-') out.push_back(c);
    }
    return out;
}

}  // namespace detail

/// Name the prompt uses for `label` within `labels`. Aliases apply only when
/// they do not collide with another label of the set.
inline std::string prompt_label_name(const std::string& label, const LabelSet& labels) {
    auto it = label_definitions().find(label);
    if (it == label_definitions().end()) return label;
    const auto& display = it->second.display;
    if (display != label && labels.contains(display)) return label;
    return display;
}

/// Entity-definition block, one line per model-tier label in set order.
inline std::string prompt_definitions(const LabelSet& labels) {
    std::string out;
    for (const auto& label : labels.model_labels()) {
        auto it = label_definitions().find(label);
        const std::string text = it != label_definitions().end() ? it->second.text : "Identifies " + label + " entities.";
        out += prompt_label_name(label, labels) + " (" + text + ")\n";
    }
    return out;
}

/// Extraction prompt with the definition block restricted to `labels` and
/// the note interpolated verbatim.
inline std::string build_prompt(const Document& note, const LabelSet& labels) {
    std::string out(detail::kPromptHead);
    out += prompt_definitions(labels);
    out += detail::kPromptBeforeNote;
    out += note.text();
    out += detail::kPromptAfterNote;
    return out;
}

// ---------------------------------------------------------------------------
// Markup parsing

struct MarkupDiagnostic {
    enum class Kind { UnknownLabel, Unbalanced, TextEdited, ExtraTokens };
    Kind kind;
    std::size_t location = 0;  // code-point offset in the marked text
    std::string detail;

    friend bool operator==(const MarkupDiagnostic&, const MarkupDiagnostic&) = default;
};

inline std::string_view to_string(MarkupDiagnostic::Kind k) {
    switch (k) {
        case MarkupDiagnostic::Kind::UnknownLabel: return "UNKNOWN_LABEL";
        case MarkupDiagnostic::Kind::Unbalanced: return "UNBALANCED";
        case MarkupDiagnostic::Kind::TextEdited: return "TEXT_EDITED";
        case MarkupDiagnostic::Kind::ExtraTokens: return "EXTRA_TOKENS";
    }
    return "UNKNOWN";
}

struct MarkupParse {
    std::vector<EntitySpan> spans;  // offsets into the ORIGINAL document
    std::vector<MarkupDiagnostic> diagnostics;
    double alignment_score = 1.0;

    bool has(MarkupDiagnostic::Kind k) const {
        return std::any_of(diagnostics.begin(), diagnostics.end(),
                           [k](const MarkupDiagnostic& d) { return d.kind == k; });
    }
};

struct MarkupOptions {
    std::size_t anchor_length = 8;
    double min_chunk_similarity = 0.7;
    /// Gap alignments larger than this many DP cells are left unmatched.
    std::size_t max_gap_cells = 4'000'000;
};

namespace detail {

inline constexpr std::u32string_view kBeginMarker = U"BEGINER_";
inline constexpr std::u32string_view kEndMarker = U"ENDNER";

inline bool is_marker_label_char(char32_t c) { return (c >= U'A' && c <= U'Z') || c == U'_' || c == U'-'; }

/// Maps a marker label spelling onto a canonical label of `labels`.
inline std::optional<std::string> resolve_marker_label(const std::string& raw, const LabelSet& labels) {
    if (raw.empty()) return std::nullopt;
    std::string spaced = raw;
    std::replace(spaced.begin(), spaced.end(), '_', ' ');
    if (labels.contains(spaced)) return spaced;
    if (labels.contains(raw)) return raw;
    const std::string squashed = squash_label(raw);
    for (const auto& l : labels.priority()) {
        if (squash_label(l) == squashed) return l;
    }
    for (const auto& l : labels.priority()) {
        if (squash_label(prompt_label_name(l, labels)) == squashed) return l;
    }
    return std::nullopt;
}

struct RawChunk {
    std::optional<std::string> label;
    std::size_t clean_start = 0;
    std::size_t clean_end = 0;
    std::size_t marked_pos = 0;
    bool closed = false;
};

struct Stripped {
    std::u32string cleaned;
    std::vector<RawChunk> chunks;
};

inline bool starts_with_at(std::u32string_view s, std::size_t i, std::u32string_view prefix) {
    return s.size() >= i + prefix.size() && s.compare(i, prefix.size(), prefix) == 0;
}

inline Stripped strip_markers(std::u32string_view marked, const LabelSet& labels,
                              std::vector<MarkupDiagnostic>& diags) {
    Stripped out;
    std::optional<RawChunk> open;
    auto close_open = [&](std::size_t at) {
        open->clean_end = at;
        open->closed = true;
        out.chunks.push_back(*open);
        open.reset();
    };
    std::size_t i = 0;
    while (i < marked.size()) {
        if (starts_with_at(marked, i, kBeginMarker)) {
            const std::size_t marker_pos = i;
            std::size_t j = i + kBeginMarker.size();
            // Instruction form "BEGINER_ LABEL": tolerate one space.
            if (j < marked.size() && marked[j] == U' ' && j + 1 < marked.size() &&
                is_marker_label_char(marked[j + 1])) {
                ++j;
            }
            std::size_t k = j;
            while (k < marked.size() && is_marker_label_char(marked[k])) ++k;
            std::string raw = encode(marked.substr(j, k - j));
            auto label = resolve_marker_label(raw, labels);
            // Spaced multi-word label such as "MEDICAL RECORD".
            std::size_t kk = k;
            std::string extended = raw;
            for (int words = 0; !label && words < 2 && kk < marked.size() && marked[kk] == U' '; ++words) {
                std::size_t e = kk + 1;
                while (e < marked.size() && is_marker_label_char(marked[e])) ++e;
                if (e == kk + 1) break;
                extended += " " + encode(marked.substr(kk + 1, e - kk - 1));
                if (auto l = resolve_marker_label(extended, labels)) {
                    label = l;
                    k = e;
                    break;
                }
                kk = e;
            }
            if (open) {
                diags.push_back({MarkupDiagnostic::Kind::Unbalanced, marker_pos,
                                 "BEGINER_ inside an open chunk; closing the previous chunk here"});
                std::size_t at = out.cleaned.size();
                while (at > open->clean_start && is_space(out.cleaned[at - 1])) --at;
                close_open(at);
            }
            if (!label) {
                diags.push_back({MarkupDiagnostic::Kind::UnknownLabel, marker_pos, raw});
            }
            i = k;
            if (i < marked.size() && is_space(marked[i])) ++i;
            open = RawChunk{label, out.cleaned.size(), out.cleaned.size(), marker_pos, false};
            continue;
        }
        if (starts_with_at(marked, i, kEndMarker)) {
            if (!out.cleaned.empty() && is_space(out.cleaned.back()) &&
                (!open || out.cleaned.size() > open->clean_start)) {
                out.cleaned.pop_back();
            }
            if (open) {
                close_open(out.cleaned.size());
            } else {
                diags.push_back({MarkupDiagnostic::Kind::Unbalanced, i, "ENDNER without a matching BEGINER_"});
            }
            i += kEndMarker.size();
            continue;
        }
        out.cleaned.push_back(marked[i]);
        ++i;
    }
    if (open) {
        diags.push_back({MarkupDiagnostic::Kind::Unbalanced, open->marked_pos,
                         "chunk never closed; closing at sentence end"});
        std::size_t end = out.cleaned.size();
        for (std::size_t p = open->clean_start; p < out.cleaned.size(); ++p) {
            const char32_t c = out.cleaned[p];
            if ((c == U'.' || c == U'!' || c == U'?' || c == U'؟') &&
                (p + 1 == out.cleaned.size() || is_space(out.cleaned[p + 1]))) {
                end = p;
                break;
            }
        }
        close_open(end);
    }
    return out;
}

/// Character alignment between `a` (cleaned) and `b` (original): for each
/// position of `a`, the matched position in `b` or npos.
struct Alignment {
    std::vector<std::size_t> a_to_b;
    std::size_t matched = 0;
};

inline constexpr std::size_t kNoMatch = static_cast<std::size_t>(-1);

inline void align_gap(std::u32string_view a, std::u32string_view b, std::size_t a0, std::size_t a1, std::size_t b0,
                      std::size_t b1, std::size_t max_cells, Alignment& out) {
    const std::size_t n = a1 - a0;
    const std::size_t m = b1 - b0;
    if (n == 0 || m == 0 || n * m > max_cells) return;
    // LCS table, (n+1) x (m+1).
    std::vector<std::uint32_t> dp((n + 1) * (m + 1), 0);
    auto at = [&](std::size_t i, std::size_t j) -> std::uint32_t& { return dp[i * (m + 1) + j]; };
    for (std::size_t i = n; i-- > 0;) {
        for (std::size_t j = m; j-- > 0;) {
            at(i, j) = a[a0 + i] == b[b0 + j] ? at(i + 1, j + 1) + 1 : std::max(at(i + 1, j), at(i, j + 1));
        }
    }
    std::size_t i = 0;
    std::size_t j = 0;
    while (i < n && j < m) {
        if (a[a0 + i] == b[b0 + j] && at(i, j) == at(i + 1, j + 1) + 1) {
            out.a_to_b[a0 + i] = b0 + j;
            ++out.matched;
            ++i;
            ++j;
        } else if (at(i + 1, j) >= at(i, j + 1)) {
            ++i;
        } else {
            ++j;
        }
    }
}

/// Unique n-gram anchors chained monotonically, with LCS alignment of the
/// gaps between consecutive anchors.
inline Alignment align(std::u32string_view a, std::u32string_view b, const MarkupOptions& opt) {
    Alignment out;
    out.a_to_b.assign(a.size(), kNoMatch);
    const std::size_t k = opt.anchor_length;
    std::vector<std::pair<std::size_t, std::size_t>> anchors;
    if (a.size() >= k && b.size() >= k) {
        std::unordered_map<std::u32string_view, std::pair<std::size_t, std::size_t>> grams;  // count, pos in a
        for (std::size_t i = 0; i + k <= a.size(); ++i) {
            auto& e = grams[a.substr(i, k)];
            ++e.first;
            e.second = i;
        }
        std::unordered_map<std::u32string_view, std::pair<std::size_t, std::size_t>> grams_b;
        for (std::size_t j = 0; j + k <= b.size(); ++j) {
            auto& e = grams_b[b.substr(j, k)];
            ++e.first;
            e.second = j;
        }
        for (const auto& [gram, ea] : grams) {
            if (ea.first != 1) continue;
            auto it = grams_b.find(gram);
            if (it != grams_b.end() && it->second.first == 1) anchors.emplace_back(ea.second, it->second.second);
        }
        std::sort(anchors.begin(), anchors.end());
    }
    // Longest chain increasing in both coordinates (patience LIS on b).
    std::vector<std::size_t> tails;
    std::vector<std::size_t> tail_idx;
    std::vector<std::size_t> parent(anchors.size(), kNoMatch);
    for (std::size_t idx = 0; idx < anchors.size(); ++idx) {
        const std::size_t key = anchors[idx].second;
        auto pos = static_cast<std::size_t>(std::lower_bound(tails.begin(), tails.end(), key) - tails.begin());
        if (pos > 0) parent[idx] = tail_idx[pos - 1];
        if (pos == tails.size()) {
            tails.push_back(key);
            tail_idx.push_back(idx);
        } else {
            tails[pos] = key;
            tail_idx[pos] = idx;
        }
    }
    std::vector<std::pair<std::size_t, std::size_t>> chain;
    for (std::size_t idx = tail_idx.empty() ? kNoMatch : tail_idx.back(); idx != kNoMatch; idx = parent[idx]) {
        chain.push_back(anchors[idx]);
    }
    std::reverse(chain.begin(), chain.end());
    // Matched diagonal runs from the anchor chain.
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    for (const auto& [pa, pb] : chain) {
        for (std::size_t d = 0; d < k; ++d) {
            const std::size_t ca = pa + d;
            const std::size_t cb = pb + d;
            if (!pairs.empty() && (ca <= pairs.back().first || cb <= pairs.back().second)) continue;
            pairs.emplace_back(ca, cb);
        }
    }
    std::size_t prev_a = 0;
    std::size_t prev_b = 0;
    for (const auto& [pa, pb] : pairs) {
        align_gap(a, b, prev_a, pa, prev_b, pb, opt.max_gap_cells, out);
        out.a_to_b[pa] = pb;
        ++out.matched;
        prev_a = pa + 1;
        prev_b = pb + 1;
    }
    align_gap(a, b, prev_a, a.size(), prev_b, b.size(), opt.max_gap_cells, out);
    return out;
}

inline bool has_extra_tokens(std::u32string_view chunk) {
    static const std::u32string_view prefixes[] = {U"Dr. ", U"Dr ", U"Mr. ", U"Mrs. ", U"Ms. ", U"Prof. "};
    static const std::u32string_view suffixes[] = {U"'s", U"’s", U"M.D.", U"M.D", U"Ph.D.", U"MD"};
    for (auto p : prefixes) {
        if (chunk.size() > p.size() && chunk.substr(0, p.size()) == p) return true;
    }
    for (auto s : suffixes) {
        if (chunk.size() > s.size() && chunk.substr(chunk.size() - s.size()) == s) return true;
    }
    return false;
}

}  // namespace detail

/// Parses `BEGINER_<LABEL> ... ENDNER` markup back onto the original
/// document. Total: problems become diagnostics, never exceptions.
inline MarkupParse parse_markup(const Document& original, std::string_view marked, const LabelSet& labels,
                                const MarkupOptions& options = {}) {
    MarkupParse result;
    const std::u32string marked32 = detail::decode(marked);
    const std::u32string orig32 = detail::decode(original.text());
    auto stripped = detail::strip_markers(marked32, labels, result.diagnostics);
    const std::u32string& cleaned = stripped.cleaned;

    const bool identical = cleaned == orig32;
    detail::Alignment alignment;
    if (identical) {
        result.alignment_score = 1.0;
    } else {
        alignment = detail::align(cleaned, orig32, options);
        const std::size_t denom = std::max(cleaned.size(), orig32.size());
        result.alignment_score = denom == 0 ? 1.0 : static_cast<double>(alignment.matched) / static_cast<double>(denom);
        std::size_t first_diff = 0;
        while (first_diff < cleaned.size() && first_diff < orig32.size() && cleaned[first_diff] == orig32[first_diff]) {
            ++first_diff;
        }
        result.diagnostics.push_back({MarkupDiagnostic::Kind::TextEdited, first_diff,
                                      "text outside markers differs from the original; offsets recovered by "
                                      "alignment"});
    }

    std::size_t last_end = 0;
    for (const auto& chunk : stripped.chunks) {
        if (!chunk.label) continue;
        std::size_t cs = chunk.clean_start;
        std::size_t ce = chunk.clean_end;
        while (cs < ce && detail::is_space(cleaned[cs])) ++cs;
        while (ce > cs && detail::is_space(cleaned[ce - 1])) --ce;
        if (cs == ce) {
            result.diagnostics.push_back({MarkupDiagnostic::Kind::Unbalanced, chunk.marked_pos, "empty chunk"});
            continue;
        }
        const std::u32string_view chunk_text(cleaned.data() + cs, ce - cs);
        std::size_t start = cs;
        std::size_t end = ce;
        double similarity = 1.0;
        if (!identical) {
            std::size_t first = detail::kNoMatch;
            std::size_t last = detail::kNoMatch;
            std::size_t hits = 0;
            for (std::size_t p = cs; p < ce; ++p) {
                if (alignment.a_to_b[p] == detail::kNoMatch) continue;
                if (first == detail::kNoMatch) first = p;
                last = p;
                ++hits;
            }
            if (first == detail::kNoMatch) {
                result.diagnostics.push_back({MarkupDiagnostic::Kind::TextEdited, chunk.marked_pos,
                                              "chunk '" + detail::encode(chunk_text) + "' not found in original"});
                continue;
            }
            // Extend over unmatched edge characters when the original has room.
            start = alignment.a_to_b[first];
            end = alignment.a_to_b[last] + 1;
            const std::size_t slice_len = end - start;
            similarity = static_cast<double>(hits) / static_cast<double>(std::max(ce - cs, slice_len));
            if (similarity < options.min_chunk_similarity) {
                result.diagnostics.push_back({MarkupDiagnostic::Kind::TextEdited, chunk.marked_pos,
                                              "chunk '" + detail::encode(chunk_text) + "' dropped; similarity " +
                                                  std::to_string(similarity)});
                continue;
            }
            if (std::u32string_view(orig32).substr(start, slice_len) != chunk_text) {
                result.diagnostics.push_back({MarkupDiagnostic::Kind::TextEdited, chunk.marked_pos,
                                              "chunk '" + detail::encode(chunk_text) + "' edited by the model"});
            }
        }
        if (start < last_end) {
            result.diagnostics.push_back({MarkupDiagnostic::Kind::Unbalanced, chunk.marked_pos,
                                          "chunk overlaps the previous one after alignment; dropped"});
            continue;
        }
        if (detail::has_extra_tokens(chunk_text)) {
            result.diagnostics.push_back({MarkupDiagnostic::Kind::ExtraTokens, chunk.marked_pos,
                                          "chunk '" + detail::encode(chunk_text) + "' includes a title or suffix"});
        }
        result.spans.push_back(EntitySpan{*chunk.label, start, end, Source::Llm, similarity});
        last_end = end;
    }
    return result;
}

inline nlohmann::ordered_json diagnostics_to_json(const MarkupParse& p) {
    nlohmann::ordered_json diags = nlohmann::ordered_json::array();
    for (const auto& d : p.diagnostics) {
        diags.push_back(nlohmann::ordered_json{
            {"kind", std::string(to_string(d.kind))}, {"location", d.location}, {"detail", d.detail}});
    }
    nlohmann::ordered_json j;
    j["alignment_score"] = p.alignment_score;
    j["diagnostics"] = std::move(diags);
    return j;
}

}  // namespace deid

#endif  // DEID_LLM_MARKUP_HPP
