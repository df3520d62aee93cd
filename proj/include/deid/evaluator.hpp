#ifndef DEID_EVALUATOR_HPP
#define DEID_EVALUATOR_HPP

#include "deid/annotation.hpp"
#include "deid/conll.hpp"
#include "deid/errors.hpp"
#include "deid/label_set.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <map>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

namespace deid {

inline double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

inline double f1_score(double precision, double recall) {
    return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

/// Half-up rounding to `digits` decimals. The epsilon absorbs binary
/// representation error in values such as 0.9305.
inline double round_half_up(double x, int digits = 3) {
    const double scale = std::pow(10.0, digits);
    return std::floor(x * scale + 0.5 + 1e-9) / scale;
}

inline std::string format_fixed(double x, int digits = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, round_half_up(x, digits));
    return buf;
}

/// Arithmetic mean of per-label F1 values, full precision.
inline double aggregate_macro(const std::map<std::string, double>& per_label_f1) {
    if (per_label_f1.empty()) throw EmptyInputError("aggregate_macro: no labels");
    double sum = 0.0;
    for (const auto& [_, v] : per_label_f1) sum += v;
    return sum / static_cast<double>(per_label_f1.size());
}

inline double aggregate_macro(const std::vector<double>& values) {
    if (values.empty()) throw EmptyInputError("aggregate_macro: no labels");
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

// ---------------------------------------------------------------------------
// Chunk level

struct LabelScore {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    std::size_t support() const noexcept { return tp + fn; }

    void finalize() {
        precision = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fp));
        recall = safe_ratio(static_cast<double>(tp), static_cast<double>(tp + fn));
        f1 = f1_score(precision, recall);
    }
};

struct ChunkEvalReport {
    std::map<std::string, LabelScore> per_label;
    LabelScore micro;
    double macro_avg_f1 = 0.0;
    double micro_avg_f1 = 0.0;
    bool lenient = false;
    std::vector<std::string> warnings;
};

enum class MatchMode { Strict, Lenient };

namespace detail {

using SpanKey = std::tuple<std::string, std::size_t, std::size_t>;

struct SpanKeyHash {
    std::size_t operator()(const SpanKey& k) const noexcept {
        std::size_t h = std::hash<std::string>{}(std::get<0>(k));
        h ^= std::get<1>(k) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        h ^= std::get<2>(k) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
        return h;
    }
};

inline void score_document(const std::string& doc_id, const std::vector<EntitySpan>& gold_in,
                           const std::vector<EntitySpan>& pred, MatchMode mode, ChunkEvalReport& report) {
    std::unordered_map<SpanKey, std::size_t, SpanKeyHash> gold;  // key -> unmatched count (0 or 1)
    std::vector<EntitySpan> gold_list;
    for (const auto& s : gold_in) {
        auto [it, inserted] = gold.emplace(SpanKey{s.label, s.start, s.end}, 1);
        if (!inserted) {
            report.warnings.push_back("duplicate gold span " + s.label + " [" + std::to_string(s.start) + "," +
                                      std::to_string(s.end) + ") in " + doc_id + " collapsed");
            continue;
        }
        gold_list.push_back(s);
        report.per_label[s.label];
    }
    std::vector<bool> used(gold_list.size(), false);
    for (const auto& p : pred) {
        auto& score = report.per_label[p.label];
        bool hit = false;
        if (mode == MatchMode::Strict) {
            auto it = gold.find(SpanKey{p.label, p.start, p.end});
            if (it != gold.end() && it->second > 0) {
                it->second = 0;
                hit = true;
            }
        } else {
            for (std::size_t g = 0; g < gold_list.size(); ++g) {
                if (!used[g] && gold_list[g].label == p.label && overlaps(gold_list[g], p)) {
                    used[g] = true;
                    hit = true;
                    break;
                }
            }
        }
        if (hit) {
            ++score.tp;
        } else {
            ++score.fp;
        }
    }
    if (mode == MatchMode::Strict) {
        for (const auto& [key, remaining] : gold) report.per_label[std::get<0>(key)].fn += remaining;
    } else {
        for (std::size_t g = 0; g < gold_list.size(); ++g) {
            if (!used[g]) ++report.per_label[gold_list[g].label].fn;
        }
    }
}

}  // namespace detail

/// Strict chunk scoring: a prediction is a TP iff a gold span with the same
/// (doc_id, start, end, label) exists and is not already matched. Lenient
/// mode credits same-label overlaps and is for diagnostics only.
inline ChunkEvalReport evaluate_chunks(const std::vector<AnnotatedDocument>& gold,
                                       const std::vector<AnnotatedDocument>& pred, const LabelSet* labels = nullptr,
                                       MatchMode mode = MatchMode::Strict) {
    ChunkEvalReport report;
    report.lenient = mode == MatchMode::Lenient;
    std::map<std::string, std::vector<EntitySpan>> gold_by_doc;
    std::map<std::string, std::vector<EntitySpan>> pred_by_doc;
    for (const auto& d : gold) {
        auto& v = gold_by_doc[d.doc.doc_id()];
        v.insert(v.end(), d.spans.begin(), d.spans.end());
    }
    for (const auto& d : pred) {
        if (!gold_by_doc.count(d.doc.doc_id())) {
            throw DocumentMismatchError("prediction references unknown doc_id '" + d.doc.doc_id() + "'");
        }
        auto& v = pred_by_doc[d.doc.doc_id()];
        v.insert(v.end(), d.spans.begin(), d.spans.end());
    }
    if (labels) {
        for (const auto* m : {&gold_by_doc, &pred_by_doc}) {
            for (const auto& [_, spans] : *m) {
                for (const auto& s : spans) {
                    if (!labels->contains(s.label)) throw UnknownLabelError(s.label);
                }
            }
        }
    }
    static const std::vector<EntitySpan> kNone;
    for (const auto& [doc_id, g] : gold_by_doc) {
        auto it = pred_by_doc.find(doc_id);
        detail::score_document(doc_id, g, it == pred_by_doc.end() ? kNone : it->second, mode, report);
    }
    double f1_sum = 0.0;
    for (auto& [_, s] : report.per_label) {
        s.finalize();
        report.micro.tp += s.tp;
        report.micro.fp += s.fp;
        report.micro.fn += s.fn;
        f1_sum += s.f1;
    }
    report.micro.finalize();
    report.micro_avg_f1 = report.micro.f1;
    report.macro_avg_f1 = report.per_label.empty() ? 0.0 : f1_sum / static_cast<double>(report.per_label.size());
    return report;
}

inline ChunkEvalReport evaluate_chunks(const std::vector<AnnotatedDocument>& gold,
                                       const std::vector<AnnotatedDocument>& pred, const LabelSet& labels,
                                       MatchMode mode = MatchMode::Strict) {
    return evaluate_chunks(gold, pred, &labels, mode);
}

// ---------------------------------------------------------------------------
// Token level

struct TagScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;  // gold count
    std::size_t predicted = 0;
    std::size_t correct = 0;
};

struct TokenEvalReport {
    std::map<std::string, TagScore> per_tag;
    TagScore macro_avg;
    TagScore weighted_avg;
    double accuracy = 0.0;
    std::size_t total = 0;
};

/// Multiclass per-tag scoring over aligned tag sequences, class O included.
inline TokenEvalReport evaluate_tokens(const ConllRecords& gold, const ConllRecords& pred) {
    if (gold.size() != pred.size()) {
        throw AlignmentError("record count " + std::to_string(gold.size()) + " != " + std::to_string(pred.size()));
    }
    TokenEvalReport report;
    std::size_t correct = 0;
    for (std::size_t r = 0; r < gold.size(); ++r) {
        const auto& gs = gold[r].sentences;
        const auto& ps = pred[r].sentences;
        if (gs.size() != ps.size()) {
            throw AlignmentError("record " + std::to_string(r) + ": sentence count " + std::to_string(gs.size()) +
                                 " != " + std::to_string(ps.size()));
        }
        for (std::size_t s = 0; s < gs.size(); ++s) {
            if (gs[s].tags.size() != ps[s].tags.size()) {
                throw AlignmentError("record " + std::to_string(r) + " sentence " + std::to_string(s) +
                                     ": token count " + std::to_string(gs[s].tags.size()) + " != " +
                                     std::to_string(ps[s].tags.size()));
            }
            for (std::size_t t = 0; t < gs[s].tags.size(); ++t) {
                const auto& g = gs[s].tags[t];
                const auto& p = ps[s].tags[t];
                ++report.per_tag[g].support;
                ++report.per_tag[p].predicted;
                if (g == p) {
                    ++report.per_tag[g].correct;
                    ++correct;
                }
                ++report.total;
            }
        }
    }
    report.accuracy = safe_ratio(static_cast<double>(correct), static_cast<double>(report.total));
    for (auto& [_, s] : report.per_tag) {
        s.precision = safe_ratio(static_cast<double>(s.correct), static_cast<double>(s.predicted));
        s.recall = safe_ratio(static_cast<double>(s.correct), static_cast<double>(s.support));
        s.f1 = f1_score(s.precision, s.recall);
        const double n = static_cast<double>(report.per_tag.size());
        report.macro_avg.precision += s.precision / n;
        report.macro_avg.recall += s.recall / n;
        report.macro_avg.f1 += s.f1 / n;
        const double w = safe_ratio(static_cast<double>(s.support), static_cast<double>(report.total));
        report.weighted_avg.precision += s.precision * w;
        report.weighted_avg.recall += s.recall * w;
        report.weighted_avg.f1 += s.f1 * w;
    }
    report.macro_avg.support = report.total;
    report.weighted_avg.support = report.total;
    return report;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::ordered_json to_json(const ChunkEvalReport& r) {
    nlohmann::ordered_json labels = nlohmann::ordered_json::object();
    for (const auto& [label, s] : r.per_label) {
        labels[label] = {{"tp", s.tp},         {"fp", s.fp},         {"fn", s.fn},
                         {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1},
                         {"support", s.support()}};
    }
    nlohmann::ordered_json j;
    j["mode"] = r.lenient ? "lenient" : "strict";
    j["per_label"] = std::move(labels);
    j["micro"] = {{"tp", r.micro.tp},
                  {"fp", r.micro.fp},
                  {"fn", r.micro.fn},
                  {"precision", r.micro.precision},
                  {"recall", r.micro.recall},
                  {"f1", r.micro.f1}};
    j["macro_avg_f1"] = r.macro_avg_f1;
    j["micro_avg_f1"] = r.micro_avg_f1;
    j["warnings"] = r.warnings;
    return j;
}

inline nlohmann::ordered_json to_json(const TokenEvalReport& r) {
    auto row = [](const TagScore& s) {
        return nlohmann::ordered_json{
            {"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
    };
    nlohmann::ordered_json tags = nlohmann::ordered_json::object();
    for (const auto& [tag, s] : r.per_tag) tags[tag] = row(s);
    nlohmann::ordered_json j;
    j["per_tag"] = std::move(tags);
    j["macro_avg"] = row(r.macro_avg);
    j["weighted_avg"] = row(r.weighted_avg);
    j["accuracy"] = r.accuracy;
    j["total"] = r.total;
    return j;
}

/// label,precision,recall,f1,support rows, values rounded half-up.
inline std::string to_csv(const ChunkEvalReport& r) {
    std::string out = "label,precision,recall,f1,support\n";
    for (const auto& [label, s] : r.per_label) {
        out += label + "," + format_fixed(s.precision) + "," + format_fixed(s.recall) + "," + format_fixed(s.f1) +
               "," + std::to_string(s.support()) + "\n";
    }
    out += "micro avg," + format_fixed(r.micro.precision) + "," + format_fixed(r.micro.recall) + "," +
           format_fixed(r.micro.f1) + "," + std::to_string(r.micro.support()) + "\n";
    out += "macro avg,,," + format_fixed(r.macro_avg_f1) + "," + std::to_string(r.micro.support()) + "\n";
    return out;
}

inline std::string to_csv(const TokenEvalReport& r) {
    std::string out = "tag,precision,recall,f1,support\n";
    auto line = [&](const std::string& name, const TagScore& s) {
        out += name + "," + format_fixed(s.precision) + "," + format_fixed(s.recall) + "," + format_fixed(s.f1) +
               "," + std::to_string(s.support) + "\n";
    };
    for (const auto& [tag, s] : r.per_tag) line(tag, s);
    line("macro avg", r.macro_avg);
    line("weighted avg", r.weighted_avg);
    out += "accuracy,,," + format_fixed(r.accuracy) + "," + std::to_string(r.total) + "\n";
    return out;
}

inline std::string to_table(const ChunkEvalReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %9s\n", "label", "precision", "recall", "f1", "support");
    out += buf;
    auto line = [&](const std::string& name, double p, double rc, double f, std::size_t n) {
        std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %9zu\n", name.c_str(), format_fixed(p).c_str(),
                      format_fixed(rc).c_str(), format_fixed(f).c_str(), n);
        out += buf;
    };
    for (const auto& [label, s] : r.per_label) line(label, s.precision, s.recall, s.f1, s.support());
    out += "\n";
    line("micro avg", r.micro.precision, r.micro.recall, r.micro.f1, r.micro.support());
    std::snprintf(buf, sizeof buf, "%-16s %9s %9s %9s %9zu\n", "macro avg", "", "", format_fixed(r.macro_avg_f1).c_str(),
                  r.micro.support());
    out += buf;
    if (r.lenient) out += "(lenient overlap matching; not comparable to strict scores)\n";
    return out;
}

inline std::string to_table(const TokenEvalReport& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-20s %9s %9s %9s %9s\n", "tag", "precision", "recall", "f1", "support");
    out += buf;
    auto line = [&](const std::string& name, const TagScore& s) {
        std::snprintf(buf, sizeof buf, "%-20s %9s %9s %9s %9zu\n", name.c_str(), format_fixed(s.precision).c_str(),
                      format_fixed(s.recall).c_str(), format_fixed(s.f1).c_str(), s.support);
        out += buf;
    };
    for (const auto& [tag, s] : r.per_tag) line(tag, s);
    out += "\n";
    std::snprintf(buf, sizeof buf, "%-20s %9s %9s %9s %9zu\n", "accuracy", "", "", format_fixed(r.accuracy).c_str(),
                  r.total);
    out += buf;
    line("macro avg", r.macro_avg);
    line("weighted avg", r.weighted_avg);
    return out;
}

}  // namespace deid

#endif  // DEID_EVALUATOR_HPP
