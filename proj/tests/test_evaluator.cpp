#include "deid/evaluator.hpp"

#include "oracles/chunk_oracle.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace deid;

namespace {

AnnotatedDocument doc(const std::string& id, std::vector<EntitySpan> spans) {
    return AnnotatedDocument{Document(id, std::string(200, 'x')), std::move(spans)};
}

EntitySpan sp(const std::string& label, std::size_t s, std::size_t e) { return EntitySpan{label, s, e}; }

}  // namespace

TEST(Evaluator, IdenticalGivesOne) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("DATE", 0, 3), sp("PATIENT", 5, 9)}), doc("b", {sp("AGE", 1, 2)})};
    const auto r = evaluate_chunks(g, g);
    EXPECT_DOUBLE_EQ(r.macro_avg_f1, 1.0);
    EXPECT_DOUBLE_EQ(r.micro_avg_f1, 1.0);
    for (const auto& [_, s] : r.per_label) EXPECT_DOUBLE_EQ(s.f1, 1.0);
}

TEST(Evaluator, EmptyPrediction) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("DATE", 0, 3)})};
    const auto r = evaluate_chunks(g, {});
    const auto& s = r.per_label.at("DATE");
    EXPECT_EQ(s.fn, 1u);
    EXPECT_DOUBLE_EQ(s.precision, 0.0);
    EXPECT_DOUBLE_EQ(s.recall, 0.0);
    EXPECT_DOUBLE_EQ(s.f1, 0.0);
}

TEST(Evaluator, CountsExample) {
    LabelScore s{688, 312, 46};
    s.finalize();
    EXPECT_NEAR(s.precision, 0.688, 1e-12);
    EXPECT_NEAR(s.recall, 0.9373297002724795, 1e-12);
    EXPECT_NEAR(s.f1, 0.7935409457900807, 1e-12);
}

TEST(Evaluator, StrictnessProbes) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("PATIENT", 10, 20)})};
    for (const auto& p : {sp("PATIENT", 11, 20), sp("PATIENT", 10, 21), sp("PATIENT", 9, 20), sp("DOCTOR", 10, 20),
                          sp("PATIENT", 12, 18), sp("PATIENT", 30, 40)}) {
        const auto r = evaluate_chunks(g, {doc("a", {p})});
        EXPECT_EQ(r.micro.tp, 0u);
        EXPECT_EQ(r.micro.fp, 1u);
        EXPECT_EQ(r.micro.fn, 1u);
    }
}

TEST(Evaluator, UnknownPredictionDocument) {
    const std::vector<AnnotatedDocument> g{doc("a", {})};
    EXPECT_THROW(evaluate_chunks(g, {doc("zzz", {})}), DocumentMismatchError);
}

TEST(Evaluator, DuplicateGoldCollapsedWithWarning) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("DATE", 0, 3), sp("DATE", 0, 3)})};
    const auto r = evaluate_chunks(g, {doc("a", {sp("DATE", 0, 3)})});
    EXPECT_EQ(r.per_label.at("DATE").tp, 1u);
    EXPECT_EQ(r.per_label.at("DATE").fn, 0u);
    EXPECT_EQ(r.warnings.size(), 1u);
}

TEST(Evaluator, DuplicatePredictionMatchesOnce) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("DATE", 0, 3)})};
    const auto r = evaluate_chunks(g, {doc("a", {sp("DATE", 0, 3), sp("DATE", 0, 3)})});
    EXPECT_EQ(r.per_label.at("DATE").tp, 1u);
    EXPECT_EQ(r.per_label.at("DATE").fp, 1u);
}

TEST(Evaluator, LabelSetRejectsUnknownLabels) {
    const auto en = LabelSet::builtin("en");
    const std::vector<AnnotatedDocument> g{doc("a", {sp("NOPE", 0, 3)})};
    EXPECT_THROW(evaluate_chunks(g, g, en), UnknownLabelError);
}

TEST(Evaluator, MacroOverGoldUnionPred) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("DATE", 0, 3)})};
    const auto r = evaluate_chunks(g, {doc("a", {sp("DATE", 0, 3), sp("AGE", 5, 6)})});
    ASSERT_EQ(r.per_label.size(), 2u);
    EXPECT_DOUBLE_EQ(r.macro_avg_f1, 0.5);
}

TEST(Evaluator, LenientModeCreditsOverlap) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("PATIENT", 10, 20)})};
    const auto r = evaluate_chunks(g, {doc("a", {sp("PATIENT", 12, 18)})}, nullptr, MatchMode::Lenient);
    EXPECT_EQ(r.micro.tp, 1u);
    EXPECT_TRUE(r.lenient);
    EXPECT_NE(to_table(r).find("lenient"), std::string::npos);
}

TEST(Evaluator, SymmetryAndMonotonicity) {
    std::mt19937_64 gen(3);
    const std::vector<std::string> labels{"A", "B", "C"};
    for (int round = 0; round < 200; ++round) {
        auto rand_spans = [&] {
            std::vector<EntitySpan> v;
            const int n = static_cast<int>(gen() % 8);
            for (int i = 0; i < n; ++i) {
                const std::size_t s = gen() % 10;
                v.push_back(sp(labels[gen() % 3], s, s + 1 + gen() % 3));
            }
            return v;
        };
        const std::vector<AnnotatedDocument> g{doc("d", rand_spans())};
        const std::vector<AnnotatedDocument> p{doc("d", rand_spans())};
        const auto gp = evaluate_chunks(g, p);
        const auto pg = evaluate_chunks(p, g);
        for (const auto& [label, s] : gp.per_label) {
            const auto& t = pg.per_label.at(label);
            // Duplicate spans break exact symmetry; skip those rounds.
            if (!gp.warnings.empty() || !pg.warnings.empty()) continue;
            EXPECT_DOUBLE_EQ(s.precision, t.recall);
            EXPECT_DOUBLE_EQ(s.recall, t.precision);
            EXPECT_DOUBLE_EQ(s.f1, t.f1);
        }
        // Adding a correct prediction never lowers recall; a spurious one never raises precision.
        if (!g[0].spans.empty()) {
            auto p2 = p;
            p2[0].spans.push_back(g[0].spans.front());
            const auto more = evaluate_chunks(g, p2);
            for (const auto& [label, s] : gp.per_label) EXPECT_GE(more.per_label.at(label).recall, s.recall);
        }
        auto p3 = p;
        p3[0].spans.push_back(sp("A", 150, 151));
        const auto spurious = evaluate_chunks(g, p3);
        for (const auto& [label, s] : gp.per_label) EXPECT_LE(spurious.per_label.at(label).precision, s.precision);
    }
}

TEST(Evaluator, MatchesBruteForceOracle) {
    std::mt19937_64 gen(99);
    for (int round = 0; round < 300; ++round) {
        const auto c = oracle::random_case(gen);
        const auto r = evaluate_chunks(c.gold, c.pred);
        const auto o = oracle::chunk_counts(c.gold, c.pred);
        ASSERT_EQ(r.per_label.size(), o.per_label.size());
        double f1_sum = 0.0;
        for (const auto& [label, counts] : o.per_label) {
            const auto& s = r.per_label.at(label);
            EXPECT_EQ(s.tp, counts[0]);
            EXPECT_EQ(s.fp, counts[1]);
            EXPECT_EQ(s.fn, counts[2]);
            const auto m = oracle::metrics(counts[0], counts[1], counts[2]);
            EXPECT_NEAR(s.precision, m.precision, 1e-12);
            EXPECT_NEAR(s.recall, m.recall, 1e-12);
            EXPECT_NEAR(s.f1, m.f1, 1e-12);
            f1_sum += m.f1;
        }
        if (!o.per_label.empty()) EXPECT_NEAR(r.macro_avg_f1, f1_sum / static_cast<double>(o.per_label.size()), 1e-12);
    }
}

TEST(Evaluator, TokenLevelHandCountedTruthTable) {
    ConllRecords gold{ConllRecord{{ConllSentence{{"a", "b", "c", "d", "e", "f"},
                                                 {"B-PATIENT", "I-PATIENT", "O", "O", "B-DATE", "O"}}},
                                  std::nullopt}};
    ConllRecords pred = gold;
    pred[0].sentences[0].tags = {"B-PATIENT", "O", "O", "B-DATE", "B-DATE", "O"};
    const auto r = evaluate_tokens(gold, pred);
    EXPECT_EQ(r.total, 6u);
    EXPECT_DOUBLE_EQ(r.accuracy, 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(r.per_tag.at("B-PATIENT").f1, 1.0);
    EXPECT_DOUBLE_EQ(r.per_tag.at("I-PATIENT").f1, 0.0);
    EXPECT_DOUBLE_EQ(r.per_tag.at("O").precision, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.per_tag.at("O").recall, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(r.per_tag.at("B-DATE").precision, 0.5);
    EXPECT_DOUBLE_EQ(r.per_tag.at("B-DATE").recall, 1.0);
    EXPECT_NEAR(r.per_tag.at("B-DATE").f1, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(r.macro_avg.f1, (1.0 + 0.0 + 2.0 / 3.0 + 2.0 / 3.0) / 4.0, 1e-12);
    EXPECT_NEAR(r.weighted_avg.f1, (1.0 + 0.0 + 3 * 2.0 / 3.0 + 2.0 / 3.0) / 6.0, 1e-12);
    std::size_t support = 0;
    for (const auto& [_, s] : r.per_tag) support += s.support;
    EXPECT_EQ(support, r.total);
}

TEST(Evaluator, TokenIdenticalAndMisaligned) {
    ConllRecords gold{ConllRecord{{ConllSentence{{"a", "b"}, {"B-AGE", "O"}}}, std::nullopt}};
    EXPECT_DOUBLE_EQ(evaluate_tokens(gold, gold).accuracy, 1.0);
    ConllRecords bad = gold;
    bad[0].sentences[0].tags.pop_back();
    bad[0].sentences[0].tokens.pop_back();
    EXPECT_THROW(evaluate_tokens(gold, bad), AlignmentError);
}

TEST(Evaluator, WeightedExceedsMacroWhenOutsideDominates) {
    std::mt19937_64 gen(5);
    ConllSentence g;
    ConllSentence p;
    const std::vector<std::string> rare{"B-AGE", "I-AGE", "B-CITY", "I-CITY", "B-ZIP"};
    for (int i = 0; i < 2000; ++i) {
        const bool is_o = gen() % 100 < 95;
        const std::string tag = is_o ? "O" : rare[gen() % rare.size()];
        g.tokens.push_back("t");
        g.tags.push_back(tag);
        p.tokens.push_back("t");
        // Rare tags are mostly missed; O is mostly right.
        if (is_o) {
            p.tags.push_back(gen() % 100 < 98 ? "O" : rare[gen() % rare.size()]);
        } else {
            p.tags.push_back(gen() % 100 < 30 ? tag : "O");
        }
    }
    const auto r = evaluate_tokens({ConllRecord{{g}, std::nullopt}}, {ConllRecord{{p}, std::nullopt}});
    EXPECT_GT(r.per_tag.at("O").support * 10, r.total * 9);
    EXPECT_GT(r.weighted_avg.f1, r.macro_avg.f1 + 0.3);
}

TEST(Evaluator, AggregateMacro) {
    EXPECT_THROW(aggregate_macro(std::map<std::string, double>{}), EmptyInputError);
    EXPECT_DOUBLE_EQ(aggregate_macro(std::map<std::string, double>{{"X", 0.42}}), 0.42);
    EXPECT_DOUBLE_EQ(round_half_up(0.9305), 0.931);
    EXPECT_DOUBLE_EQ(round_half_up(0.9304999), 0.930);
    EXPECT_DOUBLE_EQ(round_half_up(0.5775, 4), 0.5775);
    EXPECT_EQ(format_fixed(0.9305), "0.931");
}

TEST(Evaluator, ReportOutputs) {
    const std::vector<AnnotatedDocument> g{doc("a", {sp("DATE", 0, 3)})};
    const auto r = evaluate_chunks(g, g);
    const auto j = to_json(r);
    EXPECT_EQ(j["mode"], "strict");
    EXPECT_EQ(j["per_label"]["DATE"]["tp"], 1);
    EXPECT_EQ(to_csv(r), "label,precision,recall,f1,support\nDATE,1.000,1.000,1.000,1\nmicro avg,1.000,1.000,1.000,1\n"
                         "macro avg,,,1.000,1\n");
    EXPECT_NE(to_table(r).find("DATE"), std::string::npos);
}
