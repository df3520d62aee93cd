#include "deid/llm_markup.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace deid;

namespace {

struct Expected {
    std::string label;
    std::string text;
};

const std::vector<Expected> kExampleSpans{
    {"PATIENT", "Linda Martinez"}, {"AGE", "45"},           {"PROFESSION", "architect"},
    {"MEDICAL RECORD", "2775283"}, {"DATE", "2023-05-10"},  {"DEVICE", "ZX900"},
    {"DOCTOR", "Michael Brown"},   {"DATE", "1990s"},       {"IDNUM", "MF381/1183"},
    {"DATE", "20/10/2023"},
};

/// Offsets by plain substring search, left to right.
std::vector<EntitySpan> expected_spans(const std::string& original) {
    std::vector<EntitySpan> out;
    std::size_t from = 0;
    for (const auto& e : kExampleSpans) {
        const auto pos = original.find(e.text, from);
        EXPECT_NE(pos, std::string::npos) << e.text;
        out.push_back(EntitySpan{e.label, pos, pos + e.text.size(), Source::Llm, 1.0});
        from = pos + e.text.size();
    }
    return out;
}

}  // namespace

TEST(LlmMarkup, ExamplePairYieldsTenSpans) {
    const std::string original = testutil::read_fixture("worked_example_original.txt");
    const std::string marked = testutil::read_fixture("worked_example_marked.txt");
    const Document doc("ex", original);
    const auto parse = parse_markup(doc, marked, LabelSet::builtin("en"));
    const auto expected = expected_spans(original);
    ASSERT_EQ(parse.spans.size(), 10u);
    for (std::size_t i = 0; i < expected.size(); ++i) {
        EXPECT_EQ(parse.spans[i].label, expected[i].label);
        EXPECT_EQ(parse.spans[i].start, expected[i].start) << kExampleSpans[i].text;
        EXPECT_EQ(parse.spans[i].end, expected[i].end) << kExampleSpans[i].text;
        EXPECT_EQ(span_text(doc, parse.spans[i]), kExampleSpans[i].text);
        EXPECT_EQ(parse.spans[i].source, Source::Llm);
    }
    // The marked sample writes "45 year-old" where the original has "45-year-old".
    EXPECT_TRUE(parse.has(MarkupDiagnostic::Kind::TextEdited));
    EXPECT_GT(parse.alignment_score, 0.99);
    EXPECT_FALSE(parse.has(MarkupDiagnostic::Kind::UnknownLabel));
}

TEST(LlmMarkup, NoMarkersIsIdentity) {
    const Document doc("d", "Nothing to see here.");
    const auto parse = parse_markup(doc, doc.text(), LabelSet::builtin("en"));
    EXPECT_TRUE(parse.spans.empty());
    EXPECT_DOUBLE_EQ(parse.alignment_score, 1.0);
    EXPECT_TRUE(parse.diagnostics.empty());
}

TEST(LlmMarkup, UnknownLabelYieldsDiagnosticAndNoSpan) {
    const Document doc("d", "Seen at 10am today.");
    const auto parse = parse_markup(doc, "Seen at BEGINER_TIME 10am ENDNER today.", LabelSet::builtin("en"));
    EXPECT_TRUE(parse.spans.empty());
    ASSERT_TRUE(parse.has(MarkupDiagnostic::Kind::UnknownLabel));
    const auto it = std::find_if(parse.diagnostics.begin(), parse.diagnostics.end(), [](const auto& d) {
        return d.kind == MarkupDiagnostic::Kind::UnknownLabel;
    });
    EXPECT_EQ(it->detail, "TIME");
    EXPECT_DOUBLE_EQ(parse.alignment_score, 1.0);
}

TEST(LlmMarkup, ParaphraseOutsideChunksStillRecovers) {
    const std::string original = testutil::read_fixture("worked_example_original.txt");
    std::string marked = testutil::read_fixture("worked_example_marked.txt");
    const auto pos = marked.find("having MR#:");
    ASSERT_NE(pos, std::string::npos);
    marked.replace(pos, 6, "with");
    const Document doc("ex", original);
    const auto parse = parse_markup(doc, marked, LabelSet::builtin("en"));
    const auto expected = expected_spans(original);
    ASSERT_EQ(parse.spans.size(), expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) EXPECT_TRUE(same_extent(parse.spans[i], expected[i])) << i;
    EXPECT_TRUE(parse.has(MarkupDiagnostic::Kind::TextEdited));
    EXPECT_LT(parse.alignment_score, 1.0);
}

TEST(LlmMarkup, EditedChunkBelowSimilarityIsDropped) {
    const Document doc("d", "The patient Linda Martinez was seen by the cardiology team yesterday afternoon.");
    const auto parse = parse_markup(
        doc, "The patient BEGINER_PATIENT Jane Doe ENDNER was seen by the cardiology team yesterday afternoon.",
        LabelSet::builtin("en"));
    EXPECT_TRUE(parse.spans.empty());
    EXPECT_TRUE(parse.has(MarkupDiagnostic::Kind::TextEdited));
}

TEST(LlmMarkup, SpacedAndUnderscoredLabelSpellings) {
    const LabelSet en = LabelSet::builtin("en");
    const Document doc("d", "MR 123 and MR 456 and MR 789");
    const auto parse = parse_markup(doc,
                                    "MR BEGINER_MEDICALRECORD 123 ENDNER and MR BEGINER_MEDICAL_RECORD 456 ENDNER and MR "
                                    "BEGINER_MEDICAL RECORD 789 ENDNER",
                                    en);
    ASSERT_EQ(parse.spans.size(), 3u);
    for (const auto& s : parse.spans) EXPECT_EQ(s.label, "MEDICAL RECORD");
    EXPECT_TRUE(parse.diagnostics.empty());
}

TEST(LlmMarkup, InstructionFormWithSpaceIsAccepted) {
    const Document doc("d", "Seen in Boston.");
    const auto parse = parse_markup(doc, "Seen in BEGINER_ CITY Boston ENDNER.", LabelSet::builtin("en"));
    ASSERT_EQ(parse.spans.size(), 1u);
    EXPECT_EQ(span_text(doc, parse.spans[0]), "Boston");
    EXPECT_EQ(parse.spans[0].label, "CITY");
}

TEST(LlmMarkup, LocationAliasMapsToLocationOther) {
    const Document doc("d", "Taken to the north wing.");
    const auto parse = parse_markup(doc, "Taken to the BEGINER_LOCATION north wing ENDNER.", LabelSet::builtin("en"));
    ASSERT_EQ(parse.spans.size(), 1u);
    EXPECT_EQ(parse.spans[0].label, "LOCATION-OTHER");
}

TEST(LlmMarkup, NestedBeginClosesPreviousChunk) {
    const Document doc("d", "Linda Martinez Boston today");
    const auto parse = parse_markup(
        doc, "BEGINER_PATIENT Linda Martinez BEGINER_CITY Boston ENDNER today", LabelSet::builtin("en"));
    ASSERT_EQ(parse.spans.size(), 2u);
    EXPECT_EQ(span_text(doc, parse.spans[0]), "Linda Martinez");
    EXPECT_EQ(span_text(doc, parse.spans[1]), "Boston");
    EXPECT_TRUE(parse.has(MarkupDiagnostic::Kind::Unbalanced));
}

TEST(LlmMarkup, UnclosedChunkClosesAtSentenceEnd) {
    const Document doc("d", "Seen by Michael Brown. Follow up later.");
    const auto parse =
        parse_markup(doc, "Seen by BEGINER_DOCTOR Michael Brown. Follow up later.", LabelSet::builtin("en"));
    ASSERT_EQ(parse.spans.size(), 1u);
    EXPECT_EQ(span_text(doc, parse.spans[0]), "Michael Brown");
    EXPECT_TRUE(parse.has(MarkupDiagnostic::Kind::Unbalanced));
}

TEST(LlmMarkup, StrayEndMarker) {
    const Document doc("d", "Nothing, here.");
    const auto parse = parse_markup(doc, "Nothing ENDNER, here.", LabelSet::builtin("en"));
    EXPECT_TRUE(parse.spans.empty());
    EXPECT_TRUE(parse.has(MarkupDiagnostic::Kind::Unbalanced));
    EXPECT_DOUBLE_EQ(parse.alignment_score, 1.0);
}

TEST(LlmMarkup, ExtraTokensFlagged) {
    const Document doc("d", "Seen by Dr. Michael Brown today.");
    const auto parse =
        parse_markup(doc, "Seen by BEGINER_DOCTOR Dr. Michael Brown ENDNER today.", LabelSet::builtin("en"));
    ASSERT_EQ(parse.spans.size(), 1u);
    EXPECT_TRUE(parse.has(MarkupDiagnostic::Kind::ExtraTokens));
}

TEST(LlmMarkup, NonAsciiOffsetsAreCodePoints) {
    const Document doc("d", "Hasta Ayşe Yılmaz geldi.");
    const auto parse = parse_markup(doc, "Hasta BEGINER_PATIENT Ayşe Yılmaz ENDNER geldi.", LabelSet::builtin("tr"));
    ASSERT_EQ(parse.spans.size(), 1u);
    EXPECT_EQ(parse.spans[0].start, 6u);
    EXPECT_EQ(parse.spans[0].end, 17u);
    EXPECT_EQ(span_text(doc, parse.spans[0]), "Ayşe Yılmaz");
}

TEST(LlmMarkup, TotalOnRandomInput) {
    std::mt19937_64 gen(7);
    const std::vector<std::string> pieces{"BEGINER_", "ENDNER", "DATE", "PATIENT", " ", "x", ".", "ş", "__", "\n",
                                          "BEGINER_CITY ", " ENDNER", "\xff", "Boston"};
    const Document doc("d", "Boston x. Linda");
    const LabelSet en = LabelSet::builtin("en");
    for (int i = 0; i < 500; ++i) {
        std::string marked;
        const int n = static_cast<int>(gen() % 20);
        for (int k = 0; k < n; ++k) marked += pieces[gen() % pieces.size()];
        MarkupParse parse;
        ASSERT_NO_THROW(parse = parse_markup(doc, marked, en)) << marked;
        EXPECT_GE(parse.alignment_score, 0.0);
        EXPECT_LE(parse.alignment_score, 1.0);
        for (std::size_t s = 0; s < parse.spans.size(); ++s) {
            EXPECT_LE(parse.spans[s].end, doc.size());
            if (s > 0) EXPECT_LE(parse.spans[s - 1].end, parse.spans[s].start);
        }
    }
}

TEST(LlmMarkup, CorrectMarkupRoundTripsOnRandomSpans) {
    std::mt19937_64 gen(11);
    const LabelSet en = LabelSet::builtin("en");
    const std::vector<std::string> words{"alpha", "Beta", "gamma", "12", "Ünal", "x-y", "(z)", "MR#:", "ok."};
    for (int round = 0; round < 200; ++round) {
        std::string text;
        std::vector<std::pair<std::size_t, std::size_t>> word_cps;
        std::size_t cp = 0;
        const int n = 1 + static_cast<int>(gen() % 12);
        for (int i = 0; i < n; ++i) {
            if (i) {
                text += ' ';
                ++cp;
            }
            const auto& w = words[gen() % words.size()];
            const auto len = detail::codepoint_length(w);
            word_cps.emplace_back(cp, cp + len);
            text += w;
            cp += len;
        }
        // Mark random disjoint word runs.
        std::vector<EntitySpan> truth;
        std::string marked;
        for (int i = 0; i < n;) {
            if (i) marked += ' ';
            if (gen() % 3 == 0) {
                const int len = 1 + static_cast<int>(gen() % 2);
                const int last = std::min(n - 1, i + len - 1);
                const auto& label = en.model_labels()[gen() % en.model_labels().size()];
                const Document tmp("t", text);
                marked += "BEGINER_" + prompt_label_name(label, en) + " " +
                          std::string(tmp.slice(word_cps[i].first, word_cps[last].second)) + " ENDNER";
                truth.push_back(EntitySpan{label, word_cps[i].first, word_cps[last].second, Source::Llm, 1.0});
                i = last + 1;
            } else {
                const Document tmp("t", text);
                marked += tmp.slice(word_cps[i].first, word_cps[i].second);
                ++i;
            }
        }
        const Document doc("d", text);
        const auto parse = parse_markup(doc, marked, en);
        ASSERT_EQ(parse.spans.size(), truth.size()) << marked;
        for (std::size_t i = 0; i < truth.size(); ++i) EXPECT_TRUE(same_extent(parse.spans[i], truth[i])) << marked;
        EXPECT_DOUBLE_EQ(parse.alignment_score, 1.0) << marked;
    }
}

TEST(Prompt, EnglishPromptMatchesTemplateVerbatim) {
    const std::string tpl = testutil::read_fixture("prompt_template_en.txt");
    const std::string note = testutil::read_fixture("worked_example_original.txt");
    std::string expected = tpl;
    expected.replace(expected.find("{clinical_note}"), 15, note);
    EXPECT_EQ(build_prompt(Document("n", note), LabelSet::builtin("en")), expected);
    EXPECT_NE(expected.find("BEGINER_ LABEL CHUNK ENDNER"), std::string::npos);
}

TEST(Prompt, DefinitionsRestrictedToLabelSubset) {
    const LabelSet only_date("en", {}, {"DATE"});
    const std::string prompt = build_prompt(Document("n", "x"), only_date);
    const auto open = prompt.find("<entities>\n") + 11;
    const auto close = prompt.find("</entities>");
    const std::string block = prompt.substr(open, close - open);
    EXPECT_EQ(block.rfind("DATE (Identifies specific dates or years.", 0), 0u);
    EXPECT_EQ(std::count(block.begin(), block.end(), '\n'), 1);
}

TEST(Prompt, EmptyNoteAndInjectivity) {
    const LabelSet en = LabelSet::builtin("en");
    const std::string empty = build_prompt(Document("n", ""), en);
    EXPECT_NE(empty.find("Here is the clinical note:\n\n\n\nInstructions"), std::string::npos);
    EXPECT_NE(build_prompt(Document("a", "note a"), en), build_prompt(Document("b", "note b"), en));
    EXPECT_NE(build_prompt(Document("a", "ab"), en), build_prompt(Document("b", "a b"), en));
}

TEST(Prompt, NonEnglishDefinitionsCoverEveryModelLabel) {
    for (const auto& lang : LabelSet::builtin_languages()) {
        const LabelSet ls = LabelSet::builtin(lang);
        const std::string defs = prompt_definitions(ls);
        EXPECT_EQ(static_cast<std::size_t>(std::count(defs.begin(), defs.end(), '\n')), ls.model_labels().size())
            << lang;
        for (const auto& l : ls.model_labels()) {
            EXPECT_NE(defs.find(prompt_label_name(l, ls) + " ("), std::string::npos) << lang << " " << l;
        }
    }
}
