#include "deid/conll.hpp"
#include "deid/tokenizer.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace deid;

namespace {

ConllRecords from_oracle_json(const nlohmann::json& j) {
    ConllRecords out;
    for (const auto& r : j) {
        ConllRecord rec;
        if (!r.at("doc_id").is_null()) rec.doc_id = r.at("doc_id").get<std::string>();
        for (const auto& s : r.at("sentences")) {
            rec.sentences.push_back(ConllSentence{s.at("tokens").get<std::vector<std::string>>(),
                                                  s.at("tags").get<std::vector<std::string>>()});
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace

TEST(Conll, TwoColumnBasics) {
    const auto recs = read_conll("Linda B-PATIENT\nMartinez I-PATIENT\n\n");
    ASSERT_EQ(recs.size(), 1u);
    ASSERT_EQ(recs[0].sentences.size(), 1u);
    EXPECT_EQ(recs[0].sentences[0].tokens, (std::vector<std::string>{"Linda", "Martinez"}));
    EXPECT_TRUE(read_conll("").empty());
}

TEST(Conll, FourColumnMatchesOracle) {
    const auto recs = read_conll(testutil::read_fixture("four_column.conll"));
    const auto expected = from_oracle_json(nlohmann::json::parse(testutil::read_fixture("four_column.json")));
    EXPECT_EQ(recs, expected);
    EXPECT_EQ(recs[0].sentences[0].tags.back(), "B-MEDICAL RECORD");
}

TEST(Conll, CanonicalWriterIsByteExact) {
    const auto recs = read_conll(testutil::read_fixture("four_column.conll"));
    const auto canonical = testutil::read_fixture("canonical.conll");
    EXPECT_EQ(write_conll(recs), canonical);
    EXPECT_EQ(write_conll(read_conll(canonical)), canonical);
}

TEST(Conll, CrLfAndTabsAccepted) {
    const auto recs = read_conll("a\tO\r\nb  \t B-AGE\r\n\r\n");
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].sentences[0].tags, (TagSequence{"O", "B-AGE"}));
    EXPECT_EQ(write_conll(recs), "a O\nb B-AGE\n\n");
}

TEST(Conll, ErrorsCarryLineNumbers) {
    try {
        read_conll("a O\nlonely\n");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    try {
        read_conll("a O\n\xff\xfe O\n");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    try {
        read_conll("a O\nb O\nc I-AGE\n", Repair::Strict);
        FAIL();
    } catch (const InvalidTagError& e) {
        EXPECT_EQ(e.position(), 3u);
    }
    EXPECT_NO_THROW(read_conll("a O\nb O\nc I-AGE\n", Repair::Relaxed));
    EXPECT_NO_THROW(read_conll("a B-WHATEVER\n", Repair::Strict));
}

TEST(Conll, WriterRejectsWhitespaceInTokens) {
    ConllRecords recs{ConllRecord{{ConllSentence{{"a\tb"}, {"O"}}}, std::nullopt}};
    EXPECT_THROW(write_conll(recs), IOError);
    recs[0].sentences[0] = ConllSentence{{"a"}, {"B-A  B"}};
    EXPECT_THROW(write_conll(recs), IOError);
    recs[0].sentences[0] = ConllSentence{{"a"}, {"O X"}};
    EXPECT_THROW(write_conll(recs), IOError);
    recs[0].sentences[0] = ConllSentence{{"a", "b"}, {"O"}};
    EXPECT_THROW(write_conll(recs), IOError);
    recs[0].sentences[0] = ConllSentence{{"a"}, {"I-LOCATION-OTHER"}};
    recs[0].doc_id = "has space";
    EXPECT_THROW(write_conll(recs), IOError);
}

TEST(Conll, ReaderNeverCrashesOnArbitraryBytes) {
    std::mt19937_64 gen(1);
    const std::string alphabet = "ab O-BI \t\n\r#\xc3\xa9\xff-DOCSTART";
    for (int round = 0; round < 2000; ++round) {
        std::string data;
        const std::size_t n = gen() % 60;
        for (std::size_t i = 0; i < n; ++i) data += alphabet[gen() % alphabet.size()];
        try {
            const auto recs = read_conll(data, round % 2 ? Repair::Strict : Repair::Relaxed);
            for (const auto& r : recs) {
                for (const auto& s : r.sentences) EXPECT_EQ(s.tokens.size(), s.tags.size());
            }
        } catch (const FormatError&) {
        } catch (const InvalidTagError&) {
        }
    }
}

TEST(Conll, RoundTripProperty) {
    std::mt19937_64 gen(77);
    const std::vector<std::string> toks{"Linda", "Müller", "45", ",", "#:", "Ayşe", "İstanbul", "٦٥", "x"};
    const std::vector<std::string> tags{"O", "B-PATIENT", "I-PATIENT", "B-MEDICAL RECORD", "I-MEDICAL RECORD",
                                        "B-LOCATION-OTHER"};
    for (int round = 0; round < 300; ++round) {
        ConllRecords recs;
        const std::size_t nrec = 1 + gen() % 3;
        for (std::size_t r = 0; r < nrec; ++r) {
            ConllRecord rec;
            if (gen() % 2) rec.doc_id = "doc-" + std::to_string(gen() % 100);
            const std::size_t ns = (r == 0 && !rec.doc_id) ? 1 + gen() % 3 : gen() % 3;
            for (std::size_t s = 0; s < ns; ++s) {
                ConllSentence cs;
                const std::size_t nt = 1 + gen() % 6;
                for (std::size_t t = 0; t < nt; ++t) {
                    cs.tokens.push_back(toks[gen() % toks.size()]);
                    cs.tags.push_back(tags[gen() % tags.size()]);
                }
                rec.sentences.push_back(std::move(cs));
            }
            recs.push_back(std::move(rec));
        }
        const auto text = write_conll(recs);
        EXPECT_EQ(read_conll(text), recs);
        EXPECT_EQ(write_conll(read_conll(text)), text);
    }
}

TEST(Conll, SpanJsonRoundTrip) {
    AnnotatedDocument a{Document("n1", "Ayşe Yılmaz, 45"), {{"PATIENT", 0, 11}, {"AGE", 13, 15, Source::Model, 0.5}}};
    const auto text = write_span_json({a});
    const auto back = read_span_json(text);
    ASSERT_EQ(back.size(), 1u);
    EXPECT_EQ(back[0].doc.text(), a.doc.text());
    EXPECT_EQ(back[0].spans, a.spans);
    EXPECT_EQ(read_span_json(to_span_json(a).dump()).size(), 1u);
    EXPECT_THROW(read_span_json("{"), FormatError);
    EXPECT_THROW(read_span_json(R"({"doc_id":"x"})"), FormatError);
    EXPECT_THROW(read_span_json(R"({"doc_id":"x","text":"t","spans":[{"label":"A","start":0,"end":1,"source":"ZZZ"}]})"),
                 Error);
}

TEST(Conll, ProjectionAndRender) {
    const AnnotatedDocument a{Document("n1", "Hans Müller came. Seen in Berlin."),
                              {{"PATIENT", 0, 11}, {"CITY", 26, 32}}};
    const auto recs = to_conll({a}, {split_sentences(a.doc)});
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].doc_id, "n1");
    ASSERT_EQ(recs[0].sentences.size(), 2u);
    EXPECT_EQ(recs[0].sentences[0].tags, (TagSequence{"B-PATIENT", "I-PATIENT", "O", "O"}));
    EXPECT_EQ(recs[0].sentences[1].tags, (TagSequence{"O", "O", "B-CITY", "O"}));
    const auto rendered = render_sentence(recs[0].sentences[1]);
    EXPECT_EQ(rendered.text, "Seen in Berlin .");
    EXPECT_EQ(rendered.sentence.tokens[2].start, 8u);
    EXPECT_EQ(rendered.sentence.tokens[2].end, 14u);
}
