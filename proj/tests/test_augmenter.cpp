#include "deid/augmenter.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <random>
#include <regex>

using namespace deid;

namespace {

FakeChunkTable general() { return FakeChunkTable::load(testutil::data_path("fake_tables/general.json")); }

ConllRecords small_corpus() {
    return read_conll(
        "-DOCSTART- r1\n\n"
        "He O\nworks O\nat O\nAcme B-ORGANIZATION\nCorp I-ORGANIZATION\nas O\nan O\narchitect B-PROFESSION\n. O\n\n"
        "Nothing O\nhere O\n\n");
}

}  // namespace

TEST(Augmenter, PlaceholderIds) {
    EXPECT_EQ(placeholder_id("ORGANIZATION", 1), "__ORGANIZATION_1__");
    EXPECT_EQ(placeholder_id("MEDICAL RECORD", 2), "__MEDICAL_RECORD_2__");
}

TEST(Augmenter, ToPlaceholdersNumbersPerLabel) {
    const std::string text = "Ayşe met Acme and Beta at Acme";
    const std::vector<EntitySpan> spans{{"ORGANIZATION", 26, 30}, {"PATIENT", 0, 4}, {"ORGANIZATION", 9, 13},
                                        {"ORGANIZATION", 18, 22}};
    const auto doc = to_placeholders(text, spans);
    EXPECT_EQ(doc.text, "__PATIENT_1__ met __ORGANIZATION_1__ and __ORGANIZATION_2__ at __ORGANIZATION_3__");
    ASSERT_EQ(doc.slots.size(), 4u);
    EXPECT_EQ(doc.slots[0].original, "Ayşe");
    EXPECT_EQ(doc.slots[3].original, "Acme");
    EXPECT_THROW(to_placeholders(text, {{"A", 0, 5}, {"B", 3, 8}}), OverlapError);
    EXPECT_THROW(to_placeholders(text, {{"A", 0, 99}}), AlignmentError);
}

TEST(Augmenter, TranslateDetectsLostAndDuplicatedPlaceholders) {
    const auto doc = to_placeholders("works at Acme", {{"ORGANIZATION", 9, 13}});
    DictionaryTranslator ok({{"works", "arbeitet"}, {"at", "bei"}});
    EXPECT_EQ(translate(doc, ok).text, "arbeitet bei __ORGANIZATION_1__");
    DictionaryTranslator lose(std::map<std::string, std::string>{{"__ORGANIZATION_1__", "Acme"}});
    try {
        translate(doc, lose);
        FAIL();
    } catch (const PlaceholderLostError& e) {
        EXPECT_EQ(e.missing(), std::vector<std::string>{"__ORGANIZATION_1__"});
    }
    DictionaryTranslator dup(std::map<std::string, std::string>{{"works", "__ORGANIZATION_1__"}});
    try {
        translate(doc, dup);
        FAIL();
    } catch (const PlaceholderLostError& e) {
        EXPECT_EQ(e.duplicated(), std::vector<std::string>{"__ORGANIZATION_1__"});
    }
}

TEST(Augmenter, ExternalTranslator) {
    const auto doc = to_placeholders("works at Acme", {{"ORGANIZATION", 9, 13}});
    ExternalTranslator sed("sed 's/works/travaille/'");
    EXPECT_EQ(translate(doc, sed).text, "travaille at __ORGANIZATION_1__");
    ExternalTranslator batch(
        "python3 -c \"import sys,json\n"
        "for l in sys.stdin:\n"
        "  print(json.dumps({'text': json.loads(l)['text'].upper()}))\"",
        true);
    const auto out = translate_all({doc, doc}, batch);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[1].text, "WORKS AT __ORGANIZATION_1__");
    ExternalTranslator short_batch("head -n 1", true);
    EXPECT_THROW(translate_all({doc, doc}, short_batch), PluginError);
    ExternalTranslator failing("exit 4");
    EXPECT_THROW(translate(doc, failing), PluginError);
}

TEST(Augmenter, RefillSpansCoverInjectedChunks) {
    const auto table = general();
    const auto doc = to_placeholders("Ayşe works at Acme as a nurse .",
                                     {{"PATIENT", 0, 4}, {"ORGANIZATION", 14, 18}, {"PROFESSION", 24, 29}});
    const auto s = refill(doc, table, 42);
    const Document out("x", s.text);
    ASSERT_EQ(s.spans.size(), 3u);
    EXPECT_EQ(s.text.find("__"), std::string::npos);
    for (const auto& sp : s.spans) {
        EXPECT_EQ(sp.source, Source::Synth);
        EXPECT_FALSE(span_text(out, sp).empty());
    }
    EXPECT_EQ(s.spans[0].label, "PATIENT");
    EXPECT_EQ(s.spans[2].label, "PROFESSION");
    EXPECT_EQ(refill(doc, table, 42).text, s.text);
    EXPECT_THROW(refill(to_placeholders("x y", {{"NOPE", 0, 1}}), table, 1), MissingLabelError);
}

TEST(Augmenter, EmitBioMultiTokenChunk) {
    const std::vector<SyntheticSentence> pairs{{"Seen at St. Mary Clinic today", {{"HOSPITAL", 8, 23}}}};
    const auto recs = emit_bio(pairs);
    ASSERT_EQ(recs.size(), 1u);
    const auto& s = recs[0].sentences.at(0);
    EXPECT_EQ(s.tokens, (std::vector<std::string>{"Seen", "at", "St", ".", "Mary", "Clinic", "today"}));
    EXPECT_EQ(s.tags, (TagSequence{"O", "O", "B-HOSPITAL", "I-HOSPITAL", "I-HOSPITAL", "I-HOSPITAL", "O"}));
    EXPECT_TRUE(emit_bio({}).empty());
}

TEST(Augmenter, FakeTableTemplates) {
    FakeChunkTable t;
    t.add_pool("first", {"Ann"});
    t.add_pool("last", {"Lee"});
    t.add("PATIENT", fake::Compose{"{first} {last}"});
    t.add("ZIP", fake::Pattern{"\\d{5}"});
    t.add("IDNUM", fake::Pattern{"\\L\\L-\\w{2,4}\\{x"});
    t.add("DATE", fake::Date{"Month D, YYYY (MM/DD/YY)", std::chrono::sys_days{std::chrono::year{2020} / 2 / 29},
                             std::chrono::sys_days{std::chrono::year{2020} / 2 / 29}});
    t.add("CITY", fake::Literal{"Springfield"});
    detail::Rng rng(3);
    EXPECT_EQ(t.generate("PATIENT", rng), "Ann Lee");
    EXPECT_TRUE(std::regex_match(t.generate("ZIP", rng), std::regex(R"(\d{5})")));
    EXPECT_TRUE(std::regex_match(t.generate("IDNUM", rng), std::regex(R"([A-Z]{2}-[A-Z0-9]{2,4}\{x)")));
    EXPECT_EQ(t.generate("DATE", rng), "February 29, 2020 (02/29/20)");
    EXPECT_EQ(t.generate("CITY", rng), "Springfield");
    EXPECT_THROW(t.generate("AGE", rng), MissingLabelError);
    EXPECT_THROW(t.add("CITY", fake::Literal{"a__b"}), ConfigError);
    EXPECT_THROW(t.add_pool("empty", {}), ConfigError);
}

TEST(Augmenter, FakeTableJsonValidation) {
    EXPECT_THROW(FakeChunkTable::from_json(nlohmann::json::parse(R"({"labels":{"A":[{"pool":"nope"}]}})")),
                 ConfigError);
    EXPECT_THROW(FakeChunkTable::from_json(nlohmann::json::parse(R"({"labels":{"A":[]}})")), ConfigError);
    EXPECT_THROW(FakeChunkTable::from_json(nlohmann::json::parse(R"({"labels":{"A":[{"bogus":1}]}})")), ConfigError);
    EXPECT_THROW(FakeChunkTable::from_json(nlohmann::json::parse(R"({"labels":{"A":[{"pattern":"\\d{0}"}]}})")),
                 ConfigError);
    EXPECT_THROW(
        FakeChunkTable::from_json(nlohmann::json::parse(R"({"labels":{"A":[{"date":"YYYY","from":"2020-01-02","to":"2020-01-01"}]}})")),
        ConfigError);
    EXPECT_THROW(FakeChunkTable::load("/nonexistent.json"), IOError);
    const auto table = general();
    for (const auto& lang : LabelSet::builtin_languages()) {
        const auto ls = LabelSet::builtin(lang);
        for (const auto& l : ls.priority()) EXPECT_TRUE(table.covers(l)) << lang << " " << l;
    }
    EXPECT_EQ(table.seed(), 7u);
}

TEST(Augmenter, CandidatesAndPreset) {
    const auto corpus = small_corpus();
    EXPECT_EQ(extract_candidates(corpus, {"PROFESSION"}).size(), 1u);
    EXPECT_TRUE(extract_candidates(corpus, {"CITY"}).empty());
    EXPECT_TRUE(extract_candidates(corpus, {}).empty());
    EXPECT_EQ(augmentation_preset(LabelSet::builtin("en")),
              (std::set<std::string>{"ORGANIZATION", "PROFESSION", "LOCATION-OTHER"}));
    EXPECT_EQ(augmentation_preset(LabelSet::builtin("de")).size(), 13u);
}

TEST(Augmenter, IdentityWithOriginalsReproducesCorpus) {
    const auto corpus = read_conll(testutil::read_fixture("augment_corpus.conll"));
    IdentityTranslator identity;
    const auto table = FakeChunkTable::load(testutil::data_path("fake_tables/originals.json"));
    const std::set<std::string> targets{"ORGANIZATION", "PROFESSION", "LOCATION-OTHER"};
    const auto out = augment(corpus, targets, identity, table);
    // Every fixture sentence carries a target label, so nothing is dropped.
    EXPECT_EQ(write_conll(out), write_conll(corpus));
}

TEST(Augmenter, LabelCountsAreConserved) {
    const auto corpus = read_conll(testutil::read_fixture("augment_corpus.conll"));
    IdentityTranslator identity;
    const auto table = general();
    const std::set<std::string> targets{"ORGANIZATION", "PROFESSION", "LOCATION-OTHER"};
    const auto out = augment(corpus, targets, identity, table, {5, 1});
    const auto cands = extract_candidates(corpus, targets);
    const auto out_cands = extract_candidates(out, {"ORGANIZATION", "PROFESSION", "LOCATION-OTHER", "PATIENT",
                                                    "DOCTOR", "CITY", "DATE", "AGE", "HOSPITAL", "PHONE"});
    std::size_t sentences = 0;
    for (const auto& r : out) sentences += r.sentences.size();
    ASSERT_EQ(sentences, cands.size());
    std::map<std::string, int> before;
    std::map<std::string, int> after;
    for (const auto& c : cands) {
        for (const auto& s : c.spans) ++before[s.label];
    }
    for (const auto& r : out) {
        for (const auto& s : r.sentences) {
            for (const auto& span : bio_to_spans(render_sentence(s).sentence, s.tags, Repair::Strict)) ++after[span.label];
        }
    }
    EXPECT_EQ(before, after);
    EXPECT_GT(out_cands.size(), 0u);
}

TEST(Augmenter, DeterministicAcrossJobCounts) {
    const auto corpus = read_conll(testutil::read_fixture("augment_corpus.conll"));
    IdentityTranslator identity;
    const auto table = general();
    const std::set<std::string> targets{"ORGANIZATION", "PROFESSION", "LOCATION-OTHER"};
    const auto one = write_conll(augment(corpus, targets, identity, table, {11, 1}));
    EXPECT_EQ(one, write_conll(augment(corpus, targets, identity, table, {11, 4})));
    EXPECT_EQ(one, write_conll(augment(corpus, targets, identity, table, {11, 8})));
    EXPECT_NE(one, write_conll(augment(corpus, targets, identity, table, {12, 1})));
}

TEST(Augmenter, DocIdsAndGroupingKept) {
    const auto out = augment(small_corpus(), {"PROFESSION"}, *std::make_unique<IdentityTranslator>(), general());
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].doc_id, "r1");
}
