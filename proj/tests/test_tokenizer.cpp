#include "deid/detail/utf8.hpp"
#include "deid/tokenizer.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <random>

using namespace deid;

namespace {

std::vector<std::string> texts(const std::vector<Token>& toks) {
    std::vector<std::string> out;
    for (const auto& t : toks) out.push_back(t.text);
    return out;
}

}  // namespace

TEST(Tokenizer, MatchesFrozenOracle) {
    const auto frozen = nlohmann::json::parse(testutil::read_fixture("multilingual_tokens.json"));
    ASSERT_GE(frozen.size(), 7u);
    for (const auto& line : frozen) {
        const auto toks = word_punct_tokenize(line.at("text").get<std::string>());
        ASSERT_EQ(toks.size(), line.at("tokens").size()) << line.at("text");
        for (std::size_t i = 0; i < toks.size(); ++i) {
            const auto& t = line.at("tokens")[i];
            EXPECT_EQ(toks[i].text, t[0].get<std::string>());
            EXPECT_EQ(toks[i].start, t[1].get<std::size_t>());
            EXPECT_EQ(toks[i].end, t[2].get<std::size_t>());
        }
    }
}

TEST(Tokenizer, MedicalRecordNumberSplitsIntoThree) {
    EXPECT_EQ(texts(word_punct_tokenize("MR#: 2775283")), (std::vector<std::string>{"MR", "#:", "2775283"}));
}

TEST(Tokenizer, PunctuationRuns) {
    EXPECT_EQ(texts(word_punct_tokenize("Dr. Smith's (age 45)...")),
              (std::vector<std::string>{"Dr", ".", "Smith", "'", "s", "(", "age", "45", ")..."}));
    EXPECT_TRUE(word_punct_tokenize("   \t\n").empty());
}

TEST(Tokenizer, ReconstructionProperty) {
    std::mt19937_64 gen(17);
    const std::u32string alphabet = U"aZ9_ş İ.,-#()/ \t\nم٦é😀";
    for (int round = 0; round < 500; ++round) {
        std::u32string text;
        const std::size_t n = gen() % 40;
        for (std::size_t i = 0; i < n; ++i) text += alphabet[gen() % alphabet.size()];
        const auto toks = word_punct_tokenize(std::u32string_view(text));
        std::size_t prev = 0;
        for (const auto& t : toks) {
            ASSERT_LT(t.start, t.end);
            ASSERT_GE(t.start, prev);
            EXPECT_EQ(detail::encode(text.substr(t.start, t.end - t.start)), t.text);
            for (std::size_t k = prev; k < t.start; ++k) EXPECT_TRUE(detail::is_space(text[k]));
            prev = t.end;
        }
        for (std::size_t k = prev; k < text.size(); ++k) EXPECT_TRUE(detail::is_space(text[k]));
        // A token never mixes word and non-word characters.
        for (const auto& t : toks) {
            const auto cps = detail::decode(t.text);
            for (char32_t c : cps) EXPECT_EQ(detail::is_word_char(c), detail::is_word_char(cps[0]));
        }
    }
}

TEST(Tokenizer, BaseOffsetIsApplied) {
    const auto toks = word_punct_tokenize(U"ab cd", 10);
    ASSERT_EQ(toks.size(), 2u);
    EXPECT_EQ(toks[1].start, 13u);
    EXPECT_EQ(toks[1].end, 15u);
}

TEST(Splitter, DefaultSplitsOnTerminators) {
    const Document d("d", "Seen by Dr. Brown today. Pt. stable! Follow up? Yes.");
    const auto s = split_sentences(d);
    ASSERT_EQ(s.size(), 4u);
    EXPECT_EQ(d.slice(s[0].start, s[0].end), "Seen by Dr. Brown today.");
    EXPECT_EQ(d.slice(s[1].start, s[1].end), "Pt. stable!");
    EXPECT_EQ(d.slice(s[3].start, s[3].end), "Yes.");
    for (const auto& sent : s) {
        for (const auto& t : sent.tokens) EXPECT_EQ(d.slice(t.start, t.end), t.text);
    }
}

TEST(Splitter, InitialsAndLowercaseDoNotSplit) {
    EXPECT_EQ(split_sentences(Document("d", "Seen by J. Smith. next line continues.")).size(), 1u);
    EXPECT_EQ(split_sentences(Document("d", "Dose 2.5 mg daily. Then stop.")).size(), 2u);
}

TEST(Splitter, CaselessScriptAndQuotes) {
    EXPECT_EQ(split_sentences(Document("d", "المريض مستقر. تم الخروج.", "ar")).size(), 2u);
    EXPECT_EQ(split_sentences(Document("d", "He said \"stop.\" Then left.")).size(), 2u);
}

TEST(Splitter, ExternalPlugin) {
    ExternalSplitter ok("printf '0\\t5\\n6\\t11\\n'");
    const Document d("d", "Hello world");
    const auto s = split_sentences(d, ok);
    ASSERT_EQ(s.size(), 2u);
    EXPECT_EQ(s[1].tokens.at(0).text, "world");
    EXPECT_EQ(s[1].tokens.at(0).start, 6u);

    ExternalSplitter gap("printf '0\\t4\\n'");
    EXPECT_THROW(split_sentences(d, gap), PluginError);
    ExternalSplitter garbage("echo nonsense");
    EXPECT_THROW(split_sentences(d, garbage), PluginError);
    ExternalSplitter failing("exit 3");
    EXPECT_THROW(split_sentences(d, failing), PluginError);
    ExternalSplitter overlap("printf '0\\t6\\n5\\t11\\n'");
    EXPECT_THROW(split_sentences(d, overlap), PluginError);
}

TEST(Splitter, ExternalPluginReadsStdin) {
    ExternalSplitter echo_len("python3 -c \"import sys; t=sys.stdin.read(); print(f'0\\t{len(t)}')\"");
    const Document d("d", "Ayşe Yılmaz");
    const auto s = split_sentences(d, echo_len);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].end, 11u);
}
