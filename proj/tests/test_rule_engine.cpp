#include "deid/rule_engine.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <random>

using namespace deid;

namespace {

const LabelSet& en() {
    static const LabelSet ls = LabelSet::builtin("en");
    return ls;
}

const RuleSet& defaults() {
    static const RuleSet rs(default_rules(), en());
    return rs;
}

nlohmann::json probes() {
    static const auto j = nlohmann::json::parse(testutil::read_fixture("rule_probes.json"));
    return j;
}

/// Each probe names the one span of its label the text must yield, or null
/// for none.
void check_probes(const std::string& group) {
    const auto list = probes().at(group);
    std::size_t positive = 0;
    std::size_t negative = 0;
    for (const auto& p : list) {
        const auto text = p.at("text").get<std::string>();
        const auto label = p.at("label").get<std::string>();
        const Document doc("d", text);
        std::vector<std::string> found;
        for (const auto& s : detect_rules(doc, defaults())) {
            if (s.label == label) found.push_back(span_text(doc, s));
        }
        if (p.at("span").is_null()) {
            ++negative;
            EXPECT_TRUE(found.empty()) << label << " unexpectedly matched in: " << text << " -> " << found.front();
        } else {
            ++positive;
            ASSERT_EQ(found.size(), 1u) << label << " in: " << text;
            EXPECT_EQ(found[0], p.at("span").get<std::string>()) << text;
        }
    }
    EXPECT_GE(positive, 5u) << group;
    EXPECT_GE(negative, 5u) << group;
}

}  // namespace

TEST(RuleEngine, Email) { check_probes("EMAIL"); }

TEST(RuleEngine, Url) { check_probes("URL"); }

TEST(RuleEngine, Ipv4) { check_probes("IPv4"); }

TEST(RuleEngine, Ipv6) { check_probes("IPv6"); }

TEST(RuleEngine, Ssn) { check_probes("SSN"); }

TEST(RuleEngine, Vin) { check_probes("VIN"); }

TEST(RuleEngine, FaxNeedsContext) { check_probes("FAX"); }

TEST(RuleEngine, AccountNeedsContextAndDigit) { check_probes("ACCOUNT"); }

TEST(RuleEngine, DriverLicense) { check_probes("DLN"); }

TEST(RuleEngine, License) { check_probes("LICENSE"); }

TEST(RuleEngine, Plate) { check_probes("PLATE"); }

TEST(RuleEngine, OffsetsAreCodePoints) {
    const Document doc("d", "Müller ✉ müller@exämple.de or mueller@example.de");
    const auto spans = detect_rules(doc, defaults());
    ASSERT_FALSE(spans.empty());
    EXPECT_EQ(span_text(doc, spans.back()), "mueller@example.de");
    EXPECT_EQ(spans.back().start, 30u);
}

TEST(RuleEngine, OutputSortedDisjointRuleSourced) {
    std::mt19937_64 gen(8);
    const std::vector<std::string> pieces{"SSN ",          "123-45-6789", " ",         "fax ",   "617-555-0199",
                                          "acct ",         "AB12345",     "10.0.0.1",  "a@b.io", "https://x.y/z",
                                          "1HGCM82633A004352", "DL ", "S1234567", "plate ", "7ABC123", ".", "\n",
                                          "::1",           "2001:db8::1", "lic ",      "RN-1234"};
    for (int round = 0; round < 500; ++round) {
        std::string text;
        const int n = 1 + static_cast<int>(gen() % 20);
        for (int i = 0; i < n; ++i) text += pieces[gen() % pieces.size()];
        const Document doc("d", text);
        const auto spans = detect_rules(doc, defaults());
        for (std::size_t i = 0; i < spans.size(); ++i) {
            EXPECT_EQ(spans[i].source, Source::Rule);
            EXPECT_DOUBLE_EQ(spans[i].confidence, 1.0);
            EXPECT_LT(spans[i].start, spans[i].end);
            EXPECT_LE(spans[i].end, doc.size());
            if (i > 0) EXPECT_LE(spans[i - 1].end, spans[i].start) << text;
        }
        EXPECT_TRUE(validate_spans(doc, spans, &en()).empty());
    }
}

TEST(RuleEngine, LongestThenPriority) {
    std::vector<RuleMatch> c{{EntitySpan{"SSN", 0, 9, Source::Rule, 1.0}, 20, 0},
                             {EntitySpan{"ACCOUNT", 0, 9, Source::Rule, 1.0}, 25, 1},
                             {EntitySpan{"URL", 2, 12, Source::Rule, 1.0}, 1, 2}};
    const auto kept = resolve_rule_matches(c);
    ASSERT_EQ(kept.size(), 1u);
    EXPECT_EQ(kept[0].label, "URL");
    c.pop_back();
    const auto tie = resolve_rule_matches(c);
    ASSERT_EQ(tie.size(), 1u);
    EXPECT_EQ(tie[0].label, "ACCOUNT");
}

TEST(RuleEngine, CompileErrorsAreCollected) {
    const std::vector<RulePattern> bad{{"EMAIL", "([a-z]", "", 0},
                                       {"AGE", "\\d+", "", 0},
                                       {"URL", "(?<=x)y", "", 0},
                                       {"IP", "(a)\\1", "", 0},
                                       {"SSN", "\\d+", "nope", 0}};
    try {
        RuleSet rs(bad, en());
        FAIL() << "expected PatternCompileError";
    } catch (const PatternCompileError& e) {
        EXPECT_EQ(e.problems().size(), 5u);
    }
}

TEST(RuleEngine, RuleFileLoading) {
    const auto rules = load_rule_file(testutil::data_path("rules/en_example.json"));
    ASSERT_FALSE(rules.empty());
    const RuleSet rs(rules, en());
    EXPECT_EQ(rs.rules().size(), rules.size());
    EXPECT_THROW(load_rule_file("/nonexistent/rules.json"), ConfigError);
    for (const auto& r : default_rules()) EXPECT_EQ(rule_from_json(rule_to_json(r)).pattern, r.pattern);
}

TEST(RuleEngine, Validators) {
    EXPECT_TRUE(validators::vin_checksum("1HGCM82633A004352"));
    EXPECT_TRUE(validators::vin_checksum("1M8GDM9AXKP042788"));
    EXPECT_FALSE(validators::vin_checksum("1HGCM82634A004352"));
    EXPECT_TRUE(validators::ipv4("1.2.3.4"));
    EXPECT_FALSE(validators::ipv4("01.2.3.4444"));
    EXPECT_TRUE(validators::ipv6("::1:2"));
    EXPECT_FALSE(validators::ipv6("1:2:3:4:5:6:7:8:9"));
}

TEST(RuleEngine, EveryDefaultPatternHasProbes) {
    for (const auto& r : default_rules()) {
        const std::string group = r.validator == "ipv4" ? "IPv4" : r.validator == "ipv6" ? "IPv6" : r.label;
        EXPECT_TRUE(probes().contains(group)) << r.label << " /" << r.pattern << "/";
    }
}
