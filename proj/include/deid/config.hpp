#ifndef DEID_CONFIG_HPP
#define DEID_CONFIG_HPP

#include "deid/augmenter.hpp"
#include "deid/backend_client.hpp"
#include "deid/deid_pipeline.hpp"
#include "deid/errors.hpp"
#include "deid/label_set.hpp"
#include "deid/rule_engine.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace deid {

/// Engine settings. JSON layout mirrors the field groups; every key is
/// optional and unknown keys are rejected.
struct EngineConfig {
    std::string language = "en";
    std::string label_set = "builtin";  // "builtin" or a label-set file
    bool default_rules = true;
    std::vector<std::string> rule_files;

    std::string backend_endpoint = "none";  // http://..., exec:<cmd>, mock, none
    bool rule_only = false;
    int timeout_ms = 10000;
    int retries = 2;
    int backoff_ms = 100;
    std::size_t max_in_flight = 4;
    std::size_t pool_size = 1;
    std::size_t max_batch = 64;

    MergeStrategy merge = MergeStrategy::RulePriority;
    std::string mode = "mask";  // mask | obfuscate
    std::string mask_format = "[{label}]";
    std::optional<std::uint64_t> seed;
    std::string fake_table;
    AgeOver89Policy age_over_89 = AgeOver89Policy::None;
    bool prefer_dmy = false;
    std::string normalization = "NFC";  // NFC | none
    std::string input_format = "text";  // text | span-json | conll
    std::string output_format = "text"; // text | span-json | conll
    std::string splitter_command;

    static EngineConfig from_json(const nlohmann::json& j) {
        EngineConfig c;
        c.merge_json(j);
        return c;
    }

    static EngineConfig load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        try {
            return from_json(nlohmann::json::parse(in));
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(path + ": " + e.what());
        }
    }

    /// Applies the keys present in `j` over the current values.
    void merge_json(const nlohmann::json& j) {
        if (!j.is_object()) throw ConfigError("config must be a JSON object");
        check_keys(j, {"language", "label_set", "rules", "backend", "merge_policy", "mode", "mask_format", "seed",
                       "fake_table", "age_over_89_policy", "date_order", "normalization", "io", "splitter"},
                   "");
        try {
            language = j.value("language", language);
            label_set = j.value("label_set", label_set);
            if (j.contains("rules")) {
                const auto& r = j.at("rules");
                check_keys(r, {"defaults", "files"}, "rules.");
                default_rules = r.value("defaults", default_rules);
                rule_files = r.value("files", rule_files);
            }
            if (j.contains("backend")) {
                const auto& b = j.at("backend");
                check_keys(b, {"endpoint", "rule_only", "timeout_ms", "retries", "backoff_ms", "max_in_flight",
                               "pool_size", "max_batch"},
                           "backend.");
                backend_endpoint = b.value("endpoint", backend_endpoint);
                rule_only = b.value("rule_only", rule_only);
                timeout_ms = b.value("timeout_ms", timeout_ms);
                retries = b.value("retries", retries);
                backoff_ms = b.value("backoff_ms", backoff_ms);
                max_in_flight = b.value("max_in_flight", max_in_flight);
                pool_size = b.value("pool_size", pool_size);
                max_batch = b.value("max_batch", max_batch);
            }
            if (j.contains("merge_policy")) merge = merge_strategy_from_string(j.at("merge_policy").get<std::string>());
            mode = j.value("mode", mode);
            mask_format = j.value("mask_format", mask_format);
            if (j.contains("seed")) {
                if (j.at("seed").is_null()) {
                    seed.reset();
                } else {
                    seed = j.at("seed").get<std::uint64_t>();
                }
            }
            fake_table = j.value("fake_table", fake_table);
            if (j.contains("age_over_89_policy")) age_over_89 = age_policy_from_string(j.at("age_over_89_policy").get<std::string>());
            if (j.contains("date_order")) {
                const auto order = j.at("date_order").get<std::string>();
                if (order != "MDY" && order != "DMY") throw ConfigError("date_order must be MDY or DMY");
                prefer_dmy = order == "DMY";
            }
            normalization = j.value("normalization", normalization);
            if (j.contains("io")) {
                const auto& io = j.at("io");
                check_keys(io, {"input", "output"}, "io.");
                input_format = io.value("input", input_format);
                output_format = io.value("output", output_format);
            }
            if (j.contains("splitter")) {
                check_keys(j.at("splitter"), {"command"}, "splitter.");
                splitter_command = j.at("splitter").value("command", splitter_command);
            }
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["language"] = language;
        j["label_set"] = label_set;
        j["rules"] = {{"defaults", default_rules}, {"files", rule_files}};
        j["backend"] = {{"endpoint", backend_endpoint}, {"rule_only", rule_only},     {"timeout_ms", timeout_ms},
                        {"retries", retries},           {"backoff_ms", backoff_ms},   {"max_in_flight", max_in_flight},
                        {"pool_size", pool_size},       {"max_batch", max_batch}};
        j["merge_policy"] = std::string(to_string(merge));
        j["mode"] = mode;
        j["mask_format"] = mask_format;
        j["seed"] = seed ? nlohmann::ordered_json(*seed) : nlohmann::ordered_json(nullptr);
        j["fake_table"] = fake_table;
        j["age_over_89_policy"] = age_over_89 == AgeOver89Policy::Aggregate ? "aggregate" : "none";
        j["date_order"] = prefer_dmy ? "DMY" : "MDY";
        j["normalization"] = normalization;
        j["io"] = {{"input", input_format}, {"output", output_format}};
        j["splitter"] = {{"command", splitter_command}};
        return j;
    }

    /// Startup validation: enumerations, required fields and referenced files.
    void validate() const {
        if (mode != "mask" && mode != "obfuscate") throw ConfigError("mode must be mask or obfuscate");
        if (normalization != "NFC" && normalization != "none") throw ConfigError("normalization must be NFC or none");
        for (const auto* f : {&input_format, &output_format}) {
            if (*f != "text" && *f != "span-json" && *f != "conll") {
                throw ConfigError("io format must be text, span-json or conll, got '" + *f + "'");
            }
        }
        if (mode == "obfuscate") {
            if (!seed) throw ConfigError("seed is required when mode=obfuscate");
            if (fake_table.empty()) throw ConfigError("fake_table is required when mode=obfuscate");
        }
        if (timeout_ms <= 0 || retries < 0 || backoff_ms < 0) throw ConfigError("backend timing values out of range");
        if (!rule_only && (backend_endpoint.empty() || backend_endpoint == "none")) {
            throw ConfigError("no backend endpoint configured; set backend.endpoint or enable rule_only");
        }
        const auto labels = load_labels();
        (void)load_rules(labels);
        if (!fake_table.empty()) (void)FakeChunkTable::load(fake_table);
    }

    LabelSet load_labels() const {
        if (label_set == "builtin") return LabelSet::builtin(language);
        if (!std::filesystem::exists(label_set)) throw ConfigError("label set file not found: " + label_set);
        return LabelSet::load(label_set);
    }

    RuleSet load_rules(const LabelSet& labels) const {
        std::vector<RulePattern> rules;
        if (default_rules) {
            for (auto& r : default_rules_for(labels)) rules.push_back(std::move(r));
        }
        for (const auto& path : rule_files) {
            if (!std::filesystem::exists(path)) throw ConfigError("rule file not found: " + path);
            for (auto& r : load_rule_file(path)) rules.push_back(std::move(r));
        }
        return RuleSet(std::move(rules), labels);
    }

    ClientOptions client_options() const {
        return ClientOptions{std::chrono::milliseconds(timeout_ms), retries, std::chrono::milliseconds(backoff_ms),
                             max_in_flight};
    }

    static AgeOver89Policy age_policy_from_string(const std::string& s) {
        if (s == "none") return AgeOver89Policy::None;
        if (s == "aggregate") return AgeOver89Policy::Aggregate;
        throw ConfigError("age_over_89_policy must be none or aggregate");
    }

private:
    /// Default patterns restricted to the rule tier of `labels`.
    static std::vector<RulePattern> default_rules_for(const LabelSet& labels) {
        std::vector<RulePattern> out;
        for (auto& r : deid::default_rules()) {
            if (labels.is_rule_label(r.label)) out.push_back(std::move(r));
        }
        return out;
    }

    static void check_keys(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& prefix) {
        if (!j.is_object()) throw ConfigError("config section " + prefix + " must be an object");
        for (const auto& [key, _] : j.items()) {
            if (!allowed.count(key)) throw ConfigError("unknown config key '" + prefix + key + "'");
        }
    }
};

/// Config path from DEID_CONFIG, if set and non-empty.
inline std::optional<std::string> config_path_from_env() {
    const char* p = std::getenv("DEID_CONFIG");
    if (!p || !*p) return std::nullopt;
    return std::string(p);
}

}  // namespace deid

#endif  // DEID_CONFIG_HPP
