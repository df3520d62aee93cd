#ifndef DEID_LABEL_SET_HPP
#define DEID_LABEL_SET_HPP

#include "deid/errors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deid {

/// Checks the label-name grammar: uppercase ASCII letters and digits, with
/// single hyphens, underscores or spaces allowed between them.
inline bool is_valid_label_name(std::string_view name) {
    if (name.empty()) return false;
    auto is_core = [](char c) { return (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9'); };
    if (!is_core(name.front()) || !is_core(name.back())) return false;
    for (char c : name) {
        if (!is_core(c) && c != '-' && c != '_' && c != ' ') return false;
    }
    return true;
}

/// Per-language registry of entity labels split into a regex tier and a
/// model tier. `priority` orders every label for tie-breaking (index 0 wins).
class LabelSet {
public:
    LabelSet(std::string language_code, std::vector<std::string> rule_labels,
             std::vector<std::string> model_labels, std::vector<std::string> priority = {})
        : language_code_(std::move(language_code)),
          rule_labels_(std::move(rule_labels)),
          model_labels_(std::move(model_labels)),
          priority_(std::move(priority)) {
        if (priority_.empty()) {
            priority_ = rule_labels_;
            priority_.insert(priority_.end(), model_labels_.begin(), model_labels_.end());
        }
        validate();
        for (std::size_t i = 0; i < priority_.size(); ++i) rank_.emplace(priority_[i], i);
    }

    const std::string& language_code() const noexcept { return language_code_; }
    const std::vector<std::string>& rule_labels() const noexcept { return rule_labels_; }
    const std::vector<std::string>& model_labels() const noexcept { return model_labels_; }
    const std::vector<std::string>& priority() const noexcept { return priority_; }

    bool contains(std::string_view label) const { return rank_.find(std::string(label)) != rank_.end(); }

    bool is_rule_label(std::string_view label) const {
        return std::find(rule_labels_.begin(), rule_labels_.end(), label) != rule_labels_.end();
    }

    bool is_model_label(std::string_view label) const {
        return std::find(model_labels_.begin(), model_labels_.end(), label) != model_labels_.end();
    }

    /// Position in the priority order; throws UnknownLabelError.
    std::size_t rank(std::string_view label) const {
        auto it = rank_.find(std::string(label));
        if (it == rank_.end()) throw UnknownLabelError(std::string(label));
        return it->second;
    }

    std::size_t size() const noexcept { return priority_.size(); }

    nlohmann::json to_json() const {
        return {{"language", language_code_},
                {"rule_labels", rule_labels_},
                {"model_labels", model_labels_},
                {"priority", priority_}};
    }

    static LabelSet from_json(const nlohmann::json& j) {
        try {
            return LabelSet(j.at("language").get<std::string>(),
                            j.value("rule_labels", std::vector<std::string>{}),
                            j.at("model_labels").get<std::vector<std::string>>(),
                            j.value("priority", std::vector<std::string>{}));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("label set: ") + e.what());
        }
    }

    static LabelSet load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open label set file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(path + ": " + e.what());
        }
        return from_json(j);
    }

    /// Shipped sets: en, de, it, fr, tr, es, ro, ar.
    static LabelSet builtin(std::string_view language);

    static const std::vector<std::string>& builtin_languages() {
        static const std::vector<std::string> langs{"en", "de", "it", "fr", "tr", "es", "ro", "ar"};
        return langs;
    }

    friend bool operator==(const LabelSet& a, const LabelSet& b) {
        return a.language_code_ == b.language_code_ && a.rule_labels_ == b.rule_labels_ &&
               a.model_labels_ == b.model_labels_ && a.priority_ == b.priority_;
    }

private:
    void validate() const {
        std::vector<std::string> all = rule_labels_;
        all.insert(all.end(), model_labels_.begin(), model_labels_.end());
        for (const auto& l : all) {
            if (!is_valid_label_name(l)) throw ConfigError("invalid label name: '" + l + "'");
        }
        std::vector<std::string> sorted_all = all;
        std::sort(sorted_all.begin(), sorted_all.end());
        if (std::adjacent_find(sorted_all.begin(), sorted_all.end()) != sorted_all.end()) {
            throw ConfigError("label listed twice or in both rule and model tiers");
        }
        std::vector<std::string> sorted_priority = priority_;
        std::sort(sorted_priority.begin(), sorted_priority.end());
        if (sorted_priority != sorted_all) {
            throw ConfigError("priority must be a permutation of rule_labels + model_labels");
        }
    }

    std::string language_code_;
    std::vector<std::string> rule_labels_;
    std::vector<std::string> model_labels_;
    std::vector<std::string> priority_;
    std::unordered_map<std::string, std::size_t> rank_;
};

namespace detail {

inline const std::vector<std::string>& english_rule_labels() {
    static const std::vector<std::string> labels{"ACCOUNT", "DLN", "EMAIL", "FAX", "IP",
                                                 "LICENSE", "PLATE", "SSN", "URL", "VIN"};
    return labels;
}

inline std::vector<std::string> rule_labels_excluding(const std::vector<std::string>& model) {
    std::vector<std::string> out;
    for (const auto& l : english_rule_labels()) {
        if (std::find(model.begin(), model.end(), l) == model.end()) out.push_back(l);
    }
    return out;
}

}  // namespace detail

inline LabelSet LabelSet::builtin(std::string_view language) {
    using V = std::vector<std::string>;
    V model;
    if (language == "en") {
        model = {"AGE",      "CITY",           "COUNTRY",        "DATE",         "DEVICE",  "DOCTOR",
                 "HOSPITAL", "IDNUM",          "LOCATION-OTHER", "MEDICAL RECORD", "ORGANIZATION",
                 "PATIENT",  "PHONE",          "PROFESSION",     "STATE",        "STREET",  "USERNAME",
                 "ZIP"};
    } else if (language == "de" || language == "it" || language == "fr" || language == "ar") {
        model = {"AGE",     "CITY",  "COUNTRY",    "DATE",   "DOCTOR", "HOSPITAL", "IDNUM",
                 "ORGANIZATION", "PATIENT", "PHONE", "PROFESSION", "STREET", "ZIP"};
    } else if (language == "tr") {
        model = {"AGE",          "CITY",    "COUNTRY", "DATE",       "DOCTOR", "HOSPITAL",
                 "IDNUM",        "LOCATION", "MEDICAL RECORD", "ORGANIZATION", "PATIENT", "PHONE",
                 "PROFESSION",   "STREET",  "ZIP",     "FAMILY"};
    } else if (language == "es") {
        model = {"AGE",     "CITY",  "COUNTRY",    "DATE", "DOCTOR", "EMAIL", "HOSPITAL", "ID",
                 "MEDICAL RECORD", "ORGANIZATION", "PATIENT", "PHONE", "PROFESSION", "SEX", "SSN",
                 "STREET", "ZIP"};
    } else if (language == "ro") {
        model = {"AGE",      "CITY",  "COUNTRY", "DATE",  "DOCTOR",  "EMAIL", "HOSPITAL", "IDNUM",
                 "LOCATION", "MEDICAL RECORD", "ORGANIZATION", "PATIENT", "PHONE", "PROFESSION",
                 "STREET",   "ZIP",   "FAX"};
    } else {
        throw ConfigError("no builtin label set for language: " + std::string(language));
    }
    return LabelSet(std::string(language), detail::rule_labels_excluding(model), model);
}

}  // namespace deid

#endif  // DEID_LABEL_SET_HPP
