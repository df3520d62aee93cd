#ifndef DEID_ERRORS_HPP
#define DEID_ERRORS_HPP

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace deid {

/// Root of every exception the engine throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OverlapError : public Error {
public:
    using Error::Error;
};

class AlignmentError : public Error {
public:
    using Error::Error;
};

class InvalidTagError : public Error {
public:
    InvalidTagError(const std::string& what, std::optional<std::size_t> position = std::nullopt)
        : Error(what), position_(position) {}

    /// Tag index within a sentence, or line number when raised by the CoNLL reader.
    std::optional<std::size_t> position() const noexcept { return position_; }

private:
    std::optional<std::size_t> position_;
};

class UnknownLabelError : public Error {
public:
    explicit UnknownLabelError(std::string label)
        : Error("unknown label: " + label), label_(std::move(label)) {}

    const std::string& label() const noexcept { return label_; }

private:
    std::string label_;
};

class PluginError : public Error {
public:
    using Error::Error;
};

class PatternCompileError : public Error {
public:
    /// Carries every failing pattern so a rule file reports all problems at once.
    explicit PatternCompileError(std::vector<std::string> problems)
        : Error(join(problems)), problems_(std::move(problems)) {}

    const std::vector<std::string>& problems() const noexcept { return problems_; }

private:
    static std::string join(const std::vector<std::string>& items) {
        std::string out = "rule compile errors:";
        for (const auto& p : items) {
            out += "\n  " + p;
        }
        return out;
    }

    std::vector<std::string> problems_;
};

class FormatError : public Error {
public:
    FormatError(const std::string& what, std::size_t line)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class IOError : public Error {
public:
    using Error::Error;
};

class PlaceholderLostError : public Error {
public:
    PlaceholderLostError(std::vector<std::string> missing, std::vector<std::string> duplicated)
        : Error(describe(missing, duplicated)),
          missing_(std::move(missing)),
          duplicated_(std::move(duplicated)) {}

    const std::vector<std::string>& missing() const noexcept { return missing_; }
    const std::vector<std::string>& duplicated() const noexcept { return duplicated_; }

private:
    static std::string describe(const std::vector<std::string>& missing,
                                const std::vector<std::string>& duplicated) {
        std::string out = "placeholders not preserved by translation;";
        out += " missing:";
        for (const auto& id : missing) out += " " + id;
        out += "; duplicated:";
        for (const auto& id : duplicated) out += " " + id;
        return out;
    }

    std::vector<std::string> missing_;
    std::vector<std::string> duplicated_;
};

class MissingLabelError : public Error {
public:
    explicit MissingLabelError(const std::string& label)
        : Error("no fake-chunk templates for label: " + label), label_(label) {}

    const std::string& label() const noexcept { return label_; }

private:
    std::string label_;
};

class DocumentMismatchError : public Error {
public:
    using Error::Error;
};

class EmptyInputError : public Error {
public:
    using Error::Error;
};

class BackendUnavailableError : public Error {
public:
    using Error::Error;
};

class ProtocolError : public Error {
public:
    ProtocolError(const std::string& what, std::optional<std::size_t> sentence = std::nullopt)
        : Error(sentence ? "sentence " + std::to_string(*sentence) + ": " + what : what),
          sentence_(sentence) {}

    std::optional<std::size_t> sentence() const noexcept { return sentence_; }

private:
    std::optional<std::size_t> sentence_;
};

class LabelSetMismatchError : public Error {
public:
    LabelSetMismatchError(std::vector<std::string> extra, std::vector<std::string> missing)
        : Error(describe(extra, missing)), extra_(std::move(extra)), missing_(std::move(missing)) {}

    /// Labels the backend advertises that the engine does not know.
    const std::vector<std::string>& extra() const noexcept { return extra_; }
    /// Engine labels the backend does not advertise.
    const std::vector<std::string>& missing() const noexcept { return missing_; }

private:
    static std::string describe(const std::vector<std::string>& extra,
                                const std::vector<std::string>& missing) {
        std::string out = "backend label set differs from engine label set;";
        out += " extra:";
        for (const auto& l : extra) out += " '" + l + "'";
        out += "; missing:";
        for (const auto& l : missing) out += " '" + l + "'";
        return out;
    }

    std::vector<std::string> extra_;
    std::vector<std::string> missing_;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Thrown by transports on connection-level failures; the only retryable error.
class TransportError : public Error {
public:
    using Error::Error;
};

}  // namespace deid

#endif  // DEID_ERRORS_HPP
