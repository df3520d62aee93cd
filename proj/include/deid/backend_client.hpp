#ifndef DEID_BACKEND_CLIENT_HPP
#define DEID_BACKEND_CLIENT_HPP

#include "deid/annotation.hpp"
#include "deid/detail/subprocess.hpp"
#include "deid/errors.hpp"
#include "deid/label_set.hpp"
#include "deid/tokenizer.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

namespace deid {

inline constexpr int kProtoVersion = 1;

// ---------------------------------------------------------------------------
// Messages

/// Token offsets are code points relative to the sentence text.
struct WireSentence {
    std::string text;
    std::vector<Token> tokens;

    friend bool operator==(const WireSentence&, const WireSentence&) = default;
};

struct PredictRequest {
    std::string request_id;
    std::string doc_id;
    std::string language_code;
    std::vector<WireSentence> sentences;

    friend bool operator==(const PredictRequest&, const PredictRequest&) = default;
};

struct PredictResponse {
    std::string request_id;
    std::string model_id;
    double latency_ms = 0.0;
    std::vector<TagSequence> sentences;

    friend bool operator==(const PredictResponse&, const PredictResponse&) = default;
};

struct BackendInfo {
    std::string model_id;
    std::string label_set_hash;
    std::vector<std::string> labels;
    std::size_t max_batch = 0;
};

namespace detail {

inline std::string sha256_hex(std::string_view data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xF]);
    }
    return out;
}

inline void check_version(const nlohmann::json& j) {
    if (!j.is_object()) throw ProtocolError("message is not a JSON object");
    if (!j.contains("proto_version") || !j.at("proto_version").is_number_integer()) {
        throw ProtocolError("missing proto_version");
    }
    if (j.at("proto_version").get<int>() != kProtoVersion) {
        throw ProtocolError("unsupported proto_version " + j.at("proto_version").dump());
    }
}

inline nlohmann::json parse_message(std::string_view body) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(std::string("malformed JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("error")) {
        const auto& err = j.at("error");
        throw ProtocolError("backend error " + err.value("code", std::string("unknown")) + ": " +
                            err.value("message", std::string()));
    }
    check_version(j);
    return j;
}

}  // namespace detail

/// SHA-256 over the sorted labels joined by '\n', lowercase hex.
inline std::string label_set_hash(std::vector<std::string> labels) {
    std::sort(labels.begin(), labels.end());
    std::string joined;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) joined += '\n';
        joined += labels[i];
    }
    return detail::sha256_hex(joined);
}

/// Hash of the model tier, which is what a backend predicts.
inline std::string label_set_hash(const LabelSet& labels) { return label_set_hash(labels.model_labels()); }

inline nlohmann::ordered_json to_json(const PredictRequest& r) {
    nlohmann::ordered_json sentences = nlohmann::ordered_json::array();
    for (const auto& s : r.sentences) {
        nlohmann::ordered_json tokens = nlohmann::ordered_json::array();
        for (const auto& t : s.tokens) {
            tokens.push_back(nlohmann::ordered_json{{"text", t.text}, {"start", t.start}, {"end", t.end}});
        }
        sentences.push_back(nlohmann::ordered_json{{"text", s.text}, {"tokens", std::move(tokens)}});
    }
    nlohmann::ordered_json j;
    j["proto_version"] = kProtoVersion;
    j["request_id"] = r.request_id;
    j["doc_id"] = r.doc_id;
    j["language_code"] = r.language_code;
    j["sentences"] = std::move(sentences);
    return j;
}

inline std::string serialize(const PredictRequest& r) { return to_json(r).dump(); }

inline PredictRequest parse_request(std::string_view body) {
    const auto j = detail::parse_message(body);
    try {
        PredictRequest r;
        r.request_id = j.value("request_id", std::string());
        r.doc_id = j.at("doc_id").get<std::string>();
        r.language_code = j.at("language_code").get<std::string>();
        for (const auto& s : j.at("sentences")) {
            WireSentence ws{s.at("text").get<std::string>(), {}};
            for (const auto& t : s.at("tokens")) {
                ws.tokens.push_back(
                    Token{t.at("text").get<std::string>(), t.at("start").get<std::size_t>(), t.at("end").get<std::size_t>()});
            }
            r.sentences.push_back(std::move(ws));
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("bad predict request: ") + e.what());
    }
}

inline nlohmann::ordered_json to_json(const PredictResponse& r) {
    nlohmann::ordered_json sentences = nlohmann::ordered_json::array();
    for (const auto& tags : r.sentences) sentences.push_back(nlohmann::ordered_json{{"tags", tags}});
    nlohmann::ordered_json j;
    j["proto_version"] = kProtoVersion;
    j["request_id"] = r.request_id;
    j["model_id"] = r.model_id;
    if (r.latency_ms == static_cast<double>(static_cast<long long>(r.latency_ms))) {
        j["latency_ms"] = static_cast<long long>(r.latency_ms);
    } else {
        j["latency_ms"] = r.latency_ms;
    }
    j["sentences"] = std::move(sentences);
    return j;
}

inline std::string serialize(const PredictResponse& r) { return to_json(r).dump(); }

/// Shape check only; label and length checks need the request.
inline PredictResponse parse_response(std::string_view body) {
    const auto j = detail::parse_message(body);
    PredictResponse r;
    try {
        r.request_id = j.value("request_id", std::string());
        r.model_id = j.at("model_id").get<std::string>();
        r.latency_ms = j.value("latency_ms", 0.0);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("bad predict response: ") + e.what());
    }
    if (!j.contains("sentences") || !j.at("sentences").is_array()) throw ProtocolError("response has no sentences array");
    const auto& sentences = j.at("sentences");
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        try {
            r.sentences.push_back(sentences[i].at("tags").get<TagSequence>());
        } catch (const nlohmann::json::exception& e) {
            throw ProtocolError(std::string("bad tags: ") + e.what(), i);
        }
    }
    return r;
}

inline nlohmann::ordered_json to_json(const BackendInfo& info) {
    nlohmann::ordered_json j;
    j["proto_version"] = kProtoVersion;
    j["model_id"] = info.model_id;
    j["label_set_hash"] = info.label_set_hash;
    j["labels"] = info.labels;
    j["max_batch"] = info.max_batch;
    return j;
}

inline BackendInfo parse_healthcheck(std::string_view body) {
    const auto j = detail::parse_message(body);
    try {
        return BackendInfo{j.at("model_id").get<std::string>(), j.at("label_set_hash").get<std::string>(),
                           j.value("labels", std::vector<std::string>{}), j.value("max_batch", std::size_t{0})};
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("bad healthcheck response: ") + e.what());
    }
}

inline std::string error_message(std::string_view code, std::string_view message) {
    nlohmann::ordered_json j;
    j["proto_version"] = kProtoVersion;
    j["error"] = nlohmann::ordered_json{{"code", code}, {"message", message}};
    return j.dump();
}

inline std::string healthcheck_message() {
    nlohmann::ordered_json j;
    j["proto_version"] = kProtoVersion;
    j["method"] = "healthcheck";
    return j.dump();
}

/// Deterministic id: SHA-256 of the request serialized with an empty id,
/// first 32 hex digits.
inline std::string compute_request_id(PredictRequest r) {
    r.request_id.clear();
    return detail::sha256_hex(serialize(r)).substr(0, 32);
}

/// Builds a request for `sentences` of `doc`, rebasing token offsets onto
/// each sentence's text.
inline PredictRequest make_request(const Document& doc, const std::vector<Sentence>& sentences) {
    PredictRequest r;
    r.doc_id = doc.doc_id();
    r.language_code = doc.language_code();
    for (const auto& s : sentences) {
        WireSentence ws{std::string(doc.slice(s.start, s.end)), {}};
        for (const auto& t : s.tokens) ws.tokens.push_back(Token{t.text, t.start - s.start, t.end - s.start});
        r.sentences.push_back(std::move(ws));
    }
    r.request_id = compute_request_id(r);
    return r;
}

// ---------------------------------------------------------------------------
// Transports

enum class Method { Predict, Healthcheck };

class Transport {
public:
    virtual ~Transport() = default;
    virtual std::string describe() const = 0;
    /// Returns the raw response body. Connection-level failures throw
    /// TransportError; anything else is left to the caller's parser.
    virtual std::string call(Method method, const std::string& body, std::chrono::milliseconds timeout) = 0;
};

/// POST /v1/predict and GET /v1/healthcheck over plain HTTP.
class HttpTransport : public Transport {
public:
    explicit HttpTransport(std::string url) : url_(std::move(url)) {
        constexpr std::string_view scheme = "http://";
        if (url_.rfind(scheme, 0) != 0) throw ConfigError("backend URL must start with http://: " + url_);
        const auto rest = url_.substr(scheme.size());
        const auto slash = rest.find('/');
        host_port_ = rest.substr(0, slash);
        prefix_ = slash == std::string::npos ? "" : rest.substr(slash);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        if (host_port_.empty()) throw ConfigError("backend URL has no host: " + url_);
    }

    std::string describe() const override { return url_; }

    std::string call(Method method, const std::string& body, std::chrono::milliseconds timeout) override {
        httplib::Client client("http://" + host_port_);
        client.set_connection_timeout(timeout);
        client.set_read_timeout(timeout);
        client.set_write_timeout(timeout);
        client.set_keep_alive(false);
        httplib::Result res = method == Method::Predict
                                  ? client.Post(prefix_ + "/v1/predict", body, "application/json")
                                  : client.Get(prefix_ + "/v1/healthcheck");
        if (!res) throw TransportError(url_ + ": " + httplib::to_string(res.error()));
        if (res->status >= 500) throw TransportError(url_ + ": HTTP " + std::to_string(res->status));
        if (res->status != 200) {
            if (!res->body.empty()) return res->body;
            throw ProtocolError(url_ + ": HTTP " + std::to_string(res->status));
        }
        return res->body;
    }

private:
    std::string url_;
    std::string host_port_;
    std::string prefix_;
};

/// NDJSON over the stdin/stdout of child processes: one request line in,
/// one response line out. Each child serves one call at a time; up to
/// `pool_size` children run concurrently. A child that fails is discarded.
class SubprocessTransport : public Transport {
public:
    explicit SubprocessTransport(std::string command, std::size_t pool_size = 1)
        : command_(std::move(command)), slots_(std::max<std::size_t>(1, pool_size)) {}

    std::string describe() const override { return "exec:" + command_; }

    std::string call(Method method, const std::string& body, std::chrono::milliseconds timeout) override {
        const std::size_t slot = acquire();
        struct Release {
            SubprocessTransport* self;
            std::size_t slot;
            ~Release() { self->release(slot); }
        } guard{this, slot};
        auto& child = slots_[slot];
        try {
            if (!child) child = std::make_unique<detail::Subprocess>(command_);
            child->write_all((method == Method::Predict ? body : healthcheck_message()) + "\n", timeout);
            auto line = child->read_line(timeout);
            if (!line) throw TransportError(describe() + ": backend closed its output or timed out");
            return *line;
        } catch (const TransportError&) {
            child.reset();
            throw;
        } catch (const Error& e) {
            child.reset();
            throw TransportError(describe() + ": " + e.what());
        }
    }

private:
    std::size_t acquire() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return busy_.size() < slots_.size(); });
        for (std::size_t i = 0; i < slots_.size(); ++i) {
            if (!busy_.count(i)) {
                busy_.insert(i);
                return i;
            }
        }
        return 0;
    }

    void release(std::size_t slot) {
        {
            std::lock_guard lock(mutex_);
            busy_.erase(slot);
        }
        cv_.notify_one();
    }

    std::string command_;
    std::vector<std::unique_ptr<detail::Subprocess>> slots_;
    std::set<std::size_t> busy_;
    std::mutex mutex_;
    std::condition_variable cv_;
};

/// Calls a function in the same process; used by tests and the mock backend.
class InProcessTransport : public Transport {
public:
    using Handler = std::function<std::string(Method, const std::string&)>;

    explicit InProcessTransport(Handler handler, std::string name = "in-process")
        : handler_(std::move(handler)), name_(std::move(name)) {}

    std::string describe() const override { return name_; }

    std::string call(Method method, const std::string& body, std::chrono::milliseconds) override {
        return handler_(method, body);
    }

private:
    Handler handler_;
    std::string name_;
};

// ---------------------------------------------------------------------------
// Mock backend

/// Deterministic reference backend. A token whose text exactly matches a
/// gazetteer entry of a model-tier label is tagged with that label; a run
/// of tokens with the same label forms one chunk (B- then I-). All other
/// tokens are O.
class MockBackend {
public:
    static constexpr std::string_view kModelId = "mock-gazetteer-1";
    static constexpr std::size_t kMaxBatch = 64;

    explicit MockBackend(const LabelSet& labels) : model_labels_(labels.model_labels()) {
        for (const auto& [label, words] : gazetteer()) {
            if (!labels.is_model_label(label)) continue;
            for (const auto& w : words) lookup_.emplace(w, label);
        }
    }

    static const std::map<std::string, std::vector<std::string>>& gazetteer() {
        static const std::map<std::string, std::vector<std::string>> g{
            {"PATIENT", {"Linda", "Martinez", "John", "Smith", "Maria", "Garcia", "Hans", "Müller", "Ayşe", "Yılmaz"}},
            {"DOCTOR", {"Michael", "Brown", "Chen", "Patel"}},
            {"HOSPITAL", {"Mercy", "Riverside"}},
            {"CITY", {"Boston", "Chicago", "Berlin", "Istanbul"}},
            {"STATE", {"Massachusetts", "Ohio"}},
            {"COUNTRY", {"Germany", "Turkey"}},
            {"PROFESSION", {"architect", "nurse", "teacher", "engineer"}},
            {"ORGANIZATION", {"Acme"}},
        };
        return g;
    }

    TagSequence tag(const std::vector<Token>& tokens) const {
        TagSequence tags;
        std::string prev;
        for (const auto& t : tokens) {
            auto it = lookup_.find(t.text);
            if (it == lookup_.end()) {
                tags.push_back("O");
                prev.clear();
            } else {
                tags.push_back((prev == it->second ? "I-" : "B-") + it->second);
                prev = it->second;
            }
        }
        return tags;
    }

    std::string handle(Method method, const std::string& body) const {
        if (method == Method::Healthcheck) {
            auto labels = model_labels_;
            std::sort(labels.begin(), labels.end());
            return to_json(BackendInfo{std::string(kModelId), label_set_hash(labels), labels, kMaxBatch}).dump();
        }
        PredictRequest req;
        try {
            nlohmann::json j = nlohmann::json::parse(body);
            if (j.is_object() && j.value("proto_version", 0) != kProtoVersion) {
                return error_message("unsupported_version", "unsupported version");
            }
            req = parse_request(body);
        } catch (const nlohmann::json::exception& e) {
            return error_message("bad_request", e.what());
        } catch (const ProtocolError& e) {
            return error_message("bad_request", e.what());
        }
        PredictResponse resp{req.request_id, std::string(kModelId), 0.0, {}};
        for (const auto& s : req.sentences) resp.sentences.push_back(tag(s.tokens));
        return serialize(resp);
    }

private:
    std::vector<std::string> model_labels_;
    std::map<std::string, std::string> lookup_;
};

inline std::unique_ptr<Transport> make_mock_transport(const LabelSet& labels) {
    auto backend = std::make_shared<MockBackend>(labels);
    return std::make_unique<InProcessTransport>(
        [backend](Method m, const std::string& body) { return backend->handle(m, body); }, "mock");
}

// ---------------------------------------------------------------------------
// Client

struct ClientOptions {
    std::chrono::milliseconds timeout{10000};
    int retries = 2;
    std::chrono::milliseconds backoff{100};
    std::size_t max_in_flight = 4;
};

class BackendClient {
public:
    BackendClient(std::unique_ptr<Transport> transport, LabelSet labels, ClientOptions options = {})
        : transport_(std::move(transport)), labels_(std::move(labels)), options_(options) {
        if (!transport_) throw ConfigError("backend client needs a transport");
    }

    const Transport& transport() const noexcept { return *transport_; }
    const ClientOptions& options() const noexcept { return options_; }

    /// Sends `req`, retrying transport failures with exponential backoff,
    /// and validates the reply against the request and the model tier.
    PredictResponse predict(const PredictRequest& req) {
        const std::string body = serialize(req);
        const std::string raw = call_with_retries(Method::Predict, body);
        PredictResponse resp = parse_response(raw);
        validate(req, resp);
        return resp;
    }

    /// Fails with LabelSetMismatchError unless the backend's label set hash
    /// equals the engine's.
    BackendInfo healthcheck() {
        BackendInfo info = parse_healthcheck(call_with_retries(Method::Healthcheck, healthcheck_message()));
        const std::string expected = label_set_hash(labels_);
        if (info.label_set_hash != expected) {
            const std::set<std::string> ours(labels_.model_labels().begin(), labels_.model_labels().end());
            const std::set<std::string> theirs(info.labels.begin(), info.labels.end());
            std::vector<std::string> extra;
            std::vector<std::string> missing;
            std::set_difference(theirs.begin(), theirs.end(), ours.begin(), ours.end(), std::back_inserter(extra));
            std::set_difference(ours.begin(), ours.end(), theirs.begin(), theirs.end(), std::back_inserter(missing));
            throw LabelSetMismatchError(extra, missing);
        }
        return info;
    }

private:
    std::string call_with_retries(Method method, const std::string& body) {
        InFlight guard(*this);
        std::chrono::milliseconds delay = options_.backoff;
        for (int attempt = 0;; ++attempt) {
            try {
                return transport_->call(method, body, options_.timeout);
            } catch (const TransportError& e) {
                if (attempt >= options_.retries) {
                    throw BackendUnavailableError(transport_->describe() + " unavailable after " +
                                                  std::to_string(attempt + 1) + " attempt(s): " + e.what());
                }
            }
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
    }

    void validate(const PredictRequest& req, const PredictResponse& resp) const {
        if (!resp.request_id.empty() && resp.request_id != req.request_id) {
            throw ProtocolError("request_id mismatch: sent " + req.request_id + ", got " + resp.request_id);
        }
        if (resp.sentences.size() != req.sentences.size()) {
            throw ProtocolError("expected " + std::to_string(req.sentences.size()) + " sentences, got " +
                                    std::to_string(resp.sentences.size()),
                                std::min(resp.sentences.size(), req.sentences.size()));
        }
        for (std::size_t i = 0; i < req.sentences.size(); ++i) {
            const auto& tags = resp.sentences[i];
            if (tags.size() != req.sentences[i].tokens.size()) {
                throw ProtocolError("expected " + std::to_string(req.sentences[i].tokens.size()) + " tags, got " +
                                        std::to_string(tags.size()),
                                    i);
            }
            for (const auto& t : tags) {
                const auto parsed = parse_tag(t);
                if (!parsed) throw ProtocolError("malformed tag '" + t + "'", i);
                if (parsed->prefix != 'O' && !labels_.is_model_label(parsed->label)) {
                    throw ProtocolError("unknown tag '" + t + "'", i);
                }
            }
        }
    }

    struct InFlight {
        BackendClient& c;
        explicit InFlight(BackendClient& client) : c(client) {
            std::unique_lock lock(c.mutex_);
            c.cv_.wait(lock, [&] { return c.in_flight_ < std::max<std::size_t>(1, c.options_.max_in_flight); });
            ++c.in_flight_;
        }
        ~InFlight() {
            {
                std::lock_guard lock(c.mutex_);
                --c.in_flight_;
            }
            c.cv_.notify_one();
        }
    };

    std::unique_ptr<Transport> transport_;
    LabelSet labels_;
    ClientOptions options_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::size_t in_flight_ = 0;
};

/// "http://host:port[/prefix]", "exec:<command>", "mock". Returns nullptr
/// for "none" (rule-only).
inline std::unique_ptr<Transport> make_transport(const std::string& endpoint, const LabelSet& labels,
                                                 std::size_t pool_size = 1) {
    if (endpoint.empty() || endpoint == "none") return nullptr;
    if (endpoint == "mock" || endpoint == "mock:") return make_mock_transport(labels);
    if (endpoint.rfind("exec:", 0) == 0) return std::make_unique<SubprocessTransport>(endpoint.substr(5), pool_size);
    if (endpoint.rfind("http://", 0) == 0) return std::make_unique<HttpTransport>(endpoint);
    throw ConfigError("unsupported backend endpoint '" + endpoint + "' (use http://, exec: or mock)");
}

/// Tags from a response turned into document-offset spans, repaired
/// leniently.
inline std::vector<EntitySpan> response_spans(const std::vector<Sentence>& sentences, const PredictResponse& resp,
                                              const LabelSet& labels) {
    std::vector<EntitySpan> out;
    for (std::size_t i = 0; i < sentences.size() && i < resp.sentences.size(); ++i) {
        auto spans = bio_to_spans(sentences[i], resp.sentences[i], Repair::Relaxed, labels, Source::Model);
        out.insert(out.end(), spans.begin(), spans.end());
    }
    return out;
}

}  // namespace deid

#endif  // DEID_BACKEND_CLIENT_HPP
