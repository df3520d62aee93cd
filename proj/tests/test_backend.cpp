#include "deid/backend_client.hpp"

#include "test_util.hpp"

#include <gtest/gtest.h>

#include <atomic>

using namespace deid;
using namespace std::chrono_literals;

namespace {

const LabelSet& en() {
    static const LabelSet ls = LabelSet::builtin("en");
    return ls;
}

std::string line(const std::string& s) { return s + "\n"; }

Document golden_doc() {
    return Document("note-7",
                    "Mrs. Linda Martinez, a 45 year-old architect from Boston. Seen by Dr. Chen at Mercy Hospital on "
                    "03/29/2089. Ayşe Yılmaz moved from Istanbul to Berlin.");
}

PredictRequest golden_request() {
    const auto doc = golden_doc();
    return make_request(doc, split_sentences(doc));
}

std::string backend_script(const std::string& args = "") {
    return "python3 " + testutil::test_path("oracles/ndjson_backend.py") + (args.empty() ? "" : " " + args);
}

ClientOptions fast() {
    ClientOptions o;
    o.timeout = 5000ms;
    o.backoff = 1ms;
    return o;
}

}  // namespace

TEST(Protocol, RequestMatchesGolden) {
    const auto req = golden_request();
    ASSERT_EQ(req.sentences.size(), 3u);
    EXPECT_EQ(line(serialize(req)), testutil::read_golden("predict_request.json"));
    EXPECT_EQ(parse_request(testutil::read_golden("predict_request.json")), req);
    EXPECT_EQ(compute_request_id(req), req.request_id);
    EXPECT_EQ(req.request_id.size(), 32u);
}

TEST(Protocol, MockAnswersGoldensByteExactly) {
    const MockBackend mock(en());
    EXPECT_EQ(line(mock.handle(Method::Predict, testutil::read_golden("predict_request.json"))),
              testutil::read_golden("predict_response.json"));
    EXPECT_EQ(line(mock.handle(Method::Healthcheck, testutil::read_golden("healthcheck_request.json"))),
              testutil::read_golden("healthcheck_response.json"));
    EXPECT_EQ(line(healthcheck_message()), testutil::read_golden("healthcheck_request.json"));
    EXPECT_EQ(line(mock.handle(Method::Predict, R"({"proto_version":2,"sentences":[]})")),
              testutil::read_golden("error_unsupported_version.json"));
}

TEST(Protocol, ResponseRoundTripsByteExactly) {
    const auto golden = testutil::read_golden("predict_response.json");
    const auto resp = parse_response(golden);
    EXPECT_EQ(resp.model_id, "mock-gazetteer-1");
    EXPECT_EQ(line(serialize(resp)), golden);
    PredictResponse fractional{"id", "m", 12.5, {{"O"}}};
    EXPECT_EQ(parse_response(serialize(fractional)), fractional);
}

TEST(Protocol, LabelSetHash) {
    const auto health = nlohmann::json::parse(testutil::read_golden("healthcheck_response.json"));
    EXPECT_EQ(label_set_hash(en()), health.at("label_set_hash").get<std::string>());
    EXPECT_EQ(label_set_hash(std::vector<std::string>{"B", "A"}), label_set_hash(std::vector<std::string>{"A", "B"}));
    EXPECT_EQ(label_set_hash(std::vector<std::string>{"A", "B"}), detail::sha256_hex("A\nB"));
    EXPECT_EQ(detail::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_NE(label_set_hash(en()), label_set_hash(LabelSet::builtin("de")));
}

TEST(Protocol, RequestIdTracksContent) {
    auto a = golden_request();
    const auto doc = Document("note-8", golden_doc().text());
    const auto b = make_request(doc, split_sentences(doc));
    EXPECT_NE(a.request_id, b.request_id);
    EXPECT_EQ(make_request(golden_doc(), split_sentences(golden_doc())).request_id, a.request_id);
    a.request_id = "other";
    EXPECT_EQ(compute_request_id(a), golden_request().request_id);
}

TEST(Protocol, MalformedMessages) {
    EXPECT_THROW(parse_response("{"), ProtocolError);
    EXPECT_THROW(parse_response(R"({"model_id":"m","sentences":[]})"), ProtocolError);
    EXPECT_THROW(parse_response(R"({"proto_version":2,"model_id":"m","sentences":[]})"), ProtocolError);
    EXPECT_THROW(parse_response(R"({"proto_version":1,"model_id":"m"})"), ProtocolError);
    EXPECT_THROW(parse_response(testutil::read_golden("error_unsupported_version.json")), ProtocolError);
    try {
        parse_response(R"({"proto_version":1,"model_id":"m","sentences":[{"tags":["O"]},{"tags":3}]})");
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.sentence(), 1u);
    }
    EXPECT_THROW(parse_healthcheck(R"({"proto_version":1})"), ProtocolError);
    EXPECT_THROW(parse_request(R"({"proto_version":1,"doc_id":"x"})"), ProtocolError);
}

TEST(Client, ValidatesAgainstRequest) {
    const auto req = golden_request();
    const auto reply = [](auto edit) {
        return std::make_unique<InProcessTransport>([edit](Method, const std::string& body) {
            const MockBackend mock(en());
            auto resp = parse_response(mock.handle(Method::Predict, body));
            edit(resp);
            return serialize(resp);
        });
    };
    BackendClient ok(make_mock_transport(en()), en());
    EXPECT_EQ(ok.predict(req).sentences.size(), 3u);

    BackendClient short_tags(reply([](PredictResponse& r) { r.sentences[2].pop_back(); }), en());
    try {
        short_tags.predict(req);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.sentence(), 2u);
    }
    BackendClient unknown(reply([](PredictResponse& r) { r.sentences[1][0] = "B-SSN"; }), en());
    try {
        unknown.predict(req);
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.sentence(), 1u);
    }
    BackendClient missing(reply([](PredictResponse& r) { r.sentences.pop_back(); }), en());
    EXPECT_THROW(missing.predict(req), ProtocolError);
    BackendClient wrong_id(reply([](PredictResponse& r) { r.request_id = "x"; }), en());
    EXPECT_THROW(wrong_id.predict(req), ProtocolError);
    BackendClient malformed(reply([](PredictResponse& r) { r.sentences[0][0] = "X-Y"; }), en());
    EXPECT_THROW(malformed.predict(req), ProtocolError);
}

TEST(Client, RetriesTransportFailures) {
    auto failures = std::make_shared<std::atomic<int>>(2);
    auto calls = std::make_shared<std::atomic<int>>(0);
    auto flaky = [=](Method m, const std::string& body) {
        ++*calls;
        if ((*failures)-- > 0) throw TransportError("connection reset");
        return MockBackend(en()).handle(m, body);
    };
    BackendClient client(std::make_unique<InProcessTransport>(flaky), en(), fast());
    EXPECT_NO_THROW(client.predict(golden_request()));
    EXPECT_EQ(calls->load(), 3);
    *failures = 3;
    *calls = 0;
    EXPECT_THROW(client.predict(golden_request()), BackendUnavailableError);
    EXPECT_EQ(calls->load(), 3);
}

TEST(Client, HealthcheckDetectsLabelDrift) {
    BackendClient same(make_mock_transport(en()), en());
    const auto info = same.healthcheck();
    EXPECT_EQ(info.model_id, "mock-gazetteer-1");
    EXPECT_EQ(info.max_batch, 64u);
    BackendClient drift(make_mock_transport(LabelSet::builtin("de")), en());
    try {
        drift.healthcheck();
        FAIL();
    } catch (const LabelSetMismatchError& e) {
        EXPECT_TRUE(e.extra().empty());
        EXPECT_EQ(e.missing(), (std::vector<std::string>{"DEVICE", "LOCATION-OTHER", "MEDICAL RECORD", "STATE",
                                                         "USERNAME"}));
    }
}

TEST(Client, UnreachableHttpEndpoint) {
    ClientOptions o = fast();
    o.timeout = 500ms;
    o.retries = 1;
    BackendClient client(make_transport("http://127.0.0.1:9", en()), en(), o);
    EXPECT_THROW(client.healthcheck(), BackendUnavailableError);
    EXPECT_THROW(client.predict(golden_request()), BackendUnavailableError);
}

TEST(Client, HttpTransportAgainstLocalServer) {
    const MockBackend mock(en());
    httplib::Server server;
    std::atomic<int> predicts{0};
    server.Post("/api/v1/predict", [&](const httplib::Request& req, httplib::Response& res) {
        ++predicts;
        res.set_content(mock.handle(Method::Predict, req.body), "application/json");
    });
    server.Get("/api/v1/healthcheck", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(mock.handle(Method::Healthcheck, ""), "application/json");
    });
    server.Post("/down/v1/predict", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread thread([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);

    BackendClient client(make_transport(base + "/api/", en()), en(), fast());
    EXPECT_EQ(client.healthcheck().model_id, "mock-gazetteer-1");
    EXPECT_EQ(line(serialize(client.predict(golden_request()))), testutil::read_golden("predict_response.json"));
    BackendClient down(make_transport(base + "/down", en()), en(), fast());
    EXPECT_THROW(down.predict(golden_request()), BackendUnavailableError);
    server.stop();
    thread.join();
    EXPECT_EQ(predicts.load(), 1);
}

TEST(Client, SubprocessNdjson) {
    BackendClient client(make_transport("exec:" + backend_script(), en()), en(), fast());
    EXPECT_EQ(client.healthcheck().max_batch, 8u);
    const auto resp = client.predict(golden_request());
    EXPECT_EQ(resp.model_id, "ndjson-mock");
    const auto golden = parse_response(testutil::read_golden("predict_response.json"));
    EXPECT_EQ(resp.sentences, golden.sentences);

    BackendClient short_tags(make_transport("exec:" + backend_script("--short 1"), en()), en(), fast());
    try {
        short_tags.predict(golden_request());
        FAIL();
    } catch (const ProtocolError& e) {
        EXPECT_EQ(e.sentence(), 1u);
    }
}

TEST(Client, SubprocessRestartsAfterExit) {
    ClientOptions o = fast();
    o.retries = 1;
    // The child exits before its second reply; the retry spawns a fresh one.
    BackendClient client(make_transport("exec:" + backend_script("--exit-after 1"), en()), en(), o);
    EXPECT_NO_THROW(client.predict(golden_request()));
    EXPECT_NO_THROW(client.predict(golden_request()));
    o.retries = 0;
    BackendClient dead(make_transport("exec:exit 0", en()), en(), o);
    EXPECT_THROW(dead.healthcheck(), BackendUnavailableError);
}

TEST(Client, TransportSelection) {
    EXPECT_EQ(make_transport("none", en()), nullptr);
    EXPECT_EQ(make_transport("", en()), nullptr);
    EXPECT_EQ(make_transport("mock", en())->describe(), "mock");
    EXPECT_EQ(make_transport("exec:cat", en())->describe(), "exec:cat");
    EXPECT_THROW(make_transport("https://x", en()), ConfigError);
    EXPECT_THROW(make_transport("http://", en()), ConfigError);
    EXPECT_THROW(BackendClient(nullptr, en()), ConfigError);
}

TEST(Client, ConcurrentCallsRespectInFlightLimit) {
    auto active = std::make_shared<std::atomic<int>>(0);
    auto peak = std::make_shared<std::atomic<int>>(0);
    auto slow = [=](Method m, const std::string& body) {
        const int now = ++*active;
        int seen = peak->load();
        while (now > seen && !peak->compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(5ms);
        --*active;
        return MockBackend(en()).handle(m, body);
    };
    ClientOptions o = fast();
    o.max_in_flight = 2;
    BackendClient client(std::make_unique<InProcessTransport>(slow), en(), o);
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { client.predict(golden_request()); });
    for (auto& t : threads) t.join();
    EXPECT_LE(peak->load(), 2);
    EXPECT_GE(peak->load(), 1);
}
