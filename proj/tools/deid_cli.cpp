#include "deid/deid.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <unicode/normalizer2.h>
#include <unicode/unistr.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace deid;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitLeak = 2;

// ---------------------------------------------------------------------------
// Logging: one logfmt line per event on stderr.

std::mutex log_mutex;

std::string logfmt_value(const std::string& v) {
    const bool plain = !v.empty() && v.find_first_of(" \"=\t\n") == std::string::npos;
    if (plain) return v;
    return nlohmann::json(v).dump();
}

void log(const std::string& level, const std::string& event,
         std::initializer_list<std::pair<std::string, std::string>> fields = {}) {
    std::string line = "level=" + level + " event=" + event;
    for (const auto& [k, v] : fields) line += " " + k + "=" + logfmt_value(v);
    std::lock_guard lock(log_mutex);
    std::cerr << line << "\n";
}

// ---------------------------------------------------------------------------
// I/O helpers

std::string read_input(const std::string& path) {
    if (path.empty() || path == "-") {
        return std::string(std::istreambuf_iterator<char>(std::cin), std::istreambuf_iterator<char>());
    }
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOError("cannot open " + path);
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_output(const std::string& path, const std::string& data) {
    if (path.empty() || path == "-") {
        std::cout << data;
        std::cout.flush();
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOError("cannot write " + path);
    out << data;
    if (!out) throw IOError("write failed: " + path);
}

std::string nfc(const std::string& text) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
    if (U_FAILURE(status)) throw Error(std::string("NFC normalizer unavailable: ") + u_errorName(status));
    const icu::UnicodeString normalized = normalizer->normalize(icu::UnicodeString::fromUTF8(text), status);
    if (U_FAILURE(status)) throw Error(std::string("NFC normalization failed: ") + u_errorName(status));
    std::string out;
    normalized.toUTF8String(out);
    return out;
}

Document ingest(const std::string& doc_id, const std::string& text, const std::string& language,
                const std::string& normalization) {
    if (!detail::is_valid_utf8(text)) throw FormatError("input is not valid UTF-8", 0);
    Document doc(doc_id, normalization == "NFC" ? nfc(text) : text, language);
    doc.set_normalization(normalization);
    return doc;
}

std::string stem_of(const std::string& path) {
    if (path.empty() || path == "-") return "stdin";
    return fs::path(path).stem().string();
}

/// Sniffs span-JSON by extension, CoNLL otherwise.
bool looks_like_json(const std::string& path) {
    const auto ext = fs::path(path).extension().string();
    return ext == ".json" || ext == ".jsonl";
}

std::vector<AnnotatedDocument> conll_as_documents(const ConllRecords& records) {
    std::vector<AnnotatedDocument> out;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const std::string rec_id = records[r].doc_id.value_or("doc" + std::to_string(r));
        for (std::size_t s = 0; s < records[r].sentences.size(); ++s) {
            const auto rendered = render_sentence(records[r].sentences[s]);
            AnnotatedDocument a{Document(rec_id + "#" + std::to_string(s), rendered.text), {}};
            a.spans = bio_to_spans(rendered.sentence, records[r].sentences[s].tags, Repair::Relaxed);
            out.push_back(std::move(a));
        }
    }
    return out;
}

std::vector<AnnotatedDocument> read_annotated(const std::string& path, const std::string& format,
                                              const std::string& language) {
    const std::string data = read_input(path);
    const bool json = format == "span-json" || (format == "auto" && looks_like_json(path));
    if (json) return read_span_json(data, language);
    return conll_as_documents(read_conll(data));
}

// ---------------------------------------------------------------------------
// Config: file (explicit or DEID_CONFIG) then flag overrides.

struct ConfigFlags {
    std::string config_path;
    std::optional<std::string> language;
    std::optional<std::string> label_set;
    std::vector<std::string> rule_files;
    bool no_default_rules = false;
    std::optional<std::string> endpoint;
    bool rule_only = false;
    std::optional<int> timeout_ms;
    std::optional<int> retries;
    std::optional<std::size_t> pool_size;
    std::optional<std::size_t> max_batch;
    std::optional<std::string> merge_policy;
    std::optional<std::string> mode;
    std::optional<std::string> mask_format;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> fake_table;
    std::optional<std::string> age_policy;
    std::optional<std::string> date_order;
    std::optional<std::string> normalization;
    std::optional<std::string> input_format;
    std::optional<std::string> output_format;
    std::optional<std::string> splitter;
};

void add_config_flags(CLI::App* app, ConfigFlags& f, bool engine) {
    app->add_option("--config", f.config_path, "Config file (default: $DEID_CONFIG)");
    app->add_option("--language", f.language, "Language code");
    app->add_option("--label-set", f.label_set, "Label-set file or 'builtin'");
    if (!engine) return;
    app->add_option("--rules", f.rule_files, "Additional rule file (repeatable)");
    app->add_flag("--no-default-rules", f.no_default_rules, "Disable the built-in rule patterns");
    app->add_option("--endpoint", f.endpoint, "Backend: http://host:port[/prefix], exec:<cmd>, mock, none");
    app->add_flag("--rule-only", f.rule_only, "Rule tier only; no backend");
    app->add_option("--timeout-ms", f.timeout_ms, "Backend timeout");
    app->add_option("--retries", f.retries, "Backend retries");
    app->add_option("--pool-size", f.pool_size, "Subprocess backend pool size");
    app->add_option("--max-batch", f.max_batch, "Sentences per predict request");
    app->add_option("--merge-policy", f.merge_policy, "RULE_PRIORITY, MODEL_PRIORITY or LONGEST");
    app->add_option("--mode", f.mode, "mask or obfuscate");
    app->add_option("--mask-format", f.mask_format, "Mask replacement, {label} substituted");
    app->add_option("--seed", f.seed, "Seed for obfuscation");
    app->add_option("--fake-table", f.fake_table, "Fake-chunk table file");
    app->add_option("--age-over-89-policy", f.age_policy, "none or aggregate");
    app->add_option("--date-order", f.date_order, "MDY or DMY");
    app->add_option("--normalization", f.normalization, "NFC or none");
    app->add_option("--input-format", f.input_format, "text, span-json or conll");
    app->add_option("--output-format", f.output_format, "text, span-json or conll");
    app->add_option("--splitter", f.splitter, "External sentence splitter command");
}

EngineConfig resolve_config(const ConfigFlags& f) {
    EngineConfig c;
    std::string path = f.config_path;
    if (path.empty()) path = config_path_from_env().value_or("");
    if (!path.empty()) {
        c = EngineConfig::load(path);
        log("info", "config_loaded", {{"path", path}});
    }
    nlohmann::json o = nlohmann::json::object();
    if (f.language) o["language"] = *f.language;
    if (f.label_set) o["label_set"] = *f.label_set;
    if (f.merge_policy) o["merge_policy"] = *f.merge_policy;
    if (f.mode) o["mode"] = *f.mode;
    if (f.mask_format) o["mask_format"] = *f.mask_format;
    if (f.seed) o["seed"] = *f.seed;
    if (f.fake_table) o["fake_table"] = *f.fake_table;
    if (f.age_policy) o["age_over_89_policy"] = *f.age_policy;
    if (f.date_order) o["date_order"] = *f.date_order;
    if (f.normalization) o["normalization"] = *f.normalization;
    if (f.input_format) o["io"]["input"] = *f.input_format;
    if (f.output_format) o["io"]["output"] = *f.output_format;
    if (f.splitter) o["splitter"]["command"] = *f.splitter;
    if (f.endpoint) o["backend"]["endpoint"] = *f.endpoint;
    if (f.rule_only) o["backend"]["rule_only"] = true;
    if (f.timeout_ms) o["backend"]["timeout_ms"] = *f.timeout_ms;
    if (f.retries) o["backend"]["retries"] = *f.retries;
    if (f.pool_size) o["backend"]["pool_size"] = *f.pool_size;
    if (f.max_batch) o["backend"]["max_batch"] = *f.max_batch;
    if (f.no_default_rules) o["rules"]["defaults"] = false;
    c.merge_json(o);
    c.rule_files.insert(c.rule_files.end(), f.rule_files.begin(), f.rule_files.end());
    return c;
}

std::unique_ptr<BackendClient> make_client(const EngineConfig& c, const LabelSet& labels) {
    if (c.rule_only) return nullptr;
    auto transport = make_transport(c.backend_endpoint, labels, c.pool_size);
    if (!transport) return nullptr;
    return std::make_unique<BackendClient>(std::move(transport), labels, c.client_options());
}

std::unique_ptr<SplitterPlugin> make_splitter(const EngineConfig& c) {
    if (!c.splitter_command.empty()) return std::make_unique<ExternalSplitter>(c.splitter_command);
    return std::make_unique<DefaultSplitter>(c.language);
}

// ---------------------------------------------------------------------------
// deid

struct DeidArgs {
    ConfigFlags cfg;
    std::vector<std::string> inputs;
    std::string out_dir;
    std::string audit_path;
    std::size_t jobs = 1;
    bool fail_fast = false;
};

struct DocOutcome {
    std::string output;
    nlohmann::ordered_json audit;
    std::size_t leaks = 0;
};

struct Engine {
    explicit Engine(EngineConfig c)
        : config(std::move(c)), labels(config.load_labels()), rules(config.load_rules(labels)) {}

    EngineConfig config;
    LabelSet labels;
    RuleSet rules;
    std::unique_ptr<BackendClient> client;
    std::optional<FakeChunkTable> table;
};

std::vector<AnnotatedDocument> load_deid_input(const std::string& path, const EngineConfig& c) {
    const std::string data = read_input(path);
    std::vector<AnnotatedDocument> docs;
    if (c.input_format == "span-json") {
        for (auto& a : read_span_json(data, c.language)) {
            Document doc = ingest(a.doc.doc_id(), a.doc.text(), c.language, "none");
            if (c.normalization == "NFC" && nfc(doc.text()) != doc.text()) {
                throw FormatError("span-JSON text of " + doc.doc_id() + " is not NFC; offsets would shift", 0);
            }
            doc.set_normalization(c.normalization);
            docs.push_back({std::move(doc), std::move(a.spans)});
        }
    } else if (c.input_format == "conll") {
        const auto records = read_conll(data);
        for (std::size_t r = 0; r < records.size(); ++r) {
            std::string text;
            for (const auto& s : records[r].sentences) {
                if (!text.empty()) text += "\n";
                text += render_sentence(s).text;
            }
            const std::string id = records[r].doc_id.value_or(stem_of(path) + "-" + std::to_string(r));
            docs.push_back({ingest(id, text, c.language, c.normalization), {}});
        }
    } else {
        docs.push_back({ingest(stem_of(path), data, c.language, c.normalization), {}});
    }
    return docs;
}

DocOutcome deidentify(const Engine& e, SplitterPlugin& splitter, const AnnotatedDocument& in) {
    const auto& c = e.config;
    DetectOptions opt;
    opt.merge.strategy = c.merge;
    opt.rule_only = c.rule_only;
    opt.max_batch = c.max_batch;
    auto spans = detect(in.doc, e.labels, e.rules, e.client.get(), splitter, opt);
    if (!in.spans.empty()) {
        spans.insert(spans.end(), in.spans.begin(), in.spans.end());
        spans = merge_spans(std::move(spans), opt.merge, e.labels);
    }

    DocOutcome out;
    std::string text;
    nlohmann::ordered_json audit;
    audit["doc_id"] = in.doc.doc_id();
    audit["normalization"] = in.doc.normalization();
    audit["mode"] = c.mode;
    if (c.mode == "obfuscate") {
        ObfuscateOptions oo;
        oo.age_over_89 = c.age_over_89;
        oo.prefer_dmy = c.prefer_dmy;
        auto r = obfuscate(in.doc, spans, *e.table, *c.seed, oo);
        text = std::move(r.text);
        audit["replacements"] = to_json(r.audit);
        audit["surrogates"] = r.surrogates.to_json();
    } else {
        auto r = mask(in.doc, spans, c.mask_format);
        text = std::move(r.text);
        audit["replacements"] = to_json(r.audit);
    }

    const auto chunks = span_chunks(in.doc, spans);
    const auto leaks = leak_check(text, chunks);
    nlohmann::ordered_json leak_json = nlohmann::ordered_json::array();
    for (const auto& l : leaks) {
        leak_json.push_back({{"label", spans[l.chunk_index].label}, {"start", l.start}, {"end", l.end}});
    }
    audit["leaks"] = std::move(leak_json);
    out.leaks = leaks.size();
    out.audit = std::move(audit);

    if (c.output_format == "span-json") {
        out.output = to_span_json(AnnotatedDocument{in.doc, spans}).dump(2) + "\n";
    } else if (c.output_format == "conll") {
        out.output = write_conll(to_conll({AnnotatedDocument{in.doc, spans}}, {split_sentences(in.doc, splitter)}));
    } else {
        out.output = std::move(text);
    }
    return out;
}

std::string output_extension(const std::string& format) {
    if (format == "span-json") return ".deid.json";
    if (format == "conll") return ".deid.conll";
    return ".deid.txt";
}

int cmd_deid(const DeidArgs& a) {
    auto config = resolve_config(a.cfg);
    config.validate();
    Engine e(std::move(config));
    e.client = make_client(e.config, e.labels);
    if (e.config.mode == "obfuscate") e.table = FakeChunkTable::load(e.config.fake_table);
    log("info", "deid_start", {{"mode", e.config.mode},
                               {"endpoint", e.config.rule_only ? "rule-only" : e.config.backend_endpoint},
                               {"merge_policy", std::string(to_string(e.config.merge))}});

    std::vector<std::string> inputs = a.inputs;
    if (inputs.empty()) inputs.push_back("-");

    struct FileResult {
        std::vector<DocOutcome> docs;
        std::string error;
        bool skipped = false;
    };
    std::vector<FileResult> results(inputs.size());
    std::atomic<bool> stop{false};
    detail::parallel_for(inputs.size(), a.jobs, [&](std::size_t i) {
        if (stop.load()) {
            results[i].skipped = true;
            return;
        }
        try {
            auto splitter = make_splitter(e.config);
            for (const auto& doc : load_deid_input(inputs[i], e.config)) {
                results[i].docs.push_back(deidentify(e, *splitter, doc));
            }
        } catch (const std::exception& ex) {
            results[i].error = ex.what();
            if (a.fail_fast) stop = true;
        }
    });

    bool any_error = false;
    bool any_leak = false;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const auto& r = results[i];
        const std::string& path = inputs[i];
        if (r.skipped) {
            log("warn", "skipped", {{"file", path}});
            continue;
        }
        if (!r.error.empty()) {
            any_error = true;
            log("error", "file_failed", {{"file", path}, {"error", r.error}});
            continue;
        }
        std::size_t leaks = 0;
        std::string output;
        nlohmann::ordered_json audit = nlohmann::ordered_json::array();
        for (const auto& d : r.docs) {
            leaks += d.leaks;
            output += d.output;
            audit.push_back(d.audit);
        }
        try {
            const bool to_stdout = path == "-" && a.out_dir.empty();
            const fs::path dir = a.out_dir.empty() ? fs::path(path).parent_path() : fs::path(a.out_dir);
            if (!a.out_dir.empty()) fs::create_directories(dir);
            const std::string base = (dir / stem_of(path)).string();
            if (leaks > 0) {
                any_leak = true;
                log("error", "leak_detected", {{"file", path}, {"leaks", std::to_string(leaks)}});
            } else {
                write_output(to_stdout ? "-" : base + output_extension(e.config.output_format), output);
            }
            std::string audit_path = a.audit_path;
            if (audit_path.empty() && !to_stdout) audit_path = base + ".audit.json";
            if (!audit_path.empty()) write_output(audit_path, audit.dump(2) + "\n");
            log("info", "file_done", {{"file", path}, {"documents", std::to_string(r.docs.size())},
                                      {"leaks", std::to_string(leaks)}});
        } catch (const std::exception& ex) {
            any_error = true;
            log("error", "file_failed", {{"file", path}, {"error", ex.what()}});
        }
    }
    if (any_leak) return kExitLeak;
    return any_error ? kExitError : kExitOk;
}

// ---------------------------------------------------------------------------
// eval

struct EvalArgs {
    std::string gold;
    std::string pred;
    std::string mode = "chunk";
    std::string format = "auto";
    std::string report;
    bool lenient = false;
    bool aggregate_only = false;
    ConfigFlags cfg;
};

/// "label,f1" rows (header optional); blank and dash cells are skipped.
int aggregate_csv(const std::string& path) {
    std::istringstream in(read_input(path));
    std::map<std::string, double> f1;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.rfind(',');
        if (comma == std::string::npos) throw FormatError("expected label,f1", lineno);
        const std::string label = line.substr(0, comma);
        const std::string value = line.substr(comma + 1);
        if (value == "-" || value.empty()) continue;
        try {
            std::size_t used = 0;
            const double v = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
            f1[label] = v;
        } catch (const std::exception&) {
            if (lineno == 1) continue;
            throw FormatError("bad F1 value '" + value + "'", lineno);
        }
    }
    if (f1.empty()) throw FormatError("no F1 values", lineno);
    const double macro = aggregate_macro(f1);
    std::cout << "labels " << f1.size() << "\nmacro_avg_f1 " << format_fixed(macro) << "\n";
    return kExitOk;
}

int cmd_eval(const EvalArgs& a) {
    if (a.aggregate_only) {
        try {
            return aggregate_csv(a.gold);
        } catch (const FormatError& e) {
            log("error", "format_error", {{"location", a.gold + ":" + std::to_string(e.line())}, {"error", e.what()}});
            return kExitError;
        }
    }
    if (a.pred.empty()) throw ConfigError("eval needs GOLD and PRED");
    std::string json_report;
    std::string table;
    const std::string* current = &a.gold;
    try {
        if (a.mode == "token") {
            const auto gold = read_conll(read_input(a.gold));
            current = &a.pred;
            const auto pred = read_conll(read_input(a.pred));
            const auto r = evaluate_tokens(gold, pred);
            table = to_table(r);
            json_report = to_json(r).dump(2) + "\n";
        } else if (a.mode == "chunk") {
            const std::string language = a.cfg.language.value_or("en");
            const auto gold = read_annotated(a.gold, a.format, language);
            current = &a.pred;
            const auto pred = read_annotated(a.pred, a.format, language);
            std::optional<LabelSet> labels;
            if (a.cfg.label_set || a.cfg.language) labels = resolve_config(a.cfg).load_labels();
            const auto r = evaluate_chunks(gold, pred, labels ? &*labels : nullptr,
                                           a.lenient ? MatchMode::Lenient : MatchMode::Strict);
            for (const auto& w : r.warnings) log("warn", "eval_warning", {{"detail", w}});
            table = to_table(r);
            json_report = to_json(r).dump(2) + "\n";
        } else {
            throw ConfigError("eval mode must be chunk or token");
        }
    } catch (const FormatError& e) {
        log("error", "format_error", {{"location", *current + ":" + std::to_string(e.line())}, {"error", e.what()}});
        return kExitError;
    }
    std::cout << table;
    if (!a.report.empty()) write_output(a.report, json_report);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// augment

struct AugmentArgs {
    std::string corpus;
    std::string output;
    std::string translator = "identity";
    std::string targets = "preset";
    std::optional<std::string> fake_table;
    std::uint64_t seed = 0;
    std::size_t jobs = 1;
    ConfigFlags cfg;
};

std::unique_ptr<TranslatorPlugin> make_translator(const std::string& spec) {
    if (spec == "identity") return std::make_unique<IdentityTranslator>();
    if (spec.rfind("dictionary:", 0) == 0) {
        const auto j = nlohmann::json::parse(read_input(spec.substr(11)));
        return std::make_unique<DictionaryTranslator>(j.get<std::map<std::string, std::string>>());
    }
    if (spec.rfind("external:", 0) == 0) return std::make_unique<ExternalTranslator>(spec.substr(9));
    if (spec.rfind("external-batch:", 0) == 0) return std::make_unique<ExternalTranslator>(spec.substr(15), true);
    throw ConfigError("translator must be identity, dictionary:<file>, external:<cmd> or external-batch:<cmd>");
}

int cmd_augment(const AugmentArgs& a) {
    const auto config = resolve_config(a.cfg);
    const auto labels = config.load_labels();
    const std::string table_path = a.fake_table.value_or(config.fake_table);
    if (table_path.empty()) throw ConfigError("augment needs --fake-table");
    const auto table = FakeChunkTable::load(table_path);
    std::set<std::string> targets;
    if (a.targets == "preset") {
        targets = augmentation_preset(labels);
    } else {
        std::istringstream in(a.targets);
        for (std::string t; std::getline(in, t, ',');) {
            if (!t.empty()) targets.insert(t);
        }
    }
    const auto corpus = read_conll(read_input(a.corpus));
    auto translator = make_translator(a.translator);
    const auto out = augment(corpus, targets, *translator, table, AugmentOptions{a.seed, a.jobs});
    std::size_t sentences = 0;
    for (const auto& r : out) sentences += r.sentences.size();
    log("info", "augment_done", {{"translator", translator->name()}, {"sentences", std::to_string(sentences)}});
    write_output(a.output, write_conll(out));
    return kExitOk;
}

// ---------------------------------------------------------------------------
// parse-llm

struct ParseLlmArgs {
    std::string original;
    std::string marked;
    std::string output;
    std::string diagnostics;
    std::string doc_id;
    ConfigFlags cfg;
};

int cmd_parse_llm(const ParseLlmArgs& a) {
    const auto config = resolve_config(a.cfg);
    const auto labels = config.load_labels();
    std::vector<std::pair<Document, std::string>> work;
    if (looks_like_json(a.original)) {
        // Span-JSON originals pair with <dir>/<doc_id>.marked.txt.
        for (const auto& d : read_span_json(read_input(a.original), config.language)) {
            work.emplace_back(d.doc, read_input((fs::path(a.marked) / (d.doc.doc_id() + ".marked.txt")).string()));
        }
    } else {
        const std::string id = a.doc_id.empty() ? stem_of(a.original) : a.doc_id;
        work.emplace_back(Document(id, read_input(a.original), config.language), read_input(a.marked));
    }
    std::vector<AnnotatedDocument> docs;
    nlohmann::ordered_json diags = nlohmann::ordered_json::array();
    for (const auto& [doc, marked] : work) {
        auto parsed = parse_markup(doc, marked, labels);
        nlohmann::ordered_json d;
        d["doc_id"] = doc.doc_id();
        const auto diag = diagnostics_to_json(parsed);
        for (const auto& [k, v] : diag.items()) d[k] = v;
        diags.push_back(std::move(d));
        log("info", "parsed", {{"doc_id", doc.doc_id()}, {"spans", std::to_string(parsed.spans.size())},
                               {"diagnostics", std::to_string(parsed.diagnostics.size())}});
        docs.push_back({doc, std::move(parsed.spans)});
    }
    write_output(a.output, write_span_json(docs));
    if (!a.diagnostics.empty()) write_output(a.diagnostics, diags.dump(2) + "\n");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// prompt, tokenize, healthcheck

int cmd_prompt(const std::string& note, const ConfigFlags& cfg) {
    const auto config = resolve_config(cfg);
    const auto labels = config.load_labels();
    std::cout << build_prompt(Document(stem_of(note), read_input(note), config.language), labels);
    return kExitOk;
}

int cmd_tokenize(const std::string& input, const std::optional<std::string>& text, bool sentences,
                 const ConfigFlags& cfg) {
    const auto config = resolve_config(cfg);
    const std::string raw = text ? *text : read_input(input);
    const Document doc = ingest(stem_of(input), raw, config.language, config.normalization);
    const auto token_json = [](const Sentence& s) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& t : s.tokens) arr.push_back({{"text", t.text}, {"start", t.start}, {"end", t.end}});
        return arr;
    };
    nlohmann::ordered_json out;
    if (sentences) {
        auto splitter = make_splitter(config);
        out = nlohmann::ordered_json::array();
        for (const auto& s : split_sentences(doc, *splitter)) {
            out.push_back({{"start", s.start}, {"end", s.end}, {"tokens", token_json(s)}});
        }
    } else {
        out = token_json(as_single_sentence(doc));
    }
    std::cout << out.dump(2) << "\n";
    return kExitOk;
}

int cmd_healthcheck(const ConfigFlags& cfg) {
    const auto config = resolve_config(cfg);
    const auto labels = config.load_labels();
    auto transport = make_transport(config.backend_endpoint, labels, config.pool_size);
    if (!transport) throw ConfigError("healthcheck needs a backend endpoint");
    BackendClient client(std::move(transport), labels, config.client_options());
    std::cout << to_json(client.healthcheck()).dump(2) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Clinical text de-identification engine"};
    app.require_subcommand(1);

    DeidArgs deid_args;
    auto* deid_cmd = app.add_subcommand("deid", "Detect and mask or obfuscate PHI");
    add_config_flags(deid_cmd, deid_args.cfg, true);
    deid_cmd->add_option("inputs", deid_args.inputs, "Input files ('-' or none for stdin)");
    deid_cmd->add_option("-o,--out-dir", deid_args.out_dir, "Output directory (default: next to input)");
    deid_cmd->add_option("--audit", deid_args.audit_path, "Audit path for a single input");
    deid_cmd->add_option("-j,--jobs", deid_args.jobs, "Worker threads")->check(CLI::PositiveNumber);
    deid_cmd->add_flag("--fail-fast", deid_args.fail_fast, "Stop at the first failing file");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Score predictions against gold");
    add_config_flags(eval_cmd, eval_args.cfg, false);
    eval_cmd->add_option("gold", eval_args.gold, "Gold file (or per-label F1 CSV with --aggregate-only)")->required();
    eval_cmd->add_option("pred", eval_args.pred, "Prediction file");
    eval_cmd->add_option("--mode", eval_args.mode, "chunk or token");
    eval_cmd->add_option("--format", eval_args.format, "auto, span-json or conll");
    eval_cmd->add_option("--report", eval_args.report, "JSON report path");
    eval_cmd->add_flag("--lenient", eval_args.lenient, "Credit same-label overlaps (diagnostic)");
    eval_cmd->add_flag("--aggregate-only", eval_args.aggregate_only, "Macro average of a label,f1 CSV");

    AugmentArgs aug_args;
    auto* aug_cmd = app.add_subcommand("augment", "Synthesize sentences from a CoNLL corpus");
    add_config_flags(aug_cmd, aug_args.cfg, false);
    aug_cmd->add_option("corpus", aug_args.corpus, "CoNLL corpus")->required();
    aug_cmd->add_option("-o,--output", aug_args.output, "Output CoNLL (default stdout)");
    aug_cmd->add_option("--translator", aug_args.translator,
                        "identity, dictionary:<file>, external:<cmd>, external-batch:<cmd>");
    aug_cmd->add_option("--targets", aug_args.targets, "'preset' or comma-separated labels");
    aug_cmd->add_option("--fake-table", aug_args.fake_table, "Fake-chunk table file");
    aug_cmd->add_option("--seed", aug_args.seed, "Seed");
    aug_cmd->add_option("-j,--jobs", aug_args.jobs, "Worker threads")->check(CLI::PositiveNumber);

    ParseLlmArgs llm_args;
    auto* llm_cmd = app.add_subcommand("parse-llm", "Parse BEGINER_/ENDNER markup into span-JSON");
    add_config_flags(llm_cmd, llm_args.cfg, false);
    llm_cmd->add_option("original", llm_args.original, "Original note, or span-JSON documents")->required();
    llm_cmd->add_option("marked", llm_args.marked, "Marked response, or directory of <doc_id>.marked.txt")
        ->required();
    llm_cmd->add_option("-o,--output", llm_args.output, "Span-JSON output (default stdout)");
    llm_cmd->add_option("--diagnostics", llm_args.diagnostics, "Diagnostics JSON path");
    llm_cmd->add_option("--doc-id", llm_args.doc_id, "Document id (default: original file stem)");

    std::string prompt_note;
    ConfigFlags prompt_cfg;
    auto* prompt_cmd = app.add_subcommand("prompt", "Print the annotation prompt for a note");
    add_config_flags(prompt_cmd, prompt_cfg, false);
    prompt_cmd->add_option("note", prompt_note, "Note file ('-' for stdin)")->required();

    std::string tok_input = "-";
    std::optional<std::string> tok_text;
    bool tok_sentences = false;
    ConfigFlags tok_cfg;
    auto* tok_cmd = app.add_subcommand("tokenize", "Print tokens with code-point offsets as JSON");
    add_config_flags(tok_cmd, tok_cfg, false);
    tok_cmd->add_option("input", tok_input, "Text file ('-' for stdin)");
    tok_cmd->add_option("--text", tok_text, "Literal text instead of a file");
    tok_cmd->add_flag("--sentences", tok_sentences, "Group tokens by sentence");
    tok_cmd->add_option("--normalization", tok_cfg.normalization, "NFC or none");

    ConfigFlags hc_cfg;
    auto* hc_cmd = app.add_subcommand("healthcheck", "Query the backend and verify its label set");
    add_config_flags(hc_cmd, hc_cfg, false);
    hc_cmd->add_option("--endpoint", hc_cfg.endpoint, "Backend endpoint");
    hc_cmd->add_option("--timeout-ms", hc_cfg.timeout_ms, "Backend timeout");
    hc_cmd->add_option("--retries", hc_cfg.retries, "Backend retries");

    CLI11_PARSE(app, argc, argv);

    try {
        if (deid_cmd->parsed()) return cmd_deid(deid_args);
        if (eval_cmd->parsed()) return cmd_eval(eval_args);
        if (aug_cmd->parsed()) return cmd_augment(aug_args);
        if (llm_cmd->parsed()) return cmd_parse_llm(llm_args);
        if (prompt_cmd->parsed()) return cmd_prompt(prompt_note, prompt_cfg);
        if (tok_cmd->parsed()) return cmd_tokenize(tok_input, tok_text, tok_sentences, tok_cfg);
        if (hc_cmd->parsed()) return cmd_healthcheck(hc_cfg);
    } catch (const std::exception& e) {
        log("error", "failed", {{"error", e.what()}});
        return kExitError;
    }
    return kExitError;
}
