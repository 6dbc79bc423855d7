// storywrangler: build n-gram stores from NDJSON and query them.

#include <CLI11.hpp>

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <span>
#include <sstream>

#include "storywrangler/api.hpp"
#include "storywrangler/error.hpp"
#include "storywrangler/ingest.hpp"
#include "storywrangler/store.hpp"
#include "storywrangler/tokenizer.hpp"
#include "storywrangler/zipf.hpp"

namespace sw = storywrangler;
namespace fs = std::filesystem;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kIo = 3 };

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string resolve_store(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("STORYWRANGLER_STORE"); env && *env) return env;
    throw CLI::ValidationError("--store", "a store root is required (flag or STORYWRANGLER_STORE)");
}

void write_output(const std::string& path, const std::string& body) {
    if (path == "-") {
        std::cout << body << std::flush;
        return;
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path);
    out << body;
    if (!out) throw IoError("short write to " + path);
}

int exit_for_status(int status) {
    if (status < 400) return kOk;
    if (status == 400) return kUsage;
    return kData;
}

int emit(const sw::ApiResponse& response, const std::string& out) {
    if (response.status >= 400) {
        std::cerr << "storywrangler: " << response.body;
        return exit_for_status(response.status);
    }
    write_output(out, response.body);
    return kOk;
}

// ---- build ------------------------------------------------------------------

struct BuildOptions {
    std::vector<std::string> inputs;
    std::string store;
    bool overwrite = false;
    int workers = 0;
    std::size_t truncate_at = sw::kDefaultTruncation;
    double confidence = sw::kDefaultConfidenceThreshold;
    std::string report = "-";
};

int run_build(const BuildOptions& o) {
    sw::IngestReport report;
    std::vector<sw::DayCounts> cells;
    nlohmann::ordered_json diagnostics = nlohmann::ordered_json::array();
    for (const auto& path : o.inputs) {
        const auto before = report.diagnostics.size();
        if (path == "-") {
            cells = sw::merge_counts(std::move(cells), sw::count_ndjson(std::cin, report, o.workers, o.confidence));
        } else {
            std::ifstream in(path, std::ios::binary);
            if (!in) throw IoError("cannot read input " + path);
            cells = sw::merge_counts(std::move(cells), sw::count_ndjson(in, report, o.workers, o.confidence));
            if (in.bad()) throw IoError("error reading input " + path);
        }
        for (auto i = before; i < report.diagnostics.size(); ++i) diagnostics.push_back(path + ": " + report.diagnostics[i]);
    }

    std::erase_if(cells, [](const sw::DayCounts& c) { return c.counts.empty(); });
    sw::Store store(resolve_store(o.store));
    if (!o.overwrite) {
        // refuse before writing anything
        for (const auto& c : cells) {
            if (store.has_day(c.bucket.date, c.bucket.language, c.n)) {
                throw sw::AlreadyExistsError("cell " + c.bucket.language + "/" + std::to_string(c.n) + "gram/" +
                                             c.bucket.date.to_string() + " already exists (use --overwrite)");
            }
        }
    }
    // a few cells at a time, releasing counts as they are written
    nlohmann::ordered_json written = nlohmann::ordered_json::array();
    const auto batch = static_cast<std::size_t>(sw::resolve_workers(o.workers));
    for (std::size_t first = 0; first < cells.size(); first += batch) {
        const auto span = std::span<const sw::DayCounts>(cells).subspan(first, std::min(batch, cells.size() - first));
        const auto built = sw::build_all(span, o.truncate_at, o.workers);
        for (std::size_t k = first; k < first + span.size(); ++k) sw::CountMap().swap(cells[k].counts);
        for (const auto& z : built) {
            store.put_day(z, o.overwrite);
            written.push_back({{"language", z.bucket.language},
                               {"n", z.n},
                               {"date", z.bucket.date.to_string()},
                               {"rows", z.records.size()},
                               {"truncated", z.truncated}});
        }
    }
    store.flush();

    nlohmann::ordered_json out{{"inputs", o.inputs},
                               {"lines", report.lines},
                               {"messages", report.messages},
                               {"parse_errors", report.parse_errors},
                               {"cells_written", written.size()},
                               {"cells", written},
                               {"diagnostics", diagnostics}};
    write_output(o.report, out.dump(2) + "\n");
    return kOk;
}

// ---- query subcommands --------------------------------------------------------

struct QueryOptions {
    std::string store;
    std::vector<std::string> ngrams;
    std::string lang;
    std::optional<int> n;
    std::string metric = "rank";
    std::optional<bool> rt;
    std::string scope;
    std::string from;
    std::string to;
    std::string scale;
    std::string format = "json";
    std::string out = "-";
};

struct TrendingOptions {
    std::string store;
    std::string lang;
    int n = 1;
    std::string date;
    std::size_t k = 20;
    double alpha = 0.25;
    bool keep_links = false;
    bool keep_handles = false;
    bool keep_emojis = false;
    bool keep_stopwords = false;
    bool drop_hashtags = false;
    std::string stopwords;
    std::string format = "json";
    std::string out = "-";
};

struct ContagiogramOptions {
    std::string store;
    std::string ngram;
    std::string lang;
    std::optional<int> n;
    std::string from;
    std::string to;
    int window = 30;
    std::string out = "-";
};

int run_query(const QueryOptions& o) {
    sw::Store store(resolve_store(o.store), sw::Store::Mode::read_only);
    sw::QueryService service(store);
    sw::ApiRequest r;
    r.path = o.format == "csv" ? "/api/timeseries.csv" : "/api/timeseries";
    for (const auto& q : o.ngrams) r.params.emplace("q", q);
    r.params.emplace("lang", o.lang);
    if (o.n) r.params.emplace("n", std::to_string(*o.n));
    r.params.emplace("metric", o.metric);
    if (o.rt) r.params.emplace("rt", *o.rt ? "true" : "false");
    if (!o.scope.empty()) r.params.emplace("scope", o.scope);
    if (!o.from.empty()) r.params.emplace("from", o.from);
    if (!o.to.empty()) r.params.emplace("to", o.to);
    if (!o.scale.empty()) r.params.emplace("scale", o.scale);
    return emit(service.handle(r), o.out);
}

int run_trending(const TrendingOptions& o) {
    sw::Store store(resolve_store(o.store), sw::Store::Mode::read_only);
    sw::QueryService service(store);
    sw::ApiRequest r;
    r.path = o.format == "csv" ? "/api/trending.csv" : "/api/trending";
    r.params = {{"lang", o.lang},
                {"n", std::to_string(o.n)},
                {"date", o.date},
                {"k", std::to_string(o.k)},
                {"alpha", nlohmann::json(o.alpha).dump()},
                {"drop_links", o.keep_links ? "false" : "true"},
                {"drop_handles", o.keep_handles ? "false" : "true"},
                {"drop_emojis", o.keep_emojis ? "false" : "true"},
                {"drop_stopwords", o.keep_stopwords ? "false" : "true"},
                {"keep_hashtags", o.drop_hashtags ? "false" : "true"}};
    if (!o.stopwords.empty()) r.params.emplace("stopwords", o.stopwords);
    return emit(service.handle(r), o.out);
}

int run_contagiogram(const ContagiogramOptions& o) {
    sw::Store store(resolve_store(o.store), sw::Store::Mode::read_only);
    sw::QueryService service(store);
    sw::ApiRequest r;
    r.path = "/api/contagiogram";
    r.params = {{"q", o.ngram}, {"lang", o.lang}, {"window", std::to_string(o.window)}};
    if (o.n) r.params.emplace("n", std::to_string(*o.n));
    if (!o.from.empty()) r.params.emplace("from", o.from);
    if (!o.to.empty()) r.params.emplace("to", o.to);
    return emit(service.handle(r), o.out);
}

// ---- serve --------------------------------------------------------------------

struct ServeOptions {
    std::string store;
    std::string bind;
    std::string cors_origin;
    std::string serve_ui;
    std::size_t max_body_bytes = 32u << 20;
};

sw::HttpServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

int run_serve(const ServeOptions& o) {
    sw::ServerOptions server_options;
    int port = 8080;
    if (const char* env = std::getenv("PORT"); env && *env) {
        try {
            port = std::stoi(env);
        } catch (const std::exception&) {
            throw CLI::ValidationError("PORT", std::string("not a port number: ") + env);
        }
    }
    std::string host = "127.0.0.1";
    if (!o.bind.empty()) {
        const auto colon = o.bind.rfind(':');
        if (colon == std::string::npos) {
            host = o.bind;
        } else {
            host = o.bind.substr(0, colon);
            try {
                port = std::stoi(o.bind.substr(colon + 1));
            } catch (const std::exception&) {
                throw CLI::ValidationError("--bind", "expected HOST:PORT, got " + o.bind);
            }
        }
    }
    if (port < 0 || port > 65535) throw CLI::ValidationError("--bind", "port out of range");
    server_options.host = host;
    server_options.port = port;
    if (!o.serve_ui.empty()) server_options.ui_root = o.serve_ui;

    sw::Store store(resolve_store(o.store), sw::Store::Mode::read_only);
    sw::ApiConfig config;
    config.cors_origin = o.cors_origin;
    config.max_body_bytes = o.max_body_bytes;
    sw::QueryService service(store, config);
    sw::HttpServer server(service, server_options);
    const int bound = server.bind();
    if (bound < 0) throw IoError("cannot bind " + host + ":" + std::to_string(port));
    std::cerr << "storywrangler: serving " << store.root().string() << " on http://" << host << ":" << bound << "\n";
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.run();
    g_server = nullptr;
    return kOk;
}

// ---- tokenize -----------------------------------------------------------------

struct TokenizeOptions {
    std::vector<std::string> texts;
    std::string format = "tsv";
    int n = 0;
};

int run_tokenize(const TokenizeOptions& o) {
    std::vector<std::string> texts = o.texts;
    if (texts.empty()) {
        std::string line;
        while (std::getline(std::cin, line)) texts.push_back(line);
    }
    for (const auto& text : texts) {
        const auto tokens = sw::tokenize(text);
        if (o.n > 0) {
            const auto grams = sw::ngrams(tokens, o.n);
            if (o.format == "json") {
                nlohmann::ordered_json arr = nlohmann::ordered_json::array();
                for (const auto& g : grams) arr.push_back(g.text());
                std::cout << arr.dump() << "\n";
            } else {
                for (const auto& g : grams) std::cout << g.text() << "\n";
                std::cout << "\n";
            }
            continue;
        }
        if (o.format == "json") {
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            for (const auto& t : tokens) arr.push_back({{"text", t.text}, {"class", sw::to_string(t.cls)}});
            std::cout << arr.dump() << "\n";
        } else {
            for (const auto& t : tokens) std::cout << t.text << "\t" << sw::to_string(t.cls) << "\n";
            std::cout << "\n";
        }
    }
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Daily n-gram Zipf distributions: build, query, trending, contagiograms, HTTP API"};
    app.require_subcommand(1);

    BuildOptions build;
    auto* b = app.add_subcommand("build", "Count NDJSON messages and write daily Zipf cells to a store");
    b->add_option("inputs", build.inputs, "NDJSON input files ('-' for stdin)")->required();
    b->add_option("--store,--store-root", build.store, "Store root directory (default $STORYWRANGLER_STORE)");
    b->add_flag("--overwrite", build.overwrite, "Replace cells that already exist");
    b->add_option("--workers", build.workers, "Worker threads (0 = all available)")->check(CLI::NonNegativeNumber);
    b->add_option("--truncate-at", build.truncate_at, "Rows kept per cell")->check(CLI::PositiveNumber);
    b->add_option("--confidence", build.confidence, "Language confidence threshold; at or below it the label is 'und'")
        ->check(CLI::Range(0.0, 1.0));
    b->add_option("--report", build.report, "Where to write the JSON build report ('-' for stdout)");

    QueryOptions query;
    auto* q = app.add_subcommand("query", "Time series for up to 10 n-grams (same body as /api/timeseries)");
    q->add_option("-q,--ngram", query.ngrams, "N-gram (repeatable; tokens separated by one space)")->required();
    q->add_option("--store,--store-root", query.store, "Store root directory (default $STORYWRANGLER_STORE)");
    q->add_option("--lang", query.lang, "Language code")->required();
    q->add_option("--n", query.n, "N-gram order (default: tokens in the first n-gram)");
    q->add_option("--metric", query.metric, "rank, freq or count")->check(CLI::IsMember({"rank", "freq", "count"}));
    q->add_option("--rt", query.rt, "Include retweets (true: AT, false: OT)");
    q->add_option("--scope", query.scope, "AT, OT or RT (overrides --rt)");
    q->add_option("--from", query.from, "First date, YYYY-MM-DD (default: earliest stored)");
    q->add_option("--to", query.to, "Last date, YYYY-MM-DD (default: latest stored)");
    q->add_option("--scale", query.scale, "Display hint echoed in the response: log or linear");
    q->add_option("--format", query.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    q->add_option("--out", query.out, "Output file ('-' for stdout)");

    TrendingOptions trending;
    auto* t = app.add_subcommand("trending", "Top n-grams by rank-turbulence divergence against 52 weeks earlier");
    t->add_option("--store,--store-root", trending.store, "Store root directory (default $STORYWRANGLER_STORE)");
    t->add_option("--lang", trending.lang, "Language code")->required();
    t->add_option("--n", trending.n, "N-gram order")->check(CLI::Range(1, 3));
    t->add_option("--date", trending.date, "Day to rank, YYYY-MM-DD")->required();
    t->add_option("-k,--k", trending.k, "Entries to return")->check(CLI::Range(1, 10000));
    t->add_option("--alpha", trending.alpha, "Divergence parameter")->check(CLI::PositiveNumber);
    t->add_flag("--keep-links", trending.keep_links, "Do not drop n-grams containing links");
    t->add_flag("--keep-handles", trending.keep_handles, "Do not drop n-grams containing handles");
    t->add_flag("--keep-emojis", trending.keep_emojis, "Do not drop n-grams containing emojis");
    t->add_flag("--keep-stopwords", trending.keep_stopwords, "Do not drop n-grams containing stopwords");
    t->add_flag("--drop-hashtags", trending.drop_hashtags, "Drop n-grams containing hashtags");
    t->add_option("--stopwords", trending.stopwords, "Stopword list name (default: the language's list)");
    t->add_option("--format", trending.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
    t->add_option("--out", trending.out, "Output file ('-' for stdout)");

    ContagiogramOptions contagio;
    auto* c = app.add_subcommand("contagiogram", "Rank series, weekly band, monthly RT balance and R^rel heatmap");
    c->add_option("-q,--ngram", contagio.ngram, "N-gram")->required();
    c->add_option("--store,--store-root", contagio.store, "Store root directory (default $STORYWRANGLER_STORE)");
    c->add_option("--lang", contagio.lang, "Language code")->required();
    c->add_option("--n", contagio.n, "N-gram order (default: tokens in the n-gram)");
    c->add_option("--from", contagio.from, "First date, YYYY-MM-DD (default: earliest stored)");
    c->add_option("--to", contagio.to, "Last date, YYYY-MM-DD (default: latest stored)");
    c->add_option("--window", contagio.window, "Smoothing window in days")->check(CLI::Range(1, 3660));
    c->add_option("--out", contagio.out, "Output file ('-' for stdout)");

    ServeOptions serve;
    auto* s = app.add_subcommand("serve", "Serve the HTTP API (read-only)");
    s->add_option("--store,--store-root", serve.store, "Store root directory (default $STORYWRANGLER_STORE)");
    s->add_option("--bind", serve.bind, "HOST:PORT (default 127.0.0.1 and $PORT or 8080)");
    s->add_option("--cors-origin", serve.cors_origin, "Value for Access-Control-Allow-Origin");
    s->add_option("--serve-ui", serve.serve_ui, "Directory of static viewer assets mounted at /");
    s->add_option("--max-body-bytes", serve.max_body_bytes, "Largest response body")->check(CLI::PositiveNumber);

    TokenizeOptions tok;
    auto* k = app.add_subcommand("tokenize", "Print tokens (or n-grams) of each text or stdin line");
    k->add_option("texts", tok.texts, "Texts to tokenize (default: read lines from stdin)");
    k->add_option("--format", tok.format, "tsv or json")->check(CLI::IsMember({"tsv", "json"}));
    k->add_option("--n", tok.n, "Print n-grams of this order instead of tokens")->check(CLI::Range(1, 3));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kOk : kUsage;
    }

    try {
        if (*b) return run_build(build);
        if (*q) return run_query(query);
        if (*t) return run_trending(trending);
        if (*c) return run_contagiogram(contagio);
        if (*s) return run_serve(serve);
        if (*k) return run_tokenize(tok);
    } catch (const CLI::Error& e) {
        std::cerr << "storywrangler: " << e.what() << "\n";
        return kUsage;
    } catch (const IoError& e) {
        std::cerr << "storywrangler: " << e.what() << "\n";
        return kIo;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "storywrangler: " << e.what() << "\n";
        return kIo;
    } catch (const std::invalid_argument& e) {
        std::cerr << "storywrangler: " << e.what() << "\n";
        return kUsage;
    } catch (const std::exception& e) {
        std::cerr << "storywrangler: " << e.what() << "\n";
        return kData;
    }
    return kUsage;
}
