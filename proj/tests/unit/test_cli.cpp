#include <gtest/gtest.h>
#include <sys/wait.h>

#include <fstream>
#include <json.hpp>
#include <map>
#include <sstream>

#include "schema.hpp"
#include "storywrangler/api.hpp"
#include "synthetic.hpp"
#include "temp_dir.hpp"

using namespace storywrangler;
using nlohmann::json;
namespace fs = std::filesystem;
namespace st = storywrangler::testing;

namespace {

struct Run {
    int code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') {
            out += "'\\''";
        } else {
            out += c;
        }
    }
    return out + "'";
}

// Runs the CLI with a clean STORYWRANGLER_STORE unless one is given.
Run cli(const std::vector<std::string>& args, const std::string& env = "") {
    static st::TempDir scratch("cli-io");
    static int counter = 0;
    const auto out_path = scratch / ("out" + std::to_string(counter));
    const auto err_path = scratch / ("err" + std::to_string(counter++));
    std::string cmd = "env -u STORYWRANGLER_STORE " + env + " " + quote(STORYWRANGLER_CLI);
    for (const auto& a : args) cmd += " " + quote(a);
    cmd += " </dev/null >" + quote(out_path.string()) + " 2>" + quote(err_path.string());
    const int status = std::system(cmd.c_str());
    Run r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = slurp(out_path);
    r.err = slurp(err_path);
    return r;
}

fs::path write_corpus(const st::TempDir& dir, const std::string& name, std::size_t messages, std::uint64_t seed) {
    st::CorpusOptions o;
    o.messages = messages;
    o.seed = seed;
    o.malformed_share = 0.01;
    const auto corpus = st::generate_corpus(o);
    const auto path = dir / name;
    std::ofstream out(path);
    for (const auto& line : corpus.ndjson_lines) out << line << "\n";
    return path;
}

// relative path -> bytes for every file under root
std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return out;
}

std::string api_body(const fs::path& store_root, const std::string& target) {
    Store store(store_root, Store::Mode::read_only);
    QueryService service(store);
    return service.handle(ApiRequest::from_target(target)).body;
}

class Cli : public ::testing::Test {
protected:
    static void SetUpTestSuite() {
        dir = std::make_unique<st::TempDir>("cli");
        corpus = write_corpus(*dir, "corpus.ndjson", 3'000, 51);
        root = *dir / "store";
        const auto r = cli({"build", corpus.string(), "--store", root.string(), "--workers", "2"});
        ASSERT_EQ(r.code, 0) << r.err;
        report = json::parse(r.out);
    }
    static void TearDownTestSuite() { dir.reset(); }

    static std::unique_ptr<st::TempDir> dir;
    static fs::path corpus;
    static fs::path root;
    static json report;
};

std::unique_ptr<st::TempDir> Cli::dir;
fs::path Cli::corpus;
fs::path Cli::root;
json Cli::report;

}  // namespace

TEST(CliBuild, TwoMessageFixture) {
    st::TempDir dir;
    const auto input = dir / "two.ndjson";
    std::ofstream(input) << R"({"text":"hello big world","ts":"2020-06-01T16:00:00Z","lang":"en","conf":0.9,"kind":"original"})"
                         << "\n"
                         << R"({"text":"hello small world","ts":"2020-06-01T17:00:00Z","lang":"en","conf":0.9,"kind":"original"})"
                         << "\n";
    const auto r = cli({"build", input.string(), "--store", (dir / "s").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = json::parse(r.out);
    EXPECT_EQ(rep["messages"], 2);
    EXPECT_EQ(rep["parse_errors"], 0);
    EXPECT_EQ(rep["cells_written"], 3);
    std::vector<int> orders;
    for (const auto& c : rep["cells"]) {
        EXPECT_EQ(c["language"], "en");
        EXPECT_EQ(c["date"], "2020-06-01");
        orders.push_back(c["n"]);
    }
    EXPECT_EQ(orders, (std::vector<int>{1, 2, 3}));
    EXPECT_TRUE(st::validate_schema(st::load_schema("build_report"), rep).empty());

    // rerunning without --overwrite refuses and leaves the store as it was
    const auto before = tree(dir / "s");
    const auto again = cli({"build", input.string(), "--store", (dir / "s").string()});
    EXPECT_EQ(again.code, 2);
    EXPECT_NE(again.err.find("already exists"), std::string::npos) << again.err;
    EXPECT_EQ(tree(dir / "s"), before);
    // with --overwrite the same inputs give the same bytes
    const auto over = cli({"build", input.string(), "--store", (dir / "s").string(), "--overwrite"});
    EXPECT_EQ(over.code, 0) << over.err;
    EXPECT_EQ(tree(dir / "s"), before);
}

TEST(CliBuild, StoreFromEnvironmentAndReportFile) {
    st::TempDir dir;
    const auto input = write_corpus(dir, "c.ndjson", 200, 52);
    const auto r = cli({"build", input.string(), "--report", (dir / "report.json").string()},
                       "STORYWRANGLER_STORE=" + quote((dir / "env-store").string()));
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    const auto rep = json::parse(slurp(dir / "report.json"));
    EXPECT_GT(rep["cells_written"].get<int>(), 0);
    EXPECT_TRUE(fs::exists(dir / "env-store" / "en" / "1gram"));
}

TEST(CliBuild, WorkerCountDoesNotChangeTheStore) {
    st::TempDir dir;
    const auto input = write_corpus(dir, "c.ndjson", 2'000, 53);
    for (const auto* w : {"1", "3"}) {
        const auto r = cli({"build", input.string(), "--store", (dir / (std::string("w") + w)).string(), "--workers", w});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    const auto a = tree(dir / "w1");
    const auto b = tree(dir / "w3");
    EXPECT_GT(a.size(), 20u);
    EXPECT_EQ(a, b);
}

TEST(CliBuild, ErrorsAndExitCodes) {
    st::TempDir dir;
    EXPECT_EQ(cli({}).code, 1);
    EXPECT_EQ(cli({"frobnicate"}).code, 1);
    EXPECT_EQ(cli({"build", "--store", (dir / "s").string()}).code, 1);
    const auto missing_input = cli({"build", (dir / "absent.ndjson").string(), "--store", (dir / "s").string()});
    EXPECT_EQ(missing_input.code, 3);
    EXPECT_NE(missing_input.err.find("absent.ndjson"), std::string::npos);
    const auto input = write_corpus(dir, "c.ndjson", 50, 54);
    EXPECT_EQ(cli({"build", input.string()}).code, 1);  // no store root anywhere
    EXPECT_EQ(cli({"build", input.string(), "--store", (dir / "s").string(), "--workers", "-2"}).code, 1);

    // malformed lines are reported, not fatal
    const auto r = cli({"build", input.string(), "--store", (dir / "s").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto rep = json::parse(r.out);
    EXPECT_EQ(rep["lines"].get<int>(), rep["messages"].get<int>() + rep["parse_errors"].get<int>());
    for (const auto& d : rep["diagnostics"]) EXPECT_NE(d.get<std::string>().find(": line "), std::string::npos);
}

TEST(CliHelp, DocumentsEveryFlag) {
    const auto top = cli({"--help"});
    EXPECT_EQ(top.code, 0);
    for (const auto* sub : {"build", "query", "trending", "contagiogram", "serve", "tokenize"}) {
        EXPECT_NE(top.out.find(sub), std::string::npos) << sub;
    }
    const std::map<std::string, std::vector<std::string>> flags = {
        {"build", {"--store", "--overwrite", "--workers", "--truncate-at", "--confidence", "--report"}},
        {"query", {"--ngram", "--lang", "--n", "--metric", "--rt", "--scope", "--from", "--to", "--scale", "--format", "--out"}},
        {"trending", {"--lang", "--n", "--date", "--k", "--alpha", "--keep-links", "--keep-handles", "--keep-emojis",
                      "--keep-stopwords", "--drop-hashtags", "--stopwords", "--format", "--out"}},
        {"contagiogram", {"--ngram", "--lang", "--n", "--from", "--to", "--window", "--out"}},
        {"serve", {"--store", "--bind", "--cors-origin", "--serve-ui", "--max-body-bytes"}},
        {"tokenize", {"--format", "--n"}},
    };
    for (const auto& [sub, names] : flags) {
        const auto help = cli({sub, "--help"});
        EXPECT_EQ(help.code, 0) << sub;
        for (const auto& f : names) EXPECT_NE(help.out.find(f), std::string::npos) << sub << " " << f;
    }
}

TEST_F(Cli, ReportValidates) {
    EXPECT_TRUE(st::validate_schema(st::load_schema("build_report"), report).empty()) << report.dump(2);
    EXPECT_GT(report["parse_errors"].get<int>(), 0);
    EXPECT_EQ(report["cells_written"].get<std::size_t>(), report["cells"].size());
}

TEST_F(Cli, QueryMatchesApiBody) {
    const auto r = cli({"query", "--store", root.string(), "-q", "RT", "-q", "the", "--lang", "en", "--metric", "freq",
                        "--rt", "false", "--from", "2020-03-01", "--to", "2020-03-10"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out, api_body(root, "/api/timeseries?q=RT&q=the&lang=en&metric=freq&rt=false&from=2020-03-01&to=2020-03-10"));
    EXPECT_TRUE(st::validate_schema(st::load_schema("timeseries"), json::parse(r.out)).empty());

    const auto csv = cli({"query", "--store", root.string(), "-q", "RT", "--lang", "en", "--format", "csv"});
    ASSERT_EQ(csv.code, 0) << csv.err;
    EXPECT_EQ(csv.out, api_body(root, "/api/timeseries.csv?q=RT&lang=en"));

    const auto out_file = *dir / "q.json";
    const auto to_file = cli({"query", "--store", root.string(), "-q", "RT", "--lang", "en", "--out", out_file.string()});
    ASSERT_EQ(to_file.code, 0);
    EXPECT_TRUE(to_file.out.empty());
    EXPECT_EQ(slurp(out_file), api_body(root, "/api/timeseries?q=RT&lang=en&metric=rank"));
}

TEST_F(Cli, QueryErrors) {
    EXPECT_EQ(cli({"query", "--store", root.string(), "-q", "RT", "--lang", "de"}).code, 2);
    EXPECT_EQ(cli({"query", "--store", root.string(), "-q", "RT", "--lang", "en", "--from", "March"}).code, 1);
    EXPECT_EQ(cli({"query", "--store", root.string(), "-q", "RT", "--lang", "en", "--metric", "mean"}).code, 1);
    EXPECT_EQ(cli({"query", "--store", (*dir / "nowhere").string(), "-q", "RT", "--lang", "en"}).code, 2);
    EXPECT_EQ(cli({"query", "--store", root.string(), "-q", "RT", "--lang", "en", "--out", "/nonexistent/dir/x.json"}).code,
              3);
    const auto err = cli({"query", "--store", root.string(), "-q", "RT", "--lang", "de"});
    EXPECT_TRUE(st::validate_schema(st::load_schema("error"), json::parse(err.err.substr(err.err.find('{')))).empty());
}

TEST_F(Cli, TrendingAndContagiogram) {
    // a second year so the 52-week reference exists
    st::CorpusOptions o;
    o.messages = 1'500;
    o.seed = 55;
    o.first_day = Date::parse("2021-02-28");
    o.days = 3;
    const auto corpus2 = st::generate_corpus(o);
    const auto path = *dir / "next-year.ndjson";
    {
        std::ofstream out(path);
        for (const auto& line : corpus2.ndjson_lines) out << line << "\n";
    }
    const auto built = cli({"build", path.string(), "--store", root.string()});
    ASSERT_EQ(built.code, 0) << built.err;

    const auto t = cli({"trending", "--store", root.string(), "--lang", "en", "--date", "2021-03-01", "-k", "7"});
    ASSERT_EQ(t.code, 0) << t.err;
    EXPECT_EQ(t.out, api_body(root, "/api/trending?lang=en&n=1&date=2021-03-01&k=7&alpha=0.25&drop_links=true&"
                                    "drop_handles=true&drop_emojis=true&drop_stopwords=true&keep_hashtags=true"));
    const auto body = json::parse(t.out);
    EXPECT_EQ(body["reference_date"], "2020-03-02");
    EXPECT_EQ(body["entries"].size(), 7u);
    EXPECT_TRUE(st::validate_schema(st::load_schema("trending"), body).empty());

    const auto csv = cli({"trending", "--store", root.string(), "--lang", "en", "--date", "2021-03-01", "-k", "5",
                          "--format", "csv", "--keep-links", "--n", "2"});
    ASSERT_EQ(csv.code, 0) << csv.err;
    std::istringstream lines(csv.out);
    std::string line;
    std::size_t rows = 0;
    std::getline(lines, line);
    EXPECT_EQ(line, "ngram,rtd,rank_today,rank_ref,log10_rel_amp");
    while (std::getline(lines, line)) ++rows;
    EXPECT_EQ(rows, 5u);

    const auto missing = cli({"trending", "--store", root.string(), "--lang", "en", "--date", "2021-03-05"});
    EXPECT_EQ(missing.code, 2);
    EXPECT_NE(missing.err.find("en/1gram/2021-03-05"), std::string::npos);

    const auto c = cli({"contagiogram", "--store", root.string(), "-q", "RT", "--lang", "en", "--from", "2020-03-01",
                        "--to", "2020-03-14", "--window", "7"});
    ASSERT_EQ(c.code, 0) << c.err;
    EXPECT_EQ(c.out, api_body(root, "/api/contagiogram?q=RT&lang=en&from=2020-03-01&to=2020-03-14&window=7"));
    EXPECT_TRUE(st::validate_schema(st::load_schema("contagiogram"), json::parse(c.out)).empty());
}

TEST(CliTokenize, PrintsTokensAndNgrams) {
    const auto tsv = cli({"tokenize", "Hello @you #news"});
    ASSERT_EQ(tsv.code, 0);
    EXPECT_EQ(tsv.out, "Hello\tword\n@you\thandle\n#news\thashtag\n\n");
    const auto j = cli({"tokenize", "--format", "json", "I'll pay $5"});
    ASSERT_EQ(j.code, 0);
    const auto arr = json::parse(j.out);
    ASSERT_EQ(arr.size(), 3u);
    EXPECT_EQ(arr[0]["text"], "I'll");
    EXPECT_EQ(arr[2]["text"], "$5");
    const auto grams = cli({"tokenize", "--format", "json", "--n", "2", "a b c"});
    EXPECT_EQ(json::parse(grams.out), json::parse(R"(["a b","b c"])"));
    EXPECT_EQ(cli({"tokenize", "--n", "4", "a"}).code, 1);
}
