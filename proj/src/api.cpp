#include "storywrangler/api.hpp"

#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <json.hpp>
#include <set>
#include <stdexcept>

#include "storywrangler/error.hpp"
#include "storywrangler/measures.hpp"
#include "storywrangler/tokenizer.hpp"
#include "storywrangler/trending.hpp"

namespace storywrangler {

using ojson = nlohmann::ordered_json;

ApiRequest ApiRequest::from_target(std::string_view target) {
    ApiRequest r;
    const auto q = target.find('?');
    r.path = httplib::detail::decode_url(std::string(target.substr(0, q)), false);
    if (q != std::string_view::npos) {
        httplib::Params params;
        httplib::detail::parse_query_text(std::string(target.substr(q + 1)), params);
        r.params.insert(params.begin(), params.end());
    }
    return r;
}

namespace {

class BadRequest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Conflict : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---- parameters -----------------------------------------------------------

class Params {
public:
    Params(const ApiRequest& r, std::initializer_list<std::string_view> allowed) : r_(r) {
        for (const auto& [key, value] : r.params) {
            if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
                throw BadRequest("unknown parameter '" + key + "'");
            }
        }
    }

    std::optional<std::string> get(const std::string& key) const {
        const auto [lo, hi] = r_.params.equal_range(key);
        if (lo == hi) return std::nullopt;
        if (std::next(lo) != hi) throw BadRequest("parameter '" + key + "' given more than once");
        return lo->second;
    }

    std::string require(const std::string& key) const {
        auto v = get(key);
        if (!v || v->empty()) throw BadRequest("missing parameter '" + key + "'");
        return *v;
    }

    std::vector<std::string> all(const std::string& key) const {
        std::vector<std::string> out;
        const auto [lo, hi] = r_.params.equal_range(key);
        for (auto it = lo; it != hi; ++it) out.push_back(it->second);
        return out;
    }

    long long integer(const std::string& key, long long fallback, long long lo, long long hi) const {
        const auto v = get(key);
        if (!v) return fallback;
        long long out = 0;
        const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (v->empty() || ec != std::errc{} || ptr != v->data() + v->size() || out < lo || out > hi) {
            throw BadRequest("parameter '" + key + "' must be an integer in [" + std::to_string(lo) + ", " +
                             std::to_string(hi) + "]");
        }
        return out;
    }

    double real(const std::string& key, double fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        double out = 0;
        const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
        if (v->empty() || ec != std::errc{} || ptr != v->data() + v->size()) {
            throw BadRequest("parameter '" + key + "' must be a number");
        }
        return out;
    }

    bool boolean(const std::string& key, bool fallback) const {
        const auto v = get(key);
        if (!v) return fallback;
        if (*v == "true" || *v == "1" || *v == "yes") return true;
        if (*v == "false" || *v == "0" || *v == "no") return false;
        throw BadRequest("parameter '" + key + "' must be true or false");
    }

    std::optional<Date> date(const std::string& key) const {
        const auto v = get(key);
        if (!v) return std::nullopt;
        try {
            return Date::parse(*v);
        } catch (const ParseError&) {
            throw BadRequest("parameter '" + key + "' must be a YYYY-MM-DD date");
        }
    }

private:
    const ApiRequest& r_;
};

int order_of(const std::string& ngram) {
    if (ngram.empty()) throw BadRequest("empty n-gram");
    const auto n = 1 + std::count(ngram.begin(), ngram.end(), ' ');
    try {
        NgramKey key(ngram, static_cast<int>(n));
    } catch (const std::invalid_argument& e) {
        throw BadRequest("malformed n-gram '" + ngram + "': " + e.what());
    }
    return static_cast<int>(n);
}

std::string language_param(const Params& p, const Store& store) {
    const auto lang = p.require("lang");
    if (!Store::valid_language_code(lang)) throw BadRequest("malformed language code '" + lang + "'");
    const auto langs = store.languages();
    if (!std::binary_search(langs.begin(), langs.end(), lang)) throw NotFoundError("unknown language '" + lang + "'");
    return lang;
}

// Default range: the stored coverage of the partition.
DateRange range_param(const Params& p, const Store& store, const std::string& lang, int n) {
    auto from = p.date("from");
    auto to = p.date("to");
    if (!from || !to) {
        const auto cells = store.cells(lang, n);
        if (cells.empty()) {
            throw NotFoundError("no " + std::to_string(n) + "-gram data for language '" + lang + "'");
        }
        if (!from) from = cells.front().date;
        if (!to) to = cells.back().date;
    }
    if (*to < *from) throw BadRequest("'from' is after 'to'");
    if (*to - *from > 60'000) throw BadRequest("date range longer than 60,000 days");
    return DateRange(*from, *to);
}

// ---- JSON helpers ----------------------------------------------------------

ojson opt(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

ojson points_json(const TimeSeries& s) {
    ojson out = ojson::array();
    for (const auto& p : s.points) out.push_back({{"date", p.date.to_string()}, {"value", opt(p.value)}});
    return out;
}

std::string number_text(double v) { return ojson(v).dump(); }

std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

ApiResponse json_response(const ojson& body, int status = 200) {
    ApiResponse r;
    r.status = status;
    r.body = body.dump();
    r.body += '\n';
    return r;
}

ApiResponse error_response(int status, const std::string& message, const std::optional<std::string>& cell = {}) {
    ojson err{{"status", status}, {"message", message}};
    if (cell) err["missing_cell"] = *cell;
    return json_response({{"error", err}}, status);
}

ojson totals_json(const ScopeTotals& t) { return {{"at", t.at}, {"ot", t.ot}, {"rt", t.rt}}; }

std::string encode_query(const std::vector<std::pair<std::string, std::string>>& kv) {
    std::string out;
    for (const auto& [k, v] : kv) {
        out += out.empty() ? "?" : "&";
        out += k + "=" + httplib::detail::encode_query_param(v);
    }
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------

QueryService::QueryService(const Store& store, ApiConfig config) : store_(store), config_(std::move(config)) {}

ApiResponse QueryService::handle(const ApiRequest& request) const {
    ApiResponse response;
    try {
        const auto& path = request.path;
        if (path == "/api/languages") {
            response = languages(request);
        } else if (path == "/api/timeseries") {
            response = timeseries(request, false);
        } else if (path == "/api/timeseries.csv") {
            response = timeseries(request, true);
        } else if (path == "/api/zipf") {
            response = zipf(request);
        } else if (path == "/api/trending") {
            response = trending(request, false);
        } else if (path == "/api/trending.csv") {
            response = trending(request, true);
        } else if (path == "/api/contagiogram") {
            response = contagiogram(request);
        } else {
            response = error_response(404, "no endpoint " + path);
        }
    } catch (const BadRequest& e) {
        response = error_response(400, e.what());
    } catch (const MissingCellError& e) {
        response = error_response(409, e.what(), e.cell());
    } catch (const Conflict& e) {
        response = error_response(409, e.what());
    } catch (const NotFoundError& e) {
        response = error_response(404, e.what());
    } catch (const IntegrityError& e) {
        response = error_response(500, std::string("store integrity failure: ") + e.what());
    } catch (const std::invalid_argument& e) {
        response = error_response(400, e.what());
    } catch (const std::exception& e) {
        response = error_response(500, e.what());
    }
    if (response.body.size() > config_.max_body_bytes) {
        response = error_response(413, "response exceeds " + std::to_string(config_.max_body_bytes) +
                                           " bytes; narrow the query");
    }
    if (!config_.cors_origin.empty()) {
        response.headers.emplace_back("Access-Control-Allow-Origin", config_.cors_origin);
        response.headers.emplace_back("Vary", "Origin");
    }
    return response;
}

ApiResponse QueryService::languages(const ApiRequest& r) const {
    Params p(r, {});
    ojson out = ojson::array();
    for (const auto& c : store_.coverage()) {
        out.push_back({{"code", c.code},
                       {"earliest_date", c.earliest.to_string()},
                       {"latest_date", c.latest.to_string()},
                       {"day_count", c.day_count}});
    }
    return json_response(out);
}

ApiResponse QueryService::timeseries(const ApiRequest& r, bool csv) const {
    Params p(r, {"q", "lang", "n", "metric", "rt", "scope", "from", "to", "scale"});
    const auto ngrams = p.all("q");
    if (ngrams.empty()) throw BadRequest("missing parameter 'q'");
    if (ngrams.size() > config_.max_series) {
        throw BadRequest("at most " + std::to_string(config_.max_series) + " n-grams per request");
    }
    std::vector<int> orders;
    for (const auto& q : ngrams) orders.push_back(order_of(q));
    const int n = static_cast<int>(p.integer("n", orders.front(), kMinOrder, kMaxOrder));

    const auto metric_name = p.get("metric").value_or("rank");
    const auto metric = metric_from_string(metric_name);
    if (!metric) throw BadRequest("metric must be rank, freq or count");
    const bool rt = p.boolean("rt", true);
    Scope scope = rt ? Scope::at : Scope::ot;
    if (const auto s = p.get("scope")) {
        const auto parsed = scope_from_string(*s);
        if (!parsed) throw BadRequest("scope must be AT, OT or RT");
        if (p.get("rt") && (*parsed == Scope::at) != rt) throw BadRequest("'scope' contradicts 'rt'");
        scope = *parsed;
    }
    const auto scale = p.get("scale").value_or("log");
    if (scale != "log" && scale != "linear") throw BadRequest("scale must be log or linear");
    const auto lang = language_param(p, store_);
    const auto range = range_param(p, store_, lang, n);

    std::vector<TimeSeries> results;
    for (std::size_t i = 0; i < ngrams.size(); ++i) {
        const auto order = orders[i];
        if (!store_.has_partition(lang, order)) {
            throw NotFoundError("no " + std::to_string(order) + "-gram data for language '" + lang + "'");
        }
        results.push_back(series(store_, ngrams[i], lang, order, range, *metric, scope));
    }

    if (csv) {
        ApiResponse out;
        out.content_type = "text/csv; charset=utf-8";
        out.headers.emplace_back("Content-Disposition", "attachment; filename=\"timeseries.csv\"");
        out.body = "ngram,n,date,metric,scope,value\n";
        for (const auto& s : results) {
            const auto prefix = csv_field(s.ngram) + "," + std::to_string(s.n) + ",";
            const auto suffix = "," + std::string(to_string(s.metric)) + "," + std::string(to_string(s.scope)) + ",";
            for (const auto& pt : s.points) {
                out.body += prefix + pt.date.to_string() + suffix + (pt.value ? number_text(*pt.value) : "") + "\n";
            }
        }
        return out;
    }

    ojson query{{"q", ngrams},
                {"lang", lang},
                {"n", n},
                {"metric", to_string(*metric)},
                {"rt", scope == Scope::at},
                {"scope", to_string(scope)},
                {"from", range.from.to_string()},
                {"to", range.to.to_string()},
                {"scale", scale}};
    std::vector<std::pair<std::string, std::string>> link;
    for (const auto& q : ngrams) link.emplace_back("q", q);
    for (const auto* key : {"lang", "n", "metric", "scope", "from", "to", "scale"}) {
        const auto& v = query[key];
        link.emplace_back(key, v.is_string() ? v.get<std::string>() : v.dump());
    }
    query["link"] = "/api/timeseries" + encode_query(link);

    ojson series_json = ojson::array();
    for (const auto& s : results) {
        series_json.push_back({{"ngram", s.ngram},
                               {"language", s.language},
                               {"n", s.n},
                               {"metric", to_string(s.metric)},
                               {"scope", to_string(s.scope)},
                               {"rank_comparable", s.n == n},
                               {"points", points_json(s)}});
    }
    return json_response({{"query", query}, {"series", series_json}});
}

ApiResponse QueryService::zipf(const ApiRequest& r) const {
    Params p(r, {"lang", "n", "date", "cursor", "limit"});
    const auto lang = language_param(p, store_);
    const int n = static_cast<int>(p.integer("n", 1, kMinOrder, kMaxOrder));
    const auto date = p.date("date");
    if (!date) throw BadRequest("missing parameter 'date'");
    const auto limit = static_cast<std::size_t>(
        p.integer("limit", static_cast<long long>(config_.page_size), 1, static_cast<long long>(config_.page_size)));
    if (!store_.has_day(*date, lang, n)) {
        throw NotFoundError("no cell " + lang + "/" + std::to_string(n) + "gram/" + date->to_string());
    }
    const auto z = store_.get_day(*date, lang, n);
    const auto info = store_.cell_info(*date, lang, n);
    char version[9];
    std::snprintf(version, sizeof version, "%08x", info ? info->tsv_crc : 0u);

    // cursor = "{offset}.{cell checksum}"
    std::size_t offset = 0;
    if (const auto cursor = p.get("cursor")) {
        const auto dot = cursor->find('.');
        const auto digits = cursor->substr(0, dot);
        const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), offset);
        if (dot == std::string::npos || digits.empty() || ec != std::errc{} || ptr != digits.data() + digits.size()) {
            throw BadRequest("malformed cursor");
        }
        if (cursor->substr(dot + 1) != version) throw Conflict("cursor refers to a different version of the cell");
        if (offset > z.records.size()) throw BadRequest("cursor past the end of the cell");
    }
    const auto end = std::min(z.records.size(), offset + limit);

    ojson rows = ojson::array();
    for (auto i = offset; i < end; ++i) {
        const auto& rec = z.records[i];
        rows.push_back({{"ngram", rec.ngram},
                        {"count", rec.f_at},
                        {"count_no_rt", rec.f_ot},
                        {"count_rt", rec.f_rt},
                        {"rank", rec.r_at},
                        {"rank_no_rt", opt(rec.r_ot)},
                        {"rank_rt", opt(rec.r_rt)},
                        {"freq", rec.p_at},
                        {"freq_no_rt", rec.p_ot},
                        {"freq_rt", rec.p_rt}});
    }
    ojson body{{"language", lang},
               {"n", n},
               {"date", date->to_string()},
               {"truncated", z.truncated},
               {"truncate_at", z.truncate_at},
               {"totals", totals_json(z.totals)},
               {"lexicon", totals_json(z.lexicon)},
               {"volume", {{"ot", z.volume.ot}, {"rt", z.volume.rt}}},
               {"row_count", z.records.size()},
               {"offset", offset},
               {"limit", limit},
               {"next_cursor", end < z.records.size() ? ojson(std::to_string(end) + "." + version) : ojson(nullptr)},
               {"rows", rows}};
    return json_response(body);
}

ApiResponse QueryService::trending(const ApiRequest& r, bool csv) const {
    Params p(r, {"lang", "n", "date", "k", "alpha", "drop_links", "drop_handles", "drop_emojis", "drop_stopwords",
                 "keep_hashtags", "stopwords"});
    const auto lang = language_param(p, store_);
    const int n = static_cast<int>(p.integer("n", 1, kMinOrder, kMaxOrder));
    const auto date = p.date("date");
    if (!date) throw BadRequest("missing parameter 'date'");
    const auto k = static_cast<std::size_t>(p.integer("k", kDefaultTrendingCount, 1, 10'000));
    const double alpha = p.real("alpha", kDefaultAlpha);
    if (!(alpha > 0.0) || alpha > 100.0) throw BadRequest("alpha must be in (0, 100]");
    FilterPolicy policy;
    policy.drop_links = p.boolean("drop_links", true);
    policy.drop_handles = p.boolean("drop_handles", true);
    policy.drop_emojis = p.boolean("drop_emojis", true);
    policy.drop_stopwords = p.boolean("drop_stopwords", true);
    policy.keep_hashtags = p.boolean("keep_hashtags", true);
    policy.stopword_list = p.get("stopwords").value_or("");
    if (!policy.stopword_list.empty()) {
        try {
            stopwords(policy.stopword_list);
        } catch (const NotFoundError& e) {
            throw BadRequest(e.what());
        }
    }

    const auto result = narratively_trending(store_, *date, lang, n, k, policy, alpha);

    if (csv) {
        ApiResponse out;
        out.content_type = "text/csv; charset=utf-8";
        out.headers.emplace_back("Content-Disposition", "attachment; filename=\"trending.csv\"");
        out.body = "ngram,rtd,rank_today,rank_ref,log10_rel_amp\n";
        for (const auto& e : result.entries) {
            out.body += csv_field(e.ngram) + "," + number_text(e.rtd) + "," + number_text(e.rank_today) + "," +
                        (e.rank_reference ? number_text(*e.rank_reference) : "") + "," +
                        (e.log10_rel_amp ? number_text(*e.log10_rel_amp) : "") + "\n";
        }
        return out;
    }

    ojson entries = ojson::array();
    for (const auto& e : result.entries) {
        entries.push_back({{"ngram", e.ngram},
                           {"rtd", e.rtd},
                           {"rank_today", e.rank_today},
                           {"rank_ref", opt(e.rank_reference)},
                           {"log10_rel_amp", opt(e.log10_rel_amp)}});
    }
    ojson query{{"lang", lang},
                {"n", n},
                {"date", date->to_string()},
                {"k", k},
                {"alpha", alpha},
                {"drop_links", policy.drop_links},
                {"drop_handles", policy.drop_handles},
                {"drop_emojis", policy.drop_emojis},
                {"drop_stopwords", policy.drop_stopwords},
                {"keep_hashtags", policy.keep_hashtags},
                {"stopwords", policy.stopword_list.empty() ? ojson(nullptr) : ojson(policy.stopword_list)}};
    return json_response({{"query", query},
                          {"date", result.date.to_string()},
                          {"reference_date", result.reference.to_string()},
                          {"entries", entries}});
}

ApiResponse QueryService::contagiogram(const ApiRequest& r) const {
    Params p(r, {"q", "lang", "n", "from", "to", "window"});
    const auto ngram = p.require("q");
    const int order = order_of(ngram);
    const int n = static_cast<int>(p.integer("n", order, kMinOrder, kMaxOrder));
    if (n != order) throw BadRequest("n-gram '" + ngram + "' has " + std::to_string(order) + " tokens, not " +
                                     std::to_string(n));
    const auto window = static_cast<int>(p.integer("window", kDefaultSmoothingDays, 1, 3660));
    const auto lang = language_param(p, store_);
    const auto range = range_param(p, store_, lang, n);

    const auto c = storywrangler::contagiogram(store_, ngram, lang, n, range, window);

    ojson bands = ojson::array();
    for (const auto& b : c.weekly_band) {
        bands.push_back({{"week", b.week.to_string()},
                         {"first", b.first.to_string()},
                         {"last", b.last.to_string()},
                         {"min_rank", opt(b.min_rank)},
                         {"max_rank", opt(b.max_rank)}});
    }
    ojson balance = ojson::array();
    for (const auto& m : c.rt_balance) {
        balance.push_back({{"month", m.month.to_string()},
                           {"f_ot", m.f_ot},
                           {"f_rt", m.f_rt},
                           {"r", opt(m.r)},
                           {"amplified", m.amplified}});
    }
    ojson heat = ojson::array();
    for (const auto& m : c.rel_heatmap) {
        ojson values = ojson::array();
        for (const auto& v : m.by_weekday) values.push_back(opt(v));
        heat.push_back({{"month", m.month.to_string()}, {"values", values}});
    }
    ojson query{{"q", ngram},
                {"lang", lang},
                {"n", n},
                {"from", range.from.to_string()},
                {"to", range.to.to_string()},
                {"window", window}};
    return json_response({{"query", query},
                          {"ngram", c.ngram},
                          {"language", c.language},
                          {"n", c.n},
                          {"from", c.from.to_string()},
                          {"to", c.to.to_string()},
                          {"smoothing_days", c.smoothing_days},
                          {"rank_series", points_json(c.rank_series)},
                          {"rank_smoothed", points_json(c.rank_smoothed)},
                          {"weekly_band", bands},
                          {"rt_balance", balance},
                          {"weekdays", {"Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun"}},
                          {"rel_heatmap", heat}});
}

// ---- HTTP -----------------------------------------------------------------

struct HttpServer::Impl {
    const QueryService& service;
    ServerOptions options;
    httplib::Server server;

    Impl(const QueryService& s, ServerOptions o) : service(s), options(std::move(o)) {}
};

HttpServer::HttpServer(const QueryService& service, ServerOptions options)
    : impl_(std::make_unique<Impl>(service, std::move(options))) {
    auto& srv = impl_->server;
    const auto* service_ptr = &impl_->service;
    const auto handler = [service_ptr](const httplib::Request& req, httplib::Response& res) {
        ApiRequest request;
        request.path = req.path;
        request.params.insert(req.params.begin(), req.params.end());
        const auto out = service_ptr->handle(request);
        res.status = out.status;
        for (const auto& [k, v] : out.headers) res.set_header(k, v);
        res.set_content(out.body, out.content_type);
    };
    srv.Get(R"(/api/.*)", handler);
    srv.Options(R"(/api/.*)", [service_ptr](const httplib::Request&, httplib::Response& res) {
        const auto& origin = service_ptr->config().cors_origin;
        if (!origin.empty()) {
            res.set_header("Access-Control-Allow-Origin", origin);
            res.set_header("Access-Control-Allow-Methods", "GET, OPTIONS");
        }
        res.status = 204;
    });
    if (impl_->options.ui_root) {
        if (!srv.set_mount_point("/", impl_->options.ui_root->string())) {
            throw NotFoundError("UI directory " + impl_->options.ui_root->string() + " does not exist");
        }
    }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind() {
    auto& srv = impl_->server;
    if (impl_->options.port == 0) return srv.bind_to_any_port(impl_->options.host);
    return srv.bind_to_port(impl_->options.host, impl_->options.port) ? impl_->options.port : -1;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
    if (impl_->server.is_running()) impl_->server.stop();
}

}  // namespace storywrangler
