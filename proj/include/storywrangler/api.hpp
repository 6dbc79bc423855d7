#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "storywrangler/store.hpp"

namespace storywrangler {

/// A decoded GET request: path plus query parameters (repeatable keys).
struct ApiRequest {
    std::string path;
    std::multimap<std::string, std::string> params;

    /// Splits "/path?a=1&b=2" and percent-decodes the parameters.
    static ApiRequest from_target(std::string_view target);
};

struct ApiResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::vector<std::pair<std::string, std::string>> headers;
};

struct ApiConfig {
    std::size_t max_body_bytes = 32u << 20;
    std::size_t page_size = 10'000;     // /api/zipf rows per page (upper bound)
    std::size_t max_series = 10;        // n-grams per /api/timeseries request
    std::string cors_origin;            // empty: no CORS header
};

/// Endpoint implementations shared by the HTTP server and the CLI, so the
/// same logical query yields the same body through either. Never writes to
/// the store.
class QueryService {
public:
    explicit QueryService(const Store& store, ApiConfig config = {});

    ApiResponse handle(const ApiRequest& request) const;

    const ApiConfig& config() const noexcept { return config_; }

private:
    ApiResponse languages(const ApiRequest& r) const;
    ApiResponse timeseries(const ApiRequest& r, bool csv) const;
    ApiResponse zipf(const ApiRequest& r) const;
    ApiResponse trending(const ApiRequest& r, bool csv) const;
    ApiResponse contagiogram(const ApiRequest& r) const;

    const Store& store_;
    ApiConfig config_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;                               // 0 picks a free port
    std::optional<std::filesystem::path> ui_root;  // static files served at /
};

/// HTTP/1.1 front end for a QueryService.
class HttpServer {
public:
    HttpServer(const QueryService& service, ServerOptions options);
    ~HttpServer();
    HttpServer(const HttpServer&) = delete;
    HttpServer& operator=(const HttpServer&) = delete;

    /// Binds the socket; returns the bound port or -1.
    int bind();
    /// Serves until stop(). Requires a successful bind().
    void run();
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace storywrangler
