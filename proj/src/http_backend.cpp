#include <httplib.h>

#include "mtf/scorer.hpp"

namespace mtf::scorer {

namespace {

std::pair<std::string, std::string> split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw Error(ErrorCode::InvalidArgument, "endpoint URL needs a scheme: '" + url + "'");
    }
    if (url.compare(0, scheme_end, "http") != 0) {
        throw Error(ErrorCode::InvalidArgument, "only http:// endpoints are supported: '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, ""};
    std::string prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

template <typename Rep, typename Period>
void set_timeouts(httplib::Client& cli, std::chrono::duration<Rep, Period> timeout) {
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
}

}  // namespace

HttpBackend::HttpBackend(ScorerEndpoint endpoint) : endpoint_(std::move(endpoint)) {
    endpoint_.validate();
    std::tie(scheme_host_port_, path_prefix_) = split_url(endpoint_.base_url);
}

HealthInfo HttpBackend::health() {
    httplib::Client cli(scheme_host_port_);
    set_timeouts(cli, endpoint_.timeout);
    if (endpoint_.auth_token) cli.set_bearer_token_auth(*endpoint_.auth_token);
    auto res = cli.Get(path_prefix_ + "/v1/health");
    if (!res) {
        throw Error(ErrorCode::EndpointUnreachable,
                    "GET " + endpoint_.base_url + "/v1/health failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::EndpointUnreachable, "health check returned HTTP " + std::to_string(res->status),
                    {{"status", res->status}});
    }
    try {
        const auto body = json::parse(res->body);
        return {body.at("status").get<std::string>(), body.value("model", std::string{})};
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolError, std::string("malformed health response: ") + e.what());
    }
}

std::vector<ScoreResult> HttpBackend::score(std::span<const ScoreRequest> batch) {
    json requests = json::array();
    Millis timeout = endpoint_.timeout;
    for (const auto& r : batch) {
        requests.push_back(request_to_json(r));
        timeout = std::max(timeout, r.timeout);
    }
    const std::string body = json{{"requests", requests}}.dump();

    httplib::Client cli(scheme_host_port_);
    set_timeouts(cli, timeout);
    if (endpoint_.auth_token) cli.set_bearer_token_auth(*endpoint_.auth_token);
    auto res = cli.Post(path_prefix_ + "/v1/score", body, "application/json");
    if (!res) {
        throw Error(ErrorCode::EndpointUnreachable,
                    "POST " + endpoint_.base_url + "/v1/score failed: " + httplib::to_string(res.error()));
    }
    if (res->status != 200) {
        throw Error(ErrorCode::ProtocolError, "score request returned HTTP " + std::to_string(res->status),
                    {{"status", res->status}, {"body", res->body.substr(0, 200)}});
    }
    json parsed;
    try {
        parsed = json::parse(res->body);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ProtocolError, std::string("score response is not JSON: ") + e.what());
    }
    return results_from_json(parsed);
}

}  // namespace mtf::scorer
