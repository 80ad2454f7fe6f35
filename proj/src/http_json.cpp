#include "http_json.hpp"

#include "dyadloop/error.hpp"

#include <httplib.h>

namespace dyadloop::detail {

Endpoint parse_endpoint(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ContractError("endpoint URL lacks a scheme: " + url);
    }
    const std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") {
        throw ContractError("unsupported endpoint scheme: " + url);
    }
    const auto path_begin = url.find('/', scheme_end + 3);
    Endpoint ep;
    ep.origin = url.substr(0, path_begin);
    ep.path = path_begin == std::string::npos ? "/" : url.substr(path_begin);
    if (ep.origin.size() <= scheme_end + 3) {
        throw ContractError("endpoint URL lacks a host: " + url);
    }
    return ep;
}

std::string excerpt(const std::string& body, std::size_t max) {
    return body.size() <= max ? body : body.substr(0, max) + "...";
}

nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body, const std::string& bearer_token,
                         std::chrono::milliseconds timeout) {
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    httplib::Headers headers;
    if (!bearer_token.empty()) {
        headers.emplace("Authorization", "Bearer " + bearer_token);
    }
    auto res = client.Post(endpoint.path, headers, body.dump(), "application/json");
    if (!res) {
        throw TransportError("request to " + endpoint.origin + endpoint.path + " failed: " +
                             httplib::to_string(res.error()));
    }
    if (res->status < 200 || res->status >= 300) {
        throw HttpError(res->status, excerpt(res->body));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception&) {
        throw ParseError("response from " + endpoint.origin + endpoint.path + " is not JSON: " + excerpt(res->body));
    }
}

} // namespace dyadloop::detail
