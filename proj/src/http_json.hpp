#pragma once

// Internal: JSON-over-HTTP POST used by the remote embedding and completion
// clients.

#include <json.hpp>

#include <chrono>
#include <string>

namespace dyadloop::detail {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // begins with '/'
};

/// Throws ContractError for URLs without an http(s) scheme or host.
Endpoint parse_endpoint(const std::string& url);

/// POSTs `body` and returns the parsed response. Throws TransportError when
/// no response arrives, HttpError on non-2xx, ParseError on a non-JSON body.
nlohmann::json post_json(const Endpoint& endpoint, const nlohmann::json& body, const std::string& bearer_token,
                         std::chrono::milliseconds timeout);

/// First `max` bytes of a body, for error messages.
std::string excerpt(const std::string& body, std::size_t max = 256);

} // namespace dyadloop::detail
