#pragma once
// Client for the line-delimited JSON request/response protocol used by
// external scoring and generation services: one JSON object per line out,
// one JSON object per line back, over a TCP stream.

#include <string>

#include <json.hpp>

namespace valsteer {

struct Endpoint {
    std::string host;
    int port = 0;
};

// Parse "host:port".
Endpoint parse_endpoint(const std::string& spec);

// Name of the optional environment variable holding the endpoint for
// both the external scorer and the external backend.
inline constexpr const char* kEndpointEnvVar = "VALSTEER_ENDPOINT";

class LineClient {
public:
    explicit LineClient(const Endpoint& endpoint);
    ~LineClient();

    LineClient(const LineClient&) = delete;
    LineClient& operator=(const LineClient&) = delete;

    nlohmann::json request(const nlohmann::json& body);

private:
    std::string read_line();

    int fd_ = -1;
    std::string buffer_;
};

}  // namespace valsteer
