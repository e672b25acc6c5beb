#include "valsteer/line_client.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

#include "valsteer/error.hpp"

namespace valsteer {

Endpoint parse_endpoint(const std::string& spec) {
    const auto colon = spec.rfind(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size())
        throw ValidationError("endpoint must look like host:port, got \"" + spec + "\"");
    Endpoint ep;
    ep.host = spec.substr(0, colon);
    try {
        ep.port = std::stoi(spec.substr(colon + 1));
    } catch (const std::exception&) {
        throw ValidationError("bad port in endpoint \"" + spec + "\"");
    }
    if (ep.port <= 0 || ep.port > 65535)
        throw ValidationError("port out of range in endpoint \"" + spec + "\"");
    return ep;
}

LineClient::LineClient(const Endpoint& endpoint) {
    addrinfo hints{};
    hints.ai_family = AF_UNSPEC;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* result = nullptr;
    const std::string port = std::to_string(endpoint.port);
    if (getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &result) != 0 || !result)
        throw IoError("cannot resolve " + endpoint.host + ":" + port);
    int fd = -1;
    for (addrinfo* ai = result; ai; ai = ai->ai_next) {
        fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
        if (fd < 0) continue;
        if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
        ::close(fd);
        fd = -1;
    }
    freeaddrinfo(result);
    if (fd < 0) throw IoError("cannot connect to " + endpoint.host + ":" + port);
    fd_ = fd;
}

LineClient::~LineClient() {
    if (fd_ >= 0) ::close(fd_);
}

std::string LineClient::read_line() {
    while (true) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        char chunk[4096];
        const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
        if (n <= 0) throw ProtocolError("connection closed mid-response");
        buffer_.append(chunk, std::size_t(n));
    }
}

nlohmann::json LineClient::request(const nlohmann::json& body) {
    std::string line = body.dump();
    line += '\n';
    std::size_t sent = 0;
    while (sent < line.size()) {
        const ssize_t n = ::send(fd_, line.data() + sent, line.size() - sent, 0);
        if (n <= 0) throw ProtocolError("connection closed mid-request");
        sent += std::size_t(n);
    }
    const std::string reply = read_line();
    try {
        return nlohmann::json::parse(reply);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("bad JSON in response: ") + e.what());
    }
}

}  // namespace valsteer
