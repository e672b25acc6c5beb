#pragma once
// Minimal line-protocol server for tests: binds an ephemeral localhost
// port, answers each JSON request line with handler(request) on a
// background thread.

#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <functional>
#include <stdexcept>
#include <string>
#include <thread>

#include <json.hpp>

namespace testutil {

class LineServer {
public:
    using Handler = std::function<nlohmann::json(const nlohmann::json&)>;

    explicit LineServer(Handler handler) : handler_(std::move(handler)) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw std::runtime_error("socket() failed");
        int yes = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = 0;
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
            throw std::runtime_error("bind() failed");
        socklen_t len = sizeof(addr);
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        ::listen(listen_fd_, 4);
        thread_ = std::thread([this] { serve(); });
    }

    ~LineServer() {
        stopping_ = true;
        ::shutdown(listen_fd_, SHUT_RDWR);
        ::close(listen_fd_);
        if (thread_.joinable()) thread_.join();
    }

    int port() const { return port_; }
    std::string endpoint() const { return "127.0.0.1:" + std::to_string(port_); }

private:
    void serve() {
        while (!stopping_) {
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) return;
            std::string buffer;
            char chunk[4096];
            while (true) {
                const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
                if (n <= 0) break;
                buffer.append(chunk, std::size_t(n));
                std::size_t nl;
                while ((nl = buffer.find('\n')) != std::string::npos) {
                    const std::string line = buffer.substr(0, nl);
                    buffer.erase(0, nl + 1);
                    std::string reply;
                    try {
                        reply = handler_(nlohmann::json::parse(line)).dump();
                    } catch (const std::exception& e) {
                        reply = nlohmann::json{{"error", e.what()}}.dump();
                    }
                    reply += '\n';
                    std::size_t sent = 0;
                    while (sent < reply.size()) {
                        const ssize_t w = ::send(fd, reply.data() + sent, reply.size() - sent, 0);
                        if (w <= 0) break;
                        sent += std::size_t(w);
                    }
                }
            }
            ::close(fd);
        }
    }

    Handler handler_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stopping_{false};
    std::thread thread_;
};

}  // namespace testutil
