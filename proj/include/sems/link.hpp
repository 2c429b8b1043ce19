#pragma once

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "sems/core.hpp"

namespace sems {

// Measurement/set-point exchange: one newline-delimited JSON object per
// message, one in-flight exchange per clock tick.
//   -> {"type":"measurements","t":"<iso8601>","values":{...}}
//   <- {"type":"setpoints","t":"<iso8601>","values":{...}}
// Malformed input gets {"type":"error","reason":"..."} and the connection
// survives. Re-sent measurements for an already-answered t return the cached
// reply unchanged.

struct LinkValues {
    Timestamp t = 0;
    std::map<std::string, double> values;
};

inline std::string encode_link_message(const std::string& type, Timestamp t,
                                       const std::map<std::string, double>& values) {
    nlohmann::ordered_json j;
    j["type"] = type;
    j["t"] = format_iso8601(t);
    j["values"] = values;
    return j.dump() + "\n";
}

inline std::string encode_link_error(const std::string& reason) {
    nlohmann::ordered_json j;
    j["type"] = "error";
    j["reason"] = reason;
    return j.dump() + "\n";
}

struct DecodedLinkMessage {
    std::string type;
    LinkValues payload;
    std::string error_reason;  // set when type == "error"
};

inline DecodedLinkMessage decode_link_message(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error(std::string("link: not valid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || !j["type"].is_string())
        throw std::runtime_error("link: message needs a string 'type'");
    DecodedLinkMessage out;
    out.type = j["type"].get<std::string>();
    if (out.type == "error") {
        out.error_reason = j.value("reason", "");
        return out;
    }
    if (!j.contains("t") || !j["t"].is_string()) throw std::runtime_error("link: message needs an ISO-8601 't'");
    out.payload.t = parse_iso8601(j["t"].get<std::string>());
    if (!j.contains("values") || !j["values"].is_object())
        throw std::runtime_error("link: message needs an object 'values'");
    for (const auto& [k, v] : j["values"].items()) {
        if (!v.is_number()) throw std::runtime_error("link: value '" + k + "' must be a number");
        out.payload.values[k] = v.get<double>();
    }
    return out;
}

struct LinkOptions {
    double timeout_seconds = 10.0;  // idle limit before the server gives up
};

/// Blocking single-connection server for the exchange above. The handler turns
/// one measurement set into one set-point set; replies for a repeated t come
/// from the cache so re-sends are idempotent.
class LinkServer {
public:
    using Handler = std::function<std::map<std::string, double>(Timestamp, const std::map<std::string, double>&)>;

    LinkServer(int port, Handler handler, LinkOptions opt = {})
        : handler_(std::move(handler)), opt_(opt) {
        listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (listen_fd_ < 0) throw std::runtime_error("link: socket() failed");
        int one = 1;
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
        addr.sin_port = htons(static_cast<uint16_t>(port));
        if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            ::close(listen_fd_);
            throw std::runtime_error("link: cannot bind port " + std::to_string(port));
        }
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.sin_port);
        if (::listen(listen_fd_, 1) != 0) {
            ::close(listen_fd_);
            throw std::runtime_error("link: listen() failed");
        }
    }

    ~LinkServer() {
        if (listen_fd_ >= 0) ::close(listen_fd_);
    }

    int port() const { return port_; }
    void stop() { stop_.store(true); }

    /// Serve until the peer disconnects, the idle timeout passes or stop() is
    /// called. Throws on timeout (the run is considered aborted).
    void run() {
        timeval tv{};
        tv.tv_sec = static_cast<long>(opt_.timeout_seconds);
        tv.tv_usec = static_cast<long>((opt_.timeout_seconds - tv.tv_sec) * 1e6);
        ::setsockopt(listen_fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        while (!stop_.load()) {
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) {
                if (stop_.load()) return;
                throw std::runtime_error("link: timed out waiting for a connection");
            }
            ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
            serve_connection(fd);
            ::close(fd);
            if (one_shot_) return;
        }
    }

    void set_one_shot(bool v) { one_shot_ = v; }

private:
    Handler handler_;
    LinkOptions opt_;
    int listen_fd_ = -1;
    int port_ = 0;
    std::atomic<bool> stop_{false};
    bool one_shot_ = true;
    std::optional<Timestamp> last_t_;
    std::string last_reply_;

    void serve_connection(int fd) {
        std::string buffer;
        char chunk[4096];
        while (!stop_.load()) {
            const auto nl = buffer.find('\n');
            if (nl == std::string::npos) {
                const ssize_t got = ::recv(fd, chunk, sizeof chunk, 0);
                if (got == 0) return;  // peer closed
                if (got < 0) {
                    if (stop_.load()) return;
                    throw std::runtime_error("link: timed out waiting for measurements");
                }
                buffer.append(chunk, static_cast<size_t>(got));
                continue;
            }
            const std::string line = buffer.substr(0, nl);
            buffer.erase(0, nl + 1);
            if (line.empty()) continue;
            std::string reply;
            try {
                const auto msg = decode_link_message(line);
                if (msg.type != "measurements") {
                    reply = encode_link_error("expected type 'measurements', got '" + msg.type + "'");
                } else if (last_t_ && msg.payload.t == *last_t_) {
                    reply = last_reply_;  // idempotent re-send
                } else {
                    const auto setpoints = handler_(msg.payload.t, msg.payload.values);
                    reply = encode_link_message("setpoints", msg.payload.t, setpoints);
                    last_t_ = msg.payload.t;
                    last_reply_ = reply;
                }
            } catch (const std::exception& e) {
                reply = encode_link_error(e.what());
            }
            send_all(fd, reply);
        }
    }

    static void send_all(int fd, const std::string& data) {
        size_t sent = 0;
        while (sent < data.size()) {
            const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, 0);
            if (n <= 0) throw std::runtime_error("link: send failed");
            sent += static_cast<size_t>(n);
        }
    }
};

/// Client side of the exchange (the twin end, or a test driver).
class LinkClient {
public:
    LinkClient(const std::string& host, int port, double timeout_seconds = 10.0) {
        fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
        if (fd_ < 0) throw std::runtime_error("link: socket() failed");
        timeval tv{};
        tv.tv_sec = static_cast<long>(timeout_seconds);
        tv.tv_usec = static_cast<long>((timeout_seconds - tv.tv_sec) * 1e6);
        ::setsockopt(fd_, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
        sockaddr_in addr{};
        addr.sin_family = AF_INET;
        addr.sin_port = htons(static_cast<uint16_t>(port));
        if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1)
            throw std::runtime_error("link: bad host '" + host + "'");
        if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            ::close(fd_);
            fd_ = -1;
            throw std::runtime_error("link: cannot connect to " + host + ":" + std::to_string(port));
        }
    }

    ~LinkClient() {
        if (fd_ >= 0) ::close(fd_);
    }

    /// Send raw text (tests exercise malformed payloads through this).
    DecodedLinkMessage exchange_raw(const std::string& line) {
        std::string data = line;
        if (data.empty() || data.back() != '\n') data += "\n";
        size_t sent = 0;
        while (sent < data.size()) {
            const ssize_t n = ::send(fd_, data.data() + sent, data.size() - sent, 0);
            if (n <= 0) throw std::runtime_error("link: send failed");
            sent += static_cast<size_t>(n);
        }
        std::string reply;
        char chunk[4096];
        while (reply.find('\n') == std::string::npos) {
            const ssize_t got = ::recv(fd_, chunk, sizeof chunk, 0);
            if (got <= 0) throw std::runtime_error("link: no reply");
            reply.append(chunk, static_cast<size_t>(got));
        }
        return decode_link_message(reply.substr(0, reply.find('\n')));
    }

    DecodedLinkMessage exchange(Timestamp t, const std::map<std::string, double>& values) {
        return exchange_raw(encode_link_message("measurements", t, values));
    }

private:
    int fd_ = -1;
};

}  // namespace sems
