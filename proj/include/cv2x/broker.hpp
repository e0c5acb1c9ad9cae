#pragma once

// Minimal TCP pub-sub broker for real-socket mode.
//
// Every message on the wire is a 4-byte big-endian length N followed by N
// bytes: a command line terminated by '\n', then raw frame bytes (if any).
//
//   SUB <topic>          client -> broker
//   PUB <topic> + frame  client -> broker
//   MSG <topic> + frame  broker -> subscriber
//   PING <token>         client -> broker, answered with PONG <token>
//
// PING is used as a barrier: once PONG arrives every earlier command on that
// connection has been applied. Delivery is at-most-once per subscriber
// connection and FIFO per connection.

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstring>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "cv2x/agents.hpp"
#include "cv2x/error.hpp"
#include "cv2x/protocol.hpp"

namespace cv2x::broker {

inline constexpr std::uint32_t kMaxMessage = kMaxPayload + kFrameOverhead + 1024;

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    ~Socket() { reset(); }

    Socket(Socket&& o) noexcept : fd_(std::exchange(o.fd_, -1)) {}
    Socket& operator=(Socket&& o) noexcept {
        if (this != &o) {
            reset();
            fd_ = std::exchange(o.fd_, -1);
        }
        return *this;
    }
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }

    void shutdown() noexcept {
        if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
    }

    void reset() noexcept {
        if (fd_ >= 0) ::close(fd_);
        fd_ = -1;
    }

private:
    int fd_ = -1;
};

struct Endpoint {
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;

    std::string to_string() const { return host + ":" + std::to_string(port); }
};

inline Endpoint parse_endpoint(std::string_view text) {
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos || colon + 1 >= text.size()) {
        throw ConfigError("connect", "expected host:port, got \"" + std::string(text) + "\"");
    }
    Endpoint e;
    e.host = std::string(text.substr(0, colon));
    if (e.host.empty()) e.host = "127.0.0.1";
    unsigned long port = 0;
    try {
        std::size_t used = 0;
        port = std::stoul(std::string(text.substr(colon + 1)), &used);
        if (used != text.size() - colon - 1) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
        throw ConfigError("connect", "bad port in \"" + std::string(text) + "\"");
    }
    if (port > 65535) throw ConfigError("connect", "port out of range");
    e.port = static_cast<std::uint16_t>(port);
    return e;
}

namespace detail {

inline sockaddr_in resolve(const Endpoint& ep) {
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(ep.port);
    if (::inet_pton(AF_INET, ep.host.c_str(), &addr.sin_addr) == 1) return addr;
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(ep.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
        throw IoError("cannot resolve " + ep.host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    ::freeaddrinfo(res);
    return addr;
}

inline bool write_all(int fd, const std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        const auto w = ::send(fd, data, n, MSG_NOSIGNAL);
        if (w < 0 && errno == EINTR) continue;
        if (w <= 0) return false;
        data += w;
        n -= static_cast<std::size_t>(w);
    }
    return true;
}

inline bool read_exact(int fd, std::uint8_t* data, std::size_t n) {
    while (n > 0) {
        const auto r = ::recv(fd, data, n, 0);
        if (r < 0 && errno == EINTR) continue;
        if (r <= 0) return false;
        data += r;
        n -= static_cast<std::size_t>(r);
    }
    return true;
}

inline void set_nodelay(int fd) {
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace detail

struct WireMessage {
    std::string verb;
    std::string arg;
    Bytes body;
};

inline Bytes pack(std::string_view verb, std::string_view arg, std::span<const std::uint8_t> body = {}) {
    const auto line_len = verb.size() + 1 + arg.size() + 1;
    const auto n = line_len + body.size();
    if (n > kMaxMessage) throw SizeError("broker message too large");
    Bytes out;
    out.reserve(4 + n);
    for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<std::uint8_t>(n >> s));
    out.insert(out.end(), verb.begin(), verb.end());
    out.push_back(' ');
    out.insert(out.end(), arg.begin(), arg.end());
    out.push_back('\n');
    out.insert(out.end(), body.begin(), body.end());
    return out;
}

/// Reads one message. nullopt means the peer closed or sent garbage.
inline std::optional<WireMessage> read_message(int fd) {
    std::uint8_t len_buf[4];
    if (!detail::read_exact(fd, len_buf, 4)) return std::nullopt;
    const std::uint32_t n = (std::uint32_t{len_buf[0]} << 24) | (std::uint32_t{len_buf[1]} << 16) |
                            (std::uint32_t{len_buf[2]} << 8) | std::uint32_t{len_buf[3]};
    if (n == 0 || n > kMaxMessage) return std::nullopt;
    Bytes buf(n);
    if (!detail::read_exact(fd, buf.data(), n)) return std::nullopt;
    const auto nl = std::find(buf.begin(), buf.end(), std::uint8_t{'\n'});
    if (nl == buf.end()) return std::nullopt;
    const std::string line(buf.begin(), nl);
    WireMessage m;
    const auto sp = line.find(' ');
    m.verb = line.substr(0, sp);
    m.arg = sp == std::string::npos ? std::string() : line.substr(sp + 1);
    m.body.assign(nl + 1, buf.end());
    return m;
}

class Broker {
public:
    explicit Broker(Endpoint ep = {}) {
        Socket s(::socket(AF_INET, SOCK_STREAM, 0));
        if (!s.valid()) throw IoError("socket() failed");
        int one = 1;
        ::setsockopt(s.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
        auto addr = detail::resolve(ep);
        if (::bind(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
            throw IoError("cannot bind " + ep.to_string() + ": " + std::strerror(errno));
        }
        if (::listen(s.fd(), 64) != 0) throw IoError("listen() failed");
        socklen_t len = sizeof addr;
        ::getsockname(s.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
        endpoint_ = Endpoint{ep.host, ntohs(addr.sin_port)};
        listener_ = std::move(s);
        acceptor_ = std::thread([this] { accept_loop(); });
    }

    ~Broker() { stop(); }

    Broker(const Broker&) = delete;
    Broker& operator=(const Broker&) = delete;

    const Endpoint& endpoint() const noexcept { return endpoint_; }

    void stop() {
        if (stopped_.exchange(true)) return;
        listener_.shutdown();
        if (acceptor_.joinable()) acceptor_.join();
        std::list<std::shared_ptr<Conn>> conns;
        {
            std::scoped_lock lock(mu_);
            conns = conns_;
        }
        for (auto& c : conns) c->sock.shutdown();
        for (auto& c : conns) {
            if (c->reader.joinable()) c->reader.join();
        }
        std::scoped_lock lock(mu_);
        conns_.clear();
        subs_.clear();
    }

    std::uint64_t published() const noexcept { return published_.load(); }
    std::uint64_t delivered() const noexcept { return delivered_.load(); }

private:
    struct Conn {
        Socket sock;
        std::mutex write_mu;
        std::thread reader;

        bool send(const Bytes& b) {
            std::scoped_lock lock(write_mu);
            return detail::write_all(sock.fd(), b.data(), b.size());
        }
    };

    void accept_loop() {
        while (!stopped_) {
            const int fd = ::accept(listener_.fd(), nullptr, nullptr);
            if (fd < 0) {
                if (errno == EINTR) continue;
                return;
            }
            detail::set_nodelay(fd);
            auto c = std::make_shared<Conn>();
            c->sock = Socket(fd);
            std::scoped_lock lock(mu_);
            if (stopped_) return;
            conns_.push_back(c);
            c->reader = std::thread([this, c] { serve(c); });
        }
    }

    void serve(const std::shared_ptr<Conn>& c) {
        while (auto m = read_message(c->sock.fd())) {
            if (m->verb == "SUB") {
                std::scoped_lock lock(mu_);
                subs_[m->arg].insert(c.get());
            } else if (m->verb == "PUB") {
                ++published_;
                const auto out = pack("MSG", m->arg, m->body);
                std::vector<std::shared_ptr<Conn>> targets;
                {
                    std::scoped_lock lock(mu_);
                    auto it = subs_.find(m->arg);
                    if (it == subs_.end()) continue;
                    for (const auto& conn : conns_) {
                        if (it->second.count(conn.get())) targets.push_back(conn);
                    }
                }
                for (auto& t : targets) {
                    if (t->send(out)) ++delivered_;
                }
            } else if (m->verb == "PING") {
                c->send(pack("PONG", m->arg));
            } else {
                break;
            }
        }
        std::scoped_lock lock(mu_);
        for (auto& [_, set] : subs_) set.erase(c.get());
    }

    Endpoint endpoint_;
    Socket listener_;
    std::thread acceptor_;
    std::atomic<bool> stopped_{false};
    std::mutex mu_;
    std::list<std::shared_ptr<Conn>> conns_;
    std::map<std::string, std::set<Conn*>> subs_;
    std::atomic<std::uint64_t> published_{0};
    std::atomic<std::uint64_t> delivered_{0};
};

struct RetryPolicy {
    int attempts = 20;
    std::chrono::milliseconds initial_backoff{10};
    std::chrono::milliseconds max_backoff{500};
};

/// Broker connection implementing the agents' Transport. Frames for
/// subscribed topics are handed to the handler on the client's reader thread.
/// A lost connection is re-established (with backoff) on the next publish or
/// by the reader, and subscriptions are replayed.
class BrokerClient final : public agents::Transport {
public:
    using Handler = std::function<void(const std::string& topic, std::span<const std::uint8_t> frame)>;

    explicit BrokerClient(Endpoint ep, RetryPolicy retry = {}) : ep_(std::move(ep)), retry_(retry) {
        std::unique_lock lock(mu_);
        connect_locked();
    }

    ~BrokerClient() override { close(); }

    BrokerClient(const BrokerClient&) = delete;
    BrokerClient& operator=(const BrokerClient&) = delete;

    /// Subscribes and waits until the broker has applied the subscription.
    void subscribe(const std::string& topic, Handler handler) {
        {
            std::unique_lock lock(mu_);
            handlers_[topic] = std::move(handler);
            send_locked(pack("SUB", topic));
        }
        sync();
    }

    /// Round-trips a PING so every earlier command has been processed.
    void sync(std::chrono::milliseconds timeout = std::chrono::seconds(5)) {
        std::unique_lock lock(mu_);
        const auto token = std::to_string(++ping_counter_);
        send_locked(pack("PING", token));
        if (!cv_.wait_for(lock, timeout, [&] { return last_pong_ >= ping_counter_ || closed_; })) {
            throw IoError("broker did not answer PING within timeout");
        }
    }

    void publish(const agents::Topic& topic, std::span<const std::uint8_t> frame) override {
        const auto msg = pack("PUB", topic.name, frame);
        std::unique_lock lock(mu_);
        send_locked(msg);
    }

    void close() {
        std::vector<std::thread> threads;
        {
            std::unique_lock lock(mu_);
            if (closed_) return;
            closed_ = true;
            if (sock_) sock_->shutdown();
            cv_.notify_all();
            threads.swap(retired_);
            if (reader_.joinable()) threads.push_back(std::move(reader_));
        }
        for (auto& t : threads) t.join();
    }

    std::uint64_t reconnects() const noexcept { return reconnects_.load(); }

private:
    // Each connection generation has its own reader thread holding a
    // reference to its socket, so a retired reader never sees a reused fd.
    void connect_locked() {
        auto backoff = retry_.initial_backoff;
        auto s = std::make_shared<Socket>();
        for (int attempt = 0;; ++attempt) {
            *s = Socket(::socket(AF_INET, SOCK_STREAM, 0));
            if (!s->valid()) throw IoError("socket() failed");
            auto addr = detail::resolve(ep_);
            if (::connect(s->fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) {
                detail::set_nodelay(s->fd());
                break;
            }
            if (attempt + 1 >= retry_.attempts) {
                throw IoError("cannot connect to broker at " + ep_.to_string() + ": " + std::strerror(errno));
            }
            std::this_thread::sleep_for(backoff);
            backoff = std::min(backoff * 2, retry_.max_backoff);
        }
        if (sock_) sock_->shutdown();
        if (reader_.joinable()) retired_.push_back(std::move(reader_));
        sock_ = s;
        reader_ = std::thread([this, s] { read_loop(s); });
        for (const auto& [topic, _] : handlers_) {
            const auto b = pack("SUB", topic);
            detail::write_all(s->fd(), b.data(), b.size());
        }
    }

    void send_locked(const Bytes& b) {
        if (closed_) throw IoError("broker client is closed");
        auto backoff = retry_.initial_backoff;
        for (int attempt = 0;; ++attempt) {
            if (sock_ && detail::write_all(sock_->fd(), b.data(), b.size())) return;
            if (attempt + 1 >= retry_.attempts) throw IoError("publish to " + ep_.to_string() + " failed");
            std::this_thread::sleep_for(backoff);
            backoff = std::min(backoff * 2, retry_.max_backoff);
            ++reconnects_;
            connect_locked();
        }
    }

    void read_loop(std::shared_ptr<Socket> sock) {
        while (auto m = read_message(sock->fd())) {
            if (m->verb == "MSG") {
                Handler h;
                {
                    std::unique_lock lock(mu_);
                    auto it = handlers_.find(m->arg);
                    if (it != handlers_.end()) h = it->second;
                }
                if (h) h(m->arg, m->body);
            } else if (m->verb == "PONG") {
                std::unique_lock lock(mu_);
                last_pong_ = std::max<std::uint64_t>(last_pong_, std::stoull(m->arg));
                cv_.notify_all();
            }
        }
    }

    Endpoint ep_;
    RetryPolicy retry_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::shared_ptr<Socket> sock_;
    std::thread reader_;
    std::vector<std::thread> retired_;
    std::map<std::string, Handler> handlers_;
    std::uint64_t ping_counter_ = 0;
    std::uint64_t last_pong_ = 0;
    bool closed_ = false;
    std::atomic<std::uint64_t> reconnects_{0};
};

}  // namespace cv2x::broker
