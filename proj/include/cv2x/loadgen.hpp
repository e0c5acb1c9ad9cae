#pragma once

// Background UE traffic: constant-bitrate UDP-style load.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <charconv>
#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "cv2x/error.hpp"
#include "cv2x/netem/tdd.hpp"

namespace cv2x::loadgen {

using netem::Direction;

struct BackgroundLoad {
    int ue_count = 0;
    std::int64_t per_ue_rate_bps = 0;
    Direction direction = Direction::Uplink;
    std::int64_t packet_size_bytes = 1400;

    bool operator==(const BackgroundLoad&) const = default;

    std::int64_t total_rate_bps() const { return ue_count * per_ue_rate_bps; }
};

/// Parses "<ue_count>x<mbps>" (e.g. "2x40", "1x5.5") or "none".
inline std::optional<BackgroundLoad> parse_load(std::string_view text, Direction dir, std::string_view field = "load") {
    if (text == "none") return std::nullopt;
    const auto x = text.find('x');
    auto bad = [&] { return ConfigError(std::string(field), "expected \"<ues>x<mbps>\" or \"none\", got \"" + std::string(text) + "\""); };
    if (x == std::string_view::npos || x == 0 || x + 1 >= text.size()) throw bad();
    int ues = 0;
    const auto* ue_end = text.data() + x;
    if (auto [p, ec] = std::from_chars(text.data(), ue_end, ues); ec != std::errc{} || p != ue_end) throw bad();
    double mbps = 0;
    const auto* rate_end = text.data() + text.size();
    if (auto [p, ec] = std::from_chars(text.data() + x + 1, rate_end, mbps); ec != std::errc{} || p != rate_end) throw bad();
    if (ues < 0 || mbps < 0) throw ConfigError(std::string(field), "UE count and rate must be non-negative");
    BackgroundLoad load;
    load.ue_count = ues;
    load.per_ue_rate_bps = static_cast<std::int64_t>(mbps * 1e6 + 0.5);
    load.direction = dir;
    return load;
}

inline std::string format_load(const std::optional<BackgroundLoad>& load) {
    if (!load) return "none";
    const auto mbps = static_cast<double>(load->per_ue_rate_bps) / 1e6;
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, mbps);
    return std::to_string(load->ue_count) + "x" + std::string(buf, p);
}

/// Mean bits offered per tick by one UE flow of `load` (unquantized).
inline std::int64_t offered_bits(const BackgroundLoad& load, std::int64_t tick_ns) {
    return static_cast<std::int64_t>(static_cast<__int128>(load.per_ue_rate_bps) * tick_ns / 1'000'000'000);
}

/// Constant-bitrate arrivals for one UE, quantized to whole packets with the
/// fractional remainder carried into the next tick.
class CbrSource {
public:
    CbrSource(std::int64_t rate_bps, std::int64_t packet_size_bytes)
        : rate_bps_(rate_bps), packet_bits_(packet_size_bytes * 8) {
        if (packet_size_bytes <= 0) throw ContractError("packet size must be positive");
        if (rate_bps < 0) throw ContractError("rate must be non-negative");
    }

    /// Number of packets that arrive during the next tick of `tick_ns`.
    std::int64_t next_tick(std::int64_t tick_ns) {
        // Accumulated in bit*ns/s units so the carry stays exact.
        carry_ += static_cast<__int128>(rate_bps_) * tick_ns;
        const __int128 unit = static_cast<__int128>(packet_bits_) * 1'000'000'000;
        const auto n = carry_ / unit;
        carry_ -= n * unit;
        return static_cast<std::int64_t>(n);
    }

    std::int64_t packet_bits() const noexcept { return packet_bits_; }

private:
    std::int64_t rate_bps_;
    std::int64_t packet_bits_;
    __int128 carry_ = 0;
};

/// Real-mode UDP blaster paced at a constant bitrate.
struct BlastResult {
    std::uint64_t packets = 0;
    std::uint64_t bytes = 0;
};

inline BlastResult blast_udp(const std::string& host, std::uint16_t port, std::int64_t rate_bps,
                             std::int64_t packet_size_bytes, std::chrono::nanoseconds duration) {
    if (packet_size_bytes <= 0 || rate_bps <= 0) throw ContractError("loadgen needs positive rate and packet size");
    const int fd = ::socket(AF_INET, SOCK_DGRAM, 0);
    if (fd < 0) throw IoError("socket() failed");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
        ::close(fd);
        throw ConfigError("target", "not an IPv4 address: " + host);
    }
    std::vector<char> buf(static_cast<std::size_t>(packet_size_bytes), 0);
    const auto gap = std::chrono::nanoseconds(packet_size_bytes * 8 * 1'000'000'000 / rate_bps);
    BlastResult res;
    const auto start = std::chrono::steady_clock::now();
    for (auto next = start; next - start < duration; next += gap) {
        std::this_thread::sleep_until(next);
        const auto seq = res.packets;
        for (std::size_t i = 0; i < sizeof seq && i < buf.size(); ++i) buf[i] = static_cast<char>(seq >> (8 * i));
        if (::sendto(fd, buf.data(), buf.size(), 0, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) ==
            static_cast<ssize_t>(buf.size())) {
            ++res.packets;
            res.bytes += buf.size();
        }
    }
    ::close(fd);
    return res;
}

}  // namespace cv2x::loadgen
