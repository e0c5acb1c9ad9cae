#pragma once

// V2X message frame.
//
// Layout, all multi-byte fields big-endian:
//
//   offset  size  field
//        0     4  magic "CV2X"
//        4     1  version (1)
//        5     1  flags (bit 0: handover-affected, analysis replay only)
//        6     2  source_id
//        8     8  seq
//       16    32  t1..t4, signed ns since Unix epoch, 0 = unset
//       48    32  e1..e4, signed ns, offset estimate paired with each stamp
//       80     4  payload length
//       84     n  payload
//     84+n     4  CRC-32 over bytes [0, 84+n)
//
// Total frame size is always 88 + payload length.

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cv2x/error.hpp"
#include "cv2x/rng.hpp"

namespace cv2x {

inline constexpr std::size_t kHeaderSize = 84;
inline constexpr std::size_t kTrailerSize = 4;
inline constexpr std::size_t kFrameOverhead = kHeaderSize + kTrailerSize;
inline constexpr std::size_t kMaxPayload = 10'000'000;
inline constexpr std::array<std::uint8_t, 4> kMagic{0x43, 0x56, 0x32, 0x58};
inline constexpr std::uint8_t kVersion = 1;

namespace frame_flags {
inline constexpr std::uint8_t kHandoverAffected = 0x01;
}

using Bytes = std::vector<std::uint8_t>;

/// Pipeline position of a timestamp / offset pair.
enum class Stage : std::uint8_t {
    SensorSend = 1,      // t1, e1
    RelayReceive = 2,    // t2, e2
    RelaySend = 3,       // t3, e3
    VehicleReceive = 4,  // t4, e4
};

struct V2XMessage {
    std::uint16_t source_id = 0;
    std::uint8_t flags = 0;
    std::uint64_t seq = 0;
    std::int64_t t1 = 0, t2 = 0, t3 = 0, t4 = 0;
    std::int64_t e1 = 0, e2 = 0, e3 = 0, e4 = 0;
    Bytes payload;

    bool operator==(const V2XMessage&) const = default;

    std::int64_t stamp(Stage s) const {
        switch (s) {
            case Stage::SensorSend: return t1;
            case Stage::RelayReceive: return t2;
            case Stage::RelaySend: return t3;
            case Stage::VehicleReceive: return t4;
        }
        return 0;
    }

    std::int64_t offset(Stage s) const {
        switch (s) {
            case Stage::SensorSend: return e1;
            case Stage::RelayReceive: return e2;
            case Stage::RelaySend: return e3;
            case Stage::VehicleReceive: return e4;
        }
        return 0;
    }

    void set_stamp(Stage s, std::int64_t local_ns, std::int64_t offset_ns) {
        switch (s) {
            case Stage::SensorSend: t1 = local_ns; e1 = offset_ns; break;
            case Stage::RelayReceive: t2 = local_ns; e2 = offset_ns; break;
            case Stage::RelaySend: t3 = local_ns; e3 = offset_ns; break;
            case Stage::VehicleReceive: t4 = local_ns; e4 = offset_ns; break;
        }
    }

    std::size_t frame_size() const { return kFrameOverhead + payload.size(); }
};

/// A nonzero later stamp requires every earlier stamp to be nonzero.
inline bool stamps_in_pipeline_order(const V2XMessage& m) {
    const std::array<std::int64_t, 4> t{m.t1, m.t2, m.t3, m.t4};
    bool seen_unset = false;
    for (auto v : t) {
        if (v == 0) {
            seen_unset = true;
        } else if (seen_unset) {
            return false;
        }
    }
    return true;
}

namespace detail {

constexpr std::array<std::uint32_t, 256> make_crc_table() {
    std::array<std::uint32_t, 256> table{};
    for (std::uint32_t i = 0; i < 256; ++i) {
        std::uint32_t c = i;
        for (int k = 0; k < 8; ++k) c = (c & 1U) ? (0xEDB88320U ^ (c >> 1)) : (c >> 1);
        table[i] = c;
    }
    return table;
}

inline constexpr auto kCrcTable = make_crc_table();

inline void put_u16(Bytes& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_u32(Bytes& out, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void put_u64(Bytes& out, std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline std::uint64_t get_be(std::span<const std::uint8_t> in, std::size_t at, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < width; ++i) v = (v << 8) | in[at + i];
    return v;
}

}  // namespace detail

/// CRC-32/IEEE (reflected 0xEDB88320, init and final xor all-ones).
inline std::uint32_t compute_checksum(std::span<const std::uint8_t> bytes) {
    std::uint32_t crc = 0xFFFFFFFFU;
    for (auto b : bytes) crc = detail::kCrcTable[(crc ^ b) & 0xFFU] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFU;
}

inline Bytes encode(const V2XMessage& msg) {
    if (msg.payload.size() > kMaxPayload) {
        throw SizeError("payload of " + std::to_string(msg.payload.size()) + " bytes exceeds limit of " +
                        std::to_string(kMaxPayload));
    }
    if (!stamps_in_pipeline_order(msg)) throw ContractError("timestamps set out of pipeline order");

    Bytes out;
    out.reserve(msg.frame_size());
    out.insert(out.end(), kMagic.begin(), kMagic.end());
    out.push_back(kVersion);
    out.push_back(msg.flags);
    detail::put_u16(out, msg.source_id);
    detail::put_u64(out, msg.seq);
    for (auto t : {msg.t1, msg.t2, msg.t3, msg.t4}) detail::put_u64(out, static_cast<std::uint64_t>(t));
    for (auto e : {msg.e1, msg.e2, msg.e3, msg.e4}) detail::put_u64(out, static_cast<std::uint64_t>(e));
    detail::put_u32(out, static_cast<std::uint32_t>(msg.payload.size()));
    out.insert(out.end(), msg.payload.begin(), msg.payload.end());
    detail::put_u32(out, compute_checksum(out));
    return out;
}

/// Parses and verifies a frame. The checksum is checked before any field is
/// trusted, so every corrupted frame surfaces as CorruptionError.
inline V2XMessage decode(std::span<const std::uint8_t> frame) {
    using detail::get_be;
    if (frame.size() < kFrameOverhead) {
        throw ProtocolError("frame of " + std::to_string(frame.size()) + " bytes is shorter than the " +
                            std::to_string(kFrameOverhead) + "-byte minimum");
    }
    const auto body = frame.first(frame.size() - kTrailerSize);
    const auto stored = static_cast<std::uint32_t>(get_be(frame, body.size(), 4));
    if (compute_checksum(body) != stored) throw CorruptionError("checksum mismatch");

    for (std::size_t i = 0; i < kMagic.size(); ++i) {
        if (frame[i] != kMagic[i]) throw ProtocolError("bad magic");
    }
    if (frame[4] != kVersion) throw ProtocolError("unsupported version " + std::to_string(frame[4]));
    const auto payload_len = get_be(frame, 80, 4);
    if (payload_len > kMaxPayload || kFrameOverhead + payload_len != frame.size()) {
        throw ProtocolError("payload length field " + std::to_string(payload_len) + " disagrees with frame size " +
                            std::to_string(frame.size()));
    }

    V2XMessage m;
    m.flags = frame[5];
    m.source_id = static_cast<std::uint16_t>(get_be(frame, 6, 2));
    m.seq = get_be(frame, 8, 8);
    std::array<std::int64_t*, 8> fields{&m.t1, &m.t2, &m.t3, &m.t4, &m.e1, &m.e2, &m.e3, &m.e4};
    for (std::size_t i = 0; i < fields.size(); ++i) {
        *fields[i] = static_cast<std::int64_t>(get_be(frame, 16 + 8 * i, 8));
    }
    m.payload.assign(frame.begin() + kHeaderSize, frame.begin() + kHeaderSize + static_cast<std::ptrdiff_t>(payload_len));
    if (!stamps_in_pipeline_order(m)) throw ProtocolError("timestamps set out of pipeline order");
    return m;
}

/// Best-effort header read without integrity checks, for labelling corrupt frames.
inline V2XMessage peek_header(std::span<const std::uint8_t> frame) {
    V2XMessage m;
    if (frame.size() < kHeaderSize) return m;
    m.source_id = static_cast<std::uint16_t>(detail::get_be(frame, 6, 2));
    m.seq = detail::get_be(frame, 8, 8);
    return m;
}

/// Deterministic filler so that the encoded frame is exactly `target_frame_size` bytes.
inline Bytes make_padded_payload(std::size_t target_frame_size, std::uint64_t seed, std::uint64_t seq) {
    if (target_frame_size < kFrameOverhead) {
        throw SizeError("target frame size " + std::to_string(target_frame_size) + " is below the " +
                        std::to_string(kFrameOverhead) + "-byte frame overhead");
    }
    const std::size_t n = target_frame_size - kFrameOverhead;
    if (n > kMaxPayload) throw SizeError("target frame size exceeds payload limit");

    Bytes out(n);
    std::uint64_t state = rng::derive_seed(seed, seq);
    for (std::size_t i = 0; i < n; i += 8) {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t word = rng::mix64(state);
        for (std::size_t k = 0; k < 8 && i + k < n; ++k) {
            out[i + k] = static_cast<std::uint8_t>(word);
            word >>= 8;
        }
    }
    return out;
}

}  // namespace cv2x
