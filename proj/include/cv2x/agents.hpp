#pragma once

// The three ITS agents. Each is a small state machine that stamps and
// (re)encodes frames; the caller supplies reference time so the same code
// runs inside the simulator and on real sockets.

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "cv2x/clock.hpp"
#include "cv2x/error.hpp"
#include "cv2x/netem/tdd.hpp"
#include "cv2x/protocol.hpp"
#include "cv2x/record.hpp"
#include "cv2x/rng.hpp"

namespace cv2x::agents {

enum class AgentKind : std::uint8_t { Sensor, EdgeRelay, Vehicle };

struct Topic {
    std::string name;
    netem::Direction direction;
};

/// Sensor -> relay travels on the uplink topic, relay -> vehicle on the downlink one.
inline const Topic& uplink_topic() {
    static const Topic t{"v2x.ul", netem::Direction::Uplink};
    return t;
}

inline const Topic& downlink_topic() {
    static const Topic t{"v2x.dl", netem::Direction::Downlink};
    return t;
}

struct ProcessingDelay {
    enum class Kind : std::uint8_t { Constant, Uniform };
    Kind kind = Kind::Constant;
    std::int64_t lo_ns = 0;
    std::int64_t hi_ns = 0;  // Uniform only

    bool operator==(const ProcessingDelay&) const = default;

    static ProcessingDelay constant(std::int64_t ns) { return {Kind::Constant, ns, ns}; }
    static ProcessingDelay uniform(std::int64_t lo, std::int64_t hi) { return {Kind::Uniform, lo, hi}; }

    std::int64_t sample(rng::Rng& r) const { return kind == Kind::Constant ? lo_ns : r.uniform(lo_ns, hi_ns); }
};

/// Counters asserted by the role-purity checks.
struct TransportCounters {
    std::atomic<std::uint64_t> sent{0};
    std::atomic<std::uint64_t> received{0};
};

/// Publish side of a transport. Receiving is push-based: the transport calls
/// the agent's handler.
class Transport {
public:
    virtual ~Transport() = default;
    virtual void publish(const Topic& topic, std::span<const std::uint8_t> frame) = 0;
};

class SensorAgent {
public:
    SensorAgent(std::uint16_t source_id, std::size_t frame_size, std::uint64_t payload_seed, StampSource& clock)
        : source_id_(source_id), frame_size_(frame_size), payload_seed_(payload_seed), clock_(&clock) {
        if (frame_size < kFrameOverhead) {
            throw SizeError("message size " + std::to_string(frame_size) + " is below the minimum frame of " +
                            std::to_string(kFrameOverhead) + " bytes");
        }
    }

    /// Builds the next frame, stamping t1 / e1 at `reference_ns`.
    Bytes next_frame(std::int64_t reference_ns) {
        V2XMessage m;
        m.source_id = source_id_;
        m.seq = next_seq_++;
        m.payload = make_padded_payload(frame_size_, payload_seed_, m.seq);
        const auto s = clock_->stamp(reference_ns);
        m.set_stamp(Stage::SensorSend, s.local_ns, s.offset_ns);
        return encode(m);
    }

    void publish_next(Transport& t, std::int64_t reference_ns) {
        auto frame = next_frame(reference_ns);
        t.publish(uplink_topic(), frame);
        counters.sent.fetch_add(1);
    }

    std::uint64_t next_seq() const noexcept { return next_seq_; }

    TransportCounters counters;

private:
    std::uint16_t source_id_;
    std::size_t frame_size_;
    std::uint64_t payload_seed_;
    StampSource* clock_;
    std::uint64_t next_seq_ = 0;
};

/// Edge relay: stamps t2 on receive and t3 on send, then re-encodes (the
/// checksum is recomputed because the stamps changed).
class RelayAgent {
public:
    RelayAgent(StampSource& clock, ProcessingDelay delay, std::uint64_t seed)
        : clock_(&clock), delay_(delay), rng_(seed) {}

    /// Returns the accepted message, or nullopt for a frame that failed validation.
    std::optional<V2XMessage> receive(std::span<const std::uint8_t> frame, std::int64_t reference_ns) {
        counters.received.fetch_add(1);
        V2XMessage m;
        try {
            m = decode(frame);
        } catch (const CorruptionError&) {
            ++dropped_corrupt_;
            return std::nullopt;
        } catch (const ProtocolError&) {
            ++dropped_corrupt_;
            return std::nullopt;
        }
        const auto s = clock_->stamp(reference_ns);
        m.set_stamp(Stage::RelayReceive, s.local_ns, s.offset_ns);
        return m;
    }

    std::int64_t sample_processing_delay() { return delay_.sample(rng_); }

    Bytes forward(V2XMessage& m, std::int64_t reference_ns) {
        const auto s = clock_->stamp(reference_ns);
        m.set_stamp(Stage::RelaySend, s.local_ns, s.offset_ns);
        return encode(m);
    }

    void forward(V2XMessage& m, Transport& t, std::int64_t reference_ns) {
        auto frame = forward(m, reference_ns);
        t.publish(downlink_topic(), frame);
        counters.sent.fetch_add(1);
    }

    std::uint64_t dropped_corrupt() const noexcept { return dropped_corrupt_; }

    TransportCounters counters;

private:
    StampSource* clock_;
    ProcessingDelay delay_;
    rng::Rng rng_;
    std::uint64_t dropped_corrupt_ = 0;
};

/// Consumer: stamps t4 / e4 and turns each frame into a PacketRecord.
class VehicleAgent {
public:
    explicit VehicleAgent(StampSource& clock) : clock_(&clock) {}

    PacketRecord consume(std::span<const std::uint8_t> frame, std::int64_t reference_ns, int serving_cell) {
        counters.received.fetch_add(1);
        const auto s = clock_->stamp(reference_ns);
        try {
            auto m = decode(frame);
            m.set_stamp(Stage::VehicleReceive, s.local_ns, s.offset_ns);
            return PacketRecord::from_message(m, static_cast<std::int64_t>(frame.size()), serving_cell);
        } catch (const Error&) {
            auto r = PacketRecord::from_message(peek_header(frame), static_cast<std::int64_t>(frame.size()), serving_cell);
            r.t4 = s.local_ns;
            r.e4 = s.offset_ns;
            r.corrupt = true;
            return r;
        }
    }

    TransportCounters counters;

private:
    StampSource* clock_;
};

}  // namespace cv2x::agents
