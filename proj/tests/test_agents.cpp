#include <gtest/gtest.h>

#include <map>

#include "cv2x/agents.hpp"

using namespace cv2x;
using namespace cv2x::agents;

namespace {

/// Loopback transport that records every publish by topic.
class Recorder final : public Transport {
public:
    void publish(const Topic& topic, std::span<const std::uint8_t> frame) override {
        frames[topic.name].emplace_back(frame.begin(), frame.end());
    }
    std::map<std::string, std::vector<Bytes>> frames;
};

SimStampSource ideal(std::uint64_t seed) { return SimStampSource(ClockParams{}, 0, NoiseModel{}, 0, seed); }

}  // namespace

TEST(SensorAgent, StampsOnlyFirstStage) {
    auto clock = ideal(1);
    SensorAgent s(7, 1000, 3, clock);
    const auto m = decode(s.next_frame(123));
    EXPECT_EQ(m.source_id, 7);
    EXPECT_EQ(m.seq, 0u);
    EXPECT_EQ(m.t1, 123);
    EXPECT_EQ(m.t2, 0);
    EXPECT_EQ(m.frame_size(), 1000u);
    EXPECT_EQ(decode(s.next_frame(200)).seq, 1u);
    EXPECT_THROW(SensorAgent(1, 87, 0, clock), SizeError);
}

TEST(Agents, RolePurity) {
    auto c1 = ideal(1), c2 = ideal(2), c3 = ideal(3);
    SensorAgent sensor(1, 500, 1, c1);
    RelayAgent relay(c2, ProcessingDelay::constant(0), 1);
    VehicleAgent vehicle(c3);
    Recorder up, down;
    for (int i = 0; i < 20; ++i) sensor.publish_next(up, 1 + i * 100);
    ASSERT_EQ(up.frames.size(), 1u);
    EXPECT_EQ(up.frames.count(uplink_topic().name), 1u);
    for (const auto& f : up.frames[uplink_topic().name]) {
        auto m = relay.receive(f, 5000);
        ASSERT_TRUE(m);
        relay.forward(*m, down, 6000);
    }
    ASSERT_EQ(down.frames.size(), 1u);
    EXPECT_EQ(down.frames.count(downlink_topic().name), 1u);
    for (const auto& f : down.frames[downlink_topic().name]) vehicle.consume(f, 7000, 1);

    EXPECT_EQ(sensor.counters.sent, 20u);
    EXPECT_EQ(sensor.counters.received, 0u);
    EXPECT_EQ(relay.counters.received, 20u);
    EXPECT_EQ(relay.counters.sent, 20u);
    EXPECT_EQ(vehicle.counters.received, 20u);
    EXPECT_EQ(vehicle.counters.sent, 0u);
}

TEST(RelayAgent, DropsCorruptFrames) {
    auto c1 = ideal(1), c2 = ideal(2);
    SensorAgent sensor(1, 300, 1, c1);
    RelayAgent relay(c2, ProcessingDelay::constant(0), 1);
    auto f = sensor.next_frame(1);
    f[100] ^= 0x10;
    EXPECT_FALSE(relay.receive(f, 2));
    EXPECT_FALSE(relay.receive(std::span(f).first(40), 2));
    EXPECT_EQ(relay.dropped_corrupt(), 2u);
}

TEST(RelayAgent, ConstantProcessingDelay) {
    auto c1 = ideal(1), c2 = ideal(2);
    SensorAgent sensor(1, 300, 1, c1);
    RelayAgent relay(c2, ProcessingDelay::constant(5 * kNsPerMs), 1);
    for (int i = 0; i < 50; ++i) {
        const auto rx = 10 * kNsPerMs * (i + 1);
        auto m = relay.receive(sensor.next_frame(rx - kNsPerMs), rx);
        ASSERT_TRUE(m);
        const auto d = relay.sample_processing_delay();
        EXPECT_EQ(d, 5 * kNsPerMs);
        const auto out = decode(relay.forward(*m, rx + d));
        EXPECT_EQ(corrected_processing(out), 5 * kNsPerMs);
        EXPECT_EQ(out.t2, rx);
    }
}

TEST(RelayAgent, UniformProcessingStaysInRange) {
    auto c = ideal(1);
    RelayAgent relay(c, ProcessingDelay::uniform(1000, 2000), 9);
    for (int i = 0; i < 1000; ++i) {
        const auto d = relay.sample_processing_delay();
        ASSERT_GE(d, 1000);
        ASSERT_LE(d, 2000);
    }
}

TEST(VehicleAgent, RecordsCorruptFrames) {
    auto c1 = ideal(1), c3 = ideal(3);
    SensorAgent sensor(4, 300, 1, c1);
    VehicleAgent vehicle(c3);
    auto f = sensor.next_frame(1);
    const auto good = vehicle.consume(f, 10, 2);
    EXPECT_FALSE(good.corrupt);
    EXPECT_EQ(good.t4, 10);
    EXPECT_EQ(good.serving_cell, 2);
    EXPECT_EQ(good.frame_size, 300);
    f[200] ^= 1;
    const auto bad = vehicle.consume(f, 11, 2);
    EXPECT_TRUE(bad.corrupt);
    EXPECT_EQ(bad.source_id, 4);
    EXPECT_EQ(bad.t4, 11);
}
