#include <gtest/gtest.h>

#include <condition_variable>
#include <mutex>

#include "cv2x/agents.hpp"
#include "cv2x/broker.hpp"

using namespace cv2x;
using namespace cv2x::broker;

namespace {

struct Collector {
    std::mutex mu;
    std::condition_variable cv;
    std::vector<Bytes> frames;

    BrokerClient::Handler handler() {
        return [this](const std::string&, std::span<const std::uint8_t> f) {
            std::scoped_lock lock(mu);
            frames.emplace_back(f.begin(), f.end());
            cv.notify_all();
        };
    }

    bool wait_for(std::size_t n) {
        std::unique_lock lock(mu);
        return cv.wait_for(lock, std::chrono::seconds(10), [&] { return frames.size() >= n; });
    }
};

}  // namespace

TEST(Endpoint, Parse) {
    const auto ep = parse_endpoint("127.0.0.1:4222");
    EXPECT_EQ(ep.host, "127.0.0.1");
    EXPECT_EQ(ep.port, 4222);
    EXPECT_THROW(parse_endpoint("localhost"), ConfigError);
    EXPECT_THROW(parse_endpoint("h:99999"), ConfigError);
}

TEST(Broker, DeliversFramesInOrder) {
    Broker b(parse_endpoint("127.0.0.1:0"));
    Collector got;
    BrokerClient sub(b.endpoint());
    sub.subscribe(agents::uplink_topic().name, got.handler());
    BrokerClient pub(b.endpoint());
    std::vector<Bytes> sent;
    for (std::uint64_t i = 0; i < 100; ++i) {
        V2XMessage m;
        m.seq = i;
        m.payload.assign(100 + i, static_cast<std::uint8_t>(i));
        sent.push_back(encode(m));
        pub.publish(agents::uplink_topic(), sent.back());
    }
    ASSERT_TRUE(got.wait_for(100));
    EXPECT_EQ(got.frames, sent);
}

TEST(Broker, DiscardsFramesWithoutSubscribers) {
    Broker b(parse_endpoint("127.0.0.1:0"));
    BrokerClient pub(b.endpoint());
    const Bytes frame(64, 1);
    for (int i = 0; i < 10; ++i) pub.publish(agents::downlink_topic(), frame);
    pub.sync();
    EXPECT_EQ(b.published(), 10u);
    EXPECT_EQ(b.delivered(), 0u);
}

TEST(Broker, FansOutToEverySubscriber) {
    Broker b(parse_endpoint("127.0.0.1:0"));
    Collector a, c, other;
    BrokerClient s1(b.endpoint()), s2(b.endpoint()), s3(b.endpoint());
    s1.subscribe("v2x.dl", a.handler());
    s2.subscribe("v2x.dl", c.handler());
    s3.subscribe("v2x.ul", other.handler());
    BrokerClient pub(b.endpoint());
    for (int i = 0; i < 20; ++i) pub.publish(agents::downlink_topic(), Bytes(10, static_cast<std::uint8_t>(i)));
    ASSERT_TRUE(a.wait_for(20));
    ASSERT_TRUE(c.wait_for(20));
    EXPECT_EQ(a.frames, c.frames);
    s3.sync();
    EXPECT_TRUE(other.frames.empty());
}

TEST(BrokerClient, ConnectFailureIsIoError) {
    std::uint16_t port = 0;
    {
        Broker b(parse_endpoint("127.0.0.1:0"));
        port = b.endpoint().port;
    }
    RetryPolicy quick{2, std::chrono::milliseconds(1), std::chrono::milliseconds(2)};
    EXPECT_THROW(BrokerClient(Endpoint{"127.0.0.1", port}, quick), IoError);
}
