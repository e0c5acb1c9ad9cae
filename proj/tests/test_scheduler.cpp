#include <gtest/gtest.h>

#include <random>

#include "cv2x/netem/link.hpp"

using namespace cv2x::netem;

namespace {

FlowSpec app(std::uint32_t id, Direction d = Direction::Uplink) {
    return {id, d, TrafficClass::Application, Reliability::Reliable, 0, 0, "app" + std::to_string(id)};
}

FlowSpec bg(std::uint32_t id, std::int64_t cap_bytes, Direction d = Direction::Uplink) {
    return {id, d, TrafficClass::Background, Reliability::Droppable, cap_bytes, 0, "bg" + std::to_string(id)};
}

Packet pkt(std::int64_t bits, std::int64_t at = 0, std::uint64_t order = 0) { return {order, at, bits, bits, 0}; }

}  // namespace

TEST(FlowSpec, ReliabilityContract) {
    EXPECT_THROW(FlowQueue(FlowSpec{0, Direction::Uplink, TrafficClass::Background, Reliability::Reliable, 0, 0, "x"}),
                 cv2x::ContractError);
    EXPECT_THROW(FlowQueue(FlowSpec{0, Direction::Uplink, TrafficClass::Background, Reliability::Droppable, 0, 0, "x"}),
                 cv2x::ContractError);
    EXPECT_NO_THROW(FlowQueue(bg(0, 100)));
}

TEST(FlowQueue, TailDropAboveCap) {
    FlowQueue q(bg(0, 1000));  // 8000 bits
    EXPECT_TRUE(q.enqueue(pkt(6000)));
    EXPECT_FALSE(q.enqueue(pkt(3000)));
    EXPECT_TRUE(q.enqueue(pkt(2000)));
    EXPECT_EQ(q.backlog_bits(), 8000);
    EXPECT_EQ(q.dropped_bits(), 3000);
    EXPECT_EQ(q.dropped_packets(), 1u);
}

TEST(FlowQueue, ReliableNeverDrops) {
    FlowQueue q(app(0));
    for (int i = 0; i < 1000; ++i) EXPECT_TRUE(q.enqueue(pkt(1'000'000)));
    EXPECT_EQ(q.dropped_packets(), 0u);
}

TEST(FlowQueue, PartialServiceAndEligibility) {
    FlowQueue q(app(0));
    q.enqueue(pkt(100, 0));
    q.enqueue(pkt(100, 50));
    std::vector<Delivery> out;
    q.refresh(10);
    EXPECT_EQ(q.eligible_bits(), 100);
    EXPECT_EQ(q.serve(60, 99, out), 60);
    EXPECT_TRUE(out.empty());
    EXPECT_EQ(q.serve(1000, 99, out), 40);  // second packet not yet eligible
    ASSERT_EQ(out.size(), 1u);
    EXPECT_EQ(out[0].time_ns, 99);
    q.refresh(50);
    EXPECT_EQ(q.serve(1000, 120, out), 100);
    EXPECT_TRUE(q.empty());
}

TEST(FairShare, MaxMinExact) {
    EXPECT_EQ(fair_share(std::vector<std::int64_t>{16'000, 1'000'000}, 100'000),
              (std::vector<std::int64_t>{16'000, 84'000}));
    EXPECT_EQ(fair_share(std::vector<std::int64_t>{10, 10, 10}, 100), (std::vector<std::int64_t>{10, 10, 10}));
    EXPECT_EQ(fair_share(std::vector<std::int64_t>{100, 100, 100}, 10, 0), (std::vector<std::int64_t>{4, 3, 3}));
    EXPECT_EQ(fair_share(std::vector<std::int64_t>{100, 100, 100}, 10, 1), (std::vector<std::int64_t>{3, 4, 3}));
    EXPECT_EQ(fair_share(std::vector<std::int64_t>{0, 5}, 10), (std::vector<std::int64_t>{0, 5}));
}

TEST(FairShare, MatchesWaterFillingOracle) {
    std::mt19937_64 g(5);
    for (int it = 0; it < 2000; ++it) {
        const auto n = 1 + g() % 6;
        std::vector<std::int64_t> d(n);
        for (auto& x : d) x = static_cast<std::int64_t>(g() % 2000);
        const auto budget = static_cast<std::int64_t>(g() % 6000);
        const auto a = fair_share(d, budget, g() % 7);
        std::int64_t total = 0, dsum = 0;
        for (std::size_t i = 0; i < n; ++i) {
            ASSERT_LE(a[i], d[i]);
            ASSERT_GE(a[i], 0);
            total += a[i];
            dsum += d[i];
        }
        ASSERT_EQ(total, std::min(budget, dsum));
        // Max-min: a flow below its demand gets at least every other flow's share minus one bit.
        for (std::size_t i = 0; i < n; ++i) {
            if (a[i] == d[i]) continue;
            for (std::size_t k = 0; k < n; ++k) ASSERT_GE(a[i] + 1, a[k]);
        }
    }
}

namespace {

struct Link {
    std::vector<FlowQueue> q;
    std::vector<FlowQueue*> ptr;
    explicit Link(std::vector<FlowSpec> specs) {
        for (auto& s : specs) q.emplace_back(std::move(s));
        for (auto& x : q) ptr.push_back(&x);
    }
};

}  // namespace

TEST(ServeSymbol, StrictPriorityExample) {
    Link l({app(0), bg(1, 1'000'000)});
    l.q[0].enqueue(pkt(16'000));
    l.q[1].enqueue(pkt(1'000'000));
    std::vector<Delivery> out;
    const auto o = serve_symbol(l.ptr, SchedulerKind::AP, BaselinePolicy::ByteFair, 100'000, 0, 1, 0, out);
    EXPECT_EQ(o.served_bits, (std::vector<std::int64_t>{16'000, 84'000}));
    EXPECT_EQ(o.app_eligible_left, 0);
}

TEST(ServeSymbol, ByteFairBaselineExample) {
    Link l({app(0), bg(1, 1'000'000)});
    l.q[0].enqueue(pkt(16'000));
    l.q[1].enqueue(pkt(1'000'000));
    std::vector<Delivery> out;
    const auto o = serve_symbol(l.ptr, SchedulerKind::BL, BaselinePolicy::ByteFair, 100'000, 0, 1, 0, out);
    EXPECT_EQ(o.served_bits, (std::vector<std::int64_t>{16'000, 84'000}));
}

TEST(ServeSymbol, ByteFairBaselineSplitsWhenBothSaturate) {
    Link l({app(0), bg(1, 1'000'000)});
    l.q[0].enqueue(pkt(200'000));
    l.q[1].enqueue(pkt(1'000'000));
    std::vector<Delivery> out;
    const auto o = serve_symbol(l.ptr, SchedulerKind::BL, BaselinePolicy::ByteFair, 100'000, 0, 1, 0, out);
    EXPECT_EQ(o.served_bits, (std::vector<std::int64_t>{50'000, 50'000}));
    const auto p = serve_symbol(l.ptr, SchedulerKind::AP, BaselinePolicy::ByteFair, 100'000, 0, 1, 0, out);
    EXPECT_EQ(p.served_bits, (std::vector<std::int64_t>{100'000, 0}));
}

TEST(ServeSymbol, SharedFifoServesInArrivalOrder) {
    Link l({app(0), bg(1, 1'000'000)});
    l.q[1].enqueue(pkt(30'000, 0, 0));
    l.q[0].enqueue(pkt(16'000, 5, 1));
    l.q[1].enqueue(pkt(30'000, 6, 2));
    std::vector<Delivery> out;
    const auto o = serve_symbol(l.ptr, SchedulerKind::BL, BaselinePolicy::SharedFifo, 50'000, 10, 11, 0, out);
    EXPECT_EQ(o.served_bits, (std::vector<std::int64_t>{16'000, 34'000}));
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].flow_id, 1u);
    EXPECT_EQ(out[1].flow_id, 0u);
}

TEST(ServeSymbol, IneligiblePacketsWait) {
    Link l({app(0)});
    l.q[0].enqueue(pkt(100, 20));
    std::vector<Delivery> out;
    const auto o = serve_symbol(l.ptr, SchedulerKind::AP, BaselinePolicy::SharedFifo, 1000, 10, 11, 0, out);
    EXPECT_EQ(o.total_served, 0);
    EXPECT_EQ(o.eligible_left, 0);
}

TEST(ScheduleTick, OverloadBacklogGrowsAtExcessRate) {
    // Two 40 Mbit/s UEs into a 40 Mbit/s uplink: backlog grows by 100 kbit per tick.
    const TddPattern p;
    const auto budget = tick_budget(CellConfig{}, p, p.period_ns());
    Link l({bg(0, 10'000'000), bg(1, 10'000'000)});
    std::int64_t prev_backlog = 0;
    for (int tick = 0; tick < 40; ++tick) {
        const std::int64_t t0 = tick * p.period_ns();
        for (auto& q : l.q) q.enqueue(pkt(100'000, t0));
        const auto r = schedule_tick(l.ptr, SchedulerKind::BL, BaselinePolicy::ByteFair, p, budget, t0);
        EXPECT_EQ(r.ul_served, 100'000);
        EXPECT_EQ(r.served_bits[0], r.served_bits[1]);
        const auto backlog = l.q[0].backlog_bits() + l.q[1].backlog_bits();
        EXPECT_EQ(backlog - prev_backlog, 100'000);
        prev_backlog = backlog;
    }
}

TEST(ScheduleTick, CapEngagesUnderOverload) {
    const TddPattern p;
    const auto budget = tick_budget(CellConfig{}, p, p.period_ns());
    Link l({bg(0, 100'000), bg(1, 100'000)});  // 800 kbit each
    for (int tick = 0; tick < 100; ++tick) {
        const std::int64_t t0 = tick * p.period_ns();
        for (auto& q : l.q) {
            for (int k = 0; k < 9; ++k) q.enqueue(pkt(11'200, t0));
        }
        schedule_tick(l.ptr, SchedulerKind::BL, BaselinePolicy::ByteFair, p, budget, t0);
        for (auto& q : l.q) ASSERT_LE(q.backlog_bits(), 800'000);
    }
    EXPECT_GT(l.q[0].dropped_packets(), 0u);
}

TEST(ScheduleTick, DirectionsUseTheirOwnSymbols) {
    const TddPattern p;
    Link l({app(0, Direction::Uplink), app(1, Direction::Downlink)});
    l.q[0].enqueue(pkt(1'000'000));
    l.q[1].enqueue(pkt(1'000'000));
    const auto r = schedule_tick(l.ptr, SchedulerKind::AP, BaselinePolicy::SharedFifo, p, {100'000, 325'000}, 0);
    EXPECT_EQ(r.ul_served, 100'000);
    EXPECT_EQ(r.dl_served, 325'000);
}
