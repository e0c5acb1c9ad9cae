#include <gtest/gtest.h>

#include <random>

#include "cv2x/clock.hpp"

using namespace cv2x;

TEST(DriftingClock, IdealClockIsIdentity) {
    DriftingClock c;
    EXPECT_EQ(c.local_now(5'000'000), 5'000'000);
    EXPECT_EQ(c.local_now(0), 0);
}

TEST(DriftingClock, AdditiveOffset) {
    DriftingClock c(ClockParams{2 * kNsPerMs, 0, 0, 0});
    EXPECT_EQ(c.local_now(100 * kNsPerMs), 102 * kNsPerMs);
}

TEST(DriftingClock, LinearDrift) {
    DriftingClock c(ClockParams{0, 10.0, 0, 0});
    // 10e-6 * 100 s = 1 ms
    EXPECT_EQ(c.local_now(100 * kNsPerSec), 100 * kNsPerSec + kNsPerMs);
}

TEST(DriftingClock, DriftCountsFromEpoch) {
    const std::int64_t epoch = 1'700'000'000LL * kNsPerSec;
    DriftingClock c(ClockParams{0, 10.0, 0, 0}, epoch);
    EXPECT_EQ(c.local_now(epoch), epoch);
    EXPECT_EQ(c.local_now(epoch + 100 * kNsPerSec), epoch + 100 * kNsPerSec + kNsPerMs);
}

TEST(DriftingClock, JitterIsSeededAndCentred) {
    DriftingClock a(ClockParams{0, 0, 1000.0, 9}), b(ClockParams{0, 0, 1000.0, 9});
    double sum = 0, sq = 0;
    constexpr int n = 20'000;
    for (int i = 0; i < n; ++i) {
        const auto x = a.local_now(0);
        ASSERT_EQ(x, b.local_now(0));
        sum += static_cast<double>(x);
        sq += static_cast<double>(x) * static_cast<double>(x);
    }
    const double mean = sum / n;
    EXPECT_NEAR(mean, 0.0, 30.0);
    EXPECT_NEAR(std::sqrt(sq / n - mean * mean), 1000.0, 30.0);
}

TEST(NtpQuery, SignConvention) {
    DriftingClock c(ClockParams{2 * kNsPerMs, 0, 0, 0});
    rng::Rng r(1);
    const auto est = ntp_query(c, 100 * kNsPerMs, NoiseModel{}, r);
    EXPECT_EQ(est.estimate, -2 * kNsPerMs);
    EXPECT_EQ(c.local_now(100 * kNsPerMs) + est.estimate, 100 * kNsPerMs);
    EXPECT_EQ(est.queried_at, 100 * kNsPerMs);
}

TEST(NtpQuery, IdealClockEstimatesZero) {
    DriftingClock c;
    rng::Rng r(1);
    const auto est = ntp_query(c, 12345, NoiseModel{}, r);
    EXPECT_EQ(est.estimate, 0);
    EXPECT_GE(est.error_bound, 0);
}

TEST(NtpQuery, NoiseStaysWithinBound) {
    DriftingClock c(ClockParams{-7 * kNsPerMs, 33.0, 0, 0});
    rng::Rng r(5);
    const NoiseModel noise{500'000};
    std::int64_t worst = 0;
    for (int i = 0; i < 10'000; ++i) {
        const std::int64_t t = static_cast<std::int64_t>(i) * 997 * kNsPerMs;
        const auto est = ntp_query(c, t, noise, r);
        EXPECT_EQ(est.error_bound, 500'000);
        worst = std::max(worst, std::abs(est.estimate + c.offset_at(t)));
    }
    EXPECT_LE(worst, 500'000);
    EXPECT_GT(worst, 400'000);  // the noise actually spans the interval
}

TEST(SimulatedNtp, CachesBetweenQueries) {
    DriftingClock c(ClockParams{0, 100.0, 0, 0});
    SimulatedNtp ntp(c, NoiseModel{}, 10 * kNsPerSec, 1);
    const auto a = ntp.current(0);
    const auto b = ntp.current(9 * kNsPerSec);
    EXPECT_EQ(a, b);
    const auto d = ntp.current(10 * kNsPerSec);
    EXPECT_EQ(d.queried_at, 10 * kNsPerSec);
    EXPECT_EQ(d.estimate, -kNsPerMs);  // 100 ppm over 10 s
}

TEST(SimulatedNtp, ZeroPeriodQueriesEveryCall) {
    DriftingClock c(ClockParams{0, 100.0, 0, 0});
    SimulatedNtp ntp(c, NoiseModel{}, 0, 1);
    EXPECT_EQ(ntp.current(kNsPerSec).queried_at, kNsPerSec);
    EXPECT_EQ(ntp.current(kNsPerSec + 1).queried_at, kNsPerSec + 1);
}

TEST(ZeroOffsetProvider, MonotoneQueriedAt) {
    ZeroOffsetProvider p;
    EXPECT_EQ(p.current(10).queried_at, 10);
    EXPECT_EQ(p.current(5).queried_at, 10);
    EXPECT_EQ(p.current(20).estimate, 0);
}

namespace {

V2XMessage stamped(std::int64_t t1, std::int64_t e1, std::int64_t t2, std::int64_t e2, std::int64_t t3 = 0,
                   std::int64_t e3 = 0, std::int64_t t4 = 0, std::int64_t e4 = 0) {
    V2XMessage m;
    m.t1 = t1, m.e1 = e1, m.t2 = t2, m.e2 = e2, m.t3 = t3, m.e3 = e3, m.t4 = t4, m.e4 = e4;
    return m;
}

}  // namespace

TEST(CorrectedLatency, Uplink) {
    EXPECT_EQ(corrected_latency_ul(stamped(100 * kNsPerMs, 0, 103 * kNsPerMs, 0)), 3 * kNsPerMs);
    EXPECT_EQ(corrected_latency_ul(stamped(100 * kNsPerMs, -2 * kNsPerMs, 103 * kNsPerMs, 0)), 5 * kNsPerMs);
}

TEST(CorrectedLatency, Downlink) {
    EXPECT_EQ(corrected_latency_dl(stamped(1, 0, 2, 0, 200 * kNsPerMs, 0, 210 * kNsPerMs, 0)), 10 * kNsPerMs);
    EXPECT_EQ(corrected_latency_dl(stamped(1, 0, 2, 0, 200 * kNsPerMs, 0, 211 * kNsPerMs, -kNsPerMs)), 10 * kNsPerMs);
}

TEST(CorrectedLatency, MissingStampsAreContractErrors) {
    V2XMessage m;
    EXPECT_THROW(corrected_latency_ul(m), ContractError);
    m.t1 = 1;
    EXPECT_THROW(corrected_latency_ul(m), ContractError);
    EXPECT_THROW(corrected_latency_dl(stamped(1, 0, 2, 0)), ContractError);
    EXPECT_THROW(corrected_latency_e2e(stamped(1, 0, 2, 0, 3, 0)), ContractError);
}

TEST(CorrectedLatency, TelescopingIdentity) {
    std::mt19937_64 g(3);
    for (int i = 0; i < 1000; ++i) {
        auto r = [&] { return static_cast<std::int64_t>(g() % 1'000'000'000); };
        const auto m = stamped(r(), r() - 500'000'000, r(), r() - 500'000'000, r(), r() - 500'000'000, r(),
                               r() - 500'000'000);
        ASSERT_EQ(corrected_latency_ul(m) + corrected_processing(m) + corrected_latency_dl(m),
                  corrected_latency_e2e(m));
    }
}

TEST(StampSources, PerfectEstimatesRecoverReferenceTime) {
    std::mt19937_64 g(17);
    std::uniform_int_distribution<std::int64_t> off(-50 * kNsPerMs, 50 * kNsPerMs);
    std::uniform_real_distribution<double> drift(-50.0, 50.0);
    for (int i = 0; i < 100; ++i) {
        SimStampSource s(ClockParams{off(g), drift(g), 0, 0}, 0, NoiseModel{}, 0, 1);
        for (std::int64_t t = 0; t < 100 * kNsPerSec; t += 7'777'777'777) {
            const auto st = s.stamp(t);
            ASSERT_EQ(st.local_ns + st.offset_ns, t);
        }
    }
}

TEST(StampSources, UncorrectedReceiverOffsetIsVisible) {
    SimStampSource sender(ClockParams{}, 0, NoiseModel{}, 0, 1);
    SimStampSource receiver(ClockParams{2 * kNsPerMs, 0, 0, 0}, 0, NoiseModel{}, 0, 2);
    for (std::int64_t t = kNsPerSec; t < 2 * kNsPerSec; t += 10 * kNsPerMs) {
        const auto a = sender.stamp(t);
        const auto b = receiver.stamp(t + 3 * kNsPerMs);
        ASSERT_EQ((b.local_ns - a.local_ns) - 3 * kNsPerMs, 2 * kNsPerMs);
        ASSERT_EQ((b.local_ns + b.offset_ns) - (a.local_ns + a.offset_ns), 3 * kNsPerMs);
    }
}

TEST(StampSources, SystemSourceReadsWallClock) {
    SystemStampSource s;
    const auto before = wall_clock_ns();
    const auto st = s.stamp(0);
    EXPECT_GE(st.local_ns, before);
    EXPECT_EQ(st.offset_ns, 0);
}
