#pragma once

// Agent clocks, offset estimation and synchronization-corrected latency.
//
// Sign convention: an offset estimate E is ADDED to a local reading to map it
// onto reference time, reference ~= local + E. A clock running 2 ms fast has
// E = -2 ms.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>

#include "cv2x/error.hpp"
#include "cv2x/protocol.hpp"
#include "cv2x/rng.hpp"

namespace cv2x {

inline constexpr std::int64_t kNsPerMs = 1'000'000;
inline constexpr std::int64_t kNsPerSec = 1'000'000'000;

struct ClockParams {
    std::int64_t offset0_ns = 0;
    double drift_ppm = 0.0;
    double jitter_ns = 0.0;  // standard deviation of white reading noise
    std::uint64_t rng_seed = 0;

    bool operator==(const ClockParams&) const = default;
};

/// local(t) = t + offset0 + drift * (t - epoch) + jitter.
///
/// `epoch` is the reference time at which the clock's offset equals offset0;
/// with the default of 0 the law reduces to t + offset0 + drift * t.
class DriftingClock {
public:
    explicit DriftingClock(ClockParams params = {}, std::int64_t epoch_ns = 0)
        : params_(params), epoch_ns_(epoch_ns), rng_(params.rng_seed) {}

    /// Deterministic part of the offset from reference time, without jitter.
    std::int64_t offset_at(std::int64_t reference_ns) const {
        const double drift = params_.drift_ppm * static_cast<double>(reference_ns - epoch_ns_) / 1e6;
        return params_.offset0_ns + std::llround(drift);
    }

    /// One reading. Each call consumes one jitter draw when jitter is enabled.
    std::int64_t local_now(std::int64_t reference_ns) {
        std::int64_t jitter = 0;
        if (params_.jitter_ns > 0.0) jitter = std::llround(params_.jitter_ns * rng_.normal());
        return reference_ns + offset_at(reference_ns) + jitter;
    }

    const ClockParams& params() const noexcept { return params_; }
    std::int64_t epoch_ns() const noexcept { return epoch_ns_; }

private:
    ClockParams params_;
    std::int64_t epoch_ns_;
    rng::Rng rng_;
};

struct OffsetEstimate {
    std::int64_t estimate = 0;     // E, additive to local time
    std::int64_t error_bound = 0;  // half-width of the modelled estimation error
    std::int64_t queried_at = 0;   // reference time of the query

    bool operator==(const OffsetEstimate&) const = default;
};

/// Estimation error is uniform on [-bound_ns, +bound_ns].
struct NoiseModel {
    std::int64_t bound_ns = 0;
};

/// One NTP-style offset query against a simulated clock.
inline OffsetEstimate ntp_query(const DriftingClock& clock, std::int64_t reference_ns, const NoiseModel& noise,
                                rng::Rng& rng) {
    OffsetEstimate est;
    est.estimate = -clock.offset_at(reference_ns);
    if (noise.bound_ns > 0) est.estimate += rng.uniform(-noise.bound_ns, noise.bound_ns);
    est.error_bound = noise.bound_ns;
    est.queried_at = reference_ns;
    return est;
}

/// Source of offset estimates. Implementations must be safe to call
/// concurrently and report monotone `queried_at`.
class OffsetProvider {
public:
    virtual ~OffsetProvider() = default;
    virtual OffsetEstimate current(std::int64_t reference_ns) = 0;
};

/// Stand-in for a host NTP daemon query; reports a zero offset.
class ZeroOffsetProvider final : public OffsetProvider {
public:
    OffsetEstimate current(std::int64_t reference_ns) override {
        std::scoped_lock lock(mu_);
        last_ = std::max(last_, reference_ns);
        return OffsetEstimate{0, 0, last_};
    }

private:
    std::mutex mu_;
    std::int64_t last_ = 0;
};

/// Periodic querying against a simulated clock; the most recent estimate is
/// served between queries. A period of 0 queries on every call.
class SimulatedNtp final : public OffsetProvider {
public:
    SimulatedNtp(const DriftingClock& clock, NoiseModel noise, std::int64_t period_ns, std::uint64_t seed)
        : clock_(&clock), noise_(noise), period_ns_(period_ns), rng_(seed) {}

    OffsetEstimate current(std::int64_t reference_ns) override {
        if (!last_ || period_ns_ <= 0 || reference_ns - last_->queried_at >= period_ns_) {
            last_ = ntp_query(*clock_, reference_ns, noise_, rng_);
        }
        return *last_;
    }

private:
    const DriftingClock* clock_;
    NoiseModel noise_;
    std::int64_t period_ns_;
    rng::Rng rng_;
    std::optional<OffsetEstimate> last_;
};

/// A local reading plus the offset estimate attached to it.
struct Stamp {
    std::int64_t local_ns = 0;
    std::int64_t offset_ns = 0;
};

/// What an agent uses to stamp messages.
class StampSource {
public:
    virtual ~StampSource() = default;
    /// `reference_ns` is the simulated true time; wall-clock sources ignore it.
    virtual Stamp stamp(std::int64_t reference_ns) = 0;
};

class SimStampSource final : public StampSource {
public:
    SimStampSource(ClockParams clock, std::int64_t epoch_ns, NoiseModel noise, std::int64_t ntp_period_ns,
                   std::uint64_t ntp_seed)
        : clock_(clock, epoch_ns), ntp_(clock_, noise, ntp_period_ns, ntp_seed) {}

    SimStampSource(const SimStampSource&) = delete;
    SimStampSource& operator=(const SimStampSource&) = delete;

    Stamp stamp(std::int64_t reference_ns) override {
        const auto local = clock_.local_now(reference_ns);
        return Stamp{local, ntp_.current(reference_ns).estimate};
    }

    const DriftingClock& clock() const noexcept { return clock_; }

private:
    DriftingClock clock_;
    SimulatedNtp ntp_;
};

inline std::int64_t wall_clock_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

/// Host clock with offsets from an OffsetProvider.
class SystemStampSource final : public StampSource {
public:
    explicit SystemStampSource(std::shared_ptr<OffsetProvider> provider = std::make_shared<ZeroOffsetProvider>())
        : provider_(std::move(provider)) {}

    Stamp stamp(std::int64_t) override {
        const auto now = wall_clock_ns();
        return Stamp{now, provider_->current(now).estimate};
    }

private:
    std::shared_ptr<OffsetProvider> provider_;
};

namespace detail {
inline void require_stamps(const V2XMessage& m, Stage a, Stage b, const char* what) {
    if (m.stamp(a) == 0 || m.stamp(b) == 0) throw ContractError(std::string(what) + " requires both stamps to be set");
}
}  // namespace detail

/// (t2 + e2) - (t1 + e1)
inline std::int64_t corrected_latency_ul(const V2XMessage& m) {
    detail::require_stamps(m, Stage::SensorSend, Stage::RelayReceive, "uplink latency");
    return (m.t2 + m.e2) - (m.t1 + m.e1);
}

/// (t4 + e4) - (t3 + e3)
inline std::int64_t corrected_latency_dl(const V2XMessage& m) {
    detail::require_stamps(m, Stage::RelaySend, Stage::VehicleReceive, "downlink latency");
    return (m.t4 + m.e4) - (m.t3 + m.e3);
}

/// (t3 + e3) - (t2 + e2), time spent inside the relay.
inline std::int64_t corrected_processing(const V2XMessage& m) {
    detail::require_stamps(m, Stage::RelayReceive, Stage::RelaySend, "relay processing time");
    return (m.t3 + m.e3) - (m.t2 + m.e2);
}

/// (t4 + e4) - (t1 + e1)
inline std::int64_t corrected_latency_e2e(const V2XMessage& m) {
    detail::require_stamps(m, Stage::SensorSend, Stage::VehicleReceive, "end-to-end latency");
    return (m.t4 + m.e4) - (m.t1 + m.e1);
}

}  // namespace cv2x
