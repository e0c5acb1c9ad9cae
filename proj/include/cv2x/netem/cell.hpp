#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cv2x/error.hpp"
#include "cv2x/netem/tdd.hpp"

namespace cv2x::netem {

struct Position {
    double x = 0.0;
    double y = 0.0;

    bool operator==(const Position&) const = default;
};

inline double distance(Position a, Position b) { return std::hypot(a.x - b.x, a.y - b.y); }

struct CellConfig {
    int cell_id = 1;
    Position position{};
    std::int64_t ul_capacity_bps = 40'000'000;
    std::int64_t dl_capacity_bps = 130'000'000;

    bool operator==(const CellConfig&) const = default;
};

struct TickBudget {
    std::int64_t ul_bits = 0;
    std::int64_t dl_bits = 0;

    bool operator==(const TickBudget&) const = default;
};

/// Bits each direction may carry in `tick_ns`. The direction capacities
/// already account for the pattern's DL/UL symbol split.
inline TickBudget tick_budget(const CellConfig& cell, const TddPattern&, std::int64_t tick_ns) {
    auto bits = [&](std::int64_t bps) {
        return static_cast<std::int64_t>(static_cast<__int128>(bps) * tick_ns / 1'000'000'000);
    };
    return TickBudget{bits(cell.ul_capacity_bps), bits(cell.dl_capacity_bps)};
}

struct HandoverEvent {
    std::int64_t time_ns = 0;
    int from_cell = 0;
    int to_cell = 0;
    std::int64_t interruption_ns = 50'000'000;

    bool operator==(const HandoverEvent&) const = default;

    std::int64_t end_ns() const { return time_ns + interruption_ns; }
    bool covers(std::int64_t t) const { return t >= time_ns && t < end_ns(); }
};

struct Waypoint {
    std::int64_t time_ns = 0;
    Position position{};

    bool operator==(const Waypoint&) const = default;
};

/// Piecewise-linear vehicle trajectory. Times are strictly increasing.
class MobilityRoute {
public:
    MobilityRoute() = default;
    explicit MobilityRoute(std::vector<Waypoint> waypoints) : waypoints_(std::move(waypoints)) {
        for (std::size_t i = 1; i < waypoints_.size(); ++i) {
            if (waypoints_[i].time_ns <= waypoints_[i - 1].time_ns) {
                throw ContractError("mobility waypoint times must be strictly increasing");
            }
        }
    }

    bool empty() const noexcept { return waypoints_.empty(); }
    const std::vector<Waypoint>& waypoints() const noexcept { return waypoints_; }
    std::int64_t start_ns() const { return waypoints_.front().time_ns; }
    std::int64_t end_ns() const { return waypoints_.back().time_ns; }

    /// Clamped to the first/last waypoint outside the route's time span.
    Position position_at(std::int64_t t) const {
        if (waypoints_.empty()) throw ContractError("empty mobility route");
        if (t <= waypoints_.front().time_ns) return waypoints_.front().position;
        if (t >= waypoints_.back().time_ns) return waypoints_.back().position;
        auto it = std::upper_bound(waypoints_.begin(), waypoints_.end(), t,
                                   [](std::int64_t v, const Waypoint& w) { return v < w.time_ns; });
        const auto& b = *it;
        const auto& a = *(it - 1);
        const double f = static_cast<double>(t - a.time_ns) / static_cast<double>(b.time_ns - a.time_ns);
        return Position{a.position.x + f * (b.position.x - a.position.x),
                        a.position.y + f * (b.position.y - a.position.y)};
    }

    bool operator==(const MobilityRoute&) const = default;

private:
    std::vector<Waypoint> waypoints_;
};

inline std::size_t nearest_cell(std::span<const CellConfig> cells, Position p) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < cells.size(); ++i) {
        if (distance(cells[i].position, p) < distance(cells[best].position, p)) best = i;
    }
    return best;
}

/// Serving-cell changes along `route`. A switch happens at the first
/// nanosecond where another cell is closer than the serving one by more than
/// `hysteresis_m`. The route is scanned every `sample_ns` and each crossing
/// is refined by bisection.
inline std::vector<HandoverEvent> apply_handover(const MobilityRoute& route, std::span<const CellConfig> cells,
                                                 double hysteresis_m, std::int64_t interruption_ns,
                                                 std::int64_t sample_ns = 1'000'000) {
    if (route.empty()) throw ContractError("apply_handover needs a non-empty route");
    if (cells.size() < 2) throw ContractError("apply_handover needs at least two cells");
    if (sample_ns <= 0) throw ContractError("sample interval must be positive");

    std::vector<HandoverEvent> events;
    std::size_t serving = nearest_cell(cells, route.position_at(route.start_ns()));

    // Candidate cell that beats `serving` by more than the hysteresis at t.
    auto better_cell = [&](std::int64_t t) -> std::optional<std::size_t> {
        const auto p = route.position_at(t);
        const double d_serving = distance(cells[serving].position, p);
        std::optional<std::size_t> best;
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i == serving) continue;
            const double d = distance(cells[i].position, p);
            if (d < d_serving - hysteresis_m && (!best || d < distance(cells[*best].position, p))) best = i;
        }
        return best;
    };

    std::int64_t prev = route.start_ns();
    for (std::int64_t t = route.start_ns() + sample_ns;; t += sample_ns) {
        t = std::min(t, route.end_ns());
        if (better_cell(t)) {
            std::int64_t lo = prev, hi = t;  // condition false at lo, true at hi
            while (hi - lo > 1) {
                const std::int64_t mid = lo + (hi - lo) / 2;
                (better_cell(mid) ? hi : lo) = mid;
            }
            const auto target = *better_cell(hi);
            events.push_back(HandoverEvent{hi, cells[serving].cell_id, cells[target].cell_id, interruption_ns});
            serving = target;
            t = hi;
        }
        prev = t;
        if (t >= route.end_ns()) break;
    }
    return events;
}

/// Serving cell and suspension state of one terminal over time.
class ServingTimeline {
public:
    ServingTimeline() = default;
    ServingTimeline(int initial_cell, std::vector<HandoverEvent> events)
        : initial_cell_(initial_cell), events_(std::move(events)) {}

    int cell_at(std::int64_t t) const {
        int cell = initial_cell_;
        for (const auto& e : events_) {
            if (e.time_ns > t) break;
            cell = e.to_cell;
        }
        return cell;
    }

    bool suspended_at(std::int64_t t) const {
        return std::any_of(events_.begin(), events_.end(), [t](const HandoverEvent& e) { return e.covers(t); });
    }

    const std::vector<HandoverEvent>& events() const noexcept { return events_; }
    int initial_cell() const noexcept { return initial_cell_; }

private:
    int initial_cell_ = 1;
    std::vector<HandoverEvent> events_;
};

}  // namespace cv2x::netem
