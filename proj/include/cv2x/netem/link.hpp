#pragma once

// Per-flow queues and the per-symbol schedulers of the emulated radio link.

#include <algorithm>
#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cv2x/error.hpp"
#include "cv2x/netem/cell.hpp"
#include "cv2x/netem/tdd.hpp"

namespace cv2x::netem {

enum class TrafficClass : std::uint8_t { Application, Background };
enum class Reliability : std::uint8_t { Reliable, Droppable };

/// BL: default scheduling without class awareness. AP: Application class strictly first.
enum class SchedulerKind : std::uint8_t { BL, AP };

/// How BL shares a symbol between flows.
///   SharedFifo - one arrival-ordered buffer per cell and direction
///   ByteFair   - max-min fair byte split across backlogged flows
enum class BaselinePolicy : std::uint8_t { SharedFifo, ByteFair };

inline constexpr std::string_view to_string(SchedulerKind k) { return k == SchedulerKind::BL ? "BL" : "AP"; }
inline constexpr std::string_view to_string(BaselinePolicy p) {
    return p == BaselinePolicy::SharedFifo ? "fifo" : "fair";
}

struct FlowSpec {
    std::uint32_t flow_id = 0;
    Direction direction = Direction::Uplink;
    TrafficClass traffic_class = TrafficClass::Application;
    Reliability reliability = Reliability::Reliable;
    std::int64_t queue_cap_bytes = 0;  // Droppable only
    std::uint32_t terminal = 0;
    std::string name;

    void validate() const {
        if (reliability == Reliability::Reliable && traffic_class != TrafficClass::Application) {
            throw ContractError("flow " + name + ": only Application flows may be Reliable");
        }
        if (traffic_class == TrafficClass::Background && reliability != Reliability::Droppable) {
            throw ContractError("flow " + name + ": Background flows must be Droppable");
        }
        if (reliability == Reliability::Droppable && queue_cap_bytes <= 0) {
            throw ContractError("flow " + name + ": Droppable flows need a positive queue cap");
        }
    }
};

struct Packet {
    std::uint64_t order = 0;  // global enqueue order, FIFO tie-break
    std::int64_t arrival_ns = 0;
    std::int64_t size_bits = 0;
    std::int64_t remaining_bits = 0;
    std::uint64_t tag = 0;  // owner-defined handle
};

struct Delivery {
    std::uint32_t flow_id = 0;
    Packet packet;
    std::int64_t time_ns = 0;
};

class FlowQueue {
public:
    explicit FlowQueue(FlowSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

    const FlowSpec& spec() const noexcept { return spec_; }

    /// Appends a packet, or tail-drops it when a Droppable queue would exceed its cap.
    bool enqueue(Packet p) {
        p.remaining_bits = p.size_bits;
        if (spec_.reliability == Reliability::Droppable && (backlog_bits_ + p.size_bits) > spec_.queue_cap_bytes * 8) {
            dropped_bits_ += p.size_bits;
            ++dropped_packets_;
            return false;
        }
        enqueued_bits_ += p.size_bits;
        ++enqueued_packets_;
        backlog_bits_ += p.size_bits;
        packets_.push_back(p);
        return true;
    }

    /// Extends the eligible prefix to packets that arrived at or before `now_ns`.
    void refresh(std::int64_t now_ns) {
        while (eligible_count_ < packets_.size() && packets_[eligible_count_].arrival_ns <= now_ns) {
            eligible_bits_ += packets_[eligible_count_].remaining_bits;
            ++eligible_count_;
        }
    }

    std::int64_t eligible_bits() const noexcept { return eligible_bits_; }
    std::int64_t backlog_bits() const noexcept { return backlog_bits_; }
    bool empty() const noexcept { return packets_.empty(); }
    const Packet* eligible_head() const { return eligible_count_ > 0 ? &packets_.front() : nullptr; }

    /// Serves up to `bits` from the eligible head. Completed packets are
    /// appended to `out` with `delivery_ns`. Returns the bits served.
    std::int64_t serve(std::int64_t bits, std::int64_t delivery_ns, std::vector<Delivery>& out) {
        std::int64_t served = 0;
        while (bits > 0 && eligible_count_ > 0) {
            auto& head = packets_.front();
            const auto take = std::min(bits, head.remaining_bits);
            head.remaining_bits -= take;
            bits -= take;
            served += take;
            if (head.remaining_bits == 0) {
                out.push_back(Delivery{spec_.flow_id, head, delivery_ns});
                packets_.pop_front();
                --eligible_count_;
            }
        }
        eligible_bits_ -= served;
        backlog_bits_ -= served;
        served_bits_ += served;
        return served;
    }

    std::int64_t enqueued_bits() const noexcept { return enqueued_bits_; }
    std::int64_t served_bits() const noexcept { return served_bits_; }
    std::int64_t dropped_bits() const noexcept { return dropped_bits_; }
    std::uint64_t enqueued_packets() const noexcept { return enqueued_packets_; }
    std::uint64_t dropped_packets() const noexcept { return dropped_packets_; }

private:
    FlowSpec spec_;
    std::deque<Packet> packets_;
    std::size_t eligible_count_ = 0;
    std::int64_t eligible_bits_ = 0;
    std::int64_t backlog_bits_ = 0;
    std::int64_t enqueued_bits_ = 0;
    std::int64_t served_bits_ = 0;
    std::int64_t dropped_bits_ = 0;
    std::uint64_t enqueued_packets_ = 0;
    std::uint64_t dropped_packets_ = 0;
};

/// Exact integer max-min fair split of `budget` over `demand`. Indivisible
/// remainder bits go one each to flows in turn starting at `rotation`.
inline std::vector<std::int64_t> fair_share(std::span<const std::int64_t> demand, std::int64_t budget,
                                            std::size_t rotation = 0) {
    std::vector<std::int64_t> alloc(demand.size(), 0);
    std::vector<std::size_t> active;
    for (std::size_t i = 0; i < demand.size(); ++i) {
        if (demand[i] > 0) active.push_back(i);
    }
    while (budget > 0 && !active.empty()) {
        const auto n = static_cast<std::int64_t>(active.size());
        const auto share = budget / n;
        if (share == 0) {
            for (std::int64_t k = 0; k < budget; ++k) alloc[active[(rotation + k) % active.size()]] += 1;
            budget = 0;
            break;
        }
        std::vector<std::size_t> still;
        for (auto i : active) {
            const auto give = std::min(share, demand[i] - alloc[i]);
            alloc[i] += give;
            budget -= give;
            if (alloc[i] < demand[i]) still.push_back(i);
        }
        active.swap(still);
    }
    return alloc;
}

struct SymbolOutcome {
    std::vector<std::int64_t> served_bits;  // aligned with the flow span
    std::int64_t total_served = 0;
    std::int64_t eligible_left = 0;      // eligible backlog after service, all flows
    std::int64_t app_eligible_left = 0;  // same, Application class only
    std::int64_t background_served = 0;
};

namespace detail {

inline void serve_fair(std::span<FlowQueue* const> flows, std::span<const std::size_t> members, std::int64_t& budget,
                       std::size_t rotation, std::int64_t delivery_ns, std::vector<std::int64_t>& served,
                       std::vector<Delivery>& out) {
    std::vector<std::int64_t> demand;
    demand.reserve(members.size());
    for (auto i : members) demand.push_back(flows[i]->eligible_bits());
    const auto alloc = fair_share(demand, budget, rotation);
    for (std::size_t k = 0; k < members.size(); ++k) {
        if (alloc[k] == 0) continue;
        const auto got = flows[members[k]]->serve(alloc[k], delivery_ns, out);
        served[members[k]] += got;
        budget -= got;
    }
}

inline void serve_fifo(std::span<FlowQueue* const> flows, std::span<const std::size_t> members, std::int64_t& budget,
                       std::int64_t delivery_ns, std::vector<std::int64_t>& served, std::vector<Delivery>& out) {
    while (budget > 0) {
        const Packet* best = nullptr;
        std::size_t best_i = 0;
        for (auto i : members) {
            const auto* h = flows[i]->eligible_head();
            if (h && (!best || h->arrival_ns < best->arrival_ns ||
                      (h->arrival_ns == best->arrival_ns && h->order < best->order))) {
                best = h;
                best_i = i;
            }
        }
        if (!best) break;
        const auto got = flows[best_i]->serve(std::min(budget, best->remaining_bits), delivery_ns, out);
        served[best_i] += got;
        budget -= got;
    }
}

}  // namespace detail

/// Serves one symbol's budget over `flows` (all of one cell and direction).
/// Packets are eligible if they arrived at or before `now_ns`; completed
/// packets are delivered at `delivery_ns`.
inline SymbolOutcome serve_symbol(std::span<FlowQueue* const> flows, SchedulerKind kind, BaselinePolicy policy,
                                  std::int64_t budget_bits, std::int64_t now_ns, std::int64_t delivery_ns,
                                  std::size_t rotation, std::vector<Delivery>& out) {
    SymbolOutcome res;
    res.served_bits.assign(flows.size(), 0);
    for (auto* f : flows) f->refresh(now_ns);

    std::int64_t budget = budget_bits;
    std::vector<std::size_t> all, app, background;
    for (std::size_t i = 0; i < flows.size(); ++i) {
        all.push_back(i);
        (flows[i]->spec().traffic_class == TrafficClass::Application ? app : background).push_back(i);
    }

    auto share = [&](std::span<const std::size_t> members) {
        if (policy == BaselinePolicy::SharedFifo) {
            detail::serve_fifo(flows, members, budget, delivery_ns, res.served_bits, out);
        } else {
            detail::serve_fair(flows, members, budget, rotation, delivery_ns, res.served_bits, out);
        }
    };

    if (kind == SchedulerKind::AP) {
        // Strict priority; within the Application class flows share byte-fair.
        detail::serve_fair(flows, app, budget, rotation, delivery_ns, res.served_bits, out);
        detail::serve_fair(flows, background, budget, rotation, delivery_ns, res.served_bits, out);
    } else {
        share(all);
    }

    for (std::size_t i = 0; i < flows.size(); ++i) {
        res.total_served += res.served_bits[i];
        res.eligible_left += flows[i]->eligible_bits();
        if (flows[i]->spec().traffic_class == TrafficClass::Application) {
            res.app_eligible_left += flows[i]->eligible_bits();
        } else {
            res.background_served += res.served_bits[i];
        }
    }
    return res;
}

struct TickOutcome {
    std::vector<std::int64_t> served_bits;  // aligned with the flow span
    std::int64_t ul_served = 0;
    std::int64_t dl_served = 0;
    std::vector<Delivery> deliveries;
};

/// Runs every symbol of one pattern period starting at `tick_start_ns` over
/// the flows of a single cell. Flows are picked per symbol by direction.
inline TickOutcome schedule_tick(std::span<FlowQueue* const> flows, SchedulerKind kind, BaselinePolicy policy,
                                 const TddPattern& pattern, TickBudget budgets, std::int64_t tick_start_ns,
                                 std::size_t rotation = 0) {
    TickOutcome res;
    res.served_bits.assign(flows.size(), 0);
    const SymbolPlan plan(pattern, budgets.ul_bits, budgets.dl_bits);
    std::vector<FlowQueue*> subset;
    std::vector<std::size_t> index;
    for (const auto& sym : plan.symbols()) {
        subset.clear();
        index.clear();
        for (std::size_t i = 0; i < flows.size(); ++i) {
            if (flows[i]->spec().direction == sym.direction) {
                subset.push_back(flows[i]);
                index.push_back(i);
            }
        }
        if (subset.empty()) continue;
        const auto o = serve_symbol(subset, kind, policy, sym.budget_bits, tick_start_ns + sym.start_ns,
                                    tick_start_ns + sym.end_ns, rotation++, res.deliveries);
        for (std::size_t k = 0; k < subset.size(); ++k) res.served_bits[index[k]] += o.served_bits[k];
        (sym.direction == Direction::Uplink ? res.ul_served : res.dl_served) += o.total_served;
    }
    return res;
}

}  // namespace cv2x::netem
