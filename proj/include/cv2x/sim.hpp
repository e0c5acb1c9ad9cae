#pragma once

// Deterministic discrete-event world: sensor -> UL radio -> relay -> DL radio
// -> vehicle, with background UEs, TCP-style ACK load and handover.
//
// Time advances one TDD period (tick) at a time and, inside it, one symbol at
// a time. Before each symbol every agent event due at or before the symbol
// start is processed; packets enqueued by those events become eligible for
// that symbol. Completed packets are delivered at the symbol end.
//
// Wired delay (`base_delay_ns`) sits between the radio and the relay in both
// directions: UL radio -> wire -> relay, relay -> wire -> DL radio.

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <queue>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cv2x/agents.hpp"
#include "cv2x/clock.hpp"
#include "cv2x/loadgen.hpp"
#include "cv2x/netem/cell.hpp"
#include "cv2x/netem/link.hpp"
#include "cv2x/netem/tdd.hpp"
#include "cv2x/record.hpp"
#include "cv2x/rng.hpp"

namespace cv2x::sim {

using netem::Direction;

inline constexpr std::int64_t kDefaultEpochNs = 1'700'000'000LL * kNsPerSec;

struct AgentClockSetup {
    ClockParams clock{};
    std::int64_t ntp_period_ns = 10 * kNsPerSec;
    std::int64_t ntp_noise_bound_ns = 0;

    bool operator==(const AgentClockSetup&) const = default;
};

inline std::vector<netem::CellConfig> default_cells() {
    return {netem::CellConfig{1, {0.0, 0.0}}, netem::CellConfig{2, {200.0, 0.0}}};
}

struct SimSetup {
    std::uint64_t seed = 1;
    std::int64_t epoch_ns = kDefaultEpochNs;
    std::int64_t duration_ns = 10 * kNsPerSec;
    std::int64_t max_drain_ns = 10 * kNsPerSec;

    // Application stream. A negative start offset draws one from the seed.
    bool app_enabled = true;
    std::uint16_t source_id = 1;
    std::size_t frame_size = 1000;
    double rate_hz = 10.0;
    std::int64_t start_offset_ns = -1;

    netem::TddPattern pattern{};
    std::vector<netem::CellConfig> cells = default_cells();
    netem::SchedulerKind scheduler = netem::SchedulerKind::BL;
    netem::BaselinePolicy bl_policy = netem::BaselinePolicy::SharedFifo;
    std::int64_t base_delay_ns = 2 * kNsPerMs;
    double ack_ratio = 0.05;
    std::int64_t background_queue_cap_bytes = 500'000;
    std::int64_t background_packet_bytes = 1400;
    int sensor_cell = 1;
    int background_cell = 1;

    netem::Position vehicle_position{20.0, 0.0};
    std::optional<netem::MobilityRoute> mobility;  // times relative to the run start
    std::int64_t handover_interruption_ns = 50 * kNsPerMs;
    double handover_hysteresis_m = 5.0;

    std::optional<loadgen::BackgroundLoad> load_ul;
    std::optional<loadgen::BackgroundLoad> load_dl;

    AgentClockSetup sensor_clock{};
    AgentClockSetup relay_clock{};
    AgentClockSetup vehicle_clock{};
    agents::ProcessingDelay processing{};

    bool log_events = false;
};

struct InvariantReport {
    std::uint64_t checks = 0;
    std::uint64_t budget = 0;
    std::uint64_t work_conservation = 0;
    std::uint64_t priority = 0;
    std::uint64_t conservation = 0;
    std::uint64_t queue_cap = 0;
    std::uint64_t reliable_drop = 0;
    std::uint64_t reliable_order = 0;
    std::uint64_t reliable_loss = 0;
    std::uint64_t delivery_in_window = 0;
    std::string first_violation;

    std::uint64_t total() const {
        return budget + work_conservation + priority + conservation + queue_cap + reliable_drop + reliable_order +
               reliable_loss + delivery_in_window;
    }

    void flag(std::uint64_t& counter, const std::string& what) {
        ++counter;
        if (first_violation.empty()) first_violation = what;
    }

    InvariantReport& operator+=(const InvariantReport& o) {
        checks += o.checks;
        budget += o.budget;
        work_conservation += o.work_conservation;
        priority += o.priority;
        conservation += o.conservation;
        queue_cap += o.queue_cap;
        reliable_drop += o.reliable_drop;
        reliable_order += o.reliable_order;
        reliable_loss += o.reliable_loss;
        delivery_in_window += o.delivery_in_window;
        if (first_violation.empty()) first_violation = o.first_violation;
        return *this;
    }
};

struct FlowStats {
    std::string name;
    std::int64_t offered_bits = 0;
    std::int64_t served_bits = 0;
    std::int64_t dropped_bits = 0;
    std::uint64_t dropped_packets = 0;
};

struct SimResult {
    std::vector<PacketRecord> records;
    std::vector<netem::HandoverEvent> handovers;  // absolute reference times
    std::set<std::uint64_t> handover_held_seqs;   // ground truth: DL queue residence overlapped a window
    InvariantReport invariants;
    std::vector<FlowStats> flows;
    std::uint64_t sent = 0;
    std::uint64_t relay_dropped = 0;
    std::uint64_t sensor_received = 0;
    std::uint64_t vehicle_sent = 0;
    std::int64_t end_ns = 0;
};

class World {
public:
    explicit World(SimSetup setup) : setup_(std::move(setup)) { build(); }

    World(const World&) = delete;
    World& operator=(const World&) = delete;

    std::int64_t start_ns() const noexcept { return setup_.epoch_ns; }
    std::int64_t now_ns() const noexcept { return start_ns() + tick_ * period_; }
    std::int64_t tick_ns() const noexcept { return period_; }

    /// Advances whole ticks until the next tick would start at or after
    /// `until_ns` (relative to the run start).
    void step_until(std::int64_t until_ns) {
        while (tick_ * period_ < until_ns) run_tick();
    }

    /// Runs the configured duration, then drains in-flight application
    /// messages with no new background arrivals.
    SimResult run() {
        step_until(setup_.duration_ns);
        const std::int64_t hard_stop = setup_.duration_ns + setup_.max_drain_ns;
        while (records_.size() + relay_->dropped_corrupt() < sent_ && tick_ * period_ < hard_stop) run_tick();
        return finish();
    }

    const std::string& event_log() const noexcept { return log_; }
    const InvariantReport& invariants() const noexcept { return inv_; }
    const std::vector<PacketRecord>& records() const noexcept { return records_; }
    const std::vector<netem::HandoverEvent>& handovers() const noexcept { return handovers_; }

    SimResult finish() {
        check_reliable_completeness();
        SimResult r;
        r.records = records_;
        r.handovers = handovers_;
        r.handover_held_seqs = held_;
        r.invariants = inv_;
        for (const auto& f : flows_) {
            r.flows.push_back(FlowStats{f.spec().name, f.enqueued_bits() + f.dropped_bits(), f.served_bits(),
                                        f.dropped_bits(), f.dropped_packets()});
        }
        r.sent = sent_;
        r.relay_dropped = relay_->dropped_corrupt();
        r.sensor_received = sensor_ ? sensor_->counters.received.load() : 0;
        r.vehicle_sent = vehicle_->counters.sent.load();
        r.end_ns = now_ns();
        return r;
    }

private:
    enum class EvKind : std::uint8_t { SensorSend, RelayReceive, RelayForward, DlEnqueue, VehicleReceive, BgArrival, AckEnqueue };

    struct Event {
        std::int64_t time;
        std::uint64_t seq;
        EvKind kind;
        std::uint32_t flow;
        std::int64_t bits;
        std::uint64_t tag;

        bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
    };

    struct InFlight {
        Bytes frame;
        std::optional<V2XMessage> msg;
        std::uint64_t seq = 0;
        std::int64_t sent_ref = 0;
        std::int64_t relay_rx_ref = 0;
        std::int64_t relay_tx_ref = 0;
        std::int64_t dl_enqueue_ref = 0;
        std::int64_t dl_dequeue_ref = 0;
        int cell = 0;
    };

    /// Routes agent publishes into the emulated link.
    class SimTransport final : public agents::Transport {
    public:
        explicit SimTransport(World& w) : w_(&w) {}
        void publish(const agents::Topic& topic, std::span<const std::uint8_t> frame) override {
            w_->on_publish(topic, frame);
        }

    private:
        World* w_;
    };

    static constexpr std::uint32_t kSensorTerminal = 0;
    static constexpr std::uint32_t kVehicleTerminal = 1;

    void build() {
        setup_.pattern.validate();
        period_ = setup_.pattern.period_ns();
        if (setup_.cells.empty()) throw ContractError("simulation needs at least one cell");
        for (const auto& c : setup_.cells) {
            if (c.ul_capacity_bps <= 0 || c.dl_capacity_bps <= 0) throw ContractError("cell capacities must be positive");
            const auto b = netem::tick_budget(c, setup_.pattern, period_);
            budgets_.push_back(b);
            plans_.emplace_back(setup_.pattern, b.ul_bits, b.dl_bits);
        }

        const auto seed = setup_.seed;
        auto make_clock = [&](const AgentClockSetup& a, std::string_view who) {
            auto params = a.clock;
            params.rng_seed = rng::derive_seed(seed, std::string(who) + ".clock");
            return std::make_unique<SimStampSource>(params, setup_.epoch_ns, NoiseModel{a.ntp_noise_bound_ns},
                                                    a.ntp_period_ns, rng::derive_seed(seed, std::string(who) + ".ntp"));
        };
        sensor_clock_ = make_clock(setup_.sensor_clock, "sensor");
        relay_clock_ = make_clock(setup_.relay_clock, "relay");
        vehicle_clock_ = make_clock(setup_.vehicle_clock, "vehicle");
        relay_ = std::make_unique<agents::RelayAgent>(*relay_clock_, setup_.processing,
                                                      rng::derive_seed(seed, "relay.processing"));
        vehicle_ = std::make_unique<agents::VehicleAgent>(*vehicle_clock_);
        transport_ = std::make_unique<SimTransport>(*this);

        // Terminals and their serving cells.
        timelines_.resize(2);
        timelines_[kSensorTerminal] = netem::ServingTimeline(setup_.sensor_cell, {});
        if (setup_.mobility) {
            std::vector<netem::Waypoint> abs;
            for (auto w : setup_.mobility->waypoints()) {
                w.time_ns += setup_.epoch_ns;
                abs.push_back(w);
            }
            const netem::MobilityRoute route(std::move(abs));
            handovers_ = netem::apply_handover(route, setup_.cells, setup_.handover_hysteresis_m,
                                               setup_.handover_interruption_ns);
            const auto first = netem::nearest_cell(setup_.cells, route.position_at(route.start_ns()));
            timelines_[kVehicleTerminal] = netem::ServingTimeline(setup_.cells[first].cell_id, handovers_);
        } else {
            const auto c = netem::nearest_cell(setup_.cells, setup_.vehicle_position);
            timelines_[kVehicleTerminal] = netem::ServingTimeline(setup_.cells[c].cell_id, {});
        }

        if (setup_.app_enabled) {
            if (setup_.rate_hz <= 0) throw ContractError("message rate must be positive");
            sensor_ = std::make_unique<agents::SensorAgent>(setup_.source_id, setup_.frame_size,
                                                            rng::derive_seed(seed, "sensor.payload"), *sensor_clock_);
            app_ul_ = add_flow({0, Direction::Uplink, netem::TrafficClass::Application, netem::Reliability::Reliable, 0,
                                kSensorTerminal, "app.ul"});
            app_dl_ = add_flow({0, Direction::Downlink, netem::TrafficClass::Application, netem::Reliability::Reliable, 0,
                                kVehicleTerminal, "app.dl"});
            ack_dl_ = add_flow({0, Direction::Downlink, netem::TrafficClass::Application, netem::Reliability::Reliable, 0,
                                kSensorTerminal, "ack.dl"});
            ack_ul_ = add_flow({0, Direction::Uplink, netem::TrafficClass::Application, netem::Reliability::Reliable, 0,
                                kVehicleTerminal, "ack.ul"});

            const double period_s = 1.0 / setup_.rate_hz;
            const auto count = std::llround(setup_.rate_hz * static_cast<double>(setup_.duration_ns) / 1e9);
            std::int64_t offset = setup_.start_offset_ns;
            if (offset < 0) {
                rng::Rng phase(rng::derive_seed(seed, "sensor.phase"));
                offset = phase.uniform(0, std::llround(period_s * 1e9) - 1);
            }
            for (std::int64_t k = 0; k < count; ++k) {
                const auto t = setup_.epoch_ns + offset + std::llround(static_cast<double>(k) * 1e9 / setup_.rate_hz);
                push(t, EvKind::SensorSend, 0, 0, 0);
            }
        }

        auto add_background = [&](const std::optional<loadgen::BackgroundLoad>& load) {
            if (!load) return;
            for (int u = 0; u < load->ue_count; ++u) {
                const auto terminal = static_cast<std::uint32_t>(timelines_.size());
                timelines_.emplace_back(setup_.background_cell, std::vector<netem::HandoverEvent>{});
                const auto name = std::string("bg.") + std::string(netem::to_string(load->direction)) + "." +
                                  std::to_string(u);
                const auto id = add_flow({0, load->direction, netem::TrafficClass::Background,
                                          netem::Reliability::Droppable, setup_.background_queue_cap_bytes, terminal, name});
                const auto pkt = load->packet_size_bytes > 0 ? load->packet_size_bytes : setup_.background_packet_bytes;
                background_.push_back({id, loadgen::CbrSource(load->per_ue_rate_bps, pkt)});
            }
        };
        add_background(setup_.load_ul);
        add_background(setup_.load_dl);

        flow_ptrs_.reserve(flows_.size());
        for (auto& f : flows_) flow_ptrs_.push_back(&f);
    }

    std::uint32_t add_flow(netem::FlowSpec spec) {
        spec.flow_id = static_cast<std::uint32_t>(flows_.size());
        flows_.emplace_back(std::move(spec));
        return flows_.back().spec().flow_id;
    }

    void push(std::int64_t t, EvKind kind, std::uint32_t flow, std::int64_t bits, std::uint64_t tag) {
        events_.push(Event{t, event_seq_++, kind, flow, bits, tag});
    }

    void log(std::int64_t t, const std::string& line) {
        if (!setup_.log_events) return;
        log_ += std::to_string(t - setup_.epoch_ns);
        log_ += ' ';
        log_ += line;
        log_ += '\n';
    }

    void enqueue(std::uint32_t flow, std::int64_t t, std::int64_t bits, std::uint64_t tag) {
        auto& q = flows_[flow];
        const bool ok = q.enqueue(netem::Packet{packet_order_++, t, bits, bits, tag});
        if (!ok && q.spec().reliability == netem::Reliability::Reliable) {
            inv_.flag(inv_.reliable_drop, "reliable flow " + q.spec().name + " dropped a packet");
        }
        if (q.spec().reliability == netem::Reliability::Droppable && q.backlog_bits() > q.spec().queue_cap_bytes * 8) {
            inv_.flag(inv_.queue_cap, "flow " + q.spec().name + " exceeded its queue cap");
        }
    }

    void on_publish(const agents::Topic& topic, std::span<const std::uint8_t> frame) {
        if (topic.direction != Direction::Uplink) return;  // only the sensor publishes through here
        const auto tag = next_tag_++;
        auto& f = inflight_[tag];
        f.frame.assign(frame.begin(), frame.end());
        f.seq = sensor_->next_seq() - 1;
        f.sent_ref = current_event_time_;
        enqueue(app_ul_, current_event_time_, static_cast<std::int64_t>(frame.size()) * 8, tag);
    }

    void handle(const Event& ev) {
        current_event_time_ = ev.time;
        switch (ev.kind) {
            case EvKind::SensorSend: {
                sensor_->publish_next(*transport_, ev.time);
                ++sent_;
                log(ev.time, "send " + std::to_string(sent_ - 1));
                break;
            }
            case EvKind::RelayReceive: {
                auto& f = inflight_.at(ev.tag);
                f.relay_rx_ref = ev.time;
                auto msg = relay_->receive(f.frame, ev.time);
                if (!msg) {
                    log(ev.time, "relay-drop " + std::to_string(f.seq));
                    inflight_.erase(ev.tag);
                    break;
                }
                if (msg->seq != expected_relay_seq_) {
                    inv_.flag(inv_.reliable_order, "relay received seq " + std::to_string(msg->seq) + " out of order");
                }
                expected_relay_seq_ = msg->seq + 1;
                f.msg = std::move(msg);
                log(ev.time, "relay-rx " + std::to_string(f.seq));
                push(ev.time + relay_->sample_processing_delay(), EvKind::RelayForward, 0, 0, ev.tag);
                break;
            }
            case EvKind::RelayForward: {
                auto& f = inflight_.at(ev.tag);
                f.relay_tx_ref = ev.time;
                f.frame = relay_->forward(*f.msg, ev.time);
                relay_->counters.sent.fetch_add(1);
                log(ev.time, "relay-tx " + std::to_string(f.seq));
                push(ev.time + setup_.base_delay_ns, EvKind::DlEnqueue, 0, 0, ev.tag);
                break;
            }
            case EvKind::DlEnqueue: {
                auto& f = inflight_.at(ev.tag);
                f.dl_enqueue_ref = ev.time;
                enqueue(app_dl_, ev.time, static_cast<std::int64_t>(f.frame.size()) * 8, ev.tag);
                break;
            }
            case EvKind::VehicleReceive: {
                auto node = inflight_.extract(ev.tag);
                auto& f = node.mapped();
                auto rec = vehicle_->consume(f.frame, ev.time, f.cell);
                rec.gt_ul_ns = f.relay_rx_ref - f.sent_ref;
                rec.gt_dl_ns = ev.time - f.relay_tx_ref;
                rec.gt_dl_enqueue_ns = f.dl_enqueue_ref;
                rec.gt_dl_dequeue_ns = f.dl_dequeue_ref;
                if (!rec.corrupt) {
                    if (rec.seq != expected_vehicle_seq_) {
                        inv_.flag(inv_.reliable_order, "vehicle received seq " + std::to_string(rec.seq) + " out of order");
                    }
                    expected_vehicle_seq_ = rec.seq + 1;
                }
                for (const auto& h : handovers_) {
                    if (f.dl_enqueue_ref < h.end_ns() && f.dl_dequeue_ref > h.time_ns) held_.insert(rec.seq);
                }
                log(ev.time, "vehicle-rx " + std::to_string(rec.seq) + " cell " + std::to_string(f.cell));
                records_.push_back(rec);
                break;
            }
            case EvKind::BgArrival:
                enqueue(ev.flow, ev.time, ev.bits, 0);
                break;
            case EvKind::AckEnqueue:
                enqueue(ev.flow, ev.time, ev.bits, 0);
                break;
        }
    }

    void drain_events(std::int64_t up_to) {
        while (!events_.empty() && events_.top().time <= up_to) {
            const auto ev = events_.top();
            events_.pop();
            handle(ev);
        }
    }

    std::int64_t ack_bits(std::int64_t forward_bits) const {
        const auto bytes = static_cast<std::int64_t>(std::ceil(setup_.ack_ratio * static_cast<double>(forward_bits / 8)));
        return bytes * 8;
    }

    void on_delivery(const netem::Delivery& d, int cell_id) {
        const auto t = d.time_ns;
        if (d.flow_id == app_ul_) {
            push(t + setup_.base_delay_ns, EvKind::RelayReceive, 0, 0, d.packet.tag);
            if (const auto a = ack_bits(d.packet.size_bits); a > 0) {
                push(t + 2 * setup_.base_delay_ns, EvKind::AckEnqueue, ack_dl_, a, 0);
            }
        } else if (d.flow_id == app_dl_) {
            if (timelines_[kVehicleTerminal].suspended_at(t - 1)) {
                inv_.flag(inv_.delivery_in_window, "vehicle delivery inside a handover window");
            }
            auto& f = inflight_.at(d.packet.tag);
            f.dl_dequeue_ref = t;
            f.cell = cell_id;
            push(t, EvKind::VehicleReceive, 0, 0, d.packet.tag);
            if (const auto a = ack_bits(d.packet.size_bits); a > 0) push(t, EvKind::AckEnqueue, ack_ul_, a, 0);
        }
    }

    void schedule_background(std::int64_t tick_start) {
        if (tick_start - setup_.epoch_ns >= setup_.duration_ns) return;
        for (auto& [flow, source] : background_) {
            const auto n = source.next_tick(period_);
            for (std::int64_t j = 0; j < n; ++j) {
                push(tick_start + (period_ * j) / n, EvKind::BgArrival, flow, source.packet_bits(), 0);
            }
        }
    }

    void run_tick() {
        const std::int64_t tick_start = start_ns() + tick_ * period_;
        log(tick_start, "tick " + std::to_string(tick_));
        schedule_background(tick_start);

        const auto& symbols = plans_.front().symbols();
        std::vector<std::array<std::int64_t, 2>> tick_served(setup_.cells.size(), {0, 0});
        std::vector<netem::FlowQueue*> members;
        std::vector<netem::Delivery> out;

        for (std::size_t s = 0; s < symbols.size(); ++s) {
            const auto& sym0 = symbols[s];
            const std::int64_t t0 = tick_start + sym0.start_ns;
            const std::int64_t t1 = tick_start + sym0.end_ns;
            drain_events(t0);

            for (std::size_t c = 0; c < setup_.cells.size(); ++c) {
                const auto& sym = plans_[c].symbols()[s];
                const int cell_id = setup_.cells[c].cell_id;
                members.clear();
                bool any = false;
                for (auto* f : flow_ptrs_) {
                    const auto& spec = f->spec();
                    if (spec.direction != sym.direction) continue;
                    const auto& tl = timelines_[spec.terminal];
                    if (tl.cell_at(t0) != cell_id) continue;
                    if (tl.suspended_at(t0)) continue;
                    members.push_back(f);
                    any = any || !f->empty();
                }
                if (!any) continue;
                out.clear();
                const auto o = netem::serve_symbol(members, setup_.scheduler, setup_.bl_policy, sym.budget_bits, t0, t1,
                                                   rotation_++, out);
                ++inv_.checks;
                if (o.total_served > sym.budget_bits) inv_.flag(inv_.budget, "symbol served more than its budget");
                if (o.eligible_left > 0 && o.total_served != sym.budget_bits) {
                    inv_.flag(inv_.work_conservation, "eligible backlog left while budget unused");
                }
                if (setup_.scheduler == netem::SchedulerKind::AP && o.background_served > 0 && o.app_eligible_left > 0) {
                    inv_.flag(inv_.priority, "background served while application backlog was eligible");
                }
                tick_served[c][sym.direction == Direction::Uplink ? 0 : 1] += o.total_served;
                for (const auto& d : out) on_delivery(d, cell_id);
            }
        }
        ++tick_;
        check_tick(tick_served);
    }

    void check_tick(const std::vector<std::array<std::int64_t, 2>>& served) {
        for (std::size_t c = 0; c < served.size(); ++c) {
            if (served[c][0] > budgets_[c].ul_bits || served[c][1] > budgets_[c].dl_bits) {
                inv_.flag(inv_.budget, "tick served more than the cell budget");
            }
        }
        for (const auto& f : flows_) {
            const auto offered = f.enqueued_bits() + f.dropped_bits();
            if (offered - f.served_bits() - f.dropped_bits() != f.backlog_bits()) {
                inv_.flag(inv_.conservation, "flow " + f.spec().name + " violates bit conservation");
            }
            if (f.spec().reliability == netem::Reliability::Droppable &&
                f.backlog_bits() > f.spec().queue_cap_bytes * 8) {
                inv_.flag(inv_.queue_cap, "flow " + f.spec().name + " backlog above cap");
            }
            if (f.spec().reliability == netem::Reliability::Reliable && f.dropped_packets() > 0) {
                inv_.flag(inv_.reliable_drop, "reliable flow " + f.spec().name + " has drops");
            }
        }
        inv_.checks += flows_.size();
    }

    void check_reliable_completeness() {
        if (!setup_.app_enabled || completeness_checked_) return;
        completeness_checked_ = true;
        std::uint64_t expected = 0;
        for (const auto& r : records_) {
            if (r.corrupt) continue;
            if (r.seq != expected) break;
            ++expected;
        }
        if (expected != sent_) {
            inv_.flag(inv_.reliable_loss, "delivered " + std::to_string(expected) + " of " + std::to_string(sent_) +
                                              " messages in order");
        }
    }

    SimSetup setup_;
    std::int64_t period_ = 0;
    std::int64_t tick_ = 0;
    std::vector<netem::TickBudget> budgets_;
    std::vector<netem::SymbolPlan> plans_;
    std::vector<netem::ServingTimeline> timelines_;
    std::vector<netem::HandoverEvent> handovers_;
    std::vector<netem::FlowQueue> flows_;
    std::vector<netem::FlowQueue*> flow_ptrs_;
    std::vector<std::pair<std::uint32_t, loadgen::CbrSource>> background_;
    std::uint32_t app_ul_ = 0, app_dl_ = 0, ack_dl_ = 0, ack_ul_ = 0;

    std::unique_ptr<SimStampSource> sensor_clock_, relay_clock_, vehicle_clock_;
    std::unique_ptr<agents::SensorAgent> sensor_;
    std::unique_ptr<agents::RelayAgent> relay_;
    std::unique_ptr<agents::VehicleAgent> vehicle_;
    std::unique_ptr<SimTransport> transport_;

    std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;
    std::uint64_t event_seq_ = 0;
    std::uint64_t packet_order_ = 0;
    std::uint64_t next_tag_ = 1;
    std::unordered_map<std::uint64_t, InFlight> inflight_;
    std::int64_t current_event_time_ = 0;
    std::size_t rotation_ = 0;

    std::vector<PacketRecord> records_;
    std::set<std::uint64_t> held_;
    std::uint64_t sent_ = 0;
    std::uint64_t expected_relay_seq_ = 0;
    std::uint64_t expected_vehicle_seq_ = 0;
    bool completeness_checked_ = false;
    InvariantReport inv_;
    std::string log_;
};

/// Advances `world` to `until_ns` (relative to its start) and returns the event log so far.
inline const std::string& step_simulation(World& world, std::int64_t until_ns) {
    world.step_until(until_ns);
    return world.event_log();
}

}  // namespace cv2x::sim
