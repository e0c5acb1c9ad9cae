#pragma once

// Scenario configuration (JSON), the single-run driver for both modes, and
// the scenario matrix.
//
// Config files are JSON objects with nested sections. Unknown keys are
// rejected. Every key is optional except `seed` in sim mode (which the
// CV2X_SEED environment variable can supply).

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "cv2x/agents.hpp"
#include "cv2x/analysis.hpp"
#include "cv2x/broker.hpp"
#include "cv2x/clock.hpp"
#include "cv2x/error.hpp"
#include "cv2x/loadgen.hpp"
#include "cv2x/netem/cell.hpp"
#include "cv2x/netem/link.hpp"
#include "cv2x/netem/tdd.hpp"
#include "cv2x/record.hpp"
#include "cv2x/rng.hpp"
#include "cv2x/sim.hpp"

namespace cv2x::scenario {

using nlohmann::json;
using nlohmann::ordered_json;
using netem::Direction;

enum class Mode : std::uint8_t { Sim, RealSocket };

inline constexpr std::string_view to_string(Mode m) { return m == Mode::Sim ? "sim" : "real"; }

struct AgentSetup {
    ClockParams clock{};
    double ntp_period_s = 10.0;
    std::int64_t ntp_noise_bound_ns = 0;

    bool operator==(const AgentSetup&) const = default;
};

struct MessagePreset {
    std::string_view name;
    std::size_t size_bytes;
    double rate_hz;
};

inline constexpr MessagePreset kPresets[] = {{"cpm-etsi", 156, 10.0}};

struct ScenarioConfig {
    std::string name = "scenario";
    Mode mode = Mode::Sim;
    netem::SchedulerKind scheduler = netem::SchedulerKind::BL;
    std::optional<std::uint64_t> seed;
    double duration_s = 10.0;
    analysis::Metric metric = analysis::Metric::EndToEnd;

    // message
    std::string preset;
    std::size_t size_bytes = 1000;
    double rate_hz = 10.0;
    std::uint16_t source_id = 1;
    std::int64_t start_offset_ns = -1;

    // load
    std::optional<loadgen::BackgroundLoad> load_ul;
    std::optional<loadgen::BackgroundLoad> load_dl;
    std::int64_t background_packet_bytes = 1400;
    std::int64_t background_queue_cap_bytes = 500'000;

    // network
    netem::TddPattern pattern{};
    std::vector<netem::CellConfig> cells = sim::default_cells();
    netem::BaselinePolicy bl_policy = netem::BaselinePolicy::SharedFifo;
    double base_delay_ms = 2.0;
    double ack_ratio = 0.05;
    double handover_interruption_ms = 50.0;
    double handover_hysteresis_m = 5.0;
    int sensor_cell = 1;
    int background_cell = 1;
    netem::Position vehicle_position{20.0, 0.0};

    std::optional<netem::MobilityRoute> mobility;

    AgentSetup sensor{}, relay{}, vehicle{};
    agents::ProcessingDelay processing{};

    // real-socket mode
    std::string broker = "embedded";
    double drain_s = 2.0;

    bool operator==(const ScenarioConfig&) const = default;

    std::int64_t duration_ns() const { return std::llround(duration_s * 1e9); }
};

/// Stand-in for the mobility route: 200 m straight from cell 2 to cell 1 at 1 m/s.
inline netem::MobilityRoute default_route() {
    return netem::MobilityRoute({{0, {200.0, 0.0}}, {200 * kNsPerSec, {0.0, 0.0}}});
}

namespace detail {

inline std::string join(const std::string& path, std::string_view key) {
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

/// Strict reader over one JSON object: typed getters record the keys they
/// consume and finish() rejects the rest.
class Fields {
public:
    Fields(const json& j, std::string path) : j_(&j), path_(std::move(path)) {
        if (!j.is_object()) throw ConfigError(path_.empty() ? "<root>" : path_, "expected an object");
    }

    std::string field(std::string_view key) const { return join(path_, key); }

    const json* find(std::string_view key) {
        used_.emplace_back(key);
        auto it = j_->find(std::string(key));
        return it == j_->end() || it->is_null() ? nullptr : &*it;
    }

    bool number(std::string_view key, double& out) {
        const auto* v = find(key);
        if (!v) return false;
        if (!v->is_number()) throw ConfigError(field(key), "expected a number");
        out = v->get<double>();
        return true;
    }

    bool integer(std::string_view key, std::int64_t& out) {
        const auto* v = find(key);
        if (!v) return false;
        if (!v->is_number_integer()) throw ConfigError(field(key), "expected an integer");
        if (v->is_number_unsigned() && v->get<std::uint64_t>() > static_cast<std::uint64_t>(INT64_MAX)) {
            throw ConfigError(field(key), "out of range");
        }
        out = v->get<std::int64_t>();
        return true;
    }

    template <class Int>
    bool bounded(std::string_view key, Int& out, std::int64_t lo, std::int64_t hi) {
        std::int64_t v = 0;
        if (!integer(key, v)) return false;
        if (v < lo || v > hi) {
            throw ConfigError(field(key), "must be in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
        }
        out = static_cast<Int>(v);
        return true;
    }

    bool unsigned64(std::string_view key, std::uint64_t& out) {
        const auto* v = find(key);
        if (!v) return false;
        if (!v->is_number_integer() || (!v->is_number_unsigned() && v->get<std::int64_t>() < 0)) {
            throw ConfigError(field(key), "expected a non-negative integer");
        }
        out = v->get<std::uint64_t>();
        return true;
    }

    bool string(std::string_view key, std::string& out) {
        const auto* v = find(key);
        if (!v) return false;
        if (!v->is_string()) throw ConfigError(field(key), "expected a string");
        out = v->get<std::string>();
        return true;
    }

    std::optional<Fields> object(std::string_view key) {
        const auto* v = find(key);
        if (!v) return std::nullopt;
        return Fields(*v, field(key));
    }

    void finish() const {
        for (const auto& [key, _] : j_->items()) {
            if (std::find(used_.begin(), used_.end(), key) == used_.end()) {
                throw ConfigError(field(key), "unknown key");
            }
        }
    }

private:
    const json* j_;
    std::string path_;
    std::vector<std::string> used_;
};

inline void require(bool ok, const std::string& field, const std::string& what) {
    if (!ok) throw ConfigError(field, what);
}

inline void read_agent(Fields& f, AgentSetup& a) {
    if (auto c = f.object("clock")) {
        c->integer("offset0_ns", a.clock.offset0_ns);
        c->number("drift_ppm", a.clock.drift_ppm);
        c->number("jitter_ns", a.clock.jitter_ns);
        require(a.clock.jitter_ns >= 0, c->field("jitter_ns"), "must be non-negative");
        c->finish();
    }
    if (auto n = f.object("ntp")) {
        n->number("period_s", a.ntp_period_s);
        require(a.ntp_period_s >= 0, n->field("period_s"), "must be non-negative");
        n->integer("noise_bound_ns", a.ntp_noise_bound_ns);
        require(a.ntp_noise_bound_ns >= 0, n->field("noise_bound_ns"), "must be non-negative");
        n->finish();
    }
}

inline ordered_json agent_json(const AgentSetup& a) {
    ordered_json j;
    j["clock"] = {{"offset0_ns", a.clock.offset0_ns}, {"drift_ppm", a.clock.drift_ppm}, {"jitter_ns", a.clock.jitter_ns}};
    j["ntp"] = {{"period_s", a.ntp_period_s}, {"noise_bound_ns", a.ntp_noise_bound_ns}};
    return j;
}

inline netem::SchedulerKind parse_scheduler(const std::string& s, const std::string& field) {
    if (s == "BL") return netem::SchedulerKind::BL;
    if (s == "AP") return netem::SchedulerKind::AP;
    throw ConfigError(field, "expected \"BL\" or \"AP\", got \"" + s + "\"");
}

}  // namespace detail

inline void apply_env_overrides(ScenarioConfig& cfg) {
    const char* env = std::getenv("CV2X_SEED");
    if (!env || !*env) return;
    std::uint64_t v = 0;
    const std::string_view s(env);
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) {
        throw ConfigError("CV2X_SEED", "expected an unsigned integer, got \"" + std::string(s) + "\"");
    }
    cfg.seed = v;
}

inline void validate(const ScenarioConfig& c) {
    using detail::require;
    require(!c.name.empty(), "name", "must not be empty");
    if (c.mode == Mode::Sim) require(c.seed.has_value(), "seed", "required in sim mode");
    require(c.duration_s > 0, "duration_s", "must be positive");
    require(c.rate_hz > 0, "message.rate_hz", "must be positive");
    require(c.size_bytes >= kFrameOverhead, "message.size_bytes",
            "must be at least the " + std::to_string(kFrameOverhead) + "-byte frame overhead");
    require(c.size_bytes <= kMaxPayload + kFrameOverhead, "message.size_bytes", "exceeds the maximum frame");
    require(c.background_packet_bytes > 0, "load.packet_size_bytes", "must be positive");
    require(c.background_queue_cap_bytes > 0, "load.queue_cap_bytes", "must be positive");
    c.pattern.validate();
    require(!c.cells.empty(), "network.cells", "at least one cell is required");
    for (const auto& cell : c.cells) {
        require(cell.ul_capacity_bps > 0 && cell.dl_capacity_bps > 0, "network.cells", "capacities must be positive");
    }
    for (std::size_t i = 0; i < c.cells.size(); ++i) {
        for (std::size_t k = i + 1; k < c.cells.size(); ++k) {
            require(c.cells[i].cell_id != c.cells[k].cell_id, "network.cells", "duplicate cell id");
        }
    }
    auto known = [&](int id) {
        return std::any_of(c.cells.begin(), c.cells.end(), [id](const netem::CellConfig& x) { return x.cell_id == id; });
    };
    require(known(c.sensor_cell), "network.sensor_cell", "not a configured cell");
    require(known(c.background_cell), "network.background_cell", "not a configured cell");
    require(c.base_delay_ms >= 0, "network.base_delay_ms", "must be non-negative");
    require(c.ack_ratio >= 0, "network.ack_ratio", "must be non-negative");
    require(c.handover_interruption_ms >= 0, "network.handover.interruption_ms", "must be non-negative");
    require(c.handover_hysteresis_m >= 0, "network.handover.hysteresis_m", "must be non-negative");
    if (c.mobility) {
        require(!c.mobility->empty(), "mobility.waypoints", "route needs at least one waypoint");
        require(c.cells.size() >= 2, "mobility", "handover needs at least two cells");
    }
    require(c.processing.lo_ns >= 0 && c.processing.hi_ns >= c.processing.lo_ns, "agents.relay.processing",
            "need 0 <= lo <= hi");
    require(c.drain_s >= 0, "real.drain_s", "must be non-negative");
}

inline ScenarioConfig config_from_json(const json& root) {
    ScenarioConfig c;
    detail::Fields f(root, "");
    f.string("name", c.name);

    std::string text;
    if (f.string("mode", text)) {
        if (text == "sim") c.mode = Mode::Sim;
        else if (text == "real") c.mode = Mode::RealSocket;
        else throw ConfigError("mode", "expected \"sim\" or \"real\", got \"" + text + "\"");
    }
    std::optional<netem::SchedulerKind> top_scheduler;
    if (f.string("scheduler", text)) top_scheduler = detail::parse_scheduler(text, "scheduler");
    std::uint64_t seed = 0;
    if (f.unsigned64("seed", seed)) c.seed = seed;
    f.number("duration_s", c.duration_s);
    if (f.string("metric", text)) {
        try {
            c.metric = analysis::parse_metric(text);
        } catch (const ConfigError& e) {
            throw ConfigError("metric", e.what());
        }
    }

    if (auto m = f.object("message")) {
        const bool has_preset = m->string("preset", c.preset);
        std::size_t size = 0;
        double rate = 0;
        const bool has_size = m->bounded("size_bytes", size, 0, INT64_MAX);
        const bool has_rate = m->number("rate_hz", rate);
        if (has_preset) {
            const auto* p = std::find_if(std::begin(kPresets), std::end(kPresets),
                                         [&](const MessagePreset& x) { return x.name == c.preset; });
            if (p == std::end(kPresets)) throw ConfigError(m->field("preset"), "unknown preset \"" + c.preset + "\"");
            c.size_bytes = p->size_bytes;
            c.rate_hz = p->rate_hz;
            if ((has_size && size != p->size_bytes) || (has_rate && rate != p->rate_hz)) {
                throw ConfigError(m->field("preset"), "conflicts with explicit size_bytes / rate_hz");
            }
        } else {
            if (has_size) c.size_bytes = size;
            if (has_rate) c.rate_hz = rate;
        }
        m->bounded("source_id", c.source_id, 0, 0xFFFF);
        m->integer("start_offset_ns", c.start_offset_ns);
        m->finish();
    }

    if (auto l = f.object("load")) {
        if (l->string("ul", text)) c.load_ul = loadgen::parse_load(text, Direction::Uplink, "load.ul");
        if (l->string("dl", text)) c.load_dl = loadgen::parse_load(text, Direction::Downlink, "load.dl");
        l->integer("packet_size_bytes", c.background_packet_bytes);
        l->integer("queue_cap_bytes", c.background_queue_cap_bytes);
        l->finish();
    }
    for (auto* load : {&c.load_ul, &c.load_dl}) {
        if (*load) (*load)->packet_size_bytes = c.background_packet_bytes;
    }

    if (auto n = f.object("network")) {
        if (n->string("scheduler", text)) {
            const auto k = detail::parse_scheduler(text, "network.scheduler");
            if (top_scheduler && *top_scheduler != k) throw ConfigError("network.scheduler", "conflicts with scheduler");
            top_scheduler = k;
        }
        if (n->string("pattern", text)) c.pattern.slots = netem::TddPattern::parse_slots(text);
        n->integer("slot_duration_ns", c.pattern.slot_duration_ns);
        n->bounded("special_dl_symbols", c.pattern.special_dl_symbols, 0, 1000);
        n->bounded("special_ul_symbols", c.pattern.special_ul_symbols, 0, 1000);
        n->bounded("symbols_per_slot", c.pattern.symbols_per_slot, 1, 1000);
        std::int64_t ul = -1, dl = -1;
        n->integer("ul_capacity_bps", ul);
        n->integer("dl_capacity_bps", dl);
        if (const auto* cells = n->find("cells")) {
            if (!cells->is_array()) throw ConfigError("network.cells", "expected an array");
            c.cells.clear();
            for (std::size_t i = 0; i < cells->size(); ++i) {
                detail::Fields cf((*cells)[i], "network.cells[" + std::to_string(i) + "]");
                netem::CellConfig cell;
                cf.bounded("id", cell.cell_id, 0, 1'000'000);
                cf.number("x", cell.position.x);
                cf.number("y", cell.position.y);
                cf.integer("ul_capacity_bps", cell.ul_capacity_bps);
                cf.integer("dl_capacity_bps", cell.dl_capacity_bps);
                cf.finish();
                c.cells.push_back(cell);
            }
        }
        for (auto& cell : c.cells) {
            if (ul >= 0) cell.ul_capacity_bps = ul;
            if (dl >= 0) cell.dl_capacity_bps = dl;
        }
        n->number("base_delay_ms", c.base_delay_ms);
        n->number("ack_ratio", c.ack_ratio);
        if (n->string("bl_policy", text)) {
            if (text == "fifo") c.bl_policy = netem::BaselinePolicy::SharedFifo;
            else if (text == "fair") c.bl_policy = netem::BaselinePolicy::ByteFair;
            else throw ConfigError("network.bl_policy", "expected \"fifo\" or \"fair\", got \"" + text + "\"");
        }
        if (auto h = n->object("handover")) {
            h->number("interruption_ms", c.handover_interruption_ms);
            h->number("hysteresis_m", c.handover_hysteresis_m);
            h->finish();
        }
        n->bounded("sensor_cell", c.sensor_cell, 0, 1'000'000);
        n->bounded("background_cell", c.background_cell, 0, 1'000'000);
        if (const auto* p = n->find("vehicle_position")) {
            if (!p->is_array() || p->size() != 2 || !(*p)[0].is_number() || !(*p)[1].is_number()) {
                throw ConfigError("network.vehicle_position", "expected [x, y]");
            }
            c.vehicle_position = {(*p)[0].get<double>(), (*p)[1].get<double>()};
        }
        n->finish();
    }
    if (top_scheduler) c.scheduler = *top_scheduler;

    if (const auto* mob = f.find("mobility")) {
        if (mob->is_string()) {
            if (mob->get<std::string>() != "default") throw ConfigError("mobility", "expected \"default\" or an object");
            c.mobility = default_route();
        } else {
            detail::Fields mf(*mob, "mobility");
            const auto* wps = mf.find("waypoints");
            if (!wps || !wps->is_array()) throw ConfigError("mobility.waypoints", "expected an array");
            std::vector<netem::Waypoint> route;
            for (std::size_t i = 0; i < wps->size(); ++i) {
                detail::Fields wf((*wps)[i], "mobility.waypoints[" + std::to_string(i) + "]");
                netem::Waypoint w;
                double t_s = 0;
                if (!wf.integer("t_ns", w.time_ns)) {
                    if (!wf.number("t_s", t_s)) throw ConfigError(wf.field("t_ns"), "t_ns or t_s is required");
                    w.time_ns = std::llround(t_s * 1e9);
                }
                wf.number("x", w.position.x);
                wf.number("y", w.position.y);
                wf.finish();
                route.push_back(w);
            }
            mf.finish();
            try {
                c.mobility = netem::MobilityRoute(std::move(route));
            } catch (const ContractError& e) {
                throw ConfigError("mobility.waypoints", e.what());
            }
        }
    }

    if (auto a = f.object("agents")) {
        if (auto s = a->object("sensor")) {
            detail::read_agent(*s, c.sensor);
            s->finish();
        }
        if (auto r = a->object("relay")) {
            detail::read_agent(*r, c.relay);
            if (auto p = r->object("processing")) {
                std::string kind = "constant";
                p->string("kind", kind);
                if (kind == "constant") {
                    std::int64_t ns = 0;
                    p->integer("ns", ns);
                    c.processing = agents::ProcessingDelay::constant(ns);
                } else if (kind == "uniform") {
                    std::int64_t lo = 0, hi = 0;
                    p->integer("lo_ns", lo);
                    p->integer("hi_ns", hi);
                    c.processing = agents::ProcessingDelay::uniform(lo, hi);
                } else {
                    throw ConfigError(p->field("kind"), "expected \"constant\" or \"uniform\"");
                }
                p->finish();
            }
            r->finish();
        }
        if (auto v = a->object("vehicle")) {
            detail::read_agent(*v, c.vehicle);
            v->finish();
        }
        a->finish();
    }

    if (auto r = f.object("real")) {
        r->string("broker", c.broker);
        r->number("drain_s", c.drain_s);
        r->finish();
    }
    f.finish();
    return c;
}

/// Parses, applies CV2X_SEED and validates.
inline ScenarioConfig parse_config(const json& root) {
    auto c = config_from_json(root);
    apply_env_overrides(c);
    validate(c);
    return c;
}

inline ScenarioConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), e.what());
    }
    return parse_config(j);
}

/// Fully resolved config; config_from_json(to_json(c)) == c.
inline ordered_json to_json(const ScenarioConfig& c) {
    ordered_json j;
    j["name"] = c.name;
    j["mode"] = std::string(to_string(c.mode));
    j["scheduler"] = std::string(netem::to_string(c.scheduler));
    j["seed"] = c.seed ? ordered_json(*c.seed) : ordered_json(nullptr);
    j["duration_s"] = c.duration_s;
    j["metric"] = std::string(analysis::to_string(c.metric));
    ordered_json msg;
    if (!c.preset.empty()) msg["preset"] = c.preset;
    msg["size_bytes"] = c.size_bytes;
    msg["rate_hz"] = c.rate_hz;
    msg["source_id"] = c.source_id;
    msg["start_offset_ns"] = c.start_offset_ns;
    j["message"] = msg;
    j["load"] = {{"ul", loadgen::format_load(c.load_ul)},
                 {"dl", loadgen::format_load(c.load_dl)},
                 {"packet_size_bytes", c.background_packet_bytes},
                 {"queue_cap_bytes", c.background_queue_cap_bytes}};
    ordered_json net;
    net["pattern"] = c.pattern.to_string();
    net["slot_duration_ns"] = c.pattern.slot_duration_ns;
    net["special_dl_symbols"] = c.pattern.special_dl_symbols;
    net["special_ul_symbols"] = c.pattern.special_ul_symbols;
    net["symbols_per_slot"] = c.pattern.symbols_per_slot;
    ordered_json cells = ordered_json::array();
    for (const auto& cell : c.cells) {
        cells.push_back({{"id", cell.cell_id},
                         {"x", cell.position.x},
                         {"y", cell.position.y},
                         {"ul_capacity_bps", cell.ul_capacity_bps},
                         {"dl_capacity_bps", cell.dl_capacity_bps}});
    }
    net["cells"] = cells;
    net["base_delay_ms"] = c.base_delay_ms;
    net["ack_ratio"] = c.ack_ratio;
    net["bl_policy"] = std::string(netem::to_string(c.bl_policy));
    net["handover"] = {{"interruption_ms", c.handover_interruption_ms}, {"hysteresis_m", c.handover_hysteresis_m}};
    net["sensor_cell"] = c.sensor_cell;
    net["background_cell"] = c.background_cell;
    net["vehicle_position"] = {c.vehicle_position.x, c.vehicle_position.y};
    j["network"] = net;
    if (c.mobility) {
        ordered_json wps = ordered_json::array();
        for (const auto& w : c.mobility->waypoints()) {
            wps.push_back({{"t_ns", w.time_ns}, {"x", w.position.x}, {"y", w.position.y}});
        }
        j["mobility"] = {{"waypoints", wps}};
    }
    ordered_json relay = detail::agent_json(c.relay);
    if (c.processing.kind == agents::ProcessingDelay::Kind::Constant) {
        relay["processing"] = {{"kind", "constant"}, {"ns", c.processing.lo_ns}};
    } else {
        relay["processing"] = {{"kind", "uniform"}, {"lo_ns", c.processing.lo_ns}, {"hi_ns", c.processing.hi_ns}};
    }
    j["agents"] = {{"sensor", detail::agent_json(c.sensor)}, {"relay", relay}, {"vehicle", detail::agent_json(c.vehicle)}};
    j["real"] = {{"broker", c.broker}, {"drain_s", c.drain_s}};
    return j;
}

inline sim::SimSetup to_sim_setup(const ScenarioConfig& c) {
    sim::SimSetup s;
    s.seed = c.seed.value_or(0);
    s.duration_ns = c.duration_ns();
    s.source_id = c.source_id;
    s.frame_size = c.size_bytes;
    s.rate_hz = c.rate_hz;
    s.start_offset_ns = c.start_offset_ns;
    s.pattern = c.pattern;
    s.cells = c.cells;
    s.scheduler = c.scheduler;
    s.bl_policy = c.bl_policy;
    s.base_delay_ns = std::llround(c.base_delay_ms * 1e6);
    s.ack_ratio = c.ack_ratio;
    s.background_queue_cap_bytes = c.background_queue_cap_bytes;
    s.background_packet_bytes = c.background_packet_bytes;
    s.sensor_cell = c.sensor_cell;
    s.background_cell = c.background_cell;
    s.vehicle_position = c.vehicle_position;
    s.mobility = c.mobility;
    s.handover_interruption_ns = std::llround(c.handover_interruption_ms * 1e6);
    s.handover_hysteresis_m = c.handover_hysteresis_m;
    s.load_ul = c.load_ul;
    s.load_dl = c.load_dl;
    auto agent = [](const AgentSetup& a) {
        return sim::AgentClockSetup{a.clock, std::llround(a.ntp_period_s * 1e9), a.ntp_noise_bound_ns};
    };
    s.sensor_clock = agent(c.sensor);
    s.relay_clock = agent(c.relay);
    s.vehicle_clock = agent(c.vehicle);
    s.processing = c.processing;
    return s;
}

struct ScenarioResult {
    std::filesystem::path log_path;
    analysis::LatencyStats stats;  // over cfg.metric
    std::vector<PacketRecord> records;
    std::uint64_t sent = 0;
    // sim mode only
    sim::InvariantReport invariants;
    std::vector<netem::HandoverEvent> handovers;
    std::set<std::uint64_t> handover_held_seqs;
};

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
}

/// Real-socket run: broker (embedded or external) plus one client per agent
/// role, each agent on its own thread.
inline std::vector<PacketRecord> run_real(const ScenarioConfig& c, std::uint64_t& sent) {
    std::unique_ptr<broker::Broker> embedded;
    broker::Endpoint ep;
    if (c.broker == "embedded") {
        embedded = std::make_unique<broker::Broker>(broker::Endpoint{"127.0.0.1", 0});
        ep = embedded->endpoint();
    } else {
        ep = broker::parse_endpoint(c.broker);
    }

    SystemStampSource sensor_clock, relay_clock, vehicle_clock;
    MemorySink sink;
    agents::VehicleAgent vehicle(vehicle_clock);
    agents::RelayAgent relay(relay_clock, c.processing, rng::derive_seed(c.seed.value_or(0), "relay.processing"));

    broker::BrokerClient vehicle_in(ep);
    vehicle_in.subscribe(agents::downlink_topic().name, [&](const std::string&, std::span<const std::uint8_t> f) {
        sink.append(vehicle.consume(f, 0, 0));
    });
    broker::BrokerClient relay_out(ep);
    broker::BrokerClient relay_in(ep);
    relay_in.subscribe(agents::uplink_topic().name, [&](const std::string&, std::span<const std::uint8_t> f) {
        auto msg = relay.receive(f, 0);
        if (!msg) return;
        if (const auto d = relay.sample_processing_delay(); d > 0) std::this_thread::sleep_for(std::chrono::nanoseconds(d));
        relay.forward(*msg, relay_out, 0);
    });

    agents::SensorAgent sensor(c.source_id, c.size_bytes, rng::derive_seed(c.seed.value_or(0), "sensor.payload"),
                               sensor_clock);
    const auto count = std::llround(c.rate_hz * c.duration_s);
    std::thread sensor_thread([&] {
        broker::BrokerClient out(ep);
        const auto start = std::chrono::steady_clock::now();
        for (std::int64_t k = 0; k < count; ++k) {
            std::this_thread::sleep_until(start + std::chrono::nanoseconds(std::llround(static_cast<double>(k) * 1e9 / c.rate_hz)));
            sensor.publish_next(out, 0);
        }
        out.sync();
    });
    sensor_thread.join();
    sent = sensor.counters.sent.load();

    const auto deadline = std::chrono::steady_clock::now() + std::chrono::nanoseconds(std::llround(c.drain_s * 1e9));
    while (sink.size() < sent && std::chrono::steady_clock::now() < deadline) {
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
    relay_in.close();
    relay_out.close();
    vehicle_in.close();
    if (embedded) embedded->stop();
    auto records = sink.snapshot();
    std::stable_sort(records.begin(), records.end(),
                     [](const PacketRecord& a, const PacketRecord& b) { return a.t4 < b.t4; });
    return records;
}

}  // namespace detail

/// Runs one scenario, writing packets.jsonl and resolved_config.json into
/// `out_dir`. With `write_report` the CSV/SVG report is written there too.
inline ScenarioResult run_scenario(const ScenarioConfig& c, const std::filesystem::path& out_dir,
                                   bool write_report = true) {
    validate(c);
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
    detail::write_text(out_dir / "resolved_config.json", to_json(c).dump(2) + "\n");

    ScenarioResult res;
    if (c.mode == Mode::Sim) {
        sim::World world(to_sim_setup(c));
        auto r = world.run();
        res.records = std::move(r.records);
        res.sent = r.sent;
        res.invariants = r.invariants;
        res.handovers = std::move(r.handovers);
        res.handover_held_seqs = std::move(r.handover_held_seqs);
    } else {
        res.records = detail::run_real(c, res.sent);
    }
    res.log_path = out_dir / "packets.jsonl";
    write_records(res.log_path, res.records);
    res.stats = analysis::summarize(res.records, c.metric);
    if (write_report) {
        const auto flags = analysis::detect_handover_affected(res.records, res.handovers);
        const auto series = analysis::make_series(c.name, res.records, c.metric, &flags);
        analysis::emit_report(std::span(&series, 1), out_dir);
    }
    return res;
}

// --- matrix -----------------------------------------------------------------

struct MatrixCell {
    ScenarioConfig config;
    std::string seed_key;  // cells sharing a key share a seed (paired comparisons)

    bool operator==(const MatrixCell&) const = default;
};

struct MatrixConfig {
    std::uint64_t master_seed = 1;
    unsigned jobs = 0;  // 0: hardware concurrency
    std::vector<MatrixCell> cells;

    bool operator==(const MatrixConfig&) const = default;

    std::uint64_t cell_seed(const MatrixCell& c) const {
        return rng::derive_seed(master_seed, c.seed_key.empty() ? c.config.name : c.seed_key);
    }
};

/// The 13 combinations: 8 nominal, 4 overload, 1 mobility.
inline MatrixConfig table1_matrix(std::uint64_t master_seed = 1) {
    MatrixConfig m;
    m.master_seed = master_seed;
    auto cell = [&](const std::string& block, netem::SchedulerKind k, const std::string& load_name,
                    const std::string& ul, const std::string& dl, std::size_t size, double rate) {
        ScenarioConfig c;
        const auto msg = std::to_string(size / 1000) + "kB-" + std::to_string(static_cast<int>(rate)) + "Hz";
        c.name = block + "-" + std::string(netem::to_string(k)) + "-" + load_name + "-" + msg;
        c.scheduler = k;
        c.load_ul = loadgen::parse_load(ul, Direction::Uplink);
        c.load_dl = loadgen::parse_load(dl, Direction::Downlink);
        c.size_bytes = size;
        c.rate_hz = rate;
        c.duration_s = 10.0;
        MatrixCell mc{c, block + "-" + load_name + "-" + msg};
        return mc;
    };
    using netem::SchedulerKind;
    for (auto k : {SchedulerKind::BL, SchedulerKind::AP}) {
        for (auto [ln, ul, dl] : {std::tuple{"noload", "none", "none"}, std::tuple{"ul1x5-dl1x110", "1x5", "1x110"}}) {
            m.cells.push_back(cell("nominal", k, ln, ul, dl, 1000, 10));
            m.cells.push_back(cell("nominal", k, ln, ul, dl, 10000, 20));
        }
    }
    for (auto k : {SchedulerKind::BL, SchedulerKind::AP}) {
        m.cells.push_back(cell("overload", k, "ul1x40", "1x40", "none", 10000, 20));
        m.cells.push_back(cell("overload", k, "ul2x40", "2x40", "none", 10000, 20));
    }
    auto mob = cell("mobility", SchedulerKind::BL, "noload", "none", "none", 10000, 20);
    mob.config.mobility = default_route();
    mob.config.duration_s = 200.0;
    m.cells.push_back(mob);
    for (auto& c : m.cells) c.config.seed = m.cell_seed(c);
    return m;
}

/// Matrix file: {"master_seed", "jobs", "base": {config}, "cells": [{"seed_key", "config": {overrides}}]}.
/// Each cell is the base merge-patched with its overrides; the cell seed is
/// always derived from the master seed.
inline MatrixConfig matrix_from_json(const json& root) {
    MatrixConfig m;
    detail::Fields f(root, "");
    f.unsigned64("master_seed", m.master_seed);
    f.bounded("jobs", m.jobs, 0, 1024);
    json base = json::object();
    if (const auto* b = f.find("base")) {
        if (!b->is_object()) throw ConfigError("base", "expected an object");
        base = *b;
    }
    const auto* cells = f.find("cells");
    if (!cells || !cells->is_array() || cells->empty()) throw ConfigError("cells", "expected a non-empty array");
    f.finish();
    for (std::size_t i = 0; i < cells->size(); ++i) {
        const auto where = "cells[" + std::to_string(i) + "]";
        detail::Fields cf((*cells)[i], where);
        MatrixCell cell;
        cf.string("seed_key", cell.seed_key);
        json cfg = base;
        if (const auto* o = cf.find("config")) cfg.merge_patch(*o);
        cf.finish();
        cfg.erase("seed");
        try {
            cell.config = config_from_json(cfg);
        } catch (const ConfigError& e) {
            throw ConfigError(where + "." + e.field(), e.what());
        }
        cell.config.seed = m.cell_seed(cell);
        validate(cell.config);
        m.cells.push_back(std::move(cell));
    }
    for (std::size_t i = 0; i < m.cells.size(); ++i) {
        for (std::size_t k = i + 1; k < m.cells.size(); ++k) {
            if (m.cells[i].config.name == m.cells[k].config.name) {
                throw ConfigError("cells", "duplicate scenario name \"" + m.cells[i].config.name + "\"");
            }
        }
    }
    return m;
}

inline MatrixConfig load_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open matrix " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string(), e.what());
    }
    return matrix_from_json(j);
}

struct CellResult {
    std::string name;
    bool ok = false;
    std::string error;
    ScenarioResult result;
};

struct MatrixResult {
    std::vector<CellResult> cells;  // in matrix order

    std::size_t failures() const {
        return static_cast<std::size_t>(std::count_if(cells.begin(), cells.end(), [](const CellResult& c) { return !c.ok; }));
    }
    const CellResult* find(std::string_view name) const {
        for (const auto& c : cells) {
            if (c.name == name) return &c;
        }
        return nullptr;
    }
};

/// Runs every cell (in parallel), each into out_dir/cells/<name>/, then writes
/// the consolidated report into out_dir. A failing cell is reported and the
/// others still run.
inline MatrixResult run_matrix(const MatrixConfig& m, const std::filesystem::path& out_dir) {
    MatrixResult res;
    res.cells.resize(m.cells.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i; (i = next.fetch_add(1)) < m.cells.size();) {
            auto& out = res.cells[i];
            out.name = m.cells[i].config.name;
            try {
                auto cfg = m.cells[i].config;
                cfg.seed = m.cell_seed(m.cells[i]);
                out.result = run_scenario(cfg, out_dir / "cells" / analysis::detail::file_safe(out.name), false);
                out.ok = true;
            } catch (const std::exception& e) {
                out.error = e.what();
            }
        }
    };
    unsigned jobs = m.jobs ? m.jobs : std::max(1u, std::thread::hardware_concurrency());
    jobs = std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, m.cells.size())));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();

    std::vector<analysis::ScenarioSeries> series;
    std::string failures;
    for (std::size_t i = 0; i < res.cells.size(); ++i) {
        const auto& c = res.cells[i];
        if (!c.ok) {
            failures += c.name + ": " + c.error + "\n";
            continue;
        }
        const auto flags = analysis::detect_handover_affected(c.result.records, c.result.handovers);
        series.push_back(analysis::make_series(c.name, c.result.records, m.cells[i].config.metric, &flags));
    }
    analysis::emit_report(series, out_dir);
    const auto fail_path = out_dir / "failures.txt";
    if (!failures.empty()) {
        detail::write_text(fail_path, failures);
    } else {
        std::filesystem::remove(fail_path);
    }
    return res;
}

}  // namespace cv2x::scenario
