// cv2x-bench: scenario runner, matrix runner, log analyzer and real-mode agents.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "cv2x/agents.hpp"
#include "cv2x/analysis.hpp"
#include "cv2x/broker.hpp"
#include "cv2x/loadgen.hpp"
#include "cv2x/record.hpp"
#include "cv2x/scenario.hpp"

namespace {

using namespace cv2x;

volatile std::sig_atomic_t g_stop = 0;

void on_signal(int) { g_stop = 1; }

void print_stats(const std::string& name, const analysis::LatencyStats& s, analysis::Metric m) {
    std::printf("%s [%s] n=%zu mean=%.3f ms p95=%.3f ms p99=%.3f ms min=%.3f ms max=%.3f ms\n", name.c_str(),
                std::string(analysis::to_string(m)).c_str(), s.n, s.mean_ns / 1e6, static_cast<double>(s.p95_ns) / 1e6,
                static_cast<double>(s.p99_ns) / 1e6, static_cast<double>(s.min_ns) / 1e6,
                static_cast<double>(s.max_ns) / 1e6);
}

void wait_for(double seconds) {
    const auto end = std::chrono::steady_clock::now() + std::chrono::nanoseconds(std::llround(seconds * 1e9));
    while (!g_stop && (seconds <= 0 || std::chrono::steady_clock::now() < end)) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

int cmd_run(const std::string& config, const std::string& out) {
    const auto cfg = scenario::load_config(config);
    const auto r = scenario::run_scenario(cfg, out);
    print_stats(cfg.name, r.stats, cfg.metric);
    std::printf("records=%zu sent=%llu log=%s\n", r.records.size(), static_cast<unsigned long long>(r.sent),
                r.log_path.string().c_str());
    if (cfg.mode == scenario::Mode::Sim && r.invariants.total() > 0) {
        std::fprintf(stderr, "invariant violations: %llu (first: %s)\n",
                     static_cast<unsigned long long>(r.invariants.total()), r.invariants.first_violation.c_str());
        return 3;
    }
    return 0;
}

int cmd_matrix(const std::string& config, bool table1, const std::string& out, unsigned jobs) {
    auto m = table1 ? scenario::table1_matrix() : scenario::load_matrix(config);
    if (jobs) m.jobs = jobs;
    const auto res = scenario::run_matrix(m, out);
    for (std::size_t i = 0; i < res.cells.size(); ++i) {
        const auto& c = res.cells[i];
        if (c.ok) {
            print_stats(c.name, c.result.stats, m.cells[i].config.metric);
        } else {
            std::fprintf(stderr, "%s FAILED: %s\n", c.name.c_str(), c.error.c_str());
        }
    }
    std::printf("wrote %s/stats.csv\n", out.c_str());
    return res.failures() ? 2 : 0;
}

int cmd_analyze(const std::string& log, const std::string& metric_name, const std::string& out) {
    const auto metric = analysis::parse_metric(metric_name);
    const auto records = ingest(log);
    const auto series = analysis::make_series(std::filesystem::path(log).stem().string(), records, metric);
    print_stats(series.name, series.stats, metric);
    const auto corrupt = std::count_if(records.begin(), records.end(), [](const PacketRecord& r) { return r.corrupt; });
    if (corrupt) std::printf("corrupt records excluded: %zd\n", static_cast<std::ptrdiff_t>(corrupt));
    if (!out.empty()) analysis::emit_report(std::span(&series, 1), out);
    return 0;
}

int cmd_broker(const std::string& listen, double duration) {
    broker::Broker b(broker::parse_endpoint(listen));
    std::printf("broker listening on %s\n", b.endpoint().to_string().c_str());
    std::fflush(stdout);
    wait_for(duration);
    b.stop();
    std::printf("published=%llu delivered=%llu\n", static_cast<unsigned long long>(b.published()),
                static_cast<unsigned long long>(b.delivered()));
    return 0;
}

int cmd_sensor(const std::string& connect, std::size_t size, double rate, double duration, std::uint16_t source,
               std::uint64_t seed) {
    if (rate <= 0) throw ConfigError("rate", "must be positive");
    SystemStampSource clock;
    agents::SensorAgent sensor(source, size, rng::derive_seed(seed, "sensor.payload"), clock);
    broker::BrokerClient out(broker::parse_endpoint(connect));
    const auto count = std::llround(rate * duration);
    const auto start = std::chrono::steady_clock::now();
    for (std::int64_t k = 0; k < count && !g_stop; ++k) {
        std::this_thread::sleep_until(start + std::chrono::nanoseconds(std::llround(static_cast<double>(k) * 1e9 / rate)));
        sensor.publish_next(out, 0);
    }
    out.sync();
    std::printf("sent=%llu\n", static_cast<unsigned long long>(sensor.counters.sent.load()));
    return 0;
}

int cmd_relay(const std::string& connect, double processing_ms, double duration) {
    const auto ep = broker::parse_endpoint(connect);
    SystemStampSource clock;
    agents::RelayAgent relay(clock, agents::ProcessingDelay::constant(std::llround(processing_ms * 1e6)), 1);
    broker::BrokerClient out(ep);
    broker::BrokerClient in(ep);
    in.subscribe(agents::uplink_topic().name, [&](const std::string&, std::span<const std::uint8_t> f) {
        auto msg = relay.receive(f, 0);
        if (!msg) return;
        if (const auto d = relay.sample_processing_delay(); d > 0) std::this_thread::sleep_for(std::chrono::nanoseconds(d));
        relay.forward(*msg, out, 0);
    });
    wait_for(duration);
    in.close();
    std::printf("received=%llu forwarded=%llu dropped=%llu\n",
                static_cast<unsigned long long>(relay.counters.received.load()),
                static_cast<unsigned long long>(relay.counters.sent.load()),
                static_cast<unsigned long long>(relay.dropped_corrupt()));
    return 0;
}

int cmd_vehicle(const std::string& connect, const std::string& log, double duration) {
    SystemStampSource clock;
    agents::VehicleAgent vehicle(clock);
    FileSink sink(log);
    broker::BrokerClient in(broker::parse_endpoint(connect));
    in.subscribe(agents::downlink_topic().name,
                 [&](const std::string&, std::span<const std::uint8_t> f) { sink.append(vehicle.consume(f, 0, 0)); });
    wait_for(duration);
    in.close();
    std::printf("received=%llu\n", static_cast<unsigned long long>(vehicle.counters.received.load()));
    return 0;
}

int cmd_loadgen(const std::string& target, double mbps, std::int64_t size, double duration) {
    const auto ep = broker::parse_endpoint(target);
    const auto r = loadgen::blast_udp(ep.host, ep.port, std::llround(mbps * 1e6), size,
                                      std::chrono::nanoseconds(std::llround(duration * 1e9)));
    std::printf("packets=%llu bytes=%llu\n", static_cast<unsigned long long>(r.packets),
                static_cast<unsigned long long>(r.bytes));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"C-V2X messaging testbed: emulated 5G link, agents and latency analysis"};
    app.require_subcommand(1);

    std::string config, out = "out", log, metric = "e2e", connect = "127.0.0.1:4222", listen = "127.0.0.1:4222";
    bool table1 = false;
    unsigned jobs = 0;
    std::size_t size = 1000;
    double rate = 10, duration = 10, processing_ms = 0, mbps = 5;
    std::uint16_t source = 1;
    std::uint64_t seed = 1;
    std::int64_t packet = 1400;

    auto* run = app.add_subcommand("run", "run one scenario");
    run->add_option("--config", config, "scenario config (JSON)")->required()->check(CLI::ExistingFile);
    run->add_option("--out", out, "output directory");

    auto* matrix = app.add_subcommand("matrix", "run a scenario matrix");
    auto* mcfg = matrix->add_option("--config", config, "matrix file (JSON)")->check(CLI::ExistingFile);
    matrix->add_flag("--table1", table1, "use the built-in 13-cell matrix")->excludes(mcfg);
    matrix->add_option("--out", out, "output directory")->required();
    matrix->add_option("--jobs", jobs, "parallel cells (0: all cores)");

    auto* analyze = app.add_subcommand("analyze", "summarize a packet log");
    analyze->add_option("--log", log, "packets.jsonl")->required()->check(CLI::ExistingFile);
    analyze->add_option("--metric", metric, "ul | dl | e2e | e2e-net")->check(CLI::IsMember({"ul", "dl", "e2e", "e2e-net"}));
    analyze->add_option("--out", out, "report directory (omit for stdout only)");

    auto* brk = app.add_subcommand("broker", "run the pub-sub broker");
    brk->add_option("--listen", listen, "host:port (port 0 picks one)");
    brk->add_option("--duration", duration, "seconds to run, 0 until interrupted");

    auto* sensor = app.add_subcommand("sensor", "publish stamped frames");
    sensor->add_option("--connect", connect, "broker host:port");
    sensor->add_option("--size", size, "frame size in bytes");
    sensor->add_option("--rate", rate, "messages per second");
    sensor->add_option("--duration", duration, "seconds");
    sensor->add_option("--source-id", source, "source id");
    sensor->add_option("--seed", seed, "payload seed");

    auto* relay = app.add_subcommand("relay", "forward UL frames to DL");
    relay->add_option("--connect", connect, "broker host:port");
    relay->add_option("--processing-ms", processing_ms, "constant processing delay");
    relay->add_option("--duration", duration, "seconds to run, 0 until interrupted");

    auto* vehicle = app.add_subcommand("vehicle", "consume DL frames into a log");
    vehicle->add_option("--connect", connect, "broker host:port");
    vehicle->add_option("--log", log, "output packets.jsonl")->required();
    vehicle->add_option("--duration", duration, "seconds to run, 0 until interrupted");

    auto* load = app.add_subcommand("loadgen", "constant-bitrate UDP load");
    load->add_option("--target", connect, "host:port")->required();
    load->add_option("--rate-mbps", mbps, "rate in Mbit/s");
    load->add_option("--size", packet, "datagram size in bytes");
    load->add_option("--duration", duration, "seconds");

    CLI11_PARSE(app, argc, argv);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);

    try {
        if (*run) return cmd_run(config, out);
        if (*matrix) {
            if (!table1 && config.empty()) throw ConfigError("matrix", "need --config or --table1");
            return cmd_matrix(config, table1, out, jobs);
        }
        if (*analyze) return cmd_analyze(log, metric, analyze->count("--out") ? out : std::string());
        if (*brk) return cmd_broker(listen, duration);
        if (*sensor) return cmd_sensor(connect, size, rate, duration, source, seed);
        if (*relay) return cmd_relay(connect, processing_ms, duration);
        if (*vehicle) return cmd_vehicle(connect, log, duration);
        if (*load) return cmd_loadgen(connect, mbps, packet, duration);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
