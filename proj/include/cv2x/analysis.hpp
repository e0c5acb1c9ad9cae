#pragma once

// Latency statistics over packet logs: nearest-rank percentiles, empirical
// CDFs, handover flagging, and CSV/SVG report emission.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "cv2x/clock.hpp"
#include "cv2x/error.hpp"
#include "cv2x/netem/cell.hpp"
#include "cv2x/record.hpp"

namespace cv2x::analysis {

enum class Metric : std::uint8_t { UL, DL, EndToEnd, EndToEndNetwork };

inline constexpr std::string_view to_string(Metric m) {
    switch (m) {
        case Metric::UL: return "ul";
        case Metric::DL: return "dl";
        case Metric::EndToEnd: return "e2e";
        case Metric::EndToEndNetwork: return "e2e-net";
    }
    return "?";
}

inline Metric parse_metric(std::string_view s) {
    if (s == "ul") return Metric::UL;
    if (s == "dl") return Metric::DL;
    if (s == "e2e") return Metric::EndToEnd;
    if (s == "e2e-net") return Metric::EndToEndNetwork;
    throw ConfigError("metric", "expected ul, dl, e2e or e2e-net, got \"" + std::string(s) + "\"");
}

/// Nearest-rank percentile: the ceil(q*n)-th smallest sample.
inline std::int64_t percentile(std::span<const std::int64_t> samples, double q) {
    if (samples.empty()) throw ContractError("percentile of an empty sample set");
    if (!(q > 0.0 && q <= 1.0)) throw ContractError("percentile fraction must be in (0, 1]");
    std::vector<std::int64_t> v(samples.begin(), samples.end());
    const auto n = v.size();
    // The epsilon keeps q*n from rounding up past an exact integer rank.
    auto rank = static_cast<std::size_t>(std::ceil(q * static_cast<double>(n) - 1e-9));
    rank = std::clamp<std::size_t>(rank, 1, n);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(rank - 1), v.end());
    return v[rank - 1];
}

struct CdfPoint {
    std::int64_t value = 0;
    double fraction = 0.0;

    bool operator==(const CdfPoint&) const = default;
};

inline std::vector<CdfPoint> cdf(std::span<const std::int64_t> samples) {
    if (samples.empty()) throw ContractError("cdf of an empty sample set");
    std::vector<std::int64_t> v(samples.begin(), samples.end());
    std::sort(v.begin(), v.end());
    const auto n = static_cast<double>(v.size());
    std::vector<CdfPoint> out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i + 1 < v.size() && v[i + 1] == v[i]) continue;
        out.push_back(CdfPoint{v[i], static_cast<double>(i + 1) / n});
    }
    return out;
}

struct LatencyStats {
    std::size_t n = 0;
    double mean_ns = 0.0;
    std::int64_t p95_ns = 0;
    std::int64_t p99_ns = 0;
    std::int64_t min_ns = 0;
    std::int64_t max_ns = 0;
    std::vector<CdfPoint> cdf;

    bool operator==(const LatencyStats&) const = default;
};

inline LatencyStats summarize_samples(std::span<const std::int64_t> samples) {
    if (samples.empty()) throw ContractError("no usable samples to summarize");
    LatencyStats s;
    s.n = samples.size();
    const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
    s.min_ns = *lo;
    s.max_ns = *hi;
    // Integer sum first so the mean does not depend on sample order.
    const __int128 sum = std::accumulate(samples.begin(), samples.end(), static_cast<__int128>(0));
    s.mean_ns = static_cast<double>(sum) / static_cast<double>(s.n);
    s.p95_ns = percentile(samples, 0.95);
    s.p99_ns = percentile(samples, 0.99);
    s.cdf = cdf(samples);
    return s;
}

inline std::int64_t latency_of(const PacketRecord& r, Metric m) {
    const auto msg = r.as_message();
    switch (m) {
        case Metric::UL: return corrected_latency_ul(msg);
        case Metric::DL: return corrected_latency_dl(msg);
        case Metric::EndToEnd: return corrected_latency_e2e(msg);
        case Metric::EndToEndNetwork: return corrected_latency_e2e(msg) - corrected_processing(msg);
    }
    throw ContractError("unknown metric");
}

/// Latencies of every uncorrupted record, in record order.
inline std::vector<std::int64_t> latency_samples(std::span<const PacketRecord> records, Metric m) {
    std::vector<std::int64_t> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        if (!r.corrupt) out.push_back(latency_of(r, m));
    }
    return out;
}

inline LatencyStats summarize(std::span<const PacketRecord> records, Metric m) {
    const auto samples = latency_samples(records, m);
    if (samples.empty()) throw ContractError("no uncorrupted records to summarize");
    return summarize_samples(samples);
}

// --- handover flagging ------------------------------------------------------

struct HandoverFlags {
    std::vector<bool> flagged;  // aligned with the input records
    bool heuristic = false;     // true when ground truth was unavailable
    std::int64_t threshold_ns = 0;

    std::size_t count() const { return static_cast<std::size_t>(std::count(flagged.begin(), flagged.end(), true)); }
};

/// Flags records whose downlink service interval intersects an interruption
/// window.
///
/// With simulator ground truth (gt_dl_enq/gt_dl_deq) the interval is the
/// radio-queue residence and the result is exact. Without it this falls back
/// to a HEURISTIC: the interval is the corrected [t3, t4] and a record is
/// flagged only if its DL latency also exceeds the p99 of records outside
/// every window.
inline HandoverFlags detect_handover_affected(std::span<const PacketRecord> records,
                                              std::span<const netem::HandoverEvent> events) {
    HandoverFlags res;
    res.flagged.assign(records.size(), false);
    if (events.empty() || records.empty()) return res;

    auto intersects = [&](std::int64_t a, std::int64_t b) {
        return std::any_of(events.begin(), events.end(),
                           [&](const netem::HandoverEvent& e) { return a < e.end_ns() && b > e.time_ns; });
    };

    const bool exact = std::all_of(records.begin(), records.end(), [](const PacketRecord& r) {
        return r.gt_dl_enqueue_ns >= 0 && r.gt_dl_dequeue_ns >= 0;
    });
    if (exact) {
        for (std::size_t i = 0; i < records.size(); ++i) {
            res.flagged[i] = intersects(records[i].gt_dl_enqueue_ns, records[i].gt_dl_dequeue_ns);
        }
        return res;
    }

    res.heuristic = true;
    std::vector<std::int64_t> quiet;
    std::vector<bool> overlaps(records.size(), false);
    for (std::size_t i = 0; i < records.size(); ++i) {
        const auto& r = records[i];
        if (r.corrupt) continue;
        overlaps[i] = intersects(r.t3 + r.e3, r.t4 + r.e4);
        if (!overlaps[i]) quiet.push_back(corrected_latency_dl(r.as_message()));
    }
    if (quiet.empty()) return res;
    res.threshold_ns = percentile(quiet, 0.99);
    for (std::size_t i = 0; i < records.size(); ++i) {
        res.flagged[i] = overlaps[i] && corrected_latency_dl(records[i].as_message()) > res.threshold_ns;
    }
    return res;
}

// --- report emission --------------------------------------------------------

struct ScenarioSeries {
    std::string name;
    LatencyStats stats;
    std::vector<std::pair<std::uint64_t, std::int64_t>> per_packet;  // (seq, latency ns)
    std::vector<bool> handover;                                      // optional, aligned with per_packet
};

inline ScenarioSeries make_series(std::string name, std::span<const PacketRecord> records, Metric m,
                                  const HandoverFlags* flags = nullptr) {
    ScenarioSeries s;
    s.name = std::move(name);
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (records[i].corrupt) continue;
        s.per_packet.emplace_back(records[i].seq, latency_of(records[i], m));
        if (flags) s.handover.push_back(flags->flagged[i]);
    }
    std::vector<std::int64_t> lat;
    lat.reserve(s.per_packet.size());
    for (const auto& [_, l] : s.per_packet) lat.push_back(l);
    s.stats = summarize_samples(lat);
    return s;
}

namespace detail {

inline std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline double parse_double(std::string_view s) {
    double v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("bad number \"" + std::string(s) + "\"");
    return v;
}

inline std::int64_t parse_int(std::string_view s) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("bad integer \"" + std::string(s) + "\"");
    return v;
}

inline std::string file_safe(std::string_view name) {
    std::string out;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                        c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out.empty() ? "_" : out;
}

inline std::string xml_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        switch (c) {
            case '&': out += "&amp;"; break;
            case '<': out += "&lt;"; break;
            case '>': out += "&gt;"; break;
            case '"': out += "&quot;"; break;
            default: out += c;
        }
    }
    return out;
}

inline std::ofstream open_out(const std::filesystem::path& p) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    return out;
}

inline void close_out(std::ofstream& out, const std::filesystem::path& p) {
    out.close();
    if (!out) throw IoError("write failed for " + p.string());
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Line {
    std::string label;
    std::vector<std::pair<double, double>> points;
};

/// A bare line chart: axes, one polyline per series, legend.
inline std::string svg_chart(std::string_view title, std::string_view x_label, std::string_view y_label,
                             const std::vector<Line>& lines) {
    constexpr double W = 720, H = 440, L = 70, R = 200, T = 40, B = 50;
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (const auto& l : lines) {
        for (auto [x, y] : l.points) {
            x0 = std::min(x0, x), x1 = std::max(x1, x);
            y0 = std::min(y0, y), y1 = std::max(y1, y);
        }
    }
    if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
    if (x1 <= x0) x1 = x0 + 1;
    if (y1 <= y0) y1 = y0 + 1;
    auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

    std::ostringstream o;
    o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
      << ' ' << H << "\">\n"
      << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">" << xml_escape(title)
      << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << xml_escape(x_label) << "</text>\n"
      << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 "
      << (T + H - B) / 2 << ")\">" << xml_escape(y_label) << "</text>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = x0 + (x1 - x0) * k / 4, yv = y0 + (y1 - y0) * k / 4;
        o << "<text x=\"" << px(xv) << "\" y=\"" << H - B + 16 << "\" text-anchor=\"middle\" font-size=\"10\">"
          << format_double(std::round(xv * 1000) / 1000) << "</text>\n";
        o << "<text x=\"" << L - 6 << "\" y=\"" << py(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
          << format_double(std::round(yv * 1000) / 1000) << "</text>\n";
    }
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto* color = kPalette[i % std::size(kPalette)];
        o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
        for (std::size_t k = 0; k < lines[i].points.size(); ++k) {
            const auto [x, y] = lines[i].points[k];
            if (k) o << ' ';
            o << px(x) << ',' << py(y);
        }
        o << "\"/>\n";
        const double ly = T + 16.0 * static_cast<double>(i);
        o << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\"" << W - R + 30 << "\" y2=\"" << ly
          << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n"
          << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4 << "\" font-size=\"10\">" << xml_escape(lines[i].label)
          << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

}  // namespace detail

inline constexpr std::string_view kStatsHeader = "scenario,n,mean_ns,p95_ns,p99_ns,min_ns,max_ns";

/// Writes stats.csv, cdf_<name>.csv, per_packet_<name>.csv, cdf.svg and
/// per_packet_<name>.svg into `out_dir`.
inline void emit_report(std::span<const ScenarioSeries> series, const std::filesystem::path& out_dir) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    const auto stats_path = out_dir / "stats.csv";
    auto stats = detail::open_out(stats_path);
    stats << kStatsHeader << '\n';
    std::vector<detail::Line> cdf_lines;
    for (const auto& s : series) {
        const auto& st = s.stats;
        stats << s.name << ',' << st.n << ',' << detail::format_double(st.mean_ns) << ',' << st.p95_ns << ','
              << st.p99_ns << ',' << st.min_ns << ',' << st.max_ns << '\n';

        const auto safe = detail::file_safe(s.name);
        const auto cdf_path = out_dir / ("cdf_" + safe + ".csv");
        auto c = detail::open_out(cdf_path);
        c << "latency_ns,fraction\n";
        detail::Line line{s.name, {}};
        for (const auto& p : st.cdf) {
            c << p.value << ',' << detail::format_double(p.fraction) << '\n';
            line.points.emplace_back(static_cast<double>(p.value) / 1e6, p.fraction);
        }
        detail::close_out(c, cdf_path);
        cdf_lines.push_back(std::move(line));

        const auto pp_path = out_dir / ("per_packet_" + safe + ".csv");
        auto pp = detail::open_out(pp_path);
        pp << "seq,latency_ns,handover\n";
        detail::Line series_line{s.name, {}};
        for (std::size_t i = 0; i < s.per_packet.size(); ++i) {
            const bool ho = i < s.handover.size() && s.handover[i];
            pp << s.per_packet[i].first << ',' << s.per_packet[i].second << ',' << (ho ? 1 : 0) << '\n';
            series_line.points.emplace_back(static_cast<double>(s.per_packet[i].first),
                                            static_cast<double>(s.per_packet[i].second) / 1e6);
        }
        detail::close_out(pp, pp_path);

        const auto svg_path = out_dir / ("per_packet_" + safe + ".svg");
        auto svg = detail::open_out(svg_path);
        svg << detail::svg_chart("Per-packet latency: " + s.name, "sequence number", "latency [ms]", {series_line});
        detail::close_out(svg, svg_path);
    }
    detail::close_out(stats, stats_path);

    const auto cdf_svg = out_dir / "cdf.svg";
    auto svg = detail::open_out(cdf_svg);
    svg << detail::svg_chart("Latency CDF", "latency [ms]", "cumulative fraction", cdf_lines);
    detail::close_out(svg, cdf_svg);
}

struct StatsRow {
    std::string scenario;
    std::size_t n = 0;
    double mean_ns = 0;
    std::int64_t p95_ns = 0, p99_ns = 0, min_ns = 0, max_ns = 0;

    bool operator==(const StatsRow&) const = default;
};

inline StatsRow stats_row(const std::string& name, const LatencyStats& s) {
    return StatsRow{name, s.n, s.mean_ns, s.p95_ns, s.p99_ns, s.min_ns, s.max_ns};
}

inline std::vector<StatsRow> read_stats_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kStatsHeader) throw ParseError(1, "unexpected stats.csv header");
    std::vector<StatsRow> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string_view> cols;
        std::string_view rest(line);
        for (;;) {
            const auto comma = rest.find(',');
            cols.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos) break;
            rest.remove_prefix(comma + 1);
        }
        if (cols.size() != 7) throw ParseError(lineno, "expected 7 columns");
        try {
            rows.push_back(StatsRow{std::string(cols[0]), static_cast<std::size_t>(detail::parse_int(cols[1])),
                                    detail::parse_double(cols[2]), detail::parse_int(cols[3]),
                                    detail::parse_int(cols[4]), detail::parse_int(cols[5]),
                                    detail::parse_int(cols[6])});
        } catch (const std::invalid_argument& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return rows;
}

}  // namespace cv2x::analysis
