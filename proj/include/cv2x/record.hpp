#pragma once

// One log row per message received by a vehicle, stored as JSON lines:
//
//   {"src":1,"seq":0,"t1":..,"t2":..,"t3":..,"t4":..,"e1":..,"e2":..,"e3":..,"e4":..,
//    "size":1000,"cell":1,"corrupt":false,"gt_ul":..,"gt_dl":..,"gt_dl_enq":..,"gt_dl_deq":..}
//
// gt_* fields are simulator ground truth and -1 in real-socket mode.
// gt_dl_enq / gt_dl_deq (reference times at which the frame entered and left
// the downlink radio queue) are optional on input.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cv2x/clock.hpp"
#include "cv2x/error.hpp"
#include "cv2x/protocol.hpp"

namespace cv2x {

struct PacketRecord {
    std::uint16_t source_id = 0;
    std::uint64_t seq = 0;
    std::int64_t t1 = 0, t2 = 0, t3 = 0, t4 = 0;
    std::int64_t e1 = 0, e2 = 0, e3 = 0, e4 = 0;
    std::int64_t frame_size = 0;
    int serving_cell = 0;
    bool corrupt = false;
    std::int64_t gt_ul_ns = -1;
    std::int64_t gt_dl_ns = -1;
    std::int64_t gt_dl_enqueue_ns = -1;
    std::int64_t gt_dl_dequeue_ns = -1;

    bool operator==(const PacketRecord&) const = default;

    bool has_ground_truth() const { return gt_ul_ns >= 0 && gt_dl_ns >= 0; }

    V2XMessage as_message() const {
        V2XMessage m;
        m.source_id = source_id;
        m.seq = seq;
        m.t1 = t1, m.t2 = t2, m.t3 = t3, m.t4 = t4;
        m.e1 = e1, m.e2 = e2, m.e3 = e3, m.e4 = e4;
        return m;
    }

    static PacketRecord from_message(const V2XMessage& m, std::int64_t frame_size, int cell) {
        PacketRecord r;
        r.source_id = m.source_id;
        r.seq = m.seq;
        r.t1 = m.t1, r.t2 = m.t2, r.t3 = m.t3, r.t4 = m.t4;
        r.e1 = m.e1, r.e2 = m.e2, r.e3 = m.e3, r.e4 = m.e4;
        r.frame_size = frame_size;
        r.serving_cell = cell;
        return r;
    }
};

inline nlohmann::ordered_json to_json(const PacketRecord& r) {
    nlohmann::ordered_json j;
    j["src"] = r.source_id;
    j["seq"] = r.seq;
    j["t1"] = r.t1;
    j["t2"] = r.t2;
    j["t3"] = r.t3;
    j["t4"] = r.t4;
    j["e1"] = r.e1;
    j["e2"] = r.e2;
    j["e3"] = r.e3;
    j["e4"] = r.e4;
    j["size"] = r.frame_size;
    j["cell"] = r.serving_cell;
    j["corrupt"] = r.corrupt;
    j["gt_ul"] = r.gt_ul_ns;
    j["gt_dl"] = r.gt_dl_ns;
    j["gt_dl_enq"] = r.gt_dl_enqueue_ns;
    j["gt_dl_deq"] = r.gt_dl_dequeue_ns;
    return j;
}

inline std::string to_json_line(const PacketRecord& r) { return to_json(r).dump(); }

/// Parses one JSON-lines row. Throws std::invalid_argument with a reason.
inline PacketRecord record_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("row is not a JSON object");
    static const char* const kKnown[] = {"src", "seq",  "t1",   "t2",      "t3",    "t4",    "e1",        "e2",       "e3",
                                         "e4",  "size", "cell", "corrupt", "gt_ul", "gt_dl", "gt_dl_enq", "gt_dl_deq"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(std::begin(kKnown), std::end(kKnown), key) == std::end(kKnown)) {
            throw std::invalid_argument("unknown field \"" + key + "\"");
        }
    }
    auto integer = [&](const char* key, bool required, std::int64_t fallback) -> std::int64_t {
        auto it = j.find(key);
        if (it == j.end()) {
            if (required) throw std::invalid_argument(std::string("missing field \"") + key + "\"");
            return fallback;
        }
        if (!it->is_number_integer()) throw std::invalid_argument(std::string("field \"") + key + "\" is not an integer");
        return it->get<std::int64_t>();
    };
    PacketRecord r;
    const auto src = integer("src", true, 0);
    if (src < 0 || src > 0xFFFF) throw std::invalid_argument("field \"src\" out of range");
    r.source_id = static_cast<std::uint16_t>(src);
    auto seq_it = j.find("seq");
    if (seq_it == j.end() || !seq_it->is_number_integer() || seq_it->is_number_float()) {
        throw std::invalid_argument("field \"seq\" missing or not an integer");
    }
    if (seq_it->is_number_unsigned()) {
        r.seq = seq_it->get<std::uint64_t>();
    } else {
        const auto s = seq_it->get<std::int64_t>();
        if (s < 0) throw std::invalid_argument("field \"seq\" is negative");
        r.seq = static_cast<std::uint64_t>(s);
    }
    r.t1 = integer("t1", true, 0);
    r.t2 = integer("t2", true, 0);
    r.t3 = integer("t3", true, 0);
    r.t4 = integer("t4", true, 0);
    r.e1 = integer("e1", true, 0);
    r.e2 = integer("e2", true, 0);
    r.e3 = integer("e3", true, 0);
    r.e4 = integer("e4", true, 0);
    r.frame_size = integer("size", true, 0);
    r.serving_cell = static_cast<int>(integer("cell", true, 0));
    auto corrupt = j.find("corrupt");
    if (corrupt == j.end() || !corrupt->is_boolean()) throw std::invalid_argument("field \"corrupt\" missing or not a boolean");
    r.corrupt = corrupt->get<bool>();
    r.gt_ul_ns = integer("gt_ul", true, -1);
    r.gt_dl_ns = integer("gt_dl", true, -1);
    r.gt_dl_enqueue_ns = integer("gt_dl_enq", false, -1);
    r.gt_dl_dequeue_ns = integer("gt_dl_deq", false, -1);
    return r;
}

inline std::vector<PacketRecord> parse_records(std::istream& in) {
    std::vector<PacketRecord> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(record_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(lineno, e.what());
        } catch (const std::invalid_argument& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return out;
}

/// Reads a packet log. Corrupt-flagged rows are kept.
inline std::vector<PacketRecord> ingest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open log " + path.string());
    return parse_records(in);
}

inline void write_records(std::ostream& out, const std::vector<PacketRecord>& records) {
    for (const auto& r : records) out << to_json_line(r) << '\n';
}

inline void write_records(const std::filesystem::path& path, const std::vector<PacketRecord>& records) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write log " + path.string());
    write_records(out, records);
    if (!out) throw IoError("write failed for " + path.string());
}

/// Append-only, serialized sink used by concurrently running agents.
class RecordSink {
public:
    virtual ~RecordSink() = default;
    virtual void append(const PacketRecord& r) = 0;
};

class MemorySink final : public RecordSink {
public:
    void append(const PacketRecord& r) override {
        std::scoped_lock lock(mu_);
        records_.push_back(r);
    }

    std::vector<PacketRecord> snapshot() const {
        std::scoped_lock lock(mu_);
        return records_;
    }

    std::size_t size() const {
        std::scoped_lock lock(mu_);
        return records_.size();
    }

private:
    mutable std::mutex mu_;
    std::vector<PacketRecord> records_;
};

class FileSink final : public RecordSink {
public:
    explicit FileSink(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
        if (!out_) throw IoError("cannot write log " + path.string());
    }

    void append(const PacketRecord& r) override {
        std::scoped_lock lock(mu_);
        out_ << to_json_line(r) << '\n';
        out_.flush();
    }

private:
    std::mutex mu_;
    std::ofstream out_;
};

}  // namespace cv2x
