#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cv2x/error.hpp"

namespace cv2x::netem {

enum class SlotKind : std::uint8_t { Downlink, Uplink, Special };
enum class Direction : std::uint8_t { Uplink, Downlink };

inline constexpr std::string_view to_string(Direction d) { return d == Direction::Uplink ? "UL" : "DL"; }

struct TddPattern {
    std::vector<SlotKind> slots{SlotKind::Downlink, SlotKind::Downlink, SlotKind::Downlink, SlotKind::Special,
                                SlotKind::Uplink};
    std::int64_t slot_duration_ns = 500'000;
    int special_dl_symbols = 10;
    int special_ul_symbols = 2;
    int symbols_per_slot = 14;

    bool operator==(const TddPattern&) const = default;

    std::int64_t period_ns() const { return static_cast<std::int64_t>(slots.size()) * slot_duration_ns; }

    int symbols_per_period(Direction d) const {
        int n = 0;
        for (auto s : slots) {
            if (s == SlotKind::Special) {
                n += d == Direction::Downlink ? special_dl_symbols : special_ul_symbols;
            } else if ((s == SlotKind::Downlink) == (d == Direction::Downlink)) {
                n += symbols_per_slot;
            }
        }
        return n;
    }

    void validate() const {
        if (slots.empty()) throw ConfigError("network.pattern", "pattern has no slots");
        if (slot_duration_ns <= 0) throw ConfigError("network.slot_duration_ns", "must be positive");
        if (symbols_per_slot <= 0) throw ConfigError("network.symbols_per_slot", "must be positive");
        if (special_dl_symbols < 0 || special_ul_symbols < 0 ||
            special_dl_symbols + special_ul_symbols > symbols_per_slot) {
            throw ConfigError("network.special_symbols",
                              "special-slot DL + UL symbols must fit in " + std::to_string(symbols_per_slot));
        }
        if (symbols_per_period(Direction::Uplink) == 0) throw ConfigError("network.pattern", "no uplink symbols");
        if (symbols_per_period(Direction::Downlink) == 0) throw ConfigError("network.pattern", "no downlink symbols");
    }

    std::string to_string() const {
        std::string s;
        for (auto k : slots) s += k == SlotKind::Downlink ? 'D' : k == SlotKind::Uplink ? 'U' : 'S';
        return s;
    }

    static std::vector<SlotKind> parse_slots(std::string_view text) {
        std::vector<SlotKind> out;
        for (char c : text) {
            switch (c) {
                case 'D': out.push_back(SlotKind::Downlink); break;
                case 'U': out.push_back(SlotKind::Uplink); break;
                case 'S': out.push_back(SlotKind::Special); break;
                default:
                    throw ConfigError("network.pattern", std::string("unknown slot letter '") + c + "'");
            }
        }
        return out;
    }
};

struct SlotInfo {
    SlotKind kind = SlotKind::Downlink;
    std::size_t index = 0;
    double dl_fraction = 0.0;
    double ul_fraction = 0.0;
};

inline constexpr std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
    const auto r = a % m;
    return r < 0 ? r + m : r;
}

inline SlotInfo slot_kind_at(const TddPattern& p, std::int64_t time_ns) {
    SlotInfo info;
    info.index = static_cast<std::size_t>(floor_mod(time_ns / p.slot_duration_ns, static_cast<std::int64_t>(p.slots.size())));
    info.kind = p.slots[info.index];
    switch (info.kind) {
        case SlotKind::Downlink: info.dl_fraction = 1.0; break;
        case SlotKind::Uplink: info.ul_fraction = 1.0; break;
        case SlotKind::Special:
            info.dl_fraction = static_cast<double>(p.special_dl_symbols) / p.symbols_per_slot;
            info.ul_fraction = static_cast<double>(p.special_ul_symbols) / p.symbols_per_slot;
            break;
    }
    return info;
}

/// One OFDM symbol of the pattern, times relative to the period start.
struct Symbol {
    std::int64_t start_ns = 0;
    std::int64_t end_ns = 0;
    Direction direction = Direction::Downlink;
    std::int64_t budget_bits = 0;
};

/// The direction-carrying symbols of one pattern period with their share of
/// the per-period budgets. Shares are spread so each direction's symbol
/// budgets sum exactly to its period budget. Special slots carry DL symbols
/// first, then guard, then UL symbols; guard symbols are omitted.
class SymbolPlan {
public:
    SymbolPlan(const TddPattern& p, std::int64_t ul_period_bits, std::int64_t dl_period_bits) {
        const std::int64_t n_ul = p.symbols_per_period(Direction::Uplink);
        const std::int64_t n_dl = p.symbols_per_period(Direction::Downlink);
        std::int64_t ul_k = 0, dl_k = 0;
        auto share = [](std::int64_t total, std::int64_t k, std::int64_t n) {
            return static_cast<std::int64_t>((static_cast<__int128>(total) * (k + 1)) / n -
                                             (static_cast<__int128>(total) * k) / n);
        };
        for (std::size_t s = 0; s < p.slots.size(); ++s) {
            const std::int64_t slot_start = static_cast<std::int64_t>(s) * p.slot_duration_ns;
            for (int m = 0; m < p.symbols_per_slot; ++m) {
                Direction dir = Direction::Downlink;
                switch (p.slots[s]) {
                    case SlotKind::Downlink: dir = Direction::Downlink; break;
                    case SlotKind::Uplink: dir = Direction::Uplink; break;
                    case SlotKind::Special:
                        if (m < p.special_dl_symbols) {
                            dir = Direction::Downlink;
                        } else if (m >= p.symbols_per_slot - p.special_ul_symbols) {
                            dir = Direction::Uplink;
                        } else {
                            continue;  // guard
                        }
                        break;
                }
                Symbol sym;
                sym.start_ns = slot_start + (p.slot_duration_ns * m) / p.symbols_per_slot;
                sym.end_ns = slot_start + (p.slot_duration_ns * (m + 1)) / p.symbols_per_slot;
                sym.direction = dir;
                sym.budget_bits = dir == Direction::Uplink ? share(ul_period_bits, ul_k++, n_ul)
                                                           : share(dl_period_bits, dl_k++, n_dl);
                symbols_.push_back(sym);
            }
        }
    }

    const std::vector<Symbol>& symbols() const noexcept { return symbols_; }

private:
    std::vector<Symbol> symbols_;
};

}  // namespace cv2x::netem
