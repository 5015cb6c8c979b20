#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ekmc/errors.hpp"
#include "ekmc/problem.hpp"

namespace ekmc {

inline constexpr std::string_view kEventLogHeader = "timestamp,sensor_id,occupancy";

struct EventRow {
    Timestamp timestamp = 0;
    std::string sensor_id;
    std::uint8_t occupancy = 0;

    friend bool operator==(const EventRow&, const EventRow&) = default;
};

struct EventLog {
    std::vector<EventRow> rows;  // sorted by (sensor_id, timestamp)
    std::string source;
    Timestamp timezone_offset = 0;  // seconds east of UTC
};

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    return s;
}

template <class Int>
bool parse_int(std::string_view s, Int& out)
{
    s = trim(s);
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && ptr == end;
}

}  // namespace detail

inline EventLog parse_event_log(std::istream& in, std::string source = "<stream>", Timestamp timezone_offset = 0)
{
    EventLog log;
    log.source = std::move(source);
    log.timezone_offset = timezone_offset;

    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line)) throw ParseError("empty event log, expected header", 1);
    ++line_no;
    if (detail::trim(line) != kEventLogHeader) {
        throw ParseError("bad header, expected '" + std::string(kEventLogHeader) + "'", line_no);
    }
    while (std::getline(in, line)) {
        ++line_no;
        const auto text = detail::trim(line);
        if (text.empty()) continue;
        const auto c1 = text.find(',');
        const auto c2 = c1 == std::string_view::npos ? c1 : text.find(',', c1 + 1);
        if (c2 == std::string_view::npos || text.find(',', c2 + 1) != std::string_view::npos) {
            throw ParseError("expected 3 comma-separated fields", line_no);
        }
        EventRow row;
        if (!detail::parse_int(text.substr(0, c1), row.timestamp)) {
            throw ParseError("bad timestamp", line_no);
        }
        row.sensor_id = std::string(detail::trim(text.substr(c1 + 1, c2 - c1 - 1)));
        if (row.sensor_id.empty()) throw ParseError("empty sensor_id", line_no);
        int occ = 0;
        if (!detail::parse_int(text.substr(c2 + 1), occ)) throw ParseError("bad occupancy", line_no);
        if (occ != 0 && occ != 1) {
            throw DataError("non-binary occupancy " + std::to_string(occ) + " at line " + std::to_string(line_no));
        }
        row.occupancy = static_cast<std::uint8_t>(occ);
        log.rows.push_back(std::move(row));
    }
    std::stable_sort(log.rows.begin(), log.rows.end(), [](const EventRow& a, const EventRow& b) {
        return a.sensor_id != b.sensor_id ? a.sensor_id < b.sensor_id : a.timestamp < b.timestamp;
    });
    return log;
}

inline EventLog read_event_log(const std::string& path, Timestamp timezone_offset = 0)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open event log '" + path + "'");
    return parse_event_log(in, path, timezone_offset);
}

struct GapRepair {
    std::string sensor_id;
    Timestamp first_missing = 0;
    Timestamp last_missing = 0;
    std::uint8_t fill_value = 0;
};

struct IngestOptions {
    Timestamp timezone_offset = 0;
    int max_gap = 5;  // longest run of missing seconds that is forward-filled
};

struct IngestResult {
    std::vector<OccupancySeries> series;  // sorted by sensor_id
    std::vector<GapRepair> repairs;
};

/*
 * Per-sensor contiguous series from an event log. Runs of up to max_gap
 * missing seconds are filled with the last observed state.
 */
inline IngestResult to_series(const EventLog& log, const IngestOptions& opts = {})
{
    IngestResult out;
    std::size_t i = 0;
    while (i < log.rows.size()) {
        const std::string& id = log.rows[i].sensor_id;
        const Timestamp start = log.rows[i].timestamp;
        std::vector<std::uint8_t> values{log.rows[i].occupancy};
        Timestamp last = start;
        for (++i; i < log.rows.size() && log.rows[i].sensor_id == id; ++i) {
            const auto& row = log.rows[i];
            if (row.timestamp == last) {
                if (row.occupancy != values.back()) {
                    throw DataError("conflicting duplicate rows for sensor '" + id + "' at t=" +
                                    std::to_string(row.timestamp));
                }
                continue;
            }
            const Timestamp missing = row.timestamp - last - 1;
            if (missing > opts.max_gap) {
                throw CoverageError("gap of " + std::to_string(missing) + " s for sensor '" + id + "' from t=" +
                                    std::to_string(last + 1) + " to t=" + std::to_string(row.timestamp - 1));
            }
            if (missing > 0) {
                out.repairs.push_back({id, last + 1, row.timestamp - 1, values.back()});
                values.insert(values.end(), static_cast<std::size_t>(missing), values.back());
            }
            values.push_back(row.occupancy);
            last = row.timestamp;
        }
        out.series.emplace_back(id, start, std::move(values));
    }
    return out;
}

inline IngestResult ingest_csv(const std::string& path, const IngestOptions& opts = {})
{
    return to_series(read_event_log(path, opts.timezone_offset), opts);
}

inline void write_csv(std::ostream& out, const std::vector<OccupancySeries>& series)
{
    std::vector<const OccupancySeries*> sorted;
    for (const auto& s : series) sorted.push_back(&s);
    std::stable_sort(sorted.begin(), sorted.end(),
                     [](const auto* a, const auto* b) { return a->sensor_id() < b->sensor_id(); });
    out << kEventLogHeader << '\n';
    for (const auto* s : sorted) {
        for (std::size_t i = 0; i < s->size(); ++i) {
            out << s->start() + static_cast<Timestamp>(i) << ',' << s->sensor_id() << ','
                << static_cast<int>(s->values()[i]) << '\n';
        }
    }
}

inline void write_csv(const std::string& path, const std::vector<OccupancySeries>& series)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_csv(out, series);
}

/*
 * Fixed-time signal cycle model. Each sensor sits in a "green" phase for
 * round(green_ratio * cycle_length) seconds of every cycle and emits
 * Bernoulli occupancy with the phase's rate; sensor j's cycle is shifted by
 * j * offset seconds and each bit then flips with probability flip_noise.
 * The phase depends only on time of day, so every day repeats the same plan.
 */
struct SyntheticSpec {
    int n_sensors = 3;
    int n_days = 35;
    int cycle_length = 120;
    std::vector<double> green_ratio{0.1};  // one entry, or one per sensor
    double occupancy_prob_green = 1.0;
    double occupancy_prob_red = 0.0;
    int offset = 7;  // cross-sensor phase offset in seconds
    double flip_noise = 0.0;
    std::uint64_t seed = 0;
    Timestamp start = 1543622400;  // 2018-12-01T00:00:00Z, midnight

    double green_ratio_for(int sensor) const
    {
        return green_ratio.size() == 1 ? green_ratio.front() : green_ratio.at(static_cast<std::size_t>(sensor));
    }

    void validate() const
    {
        if (n_sensors < 1) throw ConfigError("synthetic: n_sensors must be >= 1");
        if (n_days < 1) throw ConfigError("synthetic: n_days must be >= 1");
        if (cycle_length < 2) throw ConfigError("synthetic: cycle_length must be >= 2");
        if (green_ratio.size() != 1 && green_ratio.size() != static_cast<std::size_t>(n_sensors)) {
            throw ConfigError("synthetic: green_ratio needs 1 or n_sensors entries");
        }
        auto prob = [](double p, const char* name) {
            if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("synthetic: ") + name + " must be in [0,1]");
        };
        for (double g : green_ratio) prob(g, "green_ratio");
        prob(occupancy_prob_green, "occupancy_prob_green");
        prob(occupancy_prob_red, "occupancy_prob_red");
        prob(flip_noise, "flip_noise");
    }
};

inline std::vector<OccupancySeries> generate_synthetic(const SyntheticSpec& spec)
{
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const Timestamp length = static_cast<Timestamp>(spec.n_days) * kSecondsPerDay;

    std::vector<OccupancySeries> out;
    for (int s = 0; s < spec.n_sensors; ++s) {
        const auto green = static_cast<Timestamp>(std::lround(spec.green_ratio_for(s) * spec.cycle_length));
        std::vector<std::uint8_t> values(static_cast<std::size_t>(length));
        for (Timestamp i = 0; i < length; ++i) {
            const Timestamp time_of_day = (spec.start + i) % kSecondsPerDay;
            const Timestamp phase = (time_of_day + static_cast<Timestamp>(s) * spec.offset) % spec.cycle_length;
            const double rate = phase < green ? spec.occupancy_prob_green : spec.occupancy_prob_red;
            // always draw both numbers so streams stay aligned across specs
            const double occ_draw = unit(rng);
            const double flip_draw = unit(rng);
            bool occupied = occ_draw < rate;
            if (flip_draw < spec.flip_noise) occupied = !occupied;
            values[static_cast<std::size_t>(i)] = occupied ? 1 : 0;
        }
        out.emplace_back("s" + std::to_string(s), spec.start, std::move(values));
    }
    return out;
}

}  // namespace ekmc
