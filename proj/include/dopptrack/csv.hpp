#pragma once

// CSV artifacts. Numbers are written in shortest round-trip decimal form
// ('.' separator, LF endings, one header row), so parsing a file gives back
// the exact doubles that were written.

#include "dopptrack/caf.hpp"
#include "dopptrack/doppler_track.hpp"
#include "dopptrack/score.hpp"

#include <charconv>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

namespace dopptrack {

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    if (res.ec != std::errc{}) throw CsvError("cannot format number");
    return std::string(buf, res.ptr);
}

inline std::string format_number(std::size_t v) { return std::to_string(v); }

inline double parse_number(const std::string& s) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc{} || res.ptr != last) throw CsvError("not a number: '" + s + "'");
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw CsvError("missing column '" + name + "'");
    }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

inline CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw CsvError("cannot open " + path.string());
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw CsvError(path.string() + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    t.header = split_csv_line(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto row = split_csv_line(line);
        if (row.size() != t.header.size())
            throw CsvError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                           std::to_string(t.header.size()) + " fields");
        t.rows.push_back(std::move(row));
    }
    return t;
}

class CsvWriter {
public:
    CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
        : path_(path), out_(path, std::ios::binary) {
        if (!out_) throw CsvError("cannot open " + path.string() + " for writing");
        row(header);
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
        if (!out_) throw CsvError("write failed: " + path_.string());
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

/// Trajectory file: k, t, x, y, vx, vy (k is 1-based, t = (k-1)·step).
inline void write_trajectory_csv(const std::filesystem::path& path, const MotionParams& m) {
    const Trajectory traj = propagate(m);
    CsvWriter w(path, {"k", "t", "x", "y", "vx", "vy"});
    for (std::size_t k = 0; k < m.size(); ++k)
        w.row({format_number(k + 1), format_number(static_cast<double>(k) * m.step),
               format_number(traj.positions[k].x()), format_number(traj.positions[k].y()),
               format_number(m.velocities[k].x()), format_number(m.velocities[k].y())});
}

struct TrajectoryRecord {
    Trajectory trajectory;
    std::vector<Vec2> velocities;
};

inline TrajectoryRecord read_trajectory_csv(const std::filesystem::path& path) {
    const CsvTable t = read_csv(path);
    const std::size_t ct = t.column("t"), cx = t.column("x"), cy = t.column("y");
    const std::size_t cvx = t.column("vx"), cvy = t.column("vy");
    if (t.rows.empty()) throw CsvError(path.string() + ": no rows");
    TrajectoryRecord rec;
    std::vector<double> times;
    for (const auto& r : t.rows) {
        times.push_back(parse_number(r[ct]));
        rec.trajectory.positions.emplace_back(parse_number(r[cx]), parse_number(r[cy]));
        rec.velocities.emplace_back(parse_number(r[cvx]), parse_number(r[cvy]));
    }
    rec.trajectory.step = times.size() > 1 ? times[1] - times[0] : 0.0;
    return rec;
}

inline MotionParams motion_from_record(const TrajectoryRecord& rec) {
    if (rec.trajectory.size() < 2) throw CsvError("trajectory needs at least two rows");
    MotionParams m;
    m.initial_position = rec.trajectory.positions.front();
    m.velocities = rec.velocities;
    m.step = rec.trajectory.step;
    return m;
}

/// Track file: k, t, receiver, raw, valid, interpolated, smoothed.
inline void write_track_csv(const std::filesystem::path& path, const DopplerTrackSet& tracks) {
    CsvWriter w(path, {"k", "t", "receiver", "raw", "valid", "interpolated", "smoothed"});
    for (std::size_t k = 0; k < tracks.num_instants(); ++k)
        for (std::size_t j = 0; j < tracks.num_receivers(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            const auto kk = static_cast<Eigen::Index>(k);
            w.row({format_number(k + 1), format_number(static_cast<double>(k) * tracks.step), format_number(j + 1),
                   format_number(tracks.raw(jj, kk)), tracks.valid(jj, kk) ? "1" : "0",
                   format_number(tracks.interpolated(jj, kk)), format_number(tracks.smoothed(jj, kk))});
        }
}

/// CAF map dump for one receiver: k, f_D, amplitude.
inline void write_caf_csv(const std::filesystem::path& path, const std::vector<CafMap>& maps) {
    CsvWriter w(path, {"k", "f_D", "amplitude"});
    for (const auto& m : maps)
        for (std::size_t i = 0; i < m.amplitudes.size(); ++i)
            w.row({format_number(m.k), format_number(m.grid.freq(i)), format_number(m.amplitudes[i])});
}

inline void write_cdf_csv(const std::filesystem::path& path, const std::vector<CdfPoint>& cdf) {
    CsvWriter w(path, {"error_m", "probability"});
    for (const auto& p : cdf) w.row({format_number(p.error), format_number(p.probability)});
}

}  // namespace dopptrack
