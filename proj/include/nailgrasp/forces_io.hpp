#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "synth.hpp"

namespace nailgrasp {

struct ForceRow {
    double time_s = 0.0;
    std::string finger;
    double fx = 0.0, fy = 0.0, fz = 0.0;
    std::string phase;
    std::string source;
};

inline constexpr const char* kForcesHeader = "time_s,finger,fx_n,fy_n,fz_n,phase,source";

// Forces use %.17g so a write/read cycle reproduces the doubles exactly.
inline void write_forces_csv(const std::vector<ForceRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw FormatError("cannot open " + path + " for writing");
    out << kForcesHeader << "\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.6f,%s,%.17g,%.17g,%.17g,%s,%s\n", r.time_s,
                      r.finger.c_str(), r.fx, r.fy, r.fz, r.phase.c_str(), r.source.c_str());
        out << buf;
    }
}

namespace detail {
inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const std::size_t next = line.find(',', pos);
        if (next == std::string::npos) {
            out.push_back(line.substr(pos));
            return out;
        }
        out.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
}
inline double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw FormatError("bad number '" + s + "' in " + where);
    }
}
}  // namespace detail

inline std::vector<ForceRow> read_forces_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty force file " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != kForcesHeader) throw FormatError("unexpected force CSV header in " + path);
    std::vector<ForceRow> rows;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto f = detail::split_csv(line);
        if (f.size() != 7) throw FormatError("expected 7 fields in " + path + ": " + line);
        ForceRow r;
        r.time_s = detail::parse_double(f[0], path);
        r.finger = f[1];
        r.fx = detail::parse_double(f[2], path);
        r.fy = detail::parse_double(f[3], path);
        r.fz = detail::parse_double(f[4], path);
        r.phase = f[5];
        r.source = f[6];
        rows.push_back(std::move(r));
    }
    return rows;
}

// One row per finger per sample, thumb first.
inline std::vector<ForceRow> session_rows(const GraspSession& s, const std::string& source) {
    std::vector<ForceRow> rows;
    rows.reserve(4 * s.samples());
    for (int i = 0; i < s.samples(); ++i)
        for (int f = 0; f < kNumFingers; ++f) {
            ForceRow r;
            r.time_s = i * s.dt;
            r.finger = kFingerNames[f];
            r.fx = s.series[f][i].fx;
            r.fy = s.series[f][i].fy;
            r.fz = s.series[f][i].fz;
            r.phase = phase_name(s.labels[i]);
            r.source = source;
            rows.push_back(std::move(r));
        }
    return rows;
}

struct ForceSeries {
    double dt = 0.0;
    std::array<std::vector<ForceVector>, 4> series;  // thumb, index, middle, ring
    std::vector<Phase> phases;
    std::vector<double> times;
};

// Group rows by timestamp; each group must contain each finger exactly once
// and a single phase label.
inline ForceSeries rows_to_series(const std::vector<ForceRow>& rows) {
    if (rows.empty()) throw FormatError("force series is empty");
    if (rows.size() % kNumFingers != 0)
        throw FormatError("force row count is not a multiple of the finger count");
    ForceSeries out;
    const std::size_t n = rows.size() / kNumFingers;
    for (std::size_t i = 0; i < n; ++i) {
        std::array<bool, 4> have{};
        const double t = rows[i * 4].time_s;
        const std::string& ph = rows[i * 4].phase;
        for (int k = 0; k < 4; ++k) {
            const ForceRow& r = rows[i * 4 + k];
            if (std::abs(r.time_s - t) > 1e-9)
                throw FormatError("timestamps differ within a sample group");
            if (r.phase != ph) throw FormatError("phase labels differ within a sample group");
            const int f = finger_index(r.finger);
            if (have[f]) throw FormatError("duplicate finger '" + r.finger + "' at one timestamp");
            have[f] = true;
            out.series[f].push_back({r.fx, r.fy, r.fz});
        }
        out.times.push_back(t);
        out.phases.push_back(phase_from_name(ph));
    }
    if (n >= 2) {
        out.dt = out.times[1] - out.times[0];
        if (out.dt <= 0) throw FormatError("timestamps must increase");
        for (std::size_t i = 1; i < n; ++i)
            if (std::abs(out.times[i] - out.times[i - 1] - out.dt) > 1e-6)
                throw FormatError("timestamps are not uniformly spaced");
    }
    return out;
}

}  // namespace nailgrasp
