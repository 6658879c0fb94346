#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <fstream>
#include <ostream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "lsv/calibration.hpp"
#include "lsv/errors.hpp"
#include "lsv/fokker_planck.hpp"
#include "lsv/localvol.hpp"
#include "lsv/particle.hpp"

// CSV serialization: surfaces as `t,x,value` / `t,k,value`, PDE snapshots as
// `t,x,regime,value`, particle snapshots as `time,particle,regime,x`, and the
// statistical reports with headers matching their field names. Numbers use
// max_digits10, so a written-and-reread surface is bit-exact.

namespace lsv::csv {

inline std::string format_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

namespace detail {

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream is(line);
    while (std::getline(is, field, ',')) out.push_back(field);
    return out;
}

inline double parse_double(const std::string& s, const std::string& context) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw validation_error("csv: bad number '" + s + "' in " + context);
    }
}

struct TaggedGrid {
    std::vector<double> t_grid;
    std::vector<double> s_grid;   // second coordinate (x or k)
    std::vector<double> values;   // row-major t x s
};

// Reads a `t,<coord>,value` long-format file into a rectangular grid; rows
// must enumerate the full product grid (any order).
inline TaggedGrid read_grid(const std::string& path, const std::string& coord_name) {
    std::ifstream in(path);
    if (!in) throw validation_error("csv: cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw validation_error("csv: empty file " + path);
    const auto header = split_line(line);
    if (header.size() != 3 || header[0] != "t" || header[1] != coord_name ||
        header[2] != "value")
        throw validation_error("csv: expected header t," + coord_name + ",value in " + path);

    std::vector<double> ts, ss, vs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_line(line);
        if (fields.size() != 3)
            throw validation_error("csv: expected 3 fields per row in " + path);
        ts.push_back(parse_double(fields[0], path));
        ss.push_back(parse_double(fields[1], path));
        vs.push_back(parse_double(fields[2], path));
    }
    if (ts.empty()) throw validation_error("csv: no data rows in " + path);

    TaggedGrid out;
    out.t_grid = ts;
    out.s_grid = ss;
    std::sort(out.t_grid.begin(), out.t_grid.end());
    std::sort(out.s_grid.begin(), out.s_grid.end());
    out.t_grid.erase(std::unique(out.t_grid.begin(), out.t_grid.end()), out.t_grid.end());
    out.s_grid.erase(std::unique(out.s_grid.begin(), out.s_grid.end()), out.s_grid.end());
    if (ts.size() != out.t_grid.size() * out.s_grid.size())
        throw validation_error("csv: rows do not form a full grid in " + path);

    out.values.assign(ts.size(), 0.0);
    std::vector<bool> seen(ts.size(), false);
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const std::size_t ti =
            std::lower_bound(out.t_grid.begin(), out.t_grid.end(), ts[i]) - out.t_grid.begin();
        const std::size_t si =
            std::lower_bound(out.s_grid.begin(), out.s_grid.end(), ss[i]) - out.s_grid.begin();
        const std::size_t idx = ti * out.s_grid.size() + si;
        if (seen[idx]) throw validation_error("csv: duplicate grid node in " + path);
        seen[idx] = true;
        out.values[idx] = vs[i];
    }
    return out;
}

} // namespace detail

inline CallSurface read_call_surface(const std::string& path) {
    const detail::TaggedGrid g = detail::read_grid(path, "k");
    CallSurface s;
    s.t_grid = g.t_grid;
    s.k_grid = g.s_grid;
    s.prices = g.values;
    s.validate();
    return s;
}

inline void write_vol_surface(std::ostream& out, const VolSurface& s) {
    out << "t,x,value\n";
    for (std::size_t ti = 0; ti < s.t_grid.size(); ++ti)
        for (std::size_t xi = 0; xi < s.x_grid.size(); ++xi)
            out << format_double(s.t_grid[ti]) << ',' << format_double(s.x_grid[xi]) << ','
                << format_double(s.at(ti, xi)) << '\n';
}

inline void write_call_surface(std::ostream& out, const CallSurface& s) {
    out << "t,k,value\n";
    for (std::size_t ti = 0; ti < s.t_grid.size(); ++ti)
        for (std::size_t ki = 0; ki < s.k_grid.size(); ++ki)
            out << format_double(s.t_grid[ti]) << ',' << format_double(s.k_grid[ki]) << ','
                << format_double(s.at(ti, ki)) << '\n';
}

// Selected time levels of a PDE trajectory; snap times to the nearest level.
inline void write_density_snapshots(std::ostream& out, const GridDensity& traj,
                                    const std::vector<double>& times) {
    out << "t,x,regime,value\n";
    for (double t : times) {
        const int k = std::clamp(static_cast<int>(std::lround(t / traj.grid.t_step)), 0,
                                 traj.grid.n_t);
        for (int reg = 0; reg < traj.n_regimes; ++reg)
            for (int j = 0; j < traj.grid.n_x; ++j)
                out << format_double(traj.grid.time(k)) << ',' << format_double(traj.grid.node(j))
                    << ',' << reg << ',' << format_double(traj.at(k, reg, j)) << '\n';
    }
}

inline void write_particle_snapshots(std::ostream& out, const std::vector<Snapshot>& snaps) {
    out << "time,particle,regime,x\n";
    for (const Snapshot& s : snaps)
        for (std::size_t i = 0; i < s.ensemble.size(); ++i)
            out << format_double(s.time) << ',' << i << ',' << s.ensemble.y[i] << ','
                << format_double(s.ensemble.x[i]) << '\n';
}

inline void write_bin_report(std::ostream& out, const BinReport& report) {
    out << "center,count,mean_sigma2,target,std_error,z_score,admitted\n";
    for (const BinRow& row : report.bins)
        out << format_double(row.center) << ',' << row.count << ','
            << format_double(row.mean_sigma2) << ',' << format_double(row.target) << ','
            << format_double(row.std_error) << ',' << format_double(row.z_score) << ','
            << (row.admitted ? 1 : 0) << '\n';
}

inline void write_chaos_curve(std::ostream& out, const ChaosCurve& curve) {
    out << "particles,delta_m,gap_mean,gap_se\n";
    for (const ChaosRow& row : curve.rows)
        out << row.particles << ',' << format_double(row.delta_m) << ','
            << format_double(row.gap_mean) << ',' << format_double(row.gap_se) << '\n';
}

} // namespace lsv::csv
