#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "offline.hpp"

namespace msfem {

/// Plain-text grid of decimal values: first line `nx ny`, then nx*ny values
/// row-major with y as the outer index. Written at 17 significant digits so
/// doubles round-trip exactly.
struct Raster {
    int nx = 0, ny = 0;
    std::vector<double> values;

    double at(int ix, int iy) const { return values[static_cast<size_t>(iy) * nx + ix]; }
};

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline Raster read_raster(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open raster file: " + path);
    Raster r;
    if (!(in >> r.nx >> r.ny) || r.nx <= 0 || r.ny <= 0)
        throw config_error(path + ": raster header must be two positive integers `nx ny`");
    size_t n = static_cast<size_t>(r.nx) * r.ny;
    r.values.resize(n);
    for (size_t i = 0; i < n; ++i) {
        if (!(in >> r.values[i])) {
            std::ostringstream msg;
            msg << path << ": expected " << n << " values, failed at value #" << i + 1
                << " (cell " << i % r.nx << "," << i / r.nx << ")";
            throw config_error(msg.str());
        }
    }
    std::string extra;
    if (in >> extra)
        throw config_error(path + ": trailing data after " + std::to_string(n) + " values");
    return r;
}

inline void write_raster(const Raster& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write raster file: " + path);
    out << r.nx << ' ' << r.ny << '\n';
    for (int iy = 0; iy < r.ny; ++iy) {
        for (int ix = 0; ix < r.nx; ++ix) {
            if (ix) out << ' ';
            out << format_double(r.values[static_cast<size_t>(iy) * r.nx + ix]);
        }
        out << '\n';
    }
    if (!out) throw config_error("write failed: " + path);
}

/// Builds the coefficient field from a kappa raster and an optional 0/1 mask.
inline CoefficientField field_from_rasters(const Raster& kappa, const Raster* mask) {
    CoefficientField f = CoefficientField::constant(kappa.nx, kappa.ny, 1.0);
    f.kappa = kappa.values;
    for (size_t i = 0; i < f.kappa.size(); ++i)
        if (f.kappa[i] <= 0.0)
            throw config_error("kappa raster has a non-positive value at cell #" +
                               std::to_string(i + 1));
    if (mask) {
        if (mask->nx != kappa.nx || mask->ny != kappa.ny)
            throw config_error("mask raster dimensions do not match the kappa raster");
        for (size_t i = 0; i < mask->values.size(); ++i) {
            double v = mask->values[i];
            if (v != 0.0 && v != 1.0)
                throw config_error("mask raster must contain only 0/1, found " +
                                   format_double(v) + " at cell #" + std::to_string(i + 1));
            f.active[i] = v != 0.0 ? 1 : 0;
        }
    }
    return f;
}

/// Comma-separated table with a single header line; fields never contain
/// commas, so no quoting is involved.
struct Csv {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    size_t start = 0;
    while (true) {
        size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

inline Csv read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open csv file: " + path);
    Csv c;
    std::string line;
    if (!std::getline(in, line)) throw config_error(path + ": empty csv file");
    c.columns = split_csv_line(line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> row = split_csv_line(line);
        if (row.size() != c.columns.size())
            throw config_error(path + ": row " + std::to_string(c.rows.size() + 2) + " has " +
                               std::to_string(row.size()) + " fields, header has " +
                               std::to_string(c.columns.size()));
        c.rows.push_back(std::move(row));
    }
    return c;
}

inline void write_csv(const Csv& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw config_error("cannot write csv file: " + path);
    for (size_t i = 0; i < c.columns.size(); ++i) out << (i ? "," : "") << c.columns[i];
    out << '\n';
    for (const auto& row : c.rows) {
        for (size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    }
    if (!out) throw config_error("write failed: " + path);
}

/// Perforation mask from i.i.d. uniform circles: centers anywhere on the
/// cell lattice (clipped at the boundary), radii uniform on [r_min, r_max],
/// overlaps allowed. Rasterization is the integer cell-center test, so masks
/// are identical across platforms for a fixed seed.
struct PerforationMask {
    int nx = 0, ny = 0;
    std::vector<Circle> circles;
    std::vector<uint8_t> active;
    double porosity = 1.0;         ///< active-cell fraction
    bool mostly_perforated = false;  ///< porosity below one half
};

inline PerforationMask gen_perforation_mask(int nx, int ny, int count, int r_min, int r_max,
                                            uint64_t seed) {
    if (nx <= 0 || ny <= 0) throw config_error("mask dimensions must be positive");
    if (count < 0 || r_min <= 0 || r_max < r_min)
        throw config_error("invalid perforation count or radius range");
    PerforationMask m;
    m.nx = nx;
    m.ny = ny;
    Rng rng = Rng::keyed(seed, 0x67656e7065726655ULL, static_cast<uint64_t>(nx),
                         static_cast<uint64_t>(ny));
    for (int i = 0; i < count; ++i) {
        Circle c;
        c.cx = static_cast<int>(rng.uniform_int(0, nx));
        c.cy = static_cast<int>(rng.uniform_int(0, ny));
        c.r = static_cast<int>(rng.uniform_int(r_min, r_max));
        m.circles.push_back(c);
    }
    CoefficientField f = CoefficientField::constant(nx, ny, 1.0);
    apply_perforations(f, m.circles);
    m.active = f.active;
    m.porosity = static_cast<double>(f.active_count()) / (static_cast<double>(nx) * ny);
    m.mostly_perforated = m.porosity < 0.5;
    return m;
}

inline Raster mask_to_raster(const PerforationMask& m) {
    Raster r;
    r.nx = m.nx;
    r.ny = m.ny;
    r.values.reserve(m.active.size());
    for (uint8_t a : m.active) r.values.push_back(a ? 1.0 : 0.0);
    return r;
}

// --- cascade cache -------------------------------------------------------
//
// One binary block per region (64-bit dimension header + raw doubles,
// little-endian on every supported platform) plus a text manifest carrying
// the plan, the grid, and the eigenvalue ladders.

namespace detail {

inline void put_i64(std::ofstream& out, int64_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

inline int64_t get_i64(std::ifstream& in, const std::string& path) {
    int64_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof v))
        throw config_error("truncated cascade block: " + path);
    return v;
}

inline void put_doubles(std::ofstream& out, const std::vector<double>& v) {
    out.write(reinterpret_cast<const char*>(v.data()),
              static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline std::vector<double> get_doubles(std::ifstream& in, size_t n, const std::string& path) {
    std::vector<double> v(n);
    if (!in.read(reinterpret_cast<char*>(v.data()),
                 static_cast<std::streamsize>(n * sizeof(double))))
        throw config_error("truncated cascade block: " + path);
    return v;
}

inline void put_matrix(std::ofstream& out, const DenseMatrix& m) {
    put_i64(out, m.rows());
    put_i64(out, m.cols());
    put_doubles(out, m.data());
}

inline DenseMatrix get_matrix(std::ifstream& in, const std::string& path) {
    int64_t rows = get_i64(in, path), cols = get_i64(in, path);
    if (rows < 0 || cols < 0) throw config_error("corrupt cascade block: " + path);
    DenseMatrix m(static_cast<int>(rows), static_cast<int>(cols));
    m.data() = get_doubles(in, static_cast<size_t>(rows) * static_cast<size_t>(cols), path);
    return m;
}

inline std::string region_file(int level, int vertex) {
    return "l" + std::to_string(level) + "_v" + std::to_string(vertex) + ".bin";
}

inline const char* mode_name(SnapshotMode m) {
    return m == SnapshotMode::TraceExhaustive ? "trace_exhaustive" : "trace_randomized";
}

inline SnapshotMode mode_from_name(const std::string& s) {
    if (s == "trace_exhaustive") return SnapshotMode::TraceExhaustive;
    if (s == "trace_randomized") return SnapshotMode::TraceRandomized;
    throw config_error("unknown snapshot mode in manifest: " + s);
}

}  // namespace detail

inline void save_cascade(const GridHierarchy& h, const Cascade& c, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw config_error("cannot create cascade directory: " + dir);

    std::ofstream man(dir + "/manifest.txt");
    if (!man) throw config_error("cannot write cascade manifest in " + dir);
    man << "cascade-cache v1\n";
    man << "fine " << h.fine_nx << ' ' << h.fine_ny << '\n';
    man << "extent " << format_double(h.Lx) << ' ' << format_double(h.Ly) << '\n';
    man << "factors";
    for (const GridLevel& lv : h.levels) man << ' ' << lv.fx << 'x' << lv.fy;
    man << '\n';
    man << "seed " << c.plan.seed << '\n';
    man << "oversample " << c.plan.oversample_fine << ' ' << c.plan.oversample_coarse << '\n';
    man << "store_cap " << c.plan.store_cap << '\n';
    man << "keep_snapshots " << (c.plan.keep_snapshots ? 1 : 0) << '\n';
    for (size_t l = 0; l < c.plan.levels.size(); ++l) {
        const LevelPlan& lp = c.plan.levels[l];
        man << "plan " << l + 1 << ' ' << lp.count << ' ' << detail::mode_name(lp.mode) << ' '
            << lp.snapshot_count << '\n';
    }

    for (size_t l = 0; l < c.offline.size(); ++l) {
        for (size_t v = 0; v < c.offline[l].size(); ++v) {
            const OfflineSpace& o = c.offline[l][v];
            const SnapshotSpace& s = c.snapshots[l][v];
            std::string name = detail::region_file(static_cast<int>(l) + 1, static_cast<int>(v));
            std::ofstream out(dir + "/" + name, std::ios::binary);
            if (!out) throw config_error("cannot write cascade block: " + name);
            detail::put_i64(out, 1);  // block format version
            detail::put_i64(out, o.level);
            detail::put_i64(out, o.vertex);
            for (int r : {o.rect.x0, o.rect.x1, o.rect.y0, o.rect.y1}) detail::put_i64(out, r);
            detail::put_i64(out, o.active);
            detail::put_i64(out, o.clipped ? 1 : 0);
            detail::put_i64(out, static_cast<int64_t>(o.ladder.size()));
            detail::put_doubles(out, o.ladder);
            detail::put_matrix(out, o.raw_modes);
            detail::put_matrix(out, o.basis);
            for (int r : {s.rect.x0, s.rect.x1, s.rect.y0, s.rect.y1}) detail::put_i64(out, r);
            detail::put_i64(out, static_cast<int64_t>(s.mode));
            detail::put_i64(out, (s.degenerate ? 1 : 0) | (s.gamma_empty ? 2 : 0) |
                                     (s.clipped ? 4 : 0));
            detail::put_matrix(out, s.columns);
            if (!out) throw config_error("write failed: " + name);

            man << "region " << l + 1 << ' ' << v << ' ' << name << " ladder";
            for (double lam : o.ladder) man << ' ' << format_double(lam);
            man << '\n';
        }
    }
    if (!man) throw config_error("write failed: cascade manifest in " + dir);
}

inline Cascade load_cascade(const GridHierarchy& h, const std::string& dir) {
    std::ifstream man(dir + "/manifest.txt");
    if (!man) throw config_error("cannot open cascade manifest in " + dir);
    std::string line;
    if (!std::getline(man, line) || line != "cascade-cache v1")
        throw config_error(dir + ": not a cascade cache (bad manifest header)");

    Cascade c;
    int n_levels = h.num_levels();
    c.snapshots.resize(static_cast<size_t>(n_levels) - 1);
    c.offline.resize(static_cast<size_t>(n_levels) - 1);
    for (int l = 1; l < n_levels; ++l) {
        c.snapshots[static_cast<size_t>(l) - 1].resize(
            static_cast<size_t>(h.level(l).vertex_count()));
        c.offline[static_cast<size_t>(l) - 1].resize(
            static_cast<size_t>(h.level(l).vertex_count()));
    }
    c.plan.levels.resize(static_cast<size_t>(n_levels) - 1);

    while (std::getline(man, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "fine") {
            int nx = 0, ny = 0;
            ls >> nx >> ny;
            if (nx != h.fine_nx || ny != h.fine_ny)
                throw config_error("cascade cache was built for a " + std::to_string(nx) + "x" +
                                   std::to_string(ny) + " grid, not " +
                                   std::to_string(h.fine_nx) + "x" + std::to_string(h.fine_ny));
        } else if (key == "factors") {
            std::string tok;
            for (const GridLevel& lv : h.levels) {
                if (!(ls >> tok) || tok != std::to_string(lv.fx) + "x" + std::to_string(lv.fy))
                    throw config_error("cascade cache factors do not match the hierarchy");
            }
        } else if (key == "seed") {
            ls >> c.plan.seed;
        } else if (key == "oversample") {
            ls >> c.plan.oversample_fine >> c.plan.oversample_coarse;
        } else if (key == "store_cap") {
            ls >> c.plan.store_cap;
        } else if (key == "keep_snapshots") {
            int k = 1;
            ls >> k;
            c.plan.keep_snapshots = k != 0;
        } else if (key == "plan") {
            size_t l = 0;
            int count = 0, snap = 0;
            std::string mode;
            ls >> l >> count >> mode >> snap;
            if (l < 1 || l > c.plan.levels.size())
                throw config_error("cascade manifest plan line for unknown level");
            c.plan.levels[l - 1] = {count, detail::mode_from_name(mode), snap};
        } else if (key == "region") {
            size_t l = 0, v = 0;
            std::string name;
            ls >> l >> v >> name;
            if (l < 1 || l > c.offline.size() || v >= c.offline[l - 1].size())
                throw config_error("cascade manifest region outside the hierarchy: " + line);
            std::string path = dir + "/" + name;
            std::ifstream in(path, std::ios::binary);
            if (!in) throw config_error("missing cascade block: " + path);
            if (detail::get_i64(in, path) != 1)
                throw config_error("unsupported cascade block version: " + path);
            OfflineSpace o;
            o.level = static_cast<int>(detail::get_i64(in, path));
            o.vertex = static_cast<int>(detail::get_i64(in, path));
            o.rect.x0 = static_cast<int>(detail::get_i64(in, path));
            o.rect.x1 = static_cast<int>(detail::get_i64(in, path));
            o.rect.y0 = static_cast<int>(detail::get_i64(in, path));
            o.rect.y1 = static_cast<int>(detail::get_i64(in, path));
            o.active = static_cast<int>(detail::get_i64(in, path));
            o.clipped = detail::get_i64(in, path) != 0;
            size_t ln = static_cast<size_t>(detail::get_i64(in, path));
            o.ladder = detail::get_doubles(in, ln, path);
            o.raw_modes = detail::get_matrix(in, path);
            o.basis = detail::get_matrix(in, path);
            SnapshotSpace s;
            s.level = o.level;
            s.vertex = o.vertex;
            s.rect.x0 = static_cast<int>(detail::get_i64(in, path));
            s.rect.x1 = static_cast<int>(detail::get_i64(in, path));
            s.rect.y0 = static_cast<int>(detail::get_i64(in, path));
            s.rect.y1 = static_cast<int>(detail::get_i64(in, path));
            s.mode = static_cast<SnapshotMode>(detail::get_i64(in, path));
            int64_t flags = detail::get_i64(in, path);
            s.degenerate = (flags & 1) != 0;
            s.gamma_empty = (flags & 2) != 0;
            s.clipped = (flags & 4) != 0;
            s.columns = detail::get_matrix(in, path);
            c.offline[l - 1][v] = std::move(o);
            c.snapshots[l - 1][v] = std::move(s);
        } else if (key == "extent") {
            double lx = 0, ly = 0;
            ls >> lx >> ly;
            if (lx != h.Lx || ly != h.Ly)
                throw config_error("cascade cache extents do not match the hierarchy");
        } else {
            throw config_error("unknown cascade manifest line: " + line);
        }
    }
    return c;
}

}  // namespace msfem
