#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "core.hpp"

namespace msfem {

/// Piecewise-constant scalar coefficient on the fine cells, plus an activity
/// mask for perforated domains (inactive cells carry no material).
struct CoefficientField {
    int nx = 0, ny = 0;
    std::vector<double> kappa;
    std::vector<uint8_t> active;

    static CoefficientField constant(int nx, int ny, double value = 1.0) {
        CoefficientField f;
        f.nx = nx;
        f.ny = ny;
        f.kappa.assign(static_cast<size_t>(nx) * ny, value);
        f.active.assign(static_cast<size_t>(nx) * ny, 1);
        return f;
    }

    size_t cell_index(int ix, int iy) const {
        return static_cast<size_t>(iy) * nx + ix;
    }
    double kappa_at(int ix, int iy) const { return kappa[cell_index(ix, iy)]; }
    bool is_active(int ix, int iy) const { return active[cell_index(ix, iy)] != 0; }

    int active_count() const {
        int c = 0;
        for (uint8_t a : active) c += a;
        return c;
    }
};

/// High-contrast test field: unit background with full-width horizontal
/// channels, vertical channel segments, and small rectangular inclusions, all
/// at the given contrast. Placement decisions are integer-only so the field
/// is reproducible across platforms.
inline CoefficientField generate_channel_field(int nx, int ny, uint64_t seed,
                                               double contrast = 1e4, int horizontal = 6,
                                               int vertical = 8, int inclusions = 40) {
    if (nx <= 0 || ny <= 0) throw config_error("field dimensions must be positive");
    CoefficientField f = CoefficientField::constant(nx, ny, 1.0);
    Rng rng = Rng::keyed(seed, 0x6669656c64ULL, static_cast<uint64_t>(nx),
                         static_cast<uint64_t>(ny));
    auto paint = [&](int x0, int x1, int y0, int y1) {
        for (int iy = std::max(0, y0); iy < std::min(ny, y1); ++iy)
            for (int ix = std::max(0, x0); ix < std::min(nx, x1); ++ix)
                f.kappa[f.cell_index(ix, iy)] = contrast;
    };
    for (int c = 0; c < horizontal; ++c) {
        int row = static_cast<int>(rng.uniform_int(1, ny - 2));
        paint(0, nx, row, row + 1);
    }
    for (int c = 0; c < vertical; ++c) {
        int col = static_cast<int>(rng.uniform_int(1, nx - 2));
        int len = static_cast<int>(rng.uniform_int(ny / 8 + 1, ny / 2));
        int y0 = static_cast<int>(rng.uniform_int(0, ny - len));
        paint(col, col + 1, y0, y0 + len);
    }
    for (int c = 0; c < inclusions; ++c) {
        int w = static_cast<int>(rng.uniform_int(2, 6));
        int hgt = static_cast<int>(rng.uniform_int(2, 6));
        int x0 = static_cast<int>(rng.uniform_int(0, nx - w));
        int y0 = static_cast<int>(rng.uniform_int(0, ny - hgt));
        paint(x0, x0 + w, y0, y0 + hgt);
    }
    return f;
}

/// Circular hole given by an integer cell-coordinate center and an integer
/// radius in cell units.
struct Circle {
    int cx = 0, cy = 0, r = 0;
};

/// Deactivates every cell whose center lies strictly inside one of the
/// circles. The test runs in doubled integer coordinates (cell centers sit at
/// odd points), so the mask is exact and identical on every platform.
inline void apply_perforations(CoefficientField& f, const std::vector<Circle>& circles) {
    for (const Circle& c : circles) {
        int64_t r2 = 4LL * c.r * c.r;
        for (int iy = 0; iy < f.ny; ++iy) {
            for (int ix = 0; ix < f.nx; ++ix) {
                int64_t dx = 2LL * ix + 1 - 2LL * c.cx;
                int64_t dy = 2LL * iy + 1 - 2LL * c.cy;
                if (dx * dx + dy * dy < r2) f.active[f.cell_index(ix, iy)] = 0;
            }
        }
    }
}

/// Random non-overlapping circles with a one-cell clearance between holes and
/// from the domain boundary.
inline std::vector<Circle> random_circles(int nx, int ny, int count, int r_min, int r_max,
                                          uint64_t seed) {
    if (r_min <= 0 || r_max < r_min) throw config_error("invalid perforation radius range");
    Rng rng = Rng::keyed(seed, 0x686f6c6573ULL, static_cast<uint64_t>(nx),
                         static_cast<uint64_t>(ny));
    std::vector<Circle> out;
    int attempts = 0, cap = 2000 * std::max(count, 1);
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > cap)
            throw numeric_error("random_circles: could not place " + std::to_string(count) +
                                " non-overlapping circles");
        Circle c;
        c.r = static_cast<int>(rng.uniform_int(r_min, r_max));
        if (2 * c.r + 2 >= std::min(nx, ny)) continue;
        c.cx = static_cast<int>(rng.uniform_int(c.r + 1, nx - c.r - 1));
        c.cy = static_cast<int>(rng.uniform_int(c.r + 1, ny - c.r - 1));
        bool ok = true;
        for (const Circle& o : out) {
            int64_t dx = c.cx - o.cx, dy = c.cy - o.cy;
            int64_t need = c.r + o.r + 1;
            if (dx * dx + dy * dy < need * need) {
                ok = false;
                break;
            }
        }
        if (ok) out.push_back(c);
    }
    return out;
}

}  // namespace msfem
