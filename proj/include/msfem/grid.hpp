#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "core.hpp"

namespace msfem {

/// One level of the coarse-to-fine cascade. Cells at every level are
/// axis-aligned boxes of fine cells; level sizes divide evenly by
/// construction.
struct GridLevel {
    int nx = 0, ny = 0;  ///< cells at this level
    int fx = 0, fy = 0;  ///< fine cells per cell of this level, per direction

    int cell_count() const { return nx * ny; }
    int vertex_count() const { return (nx + 1) * (ny + 1); }
    int cell_id(int cx, int cy) const { return cy * nx + cx; }
    int vertex_id(int vx, int vy) const { return vy * (nx + 1) + vx; }
    std::pair<int, int> vertex_coords(int v) const { return {v % (nx + 1), v / (nx + 1)}; }
    std::pair<int, int> cell_coords(int c) const { return {c % nx, c / nx}; }

    /// Fine-cell rect covered by cell (cx,cy).
    CellRect cell_rect(int cx, int cy) const {
        return {cx * fx, (cx + 1) * fx, cy * fy, (cy + 1) * fy};
    }
};

/// Nested hierarchy of structured rectangular grids on [0,Lx] x [0,Ly].
/// levels[0] is the coarsest (level 1); levels.back() is the fine grid
/// (level N), whose cells are the fine cells themselves.
struct GridHierarchy {
    int fine_nx = 0, fine_ny = 0;
    double Lx = 1.0, Ly = 1.0;
    std::vector<GridLevel> levels;

    int num_levels() const { return static_cast<int>(levels.size()); }
    const GridLevel& level(int l) const { return levels.at(static_cast<size_t>(l) - 1); }

    double hx() const { return Lx / fine_nx; }  ///< fine cell width
    double hy() const { return Ly / fine_ny; }
    /// Physical cell extent at a level.
    double Hx(int l) const { return hx() * level(l).fx; }
    double Hy(int l) const { return hy() * level(l).fy; }

    int fine_cell_count() const { return fine_nx * fine_ny; }
    int fine_node_count() const { return (fine_nx + 1) * (fine_ny + 1); }
    int fine_cell_id(int cx, int cy) const { return cy * fine_nx + cx; }
    int fine_node_id(int nxc, int nyc) const { return nyc * (fine_nx + 1) + nxc; }
    std::pair<int, int> fine_node_coords(int n) const {
        return {n % (fine_nx + 1), n / (fine_nx + 1)};
    }
    std::pair<int, int> fine_cell_coords(int c) const { return {c % fine_nx, c / fine_nx}; }
    double node_x(int nxc) const { return hx() * nxc; }
    double node_y(int nyc) const { return hy() * nyc; }
};

/// Builds the cascade from subdivision factors. factors[0] gives the coarsest
/// grid dimensions; factors[l] subdivides each level-l cell. The product over
/// all entries must equal the fine dimensions.
inline GridHierarchy build_hierarchy(int fine_nx, int fine_ny,
                                     const std::vector<std::pair<int, int>>& factors,
                                     double Lx = 1.0, double Ly = 1.0) {
    if (fine_nx <= 0 || fine_ny <= 0) throw config_error("grid dimensions must be positive");
    if (factors.empty()) throw config_error("at least one subdivision factor is required");
    GridHierarchy h;
    h.fine_nx = fine_nx;
    h.fine_ny = fine_ny;
    h.Lx = Lx;
    h.Ly = Ly;
    int nx = 1, ny = 1;
    for (const auto& [px, py] : factors) {
        if (px <= 0 || py <= 0) throw config_error("subdivision factors must be positive");
        nx *= px;
        ny *= py;
        h.levels.push_back(GridLevel{nx, ny, 0, 0});
    }
    if (nx != fine_nx || ny != fine_ny)
        throw config_error("subdivision factors do not multiply to the fine grid size: " +
                           std::to_string(nx) + "x" + std::to_string(ny) + " vs " +
                           std::to_string(fine_nx) + "x" + std::to_string(fine_ny));
    for (auto& lv : h.levels) {
        lv.fx = fine_nx / lv.nx;
        lv.fy = fine_ny / lv.ny;
    }
    return h;
}

/// Neighborhood of coarse vertex (vx,vy) at a level: union of the up to four
/// incident coarse cells, clipped at the domain boundary, as fine cells.
inline CellRect neighborhood(const GridHierarchy& h, int l, int vx, int vy) {
    const GridLevel& lv = h.level(l);
    if (vx < 0 || vx > lv.nx || vy < 0 || vy > lv.ny)
        throw config_error("vertex outside grid");
    CellRect r{(vx - 1) * lv.fx, (vx + 1) * lv.fx, (vy - 1) * lv.fy, (vy + 1) * lv.fy};
    return r.grown(0, h.fine_nx, h.fine_ny);
}

/// Neighborhood extended by whole fine-cell layers, clipped at the domain
/// boundary (oversampling region).
inline CellRect oversample(const GridHierarchy& h, const CellRect& region, int layers) {
    if (layers < 0) throw config_error("oversampling layer count must be non-negative");
    return region.grown(layers, h.fine_nx, h.fine_ny);
}

/// Level-l vertices whose full (unclipped) neighborhood lies inside the given
/// fine-cell rect. These index the interior coarse regions of a coarser-level
/// neighborhood; vertices on the domain boundary never qualify.
inline std::vector<int> contained_neighborhoods(const GridHierarchy& h, int l,
                                                const CellRect& region) {
    const GridLevel& lv = h.level(l);
    std::vector<int> out;
    // Candidate vertex range from the rect bounds; exact containment checked
    // per vertex with the unclipped patch.
    int vx_lo = region.x0 / lv.fx, vx_hi = region.x1 / lv.fx;
    int vy_lo = region.y0 / lv.fy, vy_hi = region.y1 / lv.fy;
    for (int vy = vy_lo; vy <= vy_hi; ++vy) {
        for (int vx = vx_lo; vx <= vx_hi; ++vx) {
            if (vx < 1 || vx > lv.nx - 1 || vy < 1 || vy > lv.ny - 1) continue;
            CellRect patch{(vx - 1) * lv.fx, (vx + 1) * lv.fx, (vy - 1) * lv.fy,
                           (vy + 1) * lv.fy};
            if (region.contains(patch)) out.push_back(lv.vertex_id(vx, vy));
        }
    }
    return out;
}

/// Level-l vertices of the closed patch around region: all vertices whose
/// neighborhood (clipped) intersects the rect. For an interior coarser-level
/// neighborhood this is the interior set plus the surrounding ring.
inline std::vector<int> covering_neighborhoods(const GridHierarchy& h, int l,
                                               const CellRect& region) {
    const GridLevel& lv = h.level(l);
    std::vector<int> out;
    int vx_lo = region.x0 / lv.fx - 1, vx_hi = region.x1 / lv.fx + 1;
    int vy_lo = region.y0 / lv.fy - 1, vy_hi = region.y1 / lv.fy + 1;
    for (int vy = std::max(0, vy_lo); vy <= std::min(lv.ny, vy_hi); ++vy) {
        for (int vx = std::max(0, vx_lo); vx <= std::min(lv.nx, vx_hi); ++vx) {
            if (neighborhood(h, l, vx, vy).intersects(region)) out.push_back(lv.vertex_id(vx, vy));
        }
    }
    return out;
}

/// Bilinear hat of level-l vertex (vx,vy) evaluated at physical point (x,y).
/// The hats of all vertices of a level form a partition of unity.
inline double hat_value(const GridHierarchy& h, int l, int vx, int vy, double x, double y) {
    double cx = vx * h.Hx(l), cy = vy * h.Hy(l);
    double tx = 1.0 - std::abs(x - cx) / h.Hx(l);
    double ty = 1.0 - std::abs(y - cy) / h.Hy(l);
    if (tx <= 0.0 || ty <= 0.0) return 0.0;
    return tx * ty;
}

/// Gradient of the hat at a point strictly inside one of its support cells.
inline std::pair<double, double> hat_gradient(const GridHierarchy& h, int l, int vx, int vy,
                                              double x, double y) {
    double cx = vx * h.Hx(l), cy = vy * h.Hy(l);
    double tx = 1.0 - std::abs(x - cx) / h.Hx(l);
    double ty = 1.0 - std::abs(y - cy) / h.Hy(l);
    if (tx <= 0.0 || ty <= 0.0) return {0.0, 0.0};
    double dx = (x > cx ? -1.0 : 1.0) / h.Hx(l);
    double dy = (y > cy ? -1.0 : 1.0) / h.Hy(l);
    return {dx * ty, dy * tx};
}

}  // namespace msfem
