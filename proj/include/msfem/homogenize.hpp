#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <utility>
#include <vector>

#include "assembly.hpp"
#include "core.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "solver.hpp"
#include "sparse.hpp"

namespace msfem {

struct Tensor2 {
    double xx = 0.0, xy = 0.0, yx = 0.0, yy = 0.0;

    Tensor2 symmetrized() const {
        double off = 0.5 * (xy + yx);
        return {xx, off, off, yy};
    }
};

/// Eigenvalues of the symmetric part, ascending.
inline std::pair<double, double> tensor_sym_eigenvalues(const Tensor2& t) {
    Tensor2 s = t.symmetrized();
    double half_tr = 0.5 * (s.xx + s.yy);
    double det = s.xx * s.yy - s.xy * s.yx;
    double disc = std::sqrt(std::max(0.0, half_tr * half_tr - det));
    return {half_tr - disc, half_tr + disc};
}

/// (harmonic mean, arithmetic mean) of the scalar coefficient over the active
/// cells of a fine rect; {0,0} when nothing is active.
inline std::pair<double, double> kappa_mean_bounds(const CoefficientField& f,
                                                   const CellRect& rect) {
    double inv = 0.0, sum = 0.0;
    int n = 0;
    for (int cy = rect.y0; cy < rect.y1; ++cy)
        for (int cx = rect.x0; cx < rect.x1; ++cx) {
            if (!f.is_active(cx, cy)) continue;
            double k = f.kappa_at(cx, cy);
            inv += 1.0 / k;
            sum += k;
            ++n;
        }
    if (n == 0) return {0.0, 0.0};
    return {n / inv, sum / n};
}

/// Element stiffness of a bilinear quad with a constant 2x2 tensor
/// coefficient; nodes ordered SW, SE, NE, NW. The mixed-derivative blocks are
/// exact (they separate into 1D integrals for bilinear shape functions).
inline std::array<std::array<double, 4>, 4> element_tensor_stiffness(double hx, double hy,
                                                                     const Tensor2& k) {
    static const double axx[4][4] = {{2, -2, -1, 1}, {-2, 2, 1, -1}, {-1, 1, 2, -2}, {1, -1, -2, 2}};
    static const double ayy[4][4] = {{2, 1, -1, -2}, {1, 2, -2, -1}, {-1, -2, 2, 1}, {-2, -1, 1, 2}};
    static const double u[4] = {-0.5, 0.5, 0.5, -0.5};  // integral of d(xi) N over eta
    static const double v[4] = {-0.5, -0.5, 0.5, 0.5};  // integral of d(eta) N over xi
    std::array<std::array<double, 4>, 4> out{};
    double cx = k.xx * hy / hx / 6.0, cy = k.yy * hx / hy / 6.0;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            out[static_cast<size_t>(i)][static_cast<size_t>(j)] =
                cx * axx[i][j] + cy * ayy[i][j] + k.xy * u[i] * v[j] + k.yx * v[i] * u[j];
    return out;
}

/// Dirichlet Poisson solver on a small rectangular grid of child cells with
/// constant tensor coefficients per cell (the symmetric part of each tensor
/// is what enters the operator); the perimeter carries the data.
class TensorGridPoisson {
public:
    TensorGridPoisson(int cw, int ch, double hx, double hy, const std::vector<Tensor2>& cells)
        : cw_(cw),
          ch_(ch),
          wn_(cw + 1),
          hn_(ch + 1),
          full_(wn_ * hn_, wn_ + 1),
          solve_(wn_ * hn_, wn_ + 1),
          prescribed_(static_cast<size_t>(wn_) * hn_, 0) {
        for (int ly = 0; ly < hn_; ++ly)
            for (int lx = 0; lx < wn_; ++lx)
                if (lx == 0 || lx == wn_ - 1 || ly == 0 || ly == hn_ - 1)
                    prescribed_[static_cast<size_t>(ly * wn_ + lx)] = 1;
        for (int cy = 0; cy < ch_; ++cy)
            for (int cx = 0; cx < cw_; ++cx) {
                auto ke = element_tensor_stiffness(
                    hx, hy, cells[static_cast<size_t>(cy * cw_ + cx)].symmetrized());
                int loc[4] = {cy * wn_ + cx, cy * wn_ + cx + 1, (cy + 1) * wn_ + cx + 1,
                              (cy + 1) * wn_ + cx};
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b <= a; ++b)
                        full_.add(loc[a], loc[b], ke[static_cast<size_t>(a)][static_cast<size_t>(b)]);
            }
        // Symmetric Dirichlet elimination into the solve matrix.
        for (int i = 0; i < node_count(); ++i) {
            if (prescribed_[static_cast<size_t>(i)]) {
                solve_.add(i, i, 1.0);
                continue;
            }
            int hb = full_.half_bandwidth();
            for (int j = std::max(0, i - hb); j <= i; ++j) {
                if (prescribed_[static_cast<size_t>(j)]) continue;
                double v = full_.at(i, j);
                if (v != 0.0) solve_.add(i, j, v);
            }
            if (solve_.at(i, i) == 0.0) solve_.add(i, i, 1.0);
        }
        solve_.factor();
    }

    int node_count() const { return wn_ * hn_; }
    bool is_prescribed(int i) const { return prescribed_[static_cast<size_t>(i)] != 0; }

    /// Solves with boundary values g (read at prescribed nodes) and an
    /// optional load on free nodes; returns values at all nodes.
    std::vector<double> solve(const std::vector<double>& g,
                              const std::vector<double>& load = {}) const {
        size_t n = static_cast<size_t>(node_count());
        std::vector<double> gext(n, 0.0);
        for (size_t i = 0; i < n; ++i)
            if (prescribed_[i]) gext[i] = g[i];
        std::vector<double> rhs(n, 0.0);
        full_.sym_multiply(gext, rhs);
        for (size_t i = 0; i < n; ++i) {
            if (prescribed_[i])
                rhs[i] = gext[i];
            else
                rhs[i] = (load.empty() ? 0.0 : load[i]) - rhs[i];
        }
        solve_.solve(rhs);
        return rhs;
    }

private:
    int cw_, ch_;
    int wn_, hn_;
    BandMatrixSym full_;
    BandMatrix solve_;
    std::vector<uint8_t> prescribed_;
};

/// Effective conductivity of one coarse block.
struct EffectiveTensor {
    int level = 0, cx = 0, cy = 0;
    Tensor2 raw;   ///< plain flux average (possibly nonsymmetric)
    Tensor2 sym;   ///< symmetrized copy used in solves
    bool fallback = false;  ///< fully perforated: arithmetic average, flagged
};

/// kappa* of a level-`level` block solved directly on the fine grid: two cell
/// problems with boundary data x and y (zero on interior hole interfaces,
/// matching the global discretization), flux-averaged over the full block
/// area including holes.
inline EffectiveTensor block_tensor_from_fine(const GridHierarchy& h, const CoefficientField& f,
                                              int level, int cx, int cy) {
    EffectiveTensor out;
    out.level = level;
    out.cx = cx;
    out.cy = cy;
    CellRect rect = h.level(level).cell_rect(cx, cy);

    int active = 0;
    double ksum = 0.0;
    for (int iy = rect.y0; iy < rect.y1; ++iy)
        for (int ix = rect.x0; ix < rect.x1; ++ix) {
            ksum += f.kappa_at(ix, iy);
            if (f.is_active(ix, iy)) ++active;
        }
    if (active == 0) {
        double avg = ksum / rect.cell_count();
        out.raw = {avg, 0.0, 0.0, avg};
        out.sym = out.raw;
        out.fallback = true;
        return out;
    }

    LocalPoisson op(h, f, rect);
    int wn = rect.width() + 1;
    double hx = h.hx(), hy = h.hy();
    double area = rect.cell_count() * hx * hy;
    for (int dir = 0; dir < 2; ++dir) {
        std::vector<double> g(static_cast<size_t>(op.node_count()), 0.0);
        for (int ly = 0; ly <= rect.height(); ++ly)
            for (int lx = 0; lx < wn; ++lx) {
                bool per = lx == 0 || lx == wn - 1 || ly == 0 || ly == rect.height();
                if (!per) continue;  // interior prescribed nodes stay zero
                g[static_cast<size_t>(ly * wn + lx)] =
                    dir == 0 ? h.node_x(rect.x0 + lx) : h.node_y(rect.y0 + ly);
            }
        std::vector<double> phi = op.solve(g);
        double fx = 0.0, fy = 0.0;
        for (int iy = rect.y0; iy < rect.y1; ++iy)
            for (int ix = rect.x0; ix < rect.x1; ++ix) {
                if (!f.is_active(ix, iy)) continue;
                int i0 = (iy - rect.y0) * wn + (ix - rect.x0);
                double p1 = phi[static_cast<size_t>(i0)], p2 = phi[static_cast<size_t>(i0 + 1)];
                double p3 = phi[static_cast<size_t>(i0 + wn + 1)], p4 = phi[static_cast<size_t>(i0 + wn)];
                double gx = ((p2 + p3) - (p1 + p4)) / (2.0 * hx);
                double gy = ((p4 + p3) - (p1 + p2)) / (2.0 * hy);
                double k = f.kappa_at(ix, iy);
                fx += k * gx * hx * hy;
                fy += k * gy * hx * hy;
            }
        if (dir == 0) {
            out.raw.xx = fx / area;
            out.raw.yx = fy / area;
        } else {
            out.raw.xy = fx / area;
            out.raw.yy = fy / area;
        }
    }
    out.sym = out.raw.symmetrized();
    return out;
}

/// kappa* of a block whose children already carry effective tensors
/// (symmetrized child tensors are used for both assembly and flux).
inline EffectiveTensor block_tensor_from_children(int cw, int ch, double hx, double hy,
                                                  const std::vector<Tensor2>& children,
                                                  int level, int cx, int cy) {
    EffectiveTensor out;
    out.level = level;
    out.cx = cx;
    out.cy = cy;
    TensorGridPoisson op(cw, ch, hx, hy, children);
    int wn = cw + 1;
    double area = cw * ch * hx * hy;
    for (int dir = 0; dir < 2; ++dir) {
        std::vector<double> g(static_cast<size_t>(op.node_count()), 0.0);
        for (int ly = 0; ly <= ch; ++ly)
            for (int lx = 0; lx <= cw; ++lx)
                g[static_cast<size_t>(ly * wn + lx)] = dir == 0 ? lx * hx : ly * hy;
        std::vector<double> phi = op.solve(g);
        double fx = 0.0, fy = 0.0;
        for (int iy = 0; iy < ch; ++iy)
            for (int ix = 0; ix < cw; ++ix) {
                int i0 = iy * wn + ix;
                double p1 = phi[static_cast<size_t>(i0)], p2 = phi[static_cast<size_t>(i0 + 1)];
                double p3 = phi[static_cast<size_t>(i0 + wn + 1)], p4 = phi[static_cast<size_t>(i0 + wn)];
                double gx = ((p2 + p3) - (p1 + p4)) / (2.0 * hx);
                double gy = ((p4 + p3) - (p1 + p2)) / (2.0 * hy);
                const Tensor2& k = children[static_cast<size_t>(iy * cw + ix)];
                fx += (k.xx * gx + k.xy * gy) * hx * hy;
                fy += (k.yx * gx + k.yy * gy) * hx * hy;
            }
        if (dir == 0) {
            out.raw.xx = fx / area;
            out.raw.yx = fy / area;
        } else {
            out.raw.xy = fx / area;
            out.raw.yy = fy / area;
        }
    }
    out.sym = out.raw.symmetrized();
    return out;
}

/// Effective tensors for every block of every region level, upscaled from the
/// fine grid: levels[l-1] holds level-l blocks row-major.
struct HomogenizationResult {
    std::vector<std::vector<EffectiveTensor>> levels;

    const std::vector<EffectiveTensor>& level(int l) const {
        return levels.at(static_cast<size_t>(l) - 1);
    }
};

inline HomogenizationResult reiterate_homogenize(const GridHierarchy& h,
                                                 const CoefficientField& f) {
    int n_levels = h.num_levels();
    HomogenizationResult res;
    res.levels.resize(static_cast<size_t>(n_levels) - 1);
    for (int l = n_levels - 1; l >= 1; --l) {
        const GridLevel& lv = h.level(l);
        auto& out = res.levels[static_cast<size_t>(l) - 1];
        out.reserve(static_cast<size_t>(lv.nx * lv.ny));
        if (l == n_levels - 1) {
            for (int cy = 0; cy < lv.ny; ++cy)
                for (int cx = 0; cx < lv.nx; ++cx)
                    out.push_back(block_tensor_from_fine(h, f, l, cx, cy));
        } else {
            const GridLevel& child = h.level(l + 1);
            int rx = child.nx / lv.nx, ry = child.ny / lv.ny;
            double chx = h.Lx / child.nx, chy = h.Ly / child.ny;
            const auto& fine_tensors = res.levels[static_cast<size_t>(l)];
            for (int cy = 0; cy < lv.ny; ++cy)
                for (int cx = 0; cx < lv.nx; ++cx) {
                    std::vector<Tensor2> kids(static_cast<size_t>(rx * ry));
                    for (int iy = 0; iy < ry; ++iy)
                        for (int ix = 0; ix < rx; ++ix)
                            kids[static_cast<size_t>(iy * rx + ix)] =
                                fine_tensors[static_cast<size_t>((cy * ry + iy) * child.nx +
                                                                 cx * rx + ix)]
                                    .sym;
                    out.push_back(block_tensor_from_children(rx, ry, chx, chy, kids, l, cx, cy));
                }
        }
    }
    return res;
}

/// Coarse solve with the level-1 effective tensors, prolonged bilinearly to
/// the fine grid and compared against the fine solution.
struct HomogenizedSolve {
    std::vector<double> coarse;  ///< level-1 nodal values (all nodes)
    std::vector<double> fine;    ///< bilinear prolongation (all fine nodes)
    ErrorPair errors;            ///< vs the fine solution on free dofs
    bool zero_reference = false;
};

inline HomogenizedSolve solve_homogenized(const GridHierarchy& h,
                                          const HomogenizationResult& hom, const FineSystem& fs,
                                          const std::vector<double>& u_h, double source = 1.0) {
    const GridLevel& lv = h.level(1);
    std::vector<Tensor2> cells(static_cast<size_t>(lv.nx * lv.ny));
    for (const EffectiveTensor& t : hom.level(1))
        cells[static_cast<size_t>(t.cy * lv.nx + t.cx)] = t.sym;
    double Hx = h.Lx / lv.nx, Hy = h.Ly / lv.ny;
    TensorGridPoisson op(lv.nx, lv.ny, Hx, Hy, cells);

    HomogenizedSolve out;
    int wn = lv.nx + 1;
    std::vector<double> load(static_cast<size_t>(op.node_count()), 0.0);
    for (int cy = 0; cy < lv.ny; ++cy)
        for (int cx = 0; cx < lv.nx; ++cx) {
            double q = source * Hx * Hy / 4.0;
            load[static_cast<size_t>(cy * wn + cx)] += q;
            load[static_cast<size_t>(cy * wn + cx + 1)] += q;
            load[static_cast<size_t>((cy + 1) * wn + cx + 1)] += q;
            load[static_cast<size_t>((cy + 1) * wn + cx)] += q;
        }
    std::vector<double> zero(static_cast<size_t>(op.node_count()), 0.0);
    out.coarse = op.solve(zero, load);

    // Bilinear prolongation onto fine nodes.
    int rx = h.fine_nx / lv.nx, ry = h.fine_ny / lv.ny;
    out.fine.assign(static_cast<size_t>((h.fine_nx + 1) * (h.fine_ny + 1)), 0.0);
    for (int gy = 0; gy <= h.fine_ny; ++gy) {
        int cy = std::min(gy / ry, lv.ny - 1);
        double ey = (gy - cy * ry) / static_cast<double>(ry);
        for (int gx = 0; gx <= h.fine_nx; ++gx) {
            int cx = std::min(gx / rx, lv.nx - 1);
            double ex = (gx - cx * rx) / static_cast<double>(rx);
            double v00 = out.coarse[static_cast<size_t>(cy * wn + cx)];
            double v10 = out.coarse[static_cast<size_t>(cy * wn + cx + 1)];
            double v11 = out.coarse[static_cast<size_t>((cy + 1) * wn + cx + 1)];
            double v01 = out.coarse[static_cast<size_t>((cy + 1) * wn + cx)];
            out.fine[static_cast<size_t>(h.fine_node_id(gx, gy))] =
                (1 - ex) * (1 - ey) * v00 + ex * (1 - ey) * v10 + ex * ey * v11 +
                (1 - ex) * ey * v01;
        }
    }

    std::vector<double> on_dofs(static_cast<size_t>(fs.dofs.n_dofs()), 0.0);
    for (int d = 0; d < fs.dofs.n_dofs(); ++d)
        on_dofs[static_cast<size_t>(d)] =
            out.fine[static_cast<size_t>(fs.dofs.dof_to_node[static_cast<size_t>(d)])];
    double ref_norm = 0.0;
    for (double x : u_h) ref_norm += x * x;
    out.zero_reference = ref_norm == 0.0;
    out.errors = relative_errors(fs.A, fs.M, u_h, on_dofs);
    return out;
}

}  // namespace msfem
