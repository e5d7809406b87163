#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "assembly.hpp"
#include "core.hpp"
#include "dense.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "offline.hpp"
#include "snapshot.hpp"
#include "sparse.hpp"

namespace msfem {

/// Fine-grid discretization: stiffness/mass on free nodes plus the load of a
/// constant source.
struct FineSystem {
    DofMap dofs;
    SparseMatrix A;
    SparseMatrix M;
    std::vector<double> b;
};

inline FineSystem assemble_fine_system(const GridHierarchy& h, const CoefficientField& f,
                                       double source = 1.0) {
    FineSystem fs;
    std::vector<NodeClass> cls = classify_nodes(h, f);
    fs.dofs = make_dof_map(cls);
    if (fs.dofs.n_dofs() == 0) throw config_error("fine system has no free nodes");
    fs.A = assemble_stiffness(h, f, fs.dofs);
    fs.M = assemble_mass(h, f, fs.dofs);
    fs.b = assemble_load(h, f, fs.dofs, {source});
    return fs;
}

/// Reference solve of the fine system. Lexicographic dof numbering keeps the
/// bandwidth at roughly one grid row, so a banded Cholesky factors quickly
/// and is immune to the contrast-driven conditioning that slows CG; wide
/// grids whose band storage would exceed `band_budget` doubles fall back to
/// Jacobi-preconditioned CG.
inline std::vector<double> solve_fine(const FineSystem& fs, double rel_tol = 1e-10,
                                      size_t band_budget = 24'000'000) {
    int n = fs.A.rows();
    int hb = fs.A.half_bandwidth();
    if (n > 0 && (static_cast<size_t>(hb) + 1) * n <= band_budget) {
        BandMatrix band(n, hb);
        fs.A.for_each_entry([&](int i, int j, double v) {
            if (j <= i) band.add(i, j, v);
        });
        band.factor();
        std::vector<double> u = fs.b;
        band.solve(u);
        return u;
    }
    std::vector<double> u;
    cg_solve(fs.A, fs.b, u, rel_tol, 200000);
    return u;
}

/// Zero-padded expansion of a free-dof vector to all grid nodes (row-major).
inline std::vector<double> to_full_grid(const GridHierarchy& h, const DofMap& dofs,
                                        const std::vector<double>& free_vals) {
    std::vector<double> full(static_cast<size_t>((h.fine_nx + 1) * (h.fine_ny + 1)), 0.0);
    for (int d = 0; d < dofs.n_dofs(); ++d)
        full[static_cast<size_t>(dofs.dof_to_node[static_cast<size_t>(d)])] =
            free_vals[static_cast<size_t>(d)];
    return full;
}

/// One region's share of a coarse space: columns over the nodes of its cell
/// rect (row-major local frame). Values at constrained nodes are zero.
struct RegionBlock {
    int vertex = -1;
    CellRect rect;
    DenseMatrix cols;
};

/// Block-structured coarse space over the fine free dofs.
struct CoarseSpace {
    std::vector<RegionBlock> blocks;
    std::vector<int> offsets;  ///< global column offset per block, plus total

    int total() const { return offsets.empty() ? 0 : offsets.back(); }
};

inline void finalize_offsets(CoarseSpace& cs) {
    cs.offsets.assign(1, 0);
    for (const RegionBlock& b : cs.blocks) cs.offsets.push_back(cs.offsets.back() + b.cols.cols());
}

/// Level-1 offline bases as a coarse space. count < 0 keeps each region's
/// active count; otherwise the leading min(count, stored) modes are used.
inline CoarseSpace make_offline_space(const Cascade& c, int count = -1) {
    CoarseSpace cs;
    for (const OfflineSpace& o : c.level_offline(1)) {
        int take = count < 0 ? o.active : std::min(count, o.stored());
        if (take <= 0) continue;
        BasisBlock bb = take_offline_basis(o, take);
        cs.blocks.push_back({o.vertex, o.rect, std::move(bb.columns)});
    }
    finalize_offsets(cs);
    return cs;
}

/// Level-1 snapshot columns multiplied by their partition-of-unity hats: the
/// reference space against which offline accuracy is measured.
inline CoarseSpace make_snapshot_space(const GridHierarchy& h, const Cascade& c) {
    CoarseSpace cs;
    for (const SnapshotSpace& s : c.level_snapshots(1)) {
        if (s.rank() == 0) continue;
        auto [vx, vy] = h.level(1).vertex_coords(s.vertex);
        DenseMatrix cols = s.columns;
        int wn = s.rect.width() + 1;
        for (int j = 0; j < cols.cols(); ++j) {
            double* cc = cols.col(j);
            for (int ly = 0; ly <= s.rect.height(); ++ly) {
                double y = h.node_y(s.rect.y0 + ly);
                for (int lx = 0; lx < wn; ++lx)
                    cc[ly * wn + lx] *= hat_value(h, 1, vx, vy, h.node_x(s.rect.x0 + lx), y);
            }
        }
        cs.blocks.push_back({s.vertex, s.rect, std::move(cols)});
    }
    finalize_offsets(cs);
    return cs;
}

/// Galerkin projection of the fine operator onto a coarse space.
struct ReducedSystem {
    DenseMatrix A;
    std::vector<double> b;
};

inline ReducedSystem reduced_system(const GridHierarchy& h, const DofMap& dofs,
                                    const SparseMatrix& A, const std::vector<double>& b,
                                    const CoarseSpace& cs) {
    int total = cs.total();
    ReducedSystem rs;
    rs.A = DenseMatrix(total, total);
    rs.b.assign(static_cast<size_t>(total), 0.0);
    std::vector<double> xfull(static_cast<size_t>(dofs.n_dofs()), 0.0), yfull;

    int nb = static_cast<int>(cs.blocks.size());
    for (int bw = 0; bw < nb; ++bw) {
        const RegionBlock& w = cs.blocks[static_cast<size_t>(bw)];
        CellRect grown = w.rect.grown(1, h.fine_nx, h.fine_ny);
        int gw = grown.width() + 1, gh = grown.height() + 1;
        int ww = w.rect.width() + 1;
        int kw = w.cols.cols();
        DenseMatrix Y(gw * gh, kw);
        for (int j = 0; j < kw; ++j) {
            const double* col = w.cols.col(j);
            double bdot = 0.0;
            for (int gy = w.rect.y0; gy <= w.rect.y1; ++gy)
                for (int gx = w.rect.x0; gx <= w.rect.x1; ++gx) {
                    int d = dofs.node_to_dof[static_cast<size_t>(h.fine_node_id(gx, gy))];
                    if (d < 0) continue;
                    double v = col[(gy - w.rect.y0) * ww + (gx - w.rect.x0)];
                    xfull[static_cast<size_t>(d)] = v;
                    bdot += v * b[static_cast<size_t>(d)];
                }
            rs.b[static_cast<size_t>(cs.offsets[static_cast<size_t>(bw)] + j)] = bdot;
            A.multiply(xfull, yfull);
            double* yj = Y.col(j);
            for (int gy = grown.y0; gy <= grown.y1; ++gy)
                for (int gx = grown.x0; gx <= grown.x1; ++gx) {
                    int d = dofs.node_to_dof[static_cast<size_t>(h.fine_node_id(gx, gy))];
                    yj[(gy - grown.y0) * gw + (gx - grown.x0)] =
                        d < 0 ? 0.0 : yfull[static_cast<size_t>(d)];
                }
            for (int gy = w.rect.y0; gy <= w.rect.y1; ++gy)
                for (int gx = w.rect.x0; gx <= w.rect.x1; ++gx) {
                    int d = dofs.node_to_dof[static_cast<size_t>(h.fine_node_id(gx, gy))];
                    if (d >= 0) xfull[static_cast<size_t>(d)] = 0.0;
                }
        }
        // Upper block row: pair w against every earlier block (and itself)
        // whose support meets the grown rect.
        for (int bv = 0; bv <= bw; ++bv) {
            const RegionBlock& v = cs.blocks[static_cast<size_t>(bv)];
            int x0 = std::max(v.rect.x0, grown.x0), x1 = std::min(v.rect.x1, grown.x1);
            int y0 = std::max(v.rect.y0, grown.y0), y1 = std::min(v.rect.y1, grown.y1);
            if (x0 > x1 || y0 > y1) continue;
            int vw = v.rect.width() + 1;
            int kv = v.cols.cols();
            int ov = cs.offsets[static_cast<size_t>(bv)], ow = cs.offsets[static_cast<size_t>(bw)];
            for (int gy = y0; gy <= y1; ++gy)
                for (int gx = x0; gx <= x1; ++gx) {
                    int iv = (gy - v.rect.y0) * vw + (gx - v.rect.x0);
                    int ig = (gy - grown.y0) * gw + (gx - grown.x0);
                    for (int i = 0; i < kv; ++i) {
                        double xv = v.cols.at(iv, i);
                        if (xv == 0.0) continue;
                        for (int j = 0; j < kw; ++j)
                            rs.A.at(ov + i, ow + j) += xv * Y.at(ig, j);
                    }
                }
        }
    }
    // Mirror and symmetrize.
    for (int j = 0; j < total; ++j)
        for (int i = 0; i < j; ++i) rs.A.at(j, i) = rs.A.at(i, j);
    return rs;
}

/// Global column indices of the leading `count` modes of every block.
inline std::vector<int> columns_upto(const CoarseSpace& cs, int count) {
    std::vector<int> idx;
    for (size_t bi = 0; bi < cs.blocks.size(); ++bi) {
        int k = std::min(count, cs.blocks[bi].cols.cols());
        for (int j = 0; j < k; ++j) idx.push_back(cs.offsets[bi] + j);
    }
    return idx;
}

/// Per-region variant: counts is indexed by the block's vertex id.
inline std::vector<int> columns_upto(const CoarseSpace& cs, const std::vector<int>& counts) {
    std::vector<int> idx;
    for (size_t bi = 0; bi < cs.blocks.size(); ++bi) {
        int want = counts.at(static_cast<size_t>(cs.blocks[bi].vertex));
        int k = std::min(want, cs.blocks[bi].cols.cols());
        for (int j = 0; j < k; ++j) idx.push_back(cs.offsets[bi] + j);
    }
    return idx;
}

inline DenseMatrix submatrix(const DenseMatrix& A, const std::vector<int>& idx) {
    int n = static_cast<int>(idx.size());
    DenseMatrix out(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            out.at(i, j) = A.at(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    return out;
}

inline std::vector<double> subvector(const std::vector<double>& v, const std::vector<int>& idx) {
    std::vector<double> out(idx.size());
    for (size_t i = 0; i < idx.size(); ++i) out[i] = v[static_cast<size_t>(idx[i])];
    return out;
}

/// Scatters subset coefficients back into a full-length coefficient vector.
inline std::vector<double> scatter_coeff(const std::vector<int>& idx,
                                         const std::vector<double>& sub, int total) {
    std::vector<double> full(static_cast<size_t>(total), 0.0);
    for (size_t i = 0; i < idx.size(); ++i) full[static_cast<size_t>(idx[i])] = sub[i];
    return full;
}

/// Solves the reduced SPD system: dense Cholesky up to dense_limit unknowns,
/// conjugate gradients on a sparsified copy beyond it.
inline std::vector<double> solve_reduced(const DenseMatrix& AH, const std::vector<double>& bH,
                                         int dense_limit = 4000) {
    int n = AH.rows();
    if (n == 0) return {};
    if (n <= dense_limit) {
        DenseMatrix L = AH;
        try {
            cholesky_factor(L);
        } catch (const numeric_error&) {
            L = AH;
            double tr = 0.0;
            for (int i = 0; i < n; ++i) tr += AH.at(i, i);
            for (int i = 0; i < n; ++i) L.at(i, i) += 1e-12 * (tr / n);
            cholesky_factor(L);
        }
        std::vector<double> x = bH;
        forward_solve(L, x);
        backward_solve(L, x);
        return x;
    }
    std::vector<std::tuple<int, int, double>> trip;
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (AH.at(i, j) != 0.0) trip.emplace_back(i, j, AH.at(i, j));
    SparseMatrix S = SparseMatrix::from_triplets(n, trip);
    std::vector<double> x;
    cg_solve(S, bH, x);
    return x;
}

/// Expands coarse coefficients (full-length, zeros for unused columns) into a
/// free-dof fine vector.
inline std::vector<double> expand_coarse(const GridHierarchy& h, const DofMap& dofs,
                                         const CoarseSpace& cs,
                                         const std::vector<double>& coeff) {
    std::vector<double> u(static_cast<size_t>(dofs.n_dofs()), 0.0);
    for (size_t bi = 0; bi < cs.blocks.size(); ++bi) {
        const RegionBlock& blk = cs.blocks[bi];
        int w = blk.rect.width() + 1;
        for (int j = 0; j < blk.cols.cols(); ++j) {
            double c = coeff[static_cast<size_t>(cs.offsets[bi] + j)];
            if (c == 0.0) continue;
            const double* col = blk.cols.col(j);
            for (int gy = blk.rect.y0; gy <= blk.rect.y1; ++gy)
                for (int gx = blk.rect.x0; gx <= blk.rect.x1; ++gx) {
                    int d = dofs.node_to_dof[static_cast<size_t>(h.fine_node_id(gx, gy))];
                    if (d >= 0)
                        u[static_cast<size_t>(d)] +=
                            c * col[(gy - blk.rect.y0) * w + (gx - blk.rect.x0)];
                }
        }
    }
    return u;
}

/// Per-column inner products of a node-rect block against a free-dof vector.
inline std::vector<double> block_dots(const GridHierarchy& h, const DofMap& dofs,
                                      const CellRect& rect, const DenseMatrix& cols,
                                      const std::vector<double>& v) {
    int w = rect.width() + 1;
    std::vector<double> out(static_cast<size_t>(cols.cols()), 0.0);
    for (int j = 0; j < cols.cols(); ++j) {
        const double* col = cols.col(j);
        double s = 0.0;
        for (int gy = rect.y0; gy <= rect.y1; ++gy)
            for (int gx = rect.x0; gx <= rect.x1; ++gx) {
                int d = dofs.node_to_dof[static_cast<size_t>(h.fine_node_id(gx, gy))];
                if (d >= 0) s += col[(gy - rect.y0) * w + (gx - rect.x0)] * v[static_cast<size_t>(d)];
            }
        out[static_cast<size_t>(j)] = s;
    }
    return out;
}

inline std::vector<double> residual(const SparseMatrix& A, const std::vector<double>& b,
                                    const std::vector<double>& u) {
    std::vector<double> r;
    A.multiply(u, r);
    for (size_t i = 0; i < r.size(); ++i) r[i] = b[i] - r[i];
    return r;
}

/// Relative errors of u against a reference: e1 in the mass norm, e2 in the
/// energy norm.
struct ErrorPair {
    double e1 = 0.0, e2 = 0.0;
};

inline ErrorPair relative_errors(const SparseMatrix& A, const SparseMatrix& M,
                                 const std::vector<double>& ref, const std::vector<double>& u) {
    std::vector<double> d(ref.size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = u[i] - ref[i];
    double na = A.quadratic(d, d), nm = M.quadratic(d, d);
    double da = A.quadratic(ref, ref), dm = M.quadratic(ref, ref);
    ErrorPair e;
    auto rel = [](double num, double den) {
        if (den <= 0.0) return num <= 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
        return std::sqrt(std::max(0.0, num) / den);
    };
    e.e1 = rel(nm, dm);
    e.e2 = rel(na, da);
    return e;
}

/// One multiscale solve against an already-built reduced system subset.
struct CoarseSolution {
    std::vector<double> coeff;  ///< full-length coefficients (zeros off-subset)
    std::vector<double> u;      ///< free-dof expansion
    int dof = 0;
};

inline CoarseSolution solve_coarse_subset(const GridHierarchy& h, const DofMap& dofs,
                                          const CoarseSpace& cs, const ReducedSystem& rs,
                                          const std::vector<int>& idx, int dense_limit = 4000) {
    CoarseSolution out;
    out.dof = static_cast<int>(idx.size());
    DenseMatrix AH = submatrix(rs.A, idx);
    std::vector<double> bH = subvector(rs.b, idx);
    std::vector<double> c = solve_reduced(AH, bH, dense_limit);
    out.coeff = scatter_coeff(idx, c, cs.total());
    out.u = expand_coarse(h, dofs, cs, out.coeff);
    return out;
}

}  // namespace msfem
