#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "assembly.hpp"
#include "core.hpp"
#include "dense.hpp"
#include "field.hpp"
#include "grid.hpp"

namespace msfem {

enum class SnapshotMode {
    TraceExhaustive,
    TraceRandomized,
};

/// Local snapshot space of one coarse neighborhood: orthonormalized columns
/// over the nodes of the region rect (row-major).
struct SnapshotSpace {
    int level = 0;
    int vertex = -1;
    CellRect rect;
    DenseMatrix columns;
    SnapshotMode mode = SnapshotMode::TraceExhaustive;
    bool degenerate = false;   ///< region carried no material / empty pool
    bool gamma_empty = false;  ///< no boundary-trace columns; interior pool emitted
    bool clipped = false;      ///< requested count exceeded available data

    int rank() const { return columns.cols(); }
};

/// Column support bounds (node-index half-open range) used to skip empty
/// regions in Gram products between locally supported basis vectors.
struct ColSpan {
    int lo = 0, hi = 0;
};

/// X' Y restricted to overlapping support ranges.
inline DenseMatrix gram_spans(const DenseMatrix& X, const std::vector<ColSpan>& sx,
                              const DenseMatrix& Y, const std::vector<ColSpan>& sy) {
    DenseMatrix G(X.cols(), Y.cols());
    for (int j = 0; j < Y.cols(); ++j) {
        const double* yj = Y.col(j);
        for (int i = 0; i < X.cols(); ++i) {
            int lo = std::max(sx[static_cast<size_t>(i)].lo, sy[static_cast<size_t>(j)].lo);
            int hi = std::min(sx[static_cast<size_t>(i)].hi, sy[static_cast<size_t>(j)].hi);
            if (lo >= hi) continue;
            const double* xi = X.col(i);
            double s = 0.0;
            for (int k = lo; k < hi; ++k) s += xi[k] * yj[k];
            G.at(i, j) = s;
        }
    }
    return G;
}

/// Copies columns given over src_rect nodes onto dst_rect nodes (zero where
/// the rects do not overlap).
inline DenseMatrix restrict_columns(const CellRect& src, const DenseMatrix& cols,
                                    const CellRect& dst) {
    int dw = dst.width() + 1, dh = dst.height() + 1;
    int sw = src.width() + 1;
    DenseMatrix out(dw * dh, cols.cols());
    int x0 = std::max(src.x0, dst.x0), x1 = std::min(src.x1, dst.x1);
    int y0 = std::max(src.y0, dst.y0), y1 = std::min(src.y1, dst.y1);
    if (x0 > x1 || y0 > y1) return out;
    for (int j = 0; j < cols.cols(); ++j) {
        const double* c = cols.col(j);
        double* o = out.col(j);
        for (int gy = y0; gy <= y1; ++gy)
            for (int gx = x0; gx <= x1; ++gx)
                o[(gy - dst.y0) * dw + (gx - dst.x0)] = c[(gy - src.y0) * sw + (gx - src.x0)];
    }
    return out;
}

/// Splits columns into boundary-trace (Gamma) and interior (I) sets: a column
/// belongs to Gamma iff its largest magnitude on the rect perimeter exceeds
/// 1e-12 times its largest magnitude overall.
inline std::pair<std::vector<int>, std::vector<int>> trace_classify(const DenseMatrix& cols,
                                                                    const CellRect& rect) {
    int w = rect.width() + 1, h = rect.height() + 1;
    std::vector<int> gamma, interior;
    for (int j = 0; j < cols.cols(); ++j) {
        const double* c = cols.col(j);
        double all = 0.0, bnd = 0.0;
        for (int ly = 0; ly < h; ++ly)
            for (int lx = 0; lx < w; ++lx) {
                double a = std::abs(c[ly * w + lx]);
                all = std::max(all, a);
                if (lx == 0 || lx == w - 1 || ly == 0 || ly == h - 1) bnd = std::max(bnd, a);
            }
        if (bnd > 1e-12 * all)
            gamma.push_back(j);
        else
            interior.push_back(j);
    }
    return {gamma, interior};
}

/// Interior coefficients of reduced-space harmonic extensions: given the
/// reduced stiffness At (pool coordinates), the Gamma/I index split and
/// boundary coefficients C_gamma (|Gamma| x m), returns the full coefficient
/// matrix (pool x m) minimizing energy subject to the boundary coefficients.
inline DenseMatrix harmonic_extension_coeffs(const DenseMatrix& At,
                                             const std::vector<int>& gamma,
                                             const std::vector<int>& interior,
                                             const DenseMatrix& c_gamma) {
    int ni = static_cast<int>(interior.size()), ng = static_cast<int>(gamma.size());
    int m = c_gamma.cols();
    DenseMatrix full(At.rows(), m);
    for (int j = 0; j < m; ++j)
        for (int g = 0; g < ng; ++g) full.at(gamma[static_cast<size_t>(g)], j) = c_gamma.at(g, j);
    if (ni == 0) return full;

    DenseMatrix Aii(ni, ni);
    for (int a = 0; a < ni; ++a)
        for (int b = 0; b < ni; ++b)
            Aii.at(a, b) = At.at(interior[static_cast<size_t>(a)], interior[static_cast<size_t>(b)]);
    // Rhs block: -A_IG * C_gamma.
    DenseMatrix rhs(ni, m);
    for (int j = 0; j < m; ++j)
        for (int a = 0; a < ni; ++a) {
            double s = 0.0;
            for (int g = 0; g < ng; ++g)
                s -= At.at(interior[static_cast<size_t>(a)], gamma[static_cast<size_t>(g)]) *
                     c_gamma.at(g, j);
            rhs.at(a, j) = s;
        }
    DenseMatrix L = Aii;
    try {
        cholesky_factor(L);
    } catch (const numeric_error&) {
        // Near-dependent pool columns: retry with a relative ridge.
        L = Aii;
        double tr = 0.0;
        for (int a = 0; a < ni; ++a) tr += Aii.at(a, a);
        for (int a = 0; a < ni; ++a) L.at(a, a) += 1e-10 * (tr / ni);
        cholesky_factor(L);
    }
    for (int j = 0; j < m; ++j) {
        std::vector<double> c = rhs.col_copy(j);
        forward_solve(L, c);
        backward_solve(L, c);
        for (int a = 0; a < ni; ++a) full.at(interior[static_cast<size_t>(a)], j) = c[static_cast<size_t>(a)];
    }
    return full;
}

/// Randomized (or trace-exhaustive) harmonic snapshots of a level-(N-1)
/// neighborhood, solved on the oversampled patch on the fine grid and
/// restricted to the region. Boundary data lives on the free nodes of the
/// patch perimeter; globally constrained nodes keep their zero values.
inline SnapshotSpace random_snapshots(const GridHierarchy& h, const CoefficientField& field,
                                      int level, int vertex, SnapshotMode mode, int count,
                                      int oversample_layers, uint64_t seed) {
    const GridLevel& lv = h.level(level);
    auto [vx, vy] = lv.vertex_coords(vertex);
    SnapshotSpace out;
    out.level = level;
    out.vertex = vertex;
    out.rect = neighborhood(h, level, vx, vy);
    out.mode = mode;

    CellRect plus = oversample(h, out.rect, oversample_layers);
    bool any_active = false;
    for (int cy = plus.y0; cy < plus.y1 && !any_active; ++cy)
        for (int cx = plus.x0; cx < plus.x1; ++cx)
            if (field.is_active(cx, cy)) {
                any_active = true;
                break;
            }
    if (!any_active) {
        out.degenerate = true;
        out.columns = DenseMatrix((out.rect.width() + 1) * (out.rect.height() + 1), 0);
        return out;
    }

    LocalPoisson op(h, field, plus);
    int wn = plus.width() + 1, hn = plus.height() + 1;

    // Free data carriers: perimeter nodes that are not globally constrained.
    std::vector<int> carriers;
    bool touches_outer = plus.x0 == 0 || plus.x1 == h.fine_nx || plus.y0 == 0 || plus.y1 == h.fine_ny;
    for (int ly = 0; ly < hn; ++ly)
        for (int lx = 0; lx < wn; ++lx) {
            if (lx != 0 && lx != wn - 1 && ly != 0 && ly != hn - 1) continue;
            int gx = plus.x0 + lx, gy = plus.y0 + ly;
            if (gx == 0 || gx == h.fine_nx || gy == 0 || gy == h.fine_ny) continue;
            bool clean = false;
            for (int dy = -1; dy <= 0; ++dy)
                for (int dx = -1; dx <= 0; ++dx) {
                    int cx = gx + dx, cy = gy + dy;
                    if (cx < 0 || cx >= h.fine_nx || cy < 0 || cy >= h.fine_ny) continue;
                    if (field.is_active(cx, cy)) clean = true;
                }
            // Nodes adjacent to an inactive cell are interface-pinned.
            bool pinned = false;
            for (int dy = -1; dy <= 0 && !pinned; ++dy)
                for (int dx = -1; dx <= 0; ++dx) {
                    int cx = gx + dx, cy = gy + dy;
                    if (cx < 0 || cx >= h.fine_nx || cy < 0 || cy >= h.fine_ny) continue;
                    if (!field.is_active(cx, cy)) {
                        pinned = true;
                        break;
                    }
                }
            if (clean && !pinned) carriers.push_back(ly * wn + lx);
        }

    int n_solve;
    if (mode == SnapshotMode::TraceExhaustive) {
        n_solve = static_cast<int>(carriers.size());
    } else {
        n_solve = count;
        if (n_solve > static_cast<int>(carriers.size())) {
            n_solve = static_cast<int>(carriers.size());
            out.clipped = true;
        }
    }
    if (carriers.empty()) {
        out.degenerate = true;
        out.columns = DenseMatrix((out.rect.width() + 1) * (out.rect.height() + 1), 0);
        return out;
    }

    int extra = (mode == SnapshotMode::TraceRandomized && !touches_outer) ? 1 : 0;
    DenseMatrix sols(op.node_count(), n_solve + extra);
    std::vector<double> g(static_cast<size_t>(op.node_count()), 0.0);
    for (int j = 0; j < n_solve; ++j) {
        std::fill(g.begin(), g.end(), 0.0);
        if (mode == SnapshotMode::TraceExhaustive) {
            g[static_cast<size_t>(carriers[static_cast<size_t>(j)])] = 1.0;
        } else {
            Rng rng = Rng::keyed(seed, static_cast<uint64_t>(level),
                                 static_cast<uint64_t>(vertex), static_cast<uint64_t>(j));
            for (int c : carriers) g[static_cast<size_t>(c)] = rng.uniform_sym();
        }
        sols.set_col(j, op.solve(g));
    }
    if (extra) {
        std::fill(g.begin(), g.end(), 0.0);
        for (int c : carriers) g[static_cast<size_t>(c)] = 1.0;
        sols.set_col(n_solve, op.solve(g));
    }

    DenseMatrix restricted = restrict_columns(plus, sols, out.rect);
    out.columns = orthonormalize(restricted);
    if (out.columns.cols() == 0) out.degenerate = true;
    return out;
}

/// One entry of the finer-level basis pool feeding an iterated snapshot
/// construction.
struct PoolEntry {
    CellRect rect;               ///< support rect of the finer neighborhood
    const DenseMatrix* basis = nullptr;  ///< chi-multiplied basis columns over rect
    int active = 0;              ///< leading columns to use
};

/// Snapshots of a level-l region (l < N-1) built from level-(l+1) offline
/// bases: pool columns with nonzero boundary restriction act as boundary
/// dofs, interior columns are eliminated by an energy-minimizing reduced
/// harmonic extension.
inline SnapshotSpace iterated_snapshots(const GridHierarchy& h, const CoefficientField& field,
                                        int level, int vertex,
                                        const std::vector<PoolEntry>& pool, SnapshotMode mode,
                                        int count, int oversample_layers, uint64_t seed) {
    const GridLevel& lv = h.level(level);
    auto [vx, vy] = lv.vertex_coords(vertex);
    SnapshotSpace out;
    out.level = level;
    out.vertex = vertex;
    out.rect = neighborhood(h, level, vx, vy);
    out.mode = mode;

    CellRect plus = oversample(h, out.rect, oversample_layers);
    int wn = plus.width() + 1, hn = plus.height() + 1;
    int n_nodes = wn * hn;

    // Assemble the pool matrix over the patch.
    int total_cols = 0;
    for (const PoolEntry& p : pool) total_cols += p.active;
    if (total_cols == 0) {
        out.degenerate = true;
        out.columns = DenseMatrix((out.rect.width() + 1) * (out.rect.height() + 1), 0);
        return out;
    }
    DenseMatrix B(n_nodes, total_cols);
    std::vector<ColSpan> spans(static_cast<size_t>(total_cols));
    int col = 0;
    for (const PoolEntry& p : pool) {
        if (p.active == 0) continue;
        DenseMatrix sub = p.basis->with_columns([&] {
            std::vector<int> idx(static_cast<size_t>(p.active));
            for (int i = 0; i < p.active; ++i) idx[static_cast<size_t>(i)] = i;
            return idx;
        }());
        DenseMatrix r = restrict_columns(p.rect, sub, plus);
        int y0 = std::max(p.rect.y0, plus.y0), y1 = std::min(p.rect.y1, plus.y1);
        ColSpan span{(y0 - plus.y0) * wn, (y1 - plus.y0 + 1) * wn};
        for (int j = 0; j < r.cols(); ++j) {
            B.set_col(col, r.col_copy(j));
            spans[static_cast<size_t>(col)] = span;
            ++col;
        }
    }

    auto [gamma, interior] = trace_classify(B, plus);
    if (gamma.empty()) {
        // Nothing can carry boundary data; fall back to the interior pool.
        out.gamma_empty = true;
        DenseMatrix restricted = restrict_columns(plus, B, out.rect);
        out.columns = orthonormalize(restricted);
        if (out.columns.cols() == 0) out.degenerate = true;
        return out;
    }

    // Reduced stiffness over the patch.
    PatchForm aform(h, field, plus, PatchForm::Kind::Stiffness);
    DenseMatrix AB(n_nodes, total_cols);
    std::vector<ColSpan> ab_spans(static_cast<size_t>(total_cols));
    std::vector<double> tmp;
    for (int j = 0; j < total_cols; ++j) {
        aform.apply(B.col_copy(j), tmp);
        AB.set_col(j, tmp);
        ab_spans[static_cast<size_t>(j)] =
            ColSpan{std::max(0, spans[static_cast<size_t>(j)].lo - wn - 1),
                    std::min(n_nodes, spans[static_cast<size_t>(j)].hi + wn + 1)};
    }
    DenseMatrix At = gram_spans(B, spans, AB, ab_spans);
    for (int j = 0; j < total_cols; ++j)
        for (int i = 0; i < j; ++i) {
            double v = 0.5 * (At.at(i, j) + At.at(j, i));
            At.at(i, j) = v;
            At.at(j, i) = v;
        }

    int ng = static_cast<int>(gamma.size());
    DenseMatrix c_gamma;
    if (mode == SnapshotMode::TraceExhaustive) {
        c_gamma = DenseMatrix::identity(ng);
    } else {
        int m = count;
        if (m > ng) out.clipped = true;  // extra draws are linearly dependent
        c_gamma = DenseMatrix(ng, m);
        for (int j = 0; j < m; ++j) {
            Rng rng = Rng::keyed(seed, static_cast<uint64_t>(level),
                                 static_cast<uint64_t>(vertex), static_cast<uint64_t>(j));
            for (int g = 0; g < ng; ++g) c_gamma.at(g, j) = rng.uniform_sym();
        }
    }

    DenseMatrix coeff;
    try {
        coeff = harmonic_extension_coeffs(At, gamma, interior, c_gamma);
    } catch (const numeric_error& e) {
        throw numeric_error("iterated_snapshots: level " + std::to_string(level) + " vertex " +
                            std::to_string(vertex) + ": " + e.what());
    }
    DenseMatrix psi = times(B, coeff);
    DenseMatrix restricted = restrict_columns(plus, psi, out.rect);
    out.columns = orthonormalize(restricted);
    if (out.columns.cols() == 0) out.degenerate = true;
    return out;
}

}  // namespace msfem
