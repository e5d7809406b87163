#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "assembly.hpp"
#include "core.hpp"
#include "dense.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "snapshot.hpp"

namespace msfem {

/// Spectral (offline) space of one neighborhood: dominant modes of the local
/// a/s pencil over the snapshot space, multiplied by the partition-of-unity
/// hat of the region's vertex.
struct OfflineSpace {
    int level = 0;
    int vertex = -1;
    CellRect rect;
    std::vector<double> ladder;  ///< full ascending eigenvalue ladder
    DenseMatrix raw_modes;       ///< eigenfunctions in nodal values (before PoU), capped
    DenseMatrix basis;           ///< chi-multiplied modes, capped like raw_modes
    int active = 0;              ///< basis functions currently in use
    bool clipped = false;        ///< a request exceeded the snapshot rank

    int rank() const { return static_cast<int>(ladder.size()); }
    int stored() const { return basis.cols(); }
};

/// Solves the local spectral problem a(u,v) = lambda s(u,v) over the span of
/// the snapshot columns and forms the partition-of-unity-multiplied basis.
/// store_cap limits how many modes are materialized (0 = all); the full
/// eigenvalue ladder is always retained.
inline OfflineSpace spectral_decompose(const GridHierarchy& h, const CoefficientField& field,
                                       const SnapshotSpace& snap, int store_cap = 0) {
    OfflineSpace off;
    off.level = snap.level;
    off.vertex = snap.vertex;
    off.rect = snap.rect;
    int k = snap.columns.cols();
    if (k == 0) return off;
    auto [vx, vy] = h.level(snap.level).vertex_coords(snap.vertex);

    PatchForm aform(h, field, snap.rect, PatchForm::Kind::Stiffness);
    PatchForm sform(h, field, snap.rect, PatchForm::Kind::WeightedMass, snap.level, vx, vy);
    int n = snap.columns.rows();
    DenseMatrix FA(n, k), FS(n, k);
    std::vector<double> t;
    for (int j = 0; j < k; ++j) {
        aform.apply(snap.columns.col_copy(j), t);
        FA.set_col(j, t);
        sform.apply(snap.columns.col_copy(j), t);
        FS.set_col(j, t);
    }
    DenseMatrix A_red = transpose_times(snap.columns, FA);
    DenseMatrix S_red = transpose_times(snap.columns, FS);
    for (int j = 0; j < k; ++j)
        for (int i = 0; i < j; ++i) {
            double a = 0.5 * (A_red.at(i, j) + A_red.at(j, i));
            A_red.at(i, j) = a;
            A_red.at(j, i) = a;
            double s = 0.5 * (S_red.at(i, j) + S_red.at(j, i));
            S_red.at(i, j) = s;
            S_red.at(j, i) = s;
        }

    GenEigResult eig;
    try {
        eig = dense_gen_eig(A_red, S_red);
    } catch (const numeric_error& e) {
        throw numeric_error("spectral_decompose: level " + std::to_string(snap.level) +
                            " vertex " + std::to_string(snap.vertex) + ": " + e.what());
    }
    off.ladder = eig.values;

    int stored = (store_cap > 0) ? std::min(store_cap, k) : k;
    std::vector<int> keep(static_cast<size_t>(stored));
    for (int j = 0; j < stored; ++j) keep[static_cast<size_t>(j)] = j;
    off.raw_modes = times(snap.columns, eig.vectors.with_columns(keep));

    // Nodal multiplication by the hat of this region's vertex.
    off.basis = off.raw_modes;
    int wn = snap.rect.width() + 1;
    for (int j = 0; j < stored; ++j) {
        double* c = off.basis.col(j);
        for (int ly = 0; ly <= snap.rect.height(); ++ly) {
            double y = h.node_y(snap.rect.y0 + ly);
            for (int lx = 0; lx < wn; ++lx) {
                double x = h.node_x(snap.rect.x0 + lx);
                c[ly * wn + lx] *= hat_value(h, snap.level, vx, vy, x, y);
            }
        }
    }
    return off;
}

struct BasisBlock {
    DenseMatrix columns;
    bool clipped = false;
};

/// First `count` chi-multiplied modes in eigenvalue order; clips to the
/// stored modes when the request exceeds them.
inline BasisBlock take_offline_basis(const OfflineSpace& off, int count) {
    BasisBlock out;
    int take = std::min(count, off.stored());
    out.clipped = count > take;
    std::vector<int> idx(static_cast<size_t>(take));
    for (int j = 0; j < take; ++j) idx[static_cast<size_t>(j)] = j;
    out.columns = off.basis.with_columns(idx);
    return out;
}

struct LevelPlan {
    int count = 2;                                     ///< offline basis per region
    SnapshotMode mode = SnapshotMode::TraceExhaustive;
    int snapshot_count = 0;                            ///< randomized draws; 0 = 2*count+8
};

struct CascadePlan {
    std::vector<LevelPlan> levels;  ///< one per level 1..N-1 (region levels)
    uint64_t seed = 1;
    int oversample_fine = 4;    ///< fine-cell layers around level-(N-1) patches
    int oversample_coarse = 0;  ///< fine-cell layers at coarser levels
    int store_cap = 0;          ///< per-region stored-mode cap (0 = keep all)
    bool keep_snapshots = true; ///< retain snapshot columns after decomposition
};

/// Conventional plan: randomized snapshots at the finest region level (the
/// paper's initialization), exhaustive boundary traces above it.
inline CascadePlan default_plan(int num_levels, const std::vector<int>& counts) {
    CascadePlan plan;
    plan.levels.resize(static_cast<size_t>(num_levels) - 1);
    for (size_t l = 0; l < plan.levels.size(); ++l) {
        plan.levels[l].count = counts.at(l);
        plan.levels[l].mode = (static_cast<int>(l) == num_levels - 2)
                                  ? SnapshotMode::TraceRandomized
                                  : SnapshotMode::TraceExhaustive;
    }
    return plan;
}

/// The complete multilevel construction: snapshot and offline spaces for
/// every region of every level, built from the fine grid upward.
struct Cascade {
    CascadePlan plan;
    std::vector<std::vector<SnapshotSpace>> snapshots;  ///< [level-1][vertex]
    std::vector<std::vector<OfflineSpace>> offline;     ///< [level-1][vertex]

    const std::vector<OfflineSpace>& level_offline(int l) const {
        return offline.at(static_cast<size_t>(l) - 1);
    }
    std::vector<OfflineSpace>& level_offline(int l) {
        return offline.at(static_cast<size_t>(l) - 1);
    }
    const std::vector<SnapshotSpace>& level_snapshots(int l) const {
        return snapshots.at(static_cast<size_t>(l) - 1);
    }
    std::vector<SnapshotSpace>& level_snapshots(int l) {
        return snapshots.at(static_cast<size_t>(l) - 1);
    }
};

/// Basis pool of level-(l+1) spaces feeding the snapshots of one level-l
/// region: every finer neighborhood whose patch meets the (possibly
/// oversampled) region.
inline std::vector<PoolEntry> basis_pool(const GridHierarchy& h, int level, int vertex,
                                         const std::vector<OfflineSpace>& finer,
                                         int oversample_layers) {
    auto [vx, vy] = h.level(level).vertex_coords(vertex);
    CellRect plus = oversample(h, neighborhood(h, level, vx, vy), oversample_layers);
    std::vector<PoolEntry> pool;
    for (int v : covering_neighborhoods(h, level + 1, plus)) {
        const OfflineSpace& o = finer.at(static_cast<size_t>(v));
        if (o.active > 0) pool.push_back({o.rect, &o.basis, o.active});
    }
    return pool;
}

inline int effective_snapshot_count(const LevelPlan& lp) {
    return lp.snapshot_count > 0 ? lp.snapshot_count : 2 * lp.count + 8;
}

/// Runs the full construction: randomized fine-level snapshots, then for
/// each level from fine to coarse a spectral decomposition per region and,
/// above level 1, iterated snapshots for the next-coarser level.
inline Cascade build_cascade(const GridHierarchy& h, const CoefficientField& field,
                             const CascadePlan& plan) {
    int n_levels = h.num_levels();
    if (static_cast<int>(plan.levels.size()) != n_levels - 1)
        throw config_error("cascade plan must configure levels 1.." +
                           std::to_string(n_levels - 1));
    Cascade c;
    c.plan = plan;
    c.snapshots.resize(static_cast<size_t>(n_levels) - 1);
    c.offline.resize(static_cast<size_t>(n_levels) - 1);

    for (int l = n_levels - 1; l >= 1; --l) {
        const LevelPlan& lp = plan.levels.at(static_cast<size_t>(l) - 1);
        const GridLevel& lv = h.level(l);
        auto& snaps = c.snapshots[static_cast<size_t>(l) - 1];
        auto& offs = c.offline[static_cast<size_t>(l) - 1];
        snaps.reserve(static_cast<size_t>(lv.vertex_count()));
        offs.reserve(static_cast<size_t>(lv.vertex_count()));
        for (int v = 0; v < lv.vertex_count(); ++v) {
            SnapshotSpace s;
            if (l == n_levels - 1) {
                s = random_snapshots(h, field, l, v, lp.mode, effective_snapshot_count(lp),
                                     plan.oversample_fine, plan.seed);
            } else {
                std::vector<PoolEntry> pool =
                    basis_pool(h, l, v, c.offline[static_cast<size_t>(l)], plan.oversample_coarse);
                s = iterated_snapshots(h, field, l, v, pool, lp.mode,
                                       effective_snapshot_count(lp), plan.oversample_coarse,
                                       plan.seed);
            }
            OfflineSpace o = s.degenerate ? OfflineSpace{}
                                          : spectral_decompose(h, field, s, plan.store_cap);
            if (s.degenerate) {
                o.level = l;
                o.vertex = v;
                o.rect = s.rect;
            }
            o.active = std::min(lp.count, o.stored());
            o.clipped = !s.degenerate && o.active < lp.count;
            if (!plan.keep_snapshots) s.columns = DenseMatrix(s.columns.rows(), 0);
            snaps.push_back(std::move(s));
            offs.push_back(std::move(o));
        }
    }
    return c;
}

}  // namespace msfem
