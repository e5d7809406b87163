#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "solver.hpp"

namespace msfem {

enum class EnrichMode { Both, Level1Only, Level2Only };

inline const char* enrich_mode_name(EnrichMode m) {
    switch (m) {
        case EnrichMode::Both: return "both";
        case EnrichMode::Level1Only: return "level1";
        case EnrichMode::Level2Only: return "level2";
    }
    return "?";
}

/// Residual-based error indicator of one region: the squared norm of the
/// residual functional over the next-level test space, scaled by the inverse
/// of the region's next unused eigenvalue.
struct ResidualIndicator {
    int level = 0;
    int vertex = -1;
    double rnorm_sq = 0.0;
    double eta_sq = 0.0;
    bool ladder_exhausted = false;  ///< no next eigenvalue; eta falls back to rnorm
    bool empty_test_space = false;
};

/// Indicator of region (level, vertex) for the fine free-dof residual r.
/// Below the finest region level the test space consists of the active
/// offline bases of contained next-level neighborhoods; at the finest region
/// level it is the fine nodal hats strictly inside the region.
inline ResidualIndicator region_indicator(const GridHierarchy& h, const DofMap& dofs,
                                          const Cascade& c, int level, int vertex,
                                          const std::vector<double>& r) {
    const OfflineSpace& own = c.level_offline(level).at(static_cast<size_t>(vertex));
    ResidualIndicator ind;
    ind.level = level;
    ind.vertex = vertex;
    double rsq = 0.0;
    bool any = false;
    if (level == h.num_levels() - 1) {
        for (int gy = own.rect.y0 + 1; gy < own.rect.y1; ++gy)
            for (int gx = own.rect.x0 + 1; gx < own.rect.x1; ++gx) {
                int d = dofs.node_to_dof[static_cast<size_t>(h.fine_node_id(gx, gy))];
                if (d < 0) continue;
                rsq += r[static_cast<size_t>(d)] * r[static_cast<size_t>(d)];
                any = true;
            }
    } else {
        for (int w : contained_neighborhoods(h, level + 1, own.rect)) {
            const OfflineSpace& o = c.level_offline(level + 1).at(static_cast<size_t>(w));
            if (o.active <= 0) continue;
            BasisBlock bb = take_offline_basis(o, o.active);
            for (double d : block_dots(h, dofs, o.rect, bb.columns, r)) rsq += d * d;
            any = true;
        }
    }
    ind.rnorm_sq = rsq;
    if (!any) {
        ind.empty_test_space = true;
        return ind;
    }
    int a = own.active;
    if (a < own.rank() && own.ladder[static_cast<size_t>(a)] > 0.0) {
        ind.eta_sq = rsq / own.ladder[static_cast<size_t>(a)];
    } else {
        ind.ladder_exhausted = true;
        ind.eta_sq = rsq;
    }
    return ind;
}

/// Bulk (Doerfler) marking: the smallest prefix of descending squared
/// indicators whose sum exceeds theta times the total. Returns positions into
/// the indicator vector; all-zero indicators yield an empty set.
inline std::vector<int> mark(const std::vector<ResidualIndicator>& ind, double theta) {
    std::vector<int> order(ind.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        double ea = ind[static_cast<size_t>(a)].eta_sq, eb = ind[static_cast<size_t>(b)].eta_sq;
        if (ea != eb) return ea > eb;
        return a < b;
    });
    double total = 0.0;
    for (const ResidualIndicator& i : ind) total += i.eta_sq;
    if (total <= 0.0) return {};
    std::vector<int> out;
    double run = 0.0;
    for (int i : order) {
        out.push_back(i);
        run += ind[static_cast<size_t>(i)].eta_sq;
        if (run > theta * total) break;
    }
    return out;
}

struct EnrichOptions {
    EnrichMode mode = EnrichMode::Both;
    double theta = 0.7;
    double tol = 0.0;          ///< stop once the eta-squared sum drops to this
    int max_iter = 5;
    double pause_ratio = 1.05; ///< skip level-1 increments once the ladder flattens
    int dense_limit = 4000;
};

struct EnrichmentRecord {
    int iteration = 0;
    int dof1 = 0;  ///< total active level-1 basis functions
    int dof2 = 0;  ///< level-2 basis functions added beyond the initial counts
    double e1_snap = std::numeric_limits<double>::quiet_NaN();  ///< vs the initial snapshot reference
    double e2_snap = std::numeric_limits<double>::quiet_NaN();  ///< vs the initial snapshot reference
    double eta_sq_sum = 0.0;
    std::vector<int> marked_l1;
    std::vector<int> marked_l2;
};

struct EnrichmentHistory {
    EnrichMode mode = EnrichMode::Both;
    double theta = 0.7;
    std::vector<EnrichmentRecord> records;
    std::vector<std::string> notes;
};

/// The enrichment loop. Per iteration: solve the multiscale problem, compute
/// level-1 indicators and mark; add the next stored eigenfunction in marked
/// level-1 regions (unless paused or exhausted); then, for marked regions
/// where the level-1 route was not taken, mark level-2 regions contained in
/// their neighborhoods, grow their active counts, append the newly activated
/// level-2 functions to the solution space, and regenerate the iterated
/// snapshots and decompositions of exactly the level-1 regions whose pools
/// changed, preserving their active counts.
inline EnrichmentHistory enrich_loop(const GridHierarchy& h, const CoefficientField& field,
                                     const FineSystem& fs, Cascade& c,
                                     const EnrichOptions& opt) {
    if (h.num_levels() < 3)
        throw config_error("adaptive enrichment needs a hierarchy with at least 3 levels");
    EnrichmentHistory hist;
    hist.mode = opt.mode;
    hist.theta = opt.theta;

    int n1 = h.level(1).vertex_count();
    int n2 = h.level(2).vertex_count();
    std::vector<int> init2(static_cast<size_t>(n2), 0);
    for (int w = 0; w < n2; ++w) init2[static_cast<size_t>(w)] = c.level_offline(2)[static_cast<size_t>(w)].active;

    std::vector<double> prev_rnorm(static_cast<size_t>(n1), -1.0);
    std::vector<char> enriched_last(static_cast<size_t>(n1), 0);

    // The snapshot reference is fixed at the initial cascade's snapshot space:
    // pool regeneration below would otherwise move the target between
    // iterations, making the recorded errors incomparable across iterations
    // and across modes started from the same cascade.
    bool snap_ok = false;
    std::vector<double> u_snap;
    {
        CoarseSpace snap = make_snapshot_space(h, c);
        snap_ok = snap.total() > 0 && snap.total() <= opt.dense_limit;
        if (snap_ok) {
            ReducedSystem srs = reduced_system(h, fs.dofs, fs.A, fs.b, snap);
            CoarseSolution ss = solve_coarse_subset(
                h, fs.dofs, snap, srs, columns_upto(snap, std::numeric_limits<int>::max()),
                opt.dense_limit);
            u_snap = std::move(ss.u);
        }
    }

    auto dof1_total = [&] {
        int s = 0;
        for (const OfflineSpace& o : c.level_offline(1)) s += o.active;
        return s;
    };
    auto dof2_added = [&] {
        int s = 0;
        for (int w = 0; w < n2; ++w)
            s += std::max(0, c.level_offline(2)[static_cast<size_t>(w)].active -
                                 init2[static_cast<size_t>(w)]);
        return s;
    };

    // The solution space is the level-1 offline space plus, for every level-2
    // region enriched beyond its initial count, the newly activated level-2
    // basis functions appended as global columns. The appended columns are
    // what the DOF2 ledger counts; the same activations also feed the
    // regenerated level-1 snapshot pools below.
    auto build_space = [&] {
        CoarseSpace cs = make_offline_space(c);
        for (int w = 0; w < n2; ++w) {
            const OfflineSpace& o2 = c.level_offline(2)[static_cast<size_t>(w)];
            int take = std::min(o2.active, o2.stored());
            if (take <= init2[static_cast<size_t>(w)]) continue;
            std::vector<int> idx;
            for (int j = init2[static_cast<size_t>(w)]; j < take; ++j) idx.push_back(j);
            cs.blocks.push_back({o2.vertex, o2.rect, o2.basis.with_columns(idx)});
        }
        finalize_offsets(cs);
        return cs;
    };

    for (int it = 0; it < opt.max_iter; ++it) {
        CoarseSpace cs = build_space();
        ReducedSystem rs = reduced_system(h, fs.dofs, fs.A, fs.b, cs);
        CoarseSolution sol = solve_coarse_subset(h, fs.dofs, cs, rs,
                                                 columns_upto(cs, std::numeric_limits<int>::max()),
                                                 opt.dense_limit);

        EnrichmentRecord rec;
        rec.iteration = it;
        rec.dof1 = dof1_total();
        rec.dof2 = dof2_added();
        if (snap_ok) {
            ErrorPair e = relative_errors(fs.A, fs.M, u_snap, sol.u);
            rec.e1_snap = e.e1;
            rec.e2_snap = e.e2;
        }

        std::vector<double> r = residual(fs.A, fs.b, sol.u);
        std::vector<ResidualIndicator> ind1;
        ind1.reserve(static_cast<size_t>(n1));
        for (int v = 0; v < n1; ++v) {
            if (c.level_offline(1)[static_cast<size_t>(v)].rank() == 0) continue;
            ind1.push_back(region_indicator(h, fs.dofs, c, 1, v, r));
        }
        for (const ResidualIndicator& i : ind1) {
            rec.eta_sq_sum += i.eta_sq;
            size_t v = static_cast<size_t>(i.vertex);
            if (enriched_last[v] && prev_rnorm[v] >= 0.0 &&
                i.rnorm_sq > prev_rnorm[v] * (1.0 + 1e-12))
                hist.notes.push_back("iteration " + std::to_string(it) + ": region " +
                                     std::to_string(i.vertex) +
                                     " residual grew after enrichment");
            prev_rnorm[v] = i.rnorm_sq;
        }
        std::fill(enriched_last.begin(), enriched_last.end(), 0);

        if (rec.eta_sq_sum <= opt.tol || it == opt.max_iter - 1) {
            hist.records.push_back(std::move(rec));
            break;
        }

        // Step 2: mark level-1 regions and take their next eigenfunctions.
        // A marked region escalates to step 3 only when the level-1 route is
        // not taken: its eigenvalue ladder has flattened, its pool is
        // exhausted, or the mode forbids level-1 increments. Adding level-1
        // modes is the cheap route; level-2 enrichment is the escalation for
        // regions where that route has stopped paying.
        std::vector<int> m1 = mark(ind1, opt.theta);
        std::vector<int> step3_targets;
        for (int idx : m1) {
            int v = ind1[static_cast<size_t>(idx)].vertex;
            rec.marked_l1.push_back(v);
            OfflineSpace& o = c.level_offline(1)[static_cast<size_t>(v)];
            bool exhausted = o.active >= o.stored();
            bool paused = false;
            if (!exhausted && o.active >= 1) {
                double lo = o.ladder[static_cast<size_t>(o.active - 1)];
                double hi = o.ladder[static_cast<size_t>(o.active)];
                paused = lo > 0.0 && hi / lo < opt.pause_ratio;
            }
            if (opt.mode != EnrichMode::Level2Only && !exhausted && !paused) {
                ++o.active;
                enriched_last[static_cast<size_t>(v)] = 1;
            } else {
                if (opt.mode == EnrichMode::Level1Only && (exhausted || paused))
                    hist.notes.push_back("iteration " + std::to_string(it) + ": region " +
                                         std::to_string(v) +
                                         (exhausted ? " snapshot space exhausted" : " ladder flat") +
                                         ", level-2 enrichment required");
                step3_targets.push_back(v);
            }
        }

        // Step 3: mark level-2 regions inside the escalated neighborhoods.
        if (opt.mode != EnrichMode::Level1Only && !step3_targets.empty()) {
            std::vector<char> seen(static_cast<size_t>(n2), 0);
            std::vector<int> candidates;
            for (int v : step3_targets) {
                const CellRect& rect = c.level_offline(1)[static_cast<size_t>(v)].rect;
                for (int w : contained_neighborhoods(h, 2, rect))
                    if (!seen[static_cast<size_t>(w)]) {
                        seen[static_cast<size_t>(w)] = 1;
                        if (c.level_offline(2)[static_cast<size_t>(w)].rank() > 0)
                            candidates.push_back(w);
                    }
            }
            std::vector<ResidualIndicator> ind2;
            ind2.reserve(candidates.size());
            for (int w : candidates) ind2.push_back(region_indicator(h, fs.dofs, c, 2, w, r));
            std::vector<int> enriched2;
            for (int idx : mark(ind2, opt.theta)) {
                int w = ind2[static_cast<size_t>(idx)].vertex;
                rec.marked_l2.push_back(w);
                OfflineSpace& o2 = c.level_offline(2)[static_cast<size_t>(w)];
                if (o2.active < o2.stored()) {
                    ++o2.active;
                    enriched2.push_back(w);
                } else {
                    hist.notes.push_back("iteration " + std::to_string(it) + ": level-2 region " +
                                         std::to_string(w) + " snapshot space exhausted");
                }
            }
            if (!enriched2.empty()) {
                std::vector<char> grew(static_cast<size_t>(n2), 0);
                for (int w : enriched2) grew[static_cast<size_t>(w)] = 1;
                const LevelPlan& lp = c.plan.levels[0];
                for (int v = 0; v < n1; ++v) {
                    auto [vx, vy] = h.level(1).vertex_coords(v);
                    CellRect plus = oversample(h, neighborhood(h, 1, vx, vy),
                                               c.plan.oversample_coarse);
                    bool affected = false;
                    for (int w : covering_neighborhoods(h, 2, plus))
                        if (grew[static_cast<size_t>(w)]) {
                            affected = true;
                            break;
                        }
                    if (!affected) continue;
                    std::vector<PoolEntry> pool =
                        basis_pool(h, 1, v, c.offline[1], c.plan.oversample_coarse);
                    SnapshotSpace s = iterated_snapshots(h, field, 1, v, pool, lp.mode,
                                                         effective_snapshot_count(lp),
                                                         c.plan.oversample_coarse, c.plan.seed);
                    OfflineSpace& o = c.level_offline(1)[static_cast<size_t>(v)];
                    int keep_active = o.active;
                    OfflineSpace fresh = s.degenerate
                                             ? OfflineSpace{}
                                             : spectral_decompose(h, field, s, c.plan.store_cap);
                    if (s.degenerate) {
                        fresh.level = 1;
                        fresh.vertex = v;
                        fresh.rect = s.rect;
                    }
                    fresh.active = std::min(keep_active, fresh.stored());
                    c.level_snapshots(1)[static_cast<size_t>(v)] = std::move(s);
                    o = std::move(fresh);
                }
            }
        }
        hist.records.push_back(std::move(rec));
    }
    return hist;
}

}  // namespace msfem
