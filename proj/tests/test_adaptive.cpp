#include "msfem/adaptive.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "oracles.hpp"

using namespace msfem;

namespace {

ResidualIndicator plain(double eta_sq) {
    ResidualIndicator i;
    i.eta_sq = eta_sq;
    return i;
}

struct AdaptiveProblem {
    GridHierarchy h;
    CoefficientField f;
    FineSystem fs;
    Cascade cascade;
};

AdaptiveProblem make_problem(int store_cap = 0) {
    GridHierarchy h = build_hierarchy(40, 40, {{5, 5}, {2, 2}, {4, 4}});
    CoefficientField f = generate_channel_field(40, 40, 31, 200.0, 3, 3, 8);
    FineSystem fs = assemble_fine_system(h, f, 1.0);
    CascadePlan plan = default_plan(3, {2, 2});
    plan.store_cap = store_cap;
    plan.seed = 17;
    Cascade c = build_cascade(h, f, plan);
    return {std::move(h), std::move(f), std::move(fs), std::move(c)};
}

}  // namespace

TEST(Mark, MinimalDescendingPrefix) {
    std::vector<ResidualIndicator> ind{plain(5.0), plain(3.0), plain(1.0), plain(1.0)};
    EXPECT_EQ(mark(ind, 0.7), (std::vector<int>{0, 1}));
    EXPECT_EQ(mark(ind, 0.45), (std::vector<int>{0}));
    EXPECT_EQ(mark(ind, 0.85), (std::vector<int>{0, 1, 2}));
    EXPECT_EQ(mark(ind, 0.95), (std::vector<int>{0, 1, 2, 3}));
    std::vector<ResidualIndicator> zeros{plain(0.0), plain(0.0)};
    EXPECT_TRUE(mark(zeros, 0.7).empty());
}

TEST(Mark, MonotoneInTheta) {
    Rng rng(61);
    std::vector<ResidualIndicator> ind;
    for (int i = 0; i < 20; ++i) ind.push_back(plain(0.01 + rng.uniform01()));
    std::vector<int> prev;
    for (double theta : {0.1, 0.3, 0.5, 0.7, 0.9}) {
        std::vector<int> cur = mark(ind, theta);
        for (int p : prev) EXPECT_NE(std::find(cur.begin(), cur.end(), p), cur.end());
        EXPECT_GE(cur.size(), prev.size());
        prev = cur;
    }
}

TEST(RegionIndicator, ZeroResidualGivesZeroIndicators) {
    AdaptiveProblem p = make_problem();
    std::vector<double> r(static_cast<size_t>(p.fs.dofs.n_dofs()), 0.0);
    for (int v : {0, 7, 14}) {
        ResidualIndicator i = region_indicator(p.h, p.fs.dofs, p.cascade, 1, v, r);
        EXPECT_DOUBLE_EQ(i.rnorm_sq, 0.0);
        EXPECT_DOUBLE_EQ(i.eta_sq, 0.0);
    }
}

TEST(RegionIndicator, MatchesDirectProjectionSum) {
    AdaptiveProblem p = make_problem();
    CoarseSpace cs = make_offline_space(p.cascade);
    ReducedSystem rs = reduced_system(p.h, p.fs.dofs, p.fs.A, p.fs.b, cs);
    CoarseSolution sol = solve_coarse_subset(p.h, p.fs.dofs, cs, rs,
                                             columns_upto(cs, std::numeric_limits<int>::max()));
    std::vector<double> r = residual(p.fs.A, p.fs.b, sol.u);

    int v = p.h.level(1).vertex_id(2, 2);
    const OfflineSpace& own = p.cascade.level_offline(1)[static_cast<size_t>(v)];
    double rsq = 0.0;
    for (int w : contained_neighborhoods(p.h, 2, own.rect)) {
        const OfflineSpace& o = p.cascade.level_offline(2)[static_cast<size_t>(w)];
        int ww = o.rect.width() + 1;
        for (int j = 0; j < o.active; ++j) {
            double s = 0.0;
            for (int gy = o.rect.y0; gy <= o.rect.y1; ++gy)
                for (int gx = o.rect.x0; gx <= o.rect.x1; ++gx) {
                    int d = p.fs.dofs.node_to_dof[static_cast<size_t>(p.h.fine_node_id(gx, gy))];
                    if (d >= 0)
                        s += o.basis.at((gy - o.rect.y0) * ww + (gx - o.rect.x0), j) *
                             r[static_cast<size_t>(d)];
                }
            rsq += s * s;
        }
    }
    ResidualIndicator ind = region_indicator(p.h, p.fs.dofs, p.cascade, 1, v, r);
    EXPECT_NEAR(ind.rnorm_sq, rsq, 1e-12 * (rsq + 1.0));
    ASSERT_FALSE(ind.ladder_exhausted);
    EXPECT_NEAR(ind.eta_sq, rsq / own.ladder[static_cast<size_t>(own.active)], 1e-12 * ind.eta_sq);

    // At the finest region level the test space is the interior fine hats.
    int w2 = p.h.level(2).vertex_id(3, 3);
    const OfflineSpace& own2 = p.cascade.level_offline(2)[static_cast<size_t>(w2)];
    double rsq2 = 0.0;
    for (int gy = own2.rect.y0 + 1; gy < own2.rect.y1; ++gy)
        for (int gx = own2.rect.x0 + 1; gx < own2.rect.x1; ++gx) {
            int d = p.fs.dofs.node_to_dof[static_cast<size_t>(p.h.fine_node_id(gx, gy))];
            if (d >= 0) rsq2 += r[static_cast<size_t>(d)] * r[static_cast<size_t>(d)];
        }
    ResidualIndicator ind2 = region_indicator(p.h, p.fs.dofs, p.cascade, 2, w2, r);
    EXPECT_NEAR(ind2.rnorm_sq, rsq2, 1e-12 * (rsq2 + 1.0));
}

TEST(RegionIndicator, ExhaustedLadderFallsBackToResidualNorm) {
    AdaptiveProblem p = make_problem();
    int v = p.h.level(1).vertex_id(1, 1);
    OfflineSpace& own = p.cascade.level_offline(1)[static_cast<size_t>(v)];
    own.active = own.rank();  // pretend every mode is in use
    std::vector<double> r(static_cast<size_t>(p.fs.dofs.n_dofs()), 0.5);
    ResidualIndicator ind = region_indicator(p.h, p.fs.dofs, p.cascade, 1, v, r);
    EXPECT_TRUE(ind.ladder_exhausted);
    EXPECT_DOUBLE_EQ(ind.eta_sq, ind.rnorm_sq);
    EXPECT_GT(ind.rnorm_sq, 0.0);
}

TEST(EnrichLoop, BothModeGrowsBothLevelsAndImproves) {
    // Store cap of four modes per region: two increments exhaust a region,
    // after which marked regions escalate to level 2 and the DOF2 ledger
    // grows.
    AdaptiveProblem p = make_problem(4);
    EnrichOptions opt;
    opt.mode = EnrichMode::Both;
    opt.max_iter = 6;
    EnrichmentHistory hist = enrich_loop(p.h, p.f, p.fs, p.cascade, opt);
    ASSERT_EQ(hist.records.size(), 6u);
    EXPECT_EQ(hist.records[0].dof1, 36 * 2);
    EXPECT_EQ(hist.records[0].dof2, 0);
    for (size_t i = 1; i < hist.records.size(); ++i) {
        EXPECT_GE(hist.records[i].dof1, hist.records[i - 1].dof1);
        EXPECT_GE(hist.records[i].dof2, hist.records[i - 1].dof2);
    }
    EXPECT_GT(hist.records.back().dof1, hist.records.front().dof1);
    EXPECT_GT(hist.records.back().dof2, 0);
    for (size_t i = 0; i + 1 < hist.records.size(); ++i) {
        EXPECT_FALSE(hist.records[i].marked_l1.empty());
        EXPECT_GT(hist.records[i].eta_sq_sum, 0.0);
    }
    // Last record is a solve without enrichment.
    EXPECT_TRUE(hist.records.back().marked_l1.empty());
    // Snapshot reference available on this small problem.
    EXPECT_TRUE(std::isfinite(hist.records[0].e2_snap));
    EXPECT_LT(hist.records.back().e2_snap, hist.records.front().e2_snap);
    EXPECT_LT(hist.records.back().eta_sq_sum, hist.records.front().eta_sq_sum);
}

TEST(EnrichLoop, LevelOneHeadroomDefersLevelTwo) {
    // While every marked region still has level-1 modes to take and a steep
    // eigenvalue ladder, both-level mode spends nothing on level 2: the
    // escalation is reserved for regions whose level-1 route has stopped.
    AdaptiveProblem p = make_problem();
    std::vector<int> before;
    for (const OfflineSpace& o : p.cascade.level_offline(2)) before.push_back(o.active);
    EnrichOptions opt;
    opt.mode = EnrichMode::Both;
    opt.max_iter = 3;
    opt.pause_ratio = 1.0;  // a ladder never flattens at ratio 1; only exhaustion escalates
    EnrichmentHistory hist = enrich_loop(p.h, p.f, p.fs, p.cascade, opt);
    for (const EnrichmentRecord& r : hist.records) {
        EXPECT_EQ(r.dof2, 0);
        EXPECT_TRUE(r.marked_l2.empty());
    }
    for (size_t w = 0; w < before.size(); ++w)
        EXPECT_EQ(p.cascade.level_offline(2)[w].active, before[w]);
    EXPECT_GT(hist.records.back().dof1, hist.records.front().dof1);
}

TEST(EnrichLoop, Level1OnlyLeavesLevelTwoAlone) {
    AdaptiveProblem p = make_problem();
    std::vector<int> before;
    for (const OfflineSpace& o : p.cascade.level_offline(2)) before.push_back(o.active);
    EnrichOptions opt;
    opt.mode = EnrichMode::Level1Only;
    opt.max_iter = 3;
    EnrichmentHistory hist = enrich_loop(p.h, p.f, p.fs, p.cascade, opt);
    for (const EnrichmentRecord& r : hist.records) {
        EXPECT_EQ(r.dof2, 0);
        EXPECT_TRUE(r.marked_l2.empty());
    }
    for (size_t w = 0; w < before.size(); ++w)
        EXPECT_EQ(p.cascade.level_offline(2)[w].active, before[w]);
    EXPECT_GT(hist.records.back().dof1, hist.records.front().dof1);
}

TEST(EnrichLoop, Level2OnlyKeepsLevelOneCounts) {
    AdaptiveProblem p = make_problem();
    EnrichOptions opt;
    opt.mode = EnrichMode::Level2Only;
    opt.max_iter = 3;
    EnrichmentHistory hist = enrich_loop(p.h, p.f, p.fs, p.cascade, opt);
    for (const EnrichmentRecord& r : hist.records) EXPECT_EQ(r.dof1, 36 * 2);
    EXPECT_GT(hist.records.back().dof2, 0);
    // Level-2 growth feeds back through regenerated level-1 snapshot spaces.
    EXPECT_LE(hist.records.back().e2_snap, hist.records.front().e2_snap * 1.5);
}

TEST(EnrichLoop, InfiniteToleranceStopsAfterOneSolve) {
    AdaptiveProblem p = make_problem();
    EnrichOptions opt;
    opt.tol = std::numeric_limits<double>::infinity();
    opt.max_iter = 10;
    EnrichmentHistory hist = enrich_loop(p.h, p.f, p.fs, p.cascade, opt);
    ASSERT_EQ(hist.records.size(), 1u);
    EXPECT_TRUE(hist.records[0].marked_l1.empty());
    EXPECT_EQ(hist.records[0].dof1, 36 * 2);
    EXPECT_EQ(hist.records[0].dof2, 0);
}

TEST(EnrichLoop, RejectsTwoLevelHierarchy) {
    GridHierarchy h = build_hierarchy(16, 16, {{4, 4}, {4, 4}});
    CoefficientField f = CoefficientField::constant(16, 16);
    FineSystem fs = assemble_fine_system(h, f, 1.0);
    CascadePlan plan = default_plan(2, {2});
    Cascade c = build_cascade(h, f, plan);
    EnrichOptions opt;
    EXPECT_THROW(enrich_loop(h, f, fs, c, opt), config_error);
}
