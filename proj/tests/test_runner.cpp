#include "msfem/runner.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace fs = std::filesystem;
using namespace msfem;

namespace {

std::string temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("msfem_runner_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ExperimentConfig small_three_level() {
    ExperimentConfig cfg;
    cfg.fine_nx = cfg.fine_ny = 16;
    cfg.factors = {{2, 2}, {2, 2}, {4, 4}};
    cfg.basis = {2, 2};
    cfg.snapshot_counts = {0, 0};
    cfg.modes = {SnapshotMode::TraceExhaustive, SnapshotMode::TraceRandomized};
    return cfg;
}

double field_as_double(const std::string& s) { return std::strtod(s.c_str(), nullptr); }

}  // namespace

TEST(ParseConfig, RoundTripsThroughSerialize) {
    ExperimentConfig cfg = small_three_level();
    cfg.Lx = 2.0;
    cfg.Ly = 0.5;
    cfg.sweep_n1 = {1, 2, 4};
    cfg.sweep_n2 = {2, 3};
    cfg.oversample_fine = 3;
    cfg.theta = 0.55;
    cfg.tol = 1e-6;
    cfg.max_iter = 7;
    cfg.seed = 12345;
    cfg.kappa_constant = 2.25;
    cfg.source = -1.5;
    cfg.output_dir = "out/some_dir";
    cfg.label = "demo";
    ExperimentConfig back = parse_config_text(serialize_config(cfg), "round-trip");
    EXPECT_EQ(back, cfg);
}

TEST(ParseConfig, AppliesDefaultsForOmittedKeys) {
    ExperimentConfig cfg = parse_config_text(
        "fine_nx = 16\nfine_ny = 16\nfactors = 2x2,2x2,4x4\n", "defaults");
    EXPECT_EQ(cfg.basis, (std::vector<int>{2, 2}));
    EXPECT_EQ(cfg.snapshot_counts, (std::vector<int>{0, 0}));
    ASSERT_EQ(cfg.modes.size(), 2u);
    EXPECT_EQ(cfg.modes[0], SnapshotMode::TraceExhaustive);
    EXPECT_EQ(cfg.modes[1], SnapshotMode::TraceRandomized);
    EXPECT_EQ(cfg.Lx, 1.0);
    EXPECT_EQ(cfg.theta, 0.7);
    EXPECT_EQ(cfg.seed, 1u);
    EXPECT_EQ(cfg.level_config(), "3level");
}

TEST(ParseConfig, RejectsUnknownKeysWithTheirLine) {
    std::string text =
        "fine_nx = 16\nfine_ny = 16\nfactors = 2x2,2x2,4x4\nN1 = 3\nN3 = 2\n";
    try {
        parse_config_text(text, "cfg");
        FAIL() << "expected config_error";
    } catch (const config_error& e) {
        std::string what = e.what();
        EXPECT_NE(what.find("unknown key `N3`"), std::string::npos) << what;
        EXPECT_NE(what.find("line 5"), std::string::npos) << what;
    }
}

TEST(ParseConfig, ReportsMissingAndMalformedKeysWithLines) {
    try {
        parse_config_text("fine_nx = 16\nfine_ny = 16\n", "cfg");
        FAIL() << "expected config_error";
    } catch (const config_error& e) {
        EXPECT_NE(std::string(e.what()).find("missing required key `factors`"),
                  std::string::npos)
            << e.what();
    }
    try {
        parse_config_text("fine_nx = abc\nfine_ny = 16\nfactors = 2x2,8x8\n", "cfg");
        FAIL() << "expected config_error";
    } catch (const config_error& e) {
        std::string what = e.what();
        EXPECT_NE(what.find("line 1"), std::string::npos) << what;
        EXPECT_NE(what.find("integer"), std::string::npos) << what;
    }
    EXPECT_THROW(parse_config_text("fine_nx = 16\nfine_ny = 16\nfactors = 2x2,8x8\nno_equals_here\n", "cfg"),
                 config_error);
    EXPECT_THROW(parse_config_text("fine_nx = 16\nfine_nx = 17\nfine_ny = 16\nfactors = 2x2,8x8\n", "cfg"),
                 config_error);
}

TEST(ParseConfig, DivisibilityFailuresSurfaceAsConfigErrors) {
    EXPECT_THROW(parse_config_text("fine_nx = 10\nfine_ny = 10\nfactors = 3x3,2x2\n", "cfg"),
                 config_error);
    EXPECT_THROW(parse_config_text("fine_nx = 16\nfine_ny = 16\nfactors = 4x4\n", "cfg"),
                 config_error);
}

TEST(ParseConfig, FileVariantChecksReferencedPaths) {
    std::string dir = temp_dir("paths");
    std::string cfg_path = dir + "/a.cfg";
    {
        std::ofstream out(cfg_path);
        out << "fine_nx = 8\nfine_ny = 8\nfactors = 2x2,4x4\n";
        out << "kappa_raster = " << dir << "/missing.txt\n";
    }
    EXPECT_THROW(parse_config(cfg_path), config_error);

    Raster kappa{8, 8, std::vector<double>(64, 1.0)};
    write_raster(kappa, dir + "/kappa.txt");
    {
        std::ofstream out(cfg_path);
        out << "fine_nx = 8\nfine_ny = 8\nfactors = 2x2,4x4\n";
        out << "kappa_raster = " << dir << "/kappa.txt\n";
    }
    ExperimentConfig cfg = parse_config(cfg_path);
    CoefficientField f = config_field(cfg);
    EXPECT_EQ(f.active_count(), 64);
}

TEST(RunSweep, SingleCellMatchesADirectSubsetSolve) {
    ExperimentConfig cfg = small_three_level();
    cfg.seed = 3;
    cfg.output_dir = temp_dir("sweep_direct");
    cfg.sweep_n1 = {1, 2};
    std::vector<SweepRow> rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 2u);

    GridHierarchy h = config_hierarchy(cfg);
    CoefficientField field = config_field(cfg);
    FineSystem fs = config_fine_system(cfg, h, field);
    std::vector<double> u_h = solve_fine(fs);
    Cascade c = build_cascade(h, field, config_plan(cfg));
    CoarseSpace cs = make_offline_space(c);
    ReducedSystem rs = reduced_system(h, fs.dofs, fs.A, fs.b, cs);
    for (size_t i = 0; i < rows.size(); ++i) {
        int n1 = rows[i].n1;
        CoarseSolution sol = solve_coarse_subset(h, fs.dofs, cs, rs, columns_upto(cs, n1));
        ErrorPair err = relative_errors(fs.A, fs.M, u_h, sol.u);
        EXPECT_EQ(rows[i].dof, sol.dof);
        EXPECT_EQ(rows[i].err.e2, err.e2) << n1;
        EXPECT_EQ(rows[i].err.e1, err.e1) << n1;
    }
    EXPECT_GT(rows[0].err.e2, rows[1].err.e2);
}

TEST(RunSweep, WritesTheDocumentedHeaderAndReparses) {
    ExperimentConfig cfg = small_three_level();
    cfg.output_dir = temp_dir("sweep_csv");
    cfg.sweep_n1 = {1, 2};
    cfg.sweep_n2 = {1, 2};
    std::vector<SweepRow> rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 4u);

    Csv csv = read_csv(cfg.output_dir + "/errors.csv");
    std::vector<std::string> want = {"level_config", "N1", "N2",      "N3",     "DOF",
                                     "e1",           "e2", "e1_snap", "e2_snap"};
    EXPECT_EQ(csv.columns, want);
    ASSERT_EQ(csv.rows.size(), 4u);
    for (size_t i = 0; i < csv.rows.size(); ++i) {
        EXPECT_EQ(csv.rows[i][0], "3level");
        EXPECT_EQ(csv.rows[i][1], std::to_string(rows[i].n1));
        EXPECT_EQ(csv.rows[i][2], std::to_string(rows[i].n2));
        EXPECT_EQ(csv.rows[i][3], "0");
        EXPECT_EQ(field_as_double(csv.rows[i][5]), rows[i].err.e1);
        EXPECT_EQ(field_as_double(csv.rows[i][6]), rows[i].err.e2);
        ASSERT_TRUE(rows[i].snap_ok);
        EXPECT_EQ(field_as_double(csv.rows[i][8]), rows[i].err_snap.e2);
    }
    std::string first_line = slurp(cfg.output_dir + "/errors.csv");
    EXPECT_EQ(first_line.substr(0, first_line.find('\n')),
              "level_config,N1,N2,N3,DOF,e1,e2,e1_snap,e2_snap");
}

TEST(RunSweep, RepeatedRunsProduceByteIdenticalCsvs) {
    ExperimentConfig cfg = small_three_level();
    cfg.modes[1] = SnapshotMode::TraceRandomized;
    cfg.seed = 77;
    cfg.sweep_n1 = {1, 3};
    cfg.sweep_n2 = {2};
    cfg.output_dir = temp_dir("sweep_rep_a");
    run_sweep(cfg);
    std::string a = slurp(cfg.output_dir + "/errors.csv");
    cfg.output_dir = temp_dir("sweep_rep_b");
    run_sweep(cfg);
    std::string b = slurp(cfg.output_dir + "/errors.csv");
    EXPECT_FALSE(a.empty());
    EXPECT_EQ(a, b);
}

TEST(RunAdapt, CoversAllModesAndSharesTheInitialIterate) {
    ExperimentConfig cfg = small_three_level();
    cfg.max_iter = 2;
    cfg.output_dir = temp_dir("adapt");
    std::vector<EnrichmentHistory> runs = run_adapt(cfg);
    ASSERT_EQ(runs.size(), 3u);
    EXPECT_EQ(runs[0].mode, EnrichMode::Both);
    EXPECT_EQ(runs[1].mode, EnrichMode::Level1Only);
    EXPECT_EQ(runs[2].mode, EnrichMode::Level2Only);
    for (const EnrichmentHistory& hist : runs) ASSERT_GE(hist.records.size(), 1u);
    // Same plan and seed: the pre-enrichment iterate is shared by all modes.
    EXPECT_EQ(runs[0].records[0].e2_snap, runs[1].records[0].e2_snap);
    EXPECT_EQ(runs[0].records[0].e2_snap, runs[2].records[0].e2_snap);
    EXPECT_EQ(runs[0].records[0].dof1, runs[2].records[0].dof1);

    Csv csv = read_csv(cfg.output_dir + "/adapt.csv");
    std::vector<std::string> want = {"mode",    "iteration",  "DOF1",      "DOF2",     "e2_snap",
                                     "e1_snap", "eta_sq_sum", "marked_l1", "marked_l2"};
    EXPECT_EQ(csv.columns, want);
    size_t total = 0;
    for (const EnrichmentHistory& hist : runs) total += hist.records.size();
    EXPECT_EQ(csv.rows.size(), total);
    EXPECT_EQ(csv.rows[0][0], "both");
}

TEST(RunSolve, WritesSolutionAndReferenceRasters) {
    ExperimentConfig cfg = small_three_level();
    // A 4x4 level-1 grid has nine interior vertices, so the coarse space can
    // actually track the reference away from the domain center.
    cfg.factors = {{4, 4}, {2, 2}, {2, 2}};
    cfg.output_dir = temp_dir("solve");
    SolveSummary s = run_solve(cfg);
    EXPECT_GT(s.dof, 0);
    EXPECT_GT(s.err.e2, 0.0);
    EXPECT_LT(s.err.e2, 1.0);
    Raster sol = read_raster(cfg.output_dir + "/solution.txt");
    Raster ref = read_raster(cfg.output_dir + "/reference.txt");
    EXPECT_EQ(sol.nx, 17);
    EXPECT_EQ(sol.ny, 17);
    EXPECT_EQ(ref.nx, 17);
    // Dirichlet boundary: the written rasters vanish on the outer ring.
    for (int i = 0; i < 17; ++i) {
        EXPECT_EQ(sol.at(i, 0), 0.0);
        EXPECT_EQ(sol.at(i, 16), 0.0);
        EXPECT_EQ(sol.at(0, i), 0.0);
        EXPECT_EQ(sol.at(16, i), 0.0);
    }
    double linf = 0.0;
    for (size_t i = 0; i < sol.values.size(); ++i)
        linf = std::max(linf, std::abs(sol.values[i] - ref.values[i]));
    double ref_max = *std::max_element(ref.values.begin(), ref.values.end());
    EXPECT_GT(ref_max, 0.0);
    EXPECT_LT(linf, ref_max);
}

TEST(RunHomogenize, ConstantFieldGivesExactTensorsAndSmallError) {
    ExperimentConfig cfg = small_three_level();
    cfg.kappa_constant = 3.0;
    cfg.output_dir = temp_dir("homog");
    HomogenizeSummary s = run_homogenize(cfg);
    EXPECT_EQ(s.fallback_count, 0);
    for (const auto& level : s.tensors.levels)
        for (const EffectiveTensor& t : level) {
            EXPECT_NEAR(t.sym.xx, 3.0, 1e-12);
            EXPECT_NEAR(t.sym.yy, 3.0, 1e-12);
            EXPECT_NEAR(t.sym.xy, 0.0, 1e-12);
        }
    EXPECT_GT(s.solve.errors.e2, 0.0);
    EXPECT_LT(s.solve.errors.e2, 1.0);

    Csv csv = read_csv(cfg.output_dir + "/tensors.csv");
    std::vector<std::string> want = {"level", "cx", "cy", "kxx", "kxy", "kyx", "kyy", "fallback"};
    EXPECT_EQ(csv.columns, want);
    size_t blocks = 0;
    for (const auto& level : s.tensors.levels) blocks += level.size();
    EXPECT_EQ(csv.rows.size(), blocks);
    Raster hs = read_raster(cfg.output_dir + "/homogenized.txt");
    EXPECT_EQ(hs.nx, 17);
    EXPECT_EQ(hs.ny, 17);
}

TEST(RunSweep, TwoLevelConfigSkipsTheDeeperColumns) {
    ExperimentConfig cfg;
    cfg.fine_nx = cfg.fine_ny = 16;
    cfg.factors = {{4, 4}, {4, 4}};
    cfg.basis = {2};
    cfg.snapshot_counts = {6};
    cfg.modes = {SnapshotMode::TraceRandomized};
    cfg.sweep_n1 = {1, 2, 4};
    cfg.output_dir = temp_dir("sweep_2lvl");
    std::vector<SweepRow> rows = run_sweep(cfg);
    ASSERT_EQ(rows.size(), 3u);
    for (const SweepRow& r : rows) {
        EXPECT_EQ(r.n2, 0);
        EXPECT_EQ(r.n3, 0);
        EXPECT_TRUE(r.snap_ok);
    }
    EXPECT_GE(rows[0].err.e2, rows[1].err.e2);
    EXPECT_GE(rows[1].err.e2, rows[2].err.e2);
    EXPECT_EQ(rows.back().level_config, "2level");
}

TEST(BundledConfigs, PaperLikeConfigParsesAndDescribesTheReferenceSetup) {
    std::string path = std::string(MSFEM_SOURCE_DIR) + "/configs/paper_like.cfg";
    ExperimentConfig cfg = parse_config(path);
    EXPECT_EQ(cfg.fine_nx, 400);
    EXPECT_EQ(cfg.fine_ny, 400);
    ASSERT_EQ(cfg.factors.size(), 2u);
    EXPECT_EQ(cfg.factors[0], (std::pair<int, int>{10, 10}));
    EXPECT_EQ(cfg.factors[1], (std::pair<int, int>{40, 40}));
    EXPECT_EQ(cfg.source, 1.0);
    EXPECT_FALSE(cfg.sweep_n1.empty());
}
