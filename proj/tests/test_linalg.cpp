#include "msfem/dense.hpp"
#include "msfem/sparse.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <tuple>
#include <vector>

#include "oracles.hpp"

using namespace msfem;

namespace {

SparseMatrix tridiag_laplace(int n) {
    std::vector<std::tuple<int, int, double>> t;
    for (int i = 0; i < n; ++i) {
        t.emplace_back(i, i, 2.0);
        if (i > 0) t.emplace_back(i, i - 1, -1.0);
        if (i < n - 1) t.emplace_back(i, i + 1, -1.0);
    }
    return SparseMatrix::from_triplets(n, t);
}

SparseMatrix to_sparse(const DenseMatrix& A) {
    std::vector<std::tuple<int, int, double>> t;
    for (int j = 0; j < A.cols(); ++j)
        for (int i = 0; i < A.rows(); ++i)
            if (A.at(i, j) != 0.0) t.emplace_back(i, j, A.at(i, j));
    return SparseMatrix::from_triplets(A.rows(), t);
}

}  // namespace

TEST(SparseMatrix, TripletsSumDuplicatesAndMultiply) {
    std::vector<std::tuple<int, int, double>> t{{0, 0, 1.0}, {0, 0, 1.5}, {1, 0, 2.0},
                                                {0, 1, -1.0}, {1, 1, 3.0}};
    SparseMatrix A = SparseMatrix::from_triplets(2, t);
    EXPECT_EQ(A.nnz(), 4u);
    std::vector<double> y = A.multiply({1.0, 2.0});
    EXPECT_DOUBLE_EQ(y[0], 2.5 - 2.0);
    EXPECT_DOUBLE_EQ(y[1], 2.0 + 6.0);
    EXPECT_DOUBLE_EQ(A.quadratic({1.0, 0.0}, {0.0, 1.0}), -1.0);
    std::vector<double> d = A.diagonal();
    EXPECT_DOUBLE_EQ(d[0], 2.5);
    EXPECT_DOUBLE_EQ(d[1], 3.0);
}

TEST(CgSolve, TridiagonalUnitLoad) {
    SparseMatrix A = tridiag_laplace(4);
    std::vector<double> b{1.0, 0.0, 0.0, 0.0}, x;
    CgResult res = cg_solve(A, b, x);
    // Closed form: x_i = (n+1-i)/(n+1), i = 1..4.
    EXPECT_NEAR(x[0], 4.0 / 5.0, 1e-12);
    EXPECT_NEAR(x[1], 3.0 / 5.0, 1e-12);
    EXPECT_NEAR(x[2], 2.0 / 5.0, 1e-12);
    EXPECT_NEAR(x[3], 1.0 / 5.0, 1e-12);
    EXPECT_LE(res.rel_residual, 1e-9);
}

TEST(CgSolve, MatchesLuOnRandomSpdSystems) {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 5 + trial;
        DenseMatrix G = oracle::random_spd(n, rng, 1.0);
        std::vector<double> b(static_cast<size_t>(n));
        for (double& v : b) v = rng.uniform_sym();
        std::vector<double> x;
        cg_solve(to_sparse(G), b, x);
        std::vector<double> ref = oracle::lu_solve(G, b);
        for (int i = 0; i < n; ++i) EXPECT_NEAR(x[static_cast<size_t>(i)], ref[static_cast<size_t>(i)], 1e-8);
    }
}

TEST(CgSolve, ZeroRhsAndFailureModes) {
    SparseMatrix A = tridiag_laplace(8);
    std::vector<double> b(8, 0.0), x(8, 5.0);
    CgResult res = cg_solve(A, b, x);
    EXPECT_EQ(res.iterations, 0);
    for (double v : x) EXPECT_EQ(v, 0.0);

    std::vector<double> b2(8, 1.0), x2;
    EXPECT_THROW(cg_solve(A, b2, x2, 1e-10, 1), numeric_error);

    // Indefinite matrix trips the positive-definiteness guard.
    SparseMatrix Ind = SparseMatrix::from_triplets(
        2, {{0, 0, 1.0}, {1, 1, -1.0}});
    std::vector<double> b3{0.0, 1.0}, x3;
    EXPECT_THROW(cg_solve(Ind, b3, x3), numeric_error);
}

TEST(BandMatrix, MatchesDenseSolveOnPatchLaplacian) {
    // 2D 5-point style stiffness on a 6x5 node patch, bandwidth = row width.
    int W = 6, H = 5, n = W * H;
    BandMatrix B(n, W + 1);
    DenseMatrix D(n, n);
    Rng rng(3);
    std::vector<std::tuple<int, int, double>> entries;
    for (int i = 0; i < n; ++i) entries.emplace_back(i, i, 4.0 + rng.uniform01());
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            int i = y * W + x;
            if (x + 1 < W) entries.emplace_back(i, i + 1, -1.0 + 0.1 * rng.uniform_sym());
            if (y + 1 < H) entries.emplace_back(i, i + W, -1.0 + 0.1 * rng.uniform_sym());
            if (x + 1 < W && y + 1 < H) entries.emplace_back(i, i + W + 1, -0.5);
        }
    for (auto& [i, j, v] : entries) {
        B.add(i, j, v);
        D.at(i, j) += v;
        if (i != j) D.at(j, i) += v;
    }
    B.factor();
    std::vector<double> rhs(static_cast<size_t>(n));
    for (double& v : rhs) v = rng.uniform_sym();
    std::vector<double> x = rhs;
    B.solve(x);
    std::vector<double> ref = oracle::lu_solve(D, rhs);
    for (int i = 0; i < n; ++i) EXPECT_NEAR(x[static_cast<size_t>(i)], ref[static_cast<size_t>(i)], 1e-10);

    EXPECT_THROW(B.add(0, W + 2, 1.0), numeric_error);
}

TEST(BandMatrix, RejectsIndefinite) {
    BandMatrix B(2, 1);
    B.add(0, 0, 1.0);
    B.add(1, 1, -2.0);
    EXPECT_THROW(B.factor(), numeric_error);
}

TEST(Cholesky, MatchesLuAndRejectsIndefinite) {
    Rng rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        int n = 3 + 4 * trial;
        DenseMatrix G = oracle::random_spd(n, rng);
        std::vector<double> b(static_cast<size_t>(n));
        for (double& v : b) v = rng.uniform_sym();
        std::vector<double> x = solve_spd(G, b);
        std::vector<double> ref = oracle::lu_solve(G, b);
        for (int i = 0; i < n; ++i)
            EXPECT_NEAR(x[static_cast<size_t>(i)], ref[static_cast<size_t>(i)], 1e-9);
    }
    DenseMatrix Ind(2, 2);
    Ind.at(0, 0) = 1.0;
    Ind.at(1, 1) = -1.0;
    EXPECT_THROW(cholesky_factor(Ind), numeric_error);
}

TEST(SymEig, DiagonalAndResiduals) {
    DenseMatrix A(3, 3);
    A.at(0, 0) = 5.0;
    A.at(1, 1) = -2.0;
    A.at(2, 2) = 1.0;
    SymEigResult r = sym_eig(A);
    ASSERT_EQ(r.values.size(), 3u);
    EXPECT_NEAR(r.values[0], -2.0, 1e-13);
    EXPECT_NEAR(r.values[1], 1.0, 1e-13);
    EXPECT_NEAR(r.values[2], 5.0, 1e-13);

    Rng rng(17);
    for (int trial = 0; trial < 15; ++trial) {
        int n = 2 + 3 * trial;
        DenseMatrix S = oracle::random_symmetric(n, rng);
        SymEigResult e = sym_eig(S);
        // Ascending order.
        for (size_t i = 1; i < e.values.size(); ++i) EXPECT_LE(e.values[i - 1], e.values[i]);
        // Orthonormal vectors and small eigen-residuals.
        DenseMatrix VtV = transpose_times(e.vectors, e.vectors);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                EXPECT_NEAR(VtV.at(i, j), i == j ? 1.0 : 0.0, 1e-12);
        for (int j = 0; j < n; ++j) {
            std::vector<double> v = e.vectors.col_copy(j);
            std::vector<double> Av = times_vec(S, v);
            for (int i = 0; i < n; ++i)
                EXPECT_NEAR(Av[static_cast<size_t>(i)], e.values[static_cast<size_t>(j)] * v[static_cast<size_t>(i)],
                            1e-11 * n);
        }
        // Eigenvalues agree with the rotation-based oracle.
        oracle::EigPairs ref = oracle::jacobi_eig(S);
        for (int j = 0; j < n; ++j)
            EXPECT_NEAR(e.values[static_cast<size_t>(j)], ref.values[static_cast<size_t>(j)], 1e-10 * n);
    }
}

TEST(DenseGenEig, DiagonalExampleAndScaling) {
    DenseMatrix A(2, 2), S = DenseMatrix::identity(2);
    A.at(0, 0) = 1.0;
    A.at(1, 1) = 4.0;
    GenEigResult r = dense_gen_eig(A, S);
    EXPECT_NEAR(r.values[0], 1.0, 1e-10);
    EXPECT_NEAR(r.values[1], 4.0, 1e-10);
    EXPECT_NEAR(std::abs(r.vectors.at(0, 0)), 1.0, 1e-6);
    EXPECT_NEAR(std::abs(r.vectors.at(1, 1)), 1.0, 1e-6);

    Rng rng(23);
    DenseMatrix B = oracle::random_spd(5, rng);
    DenseMatrix M = oracle::random_spd(5, rng, 0.5);
    GenEigResult r1 = dense_gen_eig(B, M);
    DenseMatrix B10 = B;
    for (int j = 0; j < 5; ++j)
        for (int i = 0; i < 5; ++i) B10.at(i, j) *= 10.0;
    GenEigResult r10 = dense_gen_eig(B10, M);
    for (int j = 0; j < 5; ++j)
        EXPECT_NEAR(r10.values[static_cast<size_t>(j)], 10.0 * r1.values[static_cast<size_t>(j)],
                    1e-8 * std::abs(r1.values[static_cast<size_t>(j)]) + 1e-12);
}

TEST(DenseGenEig, AgreesWithRotationOracleAndIsSOrthonormal) {
    Rng rng(29);
    for (int trial = 0; trial < 25; ++trial) {
        int n = 2 + trial % 9;
        DenseMatrix A = oracle::random_symmetric(n, rng);
        DenseMatrix S = oracle::random_spd(n, rng, 0.2);
        GenEigResult r = dense_gen_eig(A, S);
        std::vector<double> ref = oracle::gen_eig_values(A, S);
        double scale = std::max(std::abs(ref.front()), std::abs(ref.back())) + 1.0;
        for (int j = 0; j < n; ++j)
            EXPECT_NEAR(r.values[static_cast<size_t>(j)], ref[static_cast<size_t>(j)], 1e-9 * scale);

        // Vectors diagonalize: x_i' S x_j = delta_ij (ridge is relatively 1e-12).
        DenseMatrix SX = times(S, r.vectors);
        DenseMatrix XtSX = transpose_times(r.vectors, SX);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                EXPECT_NEAR(XtSX.at(i, j), i == j ? 1.0 : 0.0, 1e-7);
        // Eigen-residuals in the pencil sense.
        for (int j = 0; j < n; ++j) {
            std::vector<double> x = r.vectors.col_copy(j);
            std::vector<double> Ax = times_vec(A, x);
            std::vector<double> Sx = times_vec(S, x);
            double lam = r.values[static_cast<size_t>(j)];
            for (int i = 0; i < n; ++i)
                EXPECT_NEAR(Ax[static_cast<size_t>(i)], lam * Sx[static_cast<size_t>(i)],
                            1e-7 * (1.0 + std::abs(lam)));
        }
    }
}

TEST(DenseGenEig, SemidefiniteSIsRegularized) {
    // S of rank 1: one finite generalized eigenvalue, one blown up by the
    // ridge, but the call must not fail and finite values must be correct.
    DenseMatrix A = DenseMatrix::identity(2);
    DenseMatrix S(2, 2);
    S.at(0, 0) = 1.0;
    GenEigResult r = dense_gen_eig(A, S);
    EXPECT_NEAR(r.values[0], 1.0, 1e-6);
    EXPECT_GT(r.values[1], 1e10);
}

TEST(Orthonormalize, SpanAndRankDetection) {
    Rng rng(31);
    int n = 40, m = 12;
    DenseMatrix M(n, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i) M.at(i, j) = rng.uniform_sym();
    // Duplicate two columns and append a scaled copy: rank stays 12 when we
    // add fresh ones, drops when we overwrite.
    DenseMatrix Q = orthonormalize(M);
    ASSERT_EQ(Q.cols(), m);
    DenseMatrix QtQ = transpose_times(Q, Q);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) EXPECT_NEAR(QtQ.at(i, j), i == j ? 1.0 : 0.0, 1e-12);
    // Original columns lie in the span.
    for (int j = 0; j < m; ++j) {
        std::vector<double> v = M.col_copy(j);
        std::vector<double> c = transpose_times_vec(Q, v);
        std::vector<double> back = times_vec(Q, c);
        double diff = 0.0, norm = 0.0;
        for (int i = 0; i < n; ++i) {
            diff += (v[static_cast<size_t>(i)] - back[static_cast<size_t>(i)]) *
                    (v[static_cast<size_t>(i)] - back[static_cast<size_t>(i)]);
            norm += v[static_cast<size_t>(i)] * v[static_cast<size_t>(i)];
        }
        EXPECT_LE(std::sqrt(diff), 1e-10 * std::sqrt(norm));
    }

    DenseMatrix M2(n, m);
    for (int j = 0; j < m; ++j)
        for (int i = 0; i < n; ++i)
            M2.at(i, j) = (j < 5) ? M.at(i, j) : M.at(i, j % 5) * (1.0 + 0.0) ;
    EXPECT_EQ(orthonormalize(M2).cols(), 5);

    // Near-duplicates below the drop tolerance are culled too.
    DenseMatrix M3(n, 2);
    for (int i = 0; i < n; ++i) {
        M3.at(i, 0) = M.at(i, 0);
        M3.at(i, 1) = M.at(i, 0) * (1.0 + 1e-13);
    }
    EXPECT_EQ(orthonormalize(M3).cols(), 1);
    EXPECT_EQ(orthonormalize(DenseMatrix(n, 3)).cols(), 0);
}

TEST(GramQuadratic, SingularExampleAndFlag) {
    DenseMatrix G(2, 2);
    G.at(0, 0) = 2.0;
    GramQuadratic a = gram_quadratic(G, {1.0, 0.0});
    EXPECT_NEAR(a.value, 0.5, 1e-12);
    EXPECT_FALSE(a.null_component);

    GramQuadratic b = gram_quadratic(G, {1.0, 1.0});
    EXPECT_NEAR(b.value, 0.5, 1e-12);
    EXPECT_TRUE(b.null_component);

    GramQuadratic c = gram_quadratic(G, {0.0, 0.0});
    EXPECT_EQ(c.value, 0.0);
    EXPECT_FALSE(c.null_component);
}

TEST(GramQuadratic, MatchesDirectInverseOnPdMatrices) {
    Rng rng(37);
    for (int trial = 0; trial < 20; ++trial) {
        int n = 2 + trial % 6;
        DenseMatrix G = oracle::random_spd(n, rng, 0.3);
        std::vector<double> r(static_cast<size_t>(n));
        for (double& v : r) v = rng.uniform_sym();
        GramQuadratic q = gram_quadratic(G, r);
        std::vector<double> Ginv_r = oracle::lu_solve(G, r);
        double direct = 0.0;
        for (int i = 0; i < n; ++i) direct += r[static_cast<size_t>(i)] * Ginv_r[static_cast<size_t>(i)];
        EXPECT_NEAR(q.value, direct, 1e-9 * (1.0 + direct));
        EXPECT_FALSE(q.null_component);
    }
}

TEST(GramQuadratic, CloseToSampledSupremum) {
    Rng rng(41);
    DenseMatrix G = oracle::random_spd(3, rng, 0.5);
    std::vector<double> r{0.3, -1.1, 0.7};
    GramQuadratic q = gram_quadratic(G, r);
    double mc = oracle::mc_sup_quadratic(G, r, 20000, rng);
    EXPECT_LE(mc, q.value * (1.0 + 1e-9));
    EXPECT_GE(mc, q.value * 0.95);
}
