#pragma once

#include <algorithm>
#include <cmath>
#include <cstring>
#include <string>
#include <vector>

#include "core.hpp"

namespace msfem {

/// Column-major dense matrix.
class DenseMatrix {
public:
    DenseMatrix() = default;
    DenseMatrix(int rows, int cols)
        : rows_(rows), cols_(cols), data_(static_cast<size_t>(rows) * cols, 0.0) {}

    int rows() const { return rows_; }
    int cols() const { return cols_; }
    double& at(int i, int j) { return data_[static_cast<size_t>(j) * rows_ + i]; }
    double at(int i, int j) const { return data_[static_cast<size_t>(j) * rows_ + i]; }
    double* col(int j) { return data_.data() + static_cast<size_t>(j) * rows_; }
    const double* col(int j) const { return data_.data() + static_cast<size_t>(j) * rows_; }
    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    static DenseMatrix identity(int n) {
        DenseMatrix m(n, n);
        for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
        return m;
    }

    std::vector<double> col_copy(int j) const {
        return std::vector<double>(col(j), col(j) + rows_);
    }

    void set_col(int j, const std::vector<double>& v) {
        std::memcpy(col(j), v.data(), sizeof(double) * static_cast<size_t>(rows_));
    }

    DenseMatrix with_columns(const std::vector<int>& idx) const {
        DenseMatrix out(rows_, static_cast<int>(idx.size()));
        for (size_t j = 0; j < idx.size(); ++j)
            std::memcpy(out.col(static_cast<int>(j)), col(idx[j]),
                        sizeof(double) * static_cast<size_t>(rows_));
        return out;
    }

    bool operator==(const DenseMatrix& other) const = default;

private:
    int rows_ = 0, cols_ = 0;
    std::vector<double> data_;
};

/// C = A' * B.
inline DenseMatrix transpose_times(const DenseMatrix& A, const DenseMatrix& B) {
    DenseMatrix C(A.cols(), B.cols());
    for (int j = 0; j < B.cols(); ++j) {
        const double* bj = B.col(j);
        for (int i = 0; i < A.cols(); ++i) {
            const double* ai = A.col(i);
            double s = 0.0;
            for (int k = 0; k < A.rows(); ++k) s += ai[k] * bj[k];
            C.at(i, j) = s;
        }
    }
    return C;
}

/// C = A * B.
inline DenseMatrix times(const DenseMatrix& A, const DenseMatrix& B) {
    DenseMatrix C(A.rows(), B.cols());
    for (int j = 0; j < B.cols(); ++j) {
        double* cj = C.col(j);
        for (int k = 0; k < A.cols(); ++k) {
            double b = B.at(k, j);
            if (b == 0.0) continue;
            const double* ak = A.col(k);
            for (int i = 0; i < A.rows(); ++i) cj[i] += b * ak[i];
        }
    }
    return C;
}

inline std::vector<double> times_vec(const DenseMatrix& A, const std::vector<double>& x) {
    std::vector<double> y(static_cast<size_t>(A.rows()), 0.0);
    for (int k = 0; k < A.cols(); ++k) {
        double b = x[static_cast<size_t>(k)];
        if (b == 0.0) continue;
        const double* ak = A.col(k);
        for (int i = 0; i < A.rows(); ++i) y[static_cast<size_t>(i)] += b * ak[i];
    }
    return y;
}

inline std::vector<double> transpose_times_vec(const DenseMatrix& A,
                                               const std::vector<double>& x) {
    std::vector<double> y(static_cast<size_t>(A.cols()), 0.0);
    for (int j = 0; j < A.cols(); ++j) {
        const double* aj = A.col(j);
        double s = 0.0;
        for (int i = 0; i < A.rows(); ++i) s += aj[i] * x[static_cast<size_t>(i)];
        y[static_cast<size_t>(j)] = s;
    }
    return y;
}

/// In-place lower Cholesky factorization (the strict upper triangle is left
/// untouched). Column-oriented so the inner updates stream contiguously.
inline void cholesky_factor(DenseMatrix& A) {
    int n = A.rows();
    for (int j = 0; j < n; ++j) {
        double* aj = A.col(j);
        for (int k = 0; k < j; ++k) {
            double alpha = A.at(j, k);
            if (alpha == 0.0) continue;
            const double* ak = A.col(k);
            for (int i = j; i < n; ++i) aj[i] -= alpha * ak[i];
        }
        double diag = aj[j];
        if (!(diag > 0.0)) throw numeric_error("cholesky_factor: matrix not positive definite");
        double s = std::sqrt(diag);
        aj[j] = s;
        for (int i = j + 1; i < n; ++i) aj[i] /= s;
    }
}

/// Solves L y = b with the lower triangle of the factored matrix.
inline void forward_solve(const DenseMatrix& L, std::vector<double>& b) {
    int n = L.rows();
    for (int i = 0; i < n; ++i) {
        double s = b[static_cast<size_t>(i)];
        for (int k = 0; k < i; ++k) s -= L.at(i, k) * b[static_cast<size_t>(k)];
        b[static_cast<size_t>(i)] = s / L.at(i, i);
    }
}

/// Solves L' x = y with the lower triangle of the factored matrix.
inline void backward_solve(const DenseMatrix& L, std::vector<double>& b) {
    int n = L.rows();
    for (int i = n - 1; i >= 0; --i) {
        double s = b[static_cast<size_t>(i)];
        for (int k = i + 1; k < n; ++k) s -= L.at(k, i) * b[static_cast<size_t>(k)];
        b[static_cast<size_t>(i)] = s / L.at(i, i);
    }
}

/// Solves the SPD system A x = b by Cholesky; A is copied.
inline std::vector<double> solve_spd(const DenseMatrix& A, std::vector<double> b) {
    DenseMatrix L = A;
    cholesky_factor(L);
    forward_solve(L, b);
    backward_solve(L, b);
    return b;
}

struct SymEigResult {
    std::vector<double> values;  ///< ascending
    DenseMatrix vectors;         ///< orthonormal columns, paired with values
};

/// Full symmetric eigendecomposition: Householder tridiagonalization followed
/// by the implicit-shift QL iteration, with eigenpairs sorted ascending and a
/// deterministic sign convention (largest-magnitude component positive).
inline SymEigResult sym_eig(const DenseMatrix& A) {
    int n = A.rows();
    if (n != A.cols()) throw numeric_error("sym_eig: matrix must be square");
    SymEigResult res;
    res.values.assign(static_cast<size_t>(n), 0.0);
    if (n == 0) return res;
    DenseMatrix V = A;
    std::vector<double>& d = res.values;
    std::vector<double> e(static_cast<size_t>(n), 0.0);

    for (int j = 0; j < n; ++j) d[j] = V.at(n - 1, j);

    // Householder reduction to tridiagonal form.
    for (int i = n - 1; i > 0; i--) {
        double scale = 0.0, h = 0.0;
        for (int k = 0; k < i; k++) scale += std::abs(d[k]);
        if (scale == 0.0) {
            e[i] = d[i - 1];
            for (int j = 0; j < i; j++) {
                d[j] = V.at(i - 1, j);
                V.at(i, j) = 0.0;
                V.at(j, i) = 0.0;
            }
        } else {
            for (int k = 0; k < i; k++) {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            double f = d[i - 1];
            double g = std::sqrt(h);
            if (f > 0) g = -g;
            e[i] = scale * g;
            h = h - f * g;
            d[i - 1] = f - g;
            for (int j = 0; j < i; j++) e[j] = 0.0;
            for (int j = 0; j < i; j++) {
                f = d[j];
                V.at(j, i) = f;
                g = e[j] + V.at(j, j) * f;
                for (int k = j + 1; k <= i - 1; k++) {
                    g += V.at(k, j) * d[k];
                    e[k] += V.at(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for (int j = 0; j < i; j++) {
                e[j] /= h;
                f += e[j] * d[j];
            }
            double hh = f / (h + h);
            for (int j = 0; j < i; j++) e[j] -= hh * d[j];
            for (int j = 0; j < i; j++) {
                f = d[j];
                g = e[j];
                for (int k = j; k <= i - 1; k++) V.at(k, j) -= (f * e[k] + g * d[k]);
                d[j] = V.at(i - 1, j);
                V.at(i, j) = 0.0;
            }
        }
        d[i] = h;
    }

    // Accumulate transformations.
    for (int i = 0; i < n - 1; i++) {
        V.at(n - 1, i) = V.at(i, i);
        V.at(i, i) = 1.0;
        double h = d[i + 1];
        if (h != 0.0) {
            for (int k = 0; k <= i; k++) d[k] = V.at(k, i + 1) / h;
            for (int j = 0; j <= i; j++) {
                double g = 0.0;
                for (int k = 0; k <= i; k++) g += V.at(k, i + 1) * V.at(k, j);
                for (int k = 0; k <= i; k++) V.at(k, j) -= g * d[k];
            }
        }
        for (int k = 0; k <= i; k++) V.at(k, i + 1) = 0.0;
    }
    for (int j = 0; j < n; j++) {
        d[j] = V.at(n - 1, j);
        V.at(n - 1, j) = 0.0;
    }
    V.at(n - 1, n - 1) = 1.0;
    e[0] = 0.0;

    // Implicit-shift QL iteration on the tridiagonal matrix.
    for (int i = 1; i < n; i++) e[i - 1] = e[i];
    e[n - 1] = 0.0;
    double f_acc = 0.0, tst1 = 0.0;
    const double eps = std::pow(2.0, -52.0);
    for (int l = 0; l < n; l++) {
        tst1 = std::max(tst1, std::abs(d[l]) + std::abs(e[l]));
        int m = l;
        while (m < n) {
            if (std::abs(e[m]) <= eps * tst1) break;
            m++;
        }
        if (m > l) {
            int iter = 0;
            do {
                if (++iter > 64) throw numeric_error("sym_eig: QL iteration did not converge");
                double g = d[l];
                double p = (d[l + 1] - g) / (2.0 * e[l]);
                double r = std::hypot(p, 1.0);
                if (p < 0) r = -r;
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                double dl1 = d[l + 1];
                double h = g - d[l];
                for (int i = l + 2; i < n; i++) d[i] -= h;
                f_acc += h;
                p = d[m];
                double c = 1.0, c2 = c, c3 = c;
                double el1 = e[l + 1], s = 0.0, s2 = 0.0;
                for (int i = m - 1; i >= l; i--) {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = std::hypot(p, e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for (int k = 0; k < n; k++) {
                        h = V.at(k, i + 1);
                        V.at(k, i + 1) = s * V.at(k, i) + c * h;
                        V.at(k, i) = c * V.at(k, i) - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
            } while (std::abs(e[l]) > eps * tst1);
        }
        d[l] = d[l] + f_acc;
        e[l] = 0.0;
    }

    // Sort ascending and fix signs deterministically.
    for (int i = 0; i < n - 1; i++) {
        int k = i;
        double p = d[i];
        for (int j = i + 1; j < n; j++)
            if (d[j] < p) {
                k = j;
                p = d[j];
            }
        if (k != i) {
            d[k] = d[i];
            d[i] = p;
            for (int r = 0; r < n; ++r) std::swap(V.at(r, i), V.at(r, k));
        }
    }
    for (int j = 0; j < n; ++j) {
        int arg = 0;
        double best = 0.0;
        for (int i = 0; i < n; ++i) {
            double a = std::abs(V.at(i, j));
            if (a > best) {
                best = a;
                arg = i;
            }
        }
        if (V.at(arg, j) < 0.0)
            for (int i = 0; i < n; ++i) V.at(i, j) = -V.at(i, j);
    }
    res.vectors = std::move(V);
    return res;
}

struct GenEigResult {
    std::vector<double> values;  ///< ascending
    DenseMatrix vectors;         ///< columns orthonormal in the regularized S inner product
};

/// Generalized symmetric eigenproblem A x = lambda S x for symmetric A and
/// symmetric positive semidefinite S. S is regularized with a relative ridge
/// (1e-12 * mean diagonal), factored, and the problem reduced to standard
/// form.
inline GenEigResult dense_gen_eig(const DenseMatrix& A, const DenseMatrix& S) {
    int n = A.rows();
    if (A.cols() != n || S.rows() != n || S.cols() != n)
        throw numeric_error("dense_gen_eig: dimension mismatch");
    GenEigResult res;
    if (n == 0) return res;

    double trace = 0.0;
    for (int i = 0; i < n; ++i) trace += S.at(i, i);
    double ridge = 1e-12 * (trace / n);
    DenseMatrix L = S;
    for (int i = 0; i < n; ++i) L.at(i, i) += ridge;
    cholesky_factor(L);

    // B = L^-1 A L^-T, formed column by column and symmetrized.
    DenseMatrix W(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<double> c = A.col_copy(j);
        forward_solve(L, c);
        W.set_col(j, c);
    }
    DenseMatrix B(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<double> c(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) c[static_cast<size_t>(i)] = W.at(j, i);
        forward_solve(L, c);
        B.set_col(j, c);
    }
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < j; ++i) {
            double v = 0.5 * (B.at(i, j) + B.at(j, i));
            B.at(i, j) = v;
            B.at(j, i) = v;
        }

    SymEigResult se = sym_eig(B);
    res.values = std::move(se.values);
    res.vectors = DenseMatrix(n, n);
    for (int j = 0; j < n; ++j) {
        std::vector<double> y = se.vectors.col_copy(j);
        backward_solve(L, y);
        res.vectors.set_col(j, y);
    }
    return res;
}

/// Modified Gram-Schmidt with column pivoting and one reorthogonalization
/// pass. Columns whose remaining norm falls below drop_tol times the largest
/// initial pivot norm are discarded; the returned matrix has orthonormal
/// columns spanning the numerically significant range of the input.
inline DenseMatrix orthonormalize(const DenseMatrix& M, double drop_tol = 1e-10) {
    int n = M.rows(), m = M.cols();
    DenseMatrix W = M;
    DenseMatrix Q(n, std::min(n, m));
    std::vector<bool> used(static_cast<size_t>(m), false);
    int rank = 0;
    double ref_norm = -1.0;
    for (int step = 0; step < std::min(n, m); ++step) {
        int pivot = -1;
        double best = -1.0;
        for (int j = 0; j < m; ++j) {
            if (used[static_cast<size_t>(j)]) continue;
            const double* w = W.col(j);
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += w[i] * w[i];
            if (s > best) {
                best = s;
                pivot = j;
            }
        }
        if (pivot < 0) break;
        used[static_cast<size_t>(pivot)] = true;
        std::vector<double> v = W.col_copy(pivot);
        // Second orthogonalization pass against the established basis.
        for (int k = 0; k < rank; ++k) {
            const double* q = Q.col(k);
            double proj = 0.0;
            for (int i = 0; i < n; ++i) proj += q[i] * v[static_cast<size_t>(i)];
            for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] -= proj * q[i];
        }
        double nv = 0.0;
        for (int i = 0; i < n; ++i) nv += v[static_cast<size_t>(i)] * v[static_cast<size_t>(i)];
        nv = std::sqrt(nv);
        if (ref_norm < 0.0) ref_norm = nv;
        if (ref_norm == 0.0 || nv < drop_tol * ref_norm) break;
        for (int i = 0; i < n; ++i) v[static_cast<size_t>(i)] /= nv;
        Q.set_col(rank, v);
        ++rank;
        for (int j = 0; j < m; ++j) {
            if (used[static_cast<size_t>(j)]) continue;
            double* w = W.col(j);
            double proj = 0.0;
            for (int i = 0; i < n; ++i) proj += v[static_cast<size_t>(i)] * w[i];
            for (int i = 0; i < n; ++i) w[i] -= proj * v[static_cast<size_t>(i)];
        }
    }
    DenseMatrix out(n, rank);
    for (int j = 0; j < rank; ++j)
        std::memcpy(out.col(j), Q.col(j), sizeof(double) * static_cast<size_t>(n));
    return out;
}

struct GramQuadratic {
    double value = 0.0;
    bool null_component = false;  ///< r had a non-negligible part outside range(G)
};

/// Evaluates r' G^+ r for a symmetric positive semidefinite Gram matrix via
/// eigendecomposition; eigenvalues below pinv_tol times the largest are
/// treated as zero.
inline GramQuadratic gram_quadratic(const DenseMatrix& G, const std::vector<double>& r,
                                    double pinv_tol = 1e-12) {
    GramQuadratic out;
    int n = G.rows();
    if (n == 0) return out;
    SymEigResult eig = sym_eig(G);
    double lam_max = 0.0;
    for (double v : eig.values) lam_max = std::max(lam_max, v);
    double rnorm_sq = 0.0;
    for (double v : r) rnorm_sq += v * v;
    double captured = 0.0;
    for (int j = 0; j < n; ++j) {
        if (eig.values[static_cast<size_t>(j)] <= pinv_tol * lam_max) continue;
        const double* q = eig.vectors.col(j);
        double c = 0.0;
        for (int i = 0; i < n; ++i) c += q[i] * r[static_cast<size_t>(i)];
        out.value += c * c / eig.values[static_cast<size_t>(j)];
        captured += c * c;
    }
    // Flag when a noticeable fraction of r lies outside range(G); the 1e-6
    // norm-ratio threshold is far above eigensolver roundoff.
    double leftover = rnorm_sq - captured;
    out.null_component = leftover > 1e-12 * rnorm_sq && rnorm_sq > 0.0;
    return out;
}

}  // namespace msfem
