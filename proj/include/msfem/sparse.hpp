#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "core.hpp"

namespace msfem {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const std::vector<double>& x, std::vector<double>& y) {
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

/// Square sparse matrix in CSR form. Built from (row, col, value) triplets;
/// duplicate entries are summed.
class SparseMatrix {
public:
    SparseMatrix() = default;

    static SparseMatrix from_triplets(int n, std::vector<std::tuple<int, int, double>> trip) {
        std::sort(trip.begin(), trip.end(), [](const auto& a, const auto& b) {
            return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                                    : std::get<1>(a) < std::get<1>(b);
        });
        SparseMatrix m;
        m.n_ = n;
        m.row_ptr_.assign(static_cast<size_t>(n) + 1, 0);
        for (size_t i = 0; i < trip.size();) {
            size_t j = i;
            double sum = 0.0;
            while (j < trip.size() && std::get<0>(trip[j]) == std::get<0>(trip[i]) &&
                   std::get<1>(trip[j]) == std::get<1>(trip[i]))
                sum += std::get<2>(trip[j++]);
            m.cols_.push_back(std::get<1>(trip[i]));
            m.vals_.push_back(sum);
            m.row_ptr_[static_cast<size_t>(std::get<0>(trip[i])) + 1]++;
            i = j;
        }
        std::partial_sum(m.row_ptr_.begin(), m.row_ptr_.end(), m.row_ptr_.begin());
        return m;
    }

    int rows() const { return n_; }
    size_t nnz() const { return vals_.size(); }

    void multiply(const std::vector<double>& x, std::vector<double>& y) const {
        y.assign(static_cast<size_t>(n_), 0.0);
        for (int i = 0; i < n_; ++i) {
            double s = 0.0;
            for (size_t k = row_ptr_[i]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k)
                s += vals_[k] * x[static_cast<size_t>(cols_[k])];
            y[static_cast<size_t>(i)] = s;
        }
    }

    std::vector<double> multiply(const std::vector<double>& x) const {
        std::vector<double> y;
        multiply(x, y);
        return y;
    }

    std::vector<double> diagonal() const {
        std::vector<double> d(static_cast<size_t>(n_), 0.0);
        for (int i = 0; i < n_; ++i)
            for (size_t k = row_ptr_[i]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k)
                if (cols_[k] == i) d[static_cast<size_t>(i)] = vals_[k];
        return d;
    }

    /// x' A y for symmetric energy norms.
    double quadratic(const std::vector<double>& x, const std::vector<double>& y) const {
        double s = 0.0;
        for (int i = 0; i < n_; ++i) {
            double row = 0.0;
            for (size_t k = row_ptr_[i]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k)
                row += vals_[k] * y[static_cast<size_t>(cols_[k])];
            s += x[static_cast<size_t>(i)] * row;
        }
        return s;
    }

    /// Largest |i - j| over stored entries.
    int half_bandwidth() const {
        int hb = 0;
        for (int i = 0; i < n_; ++i)
            for (size_t k = row_ptr_[i]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k)
                hb = std::max(hb, std::abs(i - cols_[k]));
        return hb;
    }

    template <class F>
    void for_each_entry(F f) const {
        for (int i = 0; i < n_; ++i)
            for (size_t k = row_ptr_[i]; k < row_ptr_[static_cast<size_t>(i) + 1]; ++k)
                f(i, cols_[k], vals_[k]);
    }

private:
    int n_ = 0;
    std::vector<size_t> row_ptr_;
    std::vector<int> cols_;
    std::vector<double> vals_;
};

struct CgResult {
    int iterations = 0;
    double rel_residual = 0.0;
};

/// Jacobi-preconditioned conjugate gradients for SPD systems. Converges on
/// the preconditioned residual, then rechecks the true residual and keeps
/// iterating if it disagrees; throws numeric_error when the iteration budget
/// is exhausted.
inline CgResult cg_solve(const SparseMatrix& A, const std::vector<double>& b,
                         std::vector<double>& x, double rel_tol = 1e-10, int max_iter = 50000) {
    size_t n = b.size();
    double bnorm = norm2(b);
    if (bnorm == 0.0) {
        x.assign(n, 0.0);
        return {0, 0.0};
    }
    if (x.size() != n) x.assign(n, 0.0);
    std::vector<double> d = A.diagonal();
    for (double& v : d) v = (v > 0.0) ? 1.0 / v : 1.0;

    double pre_bnorm_sq = 0.0;
    for (size_t i = 0; i < n; ++i) pre_bnorm_sq += d[i] * b[i] * b[i];
    double pre_target = rel_tol * rel_tol * pre_bnorm_sq;

    std::vector<double> r(n), z(n), p(n), Ap(n);
    int total_iter = 0;
    for (int attempt = 0; attempt < 3; ++attempt) {
        A.multiply(x, Ap);
        for (size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
        for (size_t i = 0; i < n; ++i) z[i] = d[i] * r[i];
        p = z;
        double rz = dot(r, z);
        while (total_iter < max_iter) {
            if (rz <= pre_target) break;
            A.multiply(p, Ap);
            double pAp = dot(p, Ap);
            if (pAp <= 0.0) throw numeric_error("cg_solve: matrix is not positive definite");
            double alpha = rz / pAp;
            axpy(alpha, p, x);
            axpy(-alpha, Ap, r);
            for (size_t i = 0; i < n; ++i) z[i] = d[i] * r[i];
            double rz_new = dot(r, z);
            for (size_t i = 0; i < n; ++i) p[i] = z[i] + (rz_new / rz) * p[i];
            rz = rz_new;
            ++total_iter;
        }
        A.multiply(x, Ap);
        for (size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
        double true_rel = norm2(r) / bnorm;
        if (true_rel <= rel_tol * 10.0) return {total_iter, true_rel};
        if (total_iter >= max_iter) break;
    }
    throw numeric_error("cg_solve: no convergence within " + std::to_string(max_iter) +
                        " iterations");
}

/// SPD band matrix with Cholesky factorization. Used for the many small
/// Dirichlet problems on rectangular patches, where the natural row-major
/// node ordering gives a narrow band and one factorization serves all
/// right-hand sides of a region.
class BandMatrix {
public:
    BandMatrix(int n, int half_bandwidth)
        : n_(n), hb_(half_bandwidth), data_(static_cast<size_t>(n) * (half_bandwidth + 1), 0.0) {}

    int rows() const { return n_; }
    int half_bandwidth() const { return hb_; }

    /// Access entry (i,j) with j <= i, j >= i - hb.
    double& at(int i, int j) { return data_[static_cast<size_t>(i) * (hb_ + 1) + (j - i + hb_)]; }
    double at(int i, int j) const {
        return data_[static_cast<size_t>(i) * (hb_ + 1) + (j - i + hb_)];
    }

    void add(int i, int j, double v) {
        if (j > i) std::swap(i, j);
        if (i - j > hb_) throw numeric_error("BandMatrix: entry outside band");
        at(i, j) += v;
    }

    /// In-place lower Cholesky. Throws numeric_error if not positive definite.
    void factor() {
        for (int j = 0; j < n_; ++j) {
            double diag = at(j, j);
            int k_lo = std::max(0, j - hb_);
            for (int k = k_lo; k < j; ++k) {
                double l = at(j, k);
                diag -= l * l;
            }
            if (diag <= 0.0) throw numeric_error("BandMatrix: not positive definite");
            double ljj = std::sqrt(diag);
            at(j, j) = ljj;
            int i_hi = std::min(n_ - 1, j + hb_);
            for (int i = j + 1; i <= i_hi; ++i) {
                double s = at(i, j);
                int lo = std::max({0, i - hb_, j - hb_});
                for (int k = lo; k < j; ++k) s -= at(i, k) * at(j, k);
                at(i, j) = s / ljj;
            }
        }
        factored_ = true;
    }

    /// Solves L L' x = b in place; requires factor() first.
    void solve(std::vector<double>& b) const {
        if (!factored_) throw numeric_error("BandMatrix: solve before factor");
        for (int i = 0; i < n_; ++i) {
            double s = b[static_cast<size_t>(i)];
            int lo = std::max(0, i - hb_);
            for (int k = lo; k < i; ++k) s -= at(i, k) * b[static_cast<size_t>(k)];
            b[static_cast<size_t>(i)] = s / at(i, i);
        }
        for (int i = n_ - 1; i >= 0; --i) {
            double s = b[static_cast<size_t>(i)];
            int hi = std::min(n_ - 1, i + hb_);
            for (int k = i + 1; k <= hi; ++k) s -= at(k, i) * b[static_cast<size_t>(k)];
            b[static_cast<size_t>(i)] = s / at(i, i);
        }
    }

private:
    int n_ = 0;
    int hb_ = 0;
    bool factored_ = false;
    std::vector<double> data_;
};

/// Symmetric band matrix storing only the lower band; supports accumulation
/// and matrix-vector products but no factorization (copy into a BandMatrix
/// for that).
class BandMatrixSym {
public:
    BandMatrixSym(int n, int half_bandwidth)
        : n_(n), hb_(half_bandwidth), data_(static_cast<size_t>(n) * (half_bandwidth + 1), 0.0) {}

    int rows() const { return n_; }
    int half_bandwidth() const { return hb_; }

    double at(int i, int j) const {
        if (j > i) std::swap(i, j);
        if (i - j > hb_) return 0.0;
        return data_[static_cast<size_t>(i) * (hb_ + 1) + (j - i + hb_)];
    }

    void add(int i, int j, double v) {
        if (j > i) std::swap(i, j);
        if (i - j > hb_) throw numeric_error("BandMatrixSym: entry outside band");
        data_[static_cast<size_t>(i) * (hb_ + 1) + (j - i + hb_)] += v;
    }

    void sym_multiply(const std::vector<double>& x, std::vector<double>& y) const {
        y.assign(static_cast<size_t>(n_), 0.0);
        for (int i = 0; i < n_; ++i) {
            int lo = std::max(0, i - hb_);
            double xi = x[static_cast<size_t>(i)];
            double yi = 0.0;
            for (int j = lo; j < i; ++j) {
                double v = data_[static_cast<size_t>(i) * (hb_ + 1) + (j - i + hb_)];
                yi += v * x[static_cast<size_t>(j)];
                y[static_cast<size_t>(j)] += v * xi;
            }
            yi += data_[static_cast<size_t>(i) * (hb_ + 1) + hb_] * xi;
            y[static_cast<size_t>(i)] += yi;
        }
    }

private:
    int n_ = 0;
    int hb_ = 0;
    std::vector<double> data_;
};

}  // namespace msfem
