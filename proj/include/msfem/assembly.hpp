#pragma once

#include <array>
#include <cmath>
#include <tuple>
#include <vector>

#include "core.hpp"
#include "dense.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "sparse.hpp"

namespace msfem {

enum class NodeClass : uint8_t {
    Free = 0,
    Dirichlet = 1,  ///< homogeneous value: outer boundary or perforation interface
    Removed = 2,    ///< no incident active cell
};

/// Local node order within a cell is counterclockwise: SW, SE, NE, NW.
inline std::array<int, 4> cell_nodes(const GridHierarchy& h, int ix, int iy) {
    return {h.fine_node_id(ix, iy), h.fine_node_id(ix + 1, iy), h.fine_node_id(ix + 1, iy + 1),
            h.fine_node_id(ix, iy + 1)};
}

/// Bilinear element stiffness on an hx-by-hy cell with constant coefficient.
/// The x- and y-derivative parts are exact integrals of the reference shape
/// function products (2x2 Gauss integrates them exactly).
inline std::array<std::array<double, 4>, 4> element_stiffness(double hx, double hy,
                                                              double kappa) {
    constexpr double sx[4][4] = {{1.0 / 3, -1.0 / 3, -1.0 / 6, 1.0 / 6},
                                 {-1.0 / 3, 1.0 / 3, 1.0 / 6, -1.0 / 6},
                                 {-1.0 / 6, 1.0 / 6, 1.0 / 3, -1.0 / 3},
                                 {1.0 / 6, -1.0 / 6, -1.0 / 3, 1.0 / 3}};
    constexpr double sy[4][4] = {{1.0 / 3, 1.0 / 6, -1.0 / 6, -1.0 / 3},
                                 {1.0 / 6, 1.0 / 3, -1.0 / 3, -1.0 / 6},
                                 {-1.0 / 6, -1.0 / 3, 1.0 / 3, 1.0 / 6},
                                 {-1.0 / 3, -1.0 / 6, 1.0 / 6, 1.0 / 3}};
    std::array<std::array<double, 4>, 4> k{};
    double cx = kappa * hy / hx, cy = kappa * hx / hy;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) k[i][j] = cx * sx[i][j] + cy * sy[i][j];
    return k;
}

/// Bilinear element mass matrix on an hx-by-hy cell.
inline std::array<std::array<double, 4>, 4> element_mass(double hx, double hy) {
    constexpr double m[4][4] = {{4.0 / 36, 2.0 / 36, 1.0 / 36, 2.0 / 36},
                                {2.0 / 36, 4.0 / 36, 2.0 / 36, 1.0 / 36},
                                {1.0 / 36, 2.0 / 36, 4.0 / 36, 2.0 / 36},
                                {2.0 / 36, 1.0 / 36, 2.0 / 36, 4.0 / 36}};
    std::array<std::array<double, 4>, 4> k{};
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j) k[i][j] = hx * hy * m[i][j];
    return k;
}

/// Element matrix of the hat-weighted mass form int |grad chi|^2 u v, with
/// the weight evaluated at the 2x2 Gauss points of the cell.
inline std::array<std::array<double, 4>, 4> element_weighted_mass(const GridHierarchy& h,
                                                                  int level, int vx, int vy,
                                                                  int ix, int iy) {
    double hx = h.hx(), hy = h.hy();
    double x0 = ix * hx, y0 = iy * hy;
    const double g = 0.5 / std::sqrt(3.0);
    const double gp[2] = {0.5 - g, 0.5 + g};
    std::array<std::array<double, 4>, 4> k{};
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            double xi = gp[a], eta = gp[b];
            double x = x0 + xi * hx, y = y0 + eta * hy;
            auto [gx, gy] = hat_gradient(h, level, vx, vy, x, y);
            double w = (gx * gx + gy * gy) * 0.25 * hx * hy;
            double n[4] = {(1 - xi) * (1 - eta), xi * (1 - eta), xi * eta, (1 - xi) * eta};
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) k[i][j] += w * n[i] * n[j];
        }
    }
    return k;
}

/// Classifies every fine node from the activity mask: removed when no
/// incident cell is active, Dirichlet on the outer boundary and on
/// perforation interfaces, free otherwise.
inline std::vector<NodeClass> classify_nodes(const GridHierarchy& h,
                                             const CoefficientField& f) {
    std::vector<NodeClass> cls(static_cast<size_t>(h.fine_node_count()), NodeClass::Free);
    for (int ny_ = 0; ny_ <= h.fine_ny; ++ny_) {
        for (int nx_ = 0; nx_ <= h.fine_nx; ++nx_) {
            int act = 0, tot = 0;
            for (int dy = -1; dy <= 0; ++dy)
                for (int dx = -1; dx <= 0; ++dx) {
                    int cx = nx_ + dx, cy = ny_ + dy;
                    if (cx < 0 || cx >= h.fine_nx || cy < 0 || cy >= h.fine_ny) continue;
                    ++tot;
                    act += f.is_active(cx, cy) ? 1 : 0;
                }
            NodeClass c;
            if (act == 0)
                c = NodeClass::Removed;
            else if (act < tot || nx_ == 0 || nx_ == h.fine_nx || ny_ == 0 || ny_ == h.fine_ny)
                c = NodeClass::Dirichlet;
            else
                c = NodeClass::Free;
            cls[static_cast<size_t>(h.fine_node_id(nx_, ny_))] = c;
        }
    }
    return cls;
}

/// Mapping between fine nodes and the free degrees of freedom.
struct DofMap {
    std::vector<int> node_to_dof;  ///< -1 for constrained or removed nodes
    std::vector<int> dof_to_node;

    int n_dofs() const { return static_cast<int>(dof_to_node.size()); }
};

inline DofMap make_dof_map(const std::vector<NodeClass>& cls) {
    DofMap m;
    m.node_to_dof.assign(cls.size(), -1);
    for (size_t i = 0; i < cls.size(); ++i) {
        if (cls[i] == NodeClass::Free) {
            m.node_to_dof[i] = static_cast<int>(m.dof_to_node.size());
            m.dof_to_node.push_back(static_cast<int>(i));
        }
    }
    return m;
}

/// Global stiffness over the free dofs (homogeneous Dirichlet elsewhere).
inline SparseMatrix assemble_stiffness(const GridHierarchy& h, const CoefficientField& f,
                                       const DofMap& dofs) {
    std::vector<std::tuple<int, int, double>> trip;
    trip.reserve(static_cast<size_t>(h.fine_cell_count()) * 16);
    for (int iy = 0; iy < h.fine_ny; ++iy) {
        for (int ix = 0; ix < h.fine_nx; ++ix) {
            if (!f.is_active(ix, iy)) continue;
            auto k = element_stiffness(h.hx(), h.hy(), f.kappa_at(ix, iy));
            auto nodes = cell_nodes(h, ix, iy);
            for (int a = 0; a < 4; ++a) {
                int ra = dofs.node_to_dof[static_cast<size_t>(nodes[a])];
                if (ra < 0) continue;
                for (int b = 0; b < 4; ++b) {
                    int rb = dofs.node_to_dof[static_cast<size_t>(nodes[b])];
                    if (rb < 0) continue;
                    trip.emplace_back(ra, rb, k[a][b]);
                }
            }
        }
    }
    return SparseMatrix::from_triplets(dofs.n_dofs(), trip);
}

/// Global mass over the free dofs.
inline SparseMatrix assemble_mass(const GridHierarchy& h, const CoefficientField& f,
                                  const DofMap& dofs) {
    std::vector<std::tuple<int, int, double>> trip;
    for (int iy = 0; iy < h.fine_ny; ++iy) {
        for (int ix = 0; ix < h.fine_nx; ++ix) {
            if (!f.is_active(ix, iy)) continue;
            auto k = element_mass(h.hx(), h.hy());
            auto nodes = cell_nodes(h, ix, iy);
            for (int a = 0; a < 4; ++a) {
                int ra = dofs.node_to_dof[static_cast<size_t>(nodes[a])];
                if (ra < 0) continue;
                for (int b = 0; b < 4; ++b) {
                    int rb = dofs.node_to_dof[static_cast<size_t>(nodes[b])];
                    if (rb < 0) continue;
                    trip.emplace_back(ra, rb, k[a][b]);
                }
            }
        }
    }
    return SparseMatrix::from_triplets(dofs.n_dofs(), trip);
}

/// Load vector for a cellwise-constant source (value per fine cell, or a
/// single constant).
inline std::vector<double> assemble_load(const GridHierarchy& h, const CoefficientField& f,
                                         const DofMap& dofs,
                                         const std::vector<double>& cell_values) {
    std::vector<double> b(static_cast<size_t>(dofs.n_dofs()), 0.0);
    double w = 0.25 * h.hx() * h.hy();
    for (int iy = 0; iy < h.fine_ny; ++iy) {
        for (int ix = 0; ix < h.fine_nx; ++ix) {
            if (!f.is_active(ix, iy)) continue;
            double fv = cell_values.size() == 1
                            ? cell_values[0]
                            : cell_values[static_cast<size_t>(iy) * h.fine_nx + ix];
            auto nodes = cell_nodes(h, ix, iy);
            for (int a = 0; a < 4; ++a) {
                int ra = dofs.node_to_dof[static_cast<size_t>(nodes[a])];
                if (ra >= 0) b[static_cast<size_t>(ra)] += fv * w;
            }
        }
    }
    return b;
}

/// Dirichlet problem on a rectangular patch of fine cells, discretized over
/// all patch nodes in row-major order (narrow band). Prescribed nodes are the
/// patch perimeter plus interior nodes that are globally constrained or have
/// no active cell within the patch; they are eliminated symmetrically so one
/// Cholesky factorization serves every boundary-data vector of the patch.
class LocalPoisson {
public:
    LocalPoisson(const GridHierarchy& h, const CoefficientField& f, const CellRect& rect)
        : rect_(rect),
          wn_(rect.width() + 1),
          hn_(rect.height() + 1),
          full_(wn_ * hn_, wn_ + 1),
          solve_(wn_ * hn_, wn_ + 1),
          prescribed_(static_cast<size_t>(wn_) * hn_, 0) {
        const std::vector<NodeClass> cls = classify_nodes_local(h, f);
        for (int ly = 0; ly < hn_; ++ly)
            for (int lx = 0; lx < wn_; ++lx) {
                size_t i = static_cast<size_t>(ly) * wn_ + lx;
                bool perimeter = lx == 0 || lx == wn_ - 1 || ly == 0 || ly == hn_ - 1;
                if (perimeter || cls[i] != NodeClass::Free) prescribed_[i] = 1;
            }
        assemble(h, f);
        solve_.factor();
    }

    int node_count() const { return wn_ * hn_; }
    int local_index(int gx, int gy) const { return (gy - rect_.y0) * wn_ + (gx - rect_.x0); }
    bool is_prescribed(int local) const { return prescribed_[static_cast<size_t>(local)] != 0; }
    const CellRect& rect() const { return rect_; }

    /// Number of unconstrained patch nodes.
    int free_count() const {
        int c = 0;
        for (uint8_t p : prescribed_) c += p == 0 ? 1 : 0;
        return c;
    }

    /// Solves the patch Dirichlet problem: values of g are read at prescribed
    /// nodes, load at free nodes (pass empty for zero load). Returns values
    /// at all patch nodes.
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

    /// Action of the unconstrained patch stiffness (pure Neumann form).
    void apply_stiffness(const std::vector<double>& x, std::vector<double>& y) const {
        full_.sym_multiply(x, y);
    }

    double energy(const std::vector<double>& x, const std::vector<double>& y) const {
        std::vector<double> t;
        full_.sym_multiply(y, t);
        double s = 0.0;
        for (size_t i = 0; i < t.size(); ++i) s += x[i] * t[i];
        return s;
    }

private:
    std::vector<NodeClass> classify_nodes_local(const GridHierarchy& h,
                                                const CoefficientField& f) const {
        std::vector<NodeClass> cls(static_cast<size_t>(node_count()), NodeClass::Free);
        for (int ly = 0; ly < hn_; ++ly)
            for (int lx = 0; lx < wn_; ++lx) {
                int gx = rect_.x0 + lx, gy = rect_.y0 + ly;
                int act = 0;
                bool outer = gx == 0 || gx == h.fine_nx || gy == 0 || gy == h.fine_ny;
                for (int dy = -1; dy <= 0; ++dy)
                    for (int dx = -1; dx <= 0; ++dx) {
                        int cx = gx + dx, cy = gy + dy;
                        if (!rect_.contains_cell(cx, cy)) continue;
                        act += f.is_active(cx, cy) ? 1 : 0;
                    }
                size_t i = static_cast<size_t>(ly) * wn_ + lx;
                // Interface/removed nodes and the outer boundary are pinned;
                // what matters locally is only free vs not.
                bool all_active_around = true;
                for (int dy = -1; dy <= 0; ++dy)
                    for (int dx = -1; dx <= 0; ++dx) {
                        int cx = gx + dx, cy = gy + dy;
                        if (cx < 0 || cx >= h.fine_nx || cy < 0 || cy >= h.fine_ny) continue;
                        if (!f.is_active(cx, cy)) all_active_around = false;
                    }
                if (act == 0 || !all_active_around || outer) cls[i] = NodeClass::Dirichlet;
            }
        return cls;
    }

    void assemble(const GridHierarchy& h, const CoefficientField& f) {
        for (int cy = rect_.y0; cy < rect_.y1; ++cy) {
            for (int cx = rect_.x0; cx < rect_.x1; ++cx) {
                if (!f.is_active(cx, cy)) continue;
                auto k = element_stiffness(h.hx(), h.hy(), f.kappa_at(cx, cy));
                int loc[4] = {local_index(cx, cy), local_index(cx + 1, cy),
                              local_index(cx + 1, cy + 1), local_index(cx, cy + 1)};
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b <= a; ++b) full_.add(loc[a], loc[b], k[a][b]);
            }
        }
        // Symmetric Dirichlet elimination into the solve matrix.
        for (int i = 0; i < node_count(); ++i) {
            if (prescribed_[static_cast<size_t>(i)]) {
                solve_.add(i, i, 1.0);
                continue;
            }
            int hb = full_.half_bandwidth();
            for (int j = std::max(0, i - hb); j <= std::min(node_count() - 1, i + hb); ++j) {
                if (prescribed_[static_cast<size_t>(j)] || j > i) continue;
                double v = full_.at(i, j);
                if (v != 0.0) solve_.add(i, j, v);
            }
            if (solve_.at(i, i) == 0.0) solve_.add(i, i, 1.0);  // isolated free node guard
        }
    }

    CellRect rect_;
    int wn_, hn_;
    BandMatrixSym full_;
    BandMatrix solve_;
    std::vector<uint8_t> prescribed_;
};

/// Symmetric band Gram matrix of a local bilinear form over all nodes of a
/// patch (no constraints); used for the spectral forms on a region.
class PatchForm {
public:
    enum class Kind { Stiffness, Mass, WeightedMass };

    PatchForm(const GridHierarchy& h, const CoefficientField& f, const CellRect& rect,
              Kind kind, int level = 0, int vx = 0, int vy = 0)
        : rect_(rect), wn_(rect.width() + 1), band_(wn_ * (rect.height() + 1), wn_ + 1) {
        for (int cy = rect.y0; cy < rect.y1; ++cy) {
            for (int cx = rect.x0; cx < rect.x1; ++cx) {
                if (!f.is_active(cx, cy)) continue;
                std::array<std::array<double, 4>, 4> k;
                if (kind == Kind::Stiffness)
                    k = element_stiffness(h.hx(), h.hy(), f.kappa_at(cx, cy));
                else if (kind == Kind::Mass)
                    k = element_mass(h.hx(), h.hy());
                else
                    k = element_weighted_mass(h, level, vx, vy, cx, cy);
                int loc[4] = {local_index(cx, cy), local_index(cx + 1, cy),
                              local_index(cx + 1, cy + 1), local_index(cx, cy + 1)};
                for (int a = 0; a < 4; ++a)
                    for (int b = 0; b <= a; ++b) band_.add(loc[a], loc[b], k[a][b]);
            }
        }
    }

    int local_index(int gx, int gy) const { return (gy - rect_.y0) * wn_ + (gx - rect_.x0); }
    int node_count() const { return band_.rows(); }

    void apply(const std::vector<double>& x, std::vector<double>& y) const {
        band_.sym_multiply(x, y);
    }

    double quadratic(const std::vector<double>& x, const std::vector<double>& y) const {
        std::vector<double> t;
        band_.sym_multiply(y, t);
        double s = 0.0;
        for (size_t i = 0; i < t.size(); ++i) s += x[i] * t[i];
        return s;
    }

private:
    CellRect rect_;
    int wn_;
    BandMatrixSym band_;
};

}  // namespace msfem
