#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "core.hpp"

namespace msfem {

/// Operation-count model for the basis-construction pipeline. Local solves
/// cost n^alpha, eigen-solves cost selected * snapshots^beta; the model
/// predicts cost ratios between the two-level and fully multilevel routes,
/// not wall-clock time.
struct CostParams {
    double alpha = 1.0;  ///< local-solver exponent
    double beta = 1.0;   ///< eigen-solver exponent
    std::vector<double> coarsening;  ///< C_i, one per level (size M)
    std::vector<double> snapshots;   ///< r_i per region level (size M-1)
    std::vector<double> selected;    ///< basis counts per region level (size M-1)
    std::vector<double> structure;   ///< oversampling/structure factors (size M-1)

    int levels() const { return static_cast<int>(coarsening.size()); }

    /// Fine-cell count per direction implied by the coarsening chain.
    double total_cells() const {
        double n = 1.0;
        for (double c : coarsening) n *= c;
        return n;
    }

    static CostParams uniform(int m, double c, double r, double lambda, double mf,
                              double alpha, double beta) {
        CostParams p;
        p.alpha = alpha;
        p.beta = beta;
        p.coarsening.assign(static_cast<size_t>(m), c);
        p.snapshots.assign(static_cast<size_t>(m) - 1, r);
        p.selected.assign(static_cast<size_t>(m) - 1, lambda);
        p.structure.assign(static_cast<size_t>(m) - 1, mf);
        return p;
    }

    /// Checks the modelling assumptions; throws naming the failed inequality.
    /// The snapshot-vs-selected leg is enforced non-strictly so that unit
    /// basis counts (r = lambda = 1) remain admissible.
    void validate() const {
        int m = levels();
        if (m < 2) throw config_error("cost model needs at least two levels");
        size_t inner = static_cast<size_t>(m) - 1;
        if (snapshots.size() != inner || selected.size() != inner || structure.size() != inner)
            throw config_error("cost parameter vectors must have one entry per region level");
        if (!(alpha >= beta) || beta < 0.0)
            throw config_error("cost exponents must satisfy alpha >= beta >= 0");
        for (double c : coarsening)
            if (c <= 0.0) throw config_error("coarsening numbers must be positive");
        for (size_t i = 0; i < inner; ++i) {
            std::string lvl = std::to_string(i + 1);
            if (snapshots[i] <= 0.0 || selected[i] <= 0.0 || structure[i] <= 0.0)
                throw config_error("cost parameters at level " + lvl + " must be positive");
            if (!(structure[i] * coarsening[i + 1] > snapshots[i]))
                throw config_error("cost parameters violate M_" + lvl + "*C_" +
                                   std::to_string(i + 2) + " > r_" + lvl);
            if (!(snapshots[i] >= selected[i]))
                throw config_error("cost parameters violate r_" + lvl + " >= lambda_" + lvl);
        }
    }
};

/// Two-level route: every region solves snapshot problems spanning all finer
/// levels at once, then one spectral reduction.
inline double op_count_two_level(const CostParams& p) {
    p.validate();
    double prod = 1.0;
    for (size_t i = 1; i < p.coarsening.size(); ++i) prod *= p.coarsening[i];
    return p.coarsening[0] * p.snapshots[0] * std::pow(p.structure[0] * prod, p.alpha) +
           p.selected[0] * std::pow(p.snapshots[0], p.beta);
}

/// Multilevel route: each region level pools the already-reduced bases of the
/// next finer level; the deepest solve has no further reduction, so its
/// selected-basis factor is 1.
inline double op_count_multilevel(const CostParams& p) {
    p.validate();
    int m = p.levels();
    double total = 0.0, cprod = 1.0;
    for (int j = 1; j <= m - 1; ++j) {
        cprod *= p.coarsening[static_cast<size_t>(j) - 1];
        double lam_next = j <= m - 2 ? p.selected[static_cast<size_t>(j)] : 1.0;
        total += cprod * p.snapshots[static_cast<size_t>(j) - 1] *
                     std::pow(lam_next * p.structure[static_cast<size_t>(j) - 1] *
                                  p.coarsening[static_cast<size_t>(j)],
                              p.alpha) +
                 p.selected[static_cast<size_t>(j) - 1] *
                     std::pow(p.snapshots[static_cast<size_t>(j) - 1], p.beta);
    }
    return total;
}

/// Closed form of the multilevel count under uniform parameters; the direct
/// summation must reproduce it exactly.
inline double uniform_multilevel_closed_form(int m, double c, double r, double lambda,
                                             double mf, double alpha, double beta) {
    // geometric sum c^1 + ... + c^(m-2)
    double geo = c == 1.0 ? m - 2 : c * (std::pow(c, m - 2) - 1.0) / (c - 1.0);
    double local = r * std::pow(mf * c, alpha) *
                   (std::pow(lambda, alpha) * geo + std::pow(c, m - 1));
    double eigen = (m - 1) * lambda * std::pow(r, beta);
    return local + eigen;
}

/// Raw two-level/multilevel quotient next to the asymptotic prediction
/// C^((M-2)(alpha-1)). The prediction assumes uniform parameters, so
/// geometric means stand in for C and lambda; it only claims validity when
/// C exceeds lambda^alpha.
struct SpeedupRatio {
    double quotient = 0.0;
    double predicted = 0.0;
    bool asymptotic_valid = true;
};

inline SpeedupRatio speedup_ratio(const CostParams& p) {
    SpeedupRatio s;
    s.quotient = op_count_two_level(p) / op_count_multilevel(p);
    int m = p.levels();
    double log_c = 0.0;
    for (double c : p.coarsening) log_c += std::log(c);
    double c_bar = std::exp(log_c / m);
    double log_l = 0.0;
    for (double l : p.selected) log_l += std::log(l);
    double l_bar = std::exp(log_l / (m - 1));
    s.predicted = std::pow(c_bar, (m - 2) * (p.alpha - 1.0));
    s.asymptotic_valid = c_bar > std::pow(l_bar, p.alpha);
    return s;
}

}  // namespace msfem
