#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "adaptive.hpp"
#include "field.hpp"
#include "grid.hpp"
#include "homogenize.hpp"
#include "io.hpp"
#include "offline.hpp"
#include "solver.hpp"

namespace msfem {

/// One experiment description: grid, coefficient inputs, basis counts, and
/// driver parameters. Parsed from `key = value` text (one per line, `#`
/// comments); every unknown key is a hard error.
struct ExperimentConfig {
    int fine_nx = 0, fine_ny = 0;
    double Lx = 1.0, Ly = 1.0;
    std::vector<std::pair<int, int>> factors;  ///< per level, coarsest first

    std::vector<int> basis;            ///< N1..N{levels-1}
    std::vector<int> snapshot_counts;  ///< per region level; 0 = automatic
    std::vector<SnapshotMode> modes;   ///< per region level
    int oversample_fine = 4, oversample_coarse = 0, store_cap = 0;
    bool keep_snapshots = true;

    double theta = 0.7, tol = 0.0;
    int max_iter = 5;
    uint64_t seed = 1;

    double kappa_constant = 1.0, source = 1.0;
    std::string kappa_raster, mask_raster, source_raster;
    std::string output_dir = ".";
    std::string label;

    std::vector<int> sweep_n1, sweep_n2, sweep_n3;

    int levels() const { return static_cast<int>(factors.size()); }

    std::string level_config() const {
        return label.empty() ? std::to_string(levels()) + "level" : label;
    }

    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

inline int parse_int(const std::string& s, const std::string& key, int line) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw config_error("line " + std::to_string(line) + ": " + key +
                           " expects an integer, got `" + s + "`");
    return v;
}

inline uint64_t parse_u64(const std::string& s, const std::string& key, int line) {
    uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw config_error("line " + std::to_string(line) + ": " + key +
                           " expects a nonnegative integer, got `" + s + "`");
    return v;
}

inline double parse_num(const std::string& s, const std::string& key, int line) {
    char* end = nullptr;
    double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || s.empty())
        throw config_error("line " + std::to_string(line) + ": " + key +
                           " expects a number, got `" + s + "`");
    return v;
}

inline std::vector<int> parse_int_list(const std::string& s, const std::string& key, int line) {
    std::vector<int> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) out.push_back(parse_int(item, key, line));
    if (out.empty())
        throw config_error("line " + std::to_string(line) + ": " + key +
                           " expects a comma-separated integer list");
    return out;
}

inline SnapshotMode parse_mode(const std::string& s, const std::string& key, int line) {
    if (s == "trace_exhaustive") return SnapshotMode::TraceExhaustive;
    if (s == "trace_randomized") return SnapshotMode::TraceRandomized;
    throw config_error("line " + std::to_string(line) + ": " + key +
                       " must be trace_exhaustive or trace_randomized, got `" + s + "`");
}

inline std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

}  // namespace detail

/// Parses config text; `origin` names the source in error messages.
inline ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
    struct Entry {
        std::string value;
        int line;
    };
    std::map<std::string, Entry> kv;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw config_error(origin + ": line " + std::to_string(line_no) +
                               ": expected `key = value`");
        std::string key = detail::trim(line.substr(0, eq));
        std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty())
            throw config_error(origin + ": line " + std::to_string(line_no) + ": empty key");
        if (kv.count(key))
            throw config_error(origin + ": line " + std::to_string(line_no) +
                               ": duplicate key `" + key + "` (first on line " +
                               std::to_string(kv[key].line) + ")");
        kv[key] = {value, line_no};
    }

    auto take = [&](const std::string& key) -> Entry* {
        auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    auto require = [&](const std::string& key) -> Entry& {
        Entry* e = take(key);
        if (!e) throw config_error(origin + ": missing required key `" + key + "`");
        return *e;
    };

    ExperimentConfig cfg;
    try {
        Entry& fx = require("factors");
        {
            std::istringstream fs(fx.value);
            std::string item;
            while (std::getline(fs, item, ',')) {
                item = detail::trim(item);
                size_t x = item.find('x');
                if (x == std::string::npos)
                    throw config_error("line " + std::to_string(fx.line) +
                                       ": factors entries look like `10x10`, got `" + item + "`");
                cfg.factors.emplace_back(detail::parse_int(item.substr(0, x), "factors", fx.line),
                                         detail::parse_int(item.substr(x + 1), "factors", fx.line));
            }
        }
        if (cfg.levels() < 2)
            throw config_error("line " + std::to_string(fx.line) +
                               ": factors must list at least two levels");
        int region_levels = cfg.levels() - 1;

        cfg.fine_nx = detail::parse_int(require("fine_nx").value, "fine_nx", require("fine_nx").line);
        cfg.fine_ny = detail::parse_int(require("fine_ny").value, "fine_ny", require("fine_ny").line);

        cfg.basis.assign(static_cast<size_t>(region_levels), 2);
        cfg.snapshot_counts.assign(static_cast<size_t>(region_levels), 0);
        {
            CascadePlan defaults = default_plan(cfg.levels(),
                                                std::vector<int>(static_cast<size_t>(region_levels), 2));
            cfg.modes.clear();
            for (const LevelPlan& lp : defaults.levels) cfg.modes.push_back(lp.mode);
        }

        std::vector<std::string> known = {"factors",     "fine_nx",        "fine_ny",
                                          "Lx",          "Ly",             "oversample_fine",
                                          "oversample_coarse", "store_cap", "keep_snapshots",
                                          "theta",       "tol",            "max_iter",
                                          "seed",        "kappa_constant", "kappa_raster",
                                          "mask_raster", "source",         "source_raster",
                                          "output_dir",  "label"};
        for (int k = 1; k <= region_levels; ++k) {
            known.push_back("N" + std::to_string(k));
            known.push_back("snapshots_" + std::to_string(k));
            known.push_back("mode_" + std::to_string(k));
            if (k <= 3) known.push_back("sweep_N" + std::to_string(k));
        }
        for (const auto& [key, entry] : kv)
            if (std::find(known.begin(), known.end(), key) == known.end())
                throw config_error("line " + std::to_string(entry.line) + ": unknown key `" +
                                   key + "`");

        if (Entry* e = take("Lx")) cfg.Lx = detail::parse_num(e->value, "Lx", e->line);
        if (Entry* e = take("Ly")) cfg.Ly = detail::parse_num(e->value, "Ly", e->line);
        for (int k = 1; k <= region_levels; ++k) {
            std::string nk = "N" + std::to_string(k);
            if (Entry* e = take(nk))
                cfg.basis[static_cast<size_t>(k) - 1] = detail::parse_int(e->value, nk, e->line);
            std::string sk = "snapshots_" + std::to_string(k);
            if (Entry* e = take(sk))
                cfg.snapshot_counts[static_cast<size_t>(k) - 1] =
                    detail::parse_int(e->value, sk, e->line);
            std::string mk = "mode_" + std::to_string(k);
            if (Entry* e = take(mk))
                cfg.modes[static_cast<size_t>(k) - 1] = detail::parse_mode(e->value, mk, e->line);
            if (k <= 3) {
                std::string wk = "sweep_N" + std::to_string(k);
                if (Entry* e = take(wk)) {
                    auto list = detail::parse_int_list(e->value, wk, e->line);
                    (k == 1 ? cfg.sweep_n1 : k == 2 ? cfg.sweep_n2 : cfg.sweep_n3) = list;
                }
            }
        }
        if (Entry* e = take("oversample_fine"))
            cfg.oversample_fine = detail::parse_int(e->value, "oversample_fine", e->line);
        if (Entry* e = take("oversample_coarse"))
            cfg.oversample_coarse = detail::parse_int(e->value, "oversample_coarse", e->line);
        if (Entry* e = take("store_cap"))
            cfg.store_cap = detail::parse_int(e->value, "store_cap", e->line);
        if (Entry* e = take("keep_snapshots"))
            cfg.keep_snapshots = detail::parse_int(e->value, "keep_snapshots", e->line) != 0;
        if (Entry* e = take("theta")) cfg.theta = detail::parse_num(e->value, "theta", e->line);
        if (Entry* e = take("tol")) cfg.tol = detail::parse_num(e->value, "tol", e->line);
        if (Entry* e = take("max_iter"))
            cfg.max_iter = detail::parse_int(e->value, "max_iter", e->line);
        if (Entry* e = take("seed")) cfg.seed = detail::parse_u64(e->value, "seed", e->line);
        if (Entry* e = take("kappa_constant"))
            cfg.kappa_constant = detail::parse_num(e->value, "kappa_constant", e->line);
        if (Entry* e = take("source")) cfg.source = detail::parse_num(e->value, "source", e->line);
        if (Entry* e = take("kappa_raster")) cfg.kappa_raster = e->value;
        if (Entry* e = take("mask_raster")) cfg.mask_raster = e->value;
        if (Entry* e = take("source_raster")) cfg.source_raster = e->value;
        if (Entry* e = take("output_dir")) cfg.output_dir = e->value;
        if (Entry* e = take("label")) cfg.label = e->value;

        // Divisibility and basic sanity come from the hierarchy constructor.
        std::vector<std::pair<int, int>> fac = cfg.factors;
        build_hierarchy(cfg.fine_nx, cfg.fine_ny, fac, cfg.Lx, cfg.Ly);
    } catch (const config_error& e) {
        std::string what = e.what();
        if (what.rfind(origin, 0) == 0) throw;
        throw config_error(origin + ": " + what);
    }
    return cfg;
}

/// Resolves relative raster paths against `base` and checks they exist.
inline void resolve_config_paths(ExperimentConfig& cfg, const std::string& base,
                                 const std::string& origin) {
    for (std::string* p : {&cfg.kappa_raster, &cfg.mask_raster, &cfg.source_raster}) {
        if (p->empty()) continue;
        if (std::filesystem::path(*p).is_relative())
            *p = (std::filesystem::path(base) / *p).string();
        if (!std::filesystem::exists(*p))
            throw config_error(origin + ": referenced file does not exist: " + *p);
    }
}

/// Reads a config file. Relative raster paths are resolved against the
/// directory holding the config, so bundled configs work from any cwd.
inline ExperimentConfig parse_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    ExperimentConfig cfg = parse_config_text(ss.str(), path);
    resolve_config_paths(cfg, std::filesystem::path(path).parent_path().string(), path);
    return cfg;
}

/// Canonical text emission; parse_config_text(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& cfg) {
    std::ostringstream out;
    out << "fine_nx = " << cfg.fine_nx << "\nfine_ny = " << cfg.fine_ny << '\n';
    out << "Lx = " << format_double(cfg.Lx) << "\nLy = " << format_double(cfg.Ly) << '\n';
    out << "factors = ";
    for (size_t i = 0; i < cfg.factors.size(); ++i)
        out << (i ? "," : "") << cfg.factors[i].first << 'x' << cfg.factors[i].second;
    out << '\n';
    for (size_t k = 0; k < cfg.basis.size(); ++k) {
        out << "N" << k + 1 << " = " << cfg.basis[k] << '\n';
        out << "snapshots_" << k + 1 << " = " << cfg.snapshot_counts[k] << '\n';
        out << "mode_" << k + 1 << " = "
            << (cfg.modes[k] == SnapshotMode::TraceExhaustive ? "trace_exhaustive"
                                                              : "trace_randomized")
            << '\n';
    }
    auto list = [&](const char* key, const std::vector<int>& v) {
        if (v.empty()) return;
        out << key << " = ";
        for (size_t i = 0; i < v.size(); ++i) out << (i ? "," : "") << v[i];
        out << '\n';
    };
    list("sweep_N1", cfg.sweep_n1);
    list("sweep_N2", cfg.sweep_n2);
    list("sweep_N3", cfg.sweep_n3);
    out << "oversample_fine = " << cfg.oversample_fine << '\n';
    out << "oversample_coarse = " << cfg.oversample_coarse << '\n';
    out << "store_cap = " << cfg.store_cap << '\n';
    out << "keep_snapshots = " << (cfg.keep_snapshots ? 1 : 0) << '\n';
    out << "theta = " << format_double(cfg.theta) << '\n';
    out << "tol = " << format_double(cfg.tol) << '\n';
    out << "max_iter = " << cfg.max_iter << '\n';
    out << "seed = " << cfg.seed << '\n';
    out << "kappa_constant = " << format_double(cfg.kappa_constant) << '\n';
    out << "source = " << format_double(cfg.source) << '\n';
    if (!cfg.kappa_raster.empty()) out << "kappa_raster = " << cfg.kappa_raster << '\n';
    if (!cfg.mask_raster.empty()) out << "mask_raster = " << cfg.mask_raster << '\n';
    if (!cfg.source_raster.empty()) out << "source_raster = " << cfg.source_raster << '\n';
    out << "output_dir = " << cfg.output_dir << '\n';
    if (!cfg.label.empty()) out << "label = " << cfg.label << '\n';
    return out.str();
}

inline GridHierarchy config_hierarchy(const ExperimentConfig& cfg) {
    std::vector<std::pair<int, int>> fac = cfg.factors;
    return build_hierarchy(cfg.fine_nx, cfg.fine_ny, fac, cfg.Lx, cfg.Ly);
}

inline CoefficientField config_field(const ExperimentConfig& cfg) {
    CoefficientField f;
    if (!cfg.kappa_raster.empty()) {
        Raster kap = read_raster(cfg.kappa_raster);
        if (kap.nx != cfg.fine_nx || kap.ny != cfg.fine_ny)
            throw config_error("kappa raster is " + std::to_string(kap.nx) + "x" +
                               std::to_string(kap.ny) + ", config grid is " +
                               std::to_string(cfg.fine_nx) + "x" + std::to_string(cfg.fine_ny));
        f = field_from_rasters(kap, nullptr);
    } else {
        f = CoefficientField::constant(cfg.fine_nx, cfg.fine_ny, cfg.kappa_constant);
    }
    if (!cfg.mask_raster.empty()) {
        Raster mask = read_raster(cfg.mask_raster);
        Raster kap;
        kap.nx = f.nx;
        kap.ny = f.ny;
        kap.values = f.kappa;
        f = field_from_rasters(kap, &mask);
    }
    return f;
}

inline CascadePlan config_plan(const ExperimentConfig& cfg) {
    CascadePlan plan = default_plan(cfg.levels(), cfg.basis);
    for (size_t k = 0; k < plan.levels.size(); ++k) {
        plan.levels[k].mode = cfg.modes[k];
        plan.levels[k].snapshot_count = cfg.snapshot_counts[k];
    }
    plan.seed = cfg.seed;
    plan.oversample_fine = cfg.oversample_fine;
    plan.oversample_coarse = cfg.oversample_coarse;
    plan.store_cap = cfg.store_cap;
    plan.keep_snapshots = cfg.keep_snapshots;
    return plan;
}

inline FineSystem config_fine_system(const ExperimentConfig& cfg, const GridHierarchy& h,
                                     const CoefficientField& f) {
    FineSystem fs = assemble_fine_system(h, f, cfg.source);
    if (!cfg.source_raster.empty()) {
        Raster src = read_raster(cfg.source_raster);
        if (src.nx != cfg.fine_nx || src.ny != cfg.fine_ny)
            throw config_error("source raster dimensions do not match the fine grid");
        fs.b = assemble_load(h, f, fs.dofs, src.values);
    }
    return fs;
}

namespace detail {

inline void ensure_output_dir(const ExperimentConfig& cfg) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir, ec);
    if (ec) throw config_error("cannot create output directory: " + cfg.output_dir);
}

/// Snapshot-space reference solve; unavailable when the snapshot system is
/// larger than the dense-solver budget.
inline bool snapshot_reference(const GridHierarchy& h, const Cascade& c, const FineSystem& fs,
                               std::vector<double>& u_snap, int dense_limit = 4000) {
    CoarseSpace snap = make_snapshot_space(h, c);
    if (snap.total() == 0 || snap.total() > dense_limit) return false;
    ReducedSystem rs = reduced_system(h, fs.dofs, fs.A, fs.b, snap);
    std::vector<double> coeff = solve_reduced(rs.A, rs.b, dense_limit);
    u_snap = expand_coarse(h, fs.dofs, snap, coeff);
    return true;
}

}  // namespace detail

/// One sweep cell: basis counts per region level, the resulting space size,
/// and errors against the fine and snapshot references.
struct SweepRow {
    std::string level_config;
    int n1 = 0, n2 = 0, n3 = 0;
    int dof = 0;
    ErrorPair err;
    ErrorPair err_snap;
    bool snap_ok = false;
};

inline Csv sweep_csv(const std::vector<SweepRow>& rows) {
    Csv csv;
    csv.columns = {"level_config", "N1", "N2", "N3", "DOF", "e1", "e2", "e1_snap", "e2_snap"};
    for (const SweepRow& r : rows) {
        double e1s = r.snap_ok ? r.err_snap.e1 : std::nan("");
        double e2s = r.snap_ok ? r.err_snap.e2 : std::nan("");
        csv.rows.push_back({r.level_config, std::to_string(r.n1), std::to_string(r.n2),
                            std::to_string(r.n3), std::to_string(r.dof), format_double(r.err.e1),
                            format_double(r.err.e2), format_double(e1s), format_double(e2s)});
    }
    return csv;
}

/// Error table over basis-count combinations. The level-1 dimension reuses
/// one cascade built at the largest requested N1 (leading-mode truncation is
/// exact); deeper counts change the level-1 snapshot pools, so each deeper
/// combination rebuilds the cascade.
inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg) {
    if (cfg.levels() - 1 > 3)
        throw config_error("sweep output covers at most three region levels");
    GridHierarchy h = config_hierarchy(cfg);
    CoefficientField field = config_field(cfg);
    FineSystem fs = config_fine_system(cfg, h, field);
    std::vector<double> u_h = solve_fine(fs);

    std::vector<int> l1 = cfg.sweep_n1.empty() ? std::vector<int>{cfg.basis[0]} : cfg.sweep_n1;
    std::vector<int> l2 = cfg.levels() > 2
                              ? (cfg.sweep_n2.empty() ? std::vector<int>{cfg.basis[1]} : cfg.sweep_n2)
                              : std::vector<int>{0};
    std::vector<int> l3 = cfg.levels() > 3
                              ? (cfg.sweep_n3.empty() ? std::vector<int>{cfg.basis[2]} : cfg.sweep_n3)
                              : std::vector<int>{0};
    int n1_max = *std::max_element(l1.begin(), l1.end());

    std::vector<SweepRow> rows;
    for (int n3 : l3) {
        for (int n2 : l2) {
            ExperimentConfig at = cfg;
            at.basis[0] = n1_max;
            if (cfg.levels() > 2) at.basis[1] = n2;
            if (cfg.levels() > 3) at.basis[2] = n3;
            Cascade c = build_cascade(h, field, config_plan(at));
            CoarseSpace cs = make_offline_space(c);
            ReducedSystem rs = reduced_system(h, fs.dofs, fs.A, fs.b, cs);
            std::vector<double> u_snap;
            bool snap_ok = detail::snapshot_reference(h, c, fs, u_snap);
            for (int n1 : l1) {
                std::vector<int> idx = columns_upto(cs, n1);
                CoarseSolution sol = solve_coarse_subset(h, fs.dofs, cs, rs, idx);
                SweepRow row;
                row.level_config = cfg.level_config();
                row.n1 = n1;
                row.n2 = n2;
                row.n3 = n3;
                row.dof = sol.dof;
                row.err = relative_errors(fs.A, fs.M, u_h, sol.u);
                row.snap_ok = snap_ok;
                if (snap_ok) row.err_snap = relative_errors(fs.A, fs.M, u_snap, sol.u);
                rows.push_back(std::move(row));
            }
        }
    }
    detail::ensure_output_dir(cfg);
    write_csv(sweep_csv(rows), cfg.output_dir + "/errors.csv");
    return rows;
}

inline Csv adapt_csv(const std::vector<EnrichmentHistory>& runs) {
    Csv csv;
    csv.columns = {"mode",    "iteration",  "DOF1",      "DOF2",     "e2_snap",
                   "e1_snap", "eta_sq_sum", "marked_l1", "marked_l2"};
    for (const EnrichmentHistory& hist : runs)
        for (const EnrichmentRecord& r : hist.records)
            csv.rows.push_back({enrich_mode_name(hist.mode), std::to_string(r.iteration),
                                std::to_string(r.dof1), std::to_string(r.dof2),
                                format_double(r.e2_snap), format_double(r.e1_snap),
                                format_double(r.eta_sq_sum), std::to_string(r.marked_l1.size()),
                                std::to_string(r.marked_l2.size())});
    return csv;
}

/// Runs the enrichment loop once per mode (both levels, level 1 only,
/// level 2 only) from the same initial cascade.
inline std::vector<EnrichmentHistory> run_adapt(const ExperimentConfig& cfg) {
    GridHierarchy h = config_hierarchy(cfg);
    CoefficientField field = config_field(cfg);
    FineSystem fs = config_fine_system(cfg, h, field);
    std::vector<EnrichmentHistory> runs;
    for (EnrichMode mode : {EnrichMode::Both, EnrichMode::Level1Only, EnrichMode::Level2Only}) {
        Cascade c = build_cascade(h, field, config_plan(cfg));
        EnrichOptions opt;
        opt.mode = mode;
        opt.theta = cfg.theta;
        opt.tol = cfg.tol;
        opt.max_iter = cfg.max_iter;
        runs.push_back(enrich_loop(h, field, fs, c, opt));
    }
    detail::ensure_output_dir(cfg);
    write_csv(adapt_csv(runs), cfg.output_dir + "/adapt.csv");
    return runs;
}

struct SolveSummary {
    int dof = 0;
    ErrorPair err;
    ErrorPair err_snap;
    bool snap_ok = false;
};

/// Single multiscale solve at the configured basis counts; writes the
/// multiscale and fine solutions as nodal rasters.
inline SolveSummary run_solve(const ExperimentConfig& cfg) {
    GridHierarchy h = config_hierarchy(cfg);
    CoefficientField field = config_field(cfg);
    FineSystem fs = config_fine_system(cfg, h, field);
    std::vector<double> u_h = solve_fine(fs);
    Cascade c = build_cascade(h, field, config_plan(cfg));
    CoarseSpace cs = make_offline_space(c);
    ReducedSystem rs = reduced_system(h, fs.dofs, fs.A, fs.b, cs);
    std::vector<double> coeff = solve_reduced(rs.A, rs.b);
    std::vector<double> u = expand_coarse(h, fs.dofs, cs, coeff);

    SolveSummary out;
    out.dof = cs.total();
    out.err = relative_errors(fs.A, fs.M, u_h, u);
    std::vector<double> u_snap;
    out.snap_ok = detail::snapshot_reference(h, c, fs, u_snap);
    if (out.snap_ok) out.err_snap = relative_errors(fs.A, fs.M, u_snap, u);

    detail::ensure_output_dir(cfg);
    Raster sol{h.fine_nx + 1, h.fine_ny + 1, to_full_grid(h, fs.dofs, u)};
    write_raster(sol, cfg.output_dir + "/solution.txt");
    Raster ref{h.fine_nx + 1, h.fine_ny + 1, to_full_grid(h, fs.dofs, u_h)};
    write_raster(ref, cfg.output_dir + "/reference.txt");
    return out;
}

inline Csv tensors_csv(const HomogenizationResult& hom) {
    Csv csv;
    csv.columns = {"level", "cx", "cy", "kxx", "kxy", "kyx", "kyy", "fallback"};
    for (const auto& level : hom.levels)
        for (const EffectiveTensor& t : level)
            csv.rows.push_back({std::to_string(t.level), std::to_string(t.cx),
                                std::to_string(t.cy), format_double(t.raw.xx),
                                format_double(t.raw.xy), format_double(t.raw.yx),
                                format_double(t.raw.yy), t.fallback ? "1" : "0"});
    return csv;
}

struct HomogenizeSummary {
    HomogenizationResult tensors;
    HomogenizedSolve solve;
    int fallback_count = 0;
};

/// Re-iterated homogenization baseline: effective tensors for every block of
/// every level, a level-1 solve with the coarsest tensors, and errors against
/// the fine solution.
inline HomogenizeSummary run_homogenize(const ExperimentConfig& cfg) {
    GridHierarchy h = config_hierarchy(cfg);
    CoefficientField field = config_field(cfg);
    FineSystem fs = config_fine_system(cfg, h, field);
    std::vector<double> u_h = solve_fine(fs);

    HomogenizeSummary out;
    out.tensors = reiterate_homogenize(h, field);
    for (const auto& level : out.tensors.levels)
        for (const EffectiveTensor& t : level) out.fallback_count += t.fallback ? 1 : 0;
    out.solve = solve_homogenized(h, out.tensors, fs, u_h, cfg.source);

    detail::ensure_output_dir(cfg);
    write_csv(tensors_csv(out.tensors), cfg.output_dir + "/tensors.csv");
    Raster hs{h.fine_nx + 1, h.fine_ny + 1, out.solve.fine};
    write_raster(hs, cfg.output_dir + "/homogenized.txt");
    return out;
}

}  // namespace msfem
