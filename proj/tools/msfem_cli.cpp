#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "msfem/costmodel.hpp"
#include "msfem/runner.hpp"

namespace {

using namespace msfem;

/// Loads a config file and applies `--set KEY=VALUE` overrides by textual
/// merge before parsing, so overrides obey exactly the same validation as
/// file keys.
ExperimentConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();

    if (!sets.empty()) {
        std::vector<std::string> lines;
        std::istringstream ls(text);
        std::string line;
        while (std::getline(ls, line)) lines.push_back(line);
        for (const std::string& kv : sets) {
            size_t eq = kv.find('=');
            if (eq == std::string::npos)
                throw config_error("--set expects KEY=VALUE, got `" + kv + "`");
            std::string key = detail::trim(kv.substr(0, eq));
            std::string value = detail::trim(kv.substr(eq + 1));
            bool replaced = false;
            for (std::string& l : lines) {
                std::string stripped = l.substr(0, l.find('#'));
                size_t leq = stripped.find('=');
                if (leq == std::string::npos) continue;
                if (detail::trim(stripped.substr(0, leq)) == key) {
                    l = key + " = " + value;
                    replaced = true;
                    break;
                }
            }
            if (!replaced) lines.push_back(key + " = " + value);
        }
        std::ostringstream merged;
        for (const std::string& l : lines) merged << l << '\n';
        text = merged.str();
    }

    ExperimentConfig cfg = parse_config_text(text, path);
    resolve_config_paths(cfg, std::filesystem::path(path).parent_path().string(), path);
    return cfg;
}

void print_csv(const Csv& csv) {
    for (size_t i = 0; i < csv.columns.size(); ++i)
        std::cout << (i ? "," : "") << csv.columns[i];
    std::cout << '\n';
    for (const auto& row : csv.rows) {
        for (size_t i = 0; i < row.size(); ++i) std::cout << (i ? "," : "") << row[i];
        std::cout << '\n';
    }
}

std::vector<double> parse_double_list(const std::string& s, const std::string& flag) {
    std::vector<double> out;
    std::istringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw config_error(flag + " expects a comma-separated number list, got `" + s + "`");
        }
    }
    if (out.empty()) throw config_error(flag + " expects a comma-separated number list");
    return out;
}

struct ConfigArgs {
    std::string path;
    std::vector<std::string> sets;

    void attach(CLI::App* cmd) {
        cmd->add_option("config", path, "experiment config file")->required();
        cmd->add_option("--set", sets, "override a config key (KEY=VALUE, repeatable)");
    }
};

void add_sugar(CLI::App* cmd, ConfigArgs& args) {
    auto push = [&args](const std::string& key) {
        return [&args, key](const std::string& v) { args.sets.push_back(key + "=" + v); };
    };
    cmd->add_option_function<std::string>("-o,--output-dir", push("output_dir"),
                                          "directory for result files");
    cmd->add_option_function<std::string>("--seed", push("seed"), "RNG seed");
    cmd->add_option_function<std::string>("--label", push("label"),
                                          "level_config column value in CSV output");
}

int cmd_solve(const ConfigArgs& args) {
    ExperimentConfig cfg = load_config(args.path, args.sets);
    SolveSummary s = run_solve(cfg);
    std::cout << "DOF " << s.dof << '\n';
    std::cout << "e1 " << format_double(s.err.e1) << '\n';
    std::cout << "e2 " << format_double(s.err.e2) << '\n';
    if (s.snap_ok) {
        std::cout << "e1_snap " << format_double(s.err_snap.e1) << '\n';
        std::cout << "e2_snap " << format_double(s.err_snap.e2) << '\n';
    }
    std::cout << "wrote " << cfg.output_dir << "/solution.txt and reference.txt\n";
    return 0;
}

int cmd_sweep(const ConfigArgs& args) {
    ExperimentConfig cfg = load_config(args.path, args.sets);
    std::vector<SweepRow> rows = run_sweep(cfg);
    print_csv(sweep_csv(rows));
    std::cerr << "wrote " << cfg.output_dir << "/errors.csv (" << rows.size() << " rows)\n";
    return 0;
}

int cmd_adapt(const ConfigArgs& args) {
    ExperimentConfig cfg = load_config(args.path, args.sets);
    std::vector<EnrichmentHistory> runs = run_adapt(cfg);
    print_csv(adapt_csv(runs));
    std::cerr << "wrote " << cfg.output_dir << "/adapt.csv\n";
    return 0;
}

int cmd_homogenize(const ConfigArgs& args) {
    ExperimentConfig cfg = load_config(args.path, args.sets);
    HomogenizeSummary s = run_homogenize(cfg);
    if (s.solve.zero_reference) {
        std::cout << "reference solution is zero; relative errors undefined\n";
    } else {
        std::cout << "e1 " << format_double(s.solve.errors.e1) << '\n';
        std::cout << "e2 " << format_double(s.solve.errors.e2) << '\n';
    }
    if (s.fallback_count > 0)
        std::cout << "fallback blocks " << s.fallback_count << '\n';
    std::cout << "wrote " << cfg.output_dir << "/tensors.csv and homogenized.txt\n";
    return 0;
}

struct CostArgs {
    int levels = 0;
    std::string uniform;  // c,r,lambda,mf
    std::string coarsening, snapshots, selected, structure;
    double alpha = 1.0, beta = 1.0;
};

int cmd_cost(const CostArgs& a) {
    CostParams p;
    if (!a.uniform.empty()) {
        std::vector<double> u = parse_double_list(a.uniform, "--uniform");
        if (u.size() != 4) throw config_error("--uniform expects c,r,lambda,mf");
        if (a.levels < 2) throw config_error("--levels must be at least 2");
        p = CostParams::uniform(a.levels, u[0], u[1], u[2], u[3], a.alpha, a.beta);
    } else {
        if (a.coarsening.empty())
            throw config_error("pass either --uniform or the explicit parameter lists");
        p.alpha = a.alpha;
        p.beta = a.beta;
        p.coarsening = parse_double_list(a.coarsening, "--coarsening");
        p.snapshots = parse_double_list(a.snapshots, "--snapshots");
        p.selected = parse_double_list(a.selected, "--selected");
        p.structure = parse_double_list(a.structure, "--structure");
    }
    p.validate();
    double two = op_count_two_level(p);
    double multi = op_count_multilevel(p);
    SpeedupRatio ratio = speedup_ratio(p);
    std::cout << "two_level " << format_double(two) << '\n';
    std::cout << "multilevel " << format_double(multi) << '\n';
    std::cout << "quotient " << format_double(two / multi) << '\n';
    std::cout << "asymptotic " << format_double(ratio.predicted)
              << (ratio.asymptotic_valid ? "" : " (outside validity range)") << '\n';
    return 0;
}

struct GenPerfArgs {
    int nx = 0, ny = 0, count = 0, r_min = 1, r_max = 1;
    uint64_t seed = 1;
    std::string out;
};

int cmd_gen_perf(const GenPerfArgs& a) {
    PerforationMask m = gen_perforation_mask(a.nx, a.ny, a.count, a.r_min, a.r_max, a.seed);
    write_raster(mask_to_raster(m), a.out);
    std::cout << "porosity " << format_double(m.porosity) << '\n';
    if (m.mostly_perforated)
        std::cerr << "warning: porosity below 0.5; most of the domain is perforated\n";
    std::cout << "wrote " << a.out << '\n';
    return 0;
}

struct GenFieldArgs {
    int nx = 0, ny = 0, horizontal = 6, vertical = 8, inclusions = 40;
    uint64_t seed = 1;
    double contrast = 1e4;
    std::string out;
};

int cmd_gen_field(const GenFieldArgs& a) {
    CoefficientField f = generate_channel_field(a.nx, a.ny, a.seed, a.contrast, a.horizontal,
                                                a.vertical, a.inclusions);
    Raster r{f.nx, f.ny, f.kappa};
    write_raster(r, a.out);
    std::cout << "wrote " << a.out << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multilevel multiscale finite element toolkit for div(kappa grad u) = f\n"
                 "on structured 2D grids with optional perforations."};
    app.require_subcommand(1);

    ConfigArgs solve_args, sweep_args, adapt_args, homog_args;
    CLI::App* solve = app.add_subcommand("solve", "one multiscale solve; writes solution and "
                                                  "reference rasters");
    solve_args.attach(solve);
    add_sugar(solve, solve_args);

    CLI::App* sweep = app.add_subcommand("sweep", "error table over basis counts; writes "
                                                  "errors.csv");
    sweep_args.attach(sweep);
    add_sugar(sweep, sweep_args);

    CLI::App* adapt = app.add_subcommand("adapt", "adaptive enrichment comparison; writes "
                                                  "adapt.csv");
    adapt_args.attach(adapt);
    add_sugar(adapt, adapt_args);

    CLI::App* homog = app.add_subcommand("homogenize", "re-iterated effective tensors and a "
                                                       "coarse solve; writes tensors.csv");
    homog_args.attach(homog);
    add_sugar(homog, homog_args);

    CostArgs cost_args;
    CLI::App* cost = app.add_subcommand("cost", "evaluate the operation-count model");
    cost->add_option("-m,--levels", cost_args.levels, "number of levels for --uniform");
    cost->add_option("--uniform", cost_args.uniform,
                     "uniform parameters c,r,lambda,mf (with --levels)");
    cost->add_option("--coarsening", cost_args.coarsening, "C_i list, one per level");
    cost->add_option("--snapshots", cost_args.snapshots, "r_i list, one per region level");
    cost->add_option("--selected", cost_args.selected, "lambda_i list, one per region level");
    cost->add_option("--structure", cost_args.structure, "M_i list, one per region level");
    cost->add_option("--alpha", cost_args.alpha, "local-solver exponent");
    cost->add_option("--beta", cost_args.beta, "eigen-solver exponent");

    GenPerfArgs perf_args;
    CLI::App* perf = app.add_subcommand("gen-perf", "random perforation mask raster");
    perf->add_option("--nx", perf_args.nx, "cells in x")->required();
    perf->add_option("--ny", perf_args.ny, "cells in y")->required();
    perf->add_option("--count", perf_args.count, "number of circles")->required();
    perf->add_option("--r-min", perf_args.r_min, "minimum radius in cells");
    perf->add_option("--r-max", perf_args.r_max, "maximum radius in cells");
    perf->add_option("--seed", perf_args.seed, "RNG seed");
    perf->add_option("--out", perf_args.out, "output raster path")->required();

    GenFieldArgs field_args;
    CLI::App* genf = app.add_subcommand("gen-field", "high-contrast channel coefficient raster");
    genf->add_option("--nx", field_args.nx, "cells in x")->required();
    genf->add_option("--ny", field_args.ny, "cells in y")->required();
    genf->add_option("--seed", field_args.seed, "RNG seed");
    genf->add_option("--contrast", field_args.contrast, "channel value over background 1");
    genf->add_option("--horizontal", field_args.horizontal, "horizontal channel count");
    genf->add_option("--vertical", field_args.vertical, "vertical channel count");
    genf->add_option("--inclusions", field_args.inclusions, "square inclusion count");
    genf->add_option("--out", field_args.out, "output raster path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (solve->parsed()) return cmd_solve(solve_args);
        if (sweep->parsed()) return cmd_sweep(sweep_args);
        if (adapt->parsed()) return cmd_adapt(adapt_args);
        if (homog->parsed()) return cmd_homogenize(homog_args);
        if (cost->parsed()) return cmd_cost(cost_args);
        if (perf->parsed()) return cmd_gen_perf(perf_args);
        if (genf->parsed()) return cmd_gen_field(field_args);
    } catch (const config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
