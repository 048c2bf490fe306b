// Configuration-driven CLI for the FFBSDE solver library: equilibrium solves,
// the convergence / contraction / stability studies, oracle comparisons, the
// LQ control demo and assumption validation.
//
// Exit codes: 0 success, 2 the run completed but its verdict failed
// (convergence criterion, oracle tolerance, validation violation, ...),
// 1 operational error (bad config, unknown subcommand).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ffbsde/catalog.hpp"
#include "ffbsde/config.hpp"
#include "ffbsde/errors.hpp"
#include "ffbsde/experiments.hpp"
#include "ffbsde/io.hpp"
#include "ffbsde/oracle.hpp"

namespace {

using namespace ffbsde;

std::string timestamp_utc() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

std::string out_path(const RunConfig& cfg, const std::string& name) {
    return (std::filesystem::path(cfg.output_dir) / name).string();
}

void finish_summary(const RunConfig& cfg, SummaryEntries& entries) {
    entries.emplace_back("generated_at", timestamp_utc());
    write_summary(out_path(cfg, "summary.txt"), entries);
}

int run_solve(const RunConfig& cfg, bool pi_mode) {
    const ProblemSpec spec = cfg.build_problem();
    const TimeGrid grid = make_uniform_grid(cfg.T, cfg.grid_steps);
    const Partition partition = pi_mode && cfg.partition_intervals > 0
                                    ? make_partition(grid, cfg.partition_intervals)
                                    : full_partition(grid);

    const EquilibriumSolution sol =
        solve_pi_equilibrium(spec, grid, partition, cfg.solver_options());

    write_diagonal_csv(out_path(cfg, "diagonal.csv"), sol.diag, false);
    write_report_csv(out_path(cfg, "picard_report.csv"), sol.report);
    if (cfg.export_full) {
        write_diagonal_csv(out_path(cfg, "diagonal_full.csv"), sol.diag, true);
        write_ensemble_csv(out_path(cfg, "states_full.csv"), sol.ensemble, true);
    }
    if (cfg.dump_paths) write_path_dump(sol.ensemble, out_path(cfg, "paths.bin"));

    SummaryEntries summary;
    summary.emplace_back("subcommand", pi_mode ? "pi-solve" : "solve");
    summary.emplace_back("partition_intervals", std::to_string(partition.intervals()));
    summary.emplace_back("converged", sol.report.converged ? "true" : "false");
    summary.emplace_back("iterations", std::to_string(sol.report.iteration_count()));
    if (!sol.report.iterations.empty())
        summary.emplace_back("final_increment",
                             format_double(sol.report.iterations.back().increment));
    summary.emplace_back("diag_norm", format_double(diag_sup_l2_norm(sol.diag).value));
    summary.emplace_back("verdict", sol.report.converged ? "pass" : "fail");
    finish_summary(cfg, summary);
    return sol.report.converged ? 0 : 2;
}

int run_converge(const RunConfig& cfg) {
    const ProblemSpec spec = cfg.build_problem();
    const TimeGrid grid = make_uniform_grid(cfg.T, cfg.grid_steps);
    if (cfg.partition_list.empty())
        throw std::invalid_argument("converge: partition.list must be set");

    SummaryEntries summary;
    summary.emplace_back("subcommand", "converge");
    try {
        const ConvergenceResult res =
            convergence_study(spec, grid, cfg.partition_list, cfg.solver_options());
        write_convergence_csv(out_path(cfg, "convergence.csv"), res.rows);
        const bool pass =
            res.slope >= cfg.slope_range.at(0) && res.slope <= cfg.slope_range.at(1);
        summary.emplace_back("slope", format_double(res.slope));
        summary.emplace_back("usable_rows", std::to_string(res.usable_rows));
        summary.emplace_back("verdict", pass ? "pass" : "fail");
        finish_summary(cfg, summary);
        return pass ? 0 : 2;
    } catch (const InconclusiveStudyError& e) {
        summary.emplace_back("verdict", "inconclusive: noise floor");
        summary.emplace_back("detail", e.what());
        finish_summary(cfg, summary);
        return 2;
    }
}

int run_contract(const RunConfig& cfg) {
    auto builder = [&cfg](double T) {
        RunConfig local = cfg;
        local.T = T;
        return local.build_problem();
    };
    const std::vector<ContractionRow> rows =
        contraction_study(builder, cfg.horizons, cfg.grid_steps, cfg.solver_options());
    write_contraction_csv(out_path(cfg, "contraction.csv"), rows);

    bool monotone = true, small_ok = true, any_diverged = false;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].diverged) any_diverged = true;
        if (i > 0 && !(rows[i].mean_ratio > rows[i - 1].mean_ratio)) monotone = false;
    }
    if (!rows.empty()) small_ok = rows.front().max_ratio <= cfg.contraction_max_ratio;

    SummaryEntries summary;
    summary.emplace_back("subcommand", "contract");
    summary.emplace_back("rows", std::to_string(rows.size()));
    summary.emplace_back("monotone_increasing", monotone ? "true" : "false");
    if (!rows.empty()) {
        summary.emplace_back("smallest_T_max_ratio", format_double(rows.front().max_ratio));
        summary.emplace_back("smallest_T_mean_ratio", format_double(rows.front().mean_ratio));
    }
    summary.emplace_back("any_diverged", any_diverged ? "true" : "false");
    const bool pass = monotone && small_ok && !any_diverged;
    summary.emplace_back("verdict", pass ? "pass" : "fail");
    finish_summary(cfg, summary);
    return pass ? 0 : 2;
}

int run_stability(const RunConfig& cfg) {
    const ProblemSpec spec = cfg.build_problem();
    const TimeGrid grid = make_uniform_grid(cfg.T, cfg.grid_steps);
    const Partition partition = cfg.partition_intervals > 0
                                    ? make_partition(grid, cfg.partition_intervals)
                                    : full_partition(grid);
    const std::vector<double> direction(static_cast<std::size_t>(cfg.m), 1.0);
    const std::vector<StabilityRow> rows =
        stability_study(spec, grid, partition, cfg.scales, direction, cfg.solver_options());
    write_stability_csv(out_path(cfg, "stability.csv"), rows);

    // Doubling check on consecutive scale pairs (h, 2h).
    bool pass = true;
    double worst_ratio = 0.0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (std::abs(rows[i].scale - 2.0 * rows[i - 1].scale) > 1e-12) continue;
        if (rows[i - 1].distance <= 0.0) {
            pass = false;
            continue;
        }
        const double ratio = rows[i].distance / rows[i - 1].distance;
        worst_ratio = ratio;
        if (ratio < cfg.stability_ratio_range.at(0) || ratio > cfg.stability_ratio_range.at(1))
            pass = false;
    }

    SummaryEntries summary;
    summary.emplace_back("subcommand", "stability");
    summary.emplace_back("rows", std::to_string(rows.size()));
    summary.emplace_back("doubling_ratio", format_double(worst_ratio));
    summary.emplace_back("verdict", pass ? "pass" : "fail");
    finish_summary(cfg, summary);
    return pass ? 0 : 2;
}

int run_oracle_compare(const RunConfig& cfg) {
    const ProblemSpec spec = cfg.build_problem();
    const TimeGrid grid = make_uniform_grid(cfg.T, cfg.grid_steps);
    const EquilibriumSolution sol = solve_equilibrium(spec, grid, cfg.solver_options());

    std::vector<OracleCompareRow> rows;
    const int P = sol.diag.paths;

    if (cfg.coefficient_family == "affine") {
        const AffineOracleSolution oracle =
            solve_affine_oracle(cfg.build_affine(), cfg.oracle_fine_steps);
        for (int j = 0; j < grid.nodes(); ++j) {
            const double t = grid.times[static_cast<std::size_t>(j)];
            double err2 = 0.0, ref2 = 0.0;
            for (int p = 0; p < P; ++p) {
                const double x = sol.ensemble.state(j)(p, 0);
                const double truth = oracle.diagonal(t, x);
                const double dv = sol.diag.at(j)(p, 0) - truth;
                err2 += dv * dv;
                ref2 += truth * truth;
            }
            OracleCompareRow row;
            row.node = j;
            row.time = t;
            row.err_l2 = std::sqrt(err2 / P);
            row.ref_l2 = std::sqrt(ref2 / P);
            row.rel_err = row.err_l2 / std::max(row.ref_l2, 1e-12);
            rows.push_back(row);
        }
    } else {
        // Any family with vanishing diffusion admits the deterministic oracle.
        const DeterministicSolution oracle =
            solve_deterministic_oracle(spec, cfg.oracle_fine_steps);
        for (int j = 0; j < grid.nodes(); ++j) {
            const double t = grid.times[static_cast<std::size_t>(j)];
            double err2 = 0.0, ref2 = 0.0;
            for (int p = 0; p < P; ++p)
                for (int c = 0; c < spec.m; ++c) {
                    const double truth = oracle.diag_component(t, c);
                    const double dv = sol.diag.at(j)(p, c) - truth;
                    err2 += dv * dv;
                    ref2 += truth * truth;
                }
            OracleCompareRow row;
            row.node = j;
            row.time = t;
            row.err_l2 = std::sqrt(err2 / (P * spec.m));
            row.ref_l2 = std::sqrt(ref2 / (P * spec.m));
            row.rel_err = row.err_l2 / std::max(row.ref_l2, 1e-12);
            rows.push_back(row);
        }
    }
    write_oracle_compare_csv(out_path(cfg, "oracle_compare.csv"), rows);

    double max_rel = 0.0;
    for (const auto& r : rows) max_rel = std::max(max_rel, r.rel_err);
    const bool pass = max_rel <= cfg.oracle_rel_tol;

    SummaryEntries summary;
    summary.emplace_back("subcommand", "oracle-compare");
    summary.emplace_back("max_rel_err", format_double(max_rel));
    summary.emplace_back("tolerance", format_double(cfg.oracle_rel_tol));
    summary.emplace_back("converged", sol.report.converged ? "true" : "false");
    summary.emplace_back("verdict", pass ? "pass" : "fail");
    finish_summary(cfg, summary);
    return pass ? 0 : 2;
}

int run_control_demo(const RunConfig& cfg) {
    const LqProblem lq = build_lq_control_problem(cfg.build_lq());
    const TimeGrid grid = make_uniform_grid(cfg.T, cfg.grid_steps);
    const EquilibriumSolution sol = solve_equilibrium(lq.spec, grid, cfg.solver_options());
    const ControlExtractor control = equilibrium_control(lq, sol);

    std::FILE* fp = std::fopen(out_path(cfg, "spike.csv").c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open spike.csv");
    std::fprintf(fp, "v,eps,increment,stderr,pass\n");
    bool all_pass = true;
    double min_normalized = 0.0;
    for (double v : cfg.spike_values) {
        const std::vector<SpikeIncrement> incs = spike_variation_check(
            lq, sol, control, cfg.spike_time, {v}, cfg.eps_list, cfg.paths, cfg.seed,
            FitOptions{cfg.basis_degree, cfg.ridge});
        for (const auto& inc : incs) {
            const bool pass = inc.increment >= -3.0 * inc.std_error;
            all_pass = all_pass && pass;
            if (inc.std_error > 0.0)
                min_normalized = std::min(min_normalized, inc.increment / inc.std_error);
            std::fprintf(fp, "%s,%s,%s,%s,%d\n", format_double(v).c_str(),
                         format_double(inc.eps).c_str(), format_double(inc.increment).c_str(),
                         format_double(inc.std_error).c_str(), pass ? 1 : 0);
        }
    }
    std::fclose(fp);

    SummaryEntries summary;
    summary.emplace_back("subcommand", "control-demo");
    summary.emplace_back("converged", sol.report.converged ? "true" : "false");
    summary.emplace_back("min_increment_over_se", format_double(min_normalized));
    summary.emplace_back("verdict", all_pass ? "pass" : "fail");
    finish_summary(cfg, summary);
    return all_pass ? 0 : 2;
}

int run_validate(const RunConfig& cfg) {
    const ProblemSpec spec = cfg.build_problem();
    const ValidationReport report = validate_problem(spec, cfg.probe_count, cfg.seed);

    SummaryEntries summary;
    summary.emplace_back("subcommand", "validate");
    summary.emplace_back("R_estimate", format_double(report.R_estimate));
    for (const auto& probe : report.lipschitz)
        summary.emplace_back("lipschitz_ratio_" + probe.coefficient,
                             format_double(probe.max_ratio));
    summary.emplace_back("modulus_ratio", format_double(report.max_modulus_ratio));
    summary.emplace_back("violations", std::to_string(report.violations.size()));
    for (std::size_t i = 0; i < report.violations.size(); ++i)
        summary.emplace_back("violation_" + std::to_string(i), report.violations[i]);
    summary.emplace_back("verdict", report.ok() ? "pass" : "fail");
    finish_summary(cfg, summary);
    return report.ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FFBSDE equilibrium solver and verification studies"};
    app.require_subcommand(1);
    app.allow_extras(false);

    std::string config_path;
    std::string output_override;

    const std::vector<std::string> names = {"solve",     "pi-solve",       "converge",
                                            "contract",  "stability",      "oracle-compare",
                                            "control-demo", "validate"};
    for (const auto& name : names) {
        CLI::App* sub = app.add_subcommand(name);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--out", output_override, "override the output directory");
        sub->allow_extras(true);  // dotted overrides --section.key=value
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    }

    CLI::App* sub = app.get_subcommands().front();
    try {
        ffbsde::Json doc;
        {
            std::ifstream in(config_path);
            if (!in) {
                std::cerr << "config error at <file>: cannot open " << config_path << "\n";
                return 1;
            }
            try {
                doc = ffbsde::Json::parse(in);
            } catch (const ffbsde::Json::exception& e) {
                std::cerr << "config error at <file> " << config_path << ": " << e.what() << "\n";
                return 1;
            }
        }
        for (const std::string& extra : sub->remaining()) ffbsde::apply_override(doc, extra);
        ffbsde::RunConfig cfg = ffbsde::RunConfig::parse(doc);
        if (!output_override.empty()) cfg.output_dir = output_override;
        std::filesystem::create_directories(cfg.output_dir);

        const std::string& name = sub->get_name();
        if (name == "solve") return run_solve(cfg, false);
        if (name == "pi-solve") return run_solve(cfg, true);
        if (name == "converge") return run_converge(cfg);
        if (name == "contract") return run_contract(cfg);
        if (name == "stability") return run_stability(cfg);
        if (name == "oracle-compare") return run_oracle_compare(cfg);
        if (name == "control-demo") return run_control_demo(cfg);
        if (name == "validate") return run_validate(cfg);
        std::cerr << "unknown subcommand " << name << "\n";
        return 1;
    } catch (const std::invalid_argument& e) {
        std::cerr << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
