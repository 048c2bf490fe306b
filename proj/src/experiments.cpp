#include "ffbsde/experiments.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ffbsde/errors.hpp"

namespace ffbsde {

double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("loglog_slope: need at least two aligned points");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double count = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0) || !(y[i] > 0.0))
            throw std::invalid_argument("loglog_slope: entries must be positive");
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    const double denom = sxx - sx * sx / count;
    if (denom <= 0.0) throw std::invalid_argument("loglog_slope: degenerate abscissae");
    return (sxy - sx * sy / count) / denom;
}

namespace {

double err_sup_pathwise(const PathEnsemble& a, const PathEnsemble& b) {
    // E[sup_s |X_a - X_b|^2]^{1/2}: pathwise sup over nodes, then path mean.
    double acc = 0.0;
    for (int p = 0; p < a.paths; ++p) {
        double sup = 0.0;
        for (int j = 0; j < a.grid.nodes(); ++j) {
            double sq = 0.0;
            for (int c = 0; c < a.n; ++c) {
                const std::size_t idx = (static_cast<std::size_t>(j) * a.paths + p) * a.n + c;
                const double dv = a.states[idx] - b.states[idx];
                sq += dv * dv;
            }
            sup = std::max(sup, sq);
        }
        acc += sup;
    }
    return std::sqrt(acc / a.paths);
}

}  // namespace

ConvergenceResult convergence_study(const ProblemSpec& spec, const TimeGrid& grid,
                                    const std::vector<int>& partition_sizes,
                                    const SolverOptions& opts) {
    if (partition_sizes.empty())
        throw std::invalid_argument("convergence_study: empty partition list");
    for (std::size_t i = 1; i < partition_sizes.size(); ++i)
        if (partition_sizes[i] <= partition_sizes[i - 1])
            throw std::invalid_argument("convergence_study: partition sizes must be increasing");

    SolverOptions solver = opts;
    solver.keep_field = false;  // studies need only diagonals and states

    // Reference: the finest computed partition, i.e. every grid node an
    // anchor. All solves share the bundle because it is a pure function of
    // (grid, paths, d, seed).
    const EquilibriumSolution reference = solve_equilibrium(spec, grid, solver);

    ConvergenceResult result;
    for (int N : partition_sizes) {
        const Partition part = make_partition(grid, N);
        const EquilibriumSolution sol = solve_pi_equilibrium(spec, grid, part, solver);

        ConvergenceRow row;
        row.N = N;
        row.mesh = part.mesh;
        row.paths = opts.paths;
        row.seed = opts.seed;
        const NormEstimate diag_err = diag_diff_sup_l2_norm(sol.diag, reference.diag);
        row.err_diag = diag_err.value;
        row.noise_floor = 10.0 * diag_err.std_error;
        row.err_X = err_sup_pathwise(sol.ensemble, reference.ensemble);
        row.usable = row.err_diag > row.noise_floor && row.err_diag > 0.0;
        result.rows.push_back(row);
    }

    std::vector<double> xs, ys;
    for (const auto& row : result.rows) {
        if (!row.usable) continue;
        xs.push_back(row.mesh);
        ys.push_back(row.err_diag);
    }
    result.usable_rows = static_cast<int>(xs.size());
    if (result.usable_rows < 3)
        throw InconclusiveStudyError(
            "convergence_study: inconclusive: noise floor (fewer than 3 usable rows; increase "
            "paths or coarsen partitions)");
    result.slope = loglog_slope(xs, ys);
    return result;
}

std::vector<ContractionRow> contraction_study(
    const std::function<ProblemSpec(double)>& spec_for_horizon, const std::vector<double>& horizons,
    int grid_steps, const SolverOptions& opts) {
    for (std::size_t i = 1; i < horizons.size(); ++i)
        if (!(horizons[i] > horizons[i - 1]))
            throw std::invalid_argument("contraction_study: horizons must be increasing");

    SolverOptions solver = opts;
    solver.keep_field = false;

    std::vector<ContractionRow> rows;
    for (double T : horizons) {
        ContractionRow row;
        row.T = T;
        const TimeGrid grid = make_uniform_grid(T, grid_steps);
        try {
            const EquilibriumSolution sol = solve_equilibrium(spec_for_horizon(T), grid, solver);
            row.iterations = sol.report.iteration_count();
            row.converged = sol.report.converged;
            const std::vector<double> ratios = sol.report.usable_ratios();
            row.usable_ratios = static_cast<int>(ratios.size());
            double acc = 0.0;
            for (double r : ratios) {
                acc += r;
                row.max_ratio = std::max(row.max_ratio, r);
            }
            row.mean_ratio = ratios.empty() ? 0.0 : acc / static_cast<double>(ratios.size());
        } catch (const BlowUpError&) {
            row.diverged = true;
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<StabilityRow> stability_study(const ProblemSpec& spec, const TimeGrid& grid,
                                          const Partition& partition,
                                          const std::vector<double>& scales,
                                          const std::vector<double>& direction,
                                          const SolverOptions& opts) {
    if (static_cast<int>(direction.size()) != spec.m)
        throw std::invalid_argument("stability_study: direction must have length m");

    SolverOptions solver = opts;
    solver.keep_field = false;

    auto perturbed = [&](double scale) {
        ProblemSpec pert = spec;
        const TerminalFn base_G = spec.G;
        const std::vector<double> dir = direction;
        const int m = spec.m;
        pert.G = [base_G, dir, scale, m](double t, const double* xi, const double* xbar,
                                         const double* x, double* o) {
            base_G(t, xi, xbar, x, o);
            for (int c = 0; c < m; ++c) o[c] += scale * dir[static_cast<std::size_t>(c)];
        };
        return pert;
    };

    const EquilibriumSolution base = solve_pi_equilibrium(spec, grid, partition, solver);
    const RegressionCache base_cache(base.ensemble, solver.fit, solver.workers);

    std::vector<StabilityRow> rows;
    for (double scale : scales) {
        StabilityRow row;
        row.scale = scale;

        const ProblemSpec pert_spec = perturbed(scale);
        const EquilibriumSolution pert = solve_pi_equilibrium(pert_spec, grid, partition, solver);
        const RegressionCache pert_cache(pert.ensemble, solver.fit, solver.workers);

        const double x_part = err_sup_pathwise(base.ensemble, pert.ensemble);

        // Paired per-anchor re-sweep: one extra application of the map on each
        // converged solution, accumulated streaming so no field is stored.
        const int P = base.ensemble.paths;
        const int m = spec.m, d = spec.d;
        double sup_anchor = 0.0;
        std::vector<double> sup_y(static_cast<std::size_t>(P));
        std::vector<double> int_z(static_cast<std::size_t>(P));
        for (int k = 0; k < partition.intervals(); ++k) {
            const int anchor = partition.anchor_nodes[static_cast<std::size_t>(k)];
            const BsdeSlice a = solve_bsde(spec, base.ensemble, base.diag, anchor, base_cache);
            const BsdeSlice b = solve_bsde(pert_spec, pert.ensemble, pert.diag, anchor, pert_cache);
            std::fill(sup_y.begin(), sup_y.end(), 0.0);
            std::fill(int_z.begin(), int_z.end(), 0.0);
            for (int node = anchor; node <= grid.steps(); ++node) {
                const ConstMatMap ya = a.y_at(node), yb = b.y_at(node);
                const ConstMatMap za = a.z_at(node), zb = b.z_at(node);
                const double dt = node < grid.steps() ? grid.dt(node) : 0.0;
                for (int p = 0; p < P; ++p) {
                    double sq = 0.0;
                    for (int c = 0; c < m; ++c) {
                        const double dv = ya(p, c) - yb(p, c);
                        sq += dv * dv;
                    }
                    sup_y[static_cast<std::size_t>(p)] =
                        std::max(sup_y[static_cast<std::size_t>(p)], sq);
                    if (node < grid.steps()) {
                        double zq = 0.0;
                        for (int c = 0; c < m * d; ++c) {
                            const double dv = za(p, c) - zb(p, c);
                            zq += dv * dv;
                        }
                        int_z[static_cast<std::size_t>(p)] += zq * dt;
                    }
                }
            }
            double mean = 0.0;
            for (int p = 0; p < P; ++p)
                mean += sup_y[static_cast<std::size_t>(p)] + int_z[static_cast<std::size_t>(p)];
            sup_anchor = std::max(sup_anchor, mean / P);
        }

        row.distance = std::sqrt(x_part * x_part + sup_anchor);
        row.bound_ratio = scale > 0.0 ? row.distance / scale : 0.0;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace ffbsde
