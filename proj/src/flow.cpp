#include "ffbsde/flow.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "ffbsde/errors.hpp"
#include "ffbsde/parallel.hpp"

namespace ffbsde {

namespace {

NormEstimate sup_l2_of(const TimeGrid& grid, int paths, int m,
                       const std::function<double(int node, int path, int comp)>& value) {
    NormEstimate est;
    int best_node = 0;
    double best_mean2 = -1.0;
    for (int j = 0; j < grid.nodes(); ++j) {
        double acc = 0.0;
        for (int p = 0; p < paths; ++p) {
            double sq = 0.0;
            for (int c = 0; c < m; ++c) {
                const double v = value(j, p, c);
                sq += v * v;
            }
            acc += sq;
        }
        const double mean2 = acc / paths;
        if (mean2 > best_mean2) {
            best_mean2 = mean2;
            best_node = j;
        }
    }
    est.value = std::sqrt(std::max(best_mean2, 0.0));
    // Delta-method standard error of sqrt(mean of squares) at the arg-max node.
    if (paths > 1 && est.value > 0.0) {
        double acc = 0.0, acc2 = 0.0;
        for (int p = 0; p < paths; ++p) {
            double sq = 0.0;
            for (int c = 0; c < m; ++c) {
                const double v = value(best_node, p, c);
                sq += v * v;
            }
            acc += sq;
            acc2 += sq * sq;
        }
        const double mean2 = acc / paths;
        const double var2 = std::max(acc2 / paths - mean2 * mean2, 0.0);
        const double se_mean2 = std::sqrt(var2 / paths);
        est.std_error = se_mean2 / (2.0 * est.value);
    }
    return est;
}

}  // namespace

NormEstimate diag_sup_l2_norm(const DiagonalProcess& diag) {
    return sup_l2_of(diag.grid, diag.paths, diag.m, [&](int j, int p, int c) {
        return diag.values[(static_cast<std::size_t>(j) * diag.paths + p) * diag.m + c];
    });
}

NormEstimate diag_diff_sup_l2_norm(const DiagonalProcess& a, const DiagonalProcess& b) {
    if (a.grid.times != b.grid.times || a.paths != b.paths || a.m != b.m)
        throw std::invalid_argument("diag_diff_sup_l2_norm: diagonals not comparable");
    return sup_l2_of(a.grid, a.paths, a.m, [&](int j, int p, int c) {
        const std::size_t idx = (static_cast<std::size_t>(j) * a.paths + p) * a.m + c;
        return a.values[idx] - b.values[idx];
    });
}

std::vector<double> PicardReport::usable_ratios() const {
    std::vector<double> out;
    for (const auto& it : iterations)
        if (std::isfinite(it.ratio)) out.push_back(it.ratio);
    return out;
}

int partition_interval(const Partition& partition, double s) {
    const int N = partition.intervals();
    if (s >= partition.anchor_times[static_cast<std::size_t>(N - 1)]) return N;  // last interval closed
    int k = 1;
    while (k < N && s >= partition.anchor_times[static_cast<std::size_t>(k)]) ++k;
    return k;
}

DiagonalProcess extract_diagonal(const BsdeField& field, const Partition& partition,
                                 const TimeGrid& grid) {
    const int N = partition.intervals();
    for (int k = 0; k < N; ++k) {
        if (field.find(partition.anchor_nodes[static_cast<std::size_t>(k)]) == field.end()) {
            std::ostringstream msg;
            msg << "extract_diagonal: missing slice for anchor node "
                << partition.anchor_nodes[static_cast<std::size_t>(k)];
            throw std::invalid_argument(msg.str());
        }
    }
    const BsdeSlice& first = field.at(partition.anchor_nodes[0]);
    DiagonalProcess diag = DiagonalProcess::zeros(grid, first.paths, first.m);
    for (int j = 0; j < grid.nodes(); ++j) {
        const int k = partition_interval(partition, grid.times[static_cast<std::size_t>(j)]);
        const BsdeSlice& slice = field.at(partition.anchor_nodes[static_cast<std::size_t>(k - 1)]);
        diag.at(j) = slice.y_at(j);
    }
    return diag;
}

PhiStepResult phi_step(const ProblemSpec& spec, const TimeGrid& grid, const BrownianBundle& bundle,
                       const Partition& partition, const DiagonalProcess& diag_in,
                       const FitOptions& fit, int workers, bool keep_field) {
    if (diag_in.grid.times != grid.times)
        throw std::invalid_argument("phi_step: diagonal not on the given grid");

    PhiStepResult result;
    result.ensemble = simulate_forward(spec, diag_in, bundle, workers);
    RegressionCache cache(result.ensemble, fit, workers);

    const int N = partition.intervals();
    result.diag = DiagonalProcess::zeros(grid, diag_in.paths, spec.m);

    if (keep_field) {
        std::vector<BsdeSlice> slices(static_cast<std::size_t>(N));
        parallel_for(0, N, workers, [&](int k) {
            slices[static_cast<std::size_t>(k)] =
                solve_bsde(spec, result.ensemble, diag_in,
                           partition.anchor_nodes[static_cast<std::size_t>(k)], cache);
        });
        for (int k = 0; k < N; ++k)
            result.field.emplace(partition.anchor_nodes[static_cast<std::size_t>(k)],
                                 std::move(slices[static_cast<std::size_t>(k)]));
        result.diag = extract_diagonal(result.field, partition, grid);
    } else {
        // Stream each sweep directly into the diagonal: slice k owns the
        // grid nodes of [tau_k, tau_{k+1}) (last interval closed), so anchor
        // tasks write disjoint node ranges.
        parallel_for(0, N, workers, [&](int k) {
            const int lo = partition.anchor_nodes[static_cast<std::size_t>(k)];
            const int hi = (k + 1 == N) ? grid.nodes() - 1
                                        : partition.anchor_nodes[static_cast<std::size_t>(k) + 1] - 1;
            sweep_bsde(spec, result.ensemble, diag_in, lo, cache,
                       [&](int node, const RowMat& y, const RowMat&) {
                           if (node >= lo && node <= hi) result.diag.at(node) = y;
                       });
        });
    }
    return result;
}

namespace {

EquilibriumSolution picard_solve(const ProblemSpec& spec, const TimeGrid& grid,
                                 const Partition& partition, const SolverOptions& opts) {
    check_spec(spec);
    if (!(opts.tol > 0.0)) throw std::invalid_argument("solve: tol must be positive");
    if (opts.max_iter < 1) throw std::invalid_argument("solve: max_iter must be >= 1");

    const BrownianBundle bundle = sample_brownian(grid, opts.paths, spec.d, opts.seed);

    EquilibriumSolution sol;
    sol.partition = partition;
    sol.report.tol = opts.tol;
    sol.report.max_iter = opts.max_iter;

    DiagonalProcess diag = DiagonalProcess::zeros(grid, opts.paths, spec.m);
    double prev_increment = std::numeric_limits<double>::quiet_NaN();
    double prev_floor = std::numeric_limits<double>::quiet_NaN();

    for (int iter = 0; iter < opts.max_iter; ++iter) {
        PhiStepResult step =
            phi_step(spec, grid, bundle, partition, diag, opts.fit, opts.workers, opts.keep_field);
        const NormEstimate incr = diag_diff_sup_l2_norm(step.diag, diag);

        PicardIteration record;
        record.increment = incr.value;
        record.noise_floor = 10.0 * incr.std_error;
        if (std::isfinite(prev_increment) && prev_increment > prev_floor && prev_increment > 0.0)
            record.ratio = incr.value / prev_increment;
        sol.report.iterations.push_back(record);

        diag = std::move(step.diag);
        sol.field = std::move(step.field);
        prev_increment = incr.value;
        prev_floor = record.noise_floor;

        if (incr.value <= opts.tol) {
            sol.report.converged = true;
            break;
        }
    }

    // Close the loop: the stored ensemble is the forward solution driven by
    // the final diagonal, so re-simulation reproduces it bit-exactly.
    sol.ensemble = simulate_forward(spec, diag, bundle, opts.workers);
    sol.diag = std::move(diag);
    return sol;
}

}  // namespace

EquilibriumSolution solve_pi_equilibrium(const ProblemSpec& spec, const TimeGrid& grid,
                                         const Partition& partition, const SolverOptions& opts) {
    return picard_solve(spec, grid, partition, opts);
}

EquilibriumSolution solve_equilibrium(const ProblemSpec& spec, const TimeGrid& grid,
                                      const SolverOptions& opts) {
    return picard_solve(spec, grid, full_partition(grid), opts);
}

StackedProblemSpec stack_coefficients(const ProblemSpec& spec, const Partition& partition) {
    check_spec(spec);
    if (spec.depends_on_anchor)
        throw UnsupportedReductionError(
            "stack_coefficients: driver or terminal map reads the anchor arguments");

    const int N = partition.intervals();
    const int n = spec.n, m = spec.m, d = spec.d;
    const std::vector<double> anchors = partition.anchor_times;
    const std::vector<double> zeros_n(static_cast<std::size_t>(n), 0.0);

    // Interval selector phi^Pi: index of the block owning time s.
    auto select = [anchors, N](double s) {
        if (s >= anchors[static_cast<std::size_t>(N - 1)]) return N - 1;
        int k = 0;
        while (k + 1 < N && s >= anchors[static_cast<std::size_t>(k + 1)]) ++k;
        return k;
    };

    StackedProblemSpec out;
    out.partition = partition;
    out.base_m = m;

    ProblemSpec st;
    st.n = n;
    st.m = m * N;
    st.d = d;
    st.T = spec.T;
    st.x0 = spec.x0;
    st.depends_on_anchor = false;
    st.markovian = true;
    st.lipschitz_L = spec.lipschitz_L;
    st.rho = [](double) { return 0.0; };  // rows carry frozen anchor times

    const DriftFn B = spec.B;
    const DiffusionFn Sigma = spec.Sigma;
    const DriverFn F = spec.F;
    const TerminalFn G = spec.G;

    st.B = [B, select, m](double s, const double* x, const double* eta, double* o) {
        B(s, x, eta + static_cast<std::size_t>(select(s)) * m, o);
    };
    st.Sigma = [Sigma, select, m](double s, const double* x, const double* eta, double* o) {
        Sigma(s, x, eta + static_cast<std::size_t>(select(s)) * m, o);
    };
    st.F = [F, select, anchors, zeros_n, N, m, d](double, double s, const double*, const double*,
                                                  const double* x, const double* eta,
                                                  const double* y, const double* z, double* o) {
        const double* eta_sel = eta + static_cast<std::size_t>(select(s)) * m;
        for (int k = 0; k < N; ++k) {
            double* row = o + static_cast<std::size_t>(k) * m;
            if (s < anchors[static_cast<std::size_t>(k)]) {
                for (int c = 0; c < m; ++c) row[c] = 0.0;  // extension by zero below the anchor
            } else {
                F(anchors[static_cast<std::size_t>(k)], s, zeros_n.data(), zeros_n.data(), x,
                  eta_sel, y + static_cast<std::size_t>(k) * m,
                  z + static_cast<std::size_t>(k) * m * d, row);
            }
        }
    };
    st.G = [G, anchors, zeros_n, N, m](double, const double*, const double*, const double* x,
                                       double* o) {
        for (int k = 0; k < N; ++k)
            G(anchors[static_cast<std::size_t>(k)], zeros_n.data(), zeros_n.data(), x,
              o + static_cast<std::size_t>(k) * m);
    };

    out.spec = std::move(st);
    return out;
}

DiagonalProcess unstack_diagonal(const StackedProblemSpec& stacked, const DiagonalProcess& diag) {
    const int N = stacked.partition.intervals();
    const int m = stacked.base_m;
    if (diag.m != m * N)
        throw std::invalid_argument("unstack_diagonal: diagonal dimension does not match stacking");
    DiagonalProcess out = DiagonalProcess::zeros(diag.grid, diag.paths, m);
    for (int j = 0; j < diag.grid.nodes(); ++j) {
        const int k = partition_interval(stacked.partition, diag.grid.times[static_cast<std::size_t>(j)]);
        out.at(j) = diag.at(j).middleCols((k - 1) * m, m);
    }
    return out;
}

}  // namespace ffbsde
