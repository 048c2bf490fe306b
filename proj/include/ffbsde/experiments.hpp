#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ffbsde/flow.hpp"

namespace ffbsde {

// ---------------------------------------------------------------------------
// Partition-convergence study
// ---------------------------------------------------------------------------

struct ConvergenceRow {
    double mesh = 0.0;
    int N = 0;
    double err_X = 0.0;     // E[sup_s |X^Pi - X^ref|^2]^{1/2}
    double err_diag = 0.0;  // sup_s E[|diag^Pi - diag^ref|^2]^{1/2}
    double noise_floor = 0.0;
    int paths = 0;
    std::uint64_t seed = 0;
    bool usable = false;  // err_diag above the noise floor
};

struct ConvergenceResult {
    std::vector<ConvergenceRow> rows;
    double slope = 0.0;  // OLS slope of log err_diag vs log mesh over usable rows
    int usable_rows = 0;
};

/// Solves each partition size against the finest computed solve (the full
/// grid) with one shared Brownian bundle, so differences isolate the
/// partition. Throws InconclusiveStudyError when fewer than 3 rows exceed
/// the noise floor.
ConvergenceResult convergence_study(const ProblemSpec& spec, const TimeGrid& grid,
                                    const std::vector<int>& partition_sizes,
                                    const SolverOptions& opts);

// ---------------------------------------------------------------------------
// Picard-contraction study
// ---------------------------------------------------------------------------

struct ContractionRow {
    double T = 0.0;
    double mean_ratio = 0.0;  // mean of above-noise-floor increment ratios
    double max_ratio = 0.0;
    int usable_ratios = 0;
    int iterations = 0;
    bool converged = false;
    bool diverged = false;  // simulation blow-up at this horizon
};

/// Runs the full-grid solve per horizon and summarizes the Picard report
/// ratios. A blow-up marks the row diverged instead of raising.
std::vector<ContractionRow> contraction_study(
    const std::function<ProblemSpec(double)>& spec_for_horizon, const std::vector<double>& horizons,
    int grid_steps, const SolverOptions& opts);

// ---------------------------------------------------------------------------
// Terminal-perturbation stability study
// ---------------------------------------------------------------------------

struct StabilityRow {
    double scale = 0.0;
    double distance = 0.0;     // square root of the stability-estimate left side
    double bound_ratio = 0.0;  // distance / scale (0 when scale is 0)
};

/// Perturbs the terminal map by scale * direction, solves both problems with
/// common noise, and measures
///   dist^2 = E[sup_s |dX|^2]
///          + sup_k E[ sup_{s>=tau_k} |dY^k|^2 + sum |dZ^k|^2 dt ]
/// via a paired per-anchor re-sweep of both converged solutions.
std::vector<StabilityRow> stability_study(const ProblemSpec& spec, const TimeGrid& grid,
                                          const Partition& partition,
                                          const std::vector<double>& scales,
                                          const std::vector<double>& direction,
                                          const SolverOptions& opts);

/// OLS slope of log(y) vs log(x); pairs with non-positive entries are
/// rejected.
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace ffbsde
