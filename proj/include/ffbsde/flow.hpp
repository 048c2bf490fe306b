#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <vector>

#include "ffbsde/bsde.hpp"
#include "ffbsde/model.hpp"
#include "ffbsde/paths.hpp"

namespace ffbsde {

/// The BSDE family of one Picard step, keyed by anchor grid node.
using BsdeField = std::map<int, BsdeSlice>;

/// Norm estimate with its Monte Carlo standard error (delta method at the
/// maximizing node).
struct NormEstimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// sup_s E[|D_s|^2]^{1/2} estimated as max over grid nodes of the square
/// root of the path mean of |D|^2.
NormEstimate diag_sup_l2_norm(const DiagonalProcess& diag);
/// Same norm applied to the difference of two diagonals on one grid.
NormEstimate diag_diff_sup_l2_norm(const DiagonalProcess& a, const DiagonalProcess& b);

struct PicardIteration {
    double increment = 0.0;    // estimated ||Y^(i) - Y^(i-1)||_inf
    double noise_floor = 0.0;  // 10x the MC standard error of the increment
    double ratio = std::numeric_limits<double>::quiet_NaN();  // NaN until computable
};

struct PicardReport {
    std::vector<PicardIteration> iterations;
    bool converged = false;
    double tol = 0.0;
    int max_iter = 0;

    int iteration_count() const { return static_cast<int>(iterations.size()); }
    /// Ratios whose previous increment exceeded its noise floor.
    std::vector<double> usable_ratios() const;
};

struct SolverOptions {
    int paths = 4096;
    std::uint64_t seed = 1;
    double tol = 1e-6;
    int max_iter = 50;
    FitOptions fit{1, 0.0};
    int workers = 1;
    bool keep_field = true;  // retain the final BsdeField (memory permitting)
};

/// Converged triple. The stored ensemble is re-simulated from the final
/// diagonal, so simulate_forward(spec, diag, bundle) reproduces it
/// bit-exactly; the field is the family produced by the final Picard step,
/// and diag is its extracted diagonal.
struct EquilibriumSolution {
    PathEnsemble ensemble;
    BsdeField field;  // empty when keep_field was false
    DiagonalProcess diag;
    PicardReport report;
    Partition partition;
};

/// Index k in [1, intervals] of the partition interval containing s:
/// s in [tau_{k-1}, tau_k), last interval closed.
int partition_interval(const Partition& partition, double s);

/// Assembles the diagonal from the family: at grid node j, the Y of the slice
/// whose anchor interval contains t_j (pathwise copy).
DiagonalProcess extract_diagonal(const BsdeField& field, const Partition& partition,
                                 const TimeGrid& grid);

struct PhiStepResult {
    DiagonalProcess diag;
    PathEnsemble ensemble;
    BsdeField field;  // empty unless keep_field
};

/// One application of the contraction map: (i) simulate the forward equation
/// with diag_in, (ii) solve the BSDE at every partition anchor, (iii) extract
/// the diagonal.
PhiStepResult phi_step(const ProblemSpec& spec, const TimeGrid& grid, const BrownianBundle& bundle,
                       const Partition& partition, const DiagonalProcess& diag_in,
                       const FitOptions& fit, int workers = 1, bool keep_field = true);

/// Picard iteration of phi_step from the zero diagonal until the estimated
/// increment norm falls below tol or max_iter is reached. Exhausting max_iter
/// returns converged = false (no exception). The same Brownian bundle is
/// reused across all iterations.
EquilibriumSolution solve_pi_equilibrium(const ProblemSpec& spec, const TimeGrid& grid,
                                         const Partition& partition, const SolverOptions& opts);

/// solve_pi_equilibrium with every grid node an anchor: the numerical
/// surrogate of the continuum equilibrium solution.
EquilibriumSolution solve_equilibrium(const ProblemSpec& spec, const TimeGrid& grid,
                                      const SolverOptions& opts);

/// The classical-FBSDE reduction: backward dimension m*N, driver rows
/// F(tau_{k-1}, s, ...) composed with the interval selector and extended by
/// zero for s below the anchor, terminal rows G(tau_{k-1}, .). Requires
/// depends_on_anchor = false.
struct StackedProblemSpec {
    ProblemSpec spec;
    Partition partition;
    int base_m = 1;
};

StackedProblemSpec stack_coefficients(const ProblemSpec& spec, const Partition& partition);

/// Applies the interval selector to a stacked diagonal, recovering the
/// m-dimensional diagonal of the per-anchor formulation.
DiagonalProcess unstack_diagonal(const StackedProblemSpec& stacked, const DiagonalProcess& diag);

}  // namespace ffbsde
