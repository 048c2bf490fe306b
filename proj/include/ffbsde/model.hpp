#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ffbsde {

// ---------------------------------------------------------------------------
// Time discretization
// ---------------------------------------------------------------------------

/// Strictly increasing time nodes t_0 = 0 < ... < t_J = T.
struct TimeGrid {
    std::vector<double> times;

    int steps() const { return static_cast<int>(times.size()) - 1; }
    int nodes() const { return static_cast<int>(times.size()); }
    double horizon() const { return times.back(); }
    double dt(int step) const { return times[step + 1] - times[step]; }
};

/// J+1 equally spaced nodes on [0, T].
TimeGrid make_uniform_grid(double T, int steps);

/// Partition of [0, T] whose anchors are grid nodes: 0 = tau_0 < ... < tau_N = T.
/// Anchors are selected from the grid, so containment is bit-exact.
struct Partition {
    std::vector<int> anchor_nodes;     // indices into TimeGrid::times
    std::vector<double> anchor_times;  // copies of the grid values
    double mesh = 0.0;                 // max_k (tau_k - tau_{k-1})

    int intervals() const { return static_cast<int>(anchor_nodes.size()) - 1; }
};

/// N intervals with anchors on grid nodes; requires N to divide the step
/// count so that anchors land exactly on nodes.
Partition make_partition(const TimeGrid& grid, int intervals);

/// The partition whose anchors are all grid nodes.
Partition full_partition(const TimeGrid& grid);

// ---------------------------------------------------------------------------
// Problem definition
// ---------------------------------------------------------------------------

/// Drift: (s, x[n], eta[m]) -> out[n].
using DriftFn = std::function<void(double s, const double* x, const double* eta, double* out)>;
/// Diffusion: (s, x[n], eta[m]) -> out[n*d], row-major.
using DiffusionFn = std::function<void(double s, const double* x, const double* eta, double* out)>;
/// Driver: (t, s, xi[n], xbar[n], x[n], eta[m], y[m], z[m*d]) -> out[m].
/// xi carries the anchor state, xbar the conditional mean of the current state
/// seen from the anchor; both are zero-filled when depends_on_anchor is false.
using DriverFn = std::function<void(double t, double s, const double* xi, const double* xbar,
                                    const double* x, const double* eta, const double* y,
                                    const double* z, double* out)>;
/// Terminal map: (t, xi[n], xbar[n], x[n]) -> out[m].
using TerminalFn = std::function<void(double t, const double* xi, const double* xbar,
                                      const double* x, double* out)>;
/// Time modulus rho: increasing, rho(0) = 0.
using RhoFn = std::function<double(double)>;

/// Dimensions, horizon, initial state, the four coefficient callables and the
/// declared regularity metadata. Immutable after construction; shareable
/// across threads.
struct ProblemSpec {
    int n = 1;  // state dimension
    int m = 1;  // backward dimension
    int d = 1;  // Brownian dimension
    double T = 1.0;
    std::vector<double> x0;

    DriftFn B;
    DiffusionFn Sigma;
    DriverFn F;
    TerminalFn G;

    double lipschitz_L = 1.0;
    RhoFn rho;

    /// Whether F, G actually read the (xi, xbar) arguments.
    bool depends_on_anchor = false;
    /// Coefficients are deterministic functions of their listed arguments.
    /// Must be true: the regression scheme conditions on the state only.
    bool markovian = true;
};

/// Throws std::invalid_argument on violated structural invariants
/// (dimensions, horizon, x0 length, markovian flag, missing callables).
void check_spec(const ProblemSpec& spec);

// ---------------------------------------------------------------------------
// Assumption validation
// ---------------------------------------------------------------------------

struct LipschitzProbe {
    std::string coefficient;  // "B", "Sigma", "F", "G"
    double max_ratio = 0.0;
    bool violated = false;
};

/// Spot-check report for the declared assumption metadata. Flags violations,
/// never aborts; only non-finite coefficient output throws.
struct ValidationReport {
    double R_estimate = 0.0;           // size constant built from B0, Sigma0, F0, G0
    std::vector<LipschitzProbe> lipschitz;
    double max_modulus_ratio = 0.0;    // vs rho(|t-t'|)*(1+|args|), <= 1 when honest
    bool modulus_violated = false;
    bool rho_zero_at_origin = true;
    bool rho_nondecreasing = true;
    std::vector<std::string> violations;  // human-readable summaries

    bool ok() const { return violations.empty(); }
};

/// Estimates R by quadrature over probe_count time points, probes Lipschitz
/// ratios of all four coefficients on seeded random argument pairs against
/// lipschitz_L, and probes the time modulus against rho.
ValidationReport validate_problem(const ProblemSpec& spec, int probe_count, std::uint64_t seed);

}  // namespace ffbsde
