#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "ffbsde/flow.hpp"
#include "ffbsde/model.hpp"

namespace ffbsde {

// ---------------------------------------------------------------------------
// Affine family (n = m = d = 1) and its ODE oracle
// ---------------------------------------------------------------------------

/// Scalar affine instance:
///   B(s, x, eta)                  = b x + b_eta eta
///   Sigma                         = sigma                    (constant)
///   F(t, s, xi, xbar, x, eta, y, z) = f1 x + f2 eta + f3 y + f4(t)
///   G(t, xi, xbar, x)             = g1 x + g2 xi + g3 xbar + g4(t)
struct AffineProblemSpec {
    double b = 0.0;
    double b_eta = 0.0;
    double sigma = 0.0;
    double f1 = 0.0, f2 = 0.0, f3 = 0.0;
    std::function<double(double)> f4;  // driver intercept, t -> value
    double g1 = 0.0, g2 = 0.0, g3 = 0.0;
    std::function<double(double)> g4;  // terminal intercept, t -> value
    double f4_lip = 0.0, g4_lip = 0.0;  // Lipschitz constants of the intercepts
    double T = 1.0;
    double x0 = 0.0;

    /// ProblemSpec with L = max coefficient magnitude and rho(u) linear with
    /// slope f4_lip + g4_lip.
    ProblemSpec to_problem_spec() const;
};

/// Solution fields of the ansatz
///   Y^t_s = A(t,s) X_s + P(t,s) X_t + Q(t,s) E_t[X_s] + h(t,s),
///   Z^t_s = A(t,s) sigma,
/// sampled on a fine uniform grid (row = anchor index, column = node index,
/// meaningful for node >= anchor), plus the derived diagonal coefficients
///   a_diag(s) = A(s,s) + P(s,s) + Q(s,s),   h_diag(s) = h(s,s).
struct AffineOracleSolution {
    int fine_steps = 0;
    double T = 0.0;
    double sigma = 0.0;
    std::vector<double> times;  // fine_steps + 1 nodes
    std::vector<double> A, P, Q, h;          // (W+1) x (W+1), row-major
    std::vector<double> a_diag, h_diag;      // W+1 values

    double field(const std::vector<double>& f, int anchor, int node) const {
        return f[static_cast<std::size_t>(anchor) * times.size() + static_cast<std::size_t>(node)];
    }
    /// Diagonal value a_diag(s) x + h_diag(s) with cubic interpolation in s.
    double diagonal(double s, double x) const;
    double a_at(double s) const;
    double h_at(double s) const;
};

/// Diagonal coefficient pair (a, h) sampled on the fine grid; the image of
/// one closed-form application of the contraction map.
struct AffineDiagonal {
    std::vector<double> a, h;
};

/// One application of the map with a frozen input diagonal
/// eta(s) = a_in(s) x + h_in(s): integrates the matched-coefficient backward
/// ODE system per anchor with a classical 4th-order scheme and returns the
/// output diagonal coefficients.
AffineDiagonal oracle_phi_step(const AffineProblemSpec& aspec, int fine_steps,
                               const std::function<double(double)>& a_in,
                               const std::function<double(double)>& h_in);

/// Outer fixed point on the diagonal coefficients; throws
/// OracleDivergenceError when fp_max_iter is exhausted (no partial truth).
AffineOracleSolution solve_affine_oracle(const AffineProblemSpec& aspec, int fine_steps,
                                         double fp_tol = 1e-12, int fp_max_iter = 200);

// ---------------------------------------------------------------------------
// Deterministic (Sigma == 0) oracle for general coefficients
// ---------------------------------------------------------------------------

/// Trajectories of the degenerate system: with Sigma == 0 all conditional
/// expectations are trivial and the flow becomes a coupled ODE family.
struct DeterministicSolution {
    int fine_steps = 0;
    int n = 1, m = 1;
    std::vector<double> times;       // W+1
    std::vector<double> x;           // [node][n]
    std::vector<double> diag;        // [node][m]
    std::vector<double> y;           // [anchor][node][m], meaningful node >= anchor

    const double* x_at(int node) const { return x.data() + static_cast<std::size_t>(node) * n; }
    const double* diag_at(int node) const {
        return diag.data() + static_cast<std::size_t>(node) * m;
    }
    const double* y_at(int anchor, int node) const {
        return y.data() + (static_cast<std::size_t>(anchor) * times.size() + node) * m;
    }
    /// Cubic interpolation of a diagonal component at time s.
    double diag_component(double s, int comp) const;
    double x_component(double s, int comp) const;
};

/// Dense-grid Picard on the diagonal with 4th-order integration; validates
/// that Sigma vanishes by probing it. Throws OracleDivergenceError on
/// non-convergence.
DeterministicSolution solve_deterministic_oracle(const ProblemSpec& spec, int fine_steps,
                                                 double fp_tol = 1e-10, int fp_max_iter = 200);

// ---------------------------------------------------------------------------
// Time-inconsistent LQ control demo and the spike-variation probe
// ---------------------------------------------------------------------------

/// Controlled scalar dynamics dx = (b_x x + b_u u) ds + (sigma0 + sigma_x x) dW
/// with cost viewed at (t, x_t):
///   E_t[ int_t^T exp(-lambda (s-t)) (ru u^2 + rx x^2)/2 ds
///        + exp(-lambda (T-t)) gx x_T^2 / 2 ] + gamma (E_t[x_T])^2 / 2.
struct LqParams {
    double lambda = 0.0;
    double control_weight = 1.0;  // ru, must be > 0
    double state_weight = 0.0;    // rx
    double terminal_weight = 0.0; // gx
    double mean_weight = 0.0;     // gamma
    double drift_x = 0.0;         // b_x
    double drift_u = 1.0;         // b_u
    double sigma0 = 0.0;
    double sigma_x = 0.0;
    double T = 1.0;
    double x0 = 0.0;
};

/// The adjoint flow of the LQ problem. Solving it yields the open-loop
/// equilibrium control u(t, x, p) = -b_u p / ru evaluated on the diagonal.
struct LqProblem {
    LqParams params;
    ProblemSpec spec;

    double optimal_control(double p) const {
        return -params.drift_u * p / params.control_weight;
    }
};

/// Emits the FFBSDE whose driver is the x-derivative of the Hamiltonian
/// composed with the minimizer and whose terminal map collects the terminal
/// and mean-term derivatives. Throws UnsupportedProblemError when the
/// Hamiltonian is not strictly convex in the control.
LqProblem build_lq_control_problem(const LqParams& params);

/// Per-(node, path) control values.
using ControlExtractor = std::function<double(int node, int path)>;

/// Control process realized by an equilibrium solution of the LQ flow.
ControlExtractor equilibrium_control(const LqProblem& lq, const EquilibriumSolution& sol);

struct SpikeIncrement {
    double eps = 0.0;
    double increment = 0.0;  // (J(spiked) - J(base)) / eps, path average
    double std_error = 0.0;  // MC standard error of the path average
};

/// Replaces the control by v on [t, t+eps) per path, re-simulates with common
/// random numbers from the time-t states, and returns the normalized cost
/// increments. The expectation-level surrogate of the almost-sure first-order
/// condition: increments of a true equilibrium are nonnegative up to MC error.
/// `v` is broadcast when it holds a single value, otherwise read per path.
std::vector<SpikeIncrement> spike_variation_check(const LqProblem& lq,
                                                  const EquilibriumSolution& sol,
                                                  const ControlExtractor& control, double t,
                                                  const std::vector<double>& v,
                                                  const std::vector<double>& eps_list, int paths,
                                                  std::uint64_t seed,
                                                  const FitOptions& fit = FitOptions{1, 0.0});

}  // namespace ffbsde
