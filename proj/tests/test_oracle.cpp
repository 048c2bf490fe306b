#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ffbsde/catalog.hpp"
#include "ffbsde/errors.hpp"
#include "ffbsde/flow.hpp"
#include "ffbsde/oracle.hpp"

using namespace ffbsde;

namespace {

AffineProblemSpec benchmark_affine(double T, double sigma) {
    AffineProblemSpec a;
    a.b = 0.5;
    a.b_eta = 0.4;
    a.sigma = sigma;
    a.f1 = 0.3;
    a.f2 = 0.4;
    a.f3 = 0.2;
    a.f4 = [](double t) { return 0.1 + 0.2 * t; };
    a.f4_lip = 0.2;
    a.g1 = 0.5;
    a.g2 = 0.2;
    a.g3 = 0.1;
    a.g4 = [](double t) { return 0.3 + 0.1 * t; };
    a.g4_lip = 0.1;
    a.T = T;
    a.x0 = 1.0;
    return a;
}

}  // namespace

TEST_CASE("constant terminal intercept: h == c, other fields vanish") {
    AffineProblemSpec a;
    a.f4 = [](double) { return 0.0; };
    a.g4 = [](double) { return 2.5; };
    a.T = 1.0;
    const AffineOracleSolution sol = solve_affine_oracle(a, 128);
    const int W = sol.fine_steps;
    for (int i = 0; i <= W; i += 16)
        for (int j = i; j <= W; j += 16) {
            CHECK(std::abs(sol.field(sol.A, i, j)) <= 1e-13);
            CHECK(std::abs(sol.field(sol.P, i, j)) <= 1e-13);
            CHECK(std::abs(sol.field(sol.Q, i, j)) <= 1e-13);
            CHECK(sol.field(sol.h, i, j) == doctest::Approx(2.5).epsilon(1e-12));
        }
    for (int i = 0; i <= W; ++i) {
        CHECK(std::abs(sol.a_diag[static_cast<std::size_t>(i)]) <= 1e-13);
        CHECK(sol.h_diag[static_cast<std::size_t>(i)] == doctest::Approx(2.5).epsilon(1e-12));
    }
}

TEST_CASE("martingale terminal: A == 1 and Z == sigma") {
    AffineProblemSpec a;
    a.g1 = 1.0;
    a.sigma = 0.7;
    a.f4 = [](double) { return 0.0; };
    a.g4 = [](double) { return 0.0; };
    a.T = 0.8;
    const AffineOracleSolution sol = solve_affine_oracle(a, 128);
    for (int i = 0; i <= sol.fine_steps; i += 8)
        for (int j = i; j <= sol.fine_steps; j += 8) {
            CHECK(sol.field(sol.A, i, j) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(std::abs(sol.field(sol.P, i, j)) <= 1e-13);
            CHECK(std::abs(sol.field(sol.Q, i, j)) <= 1e-13);
            CHECK(std::abs(sol.field(sol.h, i, j)) <= 1e-13);
        }
    CHECK(sol.sigma == 0.7);  // Z^t_s = A sigma = sigma here
}

TEST_CASE("pure driver intercept integrates to c (T - s)") {
    AffineProblemSpec a;
    const double c = 0.6;
    a.f4 = [c](double) { return c; };
    a.g4 = [](double) { return 0.0; };
    a.T = 1.0;
    const AffineOracleSolution sol = solve_affine_oracle(a, 128);
    for (int i = 0; i <= sol.fine_steps; i += 8) {
        const double t = sol.times[static_cast<std::size_t>(i)];
        CHECK(sol.h_diag[static_cast<std::size_t>(i)] ==
              doctest::Approx(c * (1.0 - t)).epsilon(1e-10));
    }
}

TEST_CASE("terminal conditions hold exactly at the last node") {
    const AffineProblemSpec a = benchmark_affine(0.5, 0.3);
    const AffineOracleSolution sol = solve_affine_oracle(a, 128);
    const int W = sol.fine_steps;
    for (int i = 0; i <= W; i += 4) {
        CHECK(sol.field(sol.A, i, W) == a.g1);
        CHECK(sol.field(sol.P, i, W) == a.g2);
        CHECK(sol.field(sol.Q, i, W) == a.g3);
        CHECK(sol.field(sol.h, i, W) == a.g4(sol.times[static_cast<std::size_t>(i)]));
    }
}

TEST_CASE("sigma = 0 slice agrees with the independent deterministic oracle") {
    const AffineProblemSpec a = benchmark_affine(0.5, 0.0);
    const AffineOracleSolution affine = solve_affine_oracle(a, 512);
    const DeterministicSolution det = solve_deterministic_oracle(a.to_problem_spec(), 512);

    double worst = 0.0;
    for (int i = 0; i <= 512; i += 8) {
        const double s = det.times[static_cast<std::size_t>(i)];
        const double x = det.x_at(i)[0];
        const double affine_diag = affine.a_at(s) * x + affine.h_at(s);
        worst = std::max(worst, std::abs(affine_diag - det.diag_at(i)[0]));
    }
    CHECK(worst <= 1e-6);
}

TEST_CASE("Richardson: halving the oracle grid contracts the change by ~1/16") {
    AffineProblemSpec a = benchmark_affine(1.0, 0.0);
    a.b = 0.9;
    a.f1 = 0.8;
    const AffineOracleSolution s64 = solve_affine_oracle(a, 64, 1e-13, 400);
    const AffineOracleSolution s128 = solve_affine_oracle(a, 128, 1e-13, 400);
    const AffineOracleSolution s256 = solve_affine_oracle(a, 256, 1e-13, 400);
    double d1 = 0.0, d2 = 0.0;
    for (int i = 0; i <= 64; ++i) {
        d1 = std::max(d1, std::abs(s128.h_diag[static_cast<std::size_t>(2 * i)] -
                                   s64.h_diag[static_cast<std::size_t>(i)]));
        d1 = std::max(d1, std::abs(s128.a_diag[static_cast<std::size_t>(2 * i)] -
                                   s64.a_diag[static_cast<std::size_t>(i)]));
    }
    for (int i = 0; i <= 128; ++i) {
        d2 = std::max(d2, std::abs(s256.h_diag[static_cast<std::size_t>(2 * i)] -
                                   s128.h_diag[static_cast<std::size_t>(i)]));
        d2 = std::max(d2, std::abs(s256.a_diag[static_cast<std::size_t>(2 * i)] -
                                   s128.a_diag[static_cast<std::size_t>(i)]));
    }
    REQUIRE(d1 > 1e-12);  // grid error must dominate the fixed-point tolerance
    CHECK(d2 <= (1.0 / 16.0 + 0.05) * d1);
}

TEST_CASE("oracle refuses to return partial truth when the fixed point diverges") {
    AffineProblemSpec a = benchmark_affine(2.0, 0.0);
    a.b_eta = 8.0;
    a.f2 = 8.0;
    CHECK_THROWS_AS(solve_affine_oracle(a, 128, 1e-12, 30), OracleDivergenceError);
}

TEST_CASE("deterministic oracle: zero coefficients give constant state and zero diagonal") {
    const ProblemSpec spec = build_zero_problem(2, 1, 1, 1.0, {0.4, -0.6});
    const DeterministicSolution sol = solve_deterministic_oracle(spec, 64);
    for (int i = 0; i <= 64; i += 8) {
        CHECK(sol.x_at(i)[0] == doctest::Approx(0.4).epsilon(1e-14));
        CHECK(sol.x_at(i)[1] == doctest::Approx(-0.6).epsilon(1e-14));
        CHECK(std::abs(sol.diag_at(i)[0]) <= 1e-14);
    }
}

TEST_CASE("deterministic oracle: unit driver gives Y^t(s) = T - s for every anchor") {
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.F = [](double, double, const double*, const double*, const double*, const double*,
                const double*, const double*, double* o) { o[0] = 1.0; };
    const DeterministicSolution sol = solve_deterministic_oracle(spec, 64);
    for (int anchor = 0; anchor <= 64; anchor += 8)
        for (int node = anchor; node <= 64; node += 8) {
            const double expected = 1.0 - sol.times[static_cast<std::size_t>(node)];
            CHECK(sol.y_at(anchor, node)[0] == doctest::Approx(expected).epsilon(1e-12));
        }
}

TEST_CASE("deterministic oracle validates that Sigma vanishes") {
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.Sigma = [](double, const double*, const double*, double* o) { o[0] = 1.0; };
    CHECK_THROWS_AS(solve_deterministic_oracle(spec, 64), std::invalid_argument);
}

TEST_CASE("LQ builder: quadratic-cost minimizer and convexity guard") {
    LqParams params;
    params.control_weight = 1.0;
    params.drift_u = 1.0;
    params.T = 1.0;
    const LqProblem lq = build_lq_control_problem(params);
    CHECK(lq.optimal_control(0.7) == doctest::Approx(-0.7));

    LqParams bad = params;
    bad.control_weight = 0.0;
    CHECK_THROWS_AS(build_lq_control_problem(bad), UnsupportedProblemError);
}

TEST_CASE("LQ with zero cost: control and adjoint vanish") {
    LqParams params;
    params.control_weight = 1.0;
    params.drift_u = 1.0;
    params.drift_x = 0.3;
    params.sigma0 = 0.4;
    params.T = 0.5;
    params.x0 = 1.0;
    const LqProblem lq = build_lq_control_problem(params);
    const TimeGrid grid = make_uniform_grid(params.T, 16);
    SolverOptions opts;
    opts.paths = 512;
    opts.seed = 5;
    opts.tol = 1e-9;
    opts.max_iter = 10;
    opts.keep_field = false;
    const EquilibriumSolution sol = solve_equilibrium(lq.spec, grid, opts);
    CHECK(sol.report.converged);
    CHECK(diag_sup_l2_norm(sol.diag).value <= 1e-10);
    const ControlExtractor control = equilibrium_control(lq, sol);
    CHECK(std::abs(control(3, 17)) <= 1e-10);
}

namespace {

struct LqFixture {
    LqProblem lq;
    EquilibriumSolution sol;
    TimeGrid grid;
    SolverOptions opts;
};

LqFixture lq_fixture() {
    LqParams params;
    params.lambda = 0.3;
    params.control_weight = 2.0;
    params.state_weight = 0.4;
    params.terminal_weight = 0.8;
    params.mean_weight = 0.5;
    params.drift_x = 0.3;
    params.drift_u = 1.0;
    params.sigma0 = 0.35;
    params.sigma_x = 0.0;
    params.T = 0.5;
    params.x0 = 1.0;
    LqFixture fx{build_lq_control_problem(params), {}, make_uniform_grid(params.T, 50), {}};
    fx.opts.paths = 4096;
    fx.opts.seed = 2468;
    fx.opts.tol = 1e-6;
    fx.opts.max_iter = 80;
    fx.opts.fit = FitOptions{1, 0.0};
    fx.opts.keep_field = false;
    fx.sol = solve_equilibrium(fx.lq.spec, fx.grid, fx.opts);
    return fx;
}

}  // namespace

TEST_CASE("spike variation: null spike, convex nonnegativity, and negative control") {
    LqFixture fx = lq_fixture();
    REQUIRE(fx.sol.report.converged);
    const ControlExtractor control = equilibrium_control(fx.lq, fx.sol);
    const double t = 0.1;  // grid node 10
    const std::vector<double> eps_list = {0.04, 0.02, 0.01};
    const int node_t = 10;

    // Null spike: v equals the equilibrium control at t, pathwise.
    std::vector<double> v_null(static_cast<std::size_t>(fx.opts.paths));
    for (int p = 0; p < fx.opts.paths; ++p) v_null[static_cast<std::size_t>(p)] = control(node_t, p);
    for (const SpikeIncrement& inc : spike_variation_check(fx.lq, fx.sol, control, t, v_null,
                                                           eps_list, fx.opts.paths, fx.opts.seed)) {
        CHECK(std::abs(inc.increment) <= 3.0 * inc.std_error + 0.02);
    }

    // Fixed perturbation values: first-order condition of the equilibrium.
    for (double v : {-0.5, 0.2}) {
        for (const SpikeIncrement& inc : spike_variation_check(
                 fx.lq, fx.sol, control, t, {v}, eps_list, fx.opts.paths, fx.opts.seed)) {
            CHECK(inc.increment >= -3.0 * inc.std_error);
        }
    }

    // Negative control: a constant shift of the control is not an equilibrium;
    // spiking back to the unshifted values must improve the cost.
    const double shift = 0.5;
    const ControlExtractor shifted = [&control, shift](int node, int path) {
        return control(node, path) + shift;
    };
    bool detected = false;
    for (const SpikeIncrement& inc : spike_variation_check(fx.lq, fx.sol, shifted, t, v_null,
                                                           eps_list, fx.opts.paths, fx.opts.seed)) {
        if (inc.increment < -3.0 * inc.std_error) detected = true;
    }
    CHECK(detected);
}

TEST_CASE("spike variation rejects horizons and mismatched noise") {
    LqFixture fx = lq_fixture();
    const ControlExtractor control = equilibrium_control(fx.lq, fx.sol);
    CHECK_THROWS_AS(spike_variation_check(fx.lq, fx.sol, control, 0.1, {0.0}, {1.0}, fx.opts.paths,
                                          fx.opts.seed),
                    std::invalid_argument);  // eps beyond horizon
    CHECK_THROWS_AS(spike_variation_check(fx.lq, fx.sol, control, 0.1, {0.0}, {0.04, 0.08},
                                          fx.opts.paths, fx.opts.seed),
                    std::invalid_argument);  // eps not decreasing
    CHECK_THROWS_AS(spike_variation_check(fx.lq, fx.sol, control, 0.1, {0.0}, {0.04},
                                          fx.opts.paths, fx.opts.seed + 1),
                    std::invalid_argument);  // wrong seed: no common random numbers
}
