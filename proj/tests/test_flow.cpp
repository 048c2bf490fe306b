#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ffbsde/catalog.hpp"
#include "ffbsde/errors.hpp"
#include "ffbsde/flow.hpp"
#include "ffbsde/oracle.hpp"

using namespace ffbsde;

namespace {

BsdeSlice constant_slice(int anchor, int J, int paths, double value) {
    BsdeSlice slice;
    slice.anchor_node = anchor;
    slice.paths = paths;
    slice.m = 1;
    slice.d = 1;
    slice.nodes = J - anchor + 1;
    slice.y.assign(static_cast<std::size_t>(slice.nodes) * paths, value);
    slice.z.assign(static_cast<std::size_t>(slice.nodes) * paths, 0.0);
    return slice;
}

AffineProblemSpec test_affine(double T, double sigma, bool anchored) {
    AffineProblemSpec a;
    a.b = 0.4;
    a.b_eta = 0.5;
    a.sigma = sigma;
    a.f1 = 0.3;
    a.f2 = 0.5;
    a.f3 = 0.2;
    a.f4 = [](double t) { return 0.2 + 0.4 * t; };
    a.f4_lip = 0.4;
    a.g1 = 0.6;
    a.g2 = anchored ? 0.3 : 0.0;
    a.g3 = anchored ? 0.2 : 0.0;
    a.g4 = [](double t) { return 0.3 + 0.3 * t; };
    a.g4_lip = 0.3;
    a.T = T;
    a.x0 = 1.0;
    return a;
}

}  // namespace

TEST_CASE("extract_diagonal: single anchor copies the whole slice") {
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const Partition part = make_partition(grid, 1);
    BsdeField field;
    field.emplace(0, constant_slice(0, 8, 4, 1.5));
    const DiagonalProcess diag = extract_diagonal(field, part, grid);
    for (int j = 0; j <= 8; ++j)
        for (int p = 0; p < 4; ++p) CHECK(diag.at(j)(p, 0) == 1.5);
}

TEST_CASE("extract_diagonal: identical slices make the selector irrelevant") {
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const Partition part = make_partition(grid, 4);
    BsdeField field;
    for (int k = 0; k < 4; ++k) field.emplace(2 * k, constant_slice(2 * k, 8, 4, -0.75));
    const DiagonalProcess diag = extract_diagonal(field, part, grid);
    for (int j = 0; j <= 8; ++j)
        for (int p = 0; p < 4; ++p) CHECK(diag.at(j)(p, 0) == -0.75);
}

TEST_CASE("extract_diagonal: two slices switch at the midpoint, last interval closed") {
    // Hand evaluation of the indicator selector: nodes in [0, T/2) take the
    // first slice, nodes in [T/2, T] the second.
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const Partition part = make_partition(grid, 2);
    BsdeField field;
    field.emplace(0, constant_slice(0, 8, 3, 10.0));
    field.emplace(4, constant_slice(4, 8, 3, 20.0));
    const DiagonalProcess diag = extract_diagonal(field, part, grid);
    for (int j = 0; j <= 8; ++j) {
        const double expected = j < 4 ? 10.0 : 20.0;
        for (int p = 0; p < 3; ++p) CHECK(diag.at(j)(p, 0) == expected);
    }
}

TEST_CASE("extract_diagonal rejects a missing slice") {
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const Partition part = make_partition(grid, 2);
    BsdeField field;
    field.emplace(0, constant_slice(0, 8, 3, 1.0));
    CHECK_THROWS_AS(extract_diagonal(field, part, grid), std::invalid_argument);
}

TEST_CASE("phi step on the zero problem returns the zero fixed point") {
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.7});
    const BrownianBundle bundle = sample_brownian(grid, 128, 1, 4);
    DiagonalProcess diag_in = DiagonalProcess::zeros(grid, 128, 1);
    for (auto& v : diag_in.values) v = 2.0;  // arbitrary input
    const PhiStepResult out = phi_step(spec, grid, bundle, full_partition(grid), diag_in,
                                       FitOptions{1, 0.0});
    CHECK(diag_sup_l2_norm(out.diag).value == 0.0);
    for (int j = 0; j <= 8; ++j)
        for (int p = 0; p < 128; ++p) CHECK(out.ensemble.state(j)(p, 0) == 0.7);
}

TEST_CASE("phi step with constant terminal is a constant map") {
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const ProblemSpec spec = build_constant_terminal_problem(1, 1, 1, 1.0, {0.0}, {3.5});
    const BrownianBundle bundle = sample_brownian(grid, 256, 1, 6);
    DiagonalProcess diag_in = DiagonalProcess::zeros(grid, 256, 1);
    for (std::size_t i = 0; i < diag_in.values.size(); ++i)
        diag_in.values[i] = std::sin(static_cast<double>(i));
    const PhiStepResult out =
        phi_step(spec, grid, bundle, make_partition(grid, 2), diag_in, FitOptions{1, 0.0});
    for (int j = 0; j <= 8; ++j)
        for (int p = 0; p < 256; ++p)
            CHECK(out.diag.at(j)(p, 0) == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("numeric phi step matches the closed-form map on an affine problem") {
    // Input diagonal in feedback form eta = a_in x + h_in; the oracle applies
    // the same three steps in closed form.
    const double a_in = 0.3, h_in = -0.2;
    const AffineProblemSpec aspec = test_affine(0.5, 0.3, false);
    const ProblemSpec spec = aspec.to_problem_spec();
    const int J = 64, P = 1 << 13;
    const TimeGrid grid = make_uniform_grid(aspec.T, J);
    const BrownianBundle bundle = sample_brownian(grid, P, 1, 31415);

    // Simulate the feedback-closed forward equation to realize the input
    // diagonal pathwise.
    ProblemSpec closed = spec;
    closed.B = [&aspec, a_in, h_in](double, const double* x, const double*, double* o) {
        o[0] = aspec.b * x[0] + aspec.b_eta * (a_in * x[0] + h_in);
    };
    const DiagonalProcess zero = DiagonalProcess::zeros(grid, P, 1);
    const PathEnsemble feedback = simulate_forward(closed, zero, bundle);
    DiagonalProcess diag_in = DiagonalProcess::zeros(grid, P, 1);
    for (int j = 0; j <= J; ++j)
        diag_in.at(j) = (a_in * feedback.state(j).col(0).array() + h_in).matrix();

    const PhiStepResult out =
        phi_step(spec, grid, bundle, full_partition(grid), diag_in, FitOptions{1, 0.0});

    const AffineDiagonal truth = oracle_phi_step(
        aspec, 512, [a_in](double) { return a_in; }, [h_in](double) { return h_in; });
    auto truth_at = [&](double s, double x) {
        const int W = 512;
        const double h = aspec.T / W;
        const int i = static_cast<int>(std::round(s / h));
        return truth.a[static_cast<std::size_t>(i)] * x + truth.h[static_cast<std::size_t>(i)];
    };
    // s lands exactly on oracle nodes: J divides the oracle grid.
    double worst = 0.0;
    for (int j = 0; j <= J; ++j) {
        const double s = grid.times[static_cast<std::size_t>(j)];
        double err2 = 0.0, ref2 = 0.0;
        for (int p = 0; p < P; ++p) {
            const double x = out.ensemble.state(j)(p, 0);
            const double dv = out.diag.at(j)(p, 0) - truth_at(s, x);
            err2 += dv * dv;
            ref2 += truth_at(s, x) * truth_at(s, x);
        }
        worst = std::max(worst, std::sqrt(err2 / P) / std::max(std::sqrt(ref2 / P), 1e-6));
    }
    CHECK(worst <= 0.02);
}

TEST_CASE("Picard solve: trivial fixed points and the honest convergence flag") {
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    SolverOptions opts;
    opts.paths = 128;
    opts.seed = 12;
    opts.tol = 1e-12;
    opts.max_iter = 5;

    const EquilibriumSolution zero =
        solve_equilibrium(build_zero_problem(1, 1, 1, 1.0, {0.5}), grid, opts);
    CHECK(zero.report.converged);
    CHECK(zero.report.iteration_count() == 1);
    CHECK(diag_sup_l2_norm(zero.diag).value == 0.0);

    const EquilibriumSolution constant = solve_equilibrium(
        build_constant_terminal_problem(1, 1, 1, 1.0, {0.5}, {2.0}), grid, opts);
    CHECK(constant.report.converged);
    CHECK(constant.report.iteration_count() <= 2);
    for (int j = 0; j <= 8; ++j)
        CHECK(constant.diag.at(j)(0, 0) == doctest::Approx(2.0).epsilon(1e-12));

    // max_iter exhaustion is reported, not thrown.
    SolverOptions tight = opts;
    tight.max_iter = 1;
    tight.tol = 1e-300;
    const EquilibriumSolution unconverged = solve_equilibrium(
        build_constant_terminal_problem(1, 1, 1, 1.0, {0.5}, {2.0}), grid, tight);
    CHECK_FALSE(unconverged.report.converged);
}

TEST_CASE("solve_equilibrium is definitionally the finest-partition solve") {
    const AffineProblemSpec aspec = test_affine(0.25, 0.3, true);
    const ProblemSpec spec = aspec.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(aspec.T, 16);
    SolverOptions opts;
    opts.paths = 512;
    opts.seed = 8;
    opts.tol = 1e-6;
    opts.max_iter = 25;
    const EquilibriumSolution a = solve_equilibrium(spec, grid, opts);
    const EquilibriumSolution b = solve_pi_equilibrium(spec, grid, make_partition(grid, 16), opts);
    CHECK(a.diag.values == b.diag.values);
    CHECK(a.ensemble.states == b.ensemble.states);
}

TEST_CASE("solution invariants: diagonal consistency and closed forward loop") {
    const AffineProblemSpec aspec = test_affine(0.25, 0.4, true);
    const ProblemSpec spec = aspec.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(aspec.T, 12);
    const Partition part = make_partition(grid, 4);
    SolverOptions opts;
    opts.paths = 1024;
    opts.seed = 9;
    opts.tol = 1e-6;
    opts.max_iter = 30;
    opts.keep_field = true;
    const EquilibriumSolution sol = solve_pi_equilibrium(spec, grid, part, opts);
    REQUIRE(sol.report.converged);

    // Bit-exact diagonal consistency on each anchor's own interval.
    for (int k = 0; k < part.intervals(); ++k) {
        const int lo = part.anchor_nodes[static_cast<std::size_t>(k)];
        const int hi = k + 1 == part.intervals() ? grid.nodes() - 1
                                                 : part.anchor_nodes[static_cast<std::size_t>(k) + 1] - 1;
        const BsdeSlice& slice = sol.field.at(lo);
        for (int j = lo; j <= hi; ++j)
            for (int p = 0; p < opts.paths; ++p)
                CHECK(sol.diag.at(j)(p, 0) == slice.y_at(j)(p, 0));
    }

    // Re-simulating the forward equation with the stored diagonal reproduces
    // the stored ensemble bit-exactly.
    const PathEnsemble resim = simulate_forward(spec, sol.diag, sol.ensemble.bundle);
    CHECK(resim.states == sol.ensemble.states);
}

TEST_CASE("one extra phi step moves a converged diagonal by at most 2 tol") {
    const AffineProblemSpec aspec = test_affine(0.25, 0.3, false);
    const ProblemSpec spec = aspec.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(aspec.T, 16);
    SolverOptions opts;
    opts.paths = 2048;
    opts.seed = 14;
    opts.tol = 1e-7;
    opts.max_iter = 40;
    const EquilibriumSolution sol = solve_equilibrium(spec, grid, opts);
    REQUIRE(sol.report.converged);
    const PhiStepResult extra = phi_step(spec, grid, sol.ensemble.bundle, full_partition(grid),
                                         sol.diag, opts.fit, 1, false);
    CHECK(diag_diff_sup_l2_norm(extra.diag, sol.diag).value <= 2.0 * opts.tol);
}

TEST_CASE("increments decay geometrically until the noise floor at a small horizon") {
    const AffineProblemSpec aspec = test_affine(0.125, 0.3, false);
    const ProblemSpec spec = aspec.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(aspec.T, 16);
    SolverOptions opts;
    opts.paths = 4096;
    opts.seed = 21;
    opts.tol = 1e-9;
    opts.max_iter = 40;
    const EquilibriumSolution sol = solve_equilibrium(spec, grid, opts);
    for (double ratio : sol.report.usable_ratios()) CHECK(ratio <= 0.9);
}

TEST_CASE("entire solve is a pure function of its inputs") {
    const AffineProblemSpec aspec = test_affine(0.25, 0.5, true);
    const ProblemSpec spec = aspec.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(aspec.T, 10);
    SolverOptions opts;
    opts.paths = 777;
    opts.seed = 31;
    opts.tol = 1e-6;
    opts.max_iter = 20;
    const EquilibriumSolution a = solve_equilibrium(spec, grid, opts);
    const EquilibriumSolution b = solve_equilibrium(spec, grid, opts);
    CHECK(a.diag.values == b.diag.values);
    CHECK(a.ensemble.states == b.ensemble.states);
    CHECK(a.report.iteration_count() == b.report.iteration_count());

    SolverOptions threaded = opts;
    threaded.workers = 3;
    const EquilibriumSolution c = solve_equilibrium(spec, grid, threaded);
    CHECK(a.diag.values == c.diag.values);
}

TEST_CASE("stack_coefficients: single interval freezes the anchor at zero") {
    const AffineProblemSpec aspec = test_affine(0.5, 0.2, false);
    const ProblemSpec spec = aspec.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(aspec.T, 8);
    const StackedProblemSpec stacked = stack_coefficients(spec, make_partition(grid, 1));
    CHECK(stacked.spec.m == 1);
    const double x = 0.8, eta = -0.3, y = 0.4, z = 0.1;
    double out_a = 0.0, out_b = 0.0;
    stacked.spec.B(0.3, &x, &eta, &out_a);
    spec.B(0.3, &x, &eta, &out_b);
    CHECK(out_a == out_b);
    const double zero = 0.0;
    stacked.spec.F(0.77, 0.3, &zero, &zero, &x, &eta, &y, &z, &out_a);
    spec.F(0.0, 0.3, &zero, &zero, &x, &eta, &y, &z, &out_b);
    CHECK(out_a == out_b);
    stacked.spec.G(0.77, &zero, &zero, &x, &out_a);
    spec.G(0.0, &zero, &zero, &x, &out_b);
    CHECK(out_a == out_b);
}

TEST_CASE("stack_coefficients: two-interval terminal stacks G at the anchor times") {
    // m = 1, N = 2, F = 0, G(t, x) = t x: stacked terminal is (0, t_1 x).
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.G = [](double t, const double*, const double*, const double* x, double* o) {
        o[0] = t * x[0];
    };
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const StackedProblemSpec stacked = stack_coefficients(spec, make_partition(grid, 2));
    CHECK(stacked.spec.m == 2);
    const double x = 1.7, zero = 0.0;
    double out[2];
    stacked.spec.G(0.0, &zero, &zero, &x, out);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.5 * x);
}

TEST_CASE("stack_coefficients requires anchor-free coefficients") {
    const AffineProblemSpec aspec = test_affine(0.5, 0.2, true);
    const TimeGrid grid = make_uniform_grid(aspec.T, 8);
    CHECK_THROWS_AS(stack_coefficients(aspec.to_problem_spec(), make_partition(grid, 2)),
                    UnsupportedReductionError);
}

TEST_CASE("per-anchor and stacked solves agree on an affine three-interval problem") {
    const AffineProblemSpec aspec = test_affine(0.5, 0.3, false);
    const ProblemSpec spec = aspec.to_problem_spec();
    const int J = 24, P = 1024;
    const TimeGrid grid = make_uniform_grid(aspec.T, J);
    const Partition part = make_partition(grid, 3);

    SolverOptions opts;
    opts.paths = P;
    opts.seed = 777;
    opts.tol = 1e-300;  // run a fixed iteration count on both routes
    opts.max_iter = 6;
    opts.keep_field = true;

    const EquilibriumSolution per_anchor = solve_pi_equilibrium(spec, grid, part, opts);

    const StackedProblemSpec stacked = stack_coefficients(spec, part);
    const EquilibriumSolution stacked_sol = solve_equilibrium(stacked.spec, grid, opts);

    // Diagonals agree through the interval selector.
    const DiagonalProcess unstacked = unstack_diagonal(stacked, stacked_sol.diag);
    double worst = 0.0;
    for (std::size_t i = 0; i < unstacked.values.size(); ++i)
        worst = std::max(worst, std::abs(unstacked.values[i] - per_anchor.diag.values[i]));
    CHECK(worst <= 1e-10);

    // Every per-anchor slice agrees with its block in the stacked family
    // (anchor-0 stacked slice covers all nodes).
    const BsdeSlice& stacked_slice = stacked_sol.field.at(0);
    for (int k = 0; k < part.intervals(); ++k) {
        const int anchor = part.anchor_nodes[static_cast<std::size_t>(k)];
        const BsdeSlice& slice = per_anchor.field.at(anchor);
        for (int j = anchor; j <= J; ++j)
            for (int p = 0; p < P; ++p) {
                worst = std::max(worst,
                                 std::abs(slice.y_at(j)(p, 0) - stacked_slice.y_at(j)(p, k)));
            }
    }
    CHECK(worst <= 1e-10);

    // Forward states agree as well.
    double worst_x = 0.0;
    for (std::size_t i = 0; i < per_anchor.ensemble.states.size(); ++i)
        worst_x = std::max(worst_x, std::abs(per_anchor.ensemble.states[i] -
                                             stacked_sol.ensemble.states[i]));
    CHECK(worst_x <= 1e-10);
}
