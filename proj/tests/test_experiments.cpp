#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ffbsde/catalog.hpp"
#include "ffbsde/errors.hpp"
#include "ffbsde/experiments.hpp"
#include "ffbsde/oracle.hpp"

using namespace ffbsde;

namespace {

AffineProblemSpec study_affine(double T, double scale = 1.0) {
    AffineProblemSpec a;
    a.b = 0.4;
    a.b_eta = 0.5;
    a.sigma = 0.3;
    a.f1 = 0.3;
    a.f2 = 0.5;
    a.f3 = 0.2;
    a.f4 = [scale](double t) { return scale * (0.2 + 1.0 * t); };
    a.f4_lip = scale;
    a.g1 = 0.6;
    a.g2 = 0.0;
    a.g3 = 0.0;
    a.g4 = [scale](double t) { return scale * (0.3 + 1.0 * t); };
    a.g4_lip = scale;
    a.T = T;
    a.x0 = scale;
    return a;
}

SolverOptions study_opts(int paths, std::uint64_t seed) {
    SolverOptions opts;
    opts.paths = paths;
    opts.seed = seed;
    opts.tol = 1e-7;
    opts.max_iter = 40;
    opts.fit = FitOptions{1, 0.0};
    opts.keep_field = false;
    return opts;
}

}  // namespace

TEST_CASE("loglog_slope recovers a power law") {
    const std::vector<double> x = {0.5, 0.25, 0.125, 0.0625};
    std::vector<double> y;
    for (double v : x) y.push_back(2.0 * std::pow(v, 1.5));
    CHECK(loglog_slope(x, y) == doctest::Approx(1.5).epsilon(1e-12));
    CHECK_THROWS_AS(loglog_slope({1.0}, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(loglog_slope({1.0, -1.0}, {1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("a time-insensitive problem is reported inconclusive, not fitted") {
    // F, G depend only on (s, x): every partition produces the same family,
    // so all error rows are exactly zero.
    AffineProblemSpec a = study_affine(0.5);
    a.f4 = [](double) { return 0.2; };
    a.g4 = [](double) { return 0.3; };
    const ProblemSpec spec = a.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(a.T, 16);
    CHECK_THROWS_AS(convergence_study(spec, grid, {2, 4, 8}, study_opts(512, 5)),
                    InconclusiveStudyError);
}

TEST_CASE("affine convergence study fits a near-linear rate") {
    const AffineProblemSpec a = study_affine(0.5);
    const ProblemSpec spec = a.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(a.T, 64);
    const ConvergenceResult res =
        convergence_study(spec, grid, {2, 4, 8, 16}, study_opts(4096, 99));
    CHECK(res.usable_rows >= 3);
    CHECK(res.slope >= 0.6);
    CHECK(res.slope <= 1.4);
    for (const auto& row : res.rows) {
        CHECK(row.err_diag >= 0.0);
        CHECK(row.err_X >= 0.0);
    }
}

TEST_CASE("doubling the size constant doubles the squared diagonal error") {
    // Scaling (x0, f4, g4) by sqrt(2) doubles R + |x0|^2 and the solution is
    // homogeneous, so err_diag^2 at fixed mesh doubles too.
    const TimeGrid grid = make_uniform_grid(0.5, 32);
    const SolverOptions opts = study_opts(4096, 7);
    const ConvergenceResult base =
        convergence_study(study_affine(0.5, 1.0).to_problem_spec(), grid, {2, 4, 8}, opts);
    const ConvergenceResult scaled =
        convergence_study(study_affine(0.5, std::sqrt(2.0)).to_problem_spec(), grid, {2, 4, 8},
                          opts);
    const double r0 = scaled.rows[0].err_diag * scaled.rows[0].err_diag /
                      (base.rows[0].err_diag * base.rows[0].err_diag);
    CHECK(r0 >= 1.5);
    CHECK(r0 <= 2.5);
}

TEST_CASE("contraction study: a zero problem is vacuous") {
    auto builder = [](double T) { return build_zero_problem(1, 1, 1, T, {0.5}); };
    const std::vector<ContractionRow> rows =
        contraction_study(builder, {0.125, 0.25}, 8, study_opts(256, 3));
    for (const auto& row : rows) {
        CHECK(row.converged);
        CHECK(row.iterations == 1);
        CHECK(row.usable_ratios == 0);
    }
}

TEST_CASE("contraction strengthens with the horizon on the affine benchmark") {
    auto builder = [](double T) { return study_affine(T).to_problem_spec(); };
    const std::vector<ContractionRow> rows =
        contraction_study(builder, {0.125, 0.25, 0.5}, 32, study_opts(4096, 11));
    REQUIRE(rows.size() == 3);
    for (const auto& row : rows) {
        CHECK_FALSE(row.diverged);
        CHECK(row.converged);
        CHECK(row.usable_ratios >= 1);
    }
    CHECK(rows[0].mean_ratio < rows[1].mean_ratio);
    CHECK(rows[1].mean_ratio < rows[2].mean_ratio);
    CHECK(rows[0].max_ratio <= 0.9);
}

TEST_CASE("stability study: zero perturbation gives exactly zero distance") {
    const AffineProblemSpec a = study_affine(0.25);
    const ProblemSpec spec = a.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(a.T, 16);
    const std::vector<StabilityRow> rows = stability_study(
        spec, grid, full_partition(grid), {0.0}, {1.0}, study_opts(512, 17));
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].distance == 0.0);
}

TEST_CASE("stability distance is first-order linear in the perturbation scale") {
    const AffineProblemSpec a = study_affine(0.25);
    const ProblemSpec spec = a.to_problem_spec();
    const TimeGrid grid = make_uniform_grid(a.T, 16);
    SolverOptions opts = study_opts(2048, 23);
    opts.tol = 1e-10;
    opts.max_iter = 60;
    const std::vector<StabilityRow> rows = stability_study(
        spec, grid, full_partition(grid), {0.01, 0.02}, {1.0}, opts);
    REQUIRE(rows.size() == 2);
    const double ratio = rows[1].distance / rows[0].distance;
    CHECK(ratio >= 1.6);
    CHECK(ratio <= 2.4);
    // The empirical constant distance/scale is finite and stable.
    CHECK(rows[0].bound_ratio > 0.0);
    CHECK(rows[1].bound_ratio / rows[0].bound_ratio >= 0.8);
    CHECK(rows[1].bound_ratio / rows[0].bound_ratio <= 1.2);
}
