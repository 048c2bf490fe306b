#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "ffbsde/catalog.hpp"
#include "ffbsde/errors.hpp"
#include "ffbsde/model.hpp"

using namespace ffbsde;

TEST_CASE("uniform grid nodes are exact for representable steps") {
    const TimeGrid grid = make_uniform_grid(1.0, 4);
    REQUIRE(grid.nodes() == 5);
    CHECK(grid.times[0] == 0.0);
    CHECK(grid.times[1] == 0.25);
    CHECK(grid.times[2] == 0.5);
    CHECK(grid.times[3] == 0.75);
    CHECK(grid.times[4] == 1.0);

    const TimeGrid two = make_uniform_grid(0.5, 1);
    CHECK(two.times == std::vector<double>{0.0, 0.5});
}

TEST_CASE("degenerate grid arguments are rejected") {
    CHECK_THROWS_AS(make_uniform_grid(1.0, 0), std::invalid_argument);
    CHECK_THROWS_AS(make_uniform_grid(0.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(make_uniform_grid(-1.0, 4), std::invalid_argument);
}

TEST_CASE("partition anchors sit on grid nodes") {
    const TimeGrid grid = make_uniform_grid(1.0, 8);
    const Partition part = make_partition(grid, 2);
    CHECK(part.anchor_times == std::vector<double>{0.0, 0.5, 1.0});
    CHECK(part.mesh == 0.5);

    const Partition finest = make_partition(grid, 8);
    CHECK(finest.anchor_times == grid.times);
    CHECK(finest.mesh == 0.125);

    const TimeGrid coarse = make_uniform_grid(1.0, 4);
    CHECK_THROWS_AS(make_partition(coarse, 8), std::invalid_argument);
    CHECK_THROWS_AS(make_partition(grid, 3), std::invalid_argument);  // does not divide
}

TEST_CASE("partition containment is bit-exact for random shapes") {
    std::mt19937 gen(7);
    for (int trial = 0; trial < 50; ++trial) {
        const int J = 1 + static_cast<int>(gen() % 96);
        const TimeGrid grid = make_uniform_grid(0.1 + (gen() % 17) * 0.21, J);
        // pick a divisor of J
        std::vector<int> divisors;
        for (int k = 1; k <= J; ++k)
            if (J % k == 0) divisors.push_back(k);
        const int N = divisors[gen() % divisors.size()];
        const Partition part = make_partition(grid, N);
        for (std::size_t k = 0; k < part.anchor_nodes.size(); ++k)
            CHECK(part.anchor_times[k] == grid.times[static_cast<std::size_t>(part.anchor_nodes[k])]);
    }
}

TEST_CASE("check_spec enforces structural invariants") {
    ProblemSpec spec = build_zero_problem(2, 1, 1, 1.0, {0.0, 0.0});
    CHECK_NOTHROW(check_spec(spec));

    ProblemSpec bad = spec;
    bad.x0 = {0.0};
    CHECK_THROWS_AS(check_spec(bad), std::invalid_argument);

    bad = spec;
    bad.T = 0.0;
    CHECK_THROWS_AS(check_spec(bad), std::invalid_argument);

    bad = spec;
    bad.markovian = false;
    CHECK_THROWS_AS(check_spec(bad), std::invalid_argument);
}

TEST_CASE("validate_problem: zero coefficients give R = 0 and no violations") {
    const ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    const ValidationReport report = validate_problem(spec, 64, 11);
    CHECK(report.R_estimate == 0.0);
    CHECK(report.ok());
}

TEST_CASE("validate_problem flags an understated Lipschitz constant") {
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.B = [](double, const double* x, const double*, double* o) { o[0] = 2.0 * x[0]; };
    spec.lipschitz_L = 1.0;
    const ValidationReport report = validate_problem(spec, 512, 23);
    CHECK_FALSE(report.ok());
    bool found = false;
    for (const auto& probe : report.lipschitz)
        if (probe.coefficient == "B") {
            found = true;
            CHECK(probe.violated);
            CHECK(probe.max_ratio == doctest::Approx(2.0).epsilon(1e-6));
        }
    CHECK(found);
}

TEST_CASE("validate_problem: declared L bounds honest empirical ratios") {
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.B = [](double, const double* x, const double* eta, double* o) {
        o[0] = 0.5 * x[0] - 0.25 * eta[0];
    };
    spec.G = [](double, const double* xi, const double*, const double* x, double* o) {
        o[0] = 0.75 * x[0] + 0.25 * xi[0];
    };
    spec.lipschitz_L = 0.75;
    const ValidationReport report = validate_problem(spec, 512, 5);
    CHECK(report.ok());
    for (const auto& probe : report.lipschitz)
        CHECK(probe.max_ratio <= spec.lipschitz_L * (1.0 + 1e-9));
}

TEST_CASE("validate_problem: linear-in-t driver with linear modulus stays below one") {
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.F = [](double t, double, const double*, const double*, const double*, const double*,
                const double*, const double*, double* o) { o[0] = t; };
    spec.rho = [](double u) { return u; };
    const ValidationReport report = validate_problem(spec, 512, 29);
    CHECK(report.max_modulus_ratio <= 1.0 + 1e-9);
    CHECK_FALSE(report.modulus_violated);
}

TEST_CASE("validate_problem flags a rho that is not zero at the origin") {
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.rho = [](double) { return 0.5; };
    const ValidationReport report = validate_problem(spec, 64, 3);
    CHECK_FALSE(report.rho_zero_at_origin);
    CHECK_FALSE(report.ok());
}

TEST_CASE("validate_problem reports the offending callable on non-finite output") {
    ProblemSpec spec = build_zero_problem(1, 1, 1, 1.0, {0.0});
    spec.Sigma = [](double, const double*, const double*, double* o) {
        o[0] = std::numeric_limits<double>::quiet_NaN();
    };
    try {
        validate_problem(spec, 64, 3);
        FAIL("expected CoefficientEvaluationError");
    } catch (const CoefficientEvaluationError& e) {
        CHECK(std::string(e.what()).find("Sigma") != std::string::npos);
    }
}
