#include "ffbsde/catalog.hpp"

#include <stdexcept>

namespace ffbsde {

ProblemSpec build_zero_problem(int n, int m, int d, double T, std::vector<double> x0) {
    ProblemSpec spec;
    spec.n = n;
    spec.m = m;
    spec.d = d;
    spec.T = T;
    spec.x0 = std::move(x0);
    spec.B = [n](double, const double*, const double*, double* o) {
        for (int c = 0; c < n; ++c) o[c] = 0.0;
    };
    spec.Sigma = [n, d](double, const double*, const double*, double* o) {
        for (int c = 0; c < n * d; ++c) o[c] = 0.0;
    };
    spec.F = [m](double, double, const double*, const double*, const double*, const double*,
                 const double*, const double*, double* o) {
        for (int c = 0; c < m; ++c) o[c] = 0.0;
    };
    spec.G = [m](double, const double*, const double*, const double*, double* o) {
        for (int c = 0; c < m; ++c) o[c] = 0.0;
    };
    spec.lipschitz_L = 1e-12;
    spec.rho = [](double) { return 0.0; };
    spec.depends_on_anchor = false;
    spec.markovian = true;
    check_spec(spec);
    return spec;
}

ProblemSpec build_constant_terminal_problem(int n, int m, int d, double T, std::vector<double> x0,
                                            std::vector<double> g) {
    if (static_cast<int>(g.size()) != m)
        throw std::invalid_argument("build_constant_terminal_problem: g must have length m");
    ProblemSpec spec = build_zero_problem(n, m, d, T, std::move(x0));
    const std::vector<double> gval = std::move(g);
    spec.G = [gval, m](double, const double*, const double*, const double*, double* o) {
        for (int c = 0; c < m; ++c) o[c] = gval[static_cast<std::size_t>(c)];
    };
    return spec;
}

}  // namespace ffbsde
