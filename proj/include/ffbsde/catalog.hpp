#pragma once

#include <vector>

#include "ffbsde/model.hpp"
#include "ffbsde/oracle.hpp"

namespace ffbsde {

/// All coefficients identically zero; rho == 0.
ProblemSpec build_zero_problem(int n, int m, int d, double T, std::vector<double> x0);

/// F == 0 and G == g (a constant vector); rho == 0.
ProblemSpec build_constant_terminal_problem(int n, int m, int d, double T, std::vector<double> x0,
                                            std::vector<double> g);

}  // namespace ffbsde
