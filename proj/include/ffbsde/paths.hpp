#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ffbsde/model.hpp"

namespace ffbsde {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

/// Gaussian increments with variance dt per step, stored so every downstream
/// solve reuses identical noise. Layout: [step][path][d].
struct BrownianBundle {
    TimeGrid grid;
    int paths = 0;
    int d = 1;
    std::uint64_t seed = 0;
    std::vector<double> increments;

    ConstMatMap dW(int step) const {
        return ConstMatMap(increments.data() + static_cast<std::size_t>(step) * paths * d, paths, d);
    }
};

/// Deterministic function of (grid, paths, d, seed): identical inputs give
/// bit-identical output.
BrownianBundle sample_brownian(const TimeGrid& grid, int paths, int d, std::uint64_t seed);

/// The feedback process sampled on grid nodes. Layout: [node][path][m].
struct DiagonalProcess {
    TimeGrid grid;
    int paths = 0;
    int m = 1;
    std::vector<double> values;

    static DiagonalProcess zeros(const TimeGrid& grid, int paths, int m);

    MatMap at(int node) {
        return MatMap(values.data() + static_cast<std::size_t>(node) * paths * m, paths, m);
    }
    ConstMatMap at(int node) const {
        return ConstMatMap(values.data() + static_cast<std::size_t>(node) * paths * m, paths, m);
    }
};

/// Forward state paths on the grid. Layout: [node][path][n].
struct PathEnsemble {
    TimeGrid grid;
    int paths = 0;
    int n = 1;
    BrownianBundle bundle;
    std::vector<double> states;

    MatMap state(int node) {
        return MatMap(states.data() + static_cast<std::size_t>(node) * paths * n, paths, n);
    }
    ConstMatMap state(int node) const {
        return ConstMatMap(states.data() + static_cast<std::size_t>(node) * paths * n, paths, n);
    }
};

/// Euler-Maruyama step with the diagonal entering at the left endpoint:
///   X_{j+1} = X_j + B(t_j, X_j, Y_j) dt_j + Sigma(t_j, X_j, Y_j) dW_j.
/// Pure function of its arguments; path blocks may be processed concurrently.
PathEnsemble simulate_forward(const ProblemSpec& spec, const DiagonalProcess& diag,
                              const BrownianBundle& bundle, int workers = 1);

/// Debug dump, little-endian: header {paths, J+1, n} as three uint64, then
/// row-major doubles ordered [path][node][component]. Not a stability
/// guarantee.
void write_path_dump(const PathEnsemble& ensemble, const std::string& path);

}  // namespace ffbsde
