#pragma once

#include <functional>
#include <vector>

#include "ffbsde/condexp.hpp"
#include "ffbsde/model.hpp"
#include "ffbsde/paths.hpp"

namespace ffbsde {

/// One member of the BSDE family: (Y, Z) on grid nodes >= anchor_node.
/// Y layout [node - anchor][path][m]; Z layout [node - anchor][path][m*d]
/// with the terminal Z row zero.
struct BsdeSlice {
    int anchor_node = 0;
    int paths = 0;
    int m = 1;
    int d = 1;
    int nodes = 0;  // grid nodes covered, J - anchor_node + 1
    std::vector<double> y;
    std::vector<double> z;

    MatMap y_at(int node) {
        return MatMap(y.data() + static_cast<std::size_t>(node - anchor_node) * paths * m, paths, m);
    }
    ConstMatMap y_at(int node) const {
        return ConstMatMap(y.data() + static_cast<std::size_t>(node - anchor_node) * paths * m, paths,
                           m);
    }
    MatMap z_at(int node) {
        return MatMap(z.data() + static_cast<std::size_t>(node - anchor_node) * paths * m * d, paths,
                      m * d);
    }
    ConstMatMap z_at(int node) const {
        return ConstMatMap(z.data() + static_cast<std::size_t>(node - anchor_node) * paths * m * d,
                           paths, m * d);
    }
};

/// Design-matrix factorizations for every grid node, built once per ensemble
/// and shared by all anchor sweeps. Immutable after construction.
class RegressionCache {
public:
    RegressionCache(const PathEnsemble& ensemble, const FitOptions& opts, int workers = 1);
    const NodeRegressor& at(int node) const { return regressors_[static_cast<std::size_t>(node)]; }

private:
    std::vector<NodeRegressor> regressors_;
};

/// Called at each node of the backward sweep, from the terminal node down to
/// the anchor, with the current Y (paths x m) and Z (paths x m*d) blocks.
using SweepObserver = std::function<void(int node, const RowMat& y, const RowMat& z)>;

/// Backward recursion for the BSDE anchored at grid node k:
///   Z_j = E_hat_{t_j}[ Y_{j+1} dW_j^T ] / dt_j,
///   Y_j = E_hat_{t_j}[ Y_{j+1} ] + F(t_k, t_j, X_k, E_hat_{t_k}[X_j], X_j,
///                                    diag_j, E_hat_{t_j}[Y_{j+1}], Z_j) dt_j,
/// with terminal Y_J = G(t_k, X_k, E_hat_{t_k}[X_T], X_T) pathwise. Anchor
/// surrogates are fitted at node k once per (k, j) pair; they are skipped
/// (zero-filled arguments) when the spec declares depends_on_anchor false.
void sweep_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble, const DiagonalProcess& diag,
                int anchor_node, const RegressionCache& cache, const SweepObserver& observer);

/// Full-slice form of the sweep.
BsdeSlice solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble,
                     const DiagonalProcess& diag, int anchor_node, const FitOptions& opts = {});

/// Variant reusing a prebuilt cache (for many anchors on one ensemble).
BsdeSlice solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble,
                     const DiagonalProcess& diag, int anchor_node, const RegressionCache& cache);

}  // namespace ffbsde
