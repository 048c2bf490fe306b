#include "ffbsde/bsde.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ffbsde/errors.hpp"
#include "ffbsde/parallel.hpp"

namespace ffbsde {

RegressionCache::RegressionCache(const PathEnsemble& ensemble, const FitOptions& opts, int workers) {
    const int nodes = ensemble.grid.nodes();
    regressors_.resize(static_cast<std::size_t>(nodes));
    parallel_for(0, nodes, workers, [&](int j) {
        regressors_[static_cast<std::size_t>(j)] = NodeRegressor(ensemble, j, opts);
    });
}

void sweep_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble, const DiagonalProcess& diag,
                int anchor_node, const RegressionCache& cache, const SweepObserver& observer) {
    const int J = ensemble.grid.steps();
    if (anchor_node < 0 || anchor_node > J)
        throw std::invalid_argument("sweep_bsde: anchor node out of range");
    if (ensemble.grid.times != diag.grid.times)
        throw std::invalid_argument("sweep_bsde: ensemble and diagonal grids differ");
    if (ensemble.paths != diag.paths)
        throw std::invalid_argument("sweep_bsde: ensemble and diagonal path counts differ");
    if (diag.m != spec.m || ensemble.n != spec.n)
        throw std::invalid_argument("sweep_bsde: dimension mismatch with spec");

    const int paths = ensemble.paths;
    const int n = spec.n, m = spec.m, d = spec.d;
    const double t_anchor = ensemble.grid.times[static_cast<std::size_t>(anchor_node)];
    const ConstMatMap x_anchor = ensemble.state(anchor_node);
    const bool anchored = spec.depends_on_anchor;

    // Anchor surrogate for the terminal: E_hat_{t_k}[X_T] evaluated at X_k.
    RowMat xbar(paths, n);
    if (anchored) {
        xbar = cache.at(anchor_node).fit_values(ensemble.state(J));
    } else {
        xbar.setZero();
    }

    RowMat y_next(paths, m);
    {
        const ConstMatMap x_T = ensemble.state(J);
        for (int p = 0; p < paths; ++p)
            spec.G(t_anchor, x_anchor.row(p).data(), xbar.row(p).data(), x_T.row(p).data(),
                   y_next.row(p).data());
        if (!y_next.allFinite()) {
            std::ostringstream msg;
            msg << "sweep_bsde: non-finite terminal value at node " << J;
            throw BlowUpError(msg.str());
        }
        RowMat z_terminal = RowMat::Zero(paths, m * d);
        observer(J, y_next, z_terminal);
    }

    RowMat targets(paths, m + m * d);
    RowMat y_cur(paths, m);
    std::vector<double> f_buf(static_cast<std::size_t>(m));

    for (int j = J - 1; j >= anchor_node; --j) {
        const double t_j = ensemble.grid.times[static_cast<std::size_t>(j)];
        const double dt = ensemble.grid.dt(j);
        const ConstMatMap dW = ensemble.bundle.dW(j);
        const ConstMatMap x_j = ensemble.state(j);
        const ConstMatMap eta_j = diag.at(j);

        // One regression solve per node: targets [Y_{j+1} | Y_{j+1} dW^T].
        targets.leftCols(m) = y_next;
        for (int p = 0; p < paths; ++p) {
            const double* yrow = y_next.row(p).data();
            const double* wrow = dW.row(p).data();
            double* out = targets.row(p).data() + m;
            for (int a = 0; a < m; ++a)
                for (int b = 0; b < d; ++b) out[a * d + b] = yrow[a] * wrow[b];
        }
        const RowMat fitted = cache.at(j).fit_values(targets);

        if (anchored) xbar = cache.at(anchor_node).fit_values(x_j);

        for (int p = 0; p < paths; ++p) {
            const double* y_hat = fitted.row(p).data();
            double* z_row = targets.row(p).data() + m;  // reuse as Z storage
            for (int c = 0; c < m * d; ++c) z_row[c] = y_hat[m + c] / dt;
            spec.F(t_anchor, t_j, x_anchor.row(p).data(), xbar.row(p).data(), x_j.row(p).data(),
                   eta_j.row(p).data(), y_hat, z_row, f_buf.data());
            double* y_out = y_cur.row(p).data();
            for (int c = 0; c < m; ++c) y_out[c] = y_hat[c] + f_buf[static_cast<std::size_t>(c)] * dt;
        }
        if (!y_cur.allFinite()) {
            std::ostringstream msg;
            msg << "sweep_bsde: non-finite Y at node " << j << " (anchor " << anchor_node << ")";
            throw BlowUpError(msg.str());
        }
        observer(j, y_cur, targets.rightCols(m * d));
        y_next.swap(y_cur);
    }
}

namespace {

BsdeSlice collect_slice(const ProblemSpec& spec, const PathEnsemble& ensemble,
                        const DiagonalProcess& diag, int anchor_node, const RegressionCache& cache) {
    BsdeSlice slice;
    slice.anchor_node = anchor_node;
    slice.paths = ensemble.paths;
    slice.m = spec.m;
    slice.d = spec.d;
    slice.nodes = ensemble.grid.steps() - anchor_node + 1;
    slice.y.resize(static_cast<std::size_t>(slice.nodes) * slice.paths * slice.m);
    slice.z.resize(static_cast<std::size_t>(slice.nodes) * slice.paths * slice.m * slice.d);
    sweep_bsde(spec, ensemble, diag, anchor_node, cache,
               [&](int node, const RowMat& y, const RowMat& z) {
                   slice.y_at(node) = y;
                   slice.z_at(node) = z;
               });
    return slice;
}

}  // namespace

BsdeSlice solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble,
                     const DiagonalProcess& diag, int anchor_node, const FitOptions& opts) {
    RegressionCache cache(ensemble, opts, 1);
    return collect_slice(spec, ensemble, diag, anchor_node, cache);
}

BsdeSlice solve_bsde(const ProblemSpec& spec, const PathEnsemble& ensemble,
                     const DiagonalProcess& diag, int anchor_node, const RegressionCache& cache) {
    return collect_slice(spec, ensemble, diag, anchor_node, cache);
}

}  // namespace ffbsde
