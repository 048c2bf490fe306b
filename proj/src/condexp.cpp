#include "ffbsde/condexp.hpp"

#include <cmath>
#include <stdexcept>

namespace ffbsde {

namespace {

void enumerate_monomials(int state_dim, int degree_left, int coord, std::vector<int>& current,
                         std::vector<std::vector<int>>& out) {
    if (coord == state_dim) {
        out.push_back(current);
        return;
    }
    for (int e = 0; e <= degree_left; ++e) {
        current[static_cast<std::size_t>(coord)] = e;
        enumerate_monomials(state_dim, degree_left - e, coord + 1, current, out);
    }
    current[static_cast<std::size_t>(coord)] = 0;
}

}  // namespace

RegressionBasis RegressionBasis::polynomial(int state_dim, int degree) {
    if (degree < 0) throw std::invalid_argument("RegressionBasis: degree must be >= 0");
    if (state_dim < 1) throw std::invalid_argument("RegressionBasis: state_dim must be >= 1");
    RegressionBasis basis;
    basis.degree = degree;
    basis.state_dim = state_dim;
    std::vector<int> current(static_cast<std::size_t>(state_dim), 0);
    enumerate_monomials(state_dim, degree, 0, current, basis.exponents);
    return basis;
}

void RegressionBasis::eval(const double* x, double* out) const {
    for (std::size_t b = 0; b < exponents.size(); ++b) {
        double v = 1.0;
        for (int c = 0; c < state_dim; ++c) {
            const int e = exponents[b][static_cast<std::size_t>(c)];
            for (int k = 0; k < e; ++k) v *= x[c];
        }
        out[b] = v;
    }
}

NodeRegressor::NodeRegressor(const PathEnsemble& ensemble, int at_node, const FitOptions& opts)
    : basis_(RegressionBasis::polynomial(ensemble.n, opts.degree)),
      at_node_(at_node),
      ridge_(opts.ridge) {
    if (at_node < 0 || at_node >= ensemble.grid.nodes())
        throw std::invalid_argument("NodeRegressor: node index out of range");
    if (ensemble.paths < 1) throw std::invalid_argument("NodeRegressor: empty ensemble");

    const int paths = ensemble.paths;
    const int b = basis_.size();
    design_.resize(paths, b);
    const ConstMatMap states = ensemble.state(at_node);
    for (int p = 0; p < paths; ++p) basis_.eval(states.row(p).data(), design_.row(p).data());

    if (ridge_ > 0.0) {
        Eigen::MatrixXd gram = design_.transpose() * design_;
        gram.diagonal().array() += ridge_;
        ridge_ldlt_ = std::make_shared<Eigen::LDLT<Eigen::MatrixXd>>(gram);
    } else {
        cod_ = std::make_shared<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>>();
        // Rank cutoff well above the O(sqrt(paths) * eps) noise in the R
        // factor: a numerically dependent column must fall to the
        // minimum-norm branch, not get inverted.
        cod_->setThreshold(1e-9);
        cod_->compute(design_);
    }
}

Eigen::MatrixXd NodeRegressor::solve(const Eigen::Ref<const RowMat>& targets) const {
    if (targets.rows() != design_.rows())
        throw std::invalid_argument("NodeRegressor: target row count must equal path count");
    if (!targets.allFinite()) throw std::invalid_argument("NodeRegressor: non-finite targets");
    if (ridge_ > 0.0) return ridge_ldlt_->solve(design_.transpose() * targets);
    return cod_->solve(targets);
}

RowMat NodeRegressor::predict(const Eigen::Ref<const Eigen::MatrixXd>& coefficients) const {
    return design_ * coefficients;
}

RowMat NodeRegressor::fit_values(const Eigen::Ref<const RowMat>& targets) const {
    return predict(solve(targets));
}

CondExpModel fit_conditional(const PathEnsemble& ensemble, int at_node,
                             const Eigen::Ref<const RowMat>& targets, const FitOptions& opts) {
    NodeRegressor reg(ensemble, at_node, opts);
    CondExpModel model;
    model.basis = reg.basis();
    model.at_node = at_node;
    model.coefficients = reg.solve(targets);
    return model;
}

RowMat evaluate(const CondExpModel& model, const Eigen::Ref<const RowMat>& states) {
    if (states.cols() != model.basis.state_dim)
        throw std::invalid_argument("evaluate: state dimension mismatch");
    const int rows = static_cast<int>(states.rows());
    RowMat design(rows, model.basis.size());
    for (int p = 0; p < rows; ++p) model.basis.eval(states.row(p).data(), design.row(p).data());
    return design * model.coefficients;
}

double tower_check(const CondExpModel& model, const PathEnsemble& ensemble,
                   const Eigen::Ref<const RowMat>& targets) {
    const RowMat fitted = evaluate(model, ensemble.state(model.at_node));
    const Eigen::VectorXd mean_fit = fitted.colwise().mean();
    const Eigen::VectorXd mean_tgt = targets.colwise().mean();
    return (mean_fit - mean_tgt).cwiseAbs().maxCoeff();
}

}  // namespace ffbsde
