#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "ffbsde/paths.hpp"

namespace ffbsde {

/// All monomials of total degree <= degree in the n state coordinates.
struct RegressionBasis {
    int degree = 1;
    int state_dim = 1;
    std::vector<std::vector<int>> exponents;  // one exponent vector per basis function

    static RegressionBasis polynomial(int state_dim, int degree);
    int size() const { return static_cast<int>(exponents.size()); }
    void eval(const double* x, double* out) const;
};

struct FitOptions {
    int degree = 2;
    double ridge = 0.0;  // 0 = plain minimum-norm least squares
};

/// Least-squares surrogate of a conditional expectation given the state at
/// one grid node: coefficients of the basis expansion, one column per target
/// component.
struct CondExpModel {
    RegressionBasis basis;
    int at_node = 0;
    Eigen::MatrixXd coefficients;  // basis size x q
};

/// Regression of `targets` (paths x q) on the polynomial basis of the state
/// at `at_node`, solved by a rank-revealing orthogonal decomposition;
/// rank deficiency resolves to the minimum-norm solution.
CondExpModel fit_conditional(const PathEnsemble& ensemble, int at_node,
                             const Eigen::Ref<const RowMat>& targets, const FitOptions& opts = {});

/// Basis expansion times coefficients, one row per state row.
RowMat evaluate(const CondExpModel& model, const Eigen::Ref<const RowMat>& states);

/// |mean(fitted values on training states) - mean(targets)|; zero to solver
/// tolerance whenever the constant function is in the basis.
double tower_check(const CondExpModel& model, const PathEnsemble& ensemble,
                   const Eigen::Ref<const RowMat>& targets);

/// Reusable factorization of the design matrix at one node. Built once,
/// then applied to many target blocks; immutable after build, shareable
/// across threads.
class NodeRegressor {
public:
    NodeRegressor() = default;
    NodeRegressor(const PathEnsemble& ensemble, int at_node, const FitOptions& opts);

    /// Least-squares coefficients for a (paths x q) target block.
    Eigen::MatrixXd solve(const Eigen::Ref<const RowMat>& targets) const;
    /// Fitted values at the training states: design * coefficients.
    RowMat predict(const Eigen::Ref<const Eigen::MatrixXd>& coefficients) const;
    /// solve + predict in one call.
    RowMat fit_values(const Eigen::Ref<const RowMat>& targets) const;

    const RegressionBasis& basis() const { return basis_; }
    int at_node() const { return at_node_; }
    const RowMat& design() const { return design_; }

private:
    RegressionBasis basis_;
    int at_node_ = 0;
    double ridge_ = 0.0;
    RowMat design_;  // paths x basis size
    std::shared_ptr<Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd>> cod_;
    std::shared_ptr<Eigen::LDLT<Eigen::MatrixXd>> ridge_ldlt_;  // only when ridge > 0
};

}  // namespace ffbsde
