#pragma once

#include <string>
#include <utility>
#include <vector>

#include "ffbsde/experiments.hpp"
#include "ffbsde/flow.hpp"

namespace ffbsde {

/// %.17g rendering; round-trips doubles exactly, so identical runs produce
/// byte-identical files.
std::string format_double(double v);

using SummaryEntries = std::vector<std::pair<std::string, std::string>>;

/// Flat key=value lines in the given order. A `generated_at` key, when
/// present, is the single entry excluded from determinism comparisons.
void write_summary(const std::string& path, const SummaryEntries& entries);

// CSV schemas (exact headers):
//   convergence: mesh,N,err_X,err_diag,paths,seed
//   contraction: T,ratio_mean,iters,converged
//   stability:   scale,distance,ratio
void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows);
void write_contraction_csv(const std::string& path, const std::vector<ContractionRow>& rows);
void write_stability_csv(const std::string& path, const std::vector<StabilityRow>& rows);

/// Solution exports: per-node cross-path mean by default
/// (node,time,component,value); per-path when with_paths is set
/// (path,node,time,component,value).
void write_diagonal_csv(const std::string& path, const DiagonalProcess& diag, bool with_paths);
void write_ensemble_csv(const std::string& path, const PathEnsemble& ensemble, bool with_paths);

/// Picard iterations: iteration,increment,noise_floor,ratio (ratio empty
/// until computable).
void write_report_csv(const std::string& path, const PicardReport& report);

struct OracleCompareRow {
    int node = 0;
    double time = 0.0;
    double err_l2 = 0.0;   // cross-path L2 of (numeric - oracle)
    double ref_l2 = 0.0;   // cross-path L2 of the oracle diagonal
    double rel_err = 0.0;  // err_l2 / max(ref_l2, floor)
};
void write_oracle_compare_csv(const std::string& path, const std::vector<OracleCompareRow>& rows);

}  // namespace ffbsde
