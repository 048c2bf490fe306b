#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ffbsde/flow.hpp"
#include "ffbsde/model.hpp"
#include "ffbsde/oracle.hpp"

namespace ffbsde {

using Json = nlohmann::json;

/// Full run description. Parsing rejects unknown keys; serialization writes
/// every key with its resolved default, so parse(serialize(c)) == c.
struct RunConfig {
    // problem
    std::string coefficient_family = "zero";  // zero|constant_terminal|affine|lq_control
    Json family_params = Json::object();
    int n = 1, m = 1, d = 1;
    double T = 1.0;
    std::vector<double> x0 = {0.0};
    double lipschitz_L = 1.0;
    std::string rho_kind = "linear";  // linear|power
    double rho_coeff = 0.0;
    double rho_power = 1.0;
    bool markovian = true;

    // grid / partition
    int grid_steps = 64;
    int partition_intervals = 0;          // 0 -> full grid
    std::vector<int> partition_list;      // for the convergence study

    // solver
    int paths = 4096;
    std::uint64_t seed = 1;
    double tol = 1e-5;
    int max_iter = 40;
    int basis_degree = 1;
    double ridge = 0.0;
    int workers = 0;  // 0 -> hardware concurrency
    bool keep_field = false;
    bool dump_paths = false;
    bool export_full = false;  // per-path CSV export of diagonal and states

    // study knobs
    std::vector<double> horizons = {0.125, 0.25, 0.5};    // contraction
    std::vector<double> scales = {0.01, 0.02};            // stability
    std::vector<double> eps_list = {0.04, 0.02, 0.01};    // spike variation
    double spike_time = 0.1;
    std::vector<double> spike_values = {-0.5, 0.0, 0.5};
    double oracle_rel_tol = 0.05;
    int oracle_fine_steps = 512;
    int probe_count = 256;
    std::vector<double> slope_range = {0.7, 1.3};
    std::vector<double> stability_ratio_range = {1.6, 2.4};
    double contraction_max_ratio = 0.9;

    std::string output_dir = "out";

    static RunConfig parse(const Json& j);
    static RunConfig load(const std::string& path);
    Json to_json() const;

    /// Instantiates the coefficient family; throws on inconsistent settings.
    ProblemSpec build_problem() const;
    /// Family views used by the oracle subcommands.
    AffineProblemSpec build_affine() const;  // requires coefficient_family == "affine"
    LqParams build_lq() const;               // requires coefficient_family == "lq_control"

    SolverOptions solver_options() const;
    RhoFn build_rho() const;
};

/// Applies a dotted override "--section.key=value" to the JSON document.
void apply_override(Json& j, const std::string& assignment);

}  // namespace ffbsde
