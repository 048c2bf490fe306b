#include "ffbsde/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ffbsde/catalog.hpp"

namespace ffbsde {

namespace {

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw std::invalid_argument("config error at " + where + ": " + what);
}

/// Section reader that consumes known keys and rejects leftovers.
class Section {
public:
    Section(Json j, std::string path) : j_(std::move(j)), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_, "expected an object");
    }

    template <typename T>
    T take(const char* key, T fallback) {
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        T value;
        try {
            value = it->get<T>();
        } catch (const Json::exception& e) {
            fail(path_ + "." + key, e.what());
        }
        j_.erase(it);
        return value;
    }

    Json take_raw(const char* key, Json fallback) {
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        Json value = *it;
        j_.erase(it);
        return value;
    }

    void finish() const {
        if (!j_.empty()) fail(path_ + "." + j_.begin().key(), "unknown key");
    }

private:
    Json j_;
    std::string path_;
};

Json normalize_family_params(const std::string& family, const Json& params) {
    Section sec(params.is_null() ? Json::object() : params, "problem.family_params");
    Json out = Json::object();
    if (family == "zero") {
        // no parameters
    } else if (family == "constant_terminal") {
        out["g"] = sec.take<std::vector<double>>("g", {0.0});
    } else if (family == "affine") {
        for (const char* key : {"b", "b_eta", "sigma", "f1", "f2", "f3", "f4_0", "f4_slope", "g1",
                                "g2", "g3", "g4_0", "g4_slope"})
            out[key] = sec.take<double>(key, 0.0);
    } else if (family == "lq_control") {
        out["lambda"] = sec.take<double>("lambda", 0.0);
        out["control_weight"] = sec.take<double>("control_weight", 1.0);
        out["state_weight"] = sec.take<double>("state_weight", 0.0);
        out["terminal_weight"] = sec.take<double>("terminal_weight", 0.0);
        out["mean_weight"] = sec.take<double>("mean_weight", 0.0);
        out["drift_x"] = sec.take<double>("drift_x", 0.0);
        out["drift_u"] = sec.take<double>("drift_u", 1.0);
        out["sigma0"] = sec.take<double>("sigma0", 0.0);
        out["sigma_x"] = sec.take<double>("sigma_x", 0.0);
    } else {
        fail("problem.coefficient_family", "unknown family '" + family + "'");
    }
    sec.finish();
    return out;
}

}  // namespace

RunConfig RunConfig::parse(const Json& root) {
    if (!root.is_object()) fail("<root>", "expected an object");
    Section top(root, "<root>");
    RunConfig cfg;

    {
        Section problem(top.take_raw("problem", Json::object()), "problem");
        cfg.coefficient_family = problem.take<std::string>("coefficient_family", cfg.coefficient_family);
        cfg.family_params = normalize_family_params(
            cfg.coefficient_family, problem.take_raw("family_params", Json::object()));
        cfg.n = problem.take<int>("n", cfg.n);
        cfg.m = problem.take<int>("m", cfg.m);
        cfg.d = problem.take<int>("d", cfg.d);
        cfg.T = problem.take<double>("T", cfg.T);
        cfg.x0 = problem.take<std::vector<double>>("x0", cfg.x0);
        cfg.lipschitz_L = problem.take<double>("lipschitz_L", cfg.lipschitz_L);
        cfg.rho_kind = problem.take<std::string>("rho_kind", cfg.rho_kind);
        cfg.rho_coeff = problem.take<double>("rho_coeff", cfg.rho_coeff);
        cfg.rho_power = problem.take<double>("rho_power", cfg.rho_power);
        cfg.markovian = problem.take<bool>("markovian", cfg.markovian);
        problem.finish();
        if (cfg.rho_kind == "custom")
            fail("problem.rho_kind",
                 "custom moduli are registered in code, not expressible in a config file");
        if (cfg.rho_kind != "linear" && cfg.rho_kind != "power")
            fail("problem.rho_kind", "must be 'linear' or 'power'");
    }
    {
        Section grid(top.take_raw("grid", Json::object()), "grid");
        cfg.grid_steps = grid.take<int>("J", cfg.grid_steps);
        grid.finish();
    }
    {
        Section part(top.take_raw("partition", Json::object()), "partition");
        cfg.partition_intervals = part.take<int>("N", cfg.partition_intervals);
        cfg.partition_list = part.take<std::vector<int>>("list", cfg.partition_list);
        part.finish();
    }
    {
        Section solver(top.take_raw("solver", Json::object()), "solver");
        cfg.paths = solver.take<int>("paths", cfg.paths);
        cfg.seed = solver.take<std::uint64_t>("seed", cfg.seed);
        cfg.tol = solver.take<double>("tol", cfg.tol);
        cfg.max_iter = solver.take<int>("max_iter", cfg.max_iter);
        cfg.basis_degree = solver.take<int>("basis_degree", cfg.basis_degree);
        cfg.ridge = solver.take<double>("ridge", cfg.ridge);
        cfg.workers = solver.take<int>("workers", cfg.workers);
        cfg.keep_field = solver.take<bool>("keep_field", cfg.keep_field);
        cfg.dump_paths = solver.take<bool>("dump_paths", cfg.dump_paths);
        cfg.export_full = solver.take<bool>("export_full", cfg.export_full);
        solver.finish();
    }
    {
        Section study(top.take_raw("study", Json::object()), "study");
        cfg.horizons = study.take<std::vector<double>>("horizons", cfg.horizons);
        cfg.scales = study.take<std::vector<double>>("scales", cfg.scales);
        cfg.eps_list = study.take<std::vector<double>>("eps_list", cfg.eps_list);
        cfg.spike_time = study.take<double>("spike_time", cfg.spike_time);
        cfg.spike_values = study.take<std::vector<double>>("spike_values", cfg.spike_values);
        cfg.oracle_rel_tol = study.take<double>("oracle_rel_tol", cfg.oracle_rel_tol);
        cfg.oracle_fine_steps = study.take<int>("oracle_fine_steps", cfg.oracle_fine_steps);
        cfg.probe_count = study.take<int>("probe_count", cfg.probe_count);
        cfg.slope_range = study.take<std::vector<double>>("slope_range", cfg.slope_range);
        cfg.stability_ratio_range =
            study.take<std::vector<double>>("stability_ratio_range", cfg.stability_ratio_range);
        cfg.contraction_max_ratio = study.take<double>("contraction_max_ratio", cfg.contraction_max_ratio);
        study.finish();
    }
    cfg.output_dir = top.take<std::string>("output_dir", cfg.output_dir);
    top.finish();
    return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config error at <file>: cannot open " + path);
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::exception& e) {
        throw std::invalid_argument(std::string("config error at <file> ") + path + ": " + e.what());
    }
    return parse(j);
}

Json RunConfig::to_json() const {
    Json j;
    j["problem"] = {{"coefficient_family", coefficient_family},
                    {"family_params", family_params},
                    {"n", n},
                    {"m", m},
                    {"d", d},
                    {"T", T},
                    {"x0", x0},
                    {"lipschitz_L", lipschitz_L},
                    {"rho_kind", rho_kind},
                    {"rho_coeff", rho_coeff},
                    {"rho_power", rho_power},
                    {"markovian", markovian}};
    j["grid"] = {{"J", grid_steps}};
    j["partition"] = {{"N", partition_intervals}, {"list", partition_list}};
    j["solver"] = {{"paths", paths},
                   {"seed", seed},
                   {"tol", tol},
                   {"max_iter", max_iter},
                   {"basis_degree", basis_degree},
                   {"ridge", ridge},
                   {"workers", workers},
                   {"keep_field", keep_field},
                   {"dump_paths", dump_paths},
                   {"export_full", export_full}};
    j["study"] = {{"horizons", horizons},
                  {"scales", scales},
                  {"eps_list", eps_list},
                  {"spike_time", spike_time},
                  {"spike_values", spike_values},
                  {"oracle_rel_tol", oracle_rel_tol},
                  {"oracle_fine_steps", oracle_fine_steps},
                  {"probe_count", probe_count},
                  {"slope_range", slope_range},
                  {"stability_ratio_range", stability_ratio_range},
                  {"contraction_max_ratio", contraction_max_ratio}};
    j["output_dir"] = output_dir;
    return j;
}

RhoFn RunConfig::build_rho() const {
    const double coeff = rho_coeff;
    if (rho_kind == "linear") return [coeff](double u) { return coeff * u; };
    const double power = rho_power;
    if (!(power > 0.0)) fail("problem.rho_power", "must be positive");
    return [coeff, power](double u) { return coeff * std::pow(u, power); };
}

AffineProblemSpec RunConfig::build_affine() const {
    if (coefficient_family != "affine")
        fail("problem.coefficient_family", "subcommand requires the affine family");
    const Json& p = family_params;
    AffineProblemSpec a;
    a.b = p.at("b").get<double>();
    a.b_eta = p.at("b_eta").get<double>();
    a.sigma = p.at("sigma").get<double>();
    a.f1 = p.at("f1").get<double>();
    a.f2 = p.at("f2").get<double>();
    a.f3 = p.at("f3").get<double>();
    a.g1 = p.at("g1").get<double>();
    a.g2 = p.at("g2").get<double>();
    a.g3 = p.at("g3").get<double>();
    const double f4_0 = p.at("f4_0").get<double>(), f4_slope = p.at("f4_slope").get<double>();
    const double g4_0 = p.at("g4_0").get<double>(), g4_slope = p.at("g4_slope").get<double>();
    a.f4 = [f4_0, f4_slope](double t) { return f4_0 + f4_slope * t; };
    a.g4 = [g4_0, g4_slope](double t) { return g4_0 + g4_slope * t; };
    a.f4_lip = std::abs(f4_slope);
    a.g4_lip = std::abs(g4_slope);
    a.T = T;
    if (x0.size() != 1) fail("problem.x0", "affine family is scalar");
    a.x0 = x0[0];
    return a;
}

LqParams RunConfig::build_lq() const {
    if (coefficient_family != "lq_control")
        fail("problem.coefficient_family", "subcommand requires the lq_control family");
    const Json& p = family_params;
    LqParams lq;
    lq.lambda = p.at("lambda").get<double>();
    lq.control_weight = p.at("control_weight").get<double>();
    lq.state_weight = p.at("state_weight").get<double>();
    lq.terminal_weight = p.at("terminal_weight").get<double>();
    lq.mean_weight = p.at("mean_weight").get<double>();
    lq.drift_x = p.at("drift_x").get<double>();
    lq.drift_u = p.at("drift_u").get<double>();
    lq.sigma0 = p.at("sigma0").get<double>();
    lq.sigma_x = p.at("sigma_x").get<double>();
    lq.T = T;
    if (x0.size() != 1) fail("problem.x0", "lq_control family is scalar");
    lq.x0 = x0[0];
    return lq;
}

ProblemSpec RunConfig::build_problem() const {
    if (!markovian) fail("problem.markovian", "must be true for the regression scheme");
    ProblemSpec spec;
    if (coefficient_family == "zero") {
        spec = build_zero_problem(n, m, d, T, x0);
    } else if (coefficient_family == "constant_terminal") {
        spec = build_constant_terminal_problem(n, m, d, T, x0,
                                               family_params.at("g").get<std::vector<double>>());
    } else if (coefficient_family == "affine") {
        if (n != 1 || m != 1 || d != 1) fail("problem", "affine family requires n = m = d = 1");
        spec = build_affine().to_problem_spec();
    } else if (coefficient_family == "lq_control") {
        if (n != 1 || m != 1 || d != 1) fail("problem", "lq_control family requires n = m = d = 1");
        spec = build_lq_control_problem(build_lq()).spec;
    } else {
        fail("problem.coefficient_family", "unknown family '" + coefficient_family + "'");
    }
    // The config declaration is authoritative for the regularity metadata.
    spec.lipschitz_L = lipschitz_L;
    spec.rho = build_rho();
    return spec;
}

SolverOptions RunConfig::solver_options() const {
    SolverOptions opts;
    opts.paths = paths;
    opts.seed = seed;
    opts.tol = tol;
    opts.max_iter = max_iter;
    opts.fit = FitOptions{basis_degree, ridge};
    opts.workers = workers;
    opts.keep_field = keep_field;
    return opts;
}

void apply_override(Json& j, const std::string& assignment) {
    std::string body = assignment;
    if (body.rfind("--", 0) == 0) body = body.substr(2);
    const std::size_t eq = body.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override '" + assignment + "' is not of the form key=value");
    const std::string path = body.substr(0, eq);
    const std::string value = body.substr(eq + 1);

    Json* node = &j;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? dot : dot - start);
        if (key.empty()) throw std::invalid_argument("override '" + assignment + "': empty key");
        if (dot == std::string::npos) {
            Json parsed = Json::parse(value, nullptr, false);
            (*node)[key] = parsed.is_discarded() ? Json(value) : parsed;
            break;
        }
        node = &(*node)[key];
        start = dot + 1;
    }
}

}  // namespace ffbsde
