#include "ffbsde/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ffbsde/errors.hpp"
#include "ffbsde/rng.hpp"

namespace ffbsde {

TimeGrid make_uniform_grid(double T, int steps) {
    if (!(T > 0.0)) throw std::invalid_argument("make_uniform_grid: horizon must be positive");
    if (steps < 1) throw std::invalid_argument("make_uniform_grid: need at least one step");
    TimeGrid grid;
    grid.times.resize(static_cast<std::size_t>(steps) + 1);
    for (int j = 0; j <= steps; ++j)
        grid.times[static_cast<std::size_t>(j)] = T * static_cast<double>(j) / static_cast<double>(steps);
    grid.times.front() = 0.0;
    grid.times.back() = T;
    return grid;
}

Partition make_partition(const TimeGrid& grid, int intervals) {
    const int J = grid.steps();
    if (intervals < 1 || intervals > J)
        throw std::invalid_argument("make_partition: interval count must be in [1, grid steps]");
    if (J % intervals != 0)
        throw std::invalid_argument("make_partition: interval count must divide the grid step count");
    Partition part;
    const int stride = J / intervals;
    for (int k = 0; k <= intervals; ++k) {
        const int node = k * stride;
        part.anchor_nodes.push_back(node);
        part.anchor_times.push_back(grid.times[static_cast<std::size_t>(node)]);
    }
    for (int k = 1; k <= intervals; ++k)
        part.mesh = std::max(part.mesh, part.anchor_times[static_cast<std::size_t>(k)] -
                                            part.anchor_times[static_cast<std::size_t>(k - 1)]);
    return part;
}

Partition full_partition(const TimeGrid& grid) { return make_partition(grid, grid.steps()); }

void check_spec(const ProblemSpec& spec) {
    if (spec.n < 1 || spec.m < 1 || spec.d < 1)
        throw std::invalid_argument("ProblemSpec: dimensions must be >= 1");
    if (!(spec.T > 0.0)) throw std::invalid_argument("ProblemSpec: horizon must be positive");
    if (static_cast<int>(spec.x0.size()) != spec.n)
        throw std::invalid_argument("ProblemSpec: x0 length must equal n");
    if (!spec.B || !spec.Sigma || !spec.F || !spec.G)
        throw std::invalid_argument("ProblemSpec: all four coefficient callables are required");
    if (!spec.rho) throw std::invalid_argument("ProblemSpec: rho callable is required");
    if (!spec.markovian)
        throw std::invalid_argument("ProblemSpec: non-Markovian coefficients are not supported "
                                    "by the regression scheme");
}

namespace {

bool all_finite(const double* v, int len) {
    for (int i = 0; i < len; ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

[[noreturn]] void throw_nonfinite(const char* name, double t, double s) {
    std::ostringstream msg;
    msg << "validate_problem: coefficient " << name << " returned a non-finite value at (t=" << t
        << ", s=" << s << ")";
    throw CoefficientEvaluationError(msg.str());
}

double norm2(const double* v, int len) {
    double acc = 0.0;
    for (int i = 0; i < len; ++i) acc += v[i] * v[i];
    return std::sqrt(acc);
}

}  // namespace

ValidationReport validate_problem(const ProblemSpec& spec, int probe_count, std::uint64_t seed) {
    check_spec(spec);
    if (probe_count < 2) throw std::invalid_argument("validate_problem: probe_count must be >= 2");

    ValidationReport report;
    const int n = spec.n, m = spec.m, d = spec.d;
    const double T = spec.T;

    std::vector<double> zx(static_cast<std::size_t>(n), 0.0), zeta(static_cast<std::size_t>(m), 0.0);
    std::vector<double> zz(static_cast<std::size_t>(m) * d, 0.0);
    std::vector<double> buf_n(static_cast<std::size_t>(n)), buf_nd(static_cast<std::size_t>(n) * d);
    std::vector<double> buf_m(static_cast<std::size_t>(m));

    // --- R estimate: trapezoid quadrature of the zero-argument coefficients.
    const int Q = probe_count;
    const double h = T / Q;
    std::vector<double> absB(static_cast<std::size_t>(Q) + 1), sq_sigma(static_cast<std::size_t>(Q) + 1);
    for (int i = 0; i <= Q; ++i) {
        const double s = T * static_cast<double>(i) / Q;
        spec.B(s, zx.data(), zeta.data(), buf_n.data());
        if (!all_finite(buf_n.data(), n)) throw_nonfinite("B", 0.0, s);
        absB[static_cast<std::size_t>(i)] = norm2(buf_n.data(), n);
        spec.Sigma(s, zx.data(), zeta.data(), buf_nd.data());
        if (!all_finite(buf_nd.data(), n * d)) throw_nonfinite("Sigma", 0.0, s);
        const double sn = norm2(buf_nd.data(), n * d);
        sq_sigma[static_cast<std::size_t>(i)] = sn * sn;
    }
    double intB = 0.0, intS = 0.0;
    for (int i = 0; i < Q; ++i) {
        intB += 0.5 * h * (absB[static_cast<std::size_t>(i)] + absB[static_cast<std::size_t>(i) + 1]);
        intS += 0.5 * h * (sq_sigma[static_cast<std::size_t>(i)] + sq_sigma[static_cast<std::size_t>(i) + 1]);
    }
    double sup_FG = 0.0;
    for (int it = 0; it <= Q; ++it) {
        const double t = T * static_cast<double>(it) / Q;
        double intF = 0.0, prev = -1.0;
        for (int is = it; is <= Q; ++is) {
            const double s = T * static_cast<double>(is) / Q;
            spec.F(t, s, zx.data(), zx.data(), zx.data(), zeta.data(), zeta.data(), zz.data(),
                   buf_m.data());
            if (!all_finite(buf_m.data(), m)) throw_nonfinite("F", t, s);
            const double cur = norm2(buf_m.data(), m);
            if (prev >= 0.0) intF += 0.5 * h * (prev + cur);
            prev = cur;
        }
        spec.G(t, zx.data(), zx.data(), zx.data(), buf_m.data());
        if (!all_finite(buf_m.data(), m)) throw_nonfinite("G", t, T);
        const double g0 = norm2(buf_m.data(), m);
        sup_FG = std::max(sup_FG, intF * intF + g0 * g0);
    }
    report.R_estimate = intB * intB + intS + sup_FG;

    // --- rho sanity on sampled points.
    const double rho0 = spec.rho(0.0);
    report.rho_zero_at_origin = std::abs(rho0) <= 1e-14;
    if (!report.rho_zero_at_origin) report.violations.push_back("rho(0) != 0");
    double prev_rho = rho0;
    for (int i = 1; i <= Q; ++i) {
        const double u = T * static_cast<double>(i) / Q;
        const double r = spec.rho(u);
        if (!std::isfinite(r) || r < prev_rho - 1e-14) {
            report.rho_nondecreasing = false;
            report.violations.push_back("rho not non-decreasing on sampled points");
            break;
        }
        prev_rho = r;
    }

    // --- Lipschitz probes on random argument pairs.
    GaussianStream rng(seed);
    const double slack = 1.0 + 1e-9;
    LipschitzProbe pB{"B", 0.0, false}, pS{"Sigma", 0.0, false}, pF{"F", 0.0, false},
        pG{"G", 0.0, false};
    std::vector<double> x1(static_cast<std::size_t>(n)), x2(static_cast<std::size_t>(n));
    std::vector<double> xi1(static_cast<std::size_t>(n)), xi2(static_cast<std::size_t>(n));
    std::vector<double> xb1(static_cast<std::size_t>(n)), xb2(static_cast<std::size_t>(n));
    std::vector<double> e1(static_cast<std::size_t>(m)), e2(static_cast<std::size_t>(m));
    std::vector<double> y1(static_cast<std::size_t>(m)), y2(static_cast<std::size_t>(m));
    std::vector<double> z1(static_cast<std::size_t>(m) * d), z2(static_cast<std::size_t>(m) * d);
    std::vector<double> o1n(static_cast<std::size_t>(n)), o2n(static_cast<std::size_t>(n));
    std::vector<double> o1nd(static_cast<std::size_t>(n) * d), o2nd(static_cast<std::size_t>(n) * d);
    std::vector<double> o1m(static_cast<std::size_t>(m)), o2m(static_cast<std::size_t>(m));

    auto fill = [&](std::vector<double>& v) {
        for (auto& c : v) c = rng.next();
    };
    auto diff_norm = [&](const std::vector<double>& a, const std::vector<double>& b) {
        double acc = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += (a[i] - b[i]) * (a[i] - b[i]);
        return std::sqrt(acc);
    };

    double max_mod = 0.0;
    for (int trial = 0; trial < probe_count; ++trial) {
        const double s = T * rng.next_open_unit();
        const double t = s * rng.next_open_unit();
        fill(x1); fill(xi1); fill(xb1); fill(e1); fill(y1); fill(z1);

        // Per-argument perturbations first (sharp ratios for separable
        // coefficients), then a joint one.
        for (int mask = 1; mask <= 3; ++mask) {
            x2 = x1; e2 = e1;
            if (mask & 1) fill(x2);
            if (mask & 2) fill(e2);
            const double den = diff_norm(x1, x2) + diff_norm(e1, e2);
            if (den <= 1e-12) continue;
            spec.B(s, x1.data(), e1.data(), o1n.data());
            spec.B(s, x2.data(), e2.data(), o2n.data());
            if (!all_finite(o1n.data(), n) || !all_finite(o2n.data(), n))
                throw_nonfinite("B", 0.0, s);
            pB.max_ratio = std::max(pB.max_ratio, diff_norm(o1n, o2n) / den);
            spec.Sigma(s, x1.data(), e1.data(), o1nd.data());
            spec.Sigma(s, x2.data(), e2.data(), o2nd.data());
            if (!all_finite(o1nd.data(), n * d) || !all_finite(o2nd.data(), n * d))
                throw_nonfinite("Sigma", 0.0, s);
            pS.max_ratio = std::max(pS.max_ratio, diff_norm(o1nd, o2nd) / den);
        }
        for (int mask = 1; mask <= 63; mask = mask == 32 ? 63 : mask << 1) {
            xi2 = xi1; xb2 = xb1; x2 = x1; e2 = e1; y2 = y1; z2 = z1;
            if (mask & 1) fill(xi2);
            if (mask & 2) fill(xb2);
            if (mask & 4) fill(x2);
            if (mask & 8) fill(e2);
            if (mask & 16) fill(y2);
            if (mask & 32) fill(z2);
            const double den = diff_norm(xi1, xi2) + diff_norm(xb1, xb2) + diff_norm(x1, x2) +
                               diff_norm(e1, e2) + diff_norm(y1, y2) + diff_norm(z1, z2);
            if (den <= 1e-12) continue;
            spec.F(t, s, xi1.data(), xb1.data(), x1.data(), e1.data(), y1.data(), z1.data(),
                   o1m.data());
            spec.F(t, s, xi2.data(), xb2.data(), x2.data(), e2.data(), y2.data(), z2.data(),
                   o2m.data());
            if (!all_finite(o1m.data(), m) || !all_finite(o2m.data(), m)) throw_nonfinite("F", t, s);
            pF.max_ratio = std::max(pF.max_ratio, diff_norm(o1m, o2m) / den);
            const double den_g = diff_norm(xi1, xi2) + diff_norm(xb1, xb2) + diff_norm(x1, x2);
            if (den_g <= 1e-12) continue;
            spec.G(t, xi1.data(), xb1.data(), x1.data(), o1m.data());
            spec.G(t, xi2.data(), xb2.data(), x2.data(), o2m.data());
            if (!all_finite(o1m.data(), m) || !all_finite(o2m.data(), m)) throw_nonfinite("G", t, T);
            pG.max_ratio = std::max(pG.max_ratio, diff_norm(o1m, o2m) / den_g);
        }

        // Time-modulus probe: same spatial arguments, two anchor times.
        const double t2 = s * rng.next_open_unit();
        const double rho_gap = spec.rho(std::abs(t - t2));
        if (rho_gap > 1e-14) {
            spec.F(t, s, xi1.data(), xb1.data(), x1.data(), e1.data(), y1.data(), z1.data(),
                   o1m.data());
            spec.F(t2, s, xi1.data(), xb1.data(), x1.data(), e1.data(), y1.data(), z1.data(),
                   o2m.data());
            double gap = diff_norm(o1m, o2m);
            spec.G(t, xi1.data(), xb1.data(), x1.data(), o1m.data());
            spec.G(t2, xi1.data(), xb1.data(), x1.data(), o2m.data());
            gap += diff_norm(o1m, o2m);
            const double size = 1.0 + norm2(xi1.data(), n) + norm2(x1.data(), n) +
                                norm2(xb1.data(), n) + norm2(e1.data(), m) + norm2(y1.data(), m) +
                                norm2(z1.data(), m * d);
            max_mod = std::max(max_mod, gap / (rho_gap * size));
        }
    }

    const double L = spec.lipschitz_L;
    for (auto* p : {&pB, &pS, &pF, &pG}) {
        p->violated = p->max_ratio > L * slack;
        if (p->violated) {
            std::ostringstream msg;
            msg << p->coefficient << ": observed Lipschitz ratio " << p->max_ratio
                << " exceeds declared L = " << L;
            report.violations.push_back(msg.str());
        }
        report.lipschitz.push_back(*p);
    }
    report.max_modulus_ratio = max_mod;
    report.modulus_violated = max_mod > slack;
    if (report.modulus_violated) {
        std::ostringstream msg;
        msg << "time modulus: observed ratio " << max_mod << " exceeds declared rho bound";
        report.violations.push_back(msg.str());
    }
    return report;
}

}  // namespace ffbsde
