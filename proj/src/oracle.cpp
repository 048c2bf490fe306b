#include "ffbsde/oracle.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "ffbsde/errors.hpp"
#include "ffbsde/rng.hpp"

namespace ffbsde {

namespace {

/// 4-point Lagrange interpolation on a uniform grid with W intervals of
/// width h; 4th-order accurate, matching the integrator below.
double interp_cubic(const double* v, int W, double h, double s) {
    double u = s / h;
    int cell = static_cast<int>(std::floor(u));
    if (cell < 0) cell = 0;
    if (cell > W - 1) cell = W - 1;
    int base = cell - 1;
    if (base < 0) base = 0;
    if (base > W - 3) base = W - 3;
    const double x = u - base;
    const double w0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
    const double w1 = x * (x - 2.0) * (x - 3.0) / 2.0;
    const double w2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
    const double w3 = x * (x - 1.0) * (x - 2.0) / 6.0;
    return w0 * v[base] + w1 * v[base + 1] + w2 * v[base + 2] + w3 * v[base + 3];
}

double interp_cubic_strided(const std::vector<double>& v, int stride, int comp, int W, double h,
                            double s) {
    double u = s / h;
    int cell = static_cast<int>(std::floor(u));
    if (cell < 0) cell = 0;
    if (cell > W - 1) cell = W - 1;
    int base = cell - 1;
    if (base < 0) base = 0;
    if (base > W - 3) base = W - 3;
    const double x = u - base;
    const double w0 = -(x - 1.0) * (x - 2.0) * (x - 3.0) / 6.0;
    const double w1 = x * (x - 2.0) * (x - 3.0) / 2.0;
    const double w2 = -x * (x - 1.0) * (x - 3.0) / 2.0;
    const double w3 = x * (x - 1.0) * (x - 2.0) / 6.0;
    auto at = [&](int node) { return v[static_cast<std::size_t>(node) * stride + comp]; };
    return w0 * at(base) + w1 * at(base + 1) + w2 * at(base + 2) + w3 * at(base + 3);
}

}  // namespace

// ---------------------------------------------------------------------------
// Affine family
// ---------------------------------------------------------------------------

ProblemSpec AffineProblemSpec::to_problem_spec() const {
    if (!f4 || !g4) throw std::invalid_argument("AffineProblemSpec: f4 and g4 are required");
    ProblemSpec spec;
    spec.n = spec.m = spec.d = 1;
    spec.T = T;
    spec.x0 = {x0};

    const double cb = b, cbe = b_eta, cs = sigma;
    const double cf1 = f1, cf2 = f2, cf3 = f3;
    const double cg1 = g1, cg2 = g2, cg3 = g3;
    const auto cf4 = f4;
    const auto cg4 = g4;

    spec.B = [cb, cbe](double, const double* x, const double* eta, double* o) {
        o[0] = cb * x[0] + cbe * eta[0];
    };
    spec.Sigma = [cs](double, const double*, const double*, double* o) { o[0] = cs; };
    spec.F = [cf1, cf2, cf3, cf4](double t, double, const double*, const double*, const double* x,
                                  const double* eta, const double* y, const double*, double* o) {
        o[0] = cf1 * x[0] + cf2 * eta[0] + cf3 * y[0] + cf4(t);
    };
    spec.G = [cg1, cg2, cg3, cg4](double t, const double* xi, const double* xbar, const double* x,
                                  double* o) {
        o[0] = cg1 * x[0] + cg2 * xi[0] + cg3 * xbar[0] + cg4(t);
    };

    spec.depends_on_anchor = (g2 != 0.0) || (g3 != 0.0);
    spec.markovian = true;
    double L = 0.0;
    for (double c : {b, b_eta, sigma, f1, f2, f3, g1, g2, g3}) L = std::max(L, std::abs(c));
    spec.lipschitz_L = std::max(L, 1e-12);
    const double slope = f4_lip + g4_lip;
    spec.rho = [slope](double u) { return slope * u; };
    return spec;
}

namespace {

/// Backward ODE system obtained by matching the coefficients of X_s, X_t,
/// E_t[X_s] and 1 in the backward dynamics, with beta(s) = b + b_eta a(s):
///   A' = -f1 - f2 a(s) - (f3 + beta) A
///   P' = -f3 P
///   Q' = -(f3 + beta) Q
///   h' = -f2 hbar(s) - f3 h - f4(t) - (A + Q) b_eta hbar(s)
/// terminal (A, P, Q, h)(T) = (g1, g2, g3, g4(t)).
struct AffineOdeContext {
    const AffineProblemSpec* aspec;
    const std::vector<double>* a_in;
    const std::vector<double>* h_in;
    int W;
    double h_step;
    double f4_t;  // driver intercept frozen at the anchor time

    void rhs(double s, const double state[4], double out[4]) const {
        const double a_s = interp_cubic(a_in->data(), W, h_step, s);
        const double hb_s = interp_cubic(h_in->data(), W, h_step, s);
        const double beta = aspec->b + aspec->b_eta * a_s;
        const double A = state[0], P = state[1], Q = state[2], H = state[3];
        out[0] = -aspec->f1 - aspec->f2 * a_s - (aspec->f3 + beta) * A;
        out[1] = -aspec->f3 * P;
        out[2] = -(aspec->f3 + beta) * Q;
        out[3] = -aspec->f2 * hb_s - aspec->f3 * H - f4_t - (A + Q) * aspec->b_eta * hb_s;
    }
};

/// Classical 4th-order step from s to s - h.
void rk4_back(const AffineOdeContext& ctx, double s, double h, double state[4]) {
    double k1[4], k2[4], k3[4], k4[4], tmp[4];
    ctx.rhs(s, state, k1);
    for (int i = 0; i < 4; ++i) tmp[i] = state[i] - 0.5 * h * k1[i];
    ctx.rhs(s - 0.5 * h, tmp, k2);
    for (int i = 0; i < 4; ++i) tmp[i] = state[i] - 0.5 * h * k2[i];
    ctx.rhs(s - 0.5 * h, tmp, k3);
    for (int i = 0; i < 4; ++i) tmp[i] = state[i] - h * k3[i];
    ctx.rhs(s - h, tmp, k4);
    for (int i = 0; i < 4; ++i) state[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

struct AffineStepOutput {
    AffineDiagonal diag;
    // Optional field collection (row-major (W+1) x (W+1)).
    std::vector<double>*A = nullptr, *P = nullptr, *Q = nullptr, *h = nullptr;
};

void affine_step_sampled(const AffineProblemSpec& aspec, int fine_steps,
                         const std::vector<double>& a_in, const std::vector<double>& h_in,
                         AffineStepOutput& out) {
    const int W = fine_steps;
    const double hs = aspec.T / W;
    out.diag.a.assign(static_cast<std::size_t>(W) + 1, 0.0);
    out.diag.h.assign(static_cast<std::size_t>(W) + 1, 0.0);

    for (int i = W; i >= 0; --i) {
        const double t = aspec.T * static_cast<double>(i) / W;
        AffineOdeContext ctx{&aspec, &a_in, &h_in, W, hs, aspec.f4(t)};
        double state[4] = {aspec.g1, aspec.g2, aspec.g3, aspec.g4(t)};
        if (out.A) {
            const std::size_t row = static_cast<std::size_t>(i) * (W + 1);
            (*out.A)[row + W] = state[0];
            (*out.P)[row + W] = state[1];
            (*out.Q)[row + W] = state[2];
            (*out.h)[row + W] = state[3];
        }
        for (int j = W; j > i; --j) {
            const double s = aspec.T * static_cast<double>(j) / W;
            rk4_back(ctx, s, hs, state);
            if (out.A) {
                const std::size_t row = static_cast<std::size_t>(i) * (W + 1);
                (*out.A)[row + j - 1] = state[0];
                (*out.P)[row + j - 1] = state[1];
                (*out.Q)[row + j - 1] = state[2];
                (*out.h)[row + j - 1] = state[3];
            }
        }
        for (double v : state)
            if (!std::isfinite(v))
                throw OracleDivergenceError("affine oracle: non-finite field during integration");
        out.diag.a[static_cast<std::size_t>(i)] = state[0] + state[1] + state[2];
        out.diag.h[static_cast<std::size_t>(i)] = state[3];
    }
}

}  // namespace

AffineDiagonal oracle_phi_step(const AffineProblemSpec& aspec, int fine_steps,
                               const std::function<double(double)>& a_in,
                               const std::function<double(double)>& h_in) {
    if (fine_steps < 64) throw std::invalid_argument("oracle_phi_step: fine_steps must be >= 64");
    const int W = fine_steps;
    std::vector<double> a(static_cast<std::size_t>(W) + 1), hb(static_cast<std::size_t>(W) + 1);
    for (int i = 0; i <= W; ++i) {
        const double s = aspec.T * static_cast<double>(i) / W;
        a[static_cast<std::size_t>(i)] = a_in(s);
        hb[static_cast<std::size_t>(i)] = h_in(s);
    }
    AffineStepOutput out;
    affine_step_sampled(aspec, fine_steps, a, hb, out);
    return std::move(out.diag);
}

AffineOracleSolution solve_affine_oracle(const AffineProblemSpec& aspec, int fine_steps,
                                         double fp_tol, int fp_max_iter) {
    if (fine_steps < 64) throw std::invalid_argument("solve_affine_oracle: fine_steps must be >= 64");
    if (!(fp_tol > 0.0) || fp_max_iter < 1)
        throw std::invalid_argument("solve_affine_oracle: bad fixed-point controls");
    if (!aspec.f4 || !aspec.g4)
        throw std::invalid_argument("solve_affine_oracle: f4 and g4 are required");

    const int W = fine_steps;
    std::vector<double> a(static_cast<std::size_t>(W) + 1, 0.0);
    std::vector<double> hb(static_cast<std::size_t>(W) + 1, 0.0);

    bool converged = false;
    for (int iter = 0; iter < fp_max_iter; ++iter) {
        AffineStepOutput out;
        affine_step_sampled(aspec, W, a, hb, out);
        double delta = 0.0;
        for (int i = 0; i <= W; ++i) {
            delta = std::max(delta, std::abs(out.diag.a[static_cast<std::size_t>(i)] -
                                             a[static_cast<std::size_t>(i)]));
            delta = std::max(delta, std::abs(out.diag.h[static_cast<std::size_t>(i)] -
                                             hb[static_cast<std::size_t>(i)]));
        }
        a = std::move(out.diag.a);
        hb = std::move(out.diag.h);
        if (!std::isfinite(delta))
            throw OracleDivergenceError("affine oracle: fixed point diverged (non-finite update)");
        if (delta <= fp_tol) {
            converged = true;
            break;
        }
    }
    if (!converged)
        throw OracleDivergenceError("affine oracle: fixed point not converged within fp_max_iter");

    // Final pass with the converged diagonal, collecting the full fields.
    AffineOracleSolution sol;
    sol.fine_steps = W;
    sol.T = aspec.T;
    sol.sigma = aspec.sigma;
    sol.times.resize(static_cast<std::size_t>(W) + 1);
    for (int i = 0; i <= W; ++i) sol.times[static_cast<std::size_t>(i)] = aspec.T * static_cast<double>(i) / W;
    const std::size_t cells = (static_cast<std::size_t>(W) + 1) * (W + 1);
    sol.A.assign(cells, 0.0);
    sol.P.assign(cells, 0.0);
    sol.Q.assign(cells, 0.0);
    sol.h.assign(cells, 0.0);
    AffineStepOutput out;
    out.A = &sol.A;
    out.P = &sol.P;
    out.Q = &sol.Q;
    out.h = &sol.h;
    affine_step_sampled(aspec, W, a, hb, out);
    sol.a_diag = std::move(out.diag.a);
    sol.h_diag = std::move(out.diag.h);
    return sol;
}

double AffineOracleSolution::a_at(double s) const {
    return interp_cubic(a_diag.data(), fine_steps, T / fine_steps, s);
}

double AffineOracleSolution::h_at(double s) const {
    return interp_cubic(h_diag.data(), fine_steps, T / fine_steps, s);
}

double AffineOracleSolution::diagonal(double s, double x) const { return a_at(s) * x + h_at(s); }

// ---------------------------------------------------------------------------
// Deterministic oracle
// ---------------------------------------------------------------------------

namespace {

void rk4_generic(double s, double h, std::vector<double>& state,
                 const std::function<void(double, const double*, double*)>& rhs,
                 std::vector<double>& k1, std::vector<double>& k2, std::vector<double>& k3,
                 std::vector<double>& k4, std::vector<double>& tmp) {
    const std::size_t dim = state.size();
    rhs(s, state.data(), k1.data());
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = state[i] + 0.5 * h * k1[i];
    rhs(s + 0.5 * h, tmp.data(), k2.data());
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = state[i] + 0.5 * h * k2[i];
    rhs(s + 0.5 * h, tmp.data(), k3.data());
    for (std::size_t i = 0; i < dim; ++i) tmp[i] = state[i] + h * k3[i];
    rhs(s + h, tmp.data(), k4.data());
    for (std::size_t i = 0; i < dim; ++i)
        state[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace

double DeterministicSolution::diag_component(double s, int comp) const {
    return interp_cubic_strided(diag, m, comp, fine_steps, times[1] - times[0], s);
}

double DeterministicSolution::x_component(double s, int comp) const {
    return interp_cubic_strided(x, n, comp, fine_steps, times[1] - times[0], s);
}

DeterministicSolution solve_deterministic_oracle(const ProblemSpec& spec, int fine_steps,
                                                 double fp_tol, int fp_max_iter) {
    check_spec(spec);
    if (fine_steps < 64)
        throw std::invalid_argument("solve_deterministic_oracle: fine_steps must be >= 64");

    const int n = spec.n, m = spec.m, d = spec.d;
    // Validate Sigma == 0 by probing.
    {
        GaussianStream rng(0x5157u);
        std::vector<double> x(static_cast<std::size_t>(n)), eta(static_cast<std::size_t>(m));
        std::vector<double> out(static_cast<std::size_t>(n) * d);
        for (int trial = 0; trial < 16; ++trial) {
            for (auto& v : x) v = rng.next();
            for (auto& v : eta) v = rng.next();
            spec.Sigma(spec.T * rng.next_open_unit(), x.data(), eta.data(), out.data());
            for (double v : out)
                if (std::abs(v) > 1e-12)
                    throw std::invalid_argument(
                        "solve_deterministic_oracle: Sigma is not identically zero");
        }
    }

    const int W = fine_steps;
    const double hs = spec.T / W;

    DeterministicSolution sol;
    sol.fine_steps = W;
    sol.n = n;
    sol.m = m;
    sol.times.resize(static_cast<std::size_t>(W) + 1);
    for (int i = 0; i <= W; ++i) sol.times[static_cast<std::size_t>(i)] = spec.T * static_cast<double>(i) / W;
    sol.x.assign((static_cast<std::size_t>(W) + 1) * n, 0.0);
    sol.diag.assign((static_cast<std::size_t>(W) + 1) * m, 0.0);

    std::vector<double> diag_cur((static_cast<std::size_t>(W) + 1) * m, 0.0);
    std::vector<double> diag_next(diag_cur.size(), 0.0);
    std::vector<double> xs((static_cast<std::size_t>(W) + 1) * n, 0.0);
    const std::vector<double> z_zero(static_cast<std::size_t>(m) * d, 0.0);

    std::vector<double> k1(std::max(n, m)), k2(k1), k3(k1), k4(k1), tmp(k1);
    std::vector<double> eta_buf(static_cast<std::size_t>(m));

    auto eta_at = [&](const std::vector<double>& diag_ref, double s, double* out) {
        for (int c = 0; c < m; ++c) out[c] = interp_cubic_strided(diag_ref, m, c, W, hs, s);
    };

    auto forward_pass = [&](const std::vector<double>& diag_ref) {
        std::vector<double> state(spec.x0.begin(), spec.x0.end());
        for (int c = 0; c < n; ++c) xs[static_cast<std::size_t>(c)] = state[static_cast<std::size_t>(c)];
        auto rhs = [&](double s, const double* st, double* out) {
            eta_at(diag_ref, s, eta_buf.data());
            spec.B(s, st, eta_buf.data(), out);
        };
        k1.assign(static_cast<std::size_t>(n), 0.0);
        k2 = k1; k3 = k1; k4 = k1; tmp = k1;
        for (int j = 0; j < W; ++j) {
            rk4_generic(sol.times[static_cast<std::size_t>(j)], hs, state, rhs, k1, k2, k3, k4, tmp);
            for (int c = 0; c < n; ++c)
                xs[(static_cast<std::size_t>(j) + 1) * n + c] = state[static_cast<std::size_t>(c)];
        }
    };

    auto backward_anchor = [&](const std::vector<double>& diag_ref, int anchor,
                               std::vector<double>* store_y) {
        const double t = sol.times[static_cast<std::size_t>(anchor)];
        const double* x_t = xs.data() + static_cast<std::size_t>(anchor) * n;
        const double* x_T = xs.data() + static_cast<std::size_t>(W) * n;
        std::vector<double> state(static_cast<std::size_t>(m), 0.0);
        spec.G(t, x_t, x_T, x_T, state.data());
        if (store_y)
            for (int c = 0; c < m; ++c)
                (*store_y)[(static_cast<std::size_t>(anchor) * (W + 1) + W) * m + c] =
                    state[static_cast<std::size_t>(c)];
        std::vector<double> xb(static_cast<std::size_t>(n)), xv(static_cast<std::size_t>(n));
        auto rhs = [&](double s, const double* st, double* out) {
            eta_at(diag_ref, s, eta_buf.data());
            for (int c = 0; c < n; ++c) xv[static_cast<std::size_t>(c)] =
                interp_cubic_strided(xs, n, c, W, hs, s);
            spec.F(t, s, x_t, xv.data(), xv.data(), eta_buf.data(), st, z_zero.data(), out);
            for (int c = 0; c < m; ++c) out[c] = -out[c];
        };
        k1.assign(static_cast<std::size_t>(m), 0.0);
        k2 = k1; k3 = k1; k4 = k1; tmp = k1;
        for (int j = W; j > anchor; --j) {
            rk4_generic(sol.times[static_cast<std::size_t>(j)], -hs, state, rhs, k1, k2, k3, k4, tmp);
            if (store_y)
                for (int c = 0; c < m; ++c)
                    (*store_y)[(static_cast<std::size_t>(anchor) * (W + 1) + (j - 1)) * m + c] =
                        state[static_cast<std::size_t>(c)];
        }
        return state;  // Y^t(t)
    };

    bool converged = false;
    for (int iter = 0; iter < fp_max_iter && !converged; ++iter) {
        forward_pass(diag_cur);
        double delta = 0.0;
        for (int i = 0; i <= W; ++i) {
            const std::vector<double> yt = backward_anchor(diag_cur, i, nullptr);
            for (int c = 0; c < m; ++c) {
                const std::size_t idx = static_cast<std::size_t>(i) * m + c;
                delta = std::max(delta, std::abs(yt[static_cast<std::size_t>(c)] - diag_cur[idx]));
                diag_next[idx] = yt[static_cast<std::size_t>(c)];
            }
        }
        if (!std::isfinite(delta))
            throw OracleDivergenceError("deterministic oracle: Picard diverged (non-finite)");
        diag_cur.swap(diag_next);
        converged = delta <= fp_tol;
    }
    if (!converged)
        throw OracleDivergenceError(
            "deterministic oracle: dense-grid Picard not converged within fp_max_iter");

    // Storing pass: family consistent with the converged diagonal.
    forward_pass(diag_cur);
    sol.x = xs;
    sol.y.assign((static_cast<std::size_t>(W) + 1) * (W + 1) * m, 0.0);
    for (int i = 0; i <= W; ++i) {
        const std::vector<double> yt = backward_anchor(diag_cur, i, &sol.y);
        for (int c = 0; c < m; ++c)
            sol.diag[static_cast<std::size_t>(i) * m + c] = yt[static_cast<std::size_t>(c)];
    }
    return sol;
}

// ---------------------------------------------------------------------------
// LQ control demo
// ---------------------------------------------------------------------------

LqProblem build_lq_control_problem(const LqParams& params) {
    if (!(params.control_weight > 0.0))
        throw UnsupportedProblemError(
            "build_lq_control_problem: Hamiltonian not strictly convex (control weight <= 0)");
    if (!(params.T > 0.0)) throw std::invalid_argument("build_lq_control_problem: T must be > 0");

    LqProblem lq;
    lq.params = params;

    const double bx = params.drift_x, bu = params.drift_u;
    const double ru = params.control_weight, rx = params.state_weight;
    const double gx = params.terminal_weight, gamma = params.mean_weight;
    const double lambda = params.lambda;
    const double s0 = params.sigma0, sx = params.sigma_x;
    const double T = params.T;
    const double gain = bu * bu / ru;  // feedback gain of the minimizer

    ProblemSpec spec;
    spec.n = spec.m = spec.d = 1;
    spec.T = T;
    spec.x0 = {params.x0};
    // Controlled drift with u = -bu p / ru evaluated on the diagonal.
    spec.B = [bx, gain](double, const double* x, const double* eta, double* o) {
        o[0] = bx * x[0] - gain * eta[0];
    };
    spec.Sigma = [s0, sx](double, const double* x, const double*, double* o) {
        o[0] = s0 + sx * x[0];
    };
    // d_x H composed with the minimizer: the control does not enter because
    // the x-u coupling is absent in this family.
    spec.F = [bx, sx, rx, lambda](double t, double s, const double*, const double*, const double* x,
                                  const double*, const double* y, const double* z, double* o) {
        o[0] = bx * y[0] + sx * z[0] + std::exp(-lambda * (s - t)) * rx * x[0];
    };
    spec.G = [gx, gamma, lambda, T](double t, const double*, const double* xbar, const double* x,
                                    double* o) {
        o[0] = std::exp(-lambda * (T - t)) * gx * x[0] + gamma * xbar[0];
    };
    spec.depends_on_anchor = gamma != 0.0;
    spec.markovian = true;
    double L = 0.0;
    for (double c : {std::abs(bx), gain, std::abs(sx), std::abs(rx), std::abs(gx), std::abs(gamma)})
        L = std::max(L, c);
    spec.lipschitz_L = std::max(L, 1e-12);
    const double slope = lambda * (std::abs(rx) + std::abs(gx));
    spec.rho = [slope](double u) { return slope * u; };

    lq.spec = std::move(spec);
    return lq;
}

ControlExtractor equilibrium_control(const LqProblem& lq, const EquilibriumSolution& sol) {
    const double gain = lq.params.drift_u / lq.params.control_weight;
    const DiagonalProcess* diag = &sol.diag;
    return [gain, diag](int node, int path) { return -gain * diag->at(node)(path, 0); };
}

std::vector<SpikeIncrement> spike_variation_check(const LqProblem& lq,
                                                  const EquilibriumSolution& sol,
                                                  const ControlExtractor& control, double t,
                                                  const std::vector<double>& v,
                                                  const std::vector<double>& eps_list, int paths,
                                                  std::uint64_t seed, const FitOptions& fit) {
    const LqParams& par = lq.params;
    const PathEnsemble& ens = sol.ensemble;
    const TimeGrid& grid = ens.grid;
    const int J = grid.steps();

    if (!(t < par.T)) throw std::invalid_argument("spike_variation_check: t must be < T");
    if (paths != ens.paths || seed != ens.bundle.seed)
        throw std::invalid_argument(
            "spike_variation_check: (paths, seed) must match the equilibrium solve for common "
            "random numbers");
    if (static_cast<int>(v.size()) != 1 && static_cast<int>(v.size()) != paths)
        throw std::invalid_argument("spike_variation_check: v must hold 1 or `paths` values");
    for (std::size_t i = 1; i < eps_list.size(); ++i)
        if (!(eps_list[i] < eps_list[i - 1]))
            throw std::invalid_argument("spike_variation_check: eps values must be decreasing");

    int node_t = -1;
    for (int j = 0; j <= J; ++j)
        if (std::abs(grid.times[static_cast<std::size_t>(j)] - t) <= 1e-12) node_t = j;
    if (node_t < 0 || node_t == J)
        throw std::invalid_argument("spike_variation_check: t must be an interior grid node");
    for (double eps : eps_list) {
        if (!(eps > 0.0) || t + eps > par.T + 1e-12)
            throw std::invalid_argument("spike_variation_check: eps beyond horizon");
    }

    const int P = paths;
    const int tail = J - node_t;  // steps simulated from node_t

    // Controls: baseline from the extractor, spikes overwrite a prefix.
    std::vector<double> u_base(static_cast<std::size_t>(tail) * P);
    for (int j = 0; j < tail; ++j)
        for (int p = 0; p < P; ++p)
            u_base[static_cast<std::size_t>(j) * P + p] = control(node_t + j, p);

    // Simulates the controlled state from the time-t states under the given
    // control values with the stored increments, and accumulates the pathwise
    // cost conditional on (t, X_t).
    std::vector<double> xbuf(static_cast<std::size_t>(P));
    auto run_cost = [&](const std::vector<double>& u, std::vector<double>& cost,
                        std::vector<double>& x_T) {
        for (int p = 0; p < P; ++p) xbuf[static_cast<std::size_t>(p)] = ens.state(node_t)(p, 0);
        cost.assign(static_cast<std::size_t>(P), 0.0);
        for (int j = 0; j < tail; ++j) {
            const int node = node_t + j;
            const double s = grid.times[static_cast<std::size_t>(node)];
            const double dt = grid.dt(node);
            const double disc = std::exp(-par.lambda * (s - t));
            const ConstMatMap dW = ens.bundle.dW(node);
            for (int p = 0; p < P; ++p) {
                const double x = xbuf[static_cast<std::size_t>(p)];
                const double uc = u[static_cast<std::size_t>(j) * P + p];
                cost[static_cast<std::size_t>(p)] +=
                    disc * 0.5 * (par.control_weight * uc * uc + par.state_weight * x * x) * dt;
                xbuf[static_cast<std::size_t>(p)] =
                    x + (par.drift_x * x + par.drift_u * uc) * dt +
                    (par.sigma0 + par.sigma_x * x) * dW(p, 0);
            }
        }
        const double disc_T = std::exp(-par.lambda * (par.T - t));
        for (int p = 0; p < P; ++p) {
            const double xT = xbuf[static_cast<std::size_t>(p)];
            cost[static_cast<std::size_t>(p)] += disc_T * 0.5 * par.terminal_weight * xT * xT;
        }
        x_T = xbuf;
    };

    // Mean term: h(t, x_t, E_t[x_T]) with the regression surrogate of E_t,
    // conditioning on the state at node_t (common to both simulations).
    auto mean_term = [&](const std::vector<double>& x_T, std::vector<double>& out) {
        out.assign(static_cast<std::size_t>(P), 0.0);
        if (par.mean_weight == 0.0) return;
        RowMat targets(P, 1);
        for (int p = 0; p < P; ++p) targets(p, 0) = x_T[static_cast<std::size_t>(p)];
        const CondExpModel model = fit_conditional(ens, node_t, targets, fit);
        const RowMat mhat = evaluate(model, ens.state(node_t));
        for (int p = 0; p < P; ++p)
            out[static_cast<std::size_t>(p)] = 0.5 * par.mean_weight * mhat(p, 0) * mhat(p, 0);
    };

    std::vector<double> cost_base, xT_base, h_base;
    run_cost(u_base, cost_base, xT_base);
    mean_term(xT_base, h_base);

    std::vector<SpikeIncrement> results;
    std::vector<double> u_spike, cost_spike, xT_spike, h_spike;
    for (double eps : eps_list) {
        // Spiked control: v on grid nodes covering [t, t + eps).
        u_spike = u_base;
        for (int j = 0; j < tail; ++j) {
            const double s = grid.times[static_cast<std::size_t>(node_t + j)];
            if (s >= t + eps - 1e-12) break;
            for (int p = 0; p < P; ++p)
                u_spike[static_cast<std::size_t>(j) * P + p] =
                    v.size() == 1 ? v[0] : v[static_cast<std::size_t>(p)];
        }
        run_cost(u_spike, cost_spike, xT_spike);
        mean_term(xT_spike, h_spike);

        double mean = 0.0, mean2 = 0.0;
        for (int p = 0; p < P; ++p) {
            const double delta = (cost_spike[static_cast<std::size_t>(p)] +
                                  h_spike[static_cast<std::size_t>(p)]) -
                                 (cost_base[static_cast<std::size_t>(p)] +
                                  h_base[static_cast<std::size_t>(p)]);
            mean += delta;
            mean2 += delta * delta;
        }
        mean /= P;
        mean2 /= P;
        const double var = std::max(mean2 - mean * mean, 0.0);
        SpikeIncrement inc;
        inc.eps = eps;
        inc.increment = mean / eps;
        inc.std_error = std::sqrt(var / P) / eps;
        results.push_back(inc);
    }
    return results;
}

}  // namespace ffbsde
