#include "ffbsde/paths.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

#include "ffbsde/errors.hpp"
#include "ffbsde/parallel.hpp"
#include "ffbsde/rng.hpp"

namespace ffbsde {

BrownianBundle sample_brownian(const TimeGrid& grid, int paths, int d, std::uint64_t seed) {
    if (paths < 1) throw std::invalid_argument("sample_brownian: need at least one path");
    if (d < 1) throw std::invalid_argument("sample_brownian: Brownian dimension must be >= 1");
    if (grid.steps() < 1) throw std::invalid_argument("sample_brownian: empty grid");

    BrownianBundle bundle;
    bundle.grid = grid;
    bundle.paths = paths;
    bundle.d = d;
    bundle.seed = seed;
    bundle.increments.resize(static_cast<std::size_t>(grid.steps()) * paths * d);

    // Single fixed-order pass; the stream layout is part of the determinism
    // contract (same seed => bit-identical increments).
    GaussianStream rng(seed);
    for (int step = 0; step < grid.steps(); ++step) {
        const double scale = std::sqrt(grid.dt(step));
        double* block = bundle.increments.data() + static_cast<std::size_t>(step) * paths * d;
        for (std::size_t i = 0; i < static_cast<std::size_t>(paths) * d; ++i)
            block[i] = scale * rng.next();
    }
    return bundle;
}

DiagonalProcess DiagonalProcess::zeros(const TimeGrid& grid, int paths, int m) {
    DiagonalProcess diag;
    diag.grid = grid;
    diag.paths = paths;
    diag.m = m;
    diag.values.assign(static_cast<std::size_t>(grid.nodes()) * paths * m, 0.0);
    return diag;
}

PathEnsemble simulate_forward(const ProblemSpec& spec, const DiagonalProcess& diag,
                              const BrownianBundle& bundle, int workers) {
    check_spec(spec);
    if (diag.grid.times != bundle.grid.times)
        throw std::invalid_argument("simulate_forward: diagonal and bundle grids differ");
    if (diag.paths != bundle.paths)
        throw std::invalid_argument("simulate_forward: diagonal and bundle path counts differ");
    if (diag.m != spec.m || bundle.d != spec.d)
        throw std::invalid_argument("simulate_forward: dimension mismatch with spec");

    const int J = bundle.grid.steps();
    const int paths = bundle.paths;
    const int n = spec.n, m = spec.m, d = spec.d;

    PathEnsemble ens;
    ens.grid = bundle.grid;
    ens.paths = paths;
    ens.n = n;
    ens.bundle = bundle;
    ens.states.resize(static_cast<std::size_t>(J + 1) * paths * n);

    for (int p = 0; p < paths; ++p)
        for (int c = 0; c < n; ++c) ens.states[static_cast<std::size_t>(p) * n + c] = spec.x0[static_cast<std::size_t>(c)];

    // Node-major storage; each path advances independently, so the step loop
    // can be split over path blocks.
    auto run_block = [&](int p) {
        std::vector<double> drift(static_cast<std::size_t>(n)), diff(static_cast<std::size_t>(n) * d);
        for (int j = 0; j < J; ++j) {
            const double s = ens.grid.times[static_cast<std::size_t>(j)];
            const double dt = ens.grid.dt(j);
            const double* x = ens.states.data() + (static_cast<std::size_t>(j) * paths + p) * n;
            const double* eta = diag.values.data() + (static_cast<std::size_t>(j) * paths + p) * m;
            const double* dw = bundle.increments.data() + (static_cast<std::size_t>(j) * paths + p) * d;
            double* xn = ens.states.data() + (static_cast<std::size_t>(j + 1) * paths + p) * n;

            spec.B(s, x, eta, drift.data());
            spec.Sigma(s, x, eta, diff.data());
            for (int c = 0; c < n; ++c) {
                double acc = x[c] + drift[static_cast<std::size_t>(c)] * dt;
                const double* row = diff.data() + static_cast<std::size_t>(c) * d;
                for (int q = 0; q < d; ++q) acc += row[q] * dw[q];
                xn[c] = acc;
            }
            for (int c = 0; c < n; ++c) {
                if (!std::isfinite(xn[c])) {
                    std::ostringstream msg;
                    msg << "simulate_forward: non-finite state at path " << p << ", step " << j + 1;
                    throw BlowUpError(msg.str());
                }
            }
        }
    };
    parallel_for(0, paths, workers, run_block);
    return ens;
}

void write_path_dump(const PathEnsemble& ensemble, const std::string& path) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("write_path_dump: cannot open " + path);
    const std::uint64_t header[3] = {static_cast<std::uint64_t>(ensemble.paths),
                                     static_cast<std::uint64_t>(ensemble.grid.nodes()),
                                     static_cast<std::uint64_t>(ensemble.n)};
    std::fwrite(header, sizeof(std::uint64_t), 3, fp);
    // Transpose to [path][node][component] rows.
    std::vector<double> row(static_cast<std::size_t>(ensemble.grid.nodes()) * ensemble.n);
    for (int p = 0; p < ensemble.paths; ++p) {
        for (int j = 0; j < ensemble.grid.nodes(); ++j)
            for (int c = 0; c < ensemble.n; ++c)
                row[static_cast<std::size_t>(j) * ensemble.n + c] =
                    ensemble.states[(static_cast<std::size_t>(j) * ensemble.paths + p) * ensemble.n + c];
        std::fwrite(row.data(), sizeof(double), row.size(), fp);
    }
    std::fclose(fp);
}

}  // namespace ffbsde
