#include "ffbsde/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ffbsde {

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

namespace {

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);  // binary: no newline translation
    if (!out) throw std::runtime_error("cannot open output file " + path);
    return out;
}

}  // namespace

void write_summary(const std::string& path, const SummaryEntries& entries) {
    std::ofstream out = open_out(path);
    for (const auto& [key, value] : entries) out << key << "=" << value << "\n";
}

void write_convergence_csv(const std::string& path, const std::vector<ConvergenceRow>& rows) {
    std::ofstream out = open_out(path);
    out << "mesh,N,err_X,err_diag,paths,seed\n";
    for (const auto& r : rows)
        out << format_double(r.mesh) << "," << r.N << "," << format_double(r.err_X) << ","
            << format_double(r.err_diag) << "," << r.paths << "," << r.seed << "\n";
}

void write_contraction_csv(const std::string& path, const std::vector<ContractionRow>& rows) {
    std::ofstream out = open_out(path);
    out << "T,ratio_mean,iters,converged\n";
    for (const auto& r : rows)
        out << format_double(r.T) << "," << (r.diverged ? "diverged" : format_double(r.mean_ratio))
            << "," << r.iterations << "," << (r.converged ? 1 : 0) << "\n";
}

void write_stability_csv(const std::string& path, const std::vector<StabilityRow>& rows) {
    std::ofstream out = open_out(path);
    out << "scale,distance,ratio\n";
    for (const auto& r : rows)
        out << format_double(r.scale) << "," << format_double(r.distance) << ","
            << format_double(r.bound_ratio) << "\n";
}

void write_diagonal_csv(const std::string& path, const DiagonalProcess& diag, bool with_paths) {
    std::ofstream out = open_out(path);
    if (with_paths) {
        out << "path,node,time,component,value\n";
        for (int p = 0; p < diag.paths; ++p)
            for (int j = 0; j < diag.grid.nodes(); ++j)
                for (int c = 0; c < diag.m; ++c)
                    out << p << "," << j << "," << format_double(diag.grid.times[static_cast<std::size_t>(j)])
                        << "," << c << "," << format_double(diag.at(j)(p, c)) << "\n";
        return;
    }
    out << "node,time,component,value\n";
    for (int j = 0; j < diag.grid.nodes(); ++j)
        for (int c = 0; c < diag.m; ++c) {
            double mean = 0.0;
            for (int p = 0; p < diag.paths; ++p) mean += diag.at(j)(p, c);
            mean /= diag.paths;
            out << j << "," << format_double(diag.grid.times[static_cast<std::size_t>(j)]) << "," << c
                << "," << format_double(mean) << "\n";
        }
}

void write_ensemble_csv(const std::string& path, const PathEnsemble& ensemble, bool with_paths) {
    std::ofstream out = open_out(path);
    if (with_paths) {
        out << "path,node,time,component,value\n";
        for (int p = 0; p < ensemble.paths; ++p)
            for (int j = 0; j < ensemble.grid.nodes(); ++j)
                for (int c = 0; c < ensemble.n; ++c)
                    out << p << "," << j << ","
                        << format_double(ensemble.grid.times[static_cast<std::size_t>(j)]) << "," << c
                        << "," << format_double(ensemble.state(j)(p, c)) << "\n";
        return;
    }
    out << "node,time,component,value\n";
    for (int j = 0; j < ensemble.grid.nodes(); ++j)
        for (int c = 0; c < ensemble.n; ++c) {
            double mean = 0.0;
            for (int p = 0; p < ensemble.paths; ++p) mean += ensemble.state(j)(p, c);
            mean /= ensemble.paths;
            out << j << "," << format_double(ensemble.grid.times[static_cast<std::size_t>(j)]) << ","
                << c << "," << format_double(mean) << "\n";
        }
}

void write_report_csv(const std::string& path, const PicardReport& report) {
    std::ofstream out = open_out(path);
    out << "iteration,increment,noise_floor,ratio\n";
    for (std::size_t i = 0; i < report.iterations.size(); ++i) {
        const auto& it = report.iterations[i];
        out << i + 1 << "," << format_double(it.increment) << "," << format_double(it.noise_floor)
            << "," << (std::isfinite(it.ratio) ? format_double(it.ratio) : "") << "\n";
    }
}

void write_oracle_compare_csv(const std::string& path, const std::vector<OracleCompareRow>& rows) {
    std::ofstream out = open_out(path);
    out << "node,time,err_l2,ref_l2,rel_err\n";
    for (const auto& r : rows)
        out << r.node << "," << format_double(r.time) << "," << format_double(r.err_l2) << ","
            << format_double(r.ref_l2) << "," << format_double(r.rel_err) << "\n";
}

}  // namespace ffbsde
