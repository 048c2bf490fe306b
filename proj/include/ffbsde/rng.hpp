#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace ffbsde {

/// Deterministic standard-normal stream. Uniforms come from mt19937_64 and
/// are folded through an explicit Box-Muller transform so that the produced
/// sequence is a pure function of the seed (the distribution adapters in
/// <random> are implementation-defined and would not give a portable
/// reproducibility contract).
class GaussianStream {
public:
    explicit GaussianStream(std::uint64_t seed) : engine_(seed) {}

    double next() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_open_unit();
        const double u2 = next_open_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Uniform draw in (0, 1]; never 0, so log() above is safe.
    double next_open_unit() {
        const std::uint64_t x = engine_();
        return static_cast<double>((x >> 11) + 1) * 0x1.0p-53;
    }

    std::uint64_t next_u64() { return engine_(); }

private:
    std::mt19937_64 engine_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace ffbsde
