#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace sems {

/// Deterministic random source. Distributions are implemented here rather than
/// taken from <random> so that fixed seeds give bit-identical streams on every
/// standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : eng_(seed) {}

    /// uniform double in [0, 1)
    double uniform() { return (eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// uniform integer in [0, n)
    int index(int n) { return n > 0 ? static_cast<int>(uniform() * n) : 0; }

    /// standard normal via Box-Muller
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(6.283185307179586 * u2);
        have_spare_ = true;
        return r * std::cos(6.283185307179586 * u2);
    }

    /// multiplicative lognormal factor with median 1
    double lognormal_factor(double sigma) { return std::exp(sigma * normal()); }

    std::uint64_t raw() { return eng_(); }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace sems
