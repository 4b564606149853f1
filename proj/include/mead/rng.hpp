#ifndef MEAD_RNG_HPP
#define MEAD_RNG_HPP

#include "mead/core.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace mead {

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x);

/**
 * Random stream identified by (seed, stream).
 *
 * Streams with different ids are seeded through a 64-bit mixing function so that
 * replicate r of an experiment is reproducible regardless of how replicates are
 * scheduled across threads.
 */
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

    double uniform();
    double normal();
    double gamma(double shape, double scale);
    double poisson(double mean);
    /// Components with alpha <= 0 are fixed at zero.
    Vector dirichlet(const Vector& alpha);
    /// Random permutation of 0..n-1.
    std::vector<int> permutation(int n);

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace mead

#endif  // MEAD_RNG_HPP
