#include "mead/rng.hpp"

#include <algorithm>
#include <numeric>

namespace mead {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(mix64(seed)), static_cast<std::uint32_t>(mix64(seed) >> 32),
                      static_cast<std::uint32_t>(mix64(seed ^ mix64(stream))),
                      static_cast<std::uint32_t>(mix64(stream + 0x632be59bd9b4e019ULL) >> 32)};
    engine_.seed(seq);
}

double Rng::uniform() { return uniform_(engine_); }

double Rng::normal() { return normal_(engine_); }

double Rng::gamma(double shape, double scale) {
    std::gamma_distribution<double> dist(shape, scale);
    return dist(engine_);
}

double Rng::poisson(double mean) {
    if (!(mean > 0.0)) return 0.0;
    // Beyond 2^62 the integer distribution overflows; a normal approximation is exact to rounding there.
    if (mean > 1e15) return std::max(0.0, std::round(mean + std::sqrt(mean) * normal()));
    std::poisson_distribution<long long> dist(mean);
    return static_cast<double>(dist(engine_));
}

Vector Rng::dirichlet(const Vector& alpha) {
    Vector x(alpha.size());
    for (Index k = 0; k < alpha.size(); ++k) x(k) = alpha(k) > 0.0 ? gamma(alpha(k), 1.0) : 0.0;
    const double total = x.sum();
    if (!(total > 0.0)) {
        // All draws underflowed (tiny concentrations): fall back to the largest-alpha vertex.
        x.setZero();
        Index best = 0;
        alpha.maxCoeff(&best);
        x(best) = 1.0;
        return x;
    }
    return x / total;
}

std::vector<int> Rng::permutation(int n) {
    std::vector<int> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), 0);
    // Fisher-Yates with our own index draws: std::shuffle's algorithm is unspecified.
    for (int i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<int> pick(0, i);
        std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(pick(engine_))]);
    }
    return p;
}

}  // namespace mead
