#pragma once

#include <cstdint>
#include <random>

namespace tomato {

// Portable seeded generator. The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the distributions below are written out
// here instead of using <random>'s, whose algorithms are implementation-defined.
//
//   uniform()      53 high bits of one draw, scaled to [0, 1)
//   normal()       Box-Muller, cosine branch, two uniforms per draw
//   gamma(k)       Marsaglia-Tsang squeeze (k < 1 boosted by U^(1/k))
//   beta(a, b)     X / (X + Y), X ~ gamma(a), Y ~ gamma(b)
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    double uniform();
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    // Uniform integer in [0, n). Rejection-free multiply-shift on 53 bits.
    std::uint64_t below(std::uint64_t n);
    double normal(double mean = 0.0, double stddev = 1.0);
    double gamma(double shape);
    double beta(double a, double b);

private:
    std::mt19937_64 engine_;
};

}  // namespace tomato
