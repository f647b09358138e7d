#pragma once

#include <cmath>
#include <cstdint>

namespace regulargpt {

// Deterministic RNG with explicit sampling routines. std::mt19937 would do,
// but the distributions in <random> are implementation-defined, so we keep
// the whole sampling path under our control.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {
        // a few warmup rounds so nearby seeds decorrelate
        for (int i = 0; i < 4; ++i) next();
    }

    // Derives an independent stream, e.g. rng.fork("eval").
    Rng fork(uint64_t stream_id) const {
        Rng r(state_ ^ (0x9e3779b97f4a7c15ULL * (stream_id + 1)));
        return r;
    }

    uint64_t next() {
        // splitmix64
        uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform integer in [0, bound)
    uint64_t below(uint64_t bound) {
        // rejection sampling to avoid modulo bias
        uint64_t threshold = (0ULL - bound) % bound;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    // uniform real in [0, 1)
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    double gaussian() {
        // Box-Muller, one value per call (cache discarded for simplicity)
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 1e-300) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

  private:
    uint64_t state_;
};

}  // namespace regulargpt
