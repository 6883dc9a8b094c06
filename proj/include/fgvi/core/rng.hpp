#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace fgvi::core {

// Deterministic random source. All randomness in the project flows through
// this class so that a fixed seed reproduces runs bit-exactly on one machine.
// normal() uses Box-Muller on raw uniforms instead of std::normal_distribution
// to stay independent of the standard library's unspecified algorithm.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(splitmix(seed)), gen_(seed_) {}

    // Independent stream derived from this seed and a stream id.
    Rng fork(std::uint64_t stream) const {
        return Rng(seed_ ^ splitmix(stream + 0x9e3779b97f4a7c15ull));
    }

    double uniform() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * (1.0 / 9007199254740992.0);
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        double u1 = uniform(), u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    // Integer in [lo, hi] inclusive.
    std::int64_t randint(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(uniform() * static_cast<double>(hi - lo + 1));
    }

    std::uint64_t bits() { return gen_(); }

private:
    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_ = 0;
    std::mt19937_64 gen_;
};

}  // namespace fgvi::core
