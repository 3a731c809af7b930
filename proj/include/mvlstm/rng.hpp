#pragma once

#include <cstdint>
#include <cmath>
#include <random>
#include <vector>

namespace mvlstm {

// Stream splitting for reproducible parallel generation: every consumer of
// randomness derives its own seed from (master, stream tag, index) and owns
// an independent engine, so results do not depend on evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(master ^ (0xa0761d6478bd642fULL + stream)) + index);
}

// mt19937_64 with hand-rolled distributions. The engine's output sequence is
// pinned by the standard; std::uniform_real_distribution and friends are not,
// so conversions are done here to keep seeded runs bit-identical everywhere.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // [0,1) with 53 random bits
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller (two draws per value, no cached spare)
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // [0, bound); modulo bias is irrelevant at the bounds used here
    std::uint64_t integer(std::uint64_t bound) { return engine_() % bound; }

    template <class T>
    void shuffle(std::vector<T>& xs) {
        for (std::size_t i = xs.size(); i > 1; --i) {
            std::swap(xs[i - 1], xs[integer(i)]);
        }
    }

    std::uint64_t raw() { return engine_(); }

  private:
    std::mt19937_64 engine_;
};

}  // namespace mvlstm
