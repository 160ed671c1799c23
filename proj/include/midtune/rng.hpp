#ifndef MIDTUNE_RNG_HPP
#define MIDTUNE_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace midtune {

// Seeded random generator with explicitly pinned output mappings.
// std::mt19937_64 output is fixed by the standard, and every mapping below
// (unit doubles, bounded ints, shuffles) is implemented here rather than via
// std::*_distribution, so identical seeds give identical streams on any
// platform. All randomness in the library flows through instances of this
// class; there is no global RNG.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : seed_(seed), eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n) { return static_cast<std::size_t>(eng_() % n); }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = below(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream for (seed, salt) pairs, e.g. per epoch or per
    // partition, so results do not depend on interleaving.
    Rng derive(std::uint64_t salt) const { return Rng(mix(seed_, salt)); }

    std::uint64_t seed() const { return seed_; }

  private:
    // splitmix64 finalizer over the combined value.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

}  // namespace midtune

#endif  // MIDTUNE_RNG_HPP
