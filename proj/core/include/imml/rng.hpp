#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace imml {

// Counter-based pseudorandom generator. A generator is fully described by
// (seed, counter), so identical seeds give identical draw sequences on every
// platform, and substreams obtained through split() are independent of how
// many draws the parent has made.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    // Derives an independent child stream. Adding draws to the parent never
    // shifts a child's sequence.
    Rng split(std::uint64_t tag) const;
    Rng split(std::string_view tag) const;

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller.
    double normal();
    double normal(double mean, double sd);

    std::vector<double> uniform_vec(std::size_t n, double lo, double hi);
    std::vector<double> normal_vec(std::size_t n);

    // Integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n);

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        if (v.size() < 2) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(below(i + 1));
            std::swap(v[i], v[j]);
        }
    }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
};

}  // namespace imml
