#pragma once

#include <cstdint>
#include <vector>

// Deterministic PRNG: xoshiro256++ seeded via splitmix64. One master seed per
// run; named sub-streams keep the source/target/init/sampler draws independent
// so changing one consumer never perturbs another.

namespace cat {

// Named sub-stream ids (derive_seed(master, stream)).
namespace streams {
inline constexpr std::uint64_t data_src = 0;
inline constexpr std::uint64_t data_tgt = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t sampler = 3;
inline constexpr std::uint64_t adist = 4;
inline constexpr std::uint64_t embed = 5;
}  // namespace streams

std::uint64_t splitmix64_next(std::uint64_t& state);

// (stream+1)-th splitmix64 output of the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream);

class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();
    // in [0,1), 53-bit resolution
    double uniform01();
    // in [lo,hi)
    double uniform(double lo, double hi);
    // standard normal via Box-Muller (second draw cached)
    double normal();
    // in [0,n); modulo of next_u64 (bias < n/2^64, irrelevant at our sizes)
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t s_[4];
    bool has_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace cat
