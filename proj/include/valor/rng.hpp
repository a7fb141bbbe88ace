#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace valor {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Independent named substream of a run seed ("datagen", "router-noise",
// "dropout", "augment", "sampler", ...).
inline Rng substream(std::uint64_t seed, std::string_view name)
{
    return Rng(splitmix64(seed ^ fnv1a(name)));
}

inline double uniform01(Rng& rng)
{
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal(Rng& rng, double mean = 0.0, double sd = 1.0)
{
    return std::normal_distribution<double>(mean, sd)(rng);
}

inline double beta_sample(Rng& rng, double a, double b)
{
    const double x = std::gamma_distribution<double>(a, 1.0)(rng);
    const double y = std::gamma_distribution<double>(b, 1.0)(rng);
    if (x + y == 0.0)
        return 0.5;
    return x / (x + y);
}

} // namespace valor
