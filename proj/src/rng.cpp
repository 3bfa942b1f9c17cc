#include "zfit/rng.hpp"

#include <cmath>

namespace zfit {

double Rng::log_uniform(double lo, double hi) {
    return std::exp(uniform(std::log(lo), std::log(hi)));
}

double Rng::normal() {
    // u1 in (0, 1] so the log is finite.
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::uint64_t hash_bytes(std::string_view bytes) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t state) noexcept {
    std::uint64_t z = state + 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::uint64_t derive_stream(std::uint64_t global_seed, std::string_view tag,
                            std::uint64_t a, std::uint64_t b) noexcept {
    std::uint64_t h = splitmix64(global_seed);
    h = splitmix64(h ^ hash_bytes(tag));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    return h;
}

} // namespace zfit
