#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace zfit {

/// Deterministic random source. Wraps std::mt19937_64 (whose output sequence
/// is fixed by the standard) and maps raw 64-bit draws to doubles by hand, so
/// every stream is reproducible bit-for-bit regardless of the standard
/// library's distribution implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform on [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Log-uniform on [lo, hi), lo > 0.
    double log_uniform(double lo, double hi);

    /// Standard normal via Box-Muller. Uses two uniforms per draw and keeps
    /// no cached spare, so the stream position is a fixed function of the
    /// number of calls.
    double normal();

private:
    std::mt19937_64 eng_;
};

/// FNV-1a 64-bit hash of a byte string.
std::uint64_t hash_bytes(std::string_view bytes) noexcept;

/// One round of splitmix64 output for the given state.
std::uint64_t splitmix64(std::uint64_t state) noexcept;

/// Derives an independent substream seed from a global seed, a purpose tag,
/// and up to two numeric coordinates. Streams for distinct (tag, a, b)
/// tuples are decorrelated, so concurrent tasks can draw independently of
/// scheduling order.
std::uint64_t derive_stream(std::uint64_t global_seed, std::string_view tag,
                            std::uint64_t a = 0, std::uint64_t b = 0) noexcept;

} // namespace zfit
