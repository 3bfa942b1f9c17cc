#include "zfit/spectrum.hpp"

#include "zfit/error.hpp"

namespace zfit {

void Spectrum::validate() const {
    if (freqs.empty())
        throw ConfigError("spectrum is empty");
    if (z_real.size() != freqs.size() || z_imag.size() != freqs.size())
        throw ConfigError("spectrum column lengths differ");
    for (std::size_t i = 0; i < freqs.size(); ++i) {
        if (!(freqs[i] > 0.0) || !std::isfinite(freqs[i]))
            throw ConfigError("frequency must be positive and finite (row " + std::to_string(i) + ")");
        if (i > 0 && !(freqs[i] > freqs[i - 1]))
            throw ConfigError("frequencies must be strictly increasing (row " + std::to_string(i) + ")");
        if (!std::isfinite(z_real[i]) || !std::isfinite(z_imag[i]))
            throw ConfigError("impedance must be finite (row " + std::to_string(i) + ")");
        if (magnitude(i) <= 0.0)
            throw ConfigError("impedance magnitude must be positive (row " + std::to_string(i) + ")");
    }
}

bool Spectrum::same_grid(const Spectrum& other, double rel_tol) const {
    if (other.size() != size()) return false;
    for (std::size_t i = 0; i < size(); ++i) {
        const double scale = std::max(std::abs(freqs[i]), std::abs(other.freqs[i]));
        if (std::abs(freqs[i] - other.freqs[i]) > rel_tol * scale) return false;
    }
    return true;
}

} // namespace zfit
