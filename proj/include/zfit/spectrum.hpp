#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

namespace zfit {

/// An impedance spectrum: a frequency grid in Hz plus complex impedance
/// samples stored in rectangular form. Polar views (magnitude, phase) are
/// computed on demand; phase is in radians.
struct Spectrum {
    std::vector<double> freqs;    // Hz, strictly increasing, positive
    std::vector<double> z_real;   // ohms
    std::vector<double> z_imag;   // ohms

    std::size_t size() const noexcept { return freqs.size(); }

    std::complex<double> z(std::size_t i) const { return {z_real[i], z_imag[i]}; }

    double magnitude(std::size_t i) const { return std::hypot(z_real[i], z_imag[i]); }

    double phase(std::size_t i) const { return std::atan2(z_imag[i], z_real[i]); }

    /// Checks the structural invariants: equal-length nonempty columns,
    /// strictly increasing positive frequencies, finite values, nonzero
    /// magnitudes. Throws ConfigError on violation.
    void validate() const;

    bool same_grid(const Spectrum& other, double rel_tol = 1e-12) const;
};

} // namespace zfit
