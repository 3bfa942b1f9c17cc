#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "zfit/circuit.hpp"
#include "zfit/rng.hpp"
#include "zfit/spectrum.hpp"

namespace zfit {

/// The built-in circuit set used when a config names no circuits: six
/// series/parallel ladders of R, L and CPE elements spanning one to three
/// time constants.
const std::vector<std::string>& default_circuit_set();

/// Settings for synthetic dataset generation.
struct GenerationConfig {
    std::vector<std::string> circuits = default_circuit_set();
    int spectra_per_circuit = 100;
    double freq_min = 1e-3;           // Hz
    double freq_max = 1e6;            // Hz
    int points_per_decade = 7;
    double noise_sigma_rel = 0.002;   // relative per-component noise
    std::uint64_t rng_seed = 1;

    /// Throws ConfigError unless 0 < freq_min < freq_max, the grid has at
    /// least 10 points, spectra_per_circuit >= 1, noise_sigma_rel >= 0 and
    /// at least one circuit is listed.
    void validate() const;
};

/// One synthetic spectrum together with the circuit and the exact parameter
/// values it was generated from.
struct LabeledSpectrum {
    std::string id;            // "<circuit index>-<sequence index>"
    std::string circuit;
    ParameterSet true_params;  // noise-free values, canonical order
    Spectrum spectrum;
};

/// Log-spaced frequency grid from freq_min to freq_max with the given
/// density, ascending. Point k sits at freq_min * 10^(k / points_per_decade).
std::vector<double> frequency_grid(double freq_min, double freq_max, int points_per_decade);

/// One random draw per schema entry: log-uniform over the sampling bounds
/// for log-scaled parameters, uniform otherwise.
ParameterSet sample_parameters(const CircuitModel& model, Rng& rng);

/// Impedance of the model on the grid where every parameter value v is
/// independently perturbed to v*(1 + noise_sigma_rel*g), g standard normal,
/// at each frequency point. A draw that leaves a parameter nonpositive is
/// retried at most 100 times, then EvalError.
Spectrum synthesize_spectrum(const CircuitModel& model, const ParameterSet& params,
                             std::span<const double> freqs_hz, double noise_sigma_rel,
                             Rng& rng);

/// Generates spectra_per_circuit spectra per circuit, deterministically in
/// config.rng_seed. Each spectrum draws from its own derived stream, so the
/// output is identical for any jobs count or scheduling. Stored truth is in
/// canonical parameter order.
std::vector<LabeledSpectrum> generate_dataset(const GenerationConfig& config, int jobs = 1);

} // namespace zfit
