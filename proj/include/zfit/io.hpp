#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "zfit/datagen.hpp"
#include "zfit/spectrum.hpp"

namespace zfit {

/// One double as text with 17 significant digits, enough to round-trip.
std::string format_double(double v);

/// RFC 4180 quoting: fields containing a comma, quote or line break are
/// wrapped in quotes with embedded quotes doubled; anything else passes
/// through unchanged.
std::string csv_field(const std::string& field);

/// Writes a spectrum as CSV with header "freq_hz,z_real,z_imag", one row
/// per point in ascending frequency, full double precision.
void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s);

/// Reads a spectrum CSV. Malformed content raises IoError naming the file
/// and the 1-based line; the result satisfies Spectrum::validate().
Spectrum read_spectrum_csv(const std::filesystem::path& path);

/// Writes a generated dataset as one "<id>.csv" per spectrum plus a
/// "manifest.json" recording the config, the seed and each spectrum's true
/// parameters keyed by schema name. Creates the directory if needed.
void write_dataset(const std::filesystem::path& dir, const GenerationConfig& config,
                   const std::vector<LabeledSpectrum>& dataset);

/// Loads a dataset directory written by write_dataset. True parameters are
/// realigned to schema order regardless of manifest key order. When config
/// is non-null the manifest's config block is decoded into it.
std::vector<LabeledSpectrum> read_dataset(const std::filesystem::path& dir,
                                          GenerationConfig* config = nullptr);

/// FNV-1a hash of the file's bytes as 16 lowercase hex digits.
std::string file_hash(const std::filesystem::path& path);

} // namespace zfit
