#pragma once

#include <array>
#include <complex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "zfit/spectrum.hpp"

namespace zfit {

/// The six residual weightings. UW and B are unweighted (rectangular and
/// polar); X2 uses modulus weighting; PW proportional weighting; LogB and
/// LogBW work on log-magnitude and phase. Logarithms are natural and phase
/// is in radians throughout.
enum class LossKind { UW, X2, PW, B, LogB, LogBW };

inline constexpr std::array<LossKind, 6> kAllLossKinds = {
    LossKind::UW, LossKind::X2, LossKind::PW, LossKind::B, LossKind::LogB, LossKind::LogBW};

/// CLI/config token for a loss kind: "uw", "x2", "pw", "b", "log-b", "log-bw".
std::string_view loss_token(LossKind kind) noexcept;

std::optional<LossKind> parse_loss_token(std::string_view token) noexcept;

/// Comma-separated list of all valid tokens, for error messages.
std::string valid_loss_tokens();

/// Clamp thresholds for the singular denominators of the proportional
/// weightings. A denominator d with |d| < eps is replaced by sign(d) * eps
/// (sign(0) counts as positive).
struct GuardConfig {
    double eps_component = 1e-12;     // ohms, for Z' and Z'' (PW)
    double eps_phase = 1e-6;          // radians, for theta (LogBW)
    double eps_log_magnitude = 1e-6;  // for ln|Z| (LogBW)
};

/// Weighted residual vector in block layout: the first n entries are the
/// first channel (real / magnitude / log-magnitude), the last n the second
/// (imaginary / phase). The spectra must share a frequency grid and the
/// observed magnitudes must be positive. Throws EvalError with the point
/// index if a residual comes out non-finite.
std::vector<double> residuals(LossKind kind, const Spectrum& observed, const Spectrum& predicted,
                              const GuardConfig& guards = {});

/// Sum of squared residual entries.
double loss_value(LossKind kind, const Spectrum& observed, const Spectrum& predicted,
                  const GuardConfig& guards = {});

namespace detail {

/// Observed-side quantities of one frequency point, precomputed once per
/// fit: the raw components, polar views, and guarded denominators.
struct ObservedPoint {
    double zr, zi;
    double mag, phase, log_mag;
    double guarded_zr, guarded_zi;      // PW denominators
    double guarded_phase;               // LogBW phase denominator
    double guarded_log_mag;             // LogBW magnitude denominator
};

std::vector<ObservedPoint> precompute_observed(const Spectrum& observed,
                                               const GuardConfig& guards);

/// Residual pair of one point plus its partial derivatives with respect to
/// the predicted rectangular components (x = Z'_m, y = Z''_m).
struct PointResidual {
    double ra, rb;
    double dra_dx, dra_dy;
    double drb_dx, drb_dy;
};

/// Evaluates one point's residuals (and, when with_grad, the partials).
/// Returns false if any produced value is non-finite.
bool point_residual(LossKind kind, const ObservedPoint& obs, std::complex<double> zm,
                    bool with_grad, PointResidual& out) noexcept;

} // namespace detail

} // namespace zfit
