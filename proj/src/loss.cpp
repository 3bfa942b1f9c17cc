#include "zfit/loss.hpp"

#include <cmath>
#include <cstddef>

#include "zfit/error.hpp"

namespace zfit {

std::string_view loss_token(LossKind kind) noexcept {
    switch (kind) {
        case LossKind::UW: return "uw";
        case LossKind::X2: return "x2";
        case LossKind::PW: return "pw";
        case LossKind::B: return "b";
        case LossKind::LogB: return "log-b";
        case LossKind::LogBW: return "log-bw";
    }
    return "";
}

std::optional<LossKind> parse_loss_token(std::string_view token) noexcept {
    for (LossKind kind : kAllLossKinds)
        if (token == loss_token(kind)) return kind;
    return std::nullopt;
}

std::string valid_loss_tokens() {
    std::string out;
    for (LossKind kind : kAllLossKinds) {
        if (!out.empty()) out += ", ";
        out += loss_token(kind);
    }
    return out;
}

namespace detail {

namespace {

// |d| < eps collapses to sign(d) * eps; the sign of zero counts as positive
// so a vanishing denominator still yields a finite, positively signed guard.
double guarded(double d, double eps) noexcept {
    if (std::abs(d) >= eps) return d;
    return std::signbit(d) ? -eps : eps;
}

} // namespace

std::vector<ObservedPoint> precompute_observed(const Spectrum& observed,
                                               const GuardConfig& guards) {
    std::vector<ObservedPoint> out(observed.size());
    for (std::size_t i = 0; i < observed.size(); ++i) {
        ObservedPoint& p = out[i];
        p.zr = observed.z_real[i];
        p.zi = observed.z_imag[i];
        p.mag = observed.magnitude(i);
        p.phase = observed.phase(i);
        p.log_mag = std::log(p.mag);
        p.guarded_zr = guarded(p.zr, guards.eps_component);
        p.guarded_zi = guarded(p.zi, guards.eps_component);
        p.guarded_phase = guarded(p.phase, guards.eps_phase);
        p.guarded_log_mag = guarded(p.log_mag, guards.eps_log_magnitude);
    }
    return out;
}

bool point_residual(LossKind kind, const ObservedPoint& obs, std::complex<double> zm,
                    bool with_grad, PointResidual& out) noexcept {
    const double x = zm.real();
    const double y = zm.imag();
    out = {};

    switch (kind) {
        case LossKind::UW: {
            out.ra = obs.zr - x;
            out.rb = obs.zi - y;
            if (with_grad) {
                out.dra_dx = -1.0;
                out.drb_dy = -1.0;
            }
            break;
        }
        case LossKind::X2: {
            out.ra = (obs.zr - x) / obs.mag;
            out.rb = (obs.zi - y) / obs.mag;
            if (with_grad) {
                out.dra_dx = -1.0 / obs.mag;
                out.drb_dy = -1.0 / obs.mag;
            }
            break;
        }
        case LossKind::PW: {
            out.ra = (obs.zr - x) / obs.guarded_zr;
            out.rb = (obs.zi - y) / obs.guarded_zi;
            if (with_grad) {
                out.dra_dx = -1.0 / obs.guarded_zr;
                out.drb_dy = -1.0 / obs.guarded_zi;
            }
            break;
        }
        case LossKind::B:
        case LossKind::LogB:
        case LossKind::LogBW: {
            // Same magnitude arithmetic as the observed side, so a perfect
            // prediction yields exactly zero residuals.
            const double mag = std::hypot(x, y);
            if (mag <= 0.0) return false;
            const double mag2 = mag * mag;
            const double phase = std::atan2(y, x);
            double ra, rb;
            double dra_dx = 0.0, dra_dy = 0.0;
            if (kind == LossKind::B) {
                ra = obs.mag - mag;
                if (with_grad) {
                    dra_dx = -x / mag;
                    dra_dy = -y / mag;
                }
            } else {
                ra = obs.log_mag - std::log(mag);
                if (with_grad) {
                    dra_dx = -x / mag2;
                    dra_dy = -y / mag2;
                }
            }
            rb = obs.phase - phase;
            // d atan2(y, x) = (-y dx + x dy) / (x^2 + y^2)
            double drb_dx = 0.0, drb_dy = 0.0;
            if (with_grad) {
                drb_dx = y / mag2;
                drb_dy = -x / mag2;
            }
            if (kind == LossKind::LogBW) {
                ra /= obs.guarded_log_mag;
                rb /= obs.guarded_phase;
                if (with_grad) {
                    dra_dx /= obs.guarded_log_mag;
                    dra_dy /= obs.guarded_log_mag;
                    drb_dx /= obs.guarded_phase;
                    drb_dy /= obs.guarded_phase;
                }
            }
            out.ra = ra;
            out.rb = rb;
            out.dra_dx = dra_dx;
            out.dra_dy = dra_dy;
            out.drb_dx = drb_dx;
            out.drb_dy = drb_dy;
            break;
        }
    }

    if (!std::isfinite(out.ra) || !std::isfinite(out.rb)) return false;
    if (with_grad && (!std::isfinite(out.dra_dx) || !std::isfinite(out.dra_dy) ||
                      !std::isfinite(out.drb_dx) || !std::isfinite(out.drb_dy)))
        return false;
    return true;
}

} // namespace detail

std::vector<double> residuals(LossKind kind, const Spectrum& observed, const Spectrum& predicted,
                              const GuardConfig& guards) {
    observed.validate();
    if (!observed.same_grid(predicted))
        throw ConfigError("observed and predicted spectra are on different frequency grids");

    const std::size_t n = observed.size();
    const auto obs = detail::precompute_observed(observed, guards);
    std::vector<double> r(2 * n);
    detail::PointResidual pr;
    for (std::size_t i = 0; i < n; ++i) {
        if (!detail::point_residual(kind, obs[i], predicted.z(i), false, pr))
            throw EvalError("non-finite residual", i);
        r[i] = pr.ra;
        r[n + i] = pr.rb;
    }
    return r;
}

double loss_value(LossKind kind, const Spectrum& observed, const Spectrum& predicted,
                  const GuardConfig& guards) {
    const auto r = residuals(kind, observed, predicted, guards);
    double sum = 0.0;
    for (double v : r) sum += v * v;
    return sum;
}

} // namespace zfit
