#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "zfit/circuit.hpp"
#include "zfit/loss.hpp"
#include "zfit/rng.hpp"
#include "zfit/spectrum.hpp"

namespace zfit {

struct FitOptions {
    double chi2_threshold = 0.01;
    double r2_threshold = 0.9;
    int max_restarts = 20;
    int max_evaluations_per_restart = 1000;
    std::uint64_t rng_seed = 1;
    GuardConfig guards;
    double gradient_tol = 1e-10;
    double step_tol = 1e-10;
    double loss_change_tol = 1e-12;

    void validate() const; // throws ConfigError on nonpositive knobs
};

struct BasinHopOptions {
    int hop_count = 50;
    double step_scale = 0.5;   // Gaussian step in internal (log) units
    double temperature = 1.0;  // Metropolis acceptance temperature

    void validate() const;
};

/// Result of a multi-start or basin-hopping fit. Fit quality (chi2 and the
/// r2 values) is always measured in the rectangular domain, whatever loss
/// the fit trained on, and best_params is the best attempt under the
/// (chi2 ascending, r2_score descending) lexicographic order even when the
/// fit never converged.
struct FitOutcome {
    ParameterSet best_params;
    bool converged = false;
    int restarts_used = 0;
    double chi2 = 0.0;
    double r2_score = 0.0;
    double r2_magnitude = 0.0;
    double r2_phase = 0.0;
    double final_loss = 0.0;   // training-loss value at best_params
    double wall_time = 0.0;    // seconds, monotonic clock
    long evaluations = 0;      // residual evaluations across all restarts
};

/// Fitting box of one parameter: the sampling range widened by one decade
/// on each side for log-scale parameters; [0.05, 1.0] for a CPE exponent.
std::pair<double, double> fit_bounds(const ParamDescriptor& d);

/// Random guess inside the sampling bounds, one draw per descriptor in
/// schema order (log-uniform or uniform per the descriptor's scale).
ParameterSet sample_initial_guess(const std::vector<ParamDescriptor>& schema, Rng& rng);

/// Residual system of one (model, observed, loss) triple over internal
/// coordinates: log-scale parameters are optimized as logarithms, CPE
/// exponents linearly. Bounds are the widened fitting box.
class ResidualProblem {
public:
    ResidualProblem(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                    const GuardConfig& guards);

    std::size_t dim() const noexcept { return lower_.size(); }
    std::size_t residual_count() const noexcept { return 2 * observed_.size(); }
    const Eigen::VectorXd& lower() const noexcept { return lower_; }
    const Eigen::VectorXd& upper() const noexcept { return upper_; }

    /// External parameters to clamped internal coordinates.
    Eigen::VectorXd to_internal(const ParameterSet& params) const;
    ParameterSet to_external(const Eigen::VectorXd& u) const;

    /// Residual vector at u. Returns false if any entry is non-finite.
    bool eval(const Eigen::VectorXd& u, Eigen::VectorXd& r) const;

    /// Residuals plus the Jacobian d r / d u (analytic, chain rule through
    /// the impedance gradient). Returns false on non-finite values.
    bool eval_jacobian(const Eigen::VectorXd& u, Eigen::VectorXd& r, Eigen::MatrixXd& J) const;

private:
    const CircuitModel& model_;
    const Spectrum& observed_;
    LossKind kind_;
    std::vector<detail::ObservedPoint> obs_;
    std::vector<bool> log_scale_;
    Eigen::VectorXd lower_, upper_;
};

struct LocalResult {
    ParameterSet params;
    double loss = 0.0;
    int evaluations = 0;
    bool ok = false; // false when the residuals were non-finite at the start
};

/// One bounded trust-region least-squares descent from init (clamped into
/// the fitting box). The returned loss never exceeds the loss at init.
LocalResult fit_once(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                     const ParameterSet& init, const FitOptions& options = {});

/// Multi-start fit: repeat fit_once from fresh random guesses, score every
/// attempt by rectangular-domain chi2 and r2, keep the lexicographic best,
/// and stop as soon as an attempt meets both thresholds or the restart cap
/// is reached. best_params is canonicalized.
FitOutcome fit_multistart(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                          const FitOptions& options = {});

/// Basin-hopping: one local fit from a random guess, then hop_count rounds
/// of Gaussian perturbation in internal coordinates, local descent and
/// Metropolis acceptance on the training loss. Always spends the full hop
/// budget; restarts_used counts every local descent.
FitOutcome basinhop_fit(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                        const FitOptions& options = {}, const BasinHopOptions& hops = {});

} // namespace zfit
