#include "zfit/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <complex>
#include <limits>

#include "zfit/error.hpp"
#include "zfit/metrics.hpp"

namespace zfit {

void FitOptions::validate() const {
    if (!(chi2_threshold > 0.0) || !(r2_threshold > 0.0))
        throw ConfigError("fit thresholds must be positive");
    if (max_restarts < 1) throw ConfigError("max_restarts must be at least 1");
    if (max_evaluations_per_restart < 1)
        throw ConfigError("max_evaluations_per_restart must be at least 1");
    if (!(gradient_tol > 0.0) || !(step_tol > 0.0) || !(loss_change_tol > 0.0))
        throw ConfigError("solver tolerances must be positive");
}

void BasinHopOptions::validate() const {
    if (hop_count < 1) throw ConfigError("hop_count must be at least 1");
    if (!(step_scale >= 0.0)) throw ConfigError("step_scale must be nonnegative");
    if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
}

std::pair<double, double> fit_bounds(const ParamDescriptor& d) {
    if (d.role == ParamRole::CpeExponent) return {0.05, 1.0};
    return {d.lower / 10.0, d.upper * 10.0};
}

ParameterSet sample_initial_guess(const std::vector<ParamDescriptor>& schema, Rng& rng) {
    ParameterSet p;
    p.reserve(schema.size());
    for (const auto& d : schema)
        p.push_back(d.scale == SamplingScale::LogUniform ? rng.log_uniform(d.lower, d.upper)
                                                         : rng.uniform(d.lower, d.upper));
    return p;
}

ResidualProblem::ResidualProblem(const CircuitModel& model, const Spectrum& observed,
                                 LossKind kind, const GuardConfig& guards)
    : model_(model), observed_(observed), kind_(kind) {
    observed.validate();
    obs_ = detail::precompute_observed(observed, guards);
    const auto& schema = model.schema();
    const auto m = static_cast<Eigen::Index>(schema.size());
    lower_.resize(m);
    upper_.resize(m);
    log_scale_.resize(schema.size());
    for (Eigen::Index k = 0; k < m; ++k) {
        const auto& d = schema[static_cast<std::size_t>(k)];
        const auto [lo, hi] = fit_bounds(d);
        const bool log_scale = d.scale == SamplingScale::LogUniform;
        log_scale_[static_cast<std::size_t>(k)] = log_scale;
        lower_[k] = log_scale ? std::log(lo) : lo;
        upper_[k] = log_scale ? std::log(hi) : hi;
    }
}

Eigen::VectorXd ResidualProblem::to_internal(const ParameterSet& params) const {
    if (params.size() != log_scale_.size())
        throw ConfigError("parameter count does not match the model schema");
    Eigen::VectorXd u(static_cast<Eigen::Index>(params.size()));
    for (Eigen::Index k = 0; k < u.size(); ++k) {
        const double v = params[static_cast<std::size_t>(k)];
        double x = log_scale_[static_cast<std::size_t>(k)] ? std::log(v) : v;
        u[k] = std::clamp(x, lower_[k], upper_[k]);
    }
    return u;
}

ParameterSet ResidualProblem::to_external(const Eigen::VectorXd& u) const {
    ParameterSet p(static_cast<std::size_t>(u.size()));
    for (Eigen::Index k = 0; k < u.size(); ++k)
        p[static_cast<std::size_t>(k)] =
            log_scale_[static_cast<std::size_t>(k)] ? std::exp(u[k]) : u[k];
    return p;
}

bool ResidualProblem::eval(const Eigen::VectorXd& u, Eigen::VectorXd& r) const {
    const ParameterSet p = to_external(u);
    const auto n = static_cast<Eigen::Index>(observed_.size());
    r.resize(2 * n);
    detail::PointResidual pr;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto zm = model_.impedance_at(p, observed_.freqs[static_cast<std::size_t>(i)]);
        if (!detail::point_residual(kind_, obs_[static_cast<std::size_t>(i)], zm, false, pr))
            return false;
        r[i] = pr.ra;
        r[n + i] = pr.rb;
    }
    return true;
}

bool ResidualProblem::eval_jacobian(const Eigen::VectorXd& u, Eigen::VectorXd& r,
                                    Eigen::MatrixXd& J) const {
    const ParameterSet p = to_external(u);
    const auto n = static_cast<Eigen::Index>(observed_.size());
    const auto m = static_cast<Eigen::Index>(dim());
    r.resize(2 * n);
    J.resize(2 * n, m);
    std::vector<std::complex<double>> dz(static_cast<std::size_t>(m));
    detail::PointResidual pr;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::complex<double> z;
        model_.impedance_grad(p, observed_.freqs[static_cast<std::size_t>(i)], z, dz);
        if (!detail::point_residual(kind_, obs_[static_cast<std::size_t>(i)], z, true, pr))
            return false;
        r[i] = pr.ra;
        r[n + i] = pr.rb;
        for (Eigen::Index k = 0; k < m; ++k) {
            // d p_k / d u_k is p_k in log coordinates, 1 otherwise.
            const double chain = log_scale_[static_cast<std::size_t>(k)]
                                     ? p[static_cast<std::size_t>(k)]
                                     : 1.0;
            const double dx = dz[static_cast<std::size_t>(k)].real() * chain;
            const double dy = dz[static_cast<std::size_t>(k)].imag() * chain;
            J(i, k) = pr.dra_dx * dx + pr.dra_dy * dy;
            J(n + i, k) = pr.drb_dx * dx + pr.drb_dy * dy;
        }
    }
    return r.allFinite() && J.allFinite();
}

namespace {

// Levenberg-Marquardt descent with Marquardt diagonal scaling and an active
// set for the box bounds: coordinates pinned at a bound with an outward
// gradient are frozen out of the damped solve, so the step lives entirely in
// the free subspace. Accepts only cost decreases.
LocalResult descend(const ResidualProblem& prob, Eigen::VectorXd u, const FitOptions& opt) {
    LocalResult result;
    const auto m = static_cast<Eigen::Index>(prob.dim());
    int evals = 0;

    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    ++evals;
    if (!prob.eval_jacobian(u, r, J)) {
        result.params = prob.to_external(u);
        result.evaluations = evals;
        return result; // restart signal
    }
    double cost = r.squaredNorm();
    double lambda = 1e-3;
    double nu = 2.0;

    Eigen::MatrixXd JtJ(m, m);
    Eigen::VectorXd g(m), diag(m), step(m), u_trial(m), r_trial;
    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(m));
    bool done = false;
    int slow_steps = 0;
    while (!done && evals < opt.max_evaluations_per_restart) {
        g.noalias() = J.transpose() * r;

        // Gradient components pushing out of an active bound cannot be
        // followed; those coordinates leave the solve for this iteration.
        free.clear();
        double gmax = 0.0;
        for (Eigen::Index k = 0; k < m; ++k) {
            const bool blocked_low = u[k] <= prob.lower()[k] && g[k] > 0.0;
            const bool blocked_high = u[k] >= prob.upper()[k] && g[k] < 0.0;
            if (blocked_low || blocked_high) continue;
            free.push_back(k);
            gmax = std::max(gmax, std::abs(g[k]));
        }
        if (gmax < opt.gradient_tol) break;

        const auto mf = static_cast<Eigen::Index>(free.size());
        JtJ.noalias() = J.transpose() * J;
        Eigen::MatrixXd Af(mf, mf);
        Eigen::VectorXd gf(mf), df(mf), sf(mf);
        for (Eigen::Index a = 0; a < mf; ++a) {
            gf[a] = g[free[static_cast<std::size_t>(a)]];
            for (Eigen::Index b = 0; b < mf; ++b)
                Af(a, b) = JtJ(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
        }
        // Directions with near-zero curvature must still feel the damping,
        // or the solve shoots unbounded steps along them.
        df = Af.diagonal().cwiseMax(1e-10 * std::max(1.0, Af.diagonal().maxCoeff()));

        bool accepted = false;
        while (evals < opt.max_evaluations_per_restart) {
            Eigen::MatrixXd A = Af;
            A.diagonal() += lambda * df;
            sf = A.ldlt().solve(-gf);
            // Cap the move so the local quadratic model stays meaningful;
            // 3 log units per parameter per iteration is already a big jump.
            const double span = sf.lpNorm<Eigen::Infinity>();
            if (span > 3.0) sf *= 3.0 / span;
            step.setZero();
            for (Eigen::Index a = 0; a < mf; ++a) step[free[static_cast<std::size_t>(a)]] = sf[a];
            u_trial = (u + step).cwiseMax(prob.lower()).cwiseMin(prob.upper());
            // A clamped step can collapse to nothing even when the raw step
            // is large; that counts as stagnation at the boundary.
            if ((u_trial - u).lpNorm<Eigen::Infinity>() < opt.step_tol) {
                done = true;
                break;
            }

            ++evals;
            const bool finite = prob.eval(u_trial, r_trial);
            const double trial_cost = finite ? r_trial.squaredNorm() : cost;
            if (finite && trial_cost < cost) {
                const double drop = (cost - trial_cost) / std::max(cost, 1e-300);
                u = u_trial;
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-12);
                nu = 2.0;
                accepted = true;
                if (drop < opt.loss_change_tol) done = true;
                // A long run of barely-improving steps is stagnation in a
                // flat basin; stop and return the current best.
                slow_steps = drop < 1e-6 ? slow_steps + 1 : 0;
                if (slow_steps >= 12) done = true;
                break;
            }
            lambda *= nu;
            nu *= 2.0;
            if (lambda > 1e16) {
                done = true;
                break;
            }
        }
        if (!accepted) break;
        if (!done) {
            if (evals >= opt.max_evaluations_per_restart) break;
            ++evals;
            if (!prob.eval_jacobian(u, r, J)) break;
        }
    }

    result.params = prob.to_external(u);
    result.loss = cost;
    result.evaluations = evals;
    result.ok = true;
    return result;
}

struct ScoredAttempt {
    ParameterSet params;
    MetricBundle metrics;
    double loss = std::numeric_limits<double>::infinity();
    bool valid = false;
};

// Lexicographic fit-quality order: smaller chi2 wins, r2_score breaks ties.
bool better(const MetricBundle& a, const MetricBundle& b) {
    if (a.chi2 != b.chi2) return a.chi2 < b.chi2;
    return a.r2.score > b.r2.score;
}

// Scores a candidate in the rectangular domain; returns false if its
// impedance cannot be evaluated finitely.
bool score(const CircuitModel& model, const Spectrum& observed, const ParameterSet& params,
           double loss, ScoredAttempt& out) {
    try {
        const Spectrum pred = model.impedance(params, observed.freqs);
        out.params = params;
        out.metrics = fit_metrics(observed, pred);
        out.loss = loss;
        out.valid = true;
        return true;
    } catch (const Error&) {
        return false;
    }
}

FitOutcome finalize(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                    const ScoredAttempt& best, const FitOptions& opt, int restarts, long evals,
                    double seconds) {
    if (!best.valid) throw EvalError("every fit attempt produced non-finite impedance", 0);
    FitOutcome out;
    out.best_params = model.canonicalize(best.params);
    // Canonicalization permutes summation order by ulps, so all reported
    // numbers are recomputed at the parameters actually reported.
    const Spectrum pred = model.impedance(out.best_params, observed.freqs);
    const MetricBundle mb = fit_metrics(observed, pred);
    out.chi2 = mb.chi2;
    out.r2_score = mb.r2.score;
    out.r2_magnitude = mb.r2.magnitude;
    out.r2_phase = mb.r2.phase;
    out.final_loss = loss_value(kind, observed, pred, opt.guards);
    out.converged = mb.chi2 <= opt.chi2_threshold && mb.r2.score >= opt.r2_threshold;
    out.restarts_used = restarts;
    out.evaluations = evals;
    out.wall_time = seconds;
    return out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

LocalResult fit_once(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                     const ParameterSet& init, const FitOptions& options) {
    options.validate();
    const ResidualProblem prob(model, observed, kind, options.guards);
    return descend(prob, prob.to_internal(init), options);
}

FitOutcome fit_multistart(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                          const FitOptions& options) {
    options.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const ResidualProblem prob(model, observed, kind, options.guards);
    Rng rng(options.rng_seed);

    ScoredAttempt best;
    long evals = 0;
    int restarts = 0;
    for (int attempt = 1; attempt <= options.max_restarts; ++attempt) {
        restarts = attempt;
        const ParameterSet init = sample_initial_guess(model.schema(), rng);
        const LocalResult local = descend(prob, prob.to_internal(init), options);
        evals += local.evaluations;
        if (!local.ok) continue;

        ScoredAttempt attempt_score;
        if (!score(model, observed, local.params, local.loss, attempt_score)) continue;
        if (!best.valid || better(attempt_score.metrics, best.metrics)) best = attempt_score;
        if (attempt_score.metrics.chi2 <= options.chi2_threshold &&
            attempt_score.metrics.r2.score >= options.r2_threshold)
            break;
    }
    return finalize(model, observed, kind, best, options, restarts, evals, seconds_since(t0));
}

FitOutcome basinhop_fit(const CircuitModel& model, const Spectrum& observed, LossKind kind,
                        const FitOptions& options, const BasinHopOptions& hops) {
    options.validate();
    hops.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const ResidualProblem prob(model, observed, kind, options.guards);
    Rng rng(options.rng_seed);

    ScoredAttempt best;
    long evals = 0;

    const ParameterSet init = sample_initial_guess(model.schema(), rng);
    LocalResult local = descend(prob, prob.to_internal(init), options);
    evals += local.evaluations;
    Eigen::VectorXd incumbent = prob.to_internal(local.ok ? local.params : init);
    double incumbent_loss = local.ok ? local.loss : std::numeric_limits<double>::infinity();
    if (local.ok) {
        ScoredAttempt s;
        if (score(model, observed, local.params, local.loss, s)) best = s;
    }

    // The full hop budget is always spent; there is no early stop on the
    // convergence thresholds, which is what makes this a cost baseline.
    const auto m = static_cast<Eigen::Index>(prob.dim());
    for (int hop = 0; hop < hops.hop_count; ++hop) {
        Eigen::VectorXd u_trial(m);
        for (Eigen::Index k = 0; k < m; ++k)
            u_trial[k] = incumbent[k] + hops.step_scale * rng.normal();
        u_trial = u_trial.cwiseMax(prob.lower()).cwiseMin(prob.upper());

        local = descend(prob, u_trial, options);
        evals += local.evaluations;
        if (!local.ok) continue;

        ScoredAttempt s;
        if (score(model, observed, local.params, local.loss, s) &&
            (!best.valid || better(s.metrics, best.metrics)))
            best = s;

        const bool accept =
            local.loss <= incumbent_loss ||
            rng.uniform01() < std::exp(-(local.loss - incumbent_loss) / hops.temperature);
        if (accept) {
            incumbent = prob.to_internal(local.params);
            incumbent_loss = local.loss;
        }
    }
    return finalize(model, observed, kind, best, options, hops.hop_count + 1, evals,
                    seconds_since(t0));
}

} // namespace zfit
