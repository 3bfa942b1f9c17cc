#pragma once

#include <string>
#include <vector>

#include "zfit/circuit.hpp"
#include "zfit/spectrum.hpp"

namespace zfit {

/// Modulus-weighted chi-squared: sum over points of
/// [(Z'_t - Z'_m)^2 + (Z''_t - Z''_m)^2] / |Z_t|^2. Shares its arithmetic
/// with the x2 residuals, so chi_squared(o, p) == loss_value(X2, o, p)
/// exactly, not just to rounding.
double chi_squared(const Spectrum& observed, const Spectrum& predicted);

/// Coefficients of determination of a fit. score pools the rectangular
/// components against their pooled mean; magnitude and phase are ordinary
/// R^2 on |Z| and theta. Requires at least two points.
struct R2Triple {
    double score;
    double magnitude;
    double phase;
};

R2Triple r2_triple(const Spectrum& observed, const Spectrum& predicted);

/// Everything the solver and the benchmark report about one fit.
struct MetricBundle {
    double chi2;
    R2Triple r2;
};

MetricBundle fit_metrics(const Spectrum& observed, const Spectrum& predicted);

/// Absolute percentage error per parameter, 100 * |fitted - true| / |true|.
/// Order matches the model schema.
struct ApeTable {
    std::vector<std::string> names;
    std::vector<double> values;

    double max() const;
};

ApeTable ape(const CircuitModel& model, const ParameterSet& true_params,
             const ParameterSet& fitted_params);

/// Mean APE per parameter name across many fits of one circuit, plus an
/// "Average" row over all components. Rows follow the schema order.
struct MapeRow {
    std::string component;
    double value;
};

std::vector<MapeRow> mape(const CircuitModel& model, const std::vector<ApeTable>& tables);

} // namespace zfit
