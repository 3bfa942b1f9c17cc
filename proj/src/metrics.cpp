#include "zfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "zfit/error.hpp"
#include "zfit/loss.hpp"

namespace zfit {

double chi_squared(const Spectrum& observed, const Spectrum& predicted) {
    return loss_value(LossKind::X2, observed, predicted);
}

R2Triple r2_triple(const Spectrum& observed, const Spectrum& predicted) {
    observed.validate();
    if (!observed.same_grid(predicted))
        throw ConfigError("observed and predicted spectra are on different frequency grids");
    const std::size_t n = observed.size();
    if (n < 2) throw ConfigError("r2 needs at least two frequency points");

    double mean_pooled = 0.0, mean_mag = 0.0, mean_phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mean_pooled += observed.z_real[i] + observed.z_imag[i];
        mean_mag += observed.magnitude(i);
        mean_phase += observed.phase(i);
    }
    mean_pooled /= static_cast<double>(2 * n);
    mean_mag /= static_cast<double>(n);
    mean_phase /= static_cast<double>(n);

    double ss_res = 0.0, ss_tot = 0.0;
    double ss_res_mag = 0.0, ss_tot_mag = 0.0;
    double ss_res_phase = 0.0, ss_tot_phase = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dr = observed.z_real[i] - predicted.z_real[i];
        const double di = observed.z_imag[i] - predicted.z_imag[i];
        ss_res += dr * dr + di * di;
        const double tr = observed.z_real[i] - mean_pooled;
        const double ti = observed.z_imag[i] - mean_pooled;
        ss_tot += tr * tr + ti * ti;

        const double dm = observed.magnitude(i) - predicted.magnitude(i);
        ss_res_mag += dm * dm;
        const double tm = observed.magnitude(i) - mean_mag;
        ss_tot_mag += tm * tm;

        const double dp = observed.phase(i) - predicted.phase(i);
        ss_res_phase += dp * dp;
        const double tp = observed.phase(i) - mean_phase;
        ss_tot_phase += tp * tp;
    }

    // A constant observed channel has zero total variance; a perfect fit of
    // it scores 1 and anything else -inf would be meaningless, so report 0.
    auto r2 = [](double res, double tot) {
        if (tot <= 0.0) return res == 0.0 ? 1.0 : 0.0;
        return 1.0 - res / tot;
    };
    return {r2(ss_res, ss_tot), r2(ss_res_mag, ss_tot_mag), r2(ss_res_phase, ss_tot_phase)};
}

MetricBundle fit_metrics(const Spectrum& observed, const Spectrum& predicted) {
    return {chi_squared(observed, predicted), r2_triple(observed, predicted)};
}

double ApeTable::max() const {
    double m = 0.0;
    for (double v : values) m = std::max(m, v);
    return m;
}

ApeTable ape(const CircuitModel& model, const ParameterSet& true_params,
             const ParameterSet& fitted_params) {
    const auto& schema = model.schema();
    if (true_params.size() != schema.size() || fitted_params.size() != schema.size())
        throw ConfigError("parameter count does not match the model schema");

    ApeTable table;
    table.names.reserve(schema.size());
    table.values.reserve(schema.size());
    for (std::size_t i = 0; i < schema.size(); ++i) {
        if (true_params[i] == 0.0) throw ConfigError("true parameter is zero: " + schema[i].name);
        table.names.push_back(schema[i].name);
        table.values.push_back(100.0 * std::abs(fitted_params[i] - true_params[i]) /
                               std::abs(true_params[i]));
    }
    return table;
}

std::vector<MapeRow> mape(const CircuitModel& model, const std::vector<ApeTable>& tables) {
    const auto& schema = model.schema();
    if (tables.empty()) throw ConfigError("mape needs at least one fit");

    std::vector<MapeRow> rows;
    rows.reserve(schema.size() + 1);
    double grand = 0.0;
    for (std::size_t i = 0; i < schema.size(); ++i) {
        double sum = 0.0;
        for (const ApeTable& t : tables) {
            if (t.values.size() != schema.size())
                throw ConfigError("ape table does not match the model schema");
            sum += t.values[i];
        }
        const double mean = sum / static_cast<double>(tables.size());
        rows.push_back({schema[i].name, mean});
        grand += mean;
    }
    rows.push_back({"Average", grand / static_cast<double>(schema.size())});
    return rows;
}

} // namespace zfit
