#include "zfit/datagen.hpp"

#include <atomic>
#include <cmath>
#include <complex>
#include <mutex>
#include <thread>
#include <utility>

#include "zfit/error.hpp"

namespace zfit {

const std::vector<std::string>& default_circuit_set() {
    static const std::vector<std::string> kSet = {
        "R1-[P2,R3]",
        "R1-[P2,R3]-[P4,R5]",
        "R1-[P2,R3]-P4",
        "R1-[P2,R3]-[P4,R5]-P6",
        "L1-R2-[P3,R4]",
        "L1-R2-[P3,R4]-[P5,R6]",
    };
    return kSet;
}

std::vector<double> frequency_grid(double freq_min, double freq_max, int points_per_decade) {
    if (!(freq_min > 0.0) || !(freq_min < freq_max))
        throw ConfigError("frequency grid needs 0 < freq_min < freq_max");
    if (points_per_decade < 1)
        throw ConfigError("points_per_decade must be at least 1");
    const double decades = std::log10(freq_max / freq_min);
    const long count = std::lround(decades * points_per_decade) + 1;
    std::vector<double> freqs(static_cast<std::size_t>(count));
    for (long k = 0; k < count; ++k)
        freqs[static_cast<std::size_t>(k)] =
            freq_min * std::pow(10.0, static_cast<double>(k) / points_per_decade);
    return freqs;
}

void GenerationConfig::validate() const {
    if (circuits.empty())
        throw ConfigError("config lists no circuits");
    if (spectra_per_circuit < 1)
        throw ConfigError("spectra_per_circuit must be at least 1");
    if (!(noise_sigma_rel >= 0.0))
        throw ConfigError("noise_sigma_rel must be nonnegative");
    if (frequency_grid(freq_min, freq_max, points_per_decade).size() < 10)
        throw ConfigError("the frequency grid needs at least 10 points");
}

ParameterSet sample_parameters(const CircuitModel& model, Rng& rng) {
    const auto& schema = model.schema();
    ParameterSet params(schema.size());
    for (std::size_t k = 0; k < schema.size(); ++k) {
        const ParamDescriptor& d = schema[k];
        params[k] = d.scale == SamplingScale::LogUniform ? rng.log_uniform(d.lower, d.upper)
                                                         : rng.uniform(d.lower, d.upper);
    }
    return params;
}

Spectrum synthesize_spectrum(const CircuitModel& model, const ParameterSet& params,
                             std::span<const double> freqs_hz, double noise_sigma_rel,
                             Rng& rng) {
    if (params.size() != model.param_count())
        throw ConfigError("parameter count does not match the circuit schema");
    if (!(noise_sigma_rel >= 0.0))
        throw ConfigError("noise_sigma_rel must be nonnegative");
    Spectrum s;
    s.freqs.assign(freqs_hz.begin(), freqs_hz.end());
    s.z_real.resize(s.freqs.size());
    s.z_imag.resize(s.freqs.size());
    ParameterSet noisy(params.size());
    for (std::size_t i = 0; i < s.freqs.size(); ++i) {
        for (std::size_t k = 0; k < params.size(); ++k) {
            double v = 0.0;
            int attempts = 0;
            do {
                if (++attempts > 100)
                    throw EvalError("noise kept driving " + model.schema()[k].name +
                                        " nonpositive",
                                    i);
                v = params[k] * (1.0 + noise_sigma_rel * rng.normal());
            } while (!(v > 0.0));
            noisy[k] = v;
        }
        const std::complex<double> z = model.impedance_at(noisy, s.freqs[i]);
        s.z_real[i] = z.real();
        s.z_imag[i] = z.imag();
    }
    s.validate();
    return s;
}

std::vector<LabeledSpectrum> generate_dataset(const GenerationConfig& config, int jobs) {
    config.validate();
    if (jobs < 1) throw ConfigError("jobs must be at least 1");
    const std::vector<double> grid =
        frequency_grid(config.freq_min, config.freq_max, config.points_per_decade);
    std::vector<CircuitModel> models;
    models.reserve(config.circuits.size());
    for (const std::string& text : config.circuits) models.push_back(CircuitModel::parse(text));

    const std::size_t per = static_cast<std::size_t>(config.spectra_per_circuit);
    std::vector<LabeledSpectrum> out(config.circuits.size() * per);
    std::atomic<std::size_t> next{0};
    std::mutex error_lock;
    std::exception_ptr failure;

    auto worker = [&] {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= out.size()) return;
            const std::size_t ci = t / per;
            const std::size_t si = t % per;
            try {
                const CircuitModel& model = models[ci];
                Rng rng(derive_stream(config.rng_seed, "datagen", ci, si));
                // Canonical order lets a fitted vector be compared to the
                // stored truth componentwise.
                const ParameterSet truth = model.canonicalize(sample_parameters(model, rng));
                LabeledSpectrum ls;
                ls.id = std::to_string(ci) + "-" + std::to_string(si);
                ls.circuit = config.circuits[ci];
                ls.true_params = truth;
                ls.spectrum = synthesize_spectrum(model, truth, grid, config.noise_sigma_rel, rng);
                out[t] = std::move(ls);
            } catch (...) {
                const std::lock_guard<std::mutex> lock(error_lock);
                if (!failure) failure = std::current_exception();
                next.store(out.size());
                return;
            }
        }
    };

    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < jobs; ++w) pool.emplace_back(worker);
        for (std::thread& w : pool) w.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

} // namespace zfit
