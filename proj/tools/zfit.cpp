#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "zfit/bench.hpp"
#include "zfit/circuit.hpp"
#include "zfit/datagen.hpp"
#include "zfit/error.hpp"
#include "zfit/io.hpp"
#include "zfit/solver.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;

// Circuit notation contains commas inside brackets, so list values split
// only at bracket depth zero.
std::vector<std::string> split_circuits(const std::vector<std::string>& pieces) {
    std::vector<std::string> out;
    for (const std::string& text : pieces) {
        std::string cur;
        int depth = 0;
        auto flush = [&] {
            const auto a = cur.find_first_not_of(" \t");
            if (a == std::string::npos) throw zfit::ConfigError("empty circuit in --circuits");
            const auto b = cur.find_last_not_of(" \t");
            out.push_back(cur.substr(a, b - a + 1));
            cur.clear();
        };
        for (char c : text) {
            if (c == '[') ++depth;
            if (c == ']') --depth;
            if (c == ',' && depth == 0) {
                flush();
                continue;
            }
            cur += c;
        }
        flush();
    }
    return out;
}

std::vector<zfit::LossKind> parse_losses(const std::vector<std::string>& pieces) {
    std::vector<zfit::LossKind> out;
    for (const std::string& text : pieces) {
        std::string token;
        std::istringstream stream(text);
        while (std::getline(stream, token, ',')) {
            const auto a = token.find_first_not_of(" \t");
            if (a == std::string::npos) throw zfit::ConfigError("empty loss token in --losses");
            const auto b = token.find_last_not_of(" \t");
            token = token.substr(a, b - a + 1);
            const auto kind = zfit::parse_loss_token(token);
            if (!kind)
                throw zfit::ConfigError("unknown loss \"" + token + "\"; valid tokens: " +
                                        zfit::valid_loss_tokens());
            out.push_back(*kind);
        }
    }
    return out;
}

zfit::GlobalMethod parse_method(const std::string& name) {
    if (name == "none") return zfit::GlobalMethod::None;
    if (name == "basinhop") return zfit::GlobalMethod::Basinhop;
    throw zfit::ConfigError("unknown --global method \"" + name + "\"; valid: none, basinhop");
}

// Config file values fill in behind flags; defaults sit behind both. The
// seed additionally falls back to the ZFIT_SEED environment variable.
struct Settings {
    CLI::App* cmd = nullptr;
    ordered_json file;  // parsed --config contents, or null

    void load_config_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw zfit::IoError("cannot open " + path);
        try {
            file = ordered_json::parse(in);
        } catch (const nlohmann::json::exception& e) {
            throw zfit::IoError(path + ": " + e.what());
        }
        if (!file.is_object()) throw zfit::ConfigError(path + ": config must be a JSON object");
    }

    bool flag_given(const std::string& name) const { return cmd->count(name) > 0; }

    template <typename T>
    void fill(const std::string& flag, const char* key, T& target) const {
        if (!flag.empty() && flag_given(flag)) return;
        if (!file.is_object() || !file.contains(key)) return;
        try {
            target = file.at(key).get<T>();
        } catch (const nlohmann::json::exception&) {
            throw zfit::ConfigError(std::string("config key \"") + key +
                                    "\" has the wrong type");
        }
    }

    std::uint64_t pick_seed(const std::string& flag, std::uint64_t flag_value) const {
        if (flag_given(flag)) return flag_value;
        if (file.is_object() && file.contains("seed")) {
            try {
                return file.at("seed").get<std::uint64_t>();
            } catch (const nlohmann::json::exception&) {
                throw zfit::ConfigError("config key \"seed\" must be an unsigned integer");
            }
        }
        if (const char* env = std::getenv("ZFIT_SEED")) {
            char* end = nullptr;
            const unsigned long long v = std::strtoull(env, &end, 10);
            if (end == env || *end != '\0')
                throw zfit::ConfigError("ZFIT_SEED must be an unsigned integer, got \"" +
                                        std::string(env) + "\"");
            return v;
        }
        return flag_value;  // the flag's default
    }
};

ordered_json params_by_name(const zfit::CircuitModel& model, const zfit::ParameterSet& params) {
    ordered_json j;
    for (std::size_t k = 0; k < params.size(); ++k) j[model.schema()[k].name] = params[k];
    return j;
}

int run(int argc, char** argv) {
    CLI::App app{"equivalent-circuit fitting for impedance spectra"};
    app.require_subcommand(1);

    // Shared option storage; each subcommand registers the flags it uses.
    std::string config_path, out_dir, method_name = "none";
    std::vector<std::string> circuit_args, loss_args;
    std::uint64_t seed = 1;
    int jobs = 1, max_restarts = 20, points_per_decade = 7;
    double chi2_threshold = 0.01, r2_threshold = 0.9, noise_sigma = 0.002;
    bool paired = true, strip_times = false;

    Settings gen_settings, fit_settings, bench_settings;

    auto add_common = [&](CLI::App* cmd, Settings& s) {
        s.cmd = cmd;
        cmd->add_option("--config", config_path, "JSON config file; flags override its keys");
        cmd->add_option("--seed", seed, "RNG seed (falls back to config, then ZFIT_SEED)");
    };

    CLI::App* generate = app.add_subcommand("generate", "synthesize a labeled dataset");
    add_common(generate, gen_settings);
    generate->add_option("--out", out_dir, "output dataset directory")->required();
    generate->add_option("--circuits", circuit_args,
                         "circuit list; commas inside brackets stay within one circuit");
    generate->add_option("--noise-sigma", noise_sigma, "relative component noise");
    generate->add_option("--points-per-decade", points_per_decade, "frequency grid density");
    generate->add_option("--jobs", jobs, "worker threads");

    CLI::App* fit = app.add_subcommand("fit", "fit one spectrum CSV and print JSON");
    add_common(fit, fit_settings);
    std::string spectrum_path, circuit_text, loss_token_text = "x2";
    fit->add_option("spectrum", spectrum_path, "spectrum CSV path")->required();
    fit->add_option("circuit", circuit_text, "circuit notation")->required();
    fit->add_option("loss", loss_token_text, "loss token (" + zfit::valid_loss_tokens() + ")");
    fit->add_option("--max-restarts", max_restarts, "restart budget");
    fit->add_option("--chi2-threshold", chi2_threshold, "convergence chi-squared bound");
    fit->add_option("--r2-threshold", r2_threshold, "convergence R^2 bound");
    fit->add_option("--global", method_name, "global strategy: none or basinhop");

    CLI::App* bench = app.add_subcommand("bench", "fit a dataset with several losses");
    add_common(bench, bench_settings);
    std::string data_dir;
    bench->add_option("data", data_dir, "dataset directory with manifest.json")->required();
    bench->add_option("--out", out_dir, "report output directory")->required();
    bench->add_option("--losses", loss_args, "comma-separated loss tokens");
    bench->add_option("--jobs", jobs, "worker threads");
    bench->add_option("--max-restarts", max_restarts, "restart budget per fit");
    bench->add_option("--chi2-threshold", chi2_threshold, "convergence chi-squared bound");
    bench->add_option("--r2-threshold", r2_threshold, "convergence R^2 bound");
    bench->add_option("--global", method_name, "global strategy: none or basinhop");
    auto* paired_flag =
        bench->add_flag("--paired,!--unpaired", paired,
                        "share initial guesses across losses (default: paired)");
    bench->add_flag("--strip-times", strip_times,
                    "omit wall-time rows from the report for byte-stable output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    if (generate->parsed()) {
        Settings& s = gen_settings;
        if (!config_path.empty()) s.load_config_file(config_path);
        zfit::GenerationConfig cfg;
        if (s.flag_given("--circuits"))
            cfg.circuits = split_circuits(circuit_args);
        else
            s.fill("--circuits", "circuits", cfg.circuits);
        cfg.noise_sigma_rel = noise_sigma;
        s.fill("--noise-sigma", "noise_sigma", cfg.noise_sigma_rel);
        cfg.points_per_decade = points_per_decade;
        s.fill("--points-per-decade", "points_per_decade", cfg.points_per_decade);
        s.fill("", "spectra_per_circuit", cfg.spectra_per_circuit);
        s.fill("", "freq_min", cfg.freq_min);
        s.fill("", "freq_max", cfg.freq_max);
        cfg.rng_seed = s.pick_seed("--seed", seed);
        s.fill("--jobs", "jobs", jobs);
        cfg.validate();
        for (const std::string& text : cfg.circuits) zfit::CircuitModel::parse(text);
        const auto dataset = zfit::generate_dataset(cfg, jobs);
        zfit::write_dataset(out_dir, cfg, dataset);
        std::cout << "wrote " << dataset.size() << " spectra to " << out_dir << "\n";
        return 0;
    }

    if (fit->parsed()) {
        Settings& s = fit_settings;
        if (!config_path.empty()) s.load_config_file(config_path);
        zfit::FitOptions options;
        options.max_restarts = max_restarts;
        s.fill("--max-restarts", "max_restarts", options.max_restarts);
        options.chi2_threshold = chi2_threshold;
        s.fill("--chi2-threshold", "chi2_threshold", options.chi2_threshold);
        options.r2_threshold = r2_threshold;
        s.fill("--r2-threshold", "r2_threshold", options.r2_threshold);
        s.fill("", "max_evaluations_per_restart", options.max_evaluations_per_restart);
        options.rng_seed = s.pick_seed("--seed", seed);
        s.fill("--global", "global", method_name);
        const zfit::GlobalMethod method = parse_method(method_name);

        const auto kind = zfit::parse_loss_token(loss_token_text);
        if (!kind)
            throw zfit::ConfigError("unknown loss \"" + loss_token_text + "\"; valid tokens: " +
                                    zfit::valid_loss_tokens());
        const zfit::CircuitModel model = zfit::CircuitModel::parse(circuit_text);
        const zfit::Spectrum observed = zfit::read_spectrum_csv(spectrum_path);

        zfit::BasinHopOptions hops;
        s.fill("", "hop_count", hops.hop_count);
        s.fill("", "step_scale", hops.step_scale);
        s.fill("", "temperature", hops.temperature);
        const zfit::FitOutcome outcome =
            method == zfit::GlobalMethod::Basinhop
                ? zfit::basinhop_fit(model, observed, *kind, options, hops)
                : zfit::fit_multistart(model, observed, *kind, options);

        ordered_json j;
        j["circuit"] = model.format();
        j["loss"] = std::string(zfit::loss_token(*kind));
        j["converged"] = outcome.converged;
        j["chi2"] = outcome.chi2;
        j["r2_score"] = outcome.r2_score;
        j["r2_magnitude"] = outcome.r2_magnitude;
        j["r2_phase"] = outcome.r2_phase;
        j["final_loss"] = outcome.final_loss;
        j["best_params"] = params_by_name(model, outcome.best_params);
        j["restarts_used"] = outcome.restarts_used;
        j["evaluations"] = outcome.evaluations;
        j["wall_time"] = outcome.wall_time;
        ordered_json echo;
        echo["seed"] = options.rng_seed;
        echo["max_restarts"] = options.max_restarts;
        echo["chi2_threshold"] = options.chi2_threshold;
        echo["r2_threshold"] = options.r2_threshold;
        echo["global"] = method == zfit::GlobalMethod::Basinhop ? "basinhop" : "none";
        j["options"] = std::move(echo);
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    Settings& s = bench_settings;
    if (!config_path.empty()) s.load_config_file(config_path);
    zfit::BenchOptions options;
    if (s.flag_given("--losses"))
        options.losses = parse_losses(loss_args);
    else if (s.file.is_object() && s.file.contains("losses"))
        options.losses = parse_losses(s.file.at("losses").get<std::vector<std::string>>());
    options.jobs = jobs;
    s.fill("--jobs", "jobs", options.jobs);
    options.fit.max_restarts = max_restarts;
    s.fill("--max-restarts", "max_restarts", options.fit.max_restarts);
    options.fit.chi2_threshold = chi2_threshold;
    s.fill("--chi2-threshold", "chi2_threshold", options.fit.chi2_threshold);
    options.fit.r2_threshold = r2_threshold;
    s.fill("--r2-threshold", "r2_threshold", options.fit.r2_threshold);
    s.fill("", "max_evaluations_per_restart", options.fit.max_evaluations_per_restart);
    s.fill("", "prescreen_threshold", options.prescreen_threshold_pct);
    options.paired = paired;
    if (paired_flag->count() == 0) s.fill("--paired", "paired", options.paired);
    s.fill("--global", "global", method_name);
    options.method = parse_method(method_name);
    s.fill("", "hop_count", options.hops.hop_count);
    s.fill("", "step_scale", options.hops.step_scale);
    s.fill("", "temperature", options.hops.temperature);
    options.rng_seed = s.pick_seed("--seed", seed);
    options.validate();

    const auto dataset = zfit::read_dataset(data_dir);
    std::filesystem::create_directories(out_dir);
    const auto records =
        zfit::run_benchmark(dataset, options, std::filesystem::path(out_dir) / "raw.jsonl");
    const zfit::BenchReport report =
        zfit::build_report(dataset, records, options,
                           zfit::file_hash(std::filesystem::path(data_dir) / "manifest.json"));
    zfit::write_report(out_dir, report, strip_times);
    std::cout << "report written to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const zfit::IoError& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    } catch (const zfit::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const zfit::CircuitError& e) {
        std::cerr << "circuit error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
