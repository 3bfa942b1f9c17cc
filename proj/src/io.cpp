#include "zfit/io.hpp"

#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "zfit/circuit.hpp"
#include "zfit/error.hpp"
#include "zfit/rng.hpp"

namespace zfit {

namespace {

using ordered_json = nlohmann::ordered_json;

constexpr const char* kSpectrumHeader = "freq_hz,z_real,z_imag";

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line,
                             const std::string& what) {
    throw IoError(path.string() + ":" + std::to_string(line) + ": " + what);
}

double parse_field(const std::filesystem::path& path, std::size_t line, std::string_view field) {
    double v = 0.0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last)
        line_error(path, line, "expected a number, got \"" + std::string(field) + "\"");
    return v;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) throw IoError("cannot read " + path.string());
    return std::move(buf).str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("cannot write " + path.string());
}

ordered_json config_to_json(const GenerationConfig& config) {
    ordered_json j;
    j["circuits"] = config.circuits;
    j["spectra_per_circuit"] = config.spectra_per_circuit;
    j["freq_min"] = config.freq_min;
    j["freq_max"] = config.freq_max;
    j["points_per_decade"] = config.points_per_decade;
    j["noise_sigma_rel"] = config.noise_sigma_rel;
    j["rng_seed"] = config.rng_seed;
    return j;
}

void config_from_json(const ordered_json& j, GenerationConfig& config) {
    config.circuits = j.at("circuits").get<std::vector<std::string>>();
    config.spectra_per_circuit = j.at("spectra_per_circuit").get<int>();
    config.freq_min = j.at("freq_min").get<double>();
    config.freq_max = j.at("freq_max").get<double>();
    config.points_per_decade = j.at("points_per_decade").get<int>();
    config.noise_sigma_rel = j.at("noise_sigma_rel").get<double>();
    config.rng_seed = j.at("rng_seed").get<std::uint64_t>();
}

} // namespace

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string csv_field(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string quoted = "\"";
    for (char c : field) {
        quoted += c;
        if (c == '"') quoted += '"';
    }
    quoted += '"';
    return quoted;
}

void write_spectrum_csv(const std::filesystem::path& path, const Spectrum& s) {
    s.validate();
    std::string body = kSpectrumHeader;
    body += '\n';
    for (std::size_t i = 0; i < s.size(); ++i) {
        body += format_double(s.freqs[i]);
        body += ',';
        body += format_double(s.z_real[i]);
        body += ',';
        body += format_double(s.z_imag[i]);
        body += '\n';
    }
    write_file(path, body);
}

Spectrum read_spectrum_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    Spectrum s;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (lineno == 1) {
            if (line != kSpectrumHeader)
                line_error(path, 1,
                           std::string("expected header \"") + kSpectrumHeader + "\"");
            continue;
        }
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
        if (c2 == std::string::npos || line.find(',', c2 + 1) != std::string::npos)
            line_error(path, lineno, "expected 3 comma-separated fields");
        const std::string_view view = line;
        s.freqs.push_back(parse_field(path, lineno, view.substr(0, c1)));
        s.z_real.push_back(parse_field(path, lineno, view.substr(c1 + 1, c2 - c1 - 1)));
        s.z_imag.push_back(parse_field(path, lineno, view.substr(c2 + 1)));
    }
    if (lineno == 0) line_error(path, 1, "empty file");
    try {
        s.validate();
    } catch (const ConfigError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
    return s;
}

void write_dataset(const std::filesystem::path& dir, const GenerationConfig& config,
                   const std::vector<LabeledSpectrum>& dataset) {
    std::filesystem::create_directories(dir);
    std::unordered_map<std::string, CircuitModel> models;
    ordered_json manifest;
    manifest["config"] = config_to_json(config);
    manifest["seed"] = config.rng_seed;
    manifest["spectra"] = ordered_json::array();
    for (const LabeledSpectrum& ls : dataset) {
        auto it = models.find(ls.circuit);
        if (it == models.end())
            it = models.emplace(ls.circuit, CircuitModel::parse(ls.circuit)).first;
        const auto& schema = it->second.schema();
        if (schema.size() != ls.true_params.size())
            throw ConfigError("spectrum " + ls.id + " has " +
                              std::to_string(ls.true_params.size()) + " parameters, circuit needs " +
                              std::to_string(schema.size()));
        ordered_json entry;
        entry["id"] = ls.id;
        entry["circuit"] = ls.circuit;
        ordered_json params;
        for (std::size_t k = 0; k < schema.size(); ++k) params[schema[k].name] = ls.true_params[k];
        entry["true_params"] = std::move(params);
        manifest["spectra"].push_back(std::move(entry));
        write_spectrum_csv(dir / (ls.id + ".csv"), ls.spectrum);
    }
    write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<LabeledSpectrum> read_dataset(const std::filesystem::path& dir,
                                          GenerationConfig* config) {
    const std::filesystem::path manifest_path = dir / "manifest.json";
    ordered_json manifest;
    try {
        manifest = ordered_json::parse(read_file(manifest_path));
        GenerationConfig decoded;
        config_from_json(manifest.at("config"), decoded);
        if (config) *config = std::move(decoded);
        std::unordered_map<std::string, CircuitModel> models;
        std::vector<LabeledSpectrum> dataset;
        for (const ordered_json& entry : manifest.at("spectra")) {
            LabeledSpectrum ls;
            ls.id = entry.at("id").get<std::string>();
            ls.circuit = entry.at("circuit").get<std::string>();
            auto it = models.find(ls.circuit);
            if (it == models.end())
                it = models.emplace(ls.circuit, CircuitModel::parse(ls.circuit)).first;
            const ordered_json& params = entry.at("true_params");
            for (const ParamDescriptor& d : it->second.schema())
                ls.true_params.push_back(params.at(d.name).get<double>());
            ls.spectrum = read_spectrum_csv(dir / (ls.id + ".csv"));
            dataset.push_back(std::move(ls));
        }
        return dataset;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(manifest_path.string() + ": " + e.what());
    }
}

std::string file_hash(const std::filesystem::path& path) {
    const std::uint64_t h = hash_bytes(read_file(path));
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
    return buf;
}

} // namespace zfit
