#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "zfit/datagen.hpp"
#include "zfit/error.hpp"
#include "zfit/io.hpp"

using namespace zfit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("zfit_io_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const fs::path& p, const std::string& bytes) {
    std::ofstream out(p, std::ios::binary);
    out << bytes;
}

} // namespace

TEST_CASE("double formatting round-trips exactly") {
    for (double v : {1.0 / 3.0, 1e300, 5.0, -1.2345678901234567e-7, 6.02e23, 0.0,
                     5e-324, -0.1}) {
        const std::string text = format_double(v);
        CHECK(std::strtod(text.c_str(), nullptr) == v);
    }
    CHECK(format_double(5.0) == "5");
}

TEST_CASE("csv quoting follows RFC 4180") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("R1-[P2,R3]") == "\"R1-[P2,R3]\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
    CHECK(csv_field("") == "");
}

TEST_CASE("spectrum csv round-trips bitwise") {
    TempDir tmp;
    const CircuitModel m = CircuitModel::parse("R1-[P2,R3]");
    const ParameterSet p = {5.0, 1e-5, 0.8, 1000.0};
    const Spectrum s = m.impedance(p, frequency_grid(1e-3, 1e6, 7));
    const fs::path file = tmp.path / "s.csv";
    write_spectrum_csv(file, s);

    const std::string text = slurp(file);
    CHECK(text.substr(0, 22) == "freq_hz,z_real,z_imag\n");

    const Spectrum r = read_spectrum_csv(file);
    REQUIRE(r.size() == s.size());
    CHECK(r.freqs == s.freqs);
    CHECK(r.z_real == s.z_real);
    CHECK(r.z_imag == s.z_imag);
}

TEST_CASE("spectrum csv errors name the file and line") {
    TempDir tmp;
    const fs::path file = tmp.path / "bad.csv";

    spit(file, "wrong,header,here\n1,2,3\n");
    CHECK_THROWS_WITH_AS(read_spectrum_csv(file),
                         doctest::Contains(":1: expected header"), IoError);

    spit(file, "freq_hz,z_real,z_imag\n1.0,2.0\n");
    CHECK_THROWS_WITH_AS(read_spectrum_csv(file), doctest::Contains(":2:"), IoError);

    spit(file, "freq_hz,z_real,z_imag\n1.0,2.0,3.0\n2.0,oops,3.0\n");
    CHECK_THROWS_WITH_AS(read_spectrum_csv(file), doctest::Contains(":3:"), IoError);

    spit(file, "freq_hz,z_real,z_imag\n2.0,1.0,1.0\n1.0,1.0,1.0\n");
    CHECK_THROWS_AS(read_spectrum_csv(file), IoError);

    spit(file, "");
    CHECK_THROWS_AS(read_spectrum_csv(file), IoError);

    CHECK_THROWS_AS(read_spectrum_csv(tmp.path / "missing.csv"), IoError);
}

TEST_CASE("windows line endings are accepted") {
    TempDir tmp;
    const fs::path file = tmp.path / "crlf.csv";
    spit(file, "freq_hz,z_real,z_imag\r\n1,2,3\r\n10,4,5\r\n");
    const Spectrum s = read_spectrum_csv(file);
    REQUIRE(s.size() == 2);
    CHECK(s.freqs[1] == 10.0);
    CHECK(s.z_imag[1] == 5.0);
}

TEST_CASE("dataset directories round-trip") {
    TempDir tmp;
    GenerationConfig cfg;
    cfg.spectra_per_circuit = 2;
    cfg.rng_seed = 33;
    const auto ds = generate_dataset(cfg);
    write_dataset(tmp.path, cfg, ds);

    CHECK(fs::exists(tmp.path / "manifest.json"));
    CHECK(fs::exists(tmp.path / "0-0.csv"));
    CHECK(fs::exists(tmp.path / "5-1.csv"));

    GenerationConfig read_cfg;
    const auto back = read_dataset(tmp.path, &read_cfg);
    CHECK(read_cfg.circuits == cfg.circuits);
    CHECK(read_cfg.spectra_per_circuit == cfg.spectra_per_circuit);
    CHECK(read_cfg.freq_min == cfg.freq_min);
    CHECK(read_cfg.freq_max == cfg.freq_max);
    CHECK(read_cfg.points_per_decade == cfg.points_per_decade);
    CHECK(read_cfg.noise_sigma_rel == cfg.noise_sigma_rel);
    CHECK(read_cfg.rng_seed == cfg.rng_seed);

    REQUIRE(back.size() == ds.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
        CHECK(back[i].id == ds[i].id);
        CHECK(back[i].circuit == ds[i].circuit);
        CHECK(back[i].true_params == ds[i].true_params);
        CHECK(back[i].spectrum.freqs == ds[i].spectrum.freqs);
        CHECK(back[i].spectrum.z_real == ds[i].spectrum.z_real);
        CHECK(back[i].spectrum.z_imag == ds[i].spectrum.z_imag);
    }
}

TEST_CASE("manifest parameters are keyed by schema name") {
    TempDir tmp;
    GenerationConfig cfg;
    cfg.circuits = {"R1-[P2,R3]"};
    cfg.spectra_per_circuit = 1;
    const auto ds = generate_dataset(cfg);
    write_dataset(tmp.path, cfg, ds);

    const auto manifest = nlohmann::json::parse(slurp(tmp.path / "manifest.json"));
    const auto& entry = manifest.at("spectra").at(0);
    CHECK(entry.at("id") == "0-0");
    CHECK(entry.at("circuit") == "R1-[P2,R3]");
    const auto& tp = entry.at("true_params");
    CHECK(tp.at("R1").get<double>() == ds[0].true_params[0]);
    CHECK(tp.at("P2_w").get<double>() == ds[0].true_params[1]);
    CHECK(tp.at("P2_n").get<double>() == ds[0].true_params[2]);
    CHECK(tp.at("R3").get<double>() == ds[0].true_params[3]);
    CHECK(manifest.at("seed").get<std::uint64_t>() == cfg.rng_seed);
}

TEST_CASE("identical datasets serialize to identical bytes") {
    TempDir a, b;
    GenerationConfig cfg;
    cfg.spectra_per_circuit = 2;
    cfg.rng_seed = 44;
    write_dataset(a.path, cfg, generate_dataset(cfg));
    write_dataset(b.path, cfg, generate_dataset(cfg));
    CHECK(slurp(a.path / "manifest.json") == slurp(b.path / "manifest.json"));
    for (const auto& entry : fs::directory_iterator(a.path)) {
        const fs::path name = entry.path().filename();
        CHECK(slurp(a.path / name) == slurp(b.path / name));
    }
}

TEST_CASE("file hashes are stable and content-sensitive") {
    TempDir tmp;
    const fs::path file = tmp.path / "x";
    spit(file, "foobar");
    CHECK(file_hash(file) == "85944171f73967e8");
    spit(file, "foobaz");
    CHECK(file_hash(file) != "85944171f73967e8");
    CHECK_THROWS_AS(file_hash(tmp.path / "absent"), IoError);
}

TEST_CASE("corrupt manifests raise io errors") {
    TempDir tmp;
    CHECK_THROWS_AS(read_dataset(tmp.path), IoError);

    spit(tmp.path / "manifest.json", "{ not json");
    CHECK_THROWS_AS(read_dataset(tmp.path), IoError);

    spit(tmp.path / "manifest.json", R"({"config": {}, "seed": 1, "spectra": []})");
    CHECK_THROWS_AS(read_dataset(tmp.path), IoError);

    // A manifest entry whose CSV file is missing.
    GenerationConfig cfg;
    cfg.circuits = {"R1"};
    cfg.spectra_per_circuit = 1;
    const auto ds = generate_dataset(cfg);
    write_dataset(tmp.path, cfg, ds);
    fs::remove(tmp.path / "0-0.csv");
    CHECK_THROWS_AS(read_dataset(tmp.path), IoError);
}
