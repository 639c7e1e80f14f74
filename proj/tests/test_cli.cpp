#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "ofdmid/capture.hpp"

using namespace ofdmid;
namespace fs = std::filesystem;

namespace {

std::string bin() {
    const char* b = std::getenv("OFDMID_BIN");
    return b ? b : "ofdmid";
}

const fs::path& work() {
    static const fs::path dir = [] {
        auto d = fs::temp_directory_path() / ("ofdmid_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

struct Cleanup {
    ~Cleanup() { fs::remove_all(work()); }
} cleanup;

int run(const std::string& args) {
    const std::string cmd = bin() + " " + args + " > " + (work() / "stdout.txt").string() + " 2>&1";
    const int st = std::system(cmd.c_str());
    return WIFEXITED(st) ? WEXITSTATUS(st) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(f), {}};
}

std::string path(const std::string& name) { return (work() / name).string(); }

// Default capture shared by several cases.
const std::string& default_capture() {
    static const std::string p = [] {
        const auto c = path("cap.bin");
        REQUIRE(run("synth --out " + c + " --seed 3 --format int16") == 0);
        return c;
    }();
    return p;
}

}  // namespace

TEST_CASE("synth writes a deterministic capture") {
    const auto& c = default_capture();
    const auto h = capture::read_header(c);
    CHECK(h.rate == 62.5e6);
    CHECK(h.format == capture::Format::Int16);
    CHECK(fs::file_size(c) == 625000u * 4u);
    const auto truth = capture::read_kv(capture::truth_path(c));
    CHECK(truth.at("samples") == "625000");
    CHECK(truth.at("N") == "1024");

    REQUIRE(run("synth --out " + path("again.bin") + " --seed 3 --format int16") == 0);
    CHECK(slurp(c) == slurp(path("again.bin")));
    REQUIRE(run("synth --out " + path("other.bin") + " --seed 4 --format int16") == 0);
    CHECK(slurp(c) != slurp(path("other.bin")));
}

TEST_CASE("identify matches the truth sidecar") {
    const auto& c = default_capture();
    REQUIRE(run("identify --capture " + c + " --out " + path("rep1")) == 0);
    const auto rep = capture::read_kv(path("rep1") + "/report.txt");
    const auto truth = capture::read_kv(capture::truth_path(c));
    for (const char* k : {"N", "Ng", "Nsf", "Nsfd", "Tf", "Tfg"}) {
        CAPTURE(k);
        CHECK(rep.at(k) == truth.at(k));
    }
    CHECK(std::stod(rep.at("Fs")) == std::stod(truth.at("Fs")));
    CHECK(std::stod(rep.at("Fc")) == std::stod(truth.at("Fc")));
    CHECK(rep.at("N.validation") == "pass");
    for (const char* f : {"r0_trace.csv", "tf_trace.csv", "ng_harmonics.csv", "constellation.csv"})
        CHECK(fs::exists(work() / "rep1" / f));

    // Same input, same bytes out.
    REQUIRE(run("identify --capture " + c + " --out " + path("rep2")) == 0);
    for (const char* f : {"report.txt", "r0_trace.csv", "tf_trace.csv", "constellation.csv"}) {
        CAPTURE(f);
        CHECK(slurp(work() / "rep1" / f) == slurp(work() / "rep2" / f));
    }

    // Early stop.
    REQUIRE(run("identify --capture " + c + " --out " + path("rep3") + " --stage Ng") == 0);
    const auto r3 = capture::read_kv(path("rep3") + "/report.txt");
    CHECK(r3.at("Ng") == "32");
    CHECK(r3.count("Tf") == 0);
}

TEST_CASE("stage failures exit 2 and leave diagnostics") {
    const auto c = path("short.bin");
    REQUIRE(run("synth --out " + c + " --duration 1e-3") == 0);
    CHECK(run("identify --capture " + c + " --out " + path("short")) == 2);
    const auto rep = capture::read_kv(path("short") + "/report.txt");
    CHECK(rep.at("failed_stage") == "estimate_Tf");
    CHECK(fs::exists(work() / "short" / "r0_trace.csv"));

    // PSS needs the whole band.
    CHECK(run("seqest --capture " + default_capture() + " --out " + path("sq") + " --sequences pss") == 2);
    CHECK(slurp(work() / "sq" / "seqest.txt").find("wideband") != std::string::npos);
}

TEST_CASE("io and config errors exit 3") {
    CHECK(run("identify --capture " + path("missing.bin")) == 3);
    CHECK(run("synth --out " + path("bad.bin") + " --format cf64") == 3);
    CHECK(run("synth --out " + path("bad.bin") + " --modulation 8psk") == 3);
    CHECK(run("synth --out " + path("bad.bin") + " --occupancy 1/0") == 3);
    CHECK(run("identify --capture " + default_capture() + " --stage nope") == 3);
    std::ofstream(path("bad.cfg")) << "this line has no equals sign\n";
    CHECK(run("synth --out " + path("bad.bin") + " --config " + path("bad.cfg")) == 3);
}

TEST_CASE("pss scan") {
    // One frame in 30: peaks 40 ms apart.
    const auto c = path("sparse.bin");
    REQUIRE(run("synth --out " + c + " --duration 0.085 --occupancy 1/30 --seed 5 --beta 1e-5") == 0);
    REQUIRE(run("pss-scan --capture " + c + " --beta 1e-5 --out " + path("scan")) == 0);
    std::ifstream f(work() / "scan" / "pss_peaks.csv");
    std::string line;
    std::getline(f, line);
    std::vector<double> times;
    while (std::getline(f, line)) {
        std::stringstream ss(line);
        std::string sample, t;
        std::getline(ss, sample, ',');
        std::getline(ss, t, ',');
        times.push_back(std::stod(t));
    }
    REQUIRE(times.size() == 3);
    for (std::size_t i = 1; i < times.size(); ++i) CHECK(times[i] - times[i - 1] == doctest::Approx(0.04).epsilon(1e-3));
    CHECK(fs::file_size(work() / "scan" / "pss_corr.csv") > 0);

    const auto e = path("empty.bin");
    REQUIRE(run("synth --out " + e + " --duration 0.01 --occupancy 000000000") == 0);
    REQUIRE(run("pss-scan --capture " + e + " --out " + path("escan")) == 0);
    CHECK(slurp(work() / "escan" / "pss_peaks.csv") == "sample,time,value,comb_tines\n");
}
