// ofdmid: synthesize captures, identify OFDM parameters, recover sync sequences, scan for PSS.

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>

#include "ofdmid/capture.hpp"
#include "ofdmid/constants.hpp"
#include "ofdmid/pipeline.hpp"
#include "ofdmid/starlink.hpp"
#include "ofdmid/synth.hpp"

namespace fs = std::filesystem;
using namespace ofdmid;

namespace {

constexpr int kExitStage = 2;
constexpr int kExitIo = 3;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::map<std::string, std::string> load_config(const std::string& path) {
    if (path.empty()) return {};
    try {
        return capture::read_kv(path);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
}

double cfg_num(const std::map<std::string, std::string>& kv, const std::string& key, double dflt) {
    auto it = kv.find(key);
    if (it == kv.end()) return dflt;
    try {
        return to_double(parse_rational(it->second));
    } catch (const std::exception&) {
        throw ConfigError("config: bad number for '" + key + "': " + it->second);
    }
}

std::string cfg_str(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& dflt) {
    auto it = kv.find(key);
    return it == kv.end() ? dflt : it->second;
}

void write_text(const fs::path& p, const std::string& s) {
    std::ofstream f(p);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << s;
}

std::string num(double v, int prec = 12) {
    std::ostringstream o;
    o.precision(prec);
    o << v;
    return o.str();
}

// "all", "1/30" (one frame in 30), or a repeating 0/1 pattern such as "1,0,1".
std::vector<bool> parse_occupancy(const std::string& s, int frames) {
    std::vector<bool> occ(static_cast<std::size_t>(frames), true);
    if (s.empty() || s == "all") return occ;
    if (auto slash = s.find('/'); slash != std::string::npos) {
        const int every = std::stoi(s.substr(slash + 1));
        if (every <= 0) throw ConfigError("occupancy: period must be positive");
        for (int m = 0; m < frames; ++m) occ[m] = m % every == 0;
        return occ;
    }
    std::vector<bool> pat;
    for (char c : s) {
        if (c == '1') pat.push_back(true);
        else if (c == '0') pat.push_back(false);
        else if (c != ',' && c != ' ') throw ConfigError("occupancy: unexpected '" + std::string(1, c) + "'");
    }
    if (pat.empty()) throw ConfigError("occupancy: empty pattern");
    for (int m = 0; m < frames; ++m) occ[m] = pat[static_cast<std::size_t>(m) % pat.size()];
    return occ;
}

struct SynthArgs {
    std::string out, config, format = "float32", occupancy = "all", prefilter = "fir", modulation = "4qam";
    std::uint64_t seed = 1;
    double rate = 62.5e6, fh = 0.0, center = 0.0, fc = 11.325e9, snr_db = 10.0, beta = 0.0, tau0 = 0.0,
           duration = 10e-3;
    int frames = 0;
    bool pilots = false;
};

int cmd_synth(SynthArgs a, const CLI::App& app) {
    const auto kv = load_config(a.config);
    auto pick = [&](const char* flag, const char* key, double& v) {
        if (app.count(flag) == 0) v = cfg_num(kv, key, v);
    };
    pick("--rate", "Fr", a.rate);
    pick("--fh", "Fh", a.fh);
    pick("--center", "Fc_bar", a.center);
    pick("--fc", "Fc", a.fc);
    pick("--snr-db", "snr_db", a.snr_db);
    pick("--beta", "beta", a.beta);
    pick("--tau0", "tau0", a.tau0);
    pick("--duration", "duration", a.duration);
    if (app.count("--frames") == 0) a.frames = static_cast<int>(cfg_num(kv, "frames", a.frames));
    if (app.count("--seed") == 0) a.seed = static_cast<std::uint64_t>(cfg_num(kv, "seed", static_cast<double>(a.seed)));
    if (app.count("--format") == 0) a.format = cfg_str(kv, "format", a.format);
    if (app.count("--occupancy") == 0) a.occupancy = cfg_str(kv, "occupancy", a.occupancy);
    if (app.count("--prefilter") == 0) a.prefilter = cfg_str(kv, "prefilter", a.prefilter);
    if (app.count("--modulation") == 0) a.modulation = cfg_str(kv, "modulation", a.modulation);

    // Table II, overridden key by key from the config file.
    auto pkv = parse_kv(params_to_kv(starlink::table2()));
    for (const auto& [k, v] : kv)
        if (pkv.count(k)) pkv[k] = v;
    IndependentParams p;
    try {
        p = params_from_kv(pkv);
        p.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    synth::Scenario sc;
    sc.params = p;
    sc.seed = a.seed;
    sc.rate = a.rate;
    sc.fh = a.fh;
    sc.center = a.center;
    sc.fc = a.fc;
    sc.snr_db = a.snr_db;
    sc.beta = a.beta;
    sc.tau0 = a.tau0;
    sc.duration = a.duration;
    sc.frames = a.frames;
    sc.pilots = a.pilots;
    if (a.modulation == "4qam") sc.modulation = synth::Modulation::Qam4;
    else if (a.modulation == "16qam") sc.modulation = synth::Modulation::Qam16;
    else throw ConfigError("modulation must be 4qam or 16qam");
    if (a.prefilter == "ideal") sc.prefilter = synth::Prefilter::Ideal;
    else if (a.prefilter == "fir") sc.prefilter = synth::Prefilter::Fir;
    else throw ConfigError("prefilter must be fir or ideal");
    SampleStream y;
    try {
        sc.resolve();
        sc.occupancy = parse_occupancy(a.occupancy, sc.frames);
        y = synth::render_scenario(sc);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    a.center = sc.center;
    a.fh = sc.fh;
    a.frames = sc.frames;

    capture::write_capture(a.out, y, capture::parse_format(a.format));
    std::map<std::string, std::string> truth = pkv;
    truth["beta"] = num(a.beta);
    truth["tau0"] = num(a.tau0);
    truth["Fc"] = num(a.fc, 15);
    truth["Fc_bar"] = num(a.center, 15);
    truth["Fr"] = num(a.rate);
    truth["Fh"] = num(a.fh);
    truth["snr_db"] = num(a.snr_db);
    truth["seed"] = std::to_string(a.seed);
    truth["frames"] = std::to_string(a.frames);
    truth["occupancy"] = a.occupancy;
    truth["modulation"] = a.modulation;
    truth["samples"] = std::to_string(y.size());
    capture::write_kv(capture::truth_path(a.out), truth);
    std::cout << "wrote " << a.out << " (" << y.size() << " samples at " << num(a.rate) << " Hz)\n";
    return 0;
}

struct IdentifyArgs {
    std::string capture, out = "ofdmid_out", config, stage = "Fc";
};

int cmd_identify(const IdentifyArgs& a) {
    const auto kv = load_config(a.config);
    pipeline::IdentifyConfig cfg;
    cfg.Fs_bar = cfg_num(kv, "Fs_bar", cfg.Fs_bar);
    cfg.Fc_bar = cfg_num(kv, "Fc_bar", cfg.Fc_bar);
    cfg.cyclic.p = cfg_num(kv, "p", cfg.cyclic.p);
    if (kv.count("nu_db")) cfg.cyclic.nu = std::pow(10.0, cfg_num(kv, "nu_db", 10.0) / 10.0);
    cfg.cyclic.nu = cfg_num(kv, "nu", cfg.cyclic.nu);
    cfg.cyclic.Np = static_cast<int>(cfg_num(kv, "Np", cfg.cyclic.Np));
    cfg.cyclic.M = static_cast<std::size_t>(cfg_num(kv, "M", static_cast<double>(cfg.cyclic.M)));
    cfg.Td = cfg_num(kv, "Td", cfg.Td);
    cfg.Tm = cfg_num(kv, "Tm", cfg.Tm);
    cfg.d = static_cast<int>(cfg_num(kv, "d", cfg.d));
    cfg.beta_m = cfg_num(kv, "beta_m", cfg.beta_m);
    cfg.epsilon = cfg_num(kv, "epsilon", cfg.epsilon);
    cfg.bs = static_cast<int>(cfg_num(kv, "bs", cfg.bs));
    cfg.detect.theta_high_db = cfg_num(kv, "theta_high_db", cfg.detect.theta_high_db);
    cfg.detect.theta_low_db = cfg_num(kv, "theta_low_db", cfg.detect.theta_low_db);
    try {
        cfg.cyclic.validate();
        cfg.last = pipeline::parse_stage(a.stage);
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }

    const SampleStream y = capture::read_capture(a.capture);
    fs::create_directories(a.out);
    const auto rep = pipeline::identify(y, cfg);
    for (const auto& [name, body] : rep.csv) write_text(fs::path(a.out) / name, body);
    write_text(fs::path(a.out) / "report.txt", rep.text());
    std::cout << rep.text();
    if (!rep.ok) {
        std::cerr << "stage " << rep.failed_stage << " failed: " << rep.error << " (diagnostics in " << a.out << ")\n";
        return kExitStage;
    }
    return 0;
}

struct SeqestArgs {
    std::vector<std::string> captures;
    std::string out = "ofdmid_out", config, sequences = "pss,sss";
    int frames = 20;
};

int cmd_seqest(const SeqestArgs& a) {
    const auto kv = load_config(a.config);
    pipeline::SeqestConfig cfg;
    cfg.N = static_cast<int>(cfg_num(kv, "N", cfg.N));
    cfg.Ng = static_cast<int>(cfg_num(kv, "Ng", cfg.Ng));
    if (kv.count("Tf")) cfg.Tf = parse_rational(kv.at("Tf"));
    cfg.Fs = cfg_num(kv, "Fs", cfg.Fs);
    cfg.Fc = cfg_num(kv, "Fc", cfg.Fc);
    cfg.capture_margin = cfg_num(kv, "capture_margin", cfg.capture_margin);
    cfg.sync.max_frames = a.frames;
    const bool want_pss = a.sequences.find("pss") != std::string::npos;
    const bool want_sss = a.sequences.find("sss") != std::string::npos;

    std::vector<SampleStream> caps;
    for (const auto& c : a.captures) caps.push_back(capture::read_capture(c));
    fs::create_directories(a.out);

    pipeline::SeqestResult r;
    try {
        r = pipeline::run_seqest(caps, cfg);
    } catch (const StageError& e) {
        write_text(fs::path(a.out) / "seqest.txt", std::string("failed_stage=") + e.stage() + "\nerror=" + e.what() + "\n");
        std::cerr << e.what() << "\n";
        return kExitStage;
    }
    std::ostringstream rep;
    for (const auto& [k, v] : r.entries) rep << k << "=" << v << "\n";
    bool failed = false;
    if (want_pss) {
        if (r.pss) {
            rep << "pss.matches_stored=" << (r.pss->hex == starlink::kQpssHex ? "yes" : "no") << "\n";
        } else {
            failed = true;
            std::cerr << r.pss_error << "\n";
        }
    }
    if (want_sss) {
        if (r.sss) {
            const bool match = r.sss->hex == starlink::kQsssHex;
            rep << "sss.matches_stored=" << (match ? "yes" : "no") << "\n";
            if (!match) {
                std::size_t diff = 0;
                for (std::size_t i = 0; i < r.sss->hex.size() && i < starlink::kQsssHex.size(); ++i)
                    diff += r.sss->hex[i] != starlink::kQsssHex[i];
                rep << "sss.hex_digits_differing=" << diff << "\n";
            }
        } else {
            failed = true;
            std::cerr << r.sss_error << "\n";
        }
    }
    write_text(fs::path(a.out) / "seqest.txt", rep.str());
    std::cout << rep.str();
    return failed ? kExitStage : 0;
}

struct ScanArgs {
    std::string capture, out = "ofdmid_out", config;
    double beta = 0.0, fc = 0.0, threshold_factor = 6.0, relative = 0.5, min_sep = 1e-3;
    std::size_t stride = 1;
};

int cmd_pss_scan(const ScanArgs& a) {
    const auto kv = load_config(a.config);
    const SampleStream y = capture::read_capture(a.capture);
    sync::DemodContext ctx;
    ctx.Fc_bar = y.center;
    const double Fc = a.fc > 0.0 ? a.fc : cfg_num(kv, "Fc", y.center);
    ctx.center_offset = Fc - y.center;
    const auto c = starlink::correlate_pss(y, a.beta, ctx, a.stride);
    std::vector<double> sorted(c.mag);
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    // Data correlation inside an occupied frame also clears the median test when most frames are empty.
    const double top = *std::max_element(c.mag.begin(), c.mag.end());
    const auto peaks = starlink::find_peaks(c, std::max(a.threshold_factor * median, a.relative * top), a.min_sep);

    fs::create_directories(a.out);
    write_text(fs::path(a.out) / "pss_corr.csv", starlink::series_csv(c));
    std::ostringstream o;
    o.precision(15);
    o << "sample,time,value,comb_tines\n";
    for (const auto& p : peaks) {
        const auto comb = starlink::comb_check(c, p, median);
        o << p.sample << "," << y.epoch + p.sample / y.rate << "," << p.value << "," << comb.tines_above << "\n";
    }
    write_text(fs::path(a.out) / "pss_peaks.csv", o.str());
    std::cout << "median=" << median << "\npeaks=" << peaks.size() << "\n";
    for (const auto& p : peaks) std::cout << "peak_time=" << num(y.epoch + p.sample / y.rate, 15) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Blind OFDM signal identification for Ku-band satellite downlinks"};
    app.require_subcommand(1);

    SynthArgs sa;
    auto* synth_cmd = app.add_subcommand("synth", "synthesize a capture with ground-truth sidecar");
    synth_cmd->add_option("--out", sa.out, "payload path (.hdr and .truth written alongside)")->required();
    synth_cmd->add_option("--config", sa.config, "key=value file (parameters and channel)");
    synth_cmd->add_option("--seed", sa.seed);
    synth_cmd->add_option("--format", sa.format, "int16 or float32");
    synth_cmd->add_option("--rate", sa.rate, "receiver sample rate Fr (Hz)");
    synth_cmd->add_option("--fh", sa.fh, "prefilter bandwidth (Hz)");
    synth_cmd->add_option("--center", sa.center, "receiver center frequency (Hz)");
    synth_cmd->add_option("--fc", sa.fc, "true channel center (Hz)");
    synth_cmd->add_option("--snr-db", sa.snr_db);
    synth_cmd->add_option("--beta", sa.beta);
    synth_cmd->add_option("--tau0", sa.tau0);
    synth_cmd->add_option("--frames", sa.frames);
    synth_cmd->add_option("--duration", sa.duration, "seconds");
    synth_cmd->add_option("--occupancy", sa.occupancy, "all, 1/K, or a 0/1 pattern");
    synth_cmd->add_option("--prefilter", sa.prefilter, "fir or ideal");
    synth_cmd->add_option("--modulation", sa.modulation, "4qam or 16qam");
    synth_cmd->add_flag("--pilots", sa.pilots, "pilot-redundancy payload");

    IdentifyArgs ia;
    auto* id_cmd = app.add_subcommand("identify", "estimate N, Fs, Ng, Tf, timing, CFO and Fc");
    id_cmd->add_option("--capture", ia.capture)->required();
    id_cmd->add_option("--out", ia.out);
    id_cmd->add_option("--config", ia.config);
    id_cmd->add_option("--stage", ia.stage, "last stage to run (N, Fs, Ng, Tf, detect, sync, layout, Fc)");

    SeqestArgs qa;
    auto* seq_cmd = app.add_subcommand("seqest", "recover PSS/SSS from one or more captures");
    seq_cmd->add_option("--capture", qa.captures)->required();
    seq_cmd->add_option("--out", qa.out);
    seq_cmd->add_option("--config", qa.config);
    seq_cmd->add_option("--frames", qa.frames, "frames per capture");
    seq_cmd->add_option("--sequences", qa.sequences, "pss, sss or pss,sss");

    ScanArgs pa;
    auto* scan_cmd = app.add_subcommand("pss-scan", "PSS matched-filter scan");
    scan_cmd->add_option("--capture", pa.capture)->required();
    scan_cmd->add_option("--out", pa.out);
    scan_cmd->add_option("--config", pa.config);
    scan_cmd->add_option("--beta", pa.beta);
    scan_cmd->add_option("--fc", pa.fc, "channel center (Hz); default capture center");
    scan_cmd->add_option("--threshold", pa.threshold_factor, "peak threshold as a multiple of the median");
    scan_cmd->add_option("--relative", pa.relative, "peak threshold as a fraction of the strongest response");
    scan_cmd->add_option("--stride", pa.stride);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth_cmd) return cmd_synth(sa, *synth_cmd);
        if (*id_cmd) return cmd_identify(ia);
        if (*seq_cmd) return cmd_seqest(qa);
        if (*scan_cmd) return cmd_pss_scan(pa);
    } catch (const StageError& e) {
        std::cerr << "stage " << e.stage() << " failed: " << e.what() << "\n";
        return kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return 0;
}
