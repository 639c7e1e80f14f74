// Closed-loop acceptance run. One PASS/FAIL line per criterion, details indented below it.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <map>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ofdmid/cyclo.hpp"
#include "ofdmid/dsp.hpp"
#include "ofdmid/pipeline.hpp"
#include "ofdmid/seqest.hpp"
#include "ofdmid/starlink.hpp"
#include "ofdmid/synth.hpp"
#include "ofdmid/sync.hpp"

using namespace ofdmid;

namespace {

constexpr double kFc = 11.325e9;
constexpr double kFs = 240e6;
constexpr long kFrameTx = 320000;  // Tf * Fs
constexpr int kSym = 1056;

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, const std::string& what) {
        notes.push_back(std::string(ok ? "ok   " : "FAIL ") + what);
        pass = pass && ok;
    }
    void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

// Receive index (at `rate`) of transmit sample i, with tau0 = 0.
double rx_index(double i, double beta, double rate) { return rate * i / (kFs * (1.0 - beta)); }

synth::Scenario base_scenario(std::uint64_t seed, double snr_db, double beta) {
    synth::Scenario sc;
    sc.params = starlink::table2();
    sc.seed = seed;
    sc.fc = kFc;
    sc.snr_db = snr_db;
    sc.beta = beta;
    return sc;
}

// 1
Outcome constants() {
    Outcome o;
    const auto t0 = Clock::now();
    const auto hex = synth::pack_msequence_hex(synth::starlink_msequence());
    o.check(hex == starlink::kQpssHex, "q_pss from the LFSR = " + hex);

    const CVec pss = synth::gen_pss(1024, 32);
    const int want_pss[8] = {0, 1, 2, 1, 0, 1, 0, 1};
    bool ok = true;
    std::string got;
    for (int r = 0; r < 8; ++r) {
        const double ph = std::arg(pss[static_cast<std::size_t>(32 + 128 + r)]);
        const int q = static_cast<int>(std::lround((ph - std::numbers::pi / 4) / (std::numbers::pi / 2)));
        const int qm = ((q % 4) + 4) % 4;
        got += std::to_string(qm);
        ok = ok && qm == want_pss[r] && std::abs(std::abs(pss[32 + 128 + r]) - 1.0) < 1e-12;
    }
    o.check(ok, "first PSS subsequence phase indices " + got);

    const auto s = synth::sss_digits(1024);
    const int want_sss[8] = {3, 0, 0, 0, 0, 2, 1, 1};
    ok = true;
    got.clear();
    for (int k = 0; k < 8; ++k) {
        got += std::to_string(s[static_cast<std::size_t>(k + 2)]);
        ok = ok && s[static_cast<std::size_t>(k + 2)] == want_sss[k];
    }
    o.check(ok, "first SSS digits " + got);
    try {
        starlink::check_qsss();
        o.check(true, "q_sss length and checksum");
    } catch (const std::exception& e) {
        o.check(false, e.what());
    }
    const double t = secs_since(t0);
    o.check(t < 1.0, fmt("runtime %.3f s", t));
    return o;
}

// 2
Outcome parameters(double beta) {
    Outcome o;
    auto sc = base_scenario(1, 5.5, beta);
    const SampleStream y = synth::render_scenario(sc);
    const auto t0 = Clock::now();
    pipeline::IdentifyConfig cfg;
    cfg.last = pipeline::Stage::Layout;
    const auto r = pipeline::identify(y, cfg);
    const double t = secs_since(t0);
    if (!r.ok) {
        o.check(false, "identify failed: " + r.error);
        return o;
    }
    o.check(r.N->N == 1024, "N = " + std::to_string(r.N->N));
    o.check(r.Fs_hat == kFs, fmt("Fs = %.1f", r.Fs_hat));
    o.check(r.Ng->Ng == 32, "Ng = " + std::to_string(r.Ng->Ng));
    o.check(r.Tf->Tf == Rational(1, 750), "Tf = " + format_rational(r.Tf->Tf));
    o.check(r.layout->Nsf == 302, "Nsf = " + std::to_string(r.layout->Nsf));
    o.check(r.layout->Nsfd == 298, "Nsfd = " + std::to_string(r.layout->Nsfd));
    o.check(r.layout->Tfg == Rational(68, 15000000), "Tfg = " + format_rational(r.layout->Tfg) + " s");
    o.check(t < 60.0, fmt("runtime %.1f s", t));
    return o;
}

// 3
Outcome validation_step() {
    Outcome o;
    int good = 0, lobes = 0;
    for (int seed = 1; seed <= 10; ++seed) {
        auto sc = base_scenario(static_cast<std::uint64_t>(seed), 5.5, 2e-5);
        sc.pilots = true;
        const SampleStream y = synth::render_scenario(sc);
        pipeline::IdentifyConfig cfg;
        cfg.last = pipeline::Stage::N;
        const auto r = pipeline::identify(y, cfg);
        int rejected = 0;
        std::string tries;
        if (r.N) {
            for (const auto& a : r.N->attempts) {
                if (!a.accepted) ++rejected;
                tries += fmt(" %.0f:%.2f", static_cast<double>(a.tau_star), a.ratio);
                tries += a.accepted ? "+" : "-";
            }
        }
        const int N = r.N ? r.N->N : 0;
        if (N == 1024) ++good;
        if (rejected > 0) ++lobes;
        o.note("seed " + std::to_string(seed) + ": N = " + std::to_string(N) + ", attempts" + tries);
    }
    o.note(std::to_string(lobes) + " of 10 seeds rejected at least one candidate");
    o.check(good >= 9, std::to_string(good) + " of 10 seeds give N = 1024");
    return o;
}

// Fraction of points whose cluster's majority symbol is not their own.
double misassignment(const std::vector<cplx>& pts, const std::vector<int>& truth, int k) {
    const auto km = sync::kmeans(pts, k);
    std::vector<std::map<int, int>> votes(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < pts.size(); ++i) ++votes[static_cast<std::size_t>(km.labels[i])][truth[i]];
    std::size_t right = 0;
    for (const auto& v : votes) {
        int best = 0;
        for (const auto& [sym, c] : v) best = std::max(best, c);
        right += static_cast<std::size_t>(best);
    }
    return 1.0 - static_cast<double>(right) / static_cast<double>(pts.size());
}

// Symbol index of a constellation point among the distinct values of the grid.
int symbol_id(cplx v) {
    return static_cast<int>(std::lround(v.real() * 1e4)) * 100003 + static_cast<int>(std::lround(v.imag() * 1e4));
}

double cluster_error(synth::Modulation mod, int bs, double beta, int n_symbols) {
    auto sc = base_scenario(7, 15.0, beta);
    sc.modulation = mod;
    sc.duration = 3e-3;
    const SampleStream y = cyclo::resample(synth::render_scenario(sc), kFs);
    const auto grid = synth::standard_frame_grid(sc.params, {mod}, sc.seed * 1000 + 1);
    sync::DemodContext ctx{1024, 32, kFc, 0.0};
    const auto mask = sync::default_mask(y, ctx);
    // One clustering over the pooled points of consecutive data symbols.
    std::vector<cplx> pts;
    std::vector<int> ids;
    for (int s = 2; s < 2 + n_symbols; ++s) {
        const double n = rx_index(static_cast<double>(kFrameTx + s * kSym), beta, kFs);
        const CVec Y = sync::demod_symbol(y, n, beta, ctx);
        for (int k = 0; k < 1024; ++k)
            if (mask[static_cast<std::size_t>(k)]) {
                pts.push_back(Y[static_cast<std::size_t>(k)]);
                ids.push_back(symbol_id(grid.values[static_cast<std::size_t>(s - 2)][static_cast<std::size_t>(k)]));
            }
    }
    return misassignment(pts, ids, 1 << bs);
}

// 4
Outcome sync_accuracy(double beta, bool constellations) {
    Outcome o;
    auto sc = base_scenario(3, 15.0, beta);
    const SampleStream y = synth::render_scenario(sc);
    pipeline::IdentifyConfig cfg;
    cfg.last = pipeline::Stage::Sync;
    const auto r = pipeline::identify(y, cfg);
    if (!r.ok) {
        o.check(false, "identify failed: " + r.error);
        return o;
    }
    const double stride = sync::SyncSearchSpace::stride_for(cfg.epsilon, kFs, 1024, kFc);
    const long m = std::lround(static_cast<double>(r.sync->n) * (1.0 - beta) / kFrameTx);
    const double n_true = rx_index(static_cast<double>(m * kFrameTx + kSym), beta, kFs);
    o.check(std::abs(r.sync->beta - beta) <= stride,
            fmt("beta %.4e vs %.4e, error %.2f strides", r.sync->beta, beta, std::abs(r.sync->beta - beta) / stride));
    o.check(std::abs(static_cast<double>(r.sync->n) - n_true) <= 1.0,
            fmt("n %.0f vs true %.2f", static_cast<double>(r.sync->n), n_true));

    const SampleStream y240 = cyclo::resample(y, kFs);
    sync::DemodContext ctx{1024, 32, kFc, 0.0};
    const double s_true = sync::score_sync(y240, n_true, beta, ctx, 2, sync::default_mask(y240, ctx));
    const double db = 10.0 * std::log10(s_true);
    o.check(std::abs(db - 15.0) <= 1.5, fmt("score at truth %.2f dB (injected 15 dB)", db));

    if (constellations) {
        const double e4 = cluster_error(synth::Modulation::Qam4, 2, beta, 40);
        o.check(e4 < 0.01, fmt("4QAM cluster misassignment %.3f%%", 100.0 * e4));
        const double e16 = cluster_error(synth::Modulation::Qam16, 4, beta, 40);
        // Nearest-point symbol error rate of square 16QAM at this Es/N0, for comparison.
        const double q = 0.5 * std::erfc(std::sqrt(std::pow(10.0, 1.5) / 5.0) / std::sqrt(2.0));
        o.note(fmt("16QAM symbol error floor at 15 dB, ideal detector: %.2f%%", 100.0 * (3.0 * q - 2.25 * q * q)));
        o.check(e16 < 0.01, fmt("16QAM cluster misassignment %.3f%%", 100.0 * e16));
    }
    return o;
}

// 5
Outcome fc_recovery() {
    Outcome o;
    auto sc = base_scenario(5, 10.0, 2e-5);
    sc.center = kFc + 3e6;
    sc.duration = 12e-3;
    const SampleStream y = synth::render_scenario(sc);
    const auto r = pipeline::identify(y, {});
    if (!r.ok) {
        o.check(false, "identify failed: " + r.error);
        return o;
    }
    const int m0 = r.frame_times.front().m, m1 = r.frame_times.back().m;
    o.note(fmt("%.0f frames spanning %.2f ms, beta_bar %.4e", static_cast<double>(r.frame_times.size()),
               (m1 - m0) / 750.0 * 1e3, r.fc->beta_bar));
    o.check(r.fc->Fc == kFc, fmt("Fc %.0f vs %.0f", r.fc->Fc, kFc));
    return o;
}

// 6
Outcome sequences() {
    Outcome o;
    {
        const double beta = 2e-5;
        auto sc = base_scenario(21, -5.0, beta);
        sc.rate = kFs;
        sc.prefilter = synth::Prefilter::Ideal;
        sc.frames = 53;
        sc.duration = 52.0 / 750.0;
        const SampleStream y = synth::render_scenario(sc);
        sync::DemodContext ctx{1024, 32, kFc, 0.0};
        // Integer-sample timing, as a sample-level synchronizer would deliver.
        std::vector<seqest::FrameSource> frames;
        for (int m = 1; m <= 50; ++m)
            frames.push_back({&y, std::round(rx_index(static_cast<double>(m * kFrameTx), beta, kFs)), beta});
        try {
            const auto p = seqest::estimate_pss_subsequence(frames, ctx);
            double sq = 0.0, mx = 0.0;
            for (std::size_t i = 0; i < p.raw.size(); ++i) {
                const double e = std::abs(std::arg(p.raw[i] * std::conj(p.decided[i]))) * 180.0 / std::numbers::pi;
                sq += e * e;
                mx = std::max(mx, e);
            }
            o.check(p.hex == starlink::kQpssHex, "PSS hex " + p.hex);
            o.check(mx < 5.0, fmt("PSS per-sample phase error max %.2f deg, rms %.2f deg", mx,
                                  std::sqrt(sq / static_cast<double>(p.raw.size()))));
        } catch (const std::exception& e) {
            o.check(false, std::string("PSS: ") + e.what());
        }
    }
    {
        std::vector<SampleStream> caps;
        std::uint64_t seed = 31;
        for (double off : {-96e6, -48e6, 0.0, 48e6, 96e6}) {
            auto sc = base_scenario(seed++, 10.0, 1.5e-5);
            sc.center = kFc + off;
            sc.duration = 0.0295;
            caps.push_back(synth::render_scenario(sc));
        }
        pipeline::SeqestConfig cfg;
        cfg.Fc = kFc;
        cfg.sync.max_frames = 20;
        const auto t0 = Clock::now();
        try {
            const auto r = pipeline::run_seqest(caps, cfg);
            o.note(fmt("seqest %.1f s", secs_since(t0)));
            if (r.sss) {
                o.note(fmt("X2 choice %.0f, X_N/2 choice %.0f, margin %.2f dB, quality %.3f", r.sss->choice_x2,
                           r.sss->choice_xm, r.sss->margin_db, r.sss->quality));
                o.check(r.sss->hex == starlink::kQsssHex, "SSS matches the stored q_sss");
            } else {
                o.check(false, "SSS: " + r.sss_error);
            }
        } catch (const std::exception& e) {
            o.check(false, std::string("SSS: ") + e.what());
        }
    }
    return o;
}

// 7
Outcome correlator() {
    Outcome o;
    const double beta = 2e-5;
    {
        auto sc = base_scenario(41, 10.0, beta);
        sc.duration = 20e-3;
        sc.resolve();
        for (int m = 0; m < sc.frames; ++m) sc.occupancy.push_back(m % 3 == 0);
        const SampleStream y = synth::render_scenario(sc);
        sync::DemodContext ctx{1024, 32, kFc, 0.0};
        const auto c = starlink::correlate_pss(y, beta, ctx);
        std::vector<double> sorted(c.mag);
        std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
        const double median = sorted[sorted.size() / 2];
        // Half the strongest response: occupied frames lift the data correlation well above the empty-frame median.
        const double top = *std::max_element(c.mag.begin(), c.mag.end());
        const auto peaks = starlink::find_peaks(c, 0.5 * top, 0.5e-3);
        int expected = 0;
        for (int m = 0; m < sc.frames; m += 3)
            if (rx_index(static_cast<double>(m * kFrameTx + kSym), beta, y.rate) < static_cast<double>(y.size()))
                ++expected;
        bool on_grid = true;
        int min_tines = 99;
        for (const auto& p : peaks) {
            const double step = rx_index(static_cast<double>(kFrameTx), beta, y.rate);
            const double m = p.sample / step;
            on_grid = on_grid && std::abs(m - std::round(m)) * step <= 2.0 && std::lround(m) % 3 == 0;
            const double block = 128.0 * y.rate / kFs;
            if (p.sample > 8.0 * block && p.sample + 8.0 * block < static_cast<double>(y.size()))
                min_tines = std::min(min_tines, starlink::comb_check(c, p, median, 3.0).tines_above);
            o.note(fmt("peak at sample %.2f (frame %.4f), value %.1f x median", p.sample, m, p.value / median));
        }
        o.check(static_cast<int>(peaks.size()) == expected && on_grid,
                fmt("%.0f peaks (expected %.0f), all at frame multiples: ", static_cast<double>(peaks.size()),
                    expected) +
                    (on_grid ? "yes" : "no"));
        o.check(min_tines < 99 && min_tines >= 10,
                fmt("fewest secondary comb tines above 3x floor (interior peaks): %.0f", min_tines));
    }
    {
        int hits = 0;
        std::string detail;
        for (int seed = 1; seed <= 10; ++seed) {
            auto sc = base_scenario(static_cast<std::uint64_t>(100 + seed), -6.0, beta);
            sc.duration = 6e-3;
            sc.resolve();
            for (int m = 0; m < sc.frames; ++m) sc.occupancy.push_back(m % 2 == 0);
            const SampleStream y = synth::render_scenario(sc);
            sync::DemodContext ctx{1024, 32, kFc, 0.0};
            const double truth = rx_index(static_cast<double>(2 * kFrameTx), beta, y.rate);
            try {
                const auto obs = starlink::coherent_observable(y, std::lround(truth) + 17, beta, ctx);
                const bool ok = obs.snr >= starlink::CoherentConfig{}.threshold && std::abs(obs.sample - truth) <= 1.0;
                hits += ok ? 1 : 0;
                detail += fmt(" %.1f/%.2f", 10.0 * std::log10(obs.snr), obs.sample - truth);
            } catch (const std::exception& e) {
                detail += " err";
            }
        }
        o.note("coherent SNR dB / timing error per seed:" + detail);
        o.check(hits >= 9, std::to_string(hits) + " of 10 seeds detected at -6 dB");
    }
    return o;
}

// 8
Outcome doppler_sweep() {
    Outcome o;
    for (double beta : {-2.5e-5, 0.0, 2.5e-5}) {
        const auto a = parameters(beta);
        const auto b = sync_accuracy(beta, true);
        o.check(a.pass, fmt("beta %.1e: parameter closed loop", beta));
        o.check(b.pass, fmt("beta %.1e: sync accuracy", beta));
        for (const auto& n : a.notes)
            if (n.rfind("FAIL", 0) == 0) o.note("  " + n);
        for (const auto& n : b.notes)
            if (n.rfind("FAIL", 0) == 0) o.note("  " + n);
    }
    return o;
}

// 9
Outcome invariants() {
    Outcome o;
    std::mt19937_64 rng(9);
    std::normal_distribution<double> g;
    CVec x(4096);
    for (auto& v : x) v = {g(rng), g(rng)};
    {
        const CVec back = dsp::idft_unitary(dsp::dft_unitary(x));
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) {
            num += std::norm(back[i] - x[i]);
            den += std::norm(x[i]);
        }
        const double rel = std::sqrt(num / den);
        o.check(rel < 1e-12, fmt("DFT round trip relative error %.2e", rel));
    }
    {
        // Band-limited test signal: tones inside 40% of the rate.
        SampleStream s;
        s.rate = 62.5e6;
        const std::size_t n = 1 << 15;
        s.samples.assign(n, cplx{});
        std::uniform_real_distribution<double> u(-0.4, 0.4), ph(0.0, 2.0 * std::numbers::pi);
        for (int t = 0; t < 24; ++t) {
            const double f = u(rng) * s.rate, p0 = ph(rng);
            for (std::size_t i = 0; i < n; ++i)
                s.samples[i] += std::polar(1.0 / 24.0, 2.0 * std::numbers::pi * f * static_cast<double>(i) / s.rate + p0);
        }
        auto interior_rms = [&](const CVec& a) {
            double e = 0.0, p = 0.0;
            std::size_t cnt = 0;
            for (std::size_t i = 200; i + 200 < std::min(a.size(), n); ++i, ++cnt) {
                e += std::norm(a[i] - s.samples[i]);
                p += std::norm(s.samples[i]);
            }
            return std::sqrt(e / p);
        };
        const double id = interior_rms(cyclo::resample(s, s.rate).samples);
        o.check(id < 1e-6, fmt("resampler identity RMS %.2e", id));
        const SampleStream up = cyclo::resample(s, kFs);
        const double rt = interior_rms(cyclo::resample(up, s.rate).samples);
        o.check(rt < 1e-6, fmt("resampler round trip via 240 MHz RMS %.2e", rt));
    }
    {
        const std::size_t M = 3000;
        SampleStream s;
        s.rate = 1.0;
        s.samples = x;
        const cplx r0 = cyclo::cyclic_autocorr(s, 0.0, 0, M);
        const double p = dsp::mean_power(std::span<const cplx>(x).first(M));
        const double rel = std::abs(r0 - p) / p;
        o.check(rel < 1e-12, fmt("R^0(0) vs mean power relative error %.2e", rel));
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    struct Item {
        const char* name;
        Outcome (*run)();
    };
    const Item items[] = {
        {"1 constants bit-exact", constants},
        {"2 parameter closed loop", [] { return parameters(2e-5); }},
        {"3 validation step rejects lobes", validation_step},
        {"4 sync accuracy", [] { return sync_accuracy(2e-5, true); }},
        {"5 Fc recovery", fc_recovery},
        {"6 sequence recovery", sequences},
        {"7 correlator properties", correlator},
        {"8 Doppler sweep", doppler_sweep},
        {"9 numerical invariants", invariants},
    };
    int failed = 0;
    for (const auto& it : items) {
        // Optional arguments pick criteria by number.
        bool wanted = argc < 2;
        for (int a = 1; a < argc; ++a) wanted = wanted || std::string(it.name).rfind(std::string(argv[a]) + " ", 0) == 0;
        if (!wanted) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = it.run();
        } catch (const std::exception& e) {
            o.check(false, std::string("exception: ") + e.what());
        }
        std::printf("%s criterion %s (%.1f s)\n", o.pass ? "PASS" : "FAIL", it.name, secs_since(t0));
        for (const auto& n : o.notes) std::printf("    %s\n", n.c_str());
        std::fflush(stdout);
        failed += o.pass ? 0 : 1;
    }
    std::printf("%d criteria failed\n", failed);
    return failed == 0 ? 0 : 1;
}
