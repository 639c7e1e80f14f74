#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

#include "ofdmid/constants.hpp"
#include "ofdmid/seqest.hpp"
#include "ofdmid/starlink.hpp"
#include "ofdmid/sync.hpp"
#include "ofdmid/synth.hpp"

using namespace ofdmid;

namespace {

constexpr double kFc = 11.325e9;
constexpr long kFrame = 320000;
const sync::DemodContext kCtx{1024, 32, kFc, 0.0};

double rx(double i, double beta, double rate) { return rate * i / (240e6 * (1.0 - beta)); }

synth::Scenario scenario(std::uint64_t seed, double snr_db, double beta) {
    synth::Scenario sc;
    sc.params = starlink::table2();
    sc.seed = seed;
    sc.snr_db = snr_db;
    sc.beta = beta;
    sc.duration = 6e-3;
    return sc;
}

const SampleStream& stream(std::uint64_t seed, double snr_db, double beta) {
    static std::map<std::tuple<std::uint64_t, double, double>, SampleStream> cache;
    const auto key = std::make_tuple(seed, snr_db, beta);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, synth::render_scenario(scenario(seed, snr_db, beta))).first;
    return it->second;
}

double max_of(const starlink::CorrelationSeries& c) { return *std::max_element(c.mag.begin(), c.mag.end()); }

}  // namespace

TEST_CASE("stored constants") {
    CHECK_NOTHROW(starlink::check_qsss());
    CHECK(starlink::kQsssHex.size() == starlink::kQsssDigits);
    CHECK(starlink::fnv1a64(starlink::kQsssHex) == starlink::kQsssFnv1a);
    CHECK(starlink::fnv1a64("") == 0xcbf29ce484222325ULL);
    CHECK(starlink::fnv1a64("a") == 0xaf63dc4c8601ec8cULL);

    CHECK(synth::pack_msequence_hex(synth::starlink_msequence()) == starlink::kQpssHex);
    CHECK(seqest::sss_hex(synth::sss_digits(1024)) == starlink::kQsssHex);
}

TEST_CASE("hex bit helpers") {
    const auto b = starlink::hex_to_bits_lsb("1A");
    CHECK(b == std::vector<int>{0, 1, 0, 1, 1, 0, 0, 0});
    CHECK(starlink::bits_lsb_to_hex(b, 2) == "1A");
    CHECK(starlink::bits_lsb_to_hex(b, 4) == "001A");
    const auto q = starlink::hex_to_bits_lsb(starlink::kQpssHex);
    REQUIRE(q.size() == 128);
    CHECK(q[0] == 0);
    CHECK(starlink::bits_lsb_to_hex(q, 32) == starlink::kQpssHex);
    CHECK(starlink::hex_to_bits_lsb("c1b5") == starlink::hex_to_bits_lsb("C1B5"));
}

TEST_CASE("table parameters") {
    const auto p = starlink::table2();
    CHECK_NOTHROW(p.validate());
    CHECK(p.N == 1024);
    CHECK(p.Tf == Rational(1, 750));
}

TEST_CASE("replicas") {
    CHECK(starlink::pss_replica() == synth::gen_pss());
    CHECK(starlink::sss_replica() == synth::ofdm_time_symbol(synth::gen_sss(1024), 1024, 32));
    for (const auto& v : starlink::pss_replica()) CHECK(std::abs(std::abs(v) - 1.0) < 1e-12);
    const auto& r = starlink::sss_replica();
    double e = 0.0;
    cplx acc{};
    for (const auto& v : r) {
        e += std::norm(v);
        acc += v * std::conj(v);
    }
    CHECK(std::abs(acc) / e == doctest::Approx(1.0));
    CHECK(&starlink::pss_replica() == &starlink::pss_replica());
}

TEST_CASE("correlator peaks at frame starts") {
    const double beta = 2e-5;
    const auto& y = stream(1, 10.0, beta);
    const auto c = starlink::correlate_pss(y, beta, kCtx);
    const auto peaks = starlink::find_peaks(c, 0.5 * max_of(c), 0.5e-3);
    REQUIRE(peaks.size() >= 4);
    for (const auto& p : peaks) {
        const double m = std::round(p.sample / rx(kFrame, beta, y.rate));
        CHECK(std::abs(p.sample - rx(m * kFrame, beta, y.rate)) <= 1.0);
    }
    for (std::size_t i = 1; i < peaks.size(); ++i)
        CHECK(std::abs(peaks[i].index - peaks[i - 1].index - std::lround(y.rate / 750.0 / (1.0 - beta))) <= 1);

    // Global gain and phase move nothing.
    SampleStream z = y;
    for (auto& v : z.samples) v *= std::polar(0.03, -2.0);
    const auto cz = starlink::correlate_pss(z, beta, kCtx);
    const auto pz = starlink::find_peaks(cz, 0.5 * max_of(cz), 0.5e-3);
    REQUIRE(pz.size() == peaks.size());
    for (std::size_t i = 0; i < pz.size(); ++i) CHECK(pz[i].index == peaks[i].index);

    SampleStream tiny;
    tiny.rate = y.rate;
    tiny.samples.assign(100, cplx{1.0, 0.0});
    CHECK_THROWS(starlink::correlate_pss(tiny, beta, kCtx));
}

TEST_CASE("comb around a peak") {
    // Full rate, noiseless, interior frame. Lag k blocks overlaps |6 - k| net blocks, so +-6 is the weak one.
    auto sc = scenario(2, 60.0, 0.0);
    sc.rate = 240e6;
    sc.prefilter = synth::Prefilter::Ideal;
    sc.duration = 3e-3;
    const auto y = synth::render_scenario(sc);
    const auto c = starlink::correlate_pss(y, 0.0, kCtx);
    const auto peaks = starlink::find_peaks(c, 0.5 * max_of(c), 0.5e-3);
    REQUIRE(peaks.size() >= 2);
    std::vector<double> s(c.mag);
    std::nth_element(s.begin(), s.begin() + static_cast<long>(s.size() / 2), s.end());
    const auto comb = starlink::comb_check(c, peaks[1], s[s.size() / 2], 3.0);
    CHECK(comb.tine_values.size() == 14);
    CHECK(comb.tines_above >= 10);
}

TEST_CASE("noise alone stays under the frame peak") {
    const auto& y = stream(3, 5.0, 0.0);
    auto sc = scenario(3, 5.0, 0.0);
    sc.resolve();
    sc.occupancy.assign(static_cast<std::size_t>(sc.frames), false);
    const auto n = synth::render_scenario(sc);
    const double sig = max_of(starlink::correlate_pss(y, 0.0, kCtx));
    const double noise = max_of(starlink::correlate_pss(n, 0.0, kCtx));
    CHECK(noise < 0.3 * sig);
}

TEST_CASE("coherent observable") {
    const double beta = 1.5e-5;
    const auto& y = stream(4, -6.0, beta);
    const double stride = sync::SyncSearchSpace::stride_for(0.02, 240e6, 1024, kFc);
    double both = 0.0, pss = 0.0;
    int frames = 0;
    for (int m = 1; m <= 4; ++m) {
        const long guess = std::lround(rx(m * kFrame, beta, y.rate)) + 5;
        starlink::CoherentConfig cfg;
        cfg.threshold = 0.0;
        const auto a = starlink::coherent_observable(y, guess, beta, kCtx, cfg);
        cfg.use_sss = false;
        const auto b = starlink::coherent_observable(y, guess, beta, kCtx, cfg);
        both += 10.0 * std::log10(a.snr);
        pss += 10.0 * std::log10(b.snr);
        ++frames;
        CHECK(std::abs(a.sample - rx(m * kFrame, beta, y.rate)) < 1.0);
        CHECK(a.snr > 30.0);
    }
    // Doubling the coherent length: about 3 dB.
    CHECK((both - pss) / frames == doctest::Approx(3.0).epsilon(0.4));

    // Detuned replica.
    starlink::CoherentConfig cfg;
    cfg.threshold = 0.0;
    const long guess = std::lround(rx(2 * kFrame, beta, y.rate));
    const auto& hi = stream(4, 30.0, beta);
    const auto ok = starlink::coherent_observable(hi, guess, beta, kCtx, cfg);
    const auto off = starlink::coherent_observable(hi, guess, beta + 10 * stride, kCtx, cfg);
    CHECK(20.0 * std::log10(ok.peak / off.peak) > 1.0);

    // Nothing there.
    CHECK_THROWS_AS(starlink::coherent_observable(y, std::lround(rx(kFrame + 150000, beta, y.rate)), beta, kCtx),
                    StageError);
}

TEST_CASE("arrival time precision") {
    // 5 dB: error under 1 / (4 Fh). Noiseless: unbiased to 0.05 samples.
    const double beta = -1.7e-5;
    const auto& y = stream(6, 5.0, beta);
    const auto& clean = stream(6, 120.0, beta);
    const double Fh = y.usable_bandwidth();
    for (int m = 1; m <= 4; ++m) {
        const double truth = rx(m * kFrame, beta, y.rate);
        const auto a = starlink::coherent_observable(y, std::lround(truth), beta, kCtx);
        CHECK(std::abs(a.sample - truth) / y.rate < 1.0 / (4.0 * Fh));
        const auto b = starlink::coherent_observable(clean, std::lround(truth), beta, kCtx);
        CHECK(std::abs(b.sample - truth) < 0.05);
        CHECK(b.time == doctest::Approx(clean.epoch + b.sample / clean.rate));
    }
}
