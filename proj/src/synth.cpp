#include "ofdmid/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

#include "ofdmid/constants.hpp"
#include "ofdmid/dsp.hpp"

namespace ofdmid::synth {

namespace {

constexpr double kPi = std::numbers::pi;

// Quarter-turn phasor, exact.
cplx quarter(int q) {
    switch (((q % 4) + 4) % 4) {
        case 0: return {1.0, 0.0};
        case 1: return {0.0, 1.0};
        case 2: return {-1.0, 0.0};
        default: return {0.0, -1.0};
    }
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a ^ (b * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

cplx draw_symbol(Modulation m, std::mt19937_64& rng) {
    switch (m) {
        case Modulation::Qam4: {
            const double a = 1.0 / std::sqrt(2.0);
            const auto r = rng();
            return {(r & 1) ? a : -a, (r & 2) ? a : -a};
        }
        case Modulation::Qam16: {
            static constexpr double lv[4] = {-3.0, -1.0, 1.0, 3.0};
            const double a = 1.0 / std::sqrt(10.0);
            const auto r = rng();
            return {lv[r & 3] * a, lv[(r >> 2) & 3] * a};
        }
        default:
            return {0.0, 0.0};
    }
}

}  // namespace

int bits_per_symbol(Modulation m) {
    switch (m) {
        case Modulation::Qam4: return 2;
        case Modulation::Qam16: return 4;
        default: return 0;
    }
}

bool is_gutter(int k, int N) { return k == 0 || k == 1 || k == N - 2 || k == N - 1; }

CVec ofdm_time_symbol(std::span<const cplx> coeffs, int N, int Ng) {
    if (static_cast<int>(coeffs.size()) != N) throw std::invalid_argument("ofdm_time_symbol: length mismatch");
    if (Ng < 0 || Ng > N) throw std::invalid_argument("ofdm_time_symbol: bad guard length");
    const CVec body = dsp::idft_unitary(coeffs);
    CVec out(static_cast<std::size_t>(N + Ng));
    std::copy(body.end() - Ng, body.end(), out.begin());
    std::copy(body.begin(), body.end(), out.begin() + Ng);
    return out;
}

std::vector<int> lfsr_msequence(const std::vector<int>& taps, const std::vector<int>& init, std::size_t len) {
    const int deg = taps.empty() ? 0 : *std::max_element(taps.begin(), taps.end());
    if (deg <= 0 || static_cast<int>(init.size()) != deg)
        throw std::invalid_argument("lfsr_msequence: init length must equal polynomial degree");
    if (std::all_of(init.begin(), init.end(), [](int b) { return b == 0; }))
        throw std::invalid_argument("lfsr_msequence: all-zero state");
    // hist[i] holds a_{i - deg}; init lists a_-1 first.
    std::vector<int> hist(init.rbegin(), init.rend());
    hist.reserve(deg + len);
    for (std::size_t n = 0; n < len; ++n) {
        int v = 0;
        for (int t : taps) v ^= hist[hist.size() - t];
        hist.push_back(v);
    }
    return {hist.begin() + deg, hist.end()};
}

std::vector<int> starlink_msequence() { return lfsr_msequence({3, 7}, {0, 0, 1, 1, 0, 1, 0}, 127); }

std::string pack_msequence_hex(const std::vector<int>& a) {
    // LSB-first bit i of the packed value is a_{len - i} for i >= 1; bit 0 is the appended zero.
    std::vector<int> bits(a.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) bits[i] = a[a.size() - i];
    return starlink::bits_lsb_to_hex(bits, (bits.size() + 3) / 4);
}

CVec gen_pss(int N, int Ng) {
    if (N % 8 != 0) throw std::invalid_argument("gen_pss: N must be divisible by 8");
    const int L = N / 8;
    const auto bits = starlink::hex_to_bits_lsb(starlink::kQpssHex);
    if (L > static_cast<int>(bits.size())) throw std::invalid_argument("gen_pss: N/8 exceeds q_pss length");
    // p_k = j^(2*1_P(k) - sum b) * exp(-j pi/4)
    std::vector<int> cum(L);
    int acc = 0;
    for (int l = 0; l < L; ++l) {
        acc += 2 * bits[l] - 1;
        cum[l] = acc;
    }
    CVec out(static_cast<std::size_t>(N + Ng));
    const cplx eighth = std::polar(1.0, -kPi / 4.0);
    for (int k = -Ng; k < N; ++k) {
        const int r = ((k % L) + L) % L;
        const int q = (k < L ? 2 : 0) - cum[r];
        out[static_cast<std::size_t>(k + Ng)] = quarter(q) * eighth;
    }
    return out;
}

std::vector<int> sss_digits(int N) {
    if (N != 1024) throw std::invalid_argument("gen_sss: q_sss defines N = 1024 only");
    starlink::check_qsss();
    const auto bits = starlink::hex_to_bits_lsb(starlink::kQsssHex);
    std::vector<int> s(N, -1);
    for (int k = 2; k <= N - 3; ++k) {
        const std::size_t i = 2 * static_cast<std::size_t>(k - 2);
        s[k] = bits[i] + 2 * bits[i + 1];
    }
    return s;
}

CVec gen_sss(int N) {
    const auto s = sss_digits(N);
    CVec X(N, cplx{0.0, 0.0});
    for (int k = 2; k <= N - 3; ++k) X[k] = quarter(s[k]);
    return X;
}

SymbolGrid random_payload(const IndependentParams& p, int nsym, const std::vector<Modulation>& schedule,
                          std::uint64_t seed, const PayloadOptions& opts) {
    if (nsym < 0 || nsym > p.Nsfd) throw std::invalid_argument("random_payload: nsym exceeds Nsfd");
    if (schedule.empty()) throw std::invalid_argument("random_payload: empty modulation schedule");
    const int N = p.N;
    std::vector<char> pilot(N, 0);
    double pilot_amp = 0.0;
    int npilot = 0;
    if (opts.pilots) {
        for (int k : opts.pilots->subcarriers) {
            const int kk = ((k % N) + N) % N;
            if (is_gutter(kk, N)) throw std::invalid_argument("random_payload: pilot on gutter");
            if (!pilot[kk]) ++npilot;
            pilot[kk] = 1;
        }
    }
    const int active = N - 4;
    double data_amp = std::sqrt(static_cast<double>(N) / active);
    if (npilot > 0) {
        const double rho = opts.pilots->power_fraction;
        if (!(rho > 0.0 && rho < 1.0)) throw std::invalid_argument("random_payload: pilot power fraction");
        pilot_amp = std::sqrt(rho * N / npilot);
        data_amp = std::sqrt((1.0 - rho) * N / (active - npilot));
    }

    std::mt19937_64 rng(seed);
    SymbolGrid g;
    g.N = N;
    for (int i = 0; i < nsym; ++i) {
        const Modulation m = schedule[static_cast<std::size_t>(i) % schedule.size()];
        CVec row(N, cplx{0.0, 0.0});
        if (m == Modulation::Qam4 || m == Modulation::Qam16) {
            const cplx shared = draw_symbol(Modulation::Qam4, rng);
            for (int k = 0; k < N; ++k) {
                if (is_gutter(k, N)) continue;
                row[k] = pilot[k] ? shared * pilot_amp : draw_symbol(m, rng) * data_amp;
            }
        }
        g.values.push_back(std::move(row));
        g.tags.push_back(m);
    }
    return g;
}

SymbolGrid standard_frame_grid(const IndependentParams& p, const std::vector<Modulation>& schedule,
                               std::uint64_t seed, const PayloadOptions& opts) {
    SymbolGrid g = random_payload(p, p.Nsfd, schedule, seed, opts);
    const int extra = p.Nsf - 2 - p.Nsfd;
    // Coda stand-ins: the last row (CSS) is the same in every frame, box-oriented like the payload
    // (the SSS is the diamond); earlier rows (CM1SS) repeat on even subcarriers only.
    if (extra > 0) {
        const SymbolGrid fixed = random_payload(p, extra, {Modulation::Qam4}, 0xC0DA, {});
        const SymbolGrid var = random_payload(p, extra, {Modulation::Qam4}, mix_seed(seed, 0xC0DA), {});
        for (int i = 0; i < extra; ++i) {
            CVec row = fixed.values[i];
            if (i != extra - 1)
                for (int k = 1; k < p.N; k += 2) row[k] = var.values[i][k];
            g.values.push_back(std::move(row));
            g.tags.push_back(Modulation::Qam4);
        }
    }
    return g;
}

SampleStream build_frames(const std::vector<SymbolGrid>& grids, const IndependentParams& p, int frames,
                          const FrameOptions& opts) {
    p.validate();
    if (frames < 0) throw std::invalid_argument("build_frames: negative frame count");
    const int N = p.N, Ng = p.Ng;
    const int sym = N + Ng;
    const Rational frame_samples = p.Tf * p.Fs;
    auto frame_start = [&](int m) {
        const Rational s = frame_samples * m;
        return static_cast<std::size_t>(std::llround(to_double(s)));
    };
    const double per_frame = to_double(frame_samples);

    SampleStream out;
    out.rate = to_double(p.Fs);
    out.samples.assign(frame_start(frames), cplx{0.0, 0.0});

    const CVec pss = gen_pss(N, Ng);
    const CVec sss_sym = ofdm_time_symbol(gen_sss(N), N, Ng);

    for (int m = 0; m < frames; ++m) {
        if (!opts.occupancy.empty() && !opts.occupancy[static_cast<std::size_t>(m) % opts.occupancy.size()])
            continue;
        const double amp = opts.amplitude.empty() ? 1.0 : opts.amplitude[static_cast<std::size_t>(m) % opts.amplitude.size()];
        const SymbolGrid* g = grids.empty() ? nullptr : &grids[static_cast<std::size_t>(m) % grids.size()];
        const std::size_t nsym = 2 + (g ? g->symbols() : 0);
        if (static_cast<double>(nsym * sym) > per_frame) throw std::invalid_argument("build_frames: layout overflow");
        const std::size_t base = frame_start(m);
        auto put = [&](std::size_t idx, const CVec& s) {
            for (std::size_t j = 0; j < s.size(); ++j) out.samples[base + idx * sym + j] = amp * s[j];
        };
        if (opts.include_pss) put(0, pss);
        if (opts.include_sss) put(1, sss_sym);
        if (g) {
            if (g->N != N) throw std::invalid_argument("build_frames: grid N mismatch");
            for (std::size_t i = 0; i < g->symbols(); ++i) {
                if (g->tags[i] == Modulation::Zero) continue;
                put(2 + i, ofdm_time_symbol(g->values[i], N, Ng));
            }
        }
    }
    return out;
}

void ChannelConfig::validate() const {
    if (!(Fr > 0.0)) throw std::invalid_argument("channel: Fr must be positive");
    if (std::fabs(beta) > 1e-3) throw std::invalid_argument("channel: |beta| > 1e-3");
    if (noise_density < 0.0) throw std::invalid_argument("channel: negative noise density");
    if (prefilter == Prefilter::Fir && !(Fh > 0.0 && Fh < Fr))
        throw std::invalid_argument("channel: prefilter bandwidth must satisfy 0 < Fh < Fr");
}

double noise_density_for_snr(double snr_linear, double Fs) { return 1.0 / (snr_linear * Fs); }

namespace {

struct Band {
    double lo, hi;
};

double filter_half(const ChannelConfig& cfg) {
    return cfg.prefilter == Prefilter::Fir ? 0.25 * (cfg.Fh + cfg.Fr) : 0.5 * cfg.Fr;
}

std::size_t default_count(const SampleStream& x, const ChannelConfig& cfg) {
    const double dur = static_cast<double>(x.size()) / (x.rate * (1.0 - cfg.beta));
    return static_cast<std::size_t>(std::ceil(dur * cfg.Fr));
}

}  // namespace

CVec channel_signal(const SampleStream& x, const ChannelConfig& cfg) {
    const std::size_t first = cfg.first.value_or(0);
    const std::size_t count = cfg.count.value_or(default_count(x, cfg) - std::min(first, default_count(x, cfg)));
    const double in_rate = x.rate * (1.0 - cfg.beta);
    const double f_off = cfg.Fc * (1.0 - cfg.beta) - cfg.Fc_bar;

    const double fh = filter_half(cfg);
    const Band b{std::max(-0.5 * in_rate + f_off, -fh), std::min(0.5 * in_rate + f_off, fh)};
    if (b.hi <= b.lo) return CVec(count, cplx{0.0, 0.0});
    const double fcen = 0.5 * (b.lo + b.hi);
    const double cutoff = 0.5 * (b.hi - b.lo);
    const dsp::SincKernel kernel = cfg.prefilter == Prefilter::Fir
                                       ? dsp::SincKernel::with_transition(cutoff, 0.5 * (cfg.Fr - cfg.Fh), 60.0)
                                       : dsp::SincKernel::interpolator(cutoff);

    // Only the input span that reaches the requested window is modulated.
    const double t_first = static_cast<double>(first) / cfg.Fr;
    const double t_last = static_cast<double>(first + count) / cfg.Fr;
    const double hw = kernel.half_width_s();
    const auto k0 = static_cast<std::size_t>(std::max(0.0, std::floor((t_first - hw) * in_rate)));
    const auto k1 = static_cast<std::size_t>(
        std::min(static_cast<double>(x.size()), std::ceil((t_last + hw) * in_rate) + 1.0));
    if (k1 <= k0) return CVec(count, cplx{0.0, 0.0});

    CVec z(x.samples.begin() + static_cast<std::ptrdiff_t>(k0), x.samples.begin() + static_cast<std::ptrdiff_t>(k1));
    const double step = f_off / in_rate;
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double cyc = std::fmod(step * static_cast<double>(k0 + i), 1.0);
        z[i] *= std::polar(1.0, 2.0 * kPi * cyc);
    }
    return dsp::interpolate(z, in_rate, static_cast<double>(k0) / in_rate, cfg.Fr, t_first, count, kernel, fcen);
}

CVec channel_noise(const ChannelConfig& cfg, std::size_t count) {
    CVec w(count, cplx{0.0, 0.0});
    if (cfg.noise_density <= 0.0 || count == 0) return w;
    const std::size_t first = cfg.first.value_or(0);
    const dsp::SincKernel* kernel = nullptr;
    std::optional<dsp::SincKernel> k;
    std::size_t pad = 0;
    if (cfg.prefilter == Prefilter::Fir) {
        k.emplace(dsp::SincKernel::with_transition(filter_half(cfg), 0.5 * (cfg.Fr - cfg.Fh), 60.0));
        kernel = &*k;
        pad = static_cast<std::size_t>(std::ceil(kernel->half_width_s() * cfg.Fr)) + 1;
    }
    std::mt19937_64 rng(mix_seed(cfg.noise_seed, first));
    std::normal_distribution<double> nd(0.0, std::sqrt(0.5 * cfg.noise_density * cfg.Fr));
    CVec raw(count + 2 * pad);
    for (auto& v : raw) {
        const double re = nd(rng);
        v = {re, nd(rng)};
    }
    if (!kernel) return raw;
    return dsp::interpolate(raw, cfg.Fr, -static_cast<double>(pad) / cfg.Fr, cfg.Fr, 0.0, count, *kernel);
}

SampleStream apply_channel(const SampleStream& x, const ChannelConfig& cfg) {
    cfg.validate();
    SampleStream y;
    y.rate = cfg.Fr;
    y.center = cfg.Fc_bar;
    y.samples = channel_signal(x, cfg);
    const std::size_t first = cfg.first.value_or(0);
    y.epoch = x.epoch + cfg.tau0 + static_cast<double>(first) / cfg.Fr;
    y.bandwidth = cfg.prefilter == Prefilter::Fir ? cfg.Fh : cfg.Fr;
    if (cfg.noise_density > 0.0) {
        const CVec w = channel_noise(cfg, y.samples.size());
        for (std::size_t i = 0; i < w.size(); ++i) y.samples[i] += w[i];
        y.snr_hint = 1.0 / (cfg.noise_density * x.rate);
    }
    return y;
}

void Scenario::resolve() {
    params.validate();
    const double Fs = to_double(params.Fs);
    if (center <= 0.0) center = fc;
    if (fh <= 0.0) fh = rate > Fs ? Fs : 0.96 * rate;
    if (frames <= 0) frames = static_cast<int>(std::ceil(duration / to_double(params.Tf))) + 1;
    if (!occupancy.empty() && occupancy.size() != static_cast<std::size_t>(frames))
        throw std::invalid_argument("scenario: occupancy length must equal frames");
}

SampleStream render_scenario(Scenario sc) {
    sc.resolve();
    PayloadOptions popts;
    if (sc.pilots) popts.pilots = PilotRedundancy{};
    std::vector<SymbolGrid> grids;
    const int G = std::min(sc.frames, 8);
    for (int g = 0; g < G; ++g)
        grids.push_back(standard_frame_grid(sc.params, {sc.modulation}, sc.seed * 1000 + static_cast<std::uint64_t>(g), popts));
    FrameOptions fopts;
    fopts.occupancy = sc.occupancy;
    const SampleStream x = build_frames(grids, sc.params, sc.frames, fopts);

    ChannelConfig ch;
    ch.beta = sc.beta;
    ch.tau0 = sc.tau0;
    ch.Fc = sc.fc;
    ch.Fc_bar = sc.center;
    ch.Fr = sc.rate;
    ch.Fh = sc.fh;
    ch.prefilter = sc.prefilter;
    ch.noise_density = noise_density_for_snr(std::pow(10.0, sc.snr_db / 10.0), to_double(sc.params.Fs));
    ch.noise_seed = sc.seed;
    ch.count = static_cast<std::size_t>(std::llround(sc.duration * sc.rate));
    ch.validate();
    SampleStream y = apply_channel(x, ch);
    y.center = sc.center;
    return y;
}

}  // namespace ofdmid::synth
