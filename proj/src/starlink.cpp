#include "ofdmid/starlink.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ofdmid/dsp.hpp"
#include "ofdmid/synth.hpp"

namespace ofdmid::starlink {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

const CVec& pss_replica() {
    static const CVec r = synth::gen_pss(1024, 32);
    return r;
}

const CVec& sss_replica() {
    static const CVec r = synth::ofdm_time_symbol(synth::gen_sss(1024), 1024, 32);
    return r;
}

CVec render_replica(const CVec& tx, double Fs, const SampleStream& like, double beta, const sync::DemodContext& ctx,
                    double delay, std::size_t count) {
    const double in_rate = Fs * (1.0 - beta);
    const double f_shift = ctx.center_offset - beta * (ctx.Fc_bar + ctx.center_offset);
    const double half_bw = 0.5 * std::min(like.usable_bandwidth(), like.rate);
    const double lo = std::max(-0.5 * in_rate + f_shift, -half_bw);
    const double hi = std::min(0.5 * in_rate + f_shift, half_bw);
    if (hi <= lo) return CVec(count, cplx{0.0, 0.0});
    CVec z(tx);
    const double step = f_shift / in_rate;
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] *= std::polar(1.0, kTwoPi * std::fmod(step * static_cast<double>(i), 1.0));
    const auto kernel = dsp::SincKernel::interpolator(0.5 * (hi - lo));
    return dsp::interpolate(z, in_rate, delay / like.rate, like.rate, 0.0, count, kernel, 0.5 * (hi + lo));
}

CorrelationSeries correlate_pss(const SampleStream& y, double beta, const sync::DemodContext& ctx, std::size_t stride) {
    if (stride == 0) stride = 1;
    const CVec& pss = pss_replica();
    const auto Lr = static_cast<std::size_t>(std::ceil(static_cast<double>(pss.size()) * y.rate / kFs / (1.0 - beta)));
    if (y.size() < Lr) throw StageError("correlate_pss", "stream shorter than replica");
    const CVec r = render_replica(pss, kFs, y, beta, ctx, 0.0, Lr);

    const std::size_t M = dsp::next_pow2(y.size() + Lr);
    CVec Y(M, cplx{0.0, 0.0}), R(M, cplx{0.0, 0.0});
    std::copy(y.samples.begin(), y.samples.end(), Y.begin());
    std::copy(r.begin(), r.end(), R.begin());
    dsp::fft(Y);
    dsp::fft(R);
    for (std::size_t i = 0; i < M; ++i) Y[i] *= std::conj(R[i]);
    R.clear();
    R.shrink_to_fit();
    dsp::fft(Y, true);

    const double P = dsp::mean_power(y.samples);
    double rr = 0.0;
    for (const auto& v : r) rr += std::norm(v);
    const double norm = 1.0 / (static_cast<double>(M) * std::sqrt(rr * static_cast<double>(Lr) * std::max(P, 1e-300)));

    CorrelationSeries out;
    out.rate = y.rate;
    out.stride = stride;
    out.replica_len = Lr;
    for (std::size_t n = 0; n + Lr <= y.size(); n += stride) out.mag.push_back(std::abs(Y[n]) * norm);
    return out;
}

std::vector<Peak> find_peaks(const CorrelationSeries& c, double threshold, double min_separation_s) {
    const auto sep = static_cast<long>(std::max(1.0, min_separation_s * c.rate / static_cast<double>(c.stride)));
    std::vector<long> cand;
    const long n = static_cast<long>(c.mag.size());
    for (long i = 0; i < n; ++i) {
        const double v = c.mag[i];
        if (v < threshold) continue;
        if (i > 0 && c.mag[i - 1] > v) continue;
        if (i + 1 < n && c.mag[i + 1] >= v) continue;
        cand.push_back(i);
    }
    std::stable_sort(cand.begin(), cand.end(), [&](long a, long b) { return c.mag[a] > c.mag[b]; });
    std::vector<long> kept;
    for (long i : cand) {
        bool ok = true;
        for (long k : kept)
            if (std::labs(k - i) < sep) {
                ok = false;
                break;
            }
        if (ok) kept.push_back(i);
    }
    std::sort(kept.begin(), kept.end());
    std::vector<Peak> peaks;
    for (long i : kept) {
        double d = 0.0;
        if (i > 0 && i + 1 < n) {
            const double a = c.mag[i - 1], b = c.mag[i], e = c.mag[i + 1];
            const double den = a - 2.0 * b + e;
            if (den < 0.0) d = 0.5 * (a - e) / den;
        }
        peaks.push_back({i, (static_cast<double>(i) + d) * static_cast<double>(c.stride), c.mag[i]});
    }
    return peaks;
}

CombCheck comb_check(const CorrelationSeries& c, const Peak& p, double floor, double factor) {
    CombCheck out;
    out.floor = floor;
    const double block = 128.0 * c.rate / kFs / static_cast<double>(c.stride);
    const long n = static_cast<long>(c.mag.size());
    for (int j = -7; j <= 7; ++j) {
        if (j == 0) continue;
        const auto centre = static_cast<long>(std::lround(static_cast<double>(p.index) + j * block));
        double v = 0.0;
        for (long i = centre - 1; i <= centre + 1; ++i)
            if (i >= 0 && i < n) v = std::max(v, c.mag[i]);
        out.tine_values.push_back(v);
        if (v > factor * floor) ++out.tines_above;
    }
    return out;
}

CoherentObservation coherent_observable(const SampleStream& y, long n_guess, double beta, const sync::DemodContext& ctx,
                                        const CoherentConfig& cfg) {
    CVec tx = pss_replica();
    if (cfg.use_sss) tx.insert(tx.end(), sss_replica().begin(), sss_replica().end());
    const auto Lr = static_cast<std::size_t>(std::ceil(static_cast<double>(tx.size()) * y.rate / kFs / (1.0 - beta)));
    const long len = static_cast<long>(y.size());

    auto corr = [&](const CVec& r, long n) {
        cplx acc{0.0, 0.0};
        for (std::size_t i = 0; i < r.size(); ++i) {
            const long k = n + static_cast<long>(i);
            if (k < 0 || k >= len) continue;
            acc += y.samples[static_cast<std::size_t>(k)] * std::conj(r[i]);
        }
        return acc;
    };

    const CVec r0 = render_replica(tx, kFs, y, beta, ctx, 0.0, Lr);
    long best_n = n_guess;
    double best = -1.0;
    for (long n = n_guess - cfg.search; n <= n_guess + cfg.search; ++n) {
        if (n < 0 || n + static_cast<long>(Lr) > len) continue;
        const double v = std::abs(corr(r0, n));
        if (v > best) {
            best = v;
            best_n = n;
        }
    }
    if (best < 0.0) throw StageError("coherent_observable", "search window outside the capture");

    // Fractionally delayed replicas on a 1/8-sample grid, then a parabola.
    constexpr int kSteps = 8;
    std::vector<double> mags;
    std::vector<cplx> vals;
    std::vector<double> energy;
    for (int s = -kSteps; s <= kSteps; ++s) {
        const double d = static_cast<double>(s) / kSteps;
        const CVec r = render_replica(tx, kFs, y, beta, ctx, d, Lr + 2);
        const cplx c = corr(r, best_n);
        double e = 0.0;
        for (const auto& v : r) e += std::norm(v);
        vals.push_back(c);
        mags.push_back(std::abs(c));
        energy.push_back(e);
    }
    const auto imax = static_cast<std::size_t>(std::max_element(mags.begin(), mags.end()) - mags.begin());
    double frac = static_cast<double>(static_cast<int>(imax) - kSteps) / kSteps;
    if (imax > 0 && imax + 1 < mags.size()) {
        const double a = mags[imax - 1], b = mags[imax], e = mags[imax + 1];
        const double den = a - 2.0 * b + e;
        if (den < 0.0) frac += 0.5 * (a - e) / den / kSteps;
    }

    const auto gap = static_cast<long>(std::floor(1800.0 * y.rate / kFs));
    const long guard = static_cast<long>(std::ceil(16.0 * y.rate / kFs));
    const long g1 = best_n - guard, g0 = std::max(0L, best_n - gap);
    if (g1 - g0 < 32) throw StageError("coherent_observable", "no noise reference before the frame");
    double sigma2 = 0.0;
    for (long k = g0; k < g1; ++k) sigma2 += std::norm(y.samples[static_cast<std::size_t>(k)]);
    sigma2 /= static_cast<double>(g1 - g0);

    CoherentObservation obs;
    obs.sample = static_cast<double>(best_n) + frac;
    obs.time = y.epoch + obs.sample / y.rate;
    obs.beta = beta;
    obs.peak = mags[imax];
    const double bw_frac = std::min(1.0, y.usable_bandwidth() / y.rate);
    obs.snr = mags[imax] * mags[imax] * bw_frac / (std::max(sigma2, 1e-300) * energy[imax]);
    if (obs.snr < cfg.threshold)
        throw StageError("coherent_observable", "peak below detection threshold (coherent SNR " +
                                                    std::to_string(obs.snr) + ")");
    return obs;
}

std::string series_csv(const CorrelationSeries& c) {
    std::ostringstream o;
    o.precision(10);
    o << "sample,magnitude\n";
    for (std::size_t i = 0; i < c.mag.size(); ++i) o << i * c.stride << "," << c.mag[i] << "\n";
    return o.str();
}

}  // namespace ofdmid::starlink
