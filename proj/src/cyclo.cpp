#include "ofdmid/cyclo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "ofdmid/dsp.hpp"

namespace ofdmid::cyclo {

namespace {
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}

void CyclicCorrConfig::validate() const {
    if (Np < 1) throw std::invalid_argument("Np must be >= 1");
    if (!(p > 0.0 && p < 1.0 / 3.0)) throw std::invalid_argument("p must lie in (0, 1/3)");
    if (!(nu > 0.0)) throw std::invalid_argument("nu must be positive");
}

int CandidateSets::f_r_index(long tau) const {
    for (std::size_t i = 0; i < S.size(); ++i)
        if (tau >= S_rb[i].first && tau <= S_rb[i].second) return static_cast<int>(i);
    return -1;
}

int CandidateSets::f_r(long tau) const {
    const int i = f_r_index(tau);
    if (i < 0) throw std::out_of_range("tau outside S_r");
    return S[static_cast<std::size_t>(i)];
}

CandidateSets build_candidates(double Fr, double Fs_bar, double p, std::vector<int> S) {
    CandidateSets c;
    c.S = std::move(S);
    const double eta = Fr / Fs_bar;
    for (int b : c.S) {
        const long lo = static_cast<long>(std::ceil(b * eta * (1.0 - p)));
        const long hi = static_cast<long>(std::floor(b * eta * (1.0 + p)));
        c.S_rb.emplace_back(lo, hi);
        for (long t = lo; t <= hi; ++t) c.S_r.push_back(t);
    }
    std::sort(c.S_r.begin(), c.S_r.end());
    return c;
}

cplx cyclic_autocorr(std::span<const cplx> y, double alpha, long tau, std::size_t M) {
    if (tau < 0) throw std::invalid_argument("cyclic_autocorr: negative lag");
    if (M == 0 || M + static_cast<std::size_t>(tau) > y.size())
        throw std::invalid_argument("cyclic_autocorr: insufficient samples");
    cplx acc{0.0, 0.0};
    if (alpha == 0.0) {
        for (std::size_t n = 0; n < M; ++n) acc += y[n + tau] * std::conj(y[n]);
    } else {
        // Rotating phasor, re-anchored every 1024 samples.
        const cplx step = std::polar(1.0, -kTwoPi * alpha);
        cplx ph{1.0, 0.0};
        for (std::size_t n = 0; n < M; ++n) {
            if ((n & 1023) == 0) ph = std::polar(1.0, -kTwoPi * std::fmod(alpha * static_cast<double>(n), 1.0));
            acc += y[n + tau] * std::conj(y[n]) * ph;
            ph *= step;
        }
    }
    return acc / static_cast<double>(M);
}

cplx cyclic_autocorr(const SampleStream& y, double alpha, long tau, std::size_t M) {
    return cyclic_autocorr(std::span<const cplx>(y.samples), alpha, tau, M);
}

CVec lag_autocorr(std::span<const cplx> y, std::size_t max_tau, std::size_t M) {
    if (M == 0 || M + max_tau > y.size()) throw std::invalid_argument("lag_autocorr: insufficient samples");
    const std::size_t len = M + max_tau;
    const std::size_t L = dsp::next_pow2(len);
    CVec a(L, cplx{0.0, 0.0}), b(L, cplx{0.0, 0.0});
    std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(M), a.begin());
    std::copy(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(len), b.begin());
    dsp::fft(a);
    dsp::fft(b);
    for (std::size_t i = 0; i < L; ++i) b[i] *= std::conj(a[i]);
    a.clear();
    a.shrink_to_fit();
    dsp::fft(b, true);
    CVec out(max_tau + 1);
    const double s = 1.0 / (static_cast<double>(L) * static_cast<double>(M));
    for (std::size_t t = 0; t <= max_tau; ++t) out[t] = b[t] * s;
    return out;
}

NEstimate estimate_N(const SampleStream& y, double Fs_bar, const CyclicCorrConfig& cfg) {
    cfg.validate();
    const CandidateSets c = build_candidates(y.rate, Fs_bar, cfg.p);
    const long max_tau = c.S_r.back();
    if (static_cast<std::size_t>(max_tau) >= y.size())
        throw StageError("estimate_N", "capture shorter than the largest candidate lag");
    const std::size_t M = cfg.M ? cfg.M : y.size() - static_cast<std::size_t>(max_tau);
    if (M + static_cast<std::size_t>(max_tau) > y.size()) throw StageError("estimate_N", "M exceeds capture");
    const CVec R = lag_autocorr(y.samples, static_cast<std::size_t>(max_tau), M);

    NEstimate est;
    for (long t : c.S_r) est.trace.emplace_back(t, std::abs(R[static_cast<std::size_t>(t)]));

    std::vector<char> alive(c.S.size(), 1);
    for (std::size_t round = 0; round < c.S.size(); ++round) {
        long best_tau = -1;
        double best = -1.0;
        for (std::size_t i = 0; i < c.S.size(); ++i) {
            if (!alive[i]) continue;
            for (long t = c.S_rb[i].first; t <= c.S_rb[i].second; ++t) {
                const double v = std::abs(R[static_cast<std::size_t>(t)]);
                if (v > best || (v == best && t < best_tau)) {
                    best = v;
                    best_tau = t;
                }
            }
        }
        if (best_tau < 0) break;
        const int bi = c.f_r_index(best_tau);
        double lo = best;
        for (long t = c.S_rb[bi].first; t <= c.S_rb[bi].second; ++t)
            lo = std::min(lo, std::abs(R[static_cast<std::size_t>(t)]));
        const double ratio = lo > 0.0 ? best / lo : INFINITY;
        const bool ok = ratio > cfg.nu;
        est.attempts.push_back({c.S[bi], best_tau, ratio, ok});
        if (ok) {
            est.N = c.S[bi];
            est.Nr = best_tau;
            est.ratio = ratio;
            return est;
        }
        alive[bi] = 0;
    }
    throw StageError("estimate_N", "no-cyclic-peak: every candidate failed validation");
}

double estimate_Fs(int N, long Nr, double Fr) {
    if (Nr <= 0) throw std::invalid_argument("estimate_Fs: Nr must be positive");
    return std::round(N * Fr / static_cast<double>(Nr) / 1e6) * 1e6;
}

SampleStream resample(const SampleStream& y, double to_rate, double new_bandwidth) {
    if (!(to_rate > 0.0)) throw std::invalid_argument("resample: rate must be positive");
    SampleStream out;
    out.rate = to_rate;
    out.center = y.center;
    out.epoch = y.epoch;
    out.snr_hint = y.snr_hint;
    const double bw_in = y.usable_bandwidth();
    double bw = std::min(bw_in, to_rate);
    if (new_bandwidth > 0.0) bw = std::min(bw, new_bandwidth);
    out.bandwidth = bw >= to_rate ? 0.0 : bw;
    if (to_rate == y.rate && (new_bandwidth <= 0.0 || new_bandwidth >= bw_in)) {
        out.samples = y.samples;
        out.bandwidth = y.bandwidth;
        return out;
    }
    const double cutoff = 0.5 * std::min({y.rate, to_rate, std::max(bw_in, bw)});
    const auto count = static_cast<std::size_t>(std::floor(static_cast<double>(y.size()) * to_rate / y.rate));
    out.samples = dsp::interpolate(y.samples, y.rate, 0.0, to_rate, 0.0, count, dsp::SincKernel::interpolator(cutoff));
    return out;
}

std::vector<int> ng_candidates(int N, double Fs_hat, double Td) {
    const auto qlo = static_cast<int>(std::ceil(Td * Fs_hat / 4.0 - 1e-9));
    const auto qhi = static_cast<int>(std::floor(Td * Fs_hat + 1e-9));
    std::vector<int> xi;
    for (int q = std::max(qlo, 1); q <= qhi; ++q)
        if (2 * q < N) xi.push_back(N + 2 * q);
    return xi;
}

NgEstimate estimate_Ng(const SampleStream& y, int N, const CyclicCorrConfig& cfg, double Td) {
    cfg.validate();
    const std::vector<int> xi = ng_candidates(N, y.rate, Td);
    if (xi.empty()) throw StageError("estimate_Ng", "empty guard candidate set");
    if (y.size() <= static_cast<std::size_t>(N) + 1) throw StageError("estimate_Ng", "insufficient samples");
    const std::size_t M = cfg.M ? std::min(cfg.M, y.size() - N) : y.size() - N;

    CVec r(M);
    for (std::size_t n = 0; n < M; ++n) r[n] = y.samples[n + N] * std::conj(y.samples[n]);

    NgEstimate est;
    est.xi = xi;
    std::vector<double> cyc_part(xi.size());
    for (std::size_t c = 0; c < xi.size(); ++c) {
        // e^{-j2 pi n p / xi} has period xi in n: fold first, then a short DFT.
        const int X = xi[c];
        CVec fold(static_cast<std::size_t>(X), cplx{0.0, 0.0});
        for (std::size_t n = 0; n < M; ++n) fold[n % X] += r[n];
        double total = 0.0, cyc = 0.0;
        for (int p = -cfg.Np; p <= cfg.Np; ++p) {
            cplx acc{0.0, 0.0};
            for (int j = 0; j < X; ++j) {
                const long ph = (static_cast<long>(p) * j) % X;
                acc += fold[static_cast<std::size_t>(j)] * std::polar(1.0, -kTwoPi * static_cast<double>(ph) / X);
            }
            const double mag = std::abs(acc) / static_cast<double>(M);
            total += mag;
            if (p != 0) cyc += mag;
        }
        est.score.push_back(total);
        cyc_part[c] = cyc;
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < xi.size(); ++c)
        if (est.score[c] > est.score[best]) best = c;
    double second = 0.0;
    for (std::size_t c = 0; c < xi.size(); ++c)
        if (c != best) second = std::max(second, cyc_part[c]);
    est.margin = second > 0.0 ? cyc_part[best] / second : INFINITY;
    est.Ng = xi[best] - N;

    if (cfg.harmonic_step > 0.0) {
        const double X = xi[best];
        for (double a = 0.0; a <= cfg.Np + 0.5 + 1e-12; a += cfg.harmonic_step) {
            const double alpha = a / X;
            cplx acc{0.0, 0.0};
            const cplx step = std::polar(1.0, -kTwoPi * alpha);
            cplx ph{1.0, 0.0};
            for (std::size_t n = 0; n < M; ++n) {
                if ((n & 1023) == 0) ph = std::polar(1.0, -kTwoPi * std::fmod(alpha * static_cast<double>(n), 1.0));
                acc += r[n] * ph;
                ph *= step;
            }
            est.harmonic_trace.emplace_back(a, std::abs(acc) / static_cast<double>(M));
        }
    }
    if (est.margin < 1.1)
        throw StageError("estimate_Ng", "ambiguous-peak: best/second cyclic score ratio " + std::to_string(est.margin));
    return est;
}

TfEstimate estimate_Tf(const SampleStream& y, int N, int Ng, double Tm, std::size_t M, TfEstimate* diag) {
    const auto tau_max = static_cast<std::size_t>(std::floor(y.rate * Tm));
    const auto lo = static_cast<std::size_t>(N + Ng) + 1;
    if (tau_max <= lo) throw StageError("estimate_Tf", "Tm too small for the frame-lag search");
    if (y.size() <= tau_max + 1) throw StageError("estimate_Tf", "no-long-lag-peak: capture shorter than Tm");
    const std::size_t m = M ? std::min(M, y.size() - tau_max) : y.size() - tau_max;
    const CVec R = lag_autocorr(y.samples, tau_max, m);

    TfEstimate est;
    est.lag_lo = static_cast<long>(lo);
    est.trace.reserve(tau_max - lo + 1);
    std::size_t arg = lo;
    for (std::size_t t = lo; t <= tau_max; ++t) {
        const double v = std::abs(R[t]);
        est.trace.push_back(v);
        if (v > std::abs(R[arg])) arg = t;
    }
    std::vector<double> sorted = est.trace;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double n = static_cast<double>(est.trace.size());
    // Rayleigh max/median grows like sqrt(ln n / ln 2); demand a margin above that.
    est.threshold = 1.25 * std::sqrt(std::log(n) / std::log(2.0));
    est.peak_to_median = median > 0.0 ? std::abs(R[arg]) / median : 0.0;
    est.tau_star = static_cast<long>(arg);
    if (diag) *diag = est;
    if (!(est.peak_to_median > est.threshold))
        throw StageError("estimate_Tf", "no-long-lag-peak: peak/median " + std::to_string(est.peak_to_median) +
                                            " below " + std::to_string(est.threshold));
    est.frame_rate = std::lround(y.rate / static_cast<double>(arg));
    if (est.frame_rate <= 0) throw StageError("estimate_Tf", "frame lag exceeds one second");
    est.Tf = Rational(1, est.frame_rate);
    return est;
}

std::string trace_csv(const std::vector<std::pair<long, double>>& t, const std::string& xname, const std::string& yname) {
    std::ostringstream o;
    o.precision(12);
    o << xname << "," << yname << "\n";
    for (const auto& [x, v] : t) o << x << "," << v << "\n";
    return o.str();
}

}  // namespace ofdmid::cyclo
