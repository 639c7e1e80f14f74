#include "ofdmid/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>

namespace ofdmid::dsp {

namespace {

struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
};

std::mutex& plan_mutex() {
    static std::mutex m;
    return m;
}

// Plans are created on scratch buffers and executed with the new-array API,
// so the caller's buffer only needs to be the same length.
PlanPair& plans_for(std::size_t n) {
    static std::map<std::size_t, PlanPair> cache;
    std::lock_guard<std::mutex> lock(plan_mutex());
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    auto* buf = fftw_alloc_complex(n);
    PlanPair p;
    const int len = static_cast<int>(n);
    const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
    p.fwd = fftw_plan_dft_1d(len, buf, buf, FFTW_FORWARD, flags);
    p.inv = fftw_plan_dft_1d(len, buf, buf, FFTW_BACKWARD, flags);
    fftw_free(buf);
    return cache.emplace(n, p).first->second;
}

}  // namespace

void fft(std::span<cplx> x, bool inverse) {
    if (x.empty()) return;
    auto& p = plans_for(x.size());
    auto* data = reinterpret_cast<fftw_complex*>(x.data());
    fftw_execute_dft(inverse ? p.inv : p.fwd, data, data);
}

CVec dft_unitary(std::span<const cplx> x) {
    CVec out(x.begin(), x.end());
    fft(out, false);
    const double s = 1.0 / std::sqrt(static_cast<double>(out.size()));
    for (auto& v : out) v *= s;
    return out;
}

CVec idft_unitary(std::span<const cplx> X) {
    CVec out(X.begin(), X.end());
    fft(out, true);
    const double s = 1.0 / std::sqrt(static_cast<double>(out.size()));
    for (auto& v : out) v *= s;
    return out;
}

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

double bessel_i0(double x) { return std::cyl_bessel_i(0.0, x); }

double kaiser_beta_for_atten(double a) {
    if (a > 50.0) return 0.1102 * (a - 8.7);
    if (a >= 21.0) return 0.5842 * std::pow(a - 21.0, 0.4) + 0.07886 * (a - 21.0);
    return 0.0;
}

SincKernel::SincKernel(double cutoff_hz, double half_zc, double kaiser_beta)
    : fc_(cutoff_hz), half_zc_(half_zc) {
    if (!(cutoff_hz > 0.0) || !(half_zc > 0.0))
        throw std::invalid_argument("SincKernel: cutoff and width must be positive");
    const std::size_t n = static_cast<std::size_t>(std::ceil(half_zc * kOversample)) + 2;
    table_.resize(n);
    const double norm = bessel_i0(kaiser_beta);
    for (std::size_t i = 0; i < n; ++i) {
        const double u = static_cast<double>(i) / kOversample;
        if (u >= half_zc) {
            table_[i] = 0.0;
            continue;
        }
        const double r = u / half_zc;
        const double w = bessel_i0(kaiser_beta * std::sqrt(1.0 - r * r)) / norm;
        const double s = (i == 0) ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
        table_[i] = s * w;
    }
}

SincKernel SincKernel::interpolator(double cutoff_hz) { return SincKernel(cutoff_hz, 64.0, 12.0); }

SincKernel SincKernel::compact(double cutoff_hz) { return SincKernel(cutoff_hz, 32.0, 10.0); }

SincKernel SincKernel::design(double pass_edge_hz, double stop_edge_hz, double atten_db) {
    if (!(stop_edge_hz > pass_edge_hz) || !(pass_edge_hz > 0.0))
        throw std::invalid_argument("SincKernel::design: need 0 < pass < stop");
    const double fc = 0.5 * (pass_edge_hz + stop_edge_hz);
    const double df = stop_edge_hz - pass_edge_hz;
    const double seconds = (atten_db - 7.95) / (14.36 * df);
    const double half_zc = std::max(4.0, fc * seconds);
    return SincKernel(fc, half_zc, kaiser_beta_for_atten(atten_db));
}

SincKernel SincKernel::with_transition(double cutoff_hz, double transition_hz, double atten_db) {
    if (!(transition_hz > 0.0)) throw std::invalid_argument("SincKernel: transition must be positive");
    const double seconds = (atten_db - 7.95) / (14.36 * transition_hz);
    return SincKernel(cutoff_hz, std::max(4.0, cutoff_hz * seconds), kaiser_beta_for_atten(atten_db));
}

const SincKernel& compact_kernel(double cutoff_hz) {
    static std::mutex m;
    static std::map<double, std::unique_ptr<SincKernel>> cache;
    std::lock_guard<std::mutex> lock(m);
    auto& slot = cache[cutoff_hz];
    if (!slot) slot = std::make_unique<SincKernel>(SincKernel::compact(cutoff_hz));
    return *slot;
}

double SincKernel::at_u(double u) const {
    u = std::fabs(u);
    if (u >= half_zc_) return 0.0;
    const double pos = u * kOversample;
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return table_[i] + f * (table_[i + 1] - table_[i]);
}

CVec interpolate(std::span<const cplx> x, double in_rate, double in_t0, double out_rate,
                 double out_t0, std::size_t count, const SincKernel& kernel, double fcen) {
    CVec out(count);
    const auto n = static_cast<std::ptrdiff_t>(x.size());
    if (n == 0) return out;

    std::span<const cplx> src = x;
    CVec shifted;
    if (fcen != 0.0) {
        // x_k e^{-j2 pi fcen tau_k}; the output gets e^{+j2 pi fcen t} back.
        shifted.resize(x.size());
        const double step = fcen / in_rate;
        for (std::ptrdiff_t k = 0; k < n; ++k) {
            const double cyc = std::fmod(step * static_cast<double>(k) + fcen * in_t0, 1.0);
            shifted[k] = x[k] * std::polar(1.0, -2.0 * std::numbers::pi * cyc);
        }
        src = shifted;
    }

    // Nonzero counts let silent stretches (empty frames) skip the kernel.
    std::vector<std::uint32_t> live(x.size() + 1, 0);
    for (std::ptrdiff_t k = 0; k < n; ++k) live[k + 1] = live[k] + (x[k] != cplx{0.0, 0.0});

    const double zc_per_sample = 2.0 * kernel.cutoff() / in_rate;
    const double half_samples = kernel.half_zc() / zc_per_sample;
    const double pos0 = (out_t0 - in_t0) * in_rate;
    const double pos_step = in_rate / out_rate;
    for (std::size_t i = 0; i < count; ++i) {
        const double pos = pos0 + static_cast<double>(i) * pos_step;
        auto k0 = static_cast<std::ptrdiff_t>(std::ceil(pos - half_samples));
        auto k1 = static_cast<std::ptrdiff_t>(std::floor(pos + half_samples));
        if (k0 < 0) k0 = 0;
        if (k1 > n - 1) k1 = n - 1;
        if (k1 < k0 || live[k1 + 1] == live[k0]) continue;
        cplx acc{0.0, 0.0};
        for (std::ptrdiff_t k = k0; k <= k1; ++k)
            acc += src[k] * kernel.at_u((pos - static_cast<double>(k)) * zc_per_sample);
        acc *= zc_per_sample;
        if (fcen != 0.0) {
            const double t = out_t0 + static_cast<double>(i) / out_rate;
            const double cyc = std::fmod(fcen * t, 1.0);
            acc *= std::polar(1.0, 2.0 * std::numbers::pi * cyc);
        }
        out[i] = acc;
    }
    return out;
}

double mean_power(std::span<const cplx> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (const auto& v : x) s += std::norm(v);
    return s / static_cast<double>(x.size());
}

double rms(std::span<const cplx> x) { return std::sqrt(mean_power(x)); }

}  // namespace ofdmid::dsp
